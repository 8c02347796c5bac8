import pytest

from twloc.cli import main
from twloc.harness import io as hio
from twloc.harness.config import load_scenario
from twloc.locator import run_localization
from twloc.simkit import synthesize_measurements

SCENARIO = """
[line]
length_m = 35.4e3
a_over_l = 0.5
x_over_l = 0.3
model = overhead

[source]
kind = pd

[sampling]
duration = 1e-3
"""

MATRIX = """
[matrix]
lines = c
cases = overhead:pd
location_factors = 0.4
"""


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "scenario.ini"
    cfg.write_text(SCENARIO)
    assert main(["simulate", str(cfg), "-o", str(root / "ms")]) == 0
    return root


def test_simulate_writes_files(sim_dir):
    names = sorted(p.name for p in (sim_dir / "ms").iterdir())
    assert names == ["M1.bin", "M2.bin", "M3.bin", "measurement.json"]


def test_locate_matches_in_memory_pipeline(sim_dir, tmp_path, capsys):
    assert main(["locate", str(sim_dir / "ms"), "-o", str(tmp_path / "cli.csv")]) == 0
    assert capsys.readouterr().out.startswith("x/l = 0.3000")
    cfg, _ = load_scenario(SCENARIO)
    report = run_localization(synthesize_measurements(cfg))
    hio.write_report_csv(report, tmp_path / "mem.csv")
    assert (tmp_path / "cli.csv").read_bytes() == (tmp_path / "mem.csv").read_bytes()


def test_locate_bare_files(sim_dir, capsys):
    files = [str(sim_dir / "ms" / f"M{i}.bin") for i in (1, 2, 3)]
    assert main(["locate", *files, "--a-over-l", "0.5"]) == 0
    assert main(["locate", *files]) == 2


def test_characterize(sim_dir, capsys):
    assert main(["characterize", str(sim_dir / "ms")]) == 0
    out = capsys.readouterr().out
    assert "alpha*l" in out and "x/l =" in out


def test_baseline(sim_dir, capsys):
    assert main(["baseline", str(sim_dir / "ms"), "--velocity", "2.95e8"]) == 0
    assert "baseline x =" in capsys.readouterr().out


def test_method_error_exit(sim_dir, capsys):
    assert main(["locate", str(sim_dir / "ms"), "--quorum", "1000"]) == 1
    assert "step V" in capsys.readouterr().err


def test_usage_errors(sim_dir, tmp_path, capsys):
    assert main([]) == 2
    assert main(["locate", str(sim_dir / "ms" / "M1.bin")]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text(SCENARIO.replace("x_over_l = 0.3", "x_over_l = 2"))
    assert main(["simulate", str(bad), "-o", str(tmp_path / "o")]) == 2
    assert "line.x_over_l" in capsys.readouterr().err


def test_io_errors(tmp_path):
    assert main(["simulate", str(tmp_path / "nope.ini"), "-o", str(tmp_path / "o")]) == 3
    assert main(["locate", str(tmp_path / "nope.bin")]) == 3
    assert main(["experiment", "-o", str(tmp_path / "missing" / "r.csv")]) == 3


def test_experiment_and_plot(tmp_path, capsys):
    cfg = tmp_path / "matrix.ini"
    cfg.write_text(MATRIX)
    out = tmp_path / "results.csv"
    assert main(["experiment", str(cfg), "-o", str(out)]) == 0
    assert "1 scenarios, 0 failed" in capsys.readouterr().out
    assert main(["plot", str(out), "-o", str(tmp_path / "plots")]) == 0
    assert (tmp_path / "plots" / "error_distribution.svg").exists()


def test_plot_measurement_dir(sim_dir, tmp_path):
    assert main(["plot", str(sim_dir / "ms"), "-o", str(tmp_path / "p")]) == 0
    assert len(list((tmp_path / "p").glob("*.svg"))) == 7


def test_plot_empty_results(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("scenario_id,status\n")
    assert main(["plot", str(empty), "-o", str(tmp_path / "p")]) == 1
    assert not (tmp_path / "p").exists()

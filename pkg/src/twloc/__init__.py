"""Three-terminal traveling-wave event localization and line characterization."""

from .cwt import central_frequencies, cwt_morlet, detect_first_arrival, scale_maxima
from .errors import (
    AmbiguousSideError,
    ConfigError,
    InsufficientDataError,
    MethodError,
    ParameterError,
    TwlocError,
    WindowError,
)
from .locator import AnalysisConfig, LocalizationReport, Side, run_localization
from .model import LineGeometry, PropagationModel, SourceParams, Waveform, preset
from .simkit import MeasurementSet, ScenarioConfig, synthesize_measurements

__version__ = "0.1.0"

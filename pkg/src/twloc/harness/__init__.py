"""Configuration, experiment runs, file formats and figures."""

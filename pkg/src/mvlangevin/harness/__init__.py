from .config import ConfigError, ExperimentConfig, load_config, parse_config, serialize_config
from .experiments import (ConvergenceResult, FigureResult,
                          run_admissibility_report, run_contraction,
                          run_empirical_convergence, run_mean_decay_figure,
                          run_moments)

__all__ = [
    "ConfigError", "ExperimentConfig", "load_config", "parse_config",
    "serialize_config", "ConvergenceResult", "FigureResult",
    "run_admissibility_report", "run_contraction",
    "run_empirical_convergence", "run_mean_decay_figure", "run_moments",
]

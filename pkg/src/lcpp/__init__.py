"""Level-constrained proximal point method for sparsity-constrained optimisation."""

__version__ = "0.1.0"

from .core import LcppConfig, LcppResult, level, run, step
from .exceptions import (ConfigurationError, DataFormatError, DegenerateLevelError, InfeasibleError, LcppError,
                         StartupError)
from .kkt import KktReport, kkt_report, stationarity_residual
from .objective import CustomObjective, Dataset, LogisticLoss, SquaredLoss, make_objective
from .penalty import Family, PenaltySpec, make_penalty
from .projection import ProjectionProblem, ProjectionResult, project
from .subsolver import InnerConfig, SubproblemSpec

__all__ = [
    "ConfigurationError", "CustomObjective", "DataFormatError", "Dataset", "DegenerateLevelError", "Family",
    "InfeasibleError", "InnerConfig", "KktReport", "LcppConfig", "LcppError", "LcppResult", "LogisticLoss",
    "PenaltySpec", "ProjectionProblem", "ProjectionResult", "SquaredLoss", "StartupError", "SubproblemSpec",
    "kkt_report", "level", "make_objective", "make_penalty", "project", "run", "stationarity_residual", "step",
]

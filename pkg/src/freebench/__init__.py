"""Static force models of fiber-reinforced elastomeric actuators.

Three models map a kinematic state (length, twist) and pressure to axial
force and moment: a lumped-parameter model, a nonlinear continuum model and a
small neural network. ``fitting`` identifies their parameters and ``bench``
cross-evaluates them on train/test splits.
"""

from .core import (
    ConvergenceError, Dataset, DatasetFormatError, FiberOverstretch, FreeDesign, FreeModelError,
    GeneralizedForce, KinematicState, LoadRecord, NoEquilibrium, SingularConfiguration, error_metric,
    partition, read_dataset, write_dataset,
)
from .continuum import MaterialParams
from .fitting import FitResult, evaluate, fit_continuum, fit_lumped, fit_neural
from .kernels import BACKEND
from .lumped import StiffnessMatrix
from .neural import NetworkParams

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConvergenceError", "Dataset", "DatasetFormatError", "FiberOverstretch", "FitResult",
    "FreeDesign", "FreeModelError", "GeneralizedForce", "KinematicState", "LoadRecord", "MaterialParams",
    "NetworkParams", "NoEquilibrium", "SingularConfiguration", "StiffnessMatrix", "error_metric",
    "evaluate", "fit_continuum", "fit_lumped", "fit_neural", "partition", "read_dataset",
    "write_dataset",
]

"""Robust improper maximum likelihood clustering.

Gaussian mixture clustering with an improper constant-density noise
component, fitted by EM under an eigenvalue-ratio constraint on the
covariances and a cap on the noise proportion.
"""

from .constraints import (
    ConstraintConfig,
    EigenvalueBundle,
    clamp_eigenvalue,
    eigen_line_search,
    eigen_ratio,
    in_parameter_space,
    noise_mass,
)
from .em import EmConfig, FitResult, em_fit, initialize, multistart_fit
from .estimator import RIMLE
from .evaluation import (
    SyntheticSpec,
    adjusted_rand,
    breakdown_conditions,
    breakdown_experiment,
    delta_scan,
    generate_mixture,
)
from .io import mad_standardize, read_matrix, read_result, write_result
from .model import (
    ComponentParams,
    DataMatrix,
    IcdValue,
    MixtureParams,
    assign,
    gaussian_log_density,
    log_pseudo_likelihood,
    posterior,
    psi_delta,
)

__version__ = "0.1.0"

__all__ = [
    "RIMLE",
    "ComponentParams",
    "ConstraintConfig",
    "DataMatrix",
    "EigenvalueBundle",
    "EmConfig",
    "FitResult",
    "IcdValue",
    "MixtureParams",
    "SyntheticSpec",
    "adjusted_rand",
    "assign",
    "breakdown_conditions",
    "breakdown_experiment",
    "clamp_eigenvalue",
    "delta_scan",
    "eigen_line_search",
    "eigen_ratio",
    "em_fit",
    "gaussian_log_density",
    "generate_mixture",
    "in_parameter_space",
    "initialize",
    "log_pseudo_likelihood",
    "mad_standardize",
    "multistart_fit",
    "noise_mass",
    "posterior",
    "psi_delta",
    "read_matrix",
    "read_result",
    "write_result",
]

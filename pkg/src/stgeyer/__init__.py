"""Simulation and estimation of multi-scale space-time Geyer saturation processes."""

from .estimators import GeyerLogisticLikelihood, GeyerPseudoLikelihood
from .exceptions import (
    ContractError,
    DomainError,
    EstimationError,
    InvalidParameterError,
    RankDeficientError,
)
from .geometry import (
    EventPoint,
    NeighborIndex,
    PointPattern,
    SpacetimeWindow,
    cylinder_count,
    neighbor_index,
)
from .glm import GlmFit, GlmProblem, fit_logistic, fit_poisson
from .inference import (
    FitResult,
    IrregularParams,
    fit_logistic_likelihood,
    fit_pseudo,
    gnz_residual,
    profile_pseudo,
)
from .model import (
    GeyerModel,
    ScaleComponent,
    TrendFunction,
    log_density_unnormalized,
    papangelou,
    strauss_papangelou,
    sufficient_statistics,
)
from .quadrature import QuadratureScheme, counting_weights, design_matrix, poisson_dummies
from .simulate import McmcConfig, McmcTrace, make_rng, mh_step, run_chain
from .study import StudyConfig, StudyReport, rmse_table, run_study

__version__ = "0.1.0"

MODEL_1 = dict(beta=70.0, gamma=(0.5, 1.5), r=(0.1, 0.11), q=(0.05, 0.1), s=(1, 2))
MODEL_2 = dict(beta=70.0, gamma=(0.2, 1.2), r=(0.1, 0.11), q=(0.05, 0.1), s=(1, 2))

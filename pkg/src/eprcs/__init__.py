"""Simulated random-filter measurements of position-momentum entangled photon
pairs, compressive reconstruction of both joint distributions and an
entropic steering analysis."""

from .entropy_analysis import (
    conditional_entropy,
    mutual_information,
    shannon_entropy,
    steering_bound,
    steering_witness,
    threshold_normalize,
)
from .errors import (
    AllZero,
    BadOrder,
    ConfigError,
    Diverged,
    EmptyRecord,
    EprcsError,
    InfeasibleGrid,
    MissingArtifact,
    ShapeMismatch,
    TooManyRows,
)
from .measurement_pipeline import MeasurementVectors, aggregate, run_acquisition
from .photon_sim import MOMENTUM_FIRST, POSITION_FIRST, FilterSet, port_probabilities
from .random_filters import SensingOperator, SensingPlan, apply_adjoint, apply_sensing, plan_sensing
from .spdc_model import (
    MOMENTUM,
    POSITION,
    REFERENCE_PARAMS,
    GridSpec,
    SpdcParams,
    balanced_grid,
    build_state,
    choose_grid,
    momentum_joint,
    position_joint,
)
from .tv_solver import SolverConfig, tv, tv_denoise, tv_min

__version__ = "0.1.0"

"""Simulator and bound calculator for K-step averaging SGD (K-AVG)."""
from .asgd import ElasticParams, StalenessModel, run_downpour, run_elastic
from .engine import RunTrace, SyncPlan, average_params, run_kavg, run_sequential_sgd
from .errors import ConfigError, ContractViolation
from .oracles import (
    ObjectiveOracle,
    certify_constants,
    finite_sum,
    full_gradient,
    objective_value,
    quadratic,
    random_finite_sum,
    stochastic_gradient,
    trig_nonconvex,
)
from .schedules import Constant, PowerLaw, StepDecay, Table
from .streams import RngStream

__version__ = "0.1.0"

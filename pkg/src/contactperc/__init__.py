"""Contact process with random recovery rates on bond-percolation clusters of Z^d."""

from .errors import ConfigurationError, ValidationFailure
from .recovery import RecoverySpec, lambda_c, parse_spec, q_value
from .lattice import Environment, GraphEnvironment
from .simulate import Limits, SimOutcome, Timeline, run_coupled, run_direct, run_graphical
from .ctmc import FiniteInstance, expected_extinction_time, extinction_prob_by

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "ValidationFailure", "RecoverySpec", "lambda_c", "parse_spec",
    "q_value", "Environment", "GraphEnvironment", "Limits", "SimOutcome", "Timeline",
    "run_coupled", "run_direct", "run_graphical", "FiniteInstance",
    "expected_extinction_time", "extinction_prob_by",
]

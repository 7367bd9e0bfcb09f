"""Event-triggered multivariable extremum seeking: simulation and certificates."""

from .errors import ConfigError, CertificateError, DivergenceError, AnalysisError
from .map_model import QuadraticMap, evaluate, true_gradient
from .dither import DitherSpec, s_vector, m_vector, delta_matrix, validate_frequencies, common_period
from .esc_core import ControllerGain, LoopState
from .triggers import TriggerConfig, EventLog
from .lyapunov import CertificateSet, solve_lyapunov, alpha_beta, certify
from .sim_engine import SimConfig, Trajectory, run

__version__ = "0.1.0"

"""Extremum-seeking loop pieces: demodulation, ZOH control, deviation error."""

from dataclasses import dataclass

import numpy as np

from .dither import DitherSpec, m_vector
from .errors import ConfigError


class ControllerGain:
    """Integrator gain K. Hurwitz-ness of H*K is a scenario-time check only."""

    def __init__(self, K):
        K = np.atleast_2d(np.asarray(K, dtype=float))
        if K.shape[0] != K.shape[1]:
            raise ConfigError(f"gain must be square, got {K.shape}")
        K.setflags(write=False)
        self.K = K

    @property
    def n(self):
        return self.K.shape[0]

    def check_hurwitz(self, hessian):
        """Raise ConfigError unless every eigenvalue of H*K has negative real part."""
        H = np.asarray(hessian, dtype=float)
        if H.shape != self.K.shape:
            raise ConfigError("gain and hessian dimensions differ")
        lam = np.linalg.eigvals(H @ self.K)
        bad = lam[lam.real >= 0]
        if bad.size:
            raise ConfigError(f"H*K is not Hurwitz: eigenvalue {bad[0]:.6g}")
        return lam


@dataclass
class LoopState:
    t: float
    theta_hat: np.ndarray
    g_hat_held: np.ndarray
    upsilon: float = 0.0
    last_event_time: float = 0.0


def gradient_estimate(spec: DitherSpec, map_output, t) -> np.ndarray:
    return m_vector(spec, t) * map_output


def control_value(gain: ControllerGain, g_hat_held) -> np.ndarray:
    return gain.K @ np.asarray(g_hat_held, dtype=float)


def deviation_error(g_hat_held, g_hat_now) -> np.ndarray:
    return np.asarray(g_hat_held, dtype=float) - np.asarray(g_hat_now, dtype=float)


def theta_hat_derivative(u) -> np.ndarray:
    return np.asarray(u, dtype=float)

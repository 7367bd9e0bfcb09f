"""Triggering function Xi and the static / dynamic / periodic event generators."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

KINDS = ("static", "dynamic", "periodic-static", "periodic-dynamic", "continuous")
# "continuous" is not an event trigger: u = K G_hat(t) at every step. Used as the
# non-triggered reference when checking how the loop approaches its average.


@dataclass(frozen=True)
class TriggerConfig:
    kind: str
    sigma: float
    alpha: float
    beta: float
    mu: float = 0.0
    gamma: float = 0.0
    upsilon0: float = 0.0
    h: float = 0.0

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems), problems)

    def problems(self):
        out = []
        if self.kind not in KINDS:
            out.append(f"trigger.kind: unknown kind {self.kind!r}")
        if not 0.0 < self.sigma < 1.0:
            out.append(f"trigger.sigma: {self.sigma} outside (0, 1)")
        if not self.alpha > 0:
            out.append("trigger.alpha: must be positive")
        if not self.beta > 0:
            out.append("trigger.beta: must be positive")
        if self.is_dynamic:
            if not self.mu > 0:
                out.append("trigger.mu: must be positive for dynamic kinds")
            if not self.gamma > 0:
                out.append("trigger.gamma: must be positive for dynamic kinds")
        if not self.upsilon0 >= 0:
            out.append("trigger.upsilon0: must be >= 0")
        if self.is_periodic and not self.h > 0:
            out.append("trigger.h: must be positive for periodic kinds")
        return out

    @property
    def is_dynamic(self):
        return self.kind in ("dynamic", "periodic-dynamic")

    @property
    def is_periodic(self):
        return self.kind.startswith("periodic")


@dataclass
class EventLog:
    event_times: list = field(default_factory=list)
    xi_at_fire: list = field(default_factory=list)
    upsilon_at_fire: list = field(default_factory=list)

    def append(self, t, xi_value=0.0, upsilon=0.0):
        if self.event_times and not t > self.event_times[-1]:
            raise ValueError(f"event time {t} not after {self.event_times[-1]}")
        self.event_times.append(float(t))
        self.xi_at_fire.append(float(xi_value))
        self.upsilon_at_fire.append(float(upsilon))

    @property
    def intervals(self):
        return np.diff(np.asarray(self.event_times, dtype=float))

    def __len__(self):
        return len(self.event_times)


def xi(cfg: TriggerConfig, g_hat, e) -> float:
    g = math.sqrt(float(np.dot(g_hat, g_hat)))
    en = math.sqrt(float(np.dot(e, e)))
    return cfg.sigma * cfg.alpha * g * g - cfg.beta * en * g


def static_should_fire(cfg, g_hat, e) -> bool:
    return xi(cfg, g_hat, e) < 0.0


def upsilon_derivative(cfg, upsilon, xi_value) -> float:
    return -cfg.mu * upsilon + xi_value


def clamped_upsilon_derivative(cfg, upsilon, xi_value) -> float:
    """Filter flow used by the integrator.

    Identical to upsilon_derivative wherever upsilon + gamma*Xi >= 0, i.e. on
    every state the continuous-time trigger has not yet fired on. Across a
    grid step that overshoots the firing surface it keeps upsilon from being
    pushed negative by an event the fixed grid detects late.
    """
    return -cfg.mu * upsilon + max(xi_value, -upsilon / cfg.gamma)


def dynamic_should_fire(cfg, upsilon, g_hat, e) -> bool:
    return upsilon + cfg.gamma * xi(cfg, g_hat, e) < 0.0


def on_sampling_grid(t, h, tol=1e-9):
    k = round(t / h)
    return abs(t - k * h) <= tol * max(1.0, abs(t))


def periodic_should_fire(cfg, t, g_hat_sample, g_hat_transmitted, upsilon=0.0) -> bool:
    """Transmission decision at a sampling instant t = k h.

    Transmits when the underlying condition is violated at the sample, with
    e = (last transmitted) - (current sample). This is the same firing sign
    as the continuous static/dynamic triggers.
    """
    if not on_sampling_grid(t, cfg.h):
        raise ValueError(f"t={t} is not a multiple of h={cfg.h}")
    e = np.asarray(g_hat_transmitted, dtype=float) - np.asarray(g_hat_sample, dtype=float)
    if cfg.kind == "periodic-dynamic":
        return dynamic_should_fire(cfg, upsilon, g_hat_sample, e)
    return static_should_fire(cfg, g_hat_sample, e)

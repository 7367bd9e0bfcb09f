"""Fixed-step closed-loop simulation in full (dithered) and average modes.

`run` drives a compiled loop. `step_full` / `step_average` are the same
schemes written directly against the library functions; they are slow and
exist for stepping by hand and for cross-checking the compiled loop.
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .dither import DitherSpec, m_vector, s_vector
from .errors import ConfigError, DivergenceError
from .esc_core import ControllerGain, control_value, deviation_error, gradient_estimate
from .lyapunov import solve_lyapunov
from .map_model import QuadraticMap, evaluate
from .triggers import EventLog, TriggerConfig, clamped_upsilon_derivative, xi

log = logging.getLogger(__name__)

KIND_CODES = {"static": 0, "dynamic": 1, "periodic-static": 2, "periodic-dynamic": 3, "continuous": 4}
MIN_STEPS_PER_PERIOD = 50
DEFAULT_STEPS_PER_PERIOD = 200
DEFAULT_OUTPUT_INTERVAL = 0.05  # seconds between trajectory records unless decimation is given


def default_dt(dither: DitherSpec):
    return 2.0 * math.pi / float(np.max(dither.omegas)) / DEFAULT_STEPS_PER_PERIOD


@dataclass
class SimConfig:
    """One fully specified run.

    washout_ratio: cutoff of a first-order high-pass on y before demodulation,
    as a multiple of the slowest dither frequency; 0 demodulates raw y.
    window: length of the final window used for convergence metrics (s).
    """

    map: QuadraticMap
    dither: DitherSpec
    gain: ControllerGain
    trigger: TriggerConfig
    theta_hat0: np.ndarray
    duration: float
    dt: float = None
    mode: str = "full"
    washout_ratio: float = 0.0
    decimation: int = None
    window: float = 30.0
    lyapunov_q: np.ndarray = None

    def __post_init__(self):
        self.theta_hat0 = np.asarray(self.theta_hat0, dtype=float)
        if self.dt is None:
            self.dt = default_dt(self.dither)
        if self.trigger.is_periodic and self.dt > 0 and self.trigger.h > 0:
            # h must be a whole number of steps; shrink dt rather than move h
            steps = math.ceil(self.trigger.h / self.dt - 1e-9)
            new_dt = self.trigger.h / steps
            if new_dt != self.dt:
                log.info("dt adjusted from %g to %g so that h is a multiple of dt", self.dt, new_dt)
                self.dt = new_dt
        if self.decimation is None:
            self.decimation = max(1, int(round(DEFAULT_OUTPUT_INTERVAL / self.dt)))
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems), problems)

    def problems(self):
        out = []
        n = self.map.n
        if self.dither.n != n:
            out.append("dither: dimension does not match the map")
        if self.gain.n != n:
            out.append("gain: dimension does not match the map")
        if self.theta_hat0.shape != (n,):
            out.append("theta_hat0: dimension does not match the map")
        if self.mode not in ("full", "average"):
            out.append(f"mode: unknown mode {self.mode!r}")
        if not self.dt > 0:
            out.append("dt: must be positive")
        elif self.mode == "full":
            limit = 2.0 * math.pi / float(np.max(self.dither.omegas)) / MIN_STEPS_PER_PERIOD
            if self.dt > limit * (1 + 1e-12):
                out.append(f"dt: {self.dt:g} exceeds fastest dither period / {MIN_STEPS_PER_PERIOD} = {limit:g}")
        if self.duration < 0:
            out.append("duration: must be >= 0")
        elif 0 < self.duration < 10 * self.dt:
            out.append("duration: must be 0 or at least 10 dt")
        if self.washout_ratio < 0:
            out.append("washout_ratio: must be >= 0")
        if self.decimation < 1:
            out.append("decimation: must be >= 1")
        return out

    @property
    def n_steps(self):
        return int(round(self.duration / self.dt))

    @property
    def washout_cutoff(self):
        return self.washout_ratio * float(np.min(self.dither.omegas))

    @property
    def h_steps(self):
        if not self.trigger.is_periodic:
            return 1
        return int(round(self.trigger.h / self.dt))

    def with_(self, **kw):
        return replace(self, **kw)

    def digest(self):
        """Short hash of every numeric input; printed with divergence reports."""
        parts = [self.map.hessian, self.map.optimizer, [self.map.extremum],
                 self.dither.amplitudes, self.dither.omegas, self.gain.K, self.theta_hat0,
                 [self.duration, self.dt, self.washout_ratio, self.decimation, self.window]]
        h = hashlib.sha256()
        for p in parts:
            h.update(np.ascontiguousarray(np.asarray(p, dtype=float)).tobytes())
        h.update(repr((self.trigger, self.mode)).encode())
        return h.hexdigest()[:12]


def trajectory_columns(n, mode):
    cols = ["t"]
    for name in ("theta_hat", "theta"):
        cols += [f"{name}[{i}]" for i in range(n)]
    cols.append("y")
    for name in ("g_hat", "g_held", "u"):
        cols += [f"{name}[{i}]" for i in range(n)]
    cols += ["xi", "upsilon"]
    if mode == "average":
        cols.append("v_av")
    return cols


@dataclass
class Trajectory:
    columns: list
    data: np.ndarray
    mode: str
    n: int
    window_stats: dict = field(default_factory=dict)

    def col(self, name):
        return self.data[:, self.columns.index(name)]

    def block(self, name):
        i = self.columns.index(f"{name}[0]")
        return self.data[:, i:i + self.n]

    @property
    def t(self):
        return self.data[:, 0]

    def __len__(self):
        return self.data.shape[0]


def _window_dict(acc):
    c = acc[0]
    if c == 0:
        return {}
    return {
        "samples": int(c),
        "mean_theta_hat_err": acc[1] / c,
        "mean_theta_err": acc[2] / c,
        "mean_y_err": acc[3] / c,
        "max_theta_hat_err": acc[4],
        "max_theta_err": acc[5],
        "max_y_err": acc[6],
    }


def run(cfg: SimConfig, raise_on_divergence=True):
    """Simulate cfg. Returns (Trajectory, EventLog).

    On non-finite state, raises DivergenceError (or, with
    raise_on_divergence=False, returns what was computed and marks the
    trajectory's window_stats with diverged_at).
    """
    n = cfg.map.n
    nsteps = cfg.n_steps
    dec = cfg.decimation
    tr = cfg.trigger
    cols = trajectory_columns(n, cfg.mode)
    rec = np.zeros((nsteps // dec + 1, len(cols)))
    ev = np.zeros((nsteps + 1, 3))
    H = np.ascontiguousarray(cfg.map.hessian)
    ts = np.ascontiguousarray(cfg.map.optimizer)
    K = np.ascontiguousarray(cfg.gain.K)
    kind = KIND_CODES[tr.kind]
    if cfg.mode == "full":
        acc = np.zeros(7)
        win_start = cfg.duration - cfg.window
        ne, nr, status, bad = _kernels.full_kernel(
            H, ts, cfg.map.extremum, np.ascontiguousarray(cfg.dither.amplitudes),
            np.ascontiguousarray(cfg.dither.omegas), K, cfg.washout_cutoff, kind,
            tr.sigma, tr.alpha, tr.beta, tr.mu, tr.gamma, tr.upsilon0, cfg.h_steps,
            cfg.theta_hat0, cfg.dt, nsteps, dec, win_start, rec, ev, acc)
        stats = _window_dict(acc)
    else:
        Q = np.eye(n) if cfg.lyapunov_q is None else np.asarray(cfg.lyapunov_q, dtype=float)
        P = solve_lyapunov(H @ K, Q)
        ne, nr, status, bad = _kernels.average_kernel(
            H, np.linalg.inv(H), ts, cfg.map.extremum, K, P, kind,
            tr.sigma, tr.alpha, tr.beta, tr.mu, tr.gamma, tr.upsilon0, cfg.h_steps,
            cfg.theta_hat0, cfg.dt, nsteps, dec, rec, ev)
        stats = {}
    events = EventLog(event_times=ev[:ne, 0].tolist(), xi_at_fire=ev[:ne, 1].tolist(),
                      upsilon_at_fire=ev[:ne, 2].tolist())
    traj = Trajectory(cols, rec[:nr], cfg.mode, n, stats)
    if status != 0:
        t_bad = bad * cfg.dt
        traj.window_stats = {"diverged_at": t_bad}
        if raise_on_divergence:
            raise DivergenceError(f"non-finite state at t={t_bad:.6g} s (config {cfg.digest()})", t_bad)
    return traj, events


# ---- step-by-step reference implementation ----

@dataclass
class FullState:
    k: int
    theta_hat: np.ndarray
    eta: float
    upsilon: float
    g_held: np.ndarray
    g_hat: np.ndarray
    xi: float
    fired: bool
    events: EventLog
    t: float = 0.0


def initial_full_state(cfg: SimConfig):
    th = cfg.theta_hat0.copy()
    y0 = evaluate(cfg.map, th + s_vector(cfg.dither, 0.0))
    eta = y0 if cfg.washout_cutoff > 0 else 0.0
    g = gradient_estimate(cfg.dither, y0 - eta, 0.0)
    ev = EventLog()
    held = g.copy()
    x = xi(cfg.trigger, g, deviation_error(held, g))
    ev.append(0.0, x, cfg.trigger.upsilon0)
    return FullState(0, th, eta, cfg.trigger.upsilon0, held, g, x, True, ev)


def _flow_full(cfg, state, u, c, tt, eta, ups):
    """(d eta, d upsilon) at stage time tt with theta_hat advanced by c*dt*u."""
    th = state.theta_hat + c * cfg.dt * u
    y = evaluate(cfg.map, th + s_vector(cfg.dither, tt))
    wh = cfg.washout_cutoff
    d_eta = wh * (y - eta)
    d_ups = 0.0
    if cfg.trigger.is_dynamic:
        g = gradient_estimate(cfg.dither, y - eta, tt)
        x = xi(cfg.trigger, g, deviation_error(state.g_held, g))
        d_ups = clamped_upsilon_derivative(cfg.trigger, ups, x)
    return d_eta, d_ups


def step_full(state: FullState, cfg: SimConfig) -> FullState:
    """One RK4 step with u held, then the post-step trigger decision."""
    dt = cfg.dt
    t0 = state.k * dt
    u = control_value(cfg.gain, state.g_held)
    e0, v0 = state.eta, state.upsilon
    k1 = _flow_full(cfg, state, u, 0.0, t0, e0, v0)
    k2 = _flow_full(cfg, state, u, 0.5, t0 + 0.5 * dt, e0 + 0.5 * dt * k1[0], v0 + 0.5 * dt * k1[1])
    k3 = _flow_full(cfg, state, u, 0.5, t0 + 0.5 * dt, e0 + 0.5 * dt * k2[0], v0 + 0.5 * dt * k2[1])
    k4 = _flow_full(cfg, state, u, 1.0, t0 + dt, e0 + dt * k3[0], v0 + dt * k3[1])
    eta = e0 + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    ups = v0 + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) if cfg.trigger.is_dynamic else v0
    th = state.theta_hat + dt * u
    k = state.k + 1
    t1 = k * dt
    y = evaluate(cfg.map, th + s_vector(cfg.dither, t1))
    if not (np.isfinite(y) and np.isfinite(eta) and np.isfinite(ups)):
        raise DivergenceError(f"non-finite state at t={t1:.6g} s (config {cfg.digest()})", t1)
    g = gradient_estimate(cfg.dither, y - eta, t1)
    return _decide(cfg, k, th, eta, ups, state.g_held, g, state.events)


def _decide(cfg, k, th, eta, ups, held, g, events):
    tr = cfg.trigger
    x = xi(tr, g, deviation_error(held, g))
    kind = tr.kind
    if kind == "static":
        fire = x < 0.0
    elif kind == "dynamic":
        fire = ups + tr.gamma * x < 0.0
    elif kind == "continuous":
        fire = True
    elif k % cfg.h_steps == 0:
        fire = x < 0.0 if kind == "periodic-static" else ups + tr.gamma * x < 0.0
    else:
        fire = False
    if fire:
        events.append(k * cfg.dt, x, ups)
        held = g.copy()
        x = xi(tr, g, deviation_error(held, g))
    return FullState(k, th, eta, ups, held, g, x, fire, events, k * cfg.dt)


def initial_average_state(cfg: SimConfig):
    g = cfg.map.hessian @ (cfg.theta_hat0 - cfg.map.optimizer)
    ev = EventLog()
    x = xi(cfg.trigger, g, np.zeros_like(g))
    ev.append(0.0, x, cfg.trigger.upsilon0)
    return FullState(0, cfg.theta_hat0.copy(), 0.0, cfg.trigger.upsilon0, g.copy(), g, x, True, ev)


def step_average(state: FullState, cfg: SimConfig) -> FullState:
    """Average system: G_av' = H*K (G_av + e_av) = H*K G_held, with the average trigger.

    Between events G_av is affine in t and the step is exact. The
    "continuous" kind has e_av = 0 and is stepped with RK4 instead.

    theta_hat in the returned state is theta*_ + H*^-1 G_av.
    """
    dt = cfg.dt
    HK = cfg.map.hessian @ cfg.gain.K
    rate = HK @ state.g_held
    tr = cfg.trigger

    def f_ups(s, ups):
        g = state.g_hat + s * rate
        return clamped_upsilon_derivative(tr, ups, xi(tr, g, deviation_error(state.g_held, g)))

    ups = state.upsilon
    if tr.is_dynamic:
        k1 = f_ups(0.0, ups)
        k2 = f_ups(0.5 * dt, ups + 0.5 * dt * k1)
        k3 = f_ups(0.5 * dt, ups + 0.5 * dt * k2)
        k4 = f_ups(dt, ups + dt * k3)
        ups = ups + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if tr.kind == "continuous":
        A = dt * HK
        A2 = A @ A
        g = (np.eye(len(rate)) + A + A2 / 2.0 + A2 @ A / 6.0 + A2 @ A2 / 24.0) @ state.g_hat
    else:
        g = state.g_hat + dt * rate
    if not (np.all(np.isfinite(g)) and np.isfinite(ups)):
        raise DivergenceError(f"non-finite state at t={(state.k + 1) * dt:.6g} s", (state.k + 1) * dt)
    th = np.linalg.solve(cfg.map.hessian, g) + cfg.map.optimizer
    return _decide(cfg, state.k + 1, th, 0.0, ups, state.g_held, g, state.events)

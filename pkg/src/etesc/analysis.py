"""Inter-event statistics, convergence metrics, theory bound checks and sigma sweeps."""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import AnalysisError, DivergenceError
from .lyapunov import certify
from .sim_engine import run
from .triggers import EventLog, TriggerConfig


@dataclass(frozen=True)
class IntervalStats:
    n: int
    mean: float
    mean_deviation: float
    variance: float
    standard_deviation: float
    min_interval: float


def _stats_from_values(x):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise AnalysisError("no inter-event intervals to summarize")
    mean = float(np.mean(x))
    var = float(np.mean((x - mean) ** 2))
    return IntervalStats(int(x.size), mean, float(np.mean(np.abs(x - mean))), var,
                         math.sqrt(var), float(np.min(x)))


def interval_stats(logs) -> IntervalStats:
    """Pooled population statistics over every interval of every log."""
    if isinstance(logs, EventLog):
        logs = [logs]
    parts = [lg.intervals for lg in logs]
    return _stats_from_values(np.concatenate(parts) if parts else [])


class IntervalPool:
    """Histogram of intervals measured in integration steps.

    Event times sit on the grid t = k dt, so intervals are integer step
    counts. Pooling counts keeps memory flat when a run has millions of
    events, and the statistics are exact functions of the histogram.
    """

    def __init__(self, dt):
        self.dt = dt
        self.counts = np.zeros(0, dtype=np.int64)

    def add_steps(self, steps):
        steps = np.asarray(steps, dtype=np.int64)
        if steps.size:
            self.add_counts(np.bincount(steps))

    def add_log(self, log):
        k = np.round(np.asarray(log.event_times) / self.dt).astype(np.int64)
        self.add_steps(np.diff(k))

    def add_counts(self, counts):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.size > self.counts.size:
            counts = counts.copy()
            counts[: self.counts.size] += self.counts
            self.counts = counts
        else:
            self.counts[: counts.size] += counts

    def stats(self) -> IntervalStats:
        N = int(self.counts.sum())
        if N == 0:
            raise AnalysisError("no inter-event intervals to summarize")
        k = np.nonzero(self.counts)[0]
        c = self.counts[k].astype(float)
        x = k * self.dt
        mean = float(np.sum(c * x) / N)
        var = float(np.sum(c * (x - mean) ** 2) / N)
        md = float(np.sum(c * np.abs(x - mean)) / N)
        return IntervalStats(N, mean, md, var, math.sqrt(var), float(x[0]))


def max_events_in_window(event_times, width=1.0):
    """Largest number of events inside any half-open window [s, s+width)."""
    t = np.asarray(event_times, dtype=float)
    if t.size == 0:
        return 0
    # for each event as window start, count events before start+width
    ends = np.searchsorted(t, t + width - 1e-12 * max(1.0, width), side="right")
    return int(np.max(ends - np.arange(t.size)))


def fit_decay_rate(t, values, n_bins=30):
    """Exponential rate from per-bin maxima of a (piecewise constant) magnitude.

    Only the decaying stretch is fitted: from the envelope peak until it
    first comes down to twice the tail level (the median of the last tenth
    of the record), so a residual ripple floor does not flatten the slope.
    Returns nan when that stretch is too short to fit.
    """
    t = np.asarray(t, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    if t.size < 6:
        return float("nan")
    tail = float(np.median(v[-max(1, t.size // 10):]))
    start = int(np.argmax(v))
    below = np.nonzero(v[start:] <= 2.0 * tail)[0]
    stop = start + (below[0] if below.size else t.size - start)
    if stop - start < 6 or t[stop - 1] <= t[start]:
        return float("nan")
    ts, vs = t[start:stop], v[start:stop]
    nb = min(n_bins, (stop - start) // 2)
    edges = np.linspace(ts[0], ts[-1], nb + 1)
    idx = np.clip(np.searchsorted(edges, ts, side="right") - 1, 0, nb - 1)
    cx, cy = [], []
    for b in range(nb):
        sel = idx == b
        if np.any(sel) and vs[sel].max() > 0:
            j = np.argmax(vs[sel])
            cx.append(ts[sel][j])
            cy.append(np.log(vs[sel][j]))
    if len(cx) < 3:
        return float("nan")
    return float(-np.polyfit(cx, cy, 1)[0])


def convergence_metrics(traj, qmap, window=30.0, ball=0.3):
    """Final-window errors, time to enter (and stay in) a ball, fitted decay rate."""
    t = traj.t
    th_hat = traj.block("theta_hat")
    th = traj.block("theta")
    y = traj.col("y")
    e_hat = np.linalg.norm(th_hat - qmap.optimizer, axis=1)
    e_th = np.linalg.norm(th - qmap.optimizer, axis=1)
    e_y = np.abs(y - qmap.extremum)
    out = {}
    ws = traj.window_stats
    if ws.get("samples"):
        # full-resolution sums from the integrator, not the decimated records
        out.update({
            "final_mean_theta_hat_err": ws["mean_theta_hat_err"],
            "final_mean_theta_err": ws["mean_theta_err"],
            "final_mean_y_err": ws["mean_y_err"],
            "final_max_theta_hat_err": ws["max_theta_hat_err"],
            "final_max_theta_err": ws["max_theta_err"],
            "final_max_y_err": ws["max_y_err"],
        })
    else:
        sel = t >= t[-1] - window
        out.update({
            "final_mean_theta_hat_err": float(e_hat[sel].mean()),
            "final_mean_theta_err": float(e_th[sel].mean()),
            "final_mean_y_err": float(e_y[sel].mean()),
            "final_max_theta_hat_err": float(e_hat[sel].max()),
            "final_max_theta_err": float(e_th[sel].max()),
            "final_max_y_err": float(e_y[sel].max()),
        })
    outside = np.nonzero(e_hat > ball)[0]
    if outside.size == 0:
        out["time_to_ball"] = float(t[0])
    elif outside[-1] == t.size - 1:
        out["time_to_ball"] = float("nan")
    else:
        out["time_to_ball"] = float(t[outside[-1] + 1])
    out["fitted_rate"] = fit_decay_rate(t, np.linalg.norm(traj.block("g_held"), axis=1))
    return out


@dataclass
class BoundReport:
    passed: bool
    checks: dict = field(default_factory=dict)

    def add(self, name, ok, value=None, bound=None):
        self.checks[name] = (bool(ok), value, bound)
        self.passed = self.passed and bool(ok)


def bound_check(traj, cert, slack=0.05, residual_c=None, a=None, omega=None):
    """Theory-vs-simulation envelope checks.

    Average mode: |G_av(t)| <= sqrt((1+kappa) lmax(P)/lmin(P)) |G_av(0)| exp(-m t) (1+slack).
    Full mode: final-window mean |y - Q*| <= residual_c (a^2 + 1/omega^2).
    """
    rep = BoundReport(True)
    if traj.mode == "average":
        g = np.linalg.norm(traj.block("g_hat"), axis=1)
        lmin, lmax = cert.lam_P
        env = math.sqrt((1.0 + cert.kappa) * lmax / lmin) * g[0] * np.exp(-cert.m * traj.t) * (1 + slack)
        worst = float(np.max(g - env)) if g.size else 0.0
        rep.add("g_av_envelope", worst <= 0.0, worst, 0.0)
    else:
        if residual_c is None:
            return rep
        ws = traj.window_stats
        if not ws.get("samples"):
            raise AnalysisError("full-mode residual check needs the run's final-window statistics")
        resid = ws["mean_y_err"]
        bound = residual_c * (a * a + 1.0 / (omega * omega))
        rep.add("y_residual", resid <= bound, resid, bound)
    return rep


def decay_check(traj, events, P, rate, dynamic=False, rel_slack=1e-6, dt=None):
    """Per-event-pair Lyapunov decay in average mode.

    V = G^T P G (+ upsilon for the dynamic filter) must satisfy
    V(t_{k+1}) <= V(t_k) exp(-rate (t_{k+1} - t_k)) (1 + rel_slack).
    Needs an undecimated average-mode trajectory.
    Returns (ok, worst_ratio) where ratio = V(t_{k+1}) / bound.
    """
    if traj.mode != "average":
        raise AnalysisError("decay_check needs an average-mode trajectory")
    t = traj.t
    if dt is None:
        dt = t[1] - t[0]
    rows = np.round(np.asarray(events.event_times) / dt).astype(np.int64)
    if rows.size and rows[-1] >= t.size:
        raise AnalysisError("trajectory is decimated; rerun with decimation = 1")
    v = traj.col("v_av")[rows]
    if dynamic:
        v = v + traj.col("upsilon")[rows]
    et = np.asarray(events.event_times)
    if v.size < 2:
        return True, 0.0
    bound = v[:-1] * np.exp(-rate * np.diff(et)) * (1 + rel_slack)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, v[1:] / bound, 0.0)
    worst = float(np.max(ratio))
    return bool(np.all(v[1:] <= bound)), worst


def circle_initial_conditions(center, radius, points, stride=1):
    """theta_hat(0) = center - radius [cos(2 pi i/points), sin(2 pi i/points)] for i = stride, 2 stride, ..."""
    c = np.asarray(center, dtype=float)
    out = []
    for i in range(stride, points + 1, stride):
        ang = 2.0 * math.pi * i / points
        out.append(c - radius * np.array([math.cos(ang), math.sin(ang)]))
    return out


def _sweep_task(args):
    cfg, key = args
    try:
        _, ev = run(cfg)
    except DivergenceError:
        return key, None
    pool = IntervalPool(cfg.dt)
    pool.add_log(ev)
    return key, pool.counts


@dataclass
class SweepResult:
    rows: list
    diverged: dict
    dt: float

    def row(self, sigma, kind):
        for r in self.rows:
            if r["sigma"] == sigma and r["kind"] == kind:
                return r
        raise KeyError((sigma, kind))

    def ordering_checks(self):
        """dynamic mean > static mean per sigma, and both means increasing in sigma."""
        out = {}
        sigmas = sorted({r["sigma"] for r in self.rows})
        for s in sigmas:
            try:
                out[f"sigma_{s:g}.dynamic_gt_static"] = self.row(s, "dynamic")["mean"] > self.row(s, "static")["mean"]
            except KeyError:
                out[f"sigma_{s:g}.dynamic_gt_static"] = False
        for kind in ("static", "dynamic"):
            means = [self.row(s, kind)["mean"] for s in sigmas if _has(self, s, kind)]
            out[f"{kind}.mean_increasing_in_sigma"] = len(means) == len(sigmas) and all(
                b > a for a, b in zip(means, means[1:]))
        return out


def _has(res, s, kind):
    try:
        res.row(s, kind)
        return True
    except KeyError:
        return False


def sweep(sigmas, initial_conditions, base_cfg, kinds=("static", "dynamic"), jobs=1, kappa=None, q=None):
    """Full factorial sigma x initial condition x kind; one stats row per (sigma, kind).

    Diverged runs are left out of the statistics and counted in `diverged`.
    Rows come out sorted by (sigma, kind) whatever order runs finish in.
    """
    if not sigmas or not initial_conditions:
        raise AnalysisError("sweep needs at least one sigma and one initial condition")
    base_tr = base_cfg.trigger
    tasks = []
    for s in sigmas:
        for kind in kinds:
            tr = TriggerConfig(kind, s, base_tr.alpha, base_tr.beta, base_tr.mu, base_tr.gamma,
                               base_tr.upsilon0, base_tr.h)
            for j, ic in enumerate(initial_conditions):
                tasks.append((base_cfg.with_(trigger=tr, theta_hat0=np.asarray(ic, dtype=float)),
                              (float(s), kind, j)))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_sweep_task, tasks))
    else:
        results = [_sweep_task(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    pools, diverged = {}, {}
    for (s, kind, j), counts in results:
        pools.setdefault((s, kind), IntervalPool(base_cfg.dt))
        diverged.setdefault((s, kind), 0)
        if counts is None:
            diverged[(s, kind)] += 1
        else:
            pools[(s, kind)].add_counts(counts)
    rows = []
    for (s, kind) in sorted(pools):
        st = pools[(s, kind)].stats()
        tr = TriggerConfig(kind, s, base_tr.alpha, base_tr.beta, base_tr.mu, base_tr.gamma,
                           base_tr.upsilon0, base_tr.h)
        cert = certify(base_cfg.map, base_cfg.gain, tr, base_cfg.theta_hat0, base_cfg.dither,
                       Q=q, kappa=kappa)
        rows.append({"sigma": s, "kind": kind, "n_intervals": st.n, "mean": st.mean,
                     "mean_deviation": st.mean_deviation, "variance": st.variance,
                     "std_deviation": st.standard_deviation, "min_interval": st.min_interval,
                     "tau_star_theory": cert.tau_star})
    return SweepResult(rows, diverged, base_cfg.dt)

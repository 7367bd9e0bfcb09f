"""Scenario files, the `etesc` command line, and CSV export.

Scenario format: one `key = value` per line, `#` starts a comment. Values
are Python literals: numbers, bracketed lists for vectors, lists of rows
for matrices, quoted or bare words for names. Frequency ratios may be
written as quoted fractions ("1/7"). See README for the key list.
"""

import argparse
import ast
import logging
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .analysis import (bound_check, circle_initial_conditions, convergence_metrics, decay_check,
                       interval_stats, max_events_in_window, sweep)
from .dither import DitherSpec, common_period, validate_frequencies
from .errors import AnalysisError, CertificateError, ConfigError, DivergenceError
from .esc_core import ControllerGain
from .lyapunov import certify, solve_lyapunov
from .map_model import QuadraticMap
from .sim_engine import SimConfig, run
from .triggers import KINDS, TriggerConfig

log = logging.getLogger("etesc")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_CHECK = 0, 2, 3, 4

KNOWN_KEYS = {
    "name", "hessian", "optimizer", "extremum", "gain", "amplitudes", "freq_ratios", "base_freq",
    "frequencies", "max_denominator", "trigger", "sigma", "alpha", "beta", "mu", "gamma",
    "upsilon0", "h", "theta_hat0", "duration", "dt", "steps_per_period", "mode", "washout_ratio",
    "decimation", "window", "ball", "lyapunov_q", "kappa", "residual_c", "envelope_slack",
    "sweep_sigmas", "ic_center", "ic_radius", "ic_points", "ic_stride",
}
REQUIRED = ("hessian", "optimizer", "extremum", "gain", "amplitudes", "trigger", "sigma", "alpha",
            "beta", "theta_hat0", "duration")


@dataclass
class Scenario:
    name: str
    sim: SimConfig
    raw: dict
    q: np.ndarray = None
    kappa: float = None
    residual_c: float = None
    envelope_slack: float = 0.05
    ball: float = 0.3
    sweep_sigmas: list = field(default_factory=list)
    initial_conditions: list = field(default_factory=list)
    path: str = ""


def parse_text(text, source="<string>"):
    """Raw key/value dict. Collects every parse problem before raising."""
    raw, problems = {}, []
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            problems.append(f"{source}:{lineno}: expected 'key = value'")
            continue
        key, val = (s.strip() for s in body.split("=", 1))
        if not key.isidentifier():
            problems.append(f"{source}:{lineno}: bad key {key!r}")
            continue
        if key in raw:
            problems.append(f"{source}:{lineno}: duplicate key {key!r}")
            continue
        try:
            raw[key] = ast.literal_eval(val)
        except (ValueError, SyntaxError):
            if val.replace("-", "").replace("_", "").isalnum():
                raw[key] = val
            else:
                problems.append(f"{source}:{lineno}: cannot parse value for {key!r}: {val}")
    if problems:
        raise ConfigError(f"{len(problems)} parse error(s)", problems)
    return raw


def build_scenario(raw, name="scenario", mode=None, trigger=None):
    """Validate a raw dict into a Scenario. All failures are reported together."""
    raw = dict(raw)
    if mode is not None:
        raw["mode"] = mode
    if trigger is not None:
        raw["trigger"] = trigger
    problems = []
    for k in sorted(set(raw) - KNOWN_KEYS):
        problems.append(f"{k}: unknown key")
    for k in REQUIRED:
        if k not in raw:
            problems.append(f"{k}: missing")

    def attempt(label, fn):
        try:
            return fn()
        except ConfigError as exc:
            problems.extend(f"{label}: {p}" if not p.startswith(label) else p for p in exc.problems)
        except (TypeError, ValueError) as exc:
            problems.append(f"{label}: {exc}")
        return None

    qmap = attempt("map", lambda: QuadraticMap(raw["hessian"], raw["optimizer"], raw["extremum"])) \
        if all(k in raw for k in ("hessian", "optimizer", "extremum")) else None

    def make_dither():
        md = int(raw.get("max_denominator", 10**6))
        if "frequencies" in raw:
            if "freq_ratios" in raw:
                raise ConfigError("give either frequencies or freq_ratios, not both")
            return DitherSpec.from_frequencies(raw["amplitudes"], raw["frequencies"],
                                               float(raw.get("base_freq", 1.0)), md)
        ratios = [Fraction(r) if isinstance(r, str) else r for r in raw["freq_ratios"]]
        return DitherSpec(raw["amplitudes"], ratios, float(raw["base_freq"]), md)

    dither = None
    if "amplitudes" in raw and ("frequencies" in raw or ("freq_ratios" in raw and "base_freq" in raw)):
        dither = attempt("dither", make_dither)
    elif "amplitudes" in raw:
        problems.append("dither: need freq_ratios + base_freq, or frequencies")
    if dither is not None:
        v = validate_frequencies(dither)
        if v is not None:
            problems.append(f"dither: {v}")
        else:
            attempt("dither", lambda: common_period(dither))

    gain = attempt("gain", lambda: ControllerGain(raw["gain"])) if "gain" in raw else None
    if gain is not None and qmap is not None:
        attempt("gain", lambda: gain.check_hurwitz(qmap.hessian))

    tr = None
    if all(k in raw for k in ("trigger", "sigma", "alpha", "beta")):
        tr = attempt("trigger", lambda: TriggerConfig(
            str(raw["trigger"]), float(raw["sigma"]), float(raw["alpha"]), float(raw["beta"]),
            float(raw.get("mu", 0.0)), float(raw.get("gamma", 0.0)),
            float(raw.get("upsilon0", 0.0)), float(raw.get("h", 0.0))))

    if "dt" in raw and "steps_per_period" in raw:
        problems.append("dt: give either dt or steps_per_period, not both")
    sim = None
    both_dt = "dt" in raw and "steps_per_period" in raw
    if not both_dt and "theta_hat0" in raw and "duration" in raw and all(
            x is not None for x in (qmap, dither, gain, tr)):
        dt = raw.get("dt")
        if "steps_per_period" in raw:
            dt = 2.0 * math.pi / float(np.max(dither.omegas)) / float(raw["steps_per_period"])
        q = raw.get("lyapunov_q")
        sim = attempt("sim", lambda: SimConfig(
            qmap, dither, gain, tr, np.asarray(raw["theta_hat0"], dtype=float), float(raw["duration"]),
            dt=None if dt is None else float(dt), mode=str(raw.get("mode", "full")),
            washout_ratio=float(raw.get("washout_ratio", 0.0)),
            decimation=None if "decimation" not in raw else int(raw["decimation"]),
            window=float(raw.get("window", 30.0)),
            lyapunov_q=None if q is None else np.asarray(q, dtype=float)))
    if qmap is not None and "lyapunov_q" in raw:
        q = np.asarray(raw["lyapunov_q"], dtype=float)
        if q.shape != (qmap.n, qmap.n) or not np.allclose(q, q.T) or np.linalg.eigvalsh(q)[0] <= 0:
            problems.append("lyapunov_q: must be a symmetric positive definite n x n matrix")
    ics = []
    if "ic_center" in raw:
        try:
            ics = circle_initial_conditions(raw["ic_center"], float(raw.get("ic_radius", 1.0)),
                                            int(raw.get("ic_points", 100)), int(raw.get("ic_stride", 1)))
        except (TypeError, ValueError) as exc:
            problems.append(f"ic_center: {exc}")
    if problems:
        raise ConfigError(f"{len(problems)} configuration error(s)", problems)
    return Scenario(
        name=str(raw.get("name", name)), sim=sim, raw=raw,
        q=None if "lyapunov_q" not in raw else np.asarray(raw["lyapunov_q"], dtype=float),
        kappa=raw.get("kappa"), residual_c=raw.get("residual_c"),
        envelope_slack=float(raw.get("envelope_slack", 0.05)), ball=float(raw.get("ball", 0.3)),
        sweep_sigmas=[float(s) for s in raw.get("sweep_sigmas", [])], initial_conditions=ics)


def load_scenario(path, mode=None, trigger=None):
    p = resolve_scenario_path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    sc = build_scenario(parse_text(text, str(p)), name=p.stem, mode=mode, trigger=trigger)
    sc.path = str(p)
    return sc


def bundled_scenarios():
    return sorted(f.name for f in resources.files("etesc").joinpath("scenarios").iterdir()
                  if f.name.endswith(".cfg"))


def resolve_scenario_path(path):
    p = Path(path)
    if p.exists():
        return p
    b = resources.files("etesc").joinpath("scenarios", p.name)
    if b.is_file():
        return Path(str(b))
    return p


# ---- CSV output ----

def _fmt(x):
    return repr(float(x))


def write_trajectory_csv(path, traj):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(traj.columns) + "\n")
        for row in traj.data:
            fh.write(",".join(map(_fmt, row)) + "\n")


def write_events_csv(path, events):
    t = np.asarray(events.event_times, dtype=float)
    iv = np.concatenate([[0.0], np.diff(t)]) if t.size else t
    xs = events.xi_at_fire
    us = events.upsilon_at_fire
    with open(path, "w", newline="") as fh:
        fh.write("k,t_k,interval,xi_at_fire,upsilon_at_fire\n")
        # fixed 12 significant digits: event files reach millions of rows
        fh.writelines(["%d,%.12g,%.12g,%.12g,%.12g\n" % (k, t[k], iv[k], xs[k], us[k])
                       for k in range(t.size)])


STATS_COLUMNS = ("sigma", "kind", "n_intervals", "mean", "mean_deviation", "variance",
                 "std_deviation", "min_interval", "tau_star_theory")


def write_stats_csv(path, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(STATS_COLUMNS) + "\n")
        for r in rows:
            vals = [r[c] if isinstance(r[c], (str, int)) else repr(float(r[c])) for c in STATS_COLUMNS]
            fh.write(",".join(str(v) for v in vals) + "\n")


def emit(key, value, out=None):
    out = out or sys.stdout
    if isinstance(value, bool):
        value = "pass" if value else "fail"
    elif isinstance(value, float):
        value = f"{value:.10g}"
    print(f"{key}={value}", file=out)


# ---- commands ----

def _omega_and_a(sim):
    return common_period(sim.dither)[1], float(np.linalg.norm(sim.dither.amplitudes))


def cmd_simulate(scenario, out_dir=".", out=None):
    sim = scenario.sim
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        traj, events = run(sim)
    except DivergenceError as exc:
        emit("status", "diverged", out)
        emit("diverged_at", exc.t, out)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    stem = f"{scenario.name}_{sim.mode}_{sim.trigger.kind}"
    write_trajectory_csv(out_dir / f"{stem}_trajectory.csv", traj)
    write_events_csv(out_dir / f"{stem}_events.csv", events)
    emit("scenario", scenario.name, out)
    emit("mode", sim.mode, out)
    emit("trigger", sim.trigger.kind, out)
    emit("dt", sim.dt, out)
    emit("steps", sim.n_steps, out)
    emit("event_count", len(events), out)
    if len(events) > 1:
        st = interval_stats(events)
        emit("min_interval", st.min_interval, out)
        emit("mean_interval", st.mean, out)
    emit("max_events_per_1s", max_events_in_window(events.event_times, 1.0), out)
    ok = True
    if len(traj) > 1:
        for k, v in convergence_metrics(traj, sim.map, sim.window, scenario.ball).items():
            emit(k, float(v), out)
    try:
        cert = certify(sim.map, sim.gain, sim.trigger, sim.theta_hat0, sim.dither,
                       Q=scenario.q, kappa=scenario.kappa)
    except CertificateError as exc:
        emit("certificate", f"unavailable ({exc})", out)
        cert = None
    if cert is not None and sim.trigger.kind in ("static", "dynamic") and len(traj) > 1:
        emit("tau_star", cert.tau_star, out)
        omega, a = _omega_and_a(sim)
        rep = bound_check(traj, cert, scenario.envelope_slack, scenario.residual_c, a, omega)
        for name, (passed, value, bound) in rep.checks.items():
            emit(f"check.{name}", passed, out)
            emit(f"check.{name}.value", float(value), out)
            emit(f"check.{name}.bound", float(bound), out)
        ok = ok and rep.passed
        if sim.mode == "average" and sim.decimation == 1:
            P = solve_lyapunov(sim.map.hessian @ sim.gain.K, cert.Q)
            lmax = float(np.linalg.eigvalsh(P)[-1])
            rate = (1 - sim.trigger.sigma) * sim.trigger.alpha / lmax
            if sim.trigger.is_dynamic:
                rate = min(rate, sim.trigger.mu)
            dok, worst = decay_check(traj, events, P, rate, sim.trigger.is_dynamic, dt=sim.dt)
            emit("check.lyapunov_decay", dok, out)
            emit("check.lyapunov_decay.worst_ratio", worst, out)
            ok = ok and dok
            if len(events) > 1:
                dwell = interval_stats(events).min_interval >= cert.tau_star - sim.dt
                emit("check.dwell_time", dwell, out)
                ok = ok and dwell
    emit("status", "ok" if ok else "check_failed", out)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_certify(scenario, out=None):
    sim = scenario.sim
    cert = certify(sim.map, sim.gain, sim.trigger, sim.theta_hat0, sim.dither,
                   Q=scenario.q, kappa=scenario.kappa)
    n = sim.map.n
    for i in range(n):
        for j in range(n):
            emit(f"P[{i}][{j}]", float(cert.P[i, j]), out)
    lmin, lmax = cert.lam_P
    pmin, pmax = cert.lam_P_bar
    for k, v in (("lambda_min_P", lmin), ("lambda_max_P", lmax), ("lambda_min_P_bar", pmin),
                 ("lambda_max_P_bar", pmax), ("alpha", cert.alpha), ("beta", cert.beta),
                 ("alpha_tight", cert.alpha_tight), ("beta_tight", cert.beta_tight),
                 ("norm_HK", float(np.linalg.norm(sim.map.hessian @ sim.gain.K, 2))),
                 ("m", cert.m), ("M_theta", cert.M_theta), ("M_y", cert.M_y), ("tau_star", cert.tau_star),
                 ("kappa", cert.kappa)):
        emit(k, float(v), out)
    emit("dwell_case", cert.dwell_case, out)
    emit("M_y_order_term", "unit constant; not derivable from theory", out)
    for note in cert.notes:
        emit("note", note, out)
    return EXIT_OK


def cmd_sweep(scenario, out_dir=".", jobs=1, out=None):
    sim = scenario.sim
    if not scenario.sweep_sigmas or not scenario.initial_conditions:
        raise ConfigError("sweep needs sweep_sigmas and ic_center/ic_radius/ic_points")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    res = sweep(scenario.sweep_sigmas, scenario.initial_conditions, sim, jobs=jobs,
                kappa=scenario.kappa, q=scenario.q)
    path = out_dir / f"{scenario.name}_stats.csv"
    write_stats_csv(path, res.rows)
    emit("scenario", scenario.name, out)
    emit("runs", len(scenario.sweep_sigmas) * len(scenario.initial_conditions) * 2, out)
    emit("diverged", sum(res.diverged.values()), out)
    emit("stats_rows", len(res.rows), out)
    for r in res.rows:
        emit(f"mean.sigma_{r['sigma']:g}.{r['kind']}", r["mean"], out)
    checks = res.ordering_checks()
    for k, v in checks.items():
        emit(f"check.{k}", v, out)
    ok = all(checks.values())
    emit("status", "ok" if ok else "check_failed", out)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_validate(scenario, out=None):
    emit("scenario", scenario.name, out)
    emit("n", scenario.sim.map.n, out)
    emit("common_period", common_period(scenario.sim.dither)[0], out)
    emit("dt", scenario.sim.dt, out)
    emit("status", "ok", out)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="etesc", description="Event-triggered extremum seeking lab")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "certify", "sweep", "validate"):
        s = sub.add_parser(name)
        s.add_argument("--scenario", required=True, help="scenario file, or the name of a bundled one")
        s.add_argument("--mode", choices=("full", "average"))
        s.add_argument("--trigger", choices=KINDS)
        if name in ("simulate", "sweep"):
            s.add_argument("--out-dir", default=".")
        if name == "sweep":
            s.add_argument("--jobs", type=int, default=1)
    sub.add_parser("list", help="list bundled scenarios")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list":
        for name in bundled_scenarios():
            print(name)
        return EXIT_OK
    try:
        sc = load_scenario(args.scenario, mode=args.mode, trigger=args.trigger)
        if args.command == "simulate":
            return cmd_simulate(sc, args.out_dir)
        if args.command == "certify":
            return cmd_certify(sc)
        if args.command == "sweep":
            return cmd_sweep(sc, args.out_dir, args.jobs)
        return cmd_validate(sc)
    except ConfigError as exc:
        for prob in exc.problems:
            print(f"config error: {prob}", file=sys.stderr)
        return EXIT_CONFIG
    except CertificateError as exc:
        print(f"certificate error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AnalysisError as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())

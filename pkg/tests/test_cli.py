import numpy as np
import pytest

from etesc.cli import (build_scenario, bundled_scenarios, load_scenario, main, parse_text,
                       write_events_csv)
from etesc import ConfigError, EventLog

SHORT = """
name = short
hessian = [[100, 30], [30, 20]]
optimizer = [2, 4]
extremum = 100
gain = [[-0.06, 0], [0, -0.20]]
amplitudes = [0.1, 0.1]
freq_ratios = [1, 7]
base_freq = 300
washout_ratio = 0.1
trigger = static
sigma = 0.5
alpha = 1
beta = 3.1521
mu = 0.4320
gamma = 0.0542
upsilon0 = 0
theta_hat0 = [2.5, 6]
duration = 1.0
steps_per_period = 50
window = 0.5
"""


def kv(text):
    out = {}
    for line in text.strip().splitlines():
        k, _, v = line.partition("=")
        out[k] = v
    return out


def write(tmp_path, text, name="sc.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_bundled_scenarios_listed(capsys):
    assert main(["list"]) == 0
    names = capsys.readouterr().out.split()
    assert set(names) == {"paper_sec7_static.cfg", "paper_sec7_dynamic.cfg", "paper_sec7_petc.cfg",
                          "campaign_table1_desk.cfg"}
    assert bundled_scenarios() == sorted(names)


@pytest.mark.parametrize("name", ["paper_sec7_static.cfg", "paper_sec7_dynamic.cfg",
                                  "paper_sec7_petc.cfg", "campaign_table1_desk.cfg"])
def test_bundled_scenarios_validate(name, capsys):
    assert main(["validate", "--scenario", name]) == 0
    assert kv(capsys.readouterr().out)["status"] == "ok"


def test_reference_scenario_parameters():
    sc = load_scenario("paper_sec7_static.cfg")
    sim = sc.sim
    np.testing.assert_array_equal(sim.map.hessian, [[100, 30], [30, 20]])
    np.testing.assert_array_equal(sim.theta_hat0, [2.5, 6])
    tr = sim.trigger
    assert (tr.sigma, tr.alpha, tr.beta, tr.mu, tr.gamma, tr.upsilon0) == (0.5, 1, 3.1521, 0.432, 0.0542, 0)
    assert load_scenario("paper_sec7_dynamic.cfg").sim.trigger.kind == "dynamic"
    petc = load_scenario("paper_sec7_petc.cfg").sim
    assert petc.trigger.kind == "periodic-static" and petc.h_steps * petc.dt == pytest.approx(petc.trigger.h)


def test_parse_reports_line_numbers():
    with pytest.raises(ConfigError) as exc:
        parse_text("a = 1\nnot a pair\nb = [1, 2\nc = 1\nc = 2\n", "x.cfg")
    probs = exc.value.problems
    assert any(p.startswith("x.cfg:2:") for p in probs)
    assert any(p.startswith("x.cfg:3:") for p in probs)
    assert any(p.startswith("x.cfg:5:") and "duplicate" in p for p in probs)


def test_sigma_out_of_range(tmp_path, capsys):
    p = write(tmp_path, SHORT.replace("sigma = 0.5", "sigma = 1.2"))
    assert main(["validate", "--scenario", p]) == 2
    assert "sigma" in capsys.readouterr().err


def test_equal_ratios_reported_with_indices(tmp_path, capsys):
    p = write(tmp_path, SHORT.replace("freq_ratios = [1, 7]", "freq_ratios = [3, 3]"))
    assert main(["validate", "--scenario", p]) == 2
    err = capsys.readouterr().err
    assert "w_i = w_j" in err and "(0, 1)" in err


def test_all_problems_reported_together():
    raw = parse_text(SHORT.replace("sigma = 0.5", "sigma = 1.2").replace(
        "freq_ratios = [1, 7]", "freq_ratios = [1, 1]") + "colour = blue\n")
    del raw["theta_hat0"]
    with pytest.raises(ConfigError) as exc:
        build_scenario(raw)
    joined = "\n".join(exc.value.problems)
    for key in ("sigma", "w_i = w_j", "colour", "theta_hat0"):
        assert key in joined


def test_fractional_ratios_accepted():
    sc = build_scenario(parse_text(SHORT.replace("freq_ratios = [1, 7]", 'freq_ratios = ["1/3", "7/3"]')))
    assert sc.sim.dither.omegas[1] == pytest.approx(700.0)


def test_simulate_writes_files_and_summary(tmp_path, capsys):
    p = write(tmp_path, SHORT)
    assert main(["simulate", "--scenario", p, "--out-dir", str(tmp_path)]) == 0
    out = kv(capsys.readouterr().out)
    assert int(out["event_count"]) > 0
    assert float(out["min_interval"]) > 0
    traj = (tmp_path / "short_full_static_trajectory.csv").read_text().splitlines()
    assert traj[0].startswith("t,theta_hat[0],theta_hat[1],theta[0]")
    events = (tmp_path / "short_full_static_events.csv").read_text().splitlines()
    assert events[0] == "k,t_k,interval,xi_at_fire,upsilon_at_fire"
    assert len(events) == int(out["event_count"]) + 1


def test_simulate_duration_zero(tmp_path, capsys):
    p = write(tmp_path, SHORT.replace("duration = 1.0", "duration = 0"))
    assert main(["simulate", "--scenario", p, "--out-dir", str(tmp_path)]) == 0
    rows = (tmp_path / "short_full_static_trajectory.csv").read_text().splitlines()
    assert len(rows) == 2


def test_simulate_dynamic_fewer_events(tmp_path, capsys):
    p = write(tmp_path, SHORT.replace("duration = 1.0", "duration = 5.0"))
    main(["simulate", "--scenario", p, "--out-dir", str(tmp_path)])
    n_static = int(kv(capsys.readouterr().out)["event_count"])
    main(["simulate", "--scenario", p, "--out-dir", str(tmp_path), "--trigger", "dynamic"])
    n_dyn = int(kv(capsys.readouterr().out)["event_count"])
    assert n_dyn < n_static


def test_simulate_average_runs_theory_checks(tmp_path, capsys):
    p = write(tmp_path, SHORT.replace("duration = 1.0", "duration = 10.0") + "decimation = 1\n")
    assert main(["simulate", "--scenario", p, "--out-dir", str(tmp_path), "--mode", "average"]) == 0
    out = kv(capsys.readouterr().out)
    assert out["check.g_av_envelope"] == "pass"
    assert out["check.lyapunov_decay"] == "pass"
    assert out["check.dwell_time"] == "pass"


def test_simulate_divergence_exit_code(tmp_path, capsys):
    # the published 0.1 rad/s dither is far too slow for this gain and the loop blows up
    p = write(tmp_path, SHORT.replace("base_freq = 300", "base_freq = 0.1")
              .replace("duration = 1.0", "duration = 10.0").replace("trigger = static", "trigger = continuous"))
    code = main(["simulate", "--scenario", p, "--out-dir", str(tmp_path)])
    out = kv(capsys.readouterr().out)
    assert code == 3 and out["status"] == "diverged"
    assert float(out["diverged_at"]) > 0


def test_certify_reference(capsys):
    assert main(["certify", "--scenario", "paper_sec7_static.cfg"]) == 0
    out = kv(capsys.readouterr().out)
    for k in ("alpha", "beta", "m", "M_theta", "M_y", "tau_star"):
        assert float(out[k]) > 0
    assert float(out["tau_star"]) == pytest.approx(0.014488699292800207, rel=1e-8)
    assert out["dwell_case"] == "static"
    assert float(out["beta_tight"]) == pytest.approx(1.08462, abs=1e-5)
    main(["certify", "--scenario", "paper_sec7_dynamic.cfg"])
    assert kv(capsys.readouterr().out)["dwell_case"] == "iii"


def test_certify_non_hurwitz(tmp_path, capsys):
    p = write(tmp_path, SHORT.replace("[[-0.06, 0], [0, -0.20]]", "[[1, 0], [0, 1]]"))
    assert main(["certify", "--scenario", p]) != 0
    assert "Hurwitz" in capsys.readouterr().err


def test_certify_scalar_case(tmp_path, capsys):
    # H* = -2, K = 1, Q = 3: P = 3/4, tight beta = 2 |A P| = 3
    text = """
hessian = [[-2]]
optimizer = [0]
extremum = 0
gain = [[1]]
amplitudes = [0.1]
freq_ratios = [1]
base_freq = 10
trigger = static
sigma = 0.5
alpha = 3
beta = 3
theta_hat0 = [1]
duration = 0
lyapunov_q = [[3]]
"""
    p = write(tmp_path, text)
    assert main(["certify", "--scenario", p]) == 0
    out = kv(capsys.readouterr().out)
    assert float(out["P[0][0]"]) == pytest.approx(3 / 4)
    assert float(out["beta_tight"]) == pytest.approx(3.0)


def test_sweep_writes_stats(tmp_path, capsys):
    text = SHORT.replace("duration = 1.0", "duration = 3.0") + (
        "sweep_sigmas = [0.1, 0.5]\nic_center = [2, 4]\nic_radius = 2\nic_points = 100\nic_stride = 50\n"
        "decimation = 100000\n")
    p = write(tmp_path, text)
    main(["sweep", "--scenario", p, "--out-dir", str(tmp_path)])
    out = kv(capsys.readouterr().out)
    assert out["stats_rows"] == "4" and out["runs"] == "8"
    rows = (tmp_path / "short_stats.csv").read_text().splitlines()
    assert rows[0] == ("sigma,kind,n_intervals,mean,mean_deviation,variance,std_deviation,"
                       "min_interval,tau_star_theory")
    assert len(rows) == 5


def test_sweep_without_campaign_keys(tmp_path, capsys):
    p = write(tmp_path, SHORT)
    assert main(["sweep", "--scenario", p, "--out-dir", str(tmp_path)]) == 2


def test_events_csv_format(tmp_path):
    lg = EventLog()
    lg.append(0.0, 1.5, 0.0)
    lg.append(0.25, -0.5, 0.125)
    path = tmp_path / "e.csv"
    write_events_csv(path, lg)
    assert path.read_text().splitlines() == [
        "k,t_k,interval,xi_at_fire,upsilon_at_fire", "0,0,0,1.5,0", "1,0.25,0.25,-0.5,0.125"]


def test_summary_keys_are_parseable(tmp_path, capsys):
    text = SHORT + "sweep_sigmas = [0.5]\nic_center = [2, 4]\nic_radius = 2\nic_points = 100\nic_stride = 100\n"
    main(["sweep", "--scenario", write(tmp_path, text), "--out-dir", str(tmp_path)])
    for line in capsys.readouterr().out.strip().splitlines():
        assert line.count("=") == 1, line


def test_certify_lines_are_parseable(capsys):
    main(["certify", "--scenario", "paper_sec7_dynamic.cfg"])
    for line in capsys.readouterr().out.strip().splitlines():
        assert line.count("=") == 1, line

import json

import numpy as np
import pytest
from scipy.integrate import quad

from cabletrack.cli import main
from cabletrack.dynamics import SystemState, rk4_vector
from cabletrack.errors import ConfigError
from cabletrack.geometry import E3, axis_angle
from cabletrack.harness import (
    DisturbanceSpec,
    GaussianStream,
    ScenarioConfig,
    build_reference,
    convergence_time,
    inject,
    load_scenario,
    metrics,
    read_runlog,
    reference,
    run,
    sweep_configs,
    write_runlog,
)
from cabletrack.harness.disturbance import ActuatorLag, measure
from cabletrack.harness.sim import SLICES, WIDTH, RunLog

from runs import scenario_run


def test_reference_examples():
    X, L = reference("sim1", 0.0)
    assert np.allclose(X[0], [0, 2, 30], atol=1e-15) and L is None
    _, L = reference("sim3", 0.0)
    assert L[0] == pytest.approx(1.85) and L[1] == pytest.approx(0.075)
    with pytest.raises(ConfigError):
        reference("nope", 0.0)
    with pytest.raises(ConfigError):
        reference("sim1", -1.0)


@pytest.mark.parametrize("selector", ["sim1", "sim2", "figure8"])
def test_reference_derivatives_match_finite_differences(selector):
    ref = build_reference({"selector": selector})
    h = 1e-4
    for t in (0.3, 2.7, 11.0):
        X = ref.payload(t)
        for k in range(1, 6):
            fd = (ref.payload(t + h)[k - 1] - ref.payload(t - h)[k - 1]) / (2 * h)
            assert np.allclose(fd, X[k], rtol=1e-6, atol=1e-6 * max(1.0, np.max(np.abs(X[k]))))


def _log(columns, n):
    data = np.zeros((n, WIDTH))
    data[:, SLICES["t"][0]] = np.arange(n) * 0.01
    for name, value in columns.items():
        i, w = SLICES[name]
        data[:, i:i + w] = np.reshape(value, (n, w)) if np.ndim(value) else value
    return RunLog(data)


def test_metrics_examples():
    n = 3001
    m = metrics(_log({}, n))
    for name in ("e_x", "e_q", "e_L", "e_R"):
        assert m.rmse(name) == 0.0 and m.t_conv(name) == 0.0
    ex = np.zeros((n, 3))
    ex[:, 0] = 0.1
    m = metrics(_log({"e_x": ex}, n))
    assert m.rmse("e_x") == pytest.approx(0.1) and m.mean("e_x") == pytest.approx(0.1)
    assert m.t_conv("e_x") is None
    with pytest.raises(ValueError):
        metrics(_log({}, 0))


def test_convergence_time_needs_full_hold():
    t = np.arange(0, 20.001, 0.01)
    x = np.where(t < 3.0, 1.0, 0.0)
    assert convergence_time(t, x, 0.05) == pytest.approx(3.0)
    x = np.where((t < 3.0) | (t > 12.0), 1.0, 0.0)
    assert convergence_time(t, x, 0.05) is None


def test_impulse_momentum():
    spec = DisturbanceSpec(cases=("impulse",))
    J = [quad(lambda t, i=i: inject("impulse", t, spec)[i], 7.9, 8.4, points=[8.0, 8.25])[0]
         for i in range(3)]
    assert np.allclose(J, [0.79577, 0.15915, -0.31831], atol=5e-6)


def _state():
    q = axis_angle(np.array([0.1, 0.2, 0.0])) @ -E3
    return SystemState(x_L=[1, 2, 3], v_L=[0.1, 0, 0], q=q, omega=np.cross(q, [0.1, 0.2, 0.3]),
                       L=1.5, L_dot=0.1, R=np.eye(3), Omega=[0.01, 0.0, 0.0])


def test_measurement_noise_properties():
    s = _state()
    zero = DisturbanceSpec(noise_x_L=0, noise_v_L=0, noise_L=0, noise_L_dot=0, noise_Omega=0,
                           noise_q_angle=0, cases=("noise",))
    m = measure(s, zero, GaussianStream(1, 1))
    for name in ("x_L", "v_L", "q", "omega", "Omega"):
        assert np.array_equal(getattr(m, name), getattr(s, name))
    assert m.L == s.L and m.L_dot == s.L_dot
    noisy = DisturbanceSpec(noise_q_angle=0.5, cases=("noise",))
    rng = GaussianStream(3, 1)
    for _ in range(200):
        m = measure(s, noisy, rng)
        assert abs(np.linalg.norm(m.q) - 1.0) < 1e-15
        assert abs(m.q @ m.omega) < 1e-12
    assert measure(s, None, rng) is s


def test_gaussian_stream():
    a = GaussianStream(5, 1).normal(200_001)
    b = GaussianStream(5, 1).normal(200_001)
    assert np.array_equal(a, b)
    assert abs(a.mean()) < 0.01 and abs(a.std() - 1) < 0.01
    assert not np.array_equal(a[:10], GaussianStream(5, 2).normal(10))


def test_actuator_lag():
    lag = ActuatorLag(DisturbanceSpec(cases=("lag",)), 1e-3)
    lag(np.zeros(5))
    for _ in range(50):
        out = lag(np.ones(5))
    assert np.allclose(out, 1 - np.exp(-1), atol=1e-12)
    assert np.array_equal(ActuatorLag(None, 1e-3)(np.ones(5)), np.ones(5))


def test_disturbance_spec_validation():
    with pytest.raises(ConfigError):
        DisturbanceSpec(noise_x_L=-1)
    with pytest.raises(ConfigError):
        DisturbanceSpec(cases=("earthquake",))
    with pytest.raises(ConfigError):
        inject("solar", 1.0, DisturbanceSpec())


def test_hover_run_has_zero_error():
    _, log, _ = scenario_run("hover")
    assert log.aborted is None and len(log) == 1001
    for name in ("e_x", "e_v", "e_q", "e_omega", "e_R", "e_Omega"):
        assert np.max(np.abs(log[name])) < 1e-9
    assert np.max(np.abs(log["e_L"])) < 1e-9


def test_noise_only_on_measurement_side():
    cfg = load_scenario("sim4_noise").with_overrides(duration=0.5)
    log = run(cfg)
    clean = run(load_scenario("sim3").with_overrides(duration=0.5))
    assert not np.array_equal(log["f"], clean["f"])
    # each logged state is the plant state integrated from the previous one
    for k in (0, 17, 42):
        y = SystemState.from_vector(np.concatenate([
            log["x_L"][k], log["v_L"][k], log["q"][k], log["omega"][k], [log["L"][k]],
            [log["L_dot"][k]], log["R"][k], log["Omega"][k]])).to_vector()
        for _ in range(10):
            y = rk4_vector(y, 1e-3, log["f"][k], log["tau"][k], log["f_L"][k], cfg.params)
        assert np.array_equal(y[0:3], log["x_L"][k + 1])
    assert np.array_equal(log["e_x"], log["x_L"] - log["x_Ld"])


def test_determinism_and_csv_roundtrip(tmp_path):
    cfg = load_scenario("sim4_unmodeled").with_overrides(duration=0.5)
    paths = []
    for i in range(2):
        log = run(cfg)
        paths.append(tmp_path / f"a{i}.csv")
        write_runlog(log, paths[-1])
    assert paths[0].read_bytes() == paths[1].read_bytes()
    back = read_runlog(paths[0])
    assert np.array_equal(back.data, log.data, equal_nan=True)
    assert back.meta["scenario"] == log.meta["scenario"]
    other = run(cfg.with_overrides(seed=cfg.seed + 1))
    write_runlog(other, tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_bytes() != paths[0].read_bytes()


def test_sim2_initial_payload_derivation(tmp_path):
    cfg = load_scenario("sim2_test1")
    assert np.allclose(cfg.initial_state().x_L, [0.9, 2.1, 6.5])
    log = run(cfg, duration=0.05)
    write_runlog(log, tmp_path / "s.csv")
    text = (tmp_path / "s.csv").read_text()
    assert "# note: payload position derived from the multirotor position" in text


def test_scenario_validation():
    base = load_scenario("hover").to_dict()
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({**base, "extra": 1})
    bad = json.loads(json.dumps(base))
    bad["initial"]["L"] = 1.3  # |e_L| = 0.3 >= iota
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(bad)
    bad = json.loads(json.dumps(base))
    bad["run"]["duration"] = -1
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(bad)
    with pytest.raises(ConfigError):
        load_scenario("does_not_exist")
    assert ScenarioConfig.from_dict(base).to_dict() == base


def test_abort_is_recorded():
    cfg = load_scenario("hover").to_dict()
    cfg["disturbance"] = {"cases": ["impulse"], "impulse_time": 0.1, "impulse_amplitude": [0, 0, -400]}
    log = run(ScenarioConfig.from_dict(cfg), duration=2.0)
    assert log.aborted is not None
    assert log.aborted["error"] == "BarrierViolation"
    assert len(log) == log.aborted["step"]


def test_sweep_configs():
    names = [c.name for c in sweep_configs("sim1")]
    assert names == ["sim1_test1", "sim1_test2", "sim1_test3"]
    ks = [(c.generator.k1, c.generator.k2) for c in sweep_configs("sim1")]
    assert ks == [(0.1, 100), (100, 100), (100, 0.1)]
    sim2 = sweep_configs("sim2", duration=1.0)
    assert len(sim2) == 8 and {c.generator.k9 for c in sim2} == {100, 10, 0.1, 0}
    assert all(c.duration == 1.0 for c in sim2)


def test_cli_run_metrics_certify(tmp_path, capsys):
    out = tmp_path / "hover"
    assert main(["run", "hover", "--out", str(out), "--duration", "1"]) == 0
    assert (out / "runlog.csv").exists() and (out / "summary.json").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["completed"] and summary["certification"]["passed"]
    assert main(["metrics", str(out / "runlog.csv")]) == 0
    assert main(["certify", str(out / "runlog.csv"), "--json", str(tmp_path / "c.json")]) == 0
    assert json.loads((tmp_path / "c.json").read_text())["passed"]


def test_cli_certify_flags_barrier_violation(tmp_path, capsys):
    out = tmp_path / "h"
    main(["run", "hover", "--out", str(out), "--duration", "1"])
    log = read_runlog(out / "runlog.csv")
    i = SLICES["e_L"][0]
    log.data[50:, i] = 0.3
    write_runlog(log, tmp_path / "bad.csv")
    capsys.readouterr()
    assert main(["certify", str(tmp_path / "bad.csv")]) == 2
    err = capsys.readouterr().err
    assert "barrier_L" in err and "t = 0.50 s" in err


def test_cli_config_errors(tmp_path, capsys):
    assert main(["run", "no_such_scenario"]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == 1
    assert main(["certify", str(tmp_path / "missing.csv")]) == 1
    assert main(["frobnicate"]) == 1
    (tmp_path / "x.csv").write_text("hello\n")
    assert main(["metrics", str(tmp_path / "x.csv")]) == 1


def test_cli_run_abort_exit_code(tmp_path):
    cfg = load_scenario("hover").to_dict()
    cfg["disturbance"] = {"cases": ["impulse"], "impulse_time": 0.1, "impulse_amplitude": [0, 0, -400]}
    cfg["run"]["duration"] = 2.0
    path = tmp_path / "kick.json"
    path.write_text(json.dumps(cfg))
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 2


def test_cli_sweep(tmp_path, capsys):
    assert main(["sweep", "sim1", "--out", str(tmp_path), "--duration", "0.3"]) == 0
    for k in (1, 2, 3):
        assert (tmp_path / f"sim1_test{k}.csv").exists()

"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``criterion N: PASS|FAIL`` line (collected again in the
terminal summary) and asserts at the stated tolerance and runtime budget.
"""
import io
import math
import time
from contextlib import redirect_stdout

import numpy as np
import pytest

from balancebot.cli import main
from balancebot.config import DEFAULT_PID_SEARCH, Config
from balancebot.dynamics import (PhysicalParams, RobotState, derivatives, energy, linearize,
                                 pitch_transfer_function, poles, step_rk4, yaw_transfer_function)
from balancebot.harness import compare, settling_time
from balancebot.pid import HARDWARE_REFERENCE, PidGains, run_pid_episode, tune_pid
from balancebot.rl import (PolicyModel, TrainConfig, Transition, a2c_gradients, a2c_update, forward,
                           init_mlp, init_model, load_model, model_bytes, run_rl_episode, save_model,
                           select_action, softmax, train)
from balancebot.sensing import (DEFAULT_OFFSETS, FilterState, ImuConfig, accel_angle, calibrate_offsets,
                                filter_update, synthesize_imu)
from balancebot.simulation import SimConfig

P = PhysicalParams()
QUIET = ImuConfig().noiseless()
GRID = (0.03, -0.03, 0.06, -0.06, 0.09, -0.09)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


# shared expensive artifacts -------------------------------------------------

@pytest.fixture(scope="module")
def tuned():
    with Timer() as clock:
        res = tune_pid(DEFAULT_PID_SEARCH, imu=QUIET)
    return res, clock.elapsed


@pytest.fixture(scope="module")
def trained():
    cfg = Config()
    with Timer() as clock:
        model, log = train(cfg.physical, QUIET, cfg.sim, cfg.rl)
    return model, log, clock.elapsed


# criteria -------------------------------------------------------------------

def test_criterion_1_open_loop_instability(record_criterion):
    with Timer() as clock:
        buf = io.StringIO()
        with redirect_stdout(buf):
            rc = main(["analyze-tf"])
        ps = poles(pitch_transfer_function(P))
    out = buf.getvalue().splitlines()
    rhp = int(next(line for line in out if line.startswith("pitch rhp_poles")).split()[-1])
    residual = float(np.max(ps.residuals))
    ok = rc == 0 and out[-1] == "UNSTABLE" and rhp >= 1 and residual < 1e-8 and clock.elapsed < 1.0
    record_criterion(1, ok, f"rhp_poles={rhp} max_residual={residual:.2e} time={clock.elapsed:.3f}s")
    assert ok


def _fd_jacobian(h=1e-6):
    J = np.zeros((4, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        J[:, j] = (np.array(derivatives(RobotState.from_array(e), 0.0, P))
                   - np.array(derivatives(RobotState.from_array(-e), 0.0, P))) / (2 * h)
    return J


def test_criterion_2_model_consistency(record_criterion):
    with Timer() as clock:
        A, _ = linearize(P)
        tf_poles = np.sort_complex(poles(yaw_transfer_function(P)).poles)
        eig = np.sort_complex(np.linalg.eigvals(A))
        pole_err = float(np.max(np.abs(tf_poles - eig)))
        jac_err = float(np.max(np.abs(_fd_jacobian() - A)))

        s0 = RobotState(x_dot=0.2, phi=0.3, phi_dot=-0.5)

        def ref(dt):
            s = s0
            for _ in range(int(round(dt / 1e-6))):
                s = step_rk4(s, 0.5, P, 1e-6)
            return s.as_array()

        errs = [np.linalg.norm(step_rk4(s0, 0.5, P, dt).as_array() - ref(dt)) for dt in (0.02, 0.01)]
        order = errs[0] / errs[1]
    ok = pole_err < 1e-8 and jac_err < 1e-6 and order >= 14 and clock.elapsed < 10
    record_criterion(2, ok, f"pole_err={pole_err:.1e} jacobian_err={jac_err:.1e} rk4_factor={order:.2f} "
                            f"time={clock.elapsed:.2f}s")
    assert ok


def test_criterion_3_energy_conservation(record_criterion):
    p = P.with_(f=0.0)
    with Timer() as clock:
        s = RobotState(x_dot=0.1, phi=0.3, phi_dot=0.0)
        e0 = energy(s, p)
        worst = 0.0
        for _ in range(10_000):
            s = step_rk4(s, 0.0, p, 1e-3)
            worst = max(worst, abs(energy(s, p) - e0) / abs(e0))
    ok = worst < 1e-5 and clock.elapsed < 5
    record_criterion(3, ok, f"max_relative_drift={worst:.2e} time={clock.elapsed:.2f}s")
    assert ok


def test_criterion_4_sensor_round_trip(record_criterion):
    with Timer() as clock:
        exact_cfg = ImuConfig(noise_std_accel=0, noise_std_gyro=0)
        rest = [synthesize_imu(RobotState(t=i * 0.002), 0.0, exact_cfg) for i in range(200)]
        exact_err = float(np.max(np.abs(np.array(calibrate_offsets(rest, exact_cfg)) - DEFAULT_OFFSETS)))

        sigma, n = 30.0, 10_000
        noisy_cfg = ImuConfig(noise_std_accel=sigma, noise_std_gyro=sigma, seed=11)
        rng = noisy_cfg.make_rng()
        rest = [synthesize_imu(RobotState(t=i * 0.002), 0.0, noisy_cfg, rng) for i in range(n)]
        noisy_err = float(np.max(np.abs(np.array(calibrate_offsets(rest, noisy_cfg)) - DEFAULT_OFFSETS)))
        bound = 3 * sigma / math.sqrt(n)

        sample = synthesize_imu(RobotState(phi=0.2, phi_dot=1.5), 0.0, exact_cfg)
        dt = 0.002
        a0 = filter_update(FilterState(phi_hat=-0.3, alpha=0.0), sample, exact_cfg, dt).phi_hat
        a1 = filter_update(FilterState(phi_hat=-0.3, alpha=1.0), sample, exact_cfg, dt).phi_hat
        gyro = -0.3 + (sample.gx - exact_cfg.offsets[3]) / exact_cfg.gyro_scale * dt
        limits_exact = a0 == accel_angle(sample, exact_cfg) and a1 == gyro
    ok = exact_err < 1e-9 and noisy_err < bound and limits_exact and clock.elapsed < 5
    record_criterion(4, ok, f"exact_err={exact_err:.1e} noisy_err={noisy_err:.3f} (bound {bound:.3f}) "
                            f"alpha_limits_exact={limits_exact} time={clock.elapsed:.2f}s")
    assert ok


def test_criterion_5_pid_stabilization(tuned, record_criterion):
    res, tune_time = tuned
    with Timer() as clock:
        phis = np.linspace(-0.09, 0.09, 19)
        runs = [run_pid_episode(RobotState(phi=float(p)), res.best, imu=QUIET) for p in phis]
    falls = sum(tr.termination != "horizon" for tr in runs)
    unsettled = sum(settling_time(tr) is None for tr in runs)
    total = tune_time + clock.elapsed
    ok = (falls == 0 and unsettled == 0 and total < 60
          and HARDWARE_REFERENCE.as_tuple() == (1970.0, 21950.0, 19.5))
    record_criterion(5, ok, f"gains={res.best.as_tuple()} falls={falls}/19 unsettled={unsettled}/19 "
                            f"hardware_reference={HARDWARE_REFERENCE.as_tuple()} time={total:.1f}s")
    assert ok


def _numeric(fn, v, h=1e-5):
    g = np.zeros_like(v)
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = h
        g[i] = (fn(v + e) - fn(v - e)) / (2 * h)
    return g


def _gradient_check(seed):
    rng = np.random.default_rng(seed)
    obs_dim, n_actions = int(rng.integers(2, 6)), int(rng.integers(2, 5))
    hidden = tuple(int(h) for h in rng.integers(2, 7, size=rng.integers(1, 3)))
    model = PolicyModel(init_mlp((obs_dim, *hidden, n_actions), rng), init_mlp((obs_dim, *hidden, 1), rng),
                        obs_dim, n_actions, action_levels=tuple(np.linspace(-1, 1, n_actions)))
    tr = Transition(rng.normal(size=obs_dim), int(rng.integers(n_actions)), float(rng.normal()),
                    rng.normal(size=obs_dim), bool(rng.integers(2)))
    cfg = TrainConfig(gamma=0.95, entropy_coef=0.05)
    (agw, agb), (cgw, cgb), _ = a2c_gradients(model, tr, cfg)
    v_next = 0.0 if tr.done else forward(model.critic, tr.next_obs)[0][0]
    target = tr.reward + cfg.gamma * v_next
    td = target - forward(model.critic, tr.obs)[0][0]

    def actor_loss(v):
        p = softmax(forward(model.actor.with_flat(v), tr.obs)[0])
        return -np.log(p[tr.action]) * td + cfg.entropy_coef * np.sum(p * np.log(p))

    def critic_loss(v):
        return 0.5 * (target - forward(model.critic.with_flat(v), tr.obs)[0][0]) ** 2

    worst = 0.0
    for analytic, fn, net in (((agw, agb), actor_loss, model.actor), ((cgw, cgb), critic_loss, model.critic)):
        a = np.concatenate([x.ravel() for pair in zip(*analytic) for x in pair])
        n = _numeric(fn, net.flat())
        worst = max(worst, float(np.max(np.abs(a - n) / np.maximum(np.abs(n), 1e-4))))
    return worst


def test_criterion_6_a2c_correctness(record_criterion):
    with Timer() as clock:
        worst = max(_gradient_check(s) for s in range(24))
        rng = np.random.default_rng(0)
        model = init_model(rng, hidden=(16,), n_actions=2, action_levels=(-1.0, 1.0))
        cfg = TrainConfig(lr_actor=1e-2, lr_critic=1e-2, entropy_coef=0.0)
        obs = np.ones(5)
        for _ in range(2000):
            a, _, _ = select_action(model, obs, rng)
            model, _ = a2c_update(model, Transition(obs, a, 1.0 if a == 0 else 0.0, obs, True), cfg)
        p0 = float(softmax(forward(model.actor, obs)[0])[0])
    ok = worst <= 1e-6 and p0 > 0.95 and clock.elapsed < 30
    record_criterion(6, ok, f"nets=24 worst_relative_grad_err={worst:.1e} bandit_p0={p0:.4f} "
                            f"time={clock.elapsed:.1f}s")
    assert ok


def test_criterion_7_desk_scale_training(trained, record_criterion):
    model, log, elapsed = trained
    cfg = Config().rl
    ratio = log.recent_ratio(100)
    ok = cfg.horizon == 300 and len(log.rewards) <= 2000 and ratio >= 0.9 and elapsed < 15 * 60
    record_criterion(7, ok, f"episodes={len(log.rewards)} horizon={cfg.horizon} last100_ratio={ratio:.4f} "
                            f"time={elapsed:.0f}s")
    assert ok


def test_criterion_8_comparative_ordering(tuned, trained, tmp_path, record_criterion):
    res, _ = tuned
    model = trained[0]
    with Timer() as clock:
        report = compare(res.best, model, GRID, imu=QUIET, sim=SimConfig(), out_dir=tmp_path)
    settle_ok = report.rl.settling_time < report.pid.settling_time
    dist_ok = report.rl.distance < report.pid.distance
    ok = settle_ok and dist_ok and clock.elapsed < 120
    record_criterion(8, ok, f"settling rl={report.rl.settling_time:.4f}s pid={report.pid.settling_time:.4f}s; "
                            f"distance rl={report.rl.distance:.4f}m pid={report.pid.distance:.4f}m; "
                            f"rl unsettled={report.rl.unsettled} falls={report.rl.falls}; "
                            f"time={clock.elapsed:.1f}s")
    assert ok


def test_criterion_9_determinism_and_persistence(trained, tmp_path, record_criterion):
    model = trained[0]
    with Timer() as clock:
        small = TrainConfig(n_episodes=5, horizon=50, hidden=(16,), seed=9)
        a, log_a = train(imu=ImuConfig(), cfg=small)
        b, log_b = train(imu=ImuConfig(), cfg=small)
        same_training = model_bytes(a) == model_bytes(b) and log_a.rewards == log_b.rewards

        for name in ("a", "b"):
            traj = run_pid_episode(RobotState(phi=0.05), PidGains(10.0, 10.0, 0.3),
                                   sim=SimConfig(horizon=2.0), seed=4)
            traj.write(tmp_path / f"{name}.txt")
        same_files = (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()

        save_model(model, tmp_path / "model.bin")
        loaded = load_model(tmp_path / "model.bin")
        before = run_rl_episode(model, RobotState(phi=0.05), imu=ImuConfig(), sim=SimConfig(horizon=3.0), seed=2)
        after = run_rl_episode(loaded, RobotState(phi=0.05), imu=ImuConfig(), sim=SimConfig(horizon=3.0), seed=2)
        same_behavior = loaded == model and np.array_equal(before.columns(), after.columns())
    ok = same_training and same_files and same_behavior and clock.elapsed < 10
    record_criterion(9, ok, f"training_identical={same_training} files_identical={same_files} "
                            f"round_trip_identical={same_behavior} time={clock.elapsed:.2f}s")
    assert ok

"""
Balancing with PID
==================

Grid-search PID gains in simulation, then balance from a few initial tilts.
The hardware gains of the physical robot are kept for reference only; the
simulated plant is not the physical one.
"""

from balancebot.config import DEFAULT_PID_SEARCH
from balancebot.dynamics import RobotState
from balancebot.harness import settle_distance, settling_time
from balancebot.pid import HARDWARE_REFERENCE, run_pid_episode, tune_pid
from balancebot.sensing import ImuConfig

quiet = ImuConfig().noiseless()
result = tune_pid(DEFAULT_PID_SEARCH, imu=quiet)
print("hardware reference gains:", HARDWARE_REFERENCE.as_tuple())
print("tuned gains:             ", result.best.as_tuple())

for phi0 in (0.03, 0.06, 0.09):
    for imu, label in ((quiet, "clean"), (ImuConfig(), "noisy")):
        traj = run_pid_episode(RobotState(phi=phi0), result.best, imu=imu, seed=0)
        ts = settling_time(traj)
        ts_txt = "unsettled" if ts is None else f"{ts:.3f} s"
        d = settle_distance(traj)
        d_txt = "-" if d is None else f"{d:.4f} m"
        print(f"phi0={phi0:.2f} {label}: {traj.termination}, settles {ts_txt}, "
              f"|x| at settle {d_txt}, |x| at 10 s {abs(traj.x[-1]):.2f} m")

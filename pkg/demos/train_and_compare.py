"""
Learning to balance, and racing the PID
=======================================

Train the actor-critic agent at desk scale (a few minutes on one core),
then run both controllers from the same initial tilts and compare settling
time and cart displacement. Pass ``--quick`` for a short smoke run.
"""

import sys
import tempfile

from balancebot.config import DEFAULT_PID_SEARCH, Config
from balancebot.harness import compare
from balancebot.pid import tune_pid
from balancebot.rl import train
from balancebot.sensing import ImuConfig

cfg = Config()
quiet = ImuConfig().noiseless()
rl_cfg = cfg.rl
if "--quick" in sys.argv:
    from dataclasses import replace
    rl_cfg = replace(rl_cfg, n_episodes=50)


def progress(ep, log):
    if (ep + 1) % 250 == 0:
        print(f"episode {ep + 1}: mean reward of last 100 = {log.recent_ratio():.3f} of maximum")


model, log = train(cfg.physical, quiet, cfg.sim, rl_cfg, progress=progress)
gains = tune_pid(DEFAULT_PID_SEARCH, imu=quiet).best

out = tempfile.mkdtemp(prefix="compare_")
report = compare(gains, model, cfg.harness.grid, cfg.physical, quiet, cfg.sim, out_dir=out)
print(f"{'':16s}{'pid':>10s}{'rl':>10s}")
for key in ("settling_time", "distance", "max_abs_phi", "falls"):
    print(f"{key:16s}{getattr(report.pid, key):10.4f}{getattr(report.rl, key):10.4f}")
print("trajectories and report written to", out)

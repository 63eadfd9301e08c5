"""
From raw IMU counts to a pitch estimate
=======================================

Synthesize MPU-6050 style readings with the factory offsets, recover the
offsets from a resting log, and run the complementary filter on a robot
that tips over.
"""

import numpy as np

from balancebot.dynamics import PhysicalParams, RobotState, derivatives, step_rk4
from balancebot.sensing import FilterState, ImuConfig, accel_angle, calibrate_offsets, filter_update, synthesize_imu

cfg = ImuConfig(seed=1)
rng = cfg.make_rng()

# robot held still for 2 s at 500 Hz
rest = [synthesize_imu(RobotState(t=k * 0.002), 0.0, cfg, rng) for k in range(1000)]
print("configured offsets:", cfg.offsets)
print("recovered offsets: ", tuple(round(v, 1) for v in calibrate_offsets(rest, cfg)))

# accelerometer-only vs filtered estimate while falling
params = PhysicalParams()
state, fs = RobotState(phi=0.02), FilterState(alpha=0.98)
raw_err, filt_err = [], []
for _ in range(120):
    accel = derivatives(state, 0.0, params)[1]
    sample = synthesize_imu(state, accel, cfg, rng, params.g)
    fs = filter_update(fs, sample, cfg, 0.002)
    raw_err.append(accel_angle(sample, cfg) - state.phi)
    filt_err.append(fs.phi_hat - state.phi)
    state = step_rk4(state, 0.0, params, 0.002)

print(f"final pitch {state.phi:.3f} rad")
print(f"rms error, accelerometer only: {np.sqrt(np.mean(np.square(raw_err))):.4f} rad")
print(f"rms error, filtered:           {np.sqrt(np.mean(np.square(filt_err))):.4f} rad")

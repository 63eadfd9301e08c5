"""
Why the robot needs a controller
================================

Linearize the cart-pendulum about upright, read off the pitch transfer
function and its poles, then let the nonlinear model fall with no force.
"""

import numpy as np

from balancebot.dynamics import PhysicalParams, RobotState, pitch_transfer_function, poles, step_rk4

params = PhysicalParams()
print(f"q = {params.q:.3e}  (determinant of the mass matrix at upright)")

tf = pitch_transfer_function(params)
print("pitch numerator  ", np.round(tf.numerator, 4))
print("pitch denominator", np.round(tf.denominator, 4))

ps = poles(tf)
for p in ps.poles:
    print(f"  pole {p.real:+8.4f}{p.imag:+.4f}j")
# one positive real pole: the upright position is unstable
print("right-half-plane poles:", ps.unstable_count)

# open loop from 0.05 rad; the small-angle growth rate is the unstable pole
s, dt = RobotState(phi=0.05), 0.002
for k in range(1, 151):
    s = step_rk4(s, 0.0, params, dt)
    if k % 25 == 0:
        print(f"t={s.t:5.3f}s  phi={s.phi:+.4f} rad  x={s.x:+.4f} m")

"""Simulation laboratory for a two-wheeled self-balancing robot.

Cart-pendulum dynamics, an IMU model with a complementary filter, a PID
balancer and a from-scratch advantage actor-critic agent, plus a harness
comparing the two controllers.
"""
from .dynamics import PhysicalParams, RobotState
from .pid import PidGains
from .sensing import ImuConfig
from .simulation import SimConfig, Trajectory

__version__ = "0.1.0"

__all__ = ["PhysicalParams", "RobotState", "PidGains", "ImuConfig", "SimConfig", "Trajectory", "__version__"]

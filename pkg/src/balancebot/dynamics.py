"""Cart-pendulum model of the two-wheeled robot.

The pitch angle ``phi`` is measured from the upward vertical. Positive
``phi`` leans the body toward ``-x``, so a positive wheel force produces a
positive pitch response; with this choice the linearized plant reproduces
the textbook pitch/position transfer functions term by term, including the
sign of their numerators.

Nonlinear equations of motion (``M = m1``, ``m = m2``)::

    (M + m) x'' + f x' - m l cos(phi) phi'' + m l phi'^2 sin(phi) = F
    (I2 + m l^2) phi'' - m g l sin(phi) = m l cos(phi) x''

All functions here are pure and work on plain floats, which keeps the inner
simulation loop fast.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DegenerateParametersError, IntegrationDivergedError, NumericalFailureError

TF_FORMS = ("derived", "body_mass")


@dataclass(frozen=True)
class PhysicalParams:
    """Physical parameters in SI units.

    Defaults come from the robot's parts list (135 g body, 60 g pendulum,
    5 cm wheels, 20 cm track, static friction 1.15). Values the parts list
    does not give (``l``, ``I2``, ``f``, ``force_limit``) are explicit
    choices; ``I2=None`` selects the thin-rod value ``m2 * l**2 / 3``.

    ``tf_form`` picks the gravity coefficient of the pitch/yaw transfer
    functions: ``"derived"`` uses ``(m1 + m2) m2 g l / q`` as obtained from the
    equations of motion, ``"body_mass"`` substitutes the body mass, ``(m1 + m2) m1 g l / q``.
    It only affects :func:`pitch_transfer_function` and
    :func:`yaw_transfer_function`.
    """

    m1: float = 0.135
    m2: float = 0.060
    l: float = 0.10
    I2: float | None = None
    f: float = 0.1
    g: float = 9.81
    wheel_diameter: float = 0.05
    wheel_base: float = 0.20
    mu_s: float = 1.15
    force_limit: float = 5.0
    tf_form: str = "derived"

    def __post_init__(self):
        if self.I2 is None:
            object.__setattr__(self, "I2", self.m2 * self.l**2 / 3.0)
        for name in ("m1", "m2", "l", "I2", "f", "g", "wheel_diameter", "wheel_base", "mu_s", "force_limit"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError(f"{name} must be a finite number, got {value!r}")
        if self.m1 <= 0 or self.m2 <= 0 or self.l <= 0 or self.g <= 0 or self.force_limit <= 0:
            raise ConfigError("m1, m2, l, g and force_limit must be positive")
        if self.I2 < 0 or self.f < 0:
            raise ConfigError("I2 and f must be non-negative")
        if self.tf_form not in TF_FORMS:
            raise ConfigError(f"tf_form must be one of {TF_FORMS}, got {self.tf_form!r}")
        if self.q <= 0:
            raise ConfigError(f"q = (m1+m2)(I2+m2 l^2) - (m2 l)^2 must be positive, got {self.q}")

    @property
    def total_mass(self) -> float:
        return self.m1 + self.m2

    @property
    def pivot_inertia(self) -> float:
        """Pendulum inertia about the wheel axle, ``I2 + m2 l^2``."""
        return self.I2 + self.m2 * self.l**2

    @property
    def q(self) -> float:
        return self.total_mass * self.pivot_inertia - (self.m2 * self.l) ** 2

    def with_(self, **changes) -> "PhysicalParams":
        """Copy with some fields replaced (``I2`` is recomputed only if passed as None)."""
        return replace(self, **changes)


@dataclass(frozen=True)
class RobotState:
    """Cart position/velocity and pitch angle/rate at time ``t``.

    ``phi`` is never wrapped so a falling robot keeps growing.
    """

    x: float = 0.0
    x_dot: float = 0.0
    phi: float = 0.0
    phi_dot: float = 0.0
    t: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.x_dot, self.phi, self.phi_dot])

    @classmethod
    def from_array(cls, values, t: float = 0.0) -> "RobotState":
        x, x_dot, phi, phi_dot = (float(v) for v in values)
        return cls(x, x_dot, phi, phi_dot, t)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.x, self.x_dot, self.phi, self.phi_dot, self.t))


@dataclass(frozen=True)
class TransferFunction:
    """Rational function in ``s`` with coefficients in descending degree."""

    numerator: np.ndarray
    denominator: np.ndarray

    def __post_init__(self):
        num = np.atleast_1d(np.asarray(self.numerator, dtype=float))
        den = np.atleast_1d(np.asarray(self.denominator, dtype=float))
        if den.size == 0 or den[0] == 0:
            raise ValueError("denominator must have a nonzero leading coefficient")
        object.__setattr__(self, "numerator", num / den[0])
        object.__setattr__(self, "denominator", den / den[0])

    def __call__(self, s):
        return np.polyval(self.numerator, s) / np.polyval(self.denominator, s)


@dataclass(frozen=True)
class PoleSet:
    poles: np.ndarray
    unstable_count: int
    marginal_count: int = 0
    residuals: np.ndarray = field(default=None, repr=False)


def _accelerations(x_dot, phi, phi_dot, force, p: PhysicalParams):
    s, c = math.sin(phi), math.cos(phi)
    ml = p.m2 * p.l
    # mass matrix [[M+m, -ml c], [-ml c, J]] acting on (x'', phi'')
    a11 = p.total_mass
    a22 = p.pivot_inertia
    a12 = -ml * c
    rhs1 = force - p.f * x_dot - ml * phi_dot * phi_dot * s
    rhs2 = ml * p.g * s
    det = a11 * a22 - a12 * a12
    if det < 1e-12 * a11 * a22:
        raise DegenerateParametersError(f"singular mass matrix (det={det:g})")
    x_ddot = (a22 * rhs1 - a12 * rhs2) / det
    phi_ddot = (a11 * rhs2 - a12 * rhs1) / det
    return x_ddot, phi_ddot


def derivatives(state: RobotState, force: float, params: PhysicalParams):
    """Time derivative ``(x_dot, x_ddot, phi_dot, phi_ddot)`` of ``state``.

    The accelerations solve the 2x2 system formed by the two equations of
    motion at the given state; ``force`` is expected to be clamped already.
    """
    x_ddot, phi_ddot = _accelerations(state.x_dot, state.phi, state.phi_dot, force, params)
    return state.x_dot, x_ddot, state.phi_dot, phi_ddot


def step_rk4(state: RobotState, force: float, params: PhysicalParams, dt: float) -> RobotState:
    """Advance one classical RK4 step with the force held over the step."""
    if not 0.0 < dt <= 0.05:
        raise ValueError(f"dt must be in (0, 0.05], got {dt}")
    lim = params.force_limit
    force = min(max(force, -lim), lim)
    x, v, phi, w = state.x, state.x_dot, state.phi, state.phi_dot
    acc = _accelerations

    a1, b1 = acc(v, phi, w, force, params)
    h = 0.5 * dt
    v2, w2 = v + h * a1, w + h * b1
    a2, b2 = acc(v2, phi + h * w, w2, force, params)
    v3, w3 = v + h * a2, w + h * b2
    a3, b3 = acc(v3, phi + h * w2, w3, force, params)
    v4, w4 = v + dt * a3, w + dt * b3
    a4, b4 = acc(v4, phi + dt * w3, w4, force, params)

    k = dt / 6.0
    new = RobotState(
        x + k * (v + 2.0 * v2 + 2.0 * v3 + v4),
        v + k * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
        phi + k * (w + 2.0 * w2 + 2.0 * w3 + w4),
        w + k * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
        state.t + dt,
    )
    if not new.is_finite():
        raise IntegrationDivergedError(f"non-finite state at t={new.t:.6g}: {new}", state=new)
    return new


def energy(state: RobotState, params: PhysicalParams) -> float:
    """Total mechanical energy (kinetic + gravitational) of the cart-pendulum."""
    p = params
    c = math.cos(state.phi)
    kinetic = (
        0.5 * p.total_mass * state.x_dot**2
        - p.m2 * p.l * c * state.x_dot * state.phi_dot
        + 0.5 * p.pivot_inertia * state.phi_dot**2
    )
    return kinetic + p.m2 * p.g * p.l * c


def linearize(params: PhysicalParams):
    """State-space ``(A, B)`` about the upright equilibrium with zero force.

    State order is ``(x, x_dot, phi, phi_dot)``.
    """
    p = params
    q, J, ml = p.q, p.pivot_inertia, p.m2 * p.l
    A = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [0.0, -p.f * J / q, ml * ml * p.g / q, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, -ml * p.f / q, p.total_mass * ml * p.g / q, 0.0],
    ])
    B = np.array([[0.0], [J / q], [0.0], [ml / q]])
    return A, B


def _pitch_denominator(p: PhysicalParams) -> np.ndarray:
    q, J = p.q, p.pivot_inertia
    gravity_mass = p.m2 if p.tf_form == "derived" else p.m1
    return np.array([
        1.0,
        p.f * J / q,
        -p.total_mass * gravity_mass * p.g * p.l / q,
        -p.f * p.m2 * p.g * p.l / q,
    ])


def pitch_transfer_function(params: PhysicalParams) -> TransferFunction:
    """Pitch response to wheel force, ``(m2 l / q) s / (s^3 + ...)``."""
    p = params
    return TransferFunction(np.array([p.m2 * p.l / p.q, 0.0]), _pitch_denominator(p))


def yaw_transfer_function(params: PhysicalParams) -> TransferFunction:
    """Horizontal position response to wheel force (degree 2 over degree 4)."""
    p = params
    num = np.array([p.pivot_inertia, 0.0, -p.g * p.m2 * p.l]) / p.q
    den = np.append(_pitch_denominator(p), 0.0)
    return TransferFunction(num, den)


def companion_matrix(coeffs) -> np.ndarray:
    """Companion matrix of a monic polynomial given in descending degree."""
    c = np.asarray(coeffs, dtype=float)
    c = c / c[0]
    n = c.size - 1
    C = np.zeros((n, n))
    C[0, :] = -c[1:]
    if n > 1:
        C[1:, :-1] = np.eye(n - 1)
    return C


def poles(tf: TransferFunction, tol: float = 1e-8, max_iter: int = 50, marginal_tol: float = 1e-10) -> PoleSet:
    """Roots of the denominator of ``tf``.

    Eigenvalues of the companion matrix give the initial roots; each is then
    polished with Newton iterations. Poles whose real part is within
    ``marginal_tol`` of zero count as marginal, not unstable.
    """
    den = np.trim_zeros(np.asarray(tf.denominator, dtype=float), "f")
    if den.size < 2:
        raise ValueError("denominator degree must be at least 1")
    roots = np.linalg.eigvals(companion_matrix(den)).astype(complex)
    dden = np.polyder(den)
    scale = np.abs(den).max()
    for i, r in enumerate(roots):
        for _ in range(max_iter):
            val = np.polyval(den, r)
            if abs(val) <= 1e-15 * scale * max(1.0, abs(r)) ** (den.size - 1):
                break
            d = np.polyval(dden, r)
            if d == 0:
                break
            step = val / d
            r = r - step
            if abs(step) <= 1e-16 * max(1.0, abs(r)):
                break
        roots[i] = r
    roots = np.where(np.abs(roots.imag) < 1e-14 * np.maximum(1.0, np.abs(roots)), roots.real + 0j, roots)
    roots = roots[np.lexsort((roots.imag, -roots.real))]
    residuals = np.abs(np.polyval(den, roots)) / scale
    if np.any(residuals >= tol):
        raise NumericalFailureError(f"pole residuals too large: {residuals.max():.3g}")
    marginal = np.abs(roots.real) <= marginal_tol
    unstable = (roots.real > 0) & ~marginal
    return PoleSet(roots, int(unstable.sum()), int(marginal.sum()), residuals)

"""Lateral deviation of a rigidly attached tool point and its kinematics.

The vehicle's rear-axle midpoint O is described in the path's Frenet frame by
``(s, y, theta_tilde)``.  A tool point T sits at ``(ts, ty)`` in the robot
frame (``ts`` forward, ``ty`` left).  The path is locally approximated by its
osculating circle of signed curvature ``c`` (positive for left turns), and
the tool deviation is measured parallel to ``y``.

Sign conventions: ``y`` is positive to the left of the path tangent,
``theta_tilde = vehicle heading - path heading``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

from .errors import AttitudeOutOfRange, InfeasibleOffset, OsculatingCenterSingularity

C_EPS = 1e-9
EPS_MARGIN = 1e-6
ALPHA_TOL = 1e-9
_ASIN_CLAMP = 1.0 - 1e-12


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi], leaving in-range values bit-identical."""
    if -math.pi < angle <= math.pi:
        return angle
    return math.pi - ((math.pi - angle) % (2.0 * math.pi))


@dataclass(frozen=True)
class ToolOffset:
    """Rigid offset of the tool point T relative to O, in the robot frame."""

    ts: float
    ty: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.ts) and math.isfinite(self.ty)):
            raise ValueError(f"tool offset must be finite, got ({self.ts}, {self.ty})")

    @cached_property
    def norm(self) -> float:
        return math.hypot(self.ts, self.ty)


@dataclass(frozen=True)
class FrenetState:
    """Curvilinear abscissa, lateral deviation and angular deviation of O."""

    s: float
    y: float
    theta_tilde: float


@dataclass(frozen=True)
class OffsetDeviation:
    y_T: float
    e: float
    xi: float
    de_dtheta: float


@dataclass(frozen=True)
class Feasibility:
    """Outcome of the offset-vs-curvature-radius check.

    ``margin`` is ``|1/c| - norm`` (``inf`` on a straight path); the result is
    truthy when feasible.
    """

    feasible: bool
    margin: float

    def __bool__(self) -> bool:
        return self.feasible


def feasibility(offset: ToolOffset, curvature: float) -> Feasibility:
    if curvature == 0.0:
        return Feasibility(True, math.inf)
    margin = 1.0 / abs(curvature) - offset.norm
    return Feasibility(margin > 0.0, margin)


def require_feasible(offset: ToolOffset, curvature: float, eps_margin: float = EPS_MARGIN) -> None:
    check = feasibility(offset, curvature)
    if check.margin <= eps_margin:
        radius = math.inf if curvature == 0.0 else 1.0 / abs(curvature)
        raise InfeasibleOffset(
            f"offset norm {offset.norm:.2f} m >= curvature radius {radius:.2f} m: hypothesis H5"
        )


def sag(curvature: float, chord: float, c_eps: float = C_EPS) -> tuple[float, float]:
    """Return ``(e, xi)``: the lateral gap of the osculating circle at a chord offset.

    ``xi = asin(c * chord)`` and ``e = -(1 - cos xi) / c``.  Below ``c_eps`` the
    second-order series ``-c * chord**2 / 2`` is used instead.
    """
    arg = curvature * chord
    if abs(curvature) < c_eps:
        return -0.5 * curvature * chord * chord, math.asin(arg)
    xi = math.asin(min(max(arg, -_ASIN_CLAMP), _ASIN_CLAMP))
    # 1 - cos(xi) = 2 sin^2(xi/2) avoids cancellation at small xi
    half = math.sin(0.5 * xi)
    return -2.0 * half * half / curvature, xi


def offset_deviation(
    state: FrenetState,
    offset: ToolOffset,
    curvature: float,
    eps_margin: float = EPS_MARGIN,
    c_eps: float = C_EPS,
) -> OffsetDeviation:
    """Lateral deviation ``y_T`` of the tool point with its curvature correction.

    Raises :class:`InfeasibleOffset` when the offset does not fit inside the
    local radius of curvature with at least ``eps_margin`` to spare.
    """
    require_feasible(offset, curvature, eps_margin)
    cos_t = math.cos(state.theta_tilde)
    sin_t = math.sin(state.theta_tilde)
    u = offset.ts * cos_t + offset.ty * sin_t
    du = offset.ty * cos_t - offset.ts * sin_t
    e, xi = sag(curvature, u, c_eps)
    if abs(curvature) < c_eps:
        de_dtheta = -curvature * u * du
    else:
        de_dtheta = -curvature * u * du / math.sqrt(max(1.0 - (curvature * u) ** 2, 1e-24))
    y_T = state.y + offset.ts * sin_t + offset.ty * cos_t + e
    return OffsetDeviation(y_T=y_T, e=e, xi=xi, de_dtheta=de_dtheta)


def offset_rate_time(
    state: FrenetState,
    offset: ToolOffset,
    curvature: float,
    v: float,
    theta_dot: float,
    include_de_dtheta: bool = False,
) -> float:
    """Time derivative of ``y_T`` for a given angular-deviation rate.

    With ``include_de_dtheta`` off, the curvature-correction derivative is
    dropped, which is the form fed to the controllers.
    """
    cos_t = math.cos(state.theta_tilde)
    sin_t = math.sin(state.theta_tilde)
    lever = offset.ts * cos_t - offset.ty * sin_t
    if include_de_dtheta:
        lever += offset_deviation(state, offset, curvature).de_dtheta
    return v * sin_t + theta_dot * lever


def check_attitude(theta_tilde: float) -> None:
    if not abs(theta_tilde) < 0.5 * math.pi:
        raise AttitudeOutOfRange(f"|theta_tilde| = {abs(theta_tilde):.4f} rad >= pi/2")


def path_alpha(curvature: float, y: float, tol: float = ALPHA_TOL) -> float:
    """``1 - c*y``; raises when O sits on the osculating circle center."""
    alpha = 1.0 - curvature * y
    if abs(alpha) <= tol:
        raise OsculatingCenterSingularity(
            f"1 - c*y = {alpha:.3e} (y = {y:.6f} m, c = {curvature:.6f} 1/m): O at the osculating center"
        )
    return alpha


def offset_rate_space(
    state: FrenetState,
    offset: ToolOffset,
    curvature: float,
    gamma: float,
    alpha_tol: float = ALPHA_TOL,
) -> float:
    """Derivative of ``y_T`` with respect to the curvilinear abscissa.

    ``gamma`` is the measured angular-deviation rate divided by the speed.
    """
    check_attitude(state.theta_tilde)
    alpha = path_alpha(curvature, state.y, alpha_tol)
    tan_t = math.tan(state.theta_tilde)
    return alpha * (tan_t + gamma * (offset.ts - offset.ty * tan_t))

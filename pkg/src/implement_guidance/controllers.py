"""Steering laws for point-O, desired-deviation and tool-point backstepping control.

All three laws share the same second stage: the steering angle that makes
the angular error ``e_theta = theta_tilde - theta_d`` decay exponentially in
distance at rate ``k_theta``.  They differ in the desired angular deviation
``theta_d`` handed to that stage.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

from .errors import InfeasibleOffset, TurningRadiusSingularity
from .geometry import (
    ALPHA_TOL,
    C_EPS,
    EPS_MARGIN,
    FrenetState,
    ToolOffset,
    check_attitude,
    offset_deviation,
    path_alpha,
    require_feasible,
    sag,
    wrap_angle,
)
from .kinematics import VehicleParams

logger = logging.getLogger(__name__)

TURNING_TOL = 1e-6
GAIN_RATIO_MIN = 3.0
_ORIGIN = ToolOffset(0.0, 0.0)


@dataclass(frozen=True)
class ControllerGains:
    """Lateral (``k_y``) and angular (``k_theta``) convergence gains, in 1/m."""

    k_y: float = 0.21
    k_theta: float = 0.63

    def __post_init__(self) -> None:
        if not (self.k_y > 0 and self.k_theta > 0):
            raise ValueError(f"gains must be positive, got k_y={self.k_y}, k_theta={self.k_theta}")
        if self.ratio_warning:
            logger.warning(
                "k_theta = %.3g is less than %g * k_y = %.3g; the angular loop may not be fast enough",
                self.k_theta,
                GAIN_RATIO_MIN,
                GAIN_RATIO_MIN * self.k_y,
            )

    @property
    def ratio_warning(self) -> bool:
        # small slack so that the nominal 0.63 / 0.21 pair counts as exactly 3
        return self.k_theta < GAIN_RATIO_MIN * self.k_y * (1.0 - 1e-12)


@dataclass(frozen=True)
class Measurements:
    frenet: FrenetState
    curvature: float
    omega_meas: float
    v: float

    def __post_init__(self) -> None:
        if self.v == 0.0:
            raise ValueError("spatial control laws require a non-zero speed")


@dataclass(frozen=True)
class ControlOutput:
    """Steering command and the intermediate values that produced it.

    ``theta_d`` is the desired angular deviation used by the second stage
    (for the desired-deviation law, the one of its inner point-O loop);
    ``y_d`` is zero except for the desired-deviation law.
    """

    delta_cmd: float
    y_T: float
    theta_d: float
    e_theta: float
    y_d: float = 0.0
    delta_unclamped: float = 0.0
    gamma: float = 0.0


def heading_stage(
    theta_tilde: float,
    theta_d: float,
    curvature: float,
    alpha: float,
    gains: ControllerGains,
    params: VehicleParams,
) -> tuple[float, float, float]:
    """Second stage shared by every law: returns ``(e_theta, unclamped, clamped)`` steering."""
    e_theta = wrap_angle(theta_tilde - theta_d)
    raw = math.atan(
        params.wheelbase * (-gains.k_theta * e_theta + curvature) * math.cos(theta_tilde) / alpha
    )
    delta = min(max(raw, -params.delta_max), params.delta_max)
    return e_theta, raw, delta


def backstepping(
    meas: Measurements,
    offset: ToolOffset,
    gains: ControllerGains,
    params: VehicleParams,
    alpha_tol: float = ALPHA_TOL,
    turning_tol: float = TURNING_TOL,
) -> ControlOutput:
    """Two-stage backstepping law regulating the tool point directly.

    Stage one picks the angular deviation that makes ``y_T`` decay with the
    abscissa at rate ``k_y`` (up to the lever-arm term); stage two steers
    toward it.  Variations of the desired angle are not fed forward.
    """
    state = meas.frenet
    c = meas.curvature
    check_attitude(state.theta_tilde)
    alpha = path_alpha(c, state.y, alpha_tol)
    dev = offset_deviation(state, offset, c)
    gamma = meas.omega_meas / meas.v
    den = 1.0 - gamma * offset.ty
    if abs(den) <= turning_tol:
        raise TurningRadiusSingularity(
            f"1 - gamma*T_y = {den:.3e}: turning radius v/omega equals T_y = {offset.ty:.3f} m"
        )
    theta_d = math.atan(-gains.k_y * dev.y_T / alpha / den)
    e_theta, raw, delta = heading_stage(state.theta_tilde, theta_d, c, alpha, gains, params)
    return ControlOutput(delta, dev.y_T, theta_d, e_theta, 0.0, raw, gamma)


def classical_o(
    meas: Measurements,
    gains: ControllerGains,
    params: VehicleParams,
    alpha_tol: float = ALPHA_TOL,
    turning_tol: float = TURNING_TOL,
) -> ControlOutput:
    """Rear-axle (point O) path following: backstepping with a zero offset."""
    return backstepping(meas, _ORIGIN, gains, params, alpha_tol, turning_tol)


def desired_deviation_target(
    offset: ToolOffset,
    curvature: float,
    eps_margin: float = EPS_MARGIN,
    c_eps: float = C_EPS,
) -> float:
    """Lateral deviation of O that puts the tool on the path at zero heading error."""
    require_feasible(offset, curvature, eps_margin)
    if abs(offset.ts * curvature) >= 1.0 - eps_margin:
        raise InfeasibleOffset(
            f"|T_s * c| = {abs(offset.ts * curvature):.6f} leaves no margin in the arcsin domain"
        )
    e_d, _ = sag(curvature, offset.ts, c_eps)
    return -offset.ty - e_d


def desired_deviation(
    meas: Measurements,
    offset: ToolOffset,
    gains: ControllerGains,
    params: VehicleParams,
    alpha_tol: float = ALPHA_TOL,
) -> ControlOutput:
    """Point-O law driving O to the shifted target ``y_d``.

    The heading error is not regulated toward any tool-aware value; only the
    lateral error of O relative to ``y_d`` is fed back.
    """
    state = meas.frenet
    c = meas.curvature
    check_attitude(state.theta_tilde)
    alpha = path_alpha(c, state.y, alpha_tol)
    y_d = desired_deviation_target(offset, c)
    y_T = offset_deviation(state, offset, c).y_T
    theta_d = math.atan(-gains.k_y * (state.y - y_d) / alpha)
    e_theta, raw, delta = heading_stage(state.theta_tilde, theta_d, c, alpha, gains, params)
    return ControlOutput(delta, y_T, theta_d, e_theta, y_d, raw, meas.omega_meas / meas.v)


def predict_convergence_distance(gains: ControllerGains) -> float:
    """Distance for ``exp(-k_y s)`` to drop to about 5 %, taken as ``3 / k_y``."""
    if not gains.k_y > 0:
        raise ValueError("k_y must be positive")
    return 3.0 / gains.k_y


ControlLaw = Callable[[Measurements, ToolOffset, ControllerGains, VehicleParams], ControlOutput]

CONTROLLERS: dict[str, ControlLaw] = {
    "classical_o": lambda meas, offset, gains, params: classical_o(meas, gains, params),
    "desired_deviation": desired_deviation,
    "backstepping": backstepping,
}

"""Bicycle-model plant, Frenet kinematics and steering actuator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import ALPHA_TOL, FrenetState, path_alpha, wrap_angle
from .path import WorldPose


@dataclass(frozen=True)
class VehicleParams:
    """Wheelbase, steering limits (rad, rad/s) and longitudinal speed (m/s).

    The defaults are working assumptions (30 deg, 30 deg/s, 1.5 m), not
    measured robot data.
    """

    wheelbase: float = 1.5
    delta_max: float = math.radians(30.0)
    delta_rate_max: float = math.radians(30.0)
    v: float = 0.75

    def __post_init__(self) -> None:
        if not self.wheelbase > 0:
            raise ValueError(f"wheelbase must be positive, got {self.wheelbase}")
        if not 0 < self.delta_max < 0.5 * math.pi:
            raise ValueError(f"delta_max must lie in (0, pi/2), got {self.delta_max}")
        if not self.delta_rate_max > 0:
            raise ValueError(f"delta_rate_max must be positive, got {self.delta_rate_max}")
        if not math.isfinite(self.v):
            raise ValueError("speed must be finite")

    @property
    def c_max(self) -> float:
        """Largest path curvature the vehicle can follow at full lock."""
        return math.tan(self.delta_max) / self.wheelbase


@dataclass(frozen=True)
class PlantState:
    pose: WorldPose
    frenet: FrenetState
    omega_meas: float


def actuate(delta: float, delta_cmd: float, params: VehicleParams, dt: float) -> float:
    """Move the steering toward ``delta_cmd`` under rate limit, then saturate."""
    max_step = params.delta_rate_max * dt
    step = min(max(delta_cmd - delta, -max_step), max_step)
    return min(max(delta + step, -params.delta_max), params.delta_max)


def _world_rhs(theta: float, v: float, yaw_rate: float) -> tuple[float, float, float]:
    return v * math.cos(theta), v * math.sin(theta), yaw_rate


def step_world(pose: WorldPose, params: VehicleParams, delta_cmd: float, dt: float) -> WorldPose:
    """Advance the world pose by ``dt`` with one RK4 step, steering held."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    delta = actuate(pose.delta, delta_cmd, params, dt)
    v = params.v
    yaw_rate = v * math.tan(delta) / params.wheelbase
    x, y, th = pose.x, pose.y, pose.theta
    k1 = _world_rhs(th, v, yaw_rate)
    k2 = _world_rhs(th + 0.5 * dt * k1[2], v, yaw_rate)
    k3 = _world_rhs(th + 0.5 * dt * k2[2], v, yaw_rate)
    k4 = _world_rhs(th + dt * k3[2], v, yaw_rate)
    w = dt / 6.0
    return WorldPose(
        x + w * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
        y + w * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
        wrap_angle(th + w * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])),
        delta,
    )


def frenet_rates(
    state: FrenetState,
    curvature: float,
    params: VehicleParams,
    delta: float,
    alpha_tol: float = ALPHA_TOL,
) -> tuple[float, float]:
    """Abscissa rate and angular-deviation rate ``(ds/dt, dtheta_tilde/dt)``."""
    alpha = path_alpha(curvature, state.y, alpha_tol)
    cos_t = math.cos(state.theta_tilde)
    s_dot = params.v * cos_t / alpha
    theta_dot = params.v * (math.tan(delta) / params.wheelbase - curvature * cos_t / alpha)
    return s_dot, theta_dot


def frenet_derivatives(
    state: FrenetState, curvature: float, params: VehicleParams, delta: float
) -> tuple[float, float, float]:
    """``(ds/dt, dy/dt, dtheta_tilde/dt)`` with the lateral rate ``v sin(theta_tilde)``."""
    s_dot, theta_dot = frenet_rates(state, curvature, params, delta)
    return s_dot, params.v * math.sin(state.theta_tilde), theta_dot


def step_frenet(
    state: FrenetState, curvature_at, params: VehicleParams, delta: float, dt: float
) -> FrenetState:
    """One RK4 step of the Frenet kinematics; ``curvature_at`` maps s to c(s)."""

    def rhs(s: float, y: float, th: float):
        return frenet_derivatives(FrenetState(s, y, th), curvature_at(s), params, delta)

    s, y, th = state.s, state.y, state.theta_tilde
    k1 = rhs(s, y, th)
    k2 = rhs(s + 0.5 * dt * k1[0], y + 0.5 * dt * k1[1], th + 0.5 * dt * k1[2])
    k3 = rhs(s + 0.5 * dt * k2[0], y + 0.5 * dt * k2[1], th + 0.5 * dt * k2[2])
    k4 = rhs(s + dt * k3[0], y + dt * k3[1], th + dt * k3[2])
    w = dt / 6.0
    return FrenetState(
        s + w * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
        y + w * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
        th + w * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]),
    )


def measure_omega(
    delta_applied: float,
    state: FrenetState,
    curvature: float,
    params: VehicleParams,
    noise_std: float = 0.0,
    rng: np.random.Generator | None = None,
) -> float:
    """Angular-deviation rate reconstructed from the applied steering angle.

    Zero-mean Gaussian noise of ``noise_std`` is added when positive, drawn
    from ``rng`` (required in that case).
    """
    _, omega = frenet_rates(state, curvature, params, delta_applied)
    if noise_std > 0.0:
        if rng is None:
            raise ValueError("an rng is required when noise_std > 0")
        omega += float(rng.normal(0.0, noise_std))
    return omega

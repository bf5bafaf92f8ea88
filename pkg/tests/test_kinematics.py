import math

import numpy as np
import pytest

from implement_guidance.errors import OsculatingCenterSingularity
from implement_guidance.geometry import FrenetState
from implement_guidance.kinematics import (
    VehicleParams,
    actuate,
    frenet_derivatives,
    frenet_rates,
    measure_omega,
    step_world,
)
from implement_guidance.path import Arc, Line, WorldPose, build_path, project

from harness import rk4_richardson_ratio, world_frenet_gap


def test_params_validation():
    for kwargs in ({"wheelbase": 0.0}, {"delta_max": math.pi / 2}, {"delta_rate_max": 0.0}, {"v": math.inf}):
        with pytest.raises(ValueError):
            VehicleParams(**kwargs)
    assert VehicleParams().c_max == pytest.approx(math.tan(math.radians(30)) / 1.5)


def test_straight_step():
    pose = step_world(WorldPose(0.0, 0.0, 0.0), VehicleParams(v=1.0), 0.0, 1.0)
    assert (pose.x, pose.y, pose.theta) == (1.0, 0.0, 0.0)


def test_circle_after_half_turn():
    params = VehicleParams(v=1.0, delta_rate_max=100.0)
    delta = math.atan(params.wheelbase * 0.1)
    pose = WorldPose(0.0, 0.0, 0.0, delta)
    n = 3142
    dt = math.pi * 10.0 / n  # within 0.02 % of 0.01 s, landing exactly on the half turn
    unwrapped = 0.0
    for _ in range(n):
        prev = pose.theta
        pose = step_world(pose, params, delta, dt)
        unwrapped += math.remainder(pose.theta - prev, 2 * math.pi)
    assert abs(unwrapped - math.pi) < 1e-6
    assert pose.x == pytest.approx(0.0, abs=1e-6)
    assert pose.y == pytest.approx(20.0, abs=1e-6)


def test_saturation_and_rate_limit():
    params = VehicleParams()
    assert actuate(0.0, 2.0, params, 10.0) == params.delta_max
    assert actuate(0.0, 2.0, params, 0.1) == pytest.approx(params.delta_rate_max * 0.1)
    pose = WorldPose(0.0, 0.0, 0.0, params.delta_max)
    assert step_world(pose, params, 5.0, 0.01).delta == params.delta_max
    with pytest.raises(ValueError):
        step_world(pose, params, 0.0, 0.0)


def test_frenet_rates_examples():
    params = VehicleParams()
    assert frenet_rates(FrenetState(0, 0, 0), 0.0, params, 0.0) == (params.v, 0.0)
    s_dot, th_dot = frenet_rates(FrenetState(0, 0, 0), 0.1, params, math.atan(0.1 * params.wheelbase))
    assert s_dot == params.v
    assert th_dot == pytest.approx(0.0, abs=1e-16)
    with pytest.raises(OsculatingCenterSingularity):
        frenet_rates(FrenetState(0, 10.0, 0), 0.1, params, 0.0)


def test_steady_curve_cross_checked_with_world_plant():
    params = VehicleParams()
    path = build_path([Arc(20.0, 0.1)])
    delta = math.atan(params.wheelbase * 0.1)
    pose = WorldPose(0.0, 0.0, 0.0, delta)
    for _ in range(1000):
        pose = step_world(pose, params, delta, 0.01)
    p = project(path, pose)
    assert abs(p.frenet.y) < 1e-9
    assert abs(p.frenet.theta_tilde) < 1e-9
    assert p.frenet.s == pytest.approx(params.v * 10.0, abs=1e-9)


def test_measure_omega():
    params = VehicleParams()
    state = FrenetState(0, 0, 0)
    assert measure_omega(0.0, state, 0.0, params) == 0.0
    d = math.atan(0.1 * params.wheelbase)
    assert measure_omega(d, state, 0.0, params) == pytest.approx(0.1 * params.v)
    assert measure_omega(0.1, state, 0.05, params, 0.0) == measure_omega(0.1, state, 0.05, params, 0.0)
    a = measure_omega(0.1, state, 0.0, params, 0.01, np.random.default_rng(3))
    b = measure_omega(0.1, state, 0.0, params, 0.01, np.random.default_rng(3))
    assert a == b
    with pytest.raises(ValueError):
        measure_omega(0.1, state, 0.0, params, 0.01)


def test_lateral_rate_companion():
    params = VehicleParams()
    assert frenet_derivatives(FrenetState(0, 0.2, 0.3), 0.0, params, 0.0)[1] == pytest.approx(params.v * math.sin(0.3))


@pytest.mark.parametrize("segment", [Line(110.0), Arc(110.0, 0.05)])
def test_world_frenet_consistency(segment):
    params = VehicleParams(delta_rate_max=10.0)
    path = build_path([segment])
    c = getattr(segment, "curvature", 0.0)
    base = math.atan(params.wheelbase * c)

    def delta_of_t(t):
        return base + 0.05 * math.sin(0.4 * t)

    assert world_frenet_gap(path, params, delta_of_t, 100.0) < 1e-4


def test_rk4_richardson_ratio():
    assert 16 * 0.8 <= rk4_richardson_ratio() <= 16 * 1.2


def test_speed_bound_respected():
    params = VehicleParams()
    for y in (-1.0, 0.0, 1.0):
        s_dot, _ = frenet_rates(FrenetState(0, y, 0.4), 0.1, params, 0.2)
        assert s_dot <= params.v / (1 - 0.1 * y) + 1e-15

import math

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from implement_guidance.controllers import (
    CONTROLLERS,
    ControllerGains,
    Measurements,
    backstepping,
    classical_o,
    desired_deviation,
    desired_deviation_target,
    predict_convergence_distance,
)
from implement_guidance.errors import (
    InfeasibleOffset,
    OsculatingCenterSingularity,
    TurningRadiusSingularity,
)
from implement_guidance.geometry import FrenetState, ToolOffset, feasibility, offset_deviation
from implement_guidance.path import Arc, Line, build_path
from implement_guidance.simulator import Scenario, compute_metrics, initial_pose_for_tool_error, run

from harness import stage_one_log, stage_two_decay

OFFSET = ToolOffset(-2.5, -0.5)
V = 0.75


def meas(y=0.0, theta=0.0, c=0.0, omega=0.0, s=0.0):
    return Measurements(FrenetState(s, y, theta), c, omega, V)


def finite(out):
    return all(math.isfinite(v) for v in (out.delta_cmd, out.y_T, out.theta_d, out.e_theta, out.y_d))


tuples = st.tuples(
    st.floats(-3, 3),  # y
    st.floats(-1.5, 1.5),  # theta
    st.floats(-0.3, 0.3),  # c
    st.floats(-0.5, 0.5),  # omega
)


def test_gains(caplog):
    with pytest.raises(ValueError):
        ControllerGains(0.0, 1.0)
    with caplog.at_level("WARNING"):
        assert not ControllerGains(0.21, 0.63).ratio_warning
    assert caplog.text == ""
    with caplog.at_level("WARNING"):
        assert ControllerGains(0.21, 0.2).ratio_warning
    assert "k_theta" in caplog.text


def test_measurements_require_speed():
    with pytest.raises(ValueError):
        Measurements(FrenetState(0, 0, 0), 0.0, 0.0, 0.0)


class TestClassical:
    def test_on_path_equilibrium(self, gains, params):
        assert classical_o(meas(), gains, params).delta_cmd == 0.0

    def test_lateral_error_example(self, gains, params):
        out = classical_o(meas(y=1.0), gains, params)
        assert out.theta_d == pytest.approx(math.atan(-0.21), abs=1e-12)
        # the quoted four-digit figure is about 2e-4 off atan(-0.21) = -0.20699
        assert out.theta_d == pytest.approx(-0.2072, abs=5e-4)
        assert out.e_theta == -out.theta_d
        expected = math.atan(1.5 * (-0.63 * -out.theta_d))
        assert out.delta_cmd == pytest.approx(expected, abs=1e-15)

    @settings(max_examples=1000, deadline=None)
    @given(t=tuples)
    def test_equivalence_with_zero_offset(self, gains, params, t):
        y, theta, c, omega = t
        assume(abs(1 - c * y) > 1e-6)
        m = meas(y, theta, c, omega)
        a = classical_o(m, gains, params)
        b = backstepping(m, ToolOffset(0.0, 0.0), gains, params)
        assert a == b


class TestDesiredDeviationTarget:
    def test_straight(self):
        assert desired_deviation_target(OFFSET, 0.0) == 0.5

    def test_curved_matches_geometric_sag(self):
        assert desired_deviation_target(ToolOffset(2.0, 0.0), 0.1) == pytest.approx(0.202041, abs=1e-6)

    def test_arcsin_domain(self):
        with pytest.raises(InfeasibleOffset):
            desired_deviation_target(ToolOffset(5.0, 0.0), 0.2)

    @settings(max_examples=500, deadline=None)
    @given(ts=st.floats(-4, 4), ty=st.floats(-2, 2), c=st.floats(-0.2, 0.2))
    def test_closure(self, ts, ty, c):
        offset = ToolOffset(ts, ty)
        assume(feasibility(offset, c).margin > 1e-3)
        y_d = desired_deviation_target(offset, c)
        assert abs(offset_deviation(FrenetState(0.0, y_d, 0.0), offset, c).y_T) <= 1e-9


class TestDesiredDeviation:
    def test_equilibrium(self, gains, params):
        assert desired_deviation(meas(y=0.5), OFFSET, gains, params).delta_cmd == 0.0

    def test_steers_left_toward_target(self, gains, params):
        out = desired_deviation(meas(y=0.0), OFFSET, gains, params)
        assert out.y_d == 0.5
        assert out.theta_d > 0  # heads left
        assert out.delta_cmd > 0  # left steering under the left-positive convention

    def test_closed_loop_straight(self, params, gains):
        path = build_path([Line(60.0)])
        initial = initial_pose_for_tool_error(path, OFFSET, 1.0)
        sc = Scenario(path, params, gains, OFFSET, "desired_deviation", initial, 0.01, 0.01, duration=40.0)
        log = run(sc)
        assert log.status.completed
        m = compute_metrics(log)
        assert m.converged and m.convergence_distance < 40.0
        assert abs(log.rows[-1].y_T) < 0.05


class TestBackstepping:
    def test_equilibrium(self, gains, params):
        out = backstepping(meas(y=0.5), OFFSET, gains, params)
        assert (out.theta_d, out.e_theta, out.delta_cmd) == (0.0, 0.0, 0.0)

    def test_example_values(self, gains, params):
        # O at y = 1.5 puts the tool at y_T = 1 on a straight path
        out = backstepping(meas(y=1.5), OFFSET, gains, params)
        assert out.y_T == pytest.approx(1.0)
        theta_d = math.atan(-0.21)
        assert out.theta_d == pytest.approx(theta_d, abs=1e-12)
        assert out.delta_cmd == pytest.approx(math.atan(1.5 * -0.63 * -theta_d), abs=1e-12)
        assert out.theta_d == pytest.approx(-0.2072, abs=5e-4)
        assert math.tan(out.delta_cmd) == pytest.approx(-0.1958, abs=5e-4)
        assert out.delta_cmd == pytest.approx(-0.1934, abs=5e-4)

    def test_clamped_with_raw_kept(self, params):
        out = backstepping(meas(y=10.0), OFFSET, ControllerGains(0.21, 5.0), params)
        assert out.delta_cmd == -params.delta_max
        assert out.delta_unclamped < -params.delta_max

    def test_steady_curve_residual(self, params, gains):
        path = build_path([Arc(80.0, 0.1)])
        initial = initial_pose_for_tool_error(path, OFFSET, 0.0)
        log = run(Scenario(path, params, gains, OFFSET, "backstepping", initial))
        assert log.status.completed
        last = log.rows[-1]
        alpha = 1 - last.curvature * last.y
        predicted = alpha * last.gamma * OFFSET.ts / gains.k_y
        # gamma is the measured angular-deviation rate over v, which vanishes on a settled curve
        assert abs(last.y_T - predicted) <= max(0.1 * abs(predicted), 1e-4)

    @settings(max_examples=500, deadline=None)
    @given(t=tuples, ts=st.floats(-3, 3), ty=st.floats(-1, 1))
    def test_mirror_symmetry(self, gains, params, t, ts, ty):
        y, theta, c, omega = t
        offset = ToolOffset(ts, ty)
        assume(feasibility(offset, c).margin > 1e-3 and abs(1 - c * y) > 1e-6 and abs(theta) < 1.5)
        assume(abs(1 - omega / V * ty) > 1e-3)
        a = backstepping(meas(y, theta, c, omega), offset, gains, params)
        b = backstepping(meas(-y, -theta, -c, -omega), ToolOffset(ts, -ty), gains, params)
        assert (b.theta_d, b.e_theta, b.delta_cmd) == (-a.theta_d, -a.e_theta, -a.delta_cmd)

    def test_zero_command_at_equilibrium(self, gains, params):
        for ts, ty in ((-2.5, -0.5), (1.0, 0.3), (0.0, 0.0)):
            out = backstepping(meas(y=-ty), ToolOffset(ts, ty), gains, params)
            assert out.y_T == 0.0 and abs(out.delta_cmd) <= 1e-12

    @settings(max_examples=500, deadline=None)
    @given(y=st.floats(-3, 3), theta=st.floats(-1.4, 1.4))
    def test_zero_command_locus(self, gains, params, y, theta):
        out = backstepping(meas(y, theta), OFFSET, gains, params)
        if abs(out.delta_cmd) <= 1e-12:
            # a zero command only occurs on the desired-heading manifold
            assert abs(theta - out.theta_d) <= 1e-11
        if abs(out.y_T) > 1e-6 or abs(theta) > 1e-6:
            # off the origin the state is not stationary: either steering or drifting laterally
            assert abs(out.delta_cmd) > 1e-12 or abs(V * math.sin(theta)) > 1e-12


class TestSingularities:
    def test_osculating_center(self, gains, params):
        for law in CONTROLLERS.values():
            with pytest.raises(OsculatingCenterSingularity):
                law(meas(y=10.0, c=0.1), ToolOffset(1.0, 0.0), gains, params)

    def test_turning_radius(self, gains, params):
        # gamma * T_y = 1 with T_y = -0.5 means omega = -2 v
        with pytest.raises(TurningRadiusSingularity, match="T_y"):
            backstepping(meas(omega=-2 * V), OFFSET, gains, params)

    def test_infeasible_offset(self, gains, params):
        for name in ("backstepping", "desired_deviation"):
            with pytest.raises(InfeasibleOffset, match="H5"):
                CONTROLLERS[name](meas(c=0.21), ToolOffset(3.0, 4.0), gains, params)

    @settings(max_examples=1000, deadline=None)
    @given(t=tuples, ts=st.floats(-3, 3), ty=st.floats(-1, 1), name=st.sampled_from(sorted(CONTROLLERS)))
    def test_fuzz_feasible_region(self, gains, params, t, ts, ty, name):
        y, theta, c, omega = t
        offset = ToolOffset(ts, ty)
        assume(abs(theta) < 1.5 and abs(1 - c * y) > 1e-3 and abs(1 - omega / V * ty) > 1e-3)
        assume(feasibility(offset, c).margin > 1e-3 and abs(ts * c) < 1 - 1e-3)
        out = CONTROLLERS[name](meas(y, theta, c, omega), offset, gains, params)
        assert finite(out)
        assert abs(out.delta_cmd) <= params.delta_max


def test_predict_convergence_distance():
    assert predict_convergence_distance(ControllerGains(0.21, 0.63)) == pytest.approx(14.2857, abs=1e-4)
    assert predict_convergence_distance(ControllerGains(0.3, 0.9)) == pytest.approx(10.0)


def test_predicted_convergence_matches_simulation(params):
    # angular loop ten times faster than the lateral one, so the lateral decay dominates
    gains = ControllerGains(0.21, 2.1)
    path = build_path([Line(60.0)])
    sc = Scenario(path, params, gains, ToolOffset(0.0, 0.0), "classical_o", path.pose_at(0.0, 1.0))
    measured = compute_metrics(run(sc)).convergence_distance
    assert measured == pytest.approx(predict_convergence_distance(gains), rel=0.2)


# -- stage contracts -----------------------------------------------------------


@pytest.mark.parametrize("segment", [Arc(60.0, 0.1), Arc(60.0, -1 / 15), Line(60.0)])
def test_stage_one_contract(gains, segment):
    path = build_path([segment])
    rows = stage_one_log(path, OFFSET, gains, lambda s: 0.08 * math.sin(0.3 * s))
    if isinstance(segment, Arc):
        assert min(abs(1 - r[3]) for r in rows[:10]) > 1e-2  # curvature term exercised
    for rate, model, gamma, _ in rows:
        # relative error, floored where the tool error has decayed to rounding level
        assert abs(rate - model) <= 1e-6 * max(abs(model), 1e-9)


@pytest.mark.parametrize("c", [0.0, 0.1, -1 / 15])
def test_stage_two_contract(gains, c):
    assert stage_two_decay(c, 0.1, 0.4, 0.3, gains, 2 / gains.k_theta) < 0.01

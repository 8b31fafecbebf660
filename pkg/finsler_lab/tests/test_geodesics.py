"""
Tests for the spray, the geodesic flow and its conservation laws.
"""
import numpy as np
import pytest

from finsler_lab.app.errors import DomainError
from finsler_lab.app.geodesics import PhaseState, berwald_deviation, integrate_flow, liouville_check, spray
from finsler_lab.app.models import IntegrationOptions


class TestPhaseState:
    def test_unit_rescaling(self, randers_b05):
        state = PhaseState.unit(randers_b05, (0.0, 0.0), (2.0, 0.0))
        np.testing.assert_allclose(state.y, [2.0 / 3.0, 0.0])
        assert state.is_unit(randers_b05)

    def test_zero_velocity_rejected(self):
        with pytest.raises(DomainError):
            PhaseState.of((0.0, 0.0), (0.0, 0.0))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DomainError):
            PhaseState.of((0.0, 0.0), (1.0, 0.0, 0.0))


class TestSpray:
    """G^i(x, y)."""

    def test_flat_metrics_have_zero_spray(self, randers_b05):
        np.testing.assert_array_equal(spray(randers_b05, PhaseState.of((0.2, 0.3), (1.0, 0.4))).G, 0.0)

    def test_spray_is_two_homogeneous(self, fixtures):
        metric = fixtures.metric("randers_curved")
        s = PhaseState.of((0.1, 0.2), (0.6, -0.3))
        G1 = spray(metric, s).G
        G3 = spray(metric, PhaseState.of(s.x, 3.0 * s.y)).G
        np.testing.assert_allclose(G3, 9.0 * G1, rtol=1e-10, atol=1e-14)

    def test_riemannian_spray_matches_christoffel(self, fixtures):
        # a = diag(1, 1 + x1^2): Gamma^1_22 = -x1, Gamma^2_12 = x1 / (1 + x1^2)
        metric = fixtures.metric("riemannian_warp")
        x, y = np.array([0.7, 0.0]), np.array([0.3, 0.5])
        expected = 0.5 * np.array([-x[0] * y[1] ** 2, 2.0 * x[0] / (1.0 + x[0] ** 2) * y[0] * y[1]])
        np.testing.assert_allclose(spray(metric, PhaseState.of(x, y)).G, expected, rtol=1e-10)

    def test_berwald_deviation(self, fixtures):
        assert berwald_deviation(fixtures.metric("riemannian_warp"), (0.5, 0.1)) < 1e-10
        assert berwald_deviation(fixtures.metric("randers_curved"), (0.1, 0.2)) > 1e-3


class TestGeodesicFlow:
    """Integration of x' = y, y' = -2 G(x, y)."""

    def test_straight_lines(self, randers_b05, plane):
        state = PhaseState.unit(randers_b05, (0.0, 0.0), (0.0, 1.0))
        trace = integrate_flow(randers_b05, plane, state, 5.0)
        np.testing.assert_allclose(trace.xs[-1], 5.0 * state.y, atol=1e-14)
        assert trace.F_drift == 0.0
        assert trace.length == pytest.approx(5.0)

    def test_torus_wraps_coordinates(self, euclid, unit_torus):
        trace = integrate_flow(euclid, unit_torus, PhaseState.of((0.5, 0.5), (1.0, 0.0)), 2.25)
        np.testing.assert_allclose(trace.xs[-1], [0.75, 0.5], atol=1e-12)
        np.testing.assert_allclose(trace.xs_unwrapped[-1], [2.75, 0.5], atol=1e-12)
        assert np.all((trace.xs >= 0.0) & (trace.xs < 1.0))

    def test_great_circle_on_stereographic_sphere(self, fixtures):
        metric, model = fixtures.metric("sphere_stereo"), fixtures.model("plane")
        state = PhaseState.unit(metric, (1.0, 0.0), (0.0, 1.0))
        trace = integrate_flow(metric, model, state, 2.0 * np.pi)
        np.testing.assert_allclose(np.linalg.norm(trace.xs, axis=1), 1.0, atol=1e-7)
        np.testing.assert_allclose(trace.xs[-1], [1.0, 0.0], atol=1e-6)
        assert trace.F_drift <= 1e-8

    def test_energy_conserved_on_curved_randers_torus(self, fixtures):
        metric = fixtures.metric("randers_curved")
        state = PhaseState.unit(metric, (0.1, 0.7), (0.6, 0.8))
        trace = integrate_flow(metric, fixtures.model("torus_1x1"), state, 20.0)
        assert trace.F_drift <= 1e-8
        np.testing.assert_allclose(trace.F_values, 1.0, atol=1e-8)

    def test_backward_integration_retraces(self, fixtures):
        metric, model = fixtures.metric("riemannian_warp"), fixtures.model("plane")
        state = PhaseState.unit(metric, (0.3, 0.2), (1.0, 0.5))
        forward = integrate_flow(metric, model, state, 3.0)
        end = PhaseState(forward.xs[-1], forward.ys[-1])
        back = integrate_flow(metric, model, end, 3.0, options=IntegrationOptions(backward=True))
        np.testing.assert_allclose(back.xs[0], state.x, atol=1e-7)

    def test_flow_semigroup(self, fixtures):
        metric, model = fixtures.metric("randers_curved"), fixtures.model("torus_1x1")
        state = PhaseState.unit(metric, (0.1, 0.7), (0.6, 0.8))
        first = integrate_flow(metric, model, state, 3.0)
        second = integrate_flow(metric, model, PhaseState(first.xs_unwrapped[-1], first.ys[-1]), 4.0)
        direct = integrate_flow(metric, model, state, 7.0)
        tol = IntegrationOptions().tol
        np.testing.assert_allclose(second.xs_unwrapped[-1], direct.xs_unwrapped[-1], atol=2.0 * tol)
        np.testing.assert_allclose(second.ys[-1], direct.ys[-1], atol=2.0 * tol)

    def test_resample_is_uniform(self, fixtures):
        metric, model = fixtures.metric("riemannian_warp"), fixtures.model("plane")
        trace = integrate_flow(metric, model, PhaseState.unit(metric, (0.0, 0.0), (1.0, 1.0)), 4.0)
        uniform = trace.resample(41)
        assert uniform.is_uniform()
        assert len(uniform) == 41
        assert uniform.rows().shape == (41, 6)

    def test_invalid_horizon(self, euclid, plane):
        with pytest.raises(DomainError):
            integrate_flow(euclid, plane, PhaseState.of((0.0, 0.0), (1.0, 0.0)), 0.0)


class TestLiouville:
    """Invariance of the dV_omega mass of a small phase cell."""

    def _cell(self, base, h=1e-3):
        return [base] + [PhaseState(base.x + h * e[:2], base.y + h * e[2:]) for e in np.eye(4)]

    def test_flat_metric(self, randers_b05, unit_torus):
        base = PhaseState.unit(randers_b05, (0.2, 0.4), (0.8, 0.6))
        report = liouville_check(randers_b05, unit_torus, self._cell(base), 5.0)
        assert report.deviation < 1e-8

    def test_warped_riemannian_plane(self, fixtures):
        # a = diag(1, 1 + x1^2)
        metric = fixtures.metric("riemannian_warp")
        base = PhaseState.unit(metric, (0.3, 0.2), (1.0, 0.5))
        report = liouville_check(metric, fixtures.model("plane"), self._cell(base), 2.0)
        assert report.deviation < 1e-4
        assert report.density_end != pytest.approx(report.density_start, rel=1e-3)

    @pytest.mark.slow
    def test_curved_randers(self, fixtures):
        metric = fixtures.metric("randers_curved")
        base = PhaseState.unit(metric, (0.2, 0.4), (0.8, 0.6))
        report = liouville_check(metric, fixtures.model("torus_1x1"), self._cell(base), 10.0)
        assert report.deviation < 1e-4

    def test_degenerate_cell(self, euclid, plane):
        base = PhaseState.of((0.0, 0.0), (1.0, 0.0))
        with pytest.raises(DomainError):
            liouville_check(euclid, plane, [base] * 5, 1.0)

"""
Tests for BH/HT densities, manifold volumes and the Hilbert-form volume.
"""
import numpy as np
import pytest
from scipy.special import gamma

from finsler_lab.app.errors import DomainError, MetricValidityError
from finsler_lab.app.metric_core import custom, randers
from finsler_lab.app.models import PhiConfig, VolumeKind, VolumeVerdict
from finsler_lab.app.volumes import (
    AlphaBetaProfile,
    alphabeta_densities,
    density,
    fit_bh_exponent,
    flat_alpha_beta_metric,
    manifold_volume,
    sigma_BH,
    sigma_HT,
    sm_finiteness,
    sm_symplectic_volume,
    volume_comparison_report,
)


class TestDensities:
    """sigma_BH and sigma_HT at a point."""

    def test_riemannian_reduction(self, riemannian_diag):
        x = np.array([0.3, 0.1])
        assert sigma_BH(riemannian_diag, x) == pytest.approx(2.0, rel=1e-12)
        assert sigma_HT(riemannian_diag, x) == pytest.approx(2.0, rel=1e-12)

    def test_curved_riemannian_reduction(self, fixtures):
        metric = fixtures.metric("riemannian_warp")
        for x in ([0.0, 0.0], [1.5, -0.3], [-2.0, 0.7]):
            expected = np.sqrt(1.0 + x[0] ** 2)
            assert sigma_BH(metric, x) == pytest.approx(expected, rel=1e-10)
            assert sigma_HT(metric, x) == pytest.approx(expected, rel=1e-10)

    def test_randers_ht_is_alpha_volume(self, randers_b05):
        assert sigma_HT(randers_b05, np.zeros(2)) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("n", [2, 3])
    def test_randers_bh_exponent(self, n):
        b = np.zeros(n)
        b[0] = 0.5
        metric = randers(np.eye(n), b, n)
        assert sigma_BH(metric, np.zeros(n)) == pytest.approx(0.75 ** ((n + 1) / 2), rel=1e-8)

    def test_quartic_norm(self, fixtures):
        metric = fixtures.metric("quartic")
        # area of the unit ball x^4 + y^4 <= 1 is 4 Gamma(5/4)^2 / Gamma(3/2)
        expected = np.pi * gamma(1.5) / (4.0 * gamma(1.25) ** 2)
        assert sigma_BH(metric, np.zeros(2)) == pytest.approx(expected, rel=1e-10)
        assert 0.80 < sigma_HT(metric, np.zeros(2)) < 0.82

    def test_anisotropic_alpha_far_out_on_warped_surface(self, warped):
        x = np.array([4.0, 0.3])
        assert sigma_HT(warped.surface_metric, x) == pytest.approx(np.exp(-16.0), rel=1e-8)
        assert sigma_BH(warped.surface_metric, x) == pytest.approx(np.exp(-16.0), rel=1e-8)

    def test_error_estimate(self, randers_b05):
        result = density(randers_b05, np.zeros(2), VolumeKind.BH)
        assert result.error_estimate < 1e-10
        assert result.value == pytest.approx(0.75 ** 1.5, rel=1e-10)

    def test_non_positive_F_rejected(self):
        metric = custom(lambda x, y: y[0], 2, name="degenerate", x_independent=True)
        with pytest.raises(MetricValidityError):
            sigma_BH(metric, np.zeros(2))


class TestAlphaBetaClosedForms:
    """f(b) and g(b) from the profile against quadrature over the indicatrix."""

    @pytest.mark.parametrize("kind", ["randers", "quadratic", "slope"])
    def test_cross_validation(self, kind):
        profile = AlphaBetaProfile.from_config(PhiConfig(kind=kind), 0.3, 2)
        closed = alphabeta_densities(profile)
        metric = flat_alpha_beta_metric(profile)
        assert sigma_BH(metric, np.zeros(2)) == pytest.approx(closed.f_value, rel=1e-8)
        assert sigma_HT(metric, np.zeros(2)) == pytest.approx(closed.g_value, rel=1e-8)

    def test_randers_g_is_one(self):
        for b in (0.0, 0.3, 0.6, 0.9):
            profile = AlphaBetaProfile.from_config(PhiConfig(kind="randers"), b, 2)
            assert alphabeta_densities(profile).g_value == pytest.approx(1.0, abs=1e-10)

    def test_slope_closed_forms(self):
        b = 0.3
        densities = alphabeta_densities(AlphaBetaProfile.from_config(PhiConfig(kind="slope"), b, 2))
        assert densities.f_value == pytest.approx(1.0 / (1.0 + b * b / 2.0), rel=1e-10)
        assert densities.g_value == pytest.approx((2.0 - 3.0 * b * b) / (2.0 * (1.0 - b * b) ** 2.5), rel=1e-10)

    def test_profile_domain(self):
        with pytest.raises(DomainError):
            AlphaBetaProfile.from_config(PhiConfig(kind="randers"), 1.0, 2)
        with pytest.raises(DomainError):
            AlphaBetaProfile.from_config(PhiConfig(kind="randers"), 0.5, 1)

    def test_bh_exponent_fit(self):
        fit = fit_bh_exponent(2)
        assert fit.exponent == pytest.approx(1.5, abs=1e-8)
        assert fit.residual < 1e-8
        assert fit.printed_exponent == 1.0


class TestManifoldVolumes:
    """Totals over tori and truncation verdicts elsewhere."""

    def test_randers_torus(self, randers_b05, unit_torus):
        result = manifold_volume(randers_b05, unit_torus, VolumeKind.HT, grid=4)
        assert result.verdict == VolumeVerdict.FINITE
        assert result.value == pytest.approx(1.0, abs=1e-8)

    def test_curved_randers_torus(self, fixtures):
        result = manifold_volume(fixtures.metric("randers_curved"), fixtures.model("torus_1x1"), VolumeKind.HT,
                                 grid=8)
        assert result.value == pytest.approx(1.0, abs=1e-8)

    def test_plane_diverges(self, euclid, plane):
        result = manifold_volume(euclid, plane, VolumeKind.BH, grid=4)
        assert result.verdict == VolumeVerdict.DIVERGENT
        assert result.infinite
        assert result.value is None
        values = [t.value for t in result.truncations]
        assert values == sorted(values)

    def test_warped_surface_area_converges(self, warped):
        result = manifold_volume(warped.surface_metric, warped, VolumeKind.HT, grid=16)
        assert result.verdict == VolumeVerdict.CONVERGED
        assert result.value == pytest.approx(np.sqrt(np.pi), rel=1e-6)

    def test_dimension_mismatch(self, euclid):
        from finsler_lab.app.manifold import torus

        with pytest.raises(DomainError):
            manifold_volume(euclid, torus((1.0, 1.0, 1.0)))


class TestHilbertForm:
    """int_{SM} dV_omega under both fiber conventions."""

    def test_euclidean_torus(self, euclid, unit_torus):
        result = sm_symplectic_volume(euclid, unit_torus, grid=4)
        assert result.value == pytest.approx(3.0 * np.pi, rel=1e-10)
        assert result.surface_value == pytest.approx(2.0 * np.pi, rel=1e-10)
        assert result.convention_ratio == pytest.approx(2.0 / 3.0, rel=1e-10)
        assert result.ht_from_lemma == pytest.approx(1.0, rel=1e-10)

    def test_two_paths_agree_for_randers(self, randers_b05, unit_torus):
        result = sm_symplectic_volume(randers_b05, unit_torus, grid=4)
        assert result.relative_gap < 1e-8

    def test_finiteness_on_warped_surface(self, warped):
        report = sm_finiteness(warped.surface_metric, warped, grid=8)
        assert report.consistent
        assert report.ht.verdict == VolumeVerdict.CONVERGED


class TestComparison:
    """vol_BH, vol_HT and vol_alpha side by side."""

    def test_randers_inequalities(self, randers_b05, unit_torus):
        report = volume_comparison_report(randers_b05, unit_torus, grid=4)
        assert all(check.holds for check in report.checks)
        assert report.observed_order.startswith("vol_BH < ")
        assert " = " in report.observed_order

    def test_slope_order_is_recorded(self, fixtures):
        report = volume_comparison_report(fixtures.metric("slope_b03"), fixtures.model("torus_1x1"), grid=4)
        assert report.observed_order == "vol_BH < vol_alpha < vol_HT"
        assert not report.checks[0].holds

    def test_reversible_ht_below_bh(self, fixtures):
        report = volume_comparison_report(fixtures.metric("quartic"), fixtures.model("torus_1x1"), grid=2)
        assert report.absolutely_homogeneous
        assert report.checks[0].holds
        assert report.density_ratio_bounds[1] <= 1.0

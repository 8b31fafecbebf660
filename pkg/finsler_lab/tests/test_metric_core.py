"""
Tests for metric families, the fundamental tensor and metric validation.
"""
import numpy as np
import pytest

from finsler_lab.app.errors import ConfigError, DomainError, StrongConvexityError
from finsler_lab.app.metric_core import (
    TangentVector,
    alpha_beta_det_formula,
    central_hessian,
    custom,
    eval_F,
    fundamental_tensor,
    metric_from_config,
    randers_fundamental_tensor,
    validate_metric,
)
from finsler_lab.app.models import MetricConfig, MetricFamily


class TestEvaluation:
    """F(x, y) and its domain."""

    def test_randers_asymmetry(self, randers_b03):
        x = np.zeros(2)
        assert eval_F(randers_b03, TangentVector.of(x, (1.0, 0.0))) == pytest.approx(1.3)
        assert eval_F(randers_b03, TangentVector.of(x, (-1.0, 0.0))) == pytest.approx(0.7)

    def test_zero_direction_rejected(self, euclid):
        with pytest.raises(DomainError):
            eval_F(euclid, TangentVector.of((0.0, 0.0), (0.0, 0.0)))

    def test_wrong_dimension_rejected(self, euclid):
        with pytest.raises(DomainError):
            eval_F(euclid, TangentVector.of((0.0, 0.0, 0.0), (1.0, 0.0, 0.0)))

    def test_reversibility_flag(self, euclid, randers_b05):
        assert euclid.absolutely_homogeneous
        assert not randers_b05.absolutely_homogeneous


class TestFundamentalTensor:
    """g_ij = 1/2 d^2 F^2 / dy^i dy^j."""

    def test_euclidean_is_identity(self, euclid):
        tensor = fundamental_tensor(euclid, TangentVector.of((0.3, -1.2), (2.0, 1.0)))
        np.testing.assert_allclose(tensor.g, np.eye(2), atol=1e-14)
        assert tensor.det_g == pytest.approx(1.0)

    def test_randers_closed_form(self, randers_b05):
        rng = np.random.default_rng(3)
        for y in rng.normal(size=(10, 2)):
            g = fundamental_tensor(randers_b05, TangentVector.of(np.zeros(2), y)).g
            np.testing.assert_allclose(g, randers_fundamental_tensor(np.eye(2), [0.5, 0.0], y), rtol=1e-12)

    @pytest.mark.parametrize("h", [3e-4, 1e-4, 3e-5])
    def test_randers_closed_form_against_difference_steps(self, randers_b05, h):
        x = np.zeros(2)
        for y in ([0.8, -0.6], [-1.2, 0.5], [0.3, 1.4]):
            y = np.asarray(y)
            hessian = central_hessian(lambda v: randers_b05.F(x, v) ** 2, y, h=h)
            np.testing.assert_allclose(0.5 * hessian, randers_fundamental_tensor(np.eye(2), [0.5, 0.0], y), atol=1e-6)

    def test_alpha_beta_with_unit_slope_profile_is_randers(self, fixtures):
        randers = fixtures.metric("randers_curved")
        document = randers.config.model_dump(mode="json", exclude_none=True)
        rebuilt = metric_from_config(
            MetricConfig.model_validate({**document, "family": "alpha_beta", "phi": {"kind": "randers"}})
        )
        assert rebuilt.family == MetricFamily.ALPHA_BETA
        rng = np.random.default_rng(5)
        for x, y in zip(rng.uniform(0.0, 1.0, size=(10, 2)), rng.normal(size=(10, 2))):
            assert rebuilt.F(x, y) == pytest.approx(randers.F(x, y), abs=1e-10)
            g_randers = fundamental_tensor(randers, TangentVector.of(x, y))
            g_rebuilt = fundamental_tensor(rebuilt, TangentVector.of(x, y))
            np.testing.assert_allclose(g_rebuilt.g, g_randers.g, atol=1e-10)
            assert g_rebuilt.det_g == pytest.approx(g_randers.det_g, abs=1e-10)

    def test_zero_homogeneous(self, randers_b05):
        y = np.array([0.4, -0.7])
        g1 = fundamental_tensor(randers_b05, TangentVector.of(np.zeros(2), y)).g
        g2 = fundamental_tensor(randers_b05, TangentVector.of(np.zeros(2), 5.0 * y)).g
        np.testing.assert_allclose(g1, g2, rtol=1e-12)

    def test_alpha_beta_determinant(self, fixtures):
        metric = fixtures.metric("slope_b03")
        for y in ([1.0, 0.0], [0.2, 0.9], [-0.5, -0.5]):
            det = fundamental_tensor(metric, TangentVector.of(np.zeros(2), y)).det_g
            assert det == pytest.approx(alpha_beta_det_formula(metric, np.zeros(2), y), rel=1e-10)

    def test_quartic_norm_degenerate_on_axes(self, fixtures):
        with pytest.raises(StrongConvexityError) as info:
            fundamental_tensor(fixtures.metric("quartic"), TangentVector.of((0.0, 0.0), (1.0, 0.0)))
        assert info.value.min_eigenvalue <= 0.0


class TestValidation:
    """Sampled checks of the Finsler assumptions."""

    @pytest.mark.parametrize("name, model", [
        ("euclid", "torus_1x1"), ("randers_b05", "torus_1x1"), ("randers_curved", "torus_1x1"),
        ("slope_b03", "plane"), ("sphere_stereo", "plane"), ("riemannian_warp", "plane"),
    ])
    def test_fixture_metrics_pass(self, fixtures, name, model):
        report = validate_metric(fixtures.metric(name), fixtures.model(model), n_samples=50)
        assert report.passed, [c.name for c in report.checks if not c.passed]

    def test_randers_condition_failure_is_reported(self, unit_torus):
        config = MetricConfig(family=MetricFamily.RANDERS, dim=2, a=[[1.0, 0.0], [0.0, 1.0]], b=[1.2, 0.0])
        report = validate_metric(metric_from_config(config), unit_torus, n_samples=20)
        assert not report.passed
        assert "randers_condition" in [c.name for c in report.checks if not c.passed]

    def test_periodicity_failure_is_reported(self, fixtures, unit_torus):
        report = validate_metric(fixtures.metric("riemannian_warp"), unit_torus, n_samples=20)
        assert "periodicity" in [c.name for c in report.checks if not c.passed]

    def test_non_traceable_metric_uses_differences(self):
        metric = custom(lambda x, y: float(np.hypot(y[0], y[1])), 2, name="hypot")
        assert not metric.traceable
        g = fundamental_tensor(metric, TangentVector.of((0.1, 0.2), (1.0, 1.0))).g
        np.testing.assert_allclose(g, np.eye(2), atol=1e-5)


class TestConfig:
    """Metric documents."""

    def test_missing_family_field(self):
        with pytest.raises(ValueError):
            MetricConfig(family=MetricFamily.RANDERS, dim=2, a=[[1.0, 0.0], [0.0, 1.0]])

    def test_load_metric_bad_document(self, tmp_path):
        from finsler_lab.app.metric_core import load_metric

        path = tmp_path / "bad.json"
        path.write_text('{"family": "riemannian", "dim": 2, "a": [[1.0]]}')
        with pytest.raises(ConfigError):
            load_metric(path)

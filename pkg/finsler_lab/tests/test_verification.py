import pytest

from finsler_lab.app.errors import ConfigError
from finsler_lab.app.models import CheckResult
from finsler_lab.app.reporting import SLOPE_ORDER_FINDING
from finsler_lab.app.verification import BUDGETS, CHECKS, Fixtures, InvariantCheck, run_suite


class TestSuite:
    """The invariant suite behind `verify`."""

    def test_check_names_unique(self):
        names = [check.name for check in CHECKS]
        assert len(names) == len(set(names))

    def test_failing_check_is_reported_not_raised(self):
        class Broken(InvariantCheck):
            name = "broken"

            def score(self) -> CheckResult:
                raise RuntimeError("boom")

        result = Broken(Fixtures(), BUDGETS["fast"]).run()
        assert not result.passed
        assert result.reason == "RuntimeError: boom"

    @pytest.mark.parametrize("name", [
        "euclidean_ball_recursion",
        "riemannian_reduction",
        "randers_ht_identity",
        "alpha_beta_cross_validation",
        "bh_exponent",
        "randers_torus_volume",
        "slope_volumes",
        "randers_distance_asymmetry",
        "busemann_euclidean_closed_form",
        "alpha_beta_randers_agreement",
        "spray_homogeneity",
        "quadrature_convergence",
        "affine_midpoint",
        "rational_torus_returns",
        "key_lemma_orbit",
        "report_determinism_schema",
    ])
    def test_fast_checks_pass(self, name):
        [result] = run_suite("fast", only=[name])
        assert result.passed, result.reason

    @pytest.mark.slow
    @pytest.mark.parametrize("name", ["flow_semigroup", "liouville_invariance", "census_monotone"])
    def test_fast_flow_checks_pass(self, name):
        [result] = run_suite("fast", only=[name])
        assert result.passed, result.reason

    def test_slope_order_is_a_documented_deviation(self):
        [result] = run_suite("fast", only=["slope_volumes"])
        assert result.passed
        assert result.deviation == SLOPE_ORDER_FINDING
        assert "vol_BH < vol_alpha < vol_HT" in result.reason

    def test_every_check_runs_in_both_budgets(self):
        assert set(BUDGETS) == {"fast", "full"}
        assert {"flow_semigroup", "spray_homogeneity", "liouville_invariance", "quadrature_convergence",
                "affine_midpoint", "census_monotone", "key_lemma_orbit", "rational_torus_returns",
                "report_determinism_schema", "alpha_beta_randers_agreement"} <= {check.name for check in CHECKS}

    def test_unknown_check(self):
        with pytest.raises(ConfigError):
            run_suite("fast", only=["euclidean_ball_recursion", "nope"])

    @pytest.mark.slow
    def test_full_suite(self):
        results = run_suite("full")
        assert [r.name for r in results if not r.passed] == []

"""
Tests for recurrence scans, convexity profiles and the finite-volume screen.
"""
from dataclasses import replace

import numpy as np
import pytest

from finsler_lab.app import dynamics
from finsler_lab.app.dynamics import (
    CANDIDATES,
    convexity_profile,
    convexity_screen,
    find_recurrences,
    key_lemma_check,
    noisy_constant,
    phase_distance,
    recurrence_census,
    sample_unit_states,
    theorem_demo,
)
from finsler_lab.app.errors import DomainError
from finsler_lab.app.geodesics import PhaseState, integrate_flow
from finsler_lab.app.models import Classification, LemmaVerdict, RecurrenceEvent, ScreenOptions


class TestSampling:
    def test_states_are_unit(self, fixtures):
        metric = fixtures.metric("randers_curved")
        states = sample_unit_states(metric, fixtures.model("torus_1x1"), 50, seed=1)
        assert len(states) == 50
        assert all(s.is_unit(metric) for s in states)

    def test_seeded(self, randers_b05, unit_torus):
        a = sample_unit_states(randers_b05, unit_torus, 5, seed=7)
        b = sample_unit_states(randers_b05, unit_torus, 5, seed=7)
        for s, t in zip(a, b):
            np.testing.assert_array_equal(s.x, t.x)
            np.testing.assert_array_equal(s.y, t.y)

    def test_phase_distance_uses_minimal_image(self, unit_torus):
        a = PhaseState.of((0.05, 0.5), (1.0, 0.0))
        b = PhaseState.of((0.95, 0.5), (1.0, 0.0))
        assert phase_distance(unit_torus, a, b) == pytest.approx(0.1)


class TestRecurrence:
    """Returns of the flow near its starting phase point."""

    def test_rational_direction_is_periodic(self, euclid, unit_torus):
        state = PhaseState.unit(euclid, (0.0, 0.0), (1.0, 0.5))
        events = find_recurrences(euclid, unit_torus, state, 10.0, 1e-3)
        assert events[0].t == pytest.approx(2.0 * np.sqrt(1.25), abs=1e-6)
        assert events[0].phase_distance < 1e-6
        assert events[1].t == pytest.approx(4.0 * np.sqrt(1.25), abs=1e-6)

    def test_irrational_direction_returns(self, euclid, unit_torus):
        golden = (np.sqrt(5.0) - 1.0) / 2.0
        state = PhaseState.unit(euclid, (0.0, 0.0), (1.0, golden))
        events = find_recurrences(euclid, unit_torus, state, 1e3, 1e-2)
        assert events
        assert all(e.phase_distance < 1e-2 and e.t >= 1.0 for e in events)
        assert all(later.t > earlier.t for earlier, later in zip(events, events[1:]))

    def test_plane_rejected(self, euclid, plane):
        with pytest.raises(DomainError):
            find_recurrences(euclid, plane, PhaseState.of((0.0, 0.0), (1.0, 0.0)), 10.0, 1e-2)

    def test_non_unit_state_rejected(self, euclid, unit_torus):
        with pytest.raises(DomainError):
            find_recurrences(euclid, unit_torus, PhaseState.of((0.0, 0.0), (2.0, 0.0)), 10.0, 1e-2)

    def test_census_on_flat_torus(self, randers_b05, unit_torus):
        census = recurrence_census(randers_b05, unit_torus, 6, seed=0, t_max=2000.0, eps=5e-2, workers=2)
        assert census.n_states == 6
        assert census.fraction == 1.0
        assert census.escaped == 0
        assert all(t is not None and t >= 1.0 for t in census.first_return_times)

    @pytest.mark.slow
    def test_census_on_warped_surface(self, warped):
        census = recurrence_census(warped.surface_metric, warped, 20, seed=0, t_max=500.0, eps=5e-2)
        assert census.n_states == 20
        assert census.recurrent + census.escaped <= census.n_states
        assert census.truncation_rate == census.escaped / 20

    def test_escaped_orbits_are_not_recurrent(self, monkeypatch, randers_b03, unit_torus):
        trace = type("Trace", (), {"terminated": True})()
        monkeypatch.setattr(dynamics, "_scan", lambda *args, **kwargs: ([RecurrenceEvent(t=2.0, phase_distance=0.0)],
                                                                         trace))
        census = recurrence_census(randers_b03, unit_torus, 4, seed=0, t_max=10.0, eps=1e-2)
        assert census.escaped == 4
        assert census.recurrent == 0
        assert census.recurrent + census.escaped <= census.n_states
        assert census.first_return_times == [None] * 4

    def test_census_monotone_in_horizon_and_radius(self, randers_b03, unit_torus):
        def count(t_max, eps):
            return recurrence_census(randers_b03, unit_torus, 8, seed=3, t_max=t_max, eps=eps).recurrent

        by_horizon = [count(t_max, 5e-2) for t_max in (5.0, 50.0, 500.0)]
        by_radius = [count(50.0, eps) for eps in (1e-2, 5e-2, 2e-1)]
        assert by_horizon == sorted(by_horizon)
        assert by_radius == sorted(by_radius)


class TestConvexityProfile:
    """Midpoint convexity along a uniformly sampled geodesic."""

    def _line(self, euclid, plane):
        state = PhaseState.of((0.0, 0.0), (1.0, 0.0))
        return integrate_flow(euclid, plane, state, 2.0).resample(21)

    def test_linear(self, euclid, plane):
        profile = convexity_profile(lambda x: x[..., 0], self._line(euclid, plane))
        assert profile.classification == Classification.LINEAR

    def test_strictly_convex(self, euclid, plane):
        profile = convexity_profile(lambda x: np.sum(x ** 2, axis=-1), self._line(euclid, plane))
        assert profile.classification == Classification.STRICTLY_CONVEX

    def test_non_convex(self, euclid, plane):
        profile = convexity_profile(lambda x: -np.sum(x ** 2, axis=-1), self._line(euclid, plane))
        assert profile.classification == Classification.NON_CONVEX
        assert profile.max_defect == pytest.approx(0.5 * 0.1 ** 2 * 2.0)

    def test_non_uniform_trace_rejected(self, euclid, plane):
        line = self._line(euclid, plane)
        with pytest.raises(DomainError):
            convexity_profile(lambda x: x[..., 0], replace(line, times=line.times ** 2))


class TestFiniteVolumeScreen:
    """Convex nonconstant candidates versus finite volume."""

    def test_screen_flags_noise(self, euclid, unit_torus):
        screen = ScreenOptions(ensemble=8, horizon=4.0, samples=41)
        outcome = convexity_screen(euclid, unit_torus, CANDIDATES["noisy_constant"](unit_torus), "noisy_constant",
                                   options=screen)
        assert not outcome.convex_along_ensemble
        assert outcome.witness is not None

    def test_constant_is_convex_and_constant(self, euclid, unit_torus):
        outcome = convexity_screen(euclid, unit_torus, CANDIDATES["constant"](unit_torus), "constant",
                                   options=ScreenOptions(ensemble=4, horizon=2.0, samples=21))
        assert outcome.convex_along_ensemble
        assert not outcome.nonconstant

    def test_plane_control(self, euclid, plane):
        report = theorem_demo(euclid, plane, candidates=["norm_squared"],
                              screen=ScreenOptions(ensemble=8, horizon=4.0, samples=41), grid=4)
        assert not report.finite_volume
        assert report.candidates[0].convex_and_nonconstant
        assert report.consistent

    def test_flat_torus(self, euclid, unit_torus):
        report = theorem_demo(euclid, unit_torus, screen=ScreenOptions(ensemble=8, horizon=4.0, samples=41), grid=4)
        assert report.finite_volume
        assert report.consistent
        assert not any(c.convex_and_nonconstant for c in report.candidates)

    def test_unknown_candidate(self, euclid, unit_torus):
        with pytest.raises(DomainError):
            theorem_demo(euclid, unit_torus, candidates=["nope"], grid=2)

    def test_key_lemma_on_flat_torus(self, euclid, unit_torus):
        state = PhaseState.unit(euclid, (0.0, 0.0), (1.0, 0.5))
        result = key_lemma_check(euclid, unit_torus, CANDIDATES["constant"](unit_torus), state, 10.0, 1e-3, 1e-9,
                                 screen=ScreenOptions(ensemble=4, horizon=2.0, samples=21))
        assert result.verdict == LemmaVerdict.PASS
        assert result.recurrent
        assert not result.contradicts_lemma

    def test_key_lemma_fails_on_noisy_constant(self, euclid, unit_torus):
        delta = 1e-3
        state = PhaseState.unit(euclid, (0.0, 0.0), (1.0, 0.5))
        result = key_lemma_check(euclid, unit_torus, noisy_constant(unit_torus, delta=delta), state, 10.0, 1e-3, 1e-6,
                                 screen=ScreenOptions(ensemble=4, horizon=2.0, samples=21))
        assert result.verdict == LemmaVerdict.FAIL
        assert result.recurrent
        assert 0.5 * delta < result.variation <= 2.0 * delta
        assert result.witness["f_max"] - result.witness["f_min"] == pytest.approx(result.variation)

    @pytest.mark.slow
    def test_warped_surface(self, warped):
        report = theorem_demo(warped.surface_metric, warped,
                              screen=ScreenOptions(ensemble=16, horizon=8.0, samples=81), grid=16)
        assert report.finite_volume
        assert report.consistent
        assert {c.name for c in report.candidates} == {"constant", "x1", "x1_squared", "neg_log_profile"}
        assert not any(c.convex_and_nonconstant for c in report.candidates)

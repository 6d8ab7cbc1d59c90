import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from exponentlab.expert_opt import expert_exponent, optimize_expert_alternating, optimize_expert_grid
from exponentlab.regions import build_regions
from exponentlab.scenario import Expert, FiniteSource, GaussianSource, LossSpec, Policy
from exponentlab.study import EXPERT_RATES, REFERENCE, three_expert_scenario

from conftest import gaussian_sources, row_rate_losses

STUDY_GUESSES = REFERENCE["initial_guesses"]


def gaussian_pair_chernoff(policy, i, j):
    """Equal-variance gaussian Chernoff information, mixed linearly by the policy."""
    return sum(w * (s.means[i] - s.means[j]) ** 2 / (8 * s.variance) for w, s in zip(policy.weights, policy.sources))


def make_expert(loss, sources):
    return Expert(1, tuple(s.id for s in sources), loss, 1.0)


@pytest.fixture(scope="module")
def sweep():
    return {delta: three_expert_scenario(delta=delta) for delta in REFERENCE["deltas"]}


class TestExpertExponent:
    def test_binary_chernoff(self, binary_source):
        ev = expert_exponent(make_expert(LossSpec.zero_one(2), [binary_source]), Policy((binary_source,), [1.0]))
        assert ev.value == pytest.approx(1 / 8, abs=1e-10)
        # both error terms are equal by symmetry
        assert ev.matrix[0, 1] == pytest.approx(ev.matrix[1, 0], abs=1e-10)

    def test_identical_distributions_give_zero(self):
        src = FiniteSource("flat", np.tile([0.2, 0.3, 0.5], (3, 1)))
        ev = expert_exponent(make_expert(LossSpec.zero_one(3), [src]), Policy((src,), [1.0]))
        assert ev.value == 0.0

    def test_zero_one_expert_at_barycenter(self, study):
        # with a 0-1 loss the slowest pairwise Chernoff information binds
        e = study.expert(1)
        pol = study.policy(1, [0.5, 0.5])
        expected = min(gaussian_pair_chernoff(pol, i, j) for i, j in [(0, 1), (0, 2), (1, 2)])
        assert expert_exponent(e, pol).value == pytest.approx(expected, abs=1e-9)

    def test_value_is_min_over_finite_cells(self, study):
        for e in study.experts:
            ev = expert_exponent(e, study.policy(e.id, [0.3, 0.7]))
            finite = np.isfinite(ev.rates)
            assert ev.value == pytest.approx((ev.matrix + ev.rates)[finite].min(), abs=1e-9)
            m, d = ev.binding
            assert ev.matrix[m, d] + ev.rates[m, d] == pytest.approx(ev.value, abs=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(gaussian_sources(), row_rate_losses(), st.floats(0, 1))
    def test_nonnegative(self, models, loss, w):
        ev = expert_exponent(Expert(1, ("g0", "g1"), loss, 1.0), Policy(models, [w, 1 - w]))
        assert ev.value >= 0
        assert (ev.matrix >= 0).all()


class TestAlternating:
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_study_policies(self, study, k):
        sol = optimize_expert_alternating(study.expert(k), study.models(k), STUDY_GUESSES)
        np.testing.assert_allclose(sol.policy.weights, REFERENCE["expert_policy"][k], atol=0.01)
        assert sol.converged

    def test_trace_rows(self, study):
        sol = optimize_expert_alternating(study.expert(3), study.models(3), STUDY_GUESSES)
        assert sol.trace[0][0] == 0
        assert all(len(w) == 2 for _, w, _ in sol.trace)
        assert sol.trace[-1][2] == pytest.approx(sol.exponent, abs=1e-12)
        assert len(sol.initial_guesses) == 2

    def test_iteration_budget_and_grid_agreement(self, sweep):
        for delta, sc in sweep.items():
            for k in EXPERT_RATES:
                regions = build_regions(sc.expert(k).loss)
                sol = optimize_expert_alternating(sc.expert(k), sc.models(k), STUDY_GUESSES, regions)
                grid = optimize_expert_grid(sc.expert(k), sc.models(k), 0.01, regions)
                assert sol.total_iterations <= 30, (delta, k)
                np.testing.assert_allclose(sol.policy.weights, grid.policy.weights, atol=0.01)

    def test_single_guess_can_be_trapped(self, sweep):
        misses = []
        for delta, sc in sweep.items():
            for k in EXPERT_RATES:
                sol = optimize_expert_alternating(sc.expert(k), sc.models(k), [STUDY_GUESSES[0]])
                grid = optimize_expert_grid(sc.expert(k), sc.models(k), 0.01)
                if np.max(np.abs(sol.policy.weights - grid.policy.weights)) > 0.05:
                    misses.append((delta, k))
        assert misses

    def test_default_guesses_are_vertices_and_center(self, study):
        sol = optimize_expert_alternating(study.expert(1), study.models(1))
        starts = sorted(tuple(p.weights) for p in sol.initial_guesses)
        assert starts == [(0.0, 1.0), (0.5, 0.5), (1.0, 0.0)]

    def test_requires_a_guess(self, study):
        with pytest.raises(ValueError):
            optimize_expert_alternating(study.expert(1), study.models(1), [])

    @settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(gaussian_sources(), row_rate_losses())
    def test_never_beats_the_true_maximum(self, models, loss):
        expert = Expert(1, ("g0", "g1"), loss, 1.0)
        regions = build_regions(loss)
        sol = optimize_expert_alternating(expert, models, regions=regions)
        grid = optimize_expert_grid(expert, models, 0.02, regions)

        def neg(w):
            return -expert_exponent(expert, Policy(models, [w, 1 - w]), regions).value

        w0 = grid.policy.weights[0]
        refined = minimize_scalar(neg, bounds=(max(w0 - 0.02, 0), min(w0 + 0.02, 1)), method="bounded")
        best = max(grid.exponent, -refined.fun)
        assert sol.exponent <= best + 1e-6
        assert sol.exponent == pytest.approx(expert_exponent(expert, sol.policy, regions).value, abs=1e-12)


class TestGrid:
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_study_argmax(self, study, k):
        sol = optimize_expert_grid(study.expert(k), study.models(k), 0.01)
        np.testing.assert_allclose(sol.policy.weights, REFERENCE["expert_policy"][k], atol=0.01)
        assert sol.method == "grid"

    def test_delta_invariance(self, sweep):
        for sc in sweep.values():
            for k in EXPERT_RATES:
                sol = optimize_expert_grid(sc.expert(k), sc.models(k), 0.01)
                np.testing.assert_allclose(sol.policy.weights, REFERENCE["expert_policy"][k], atol=0.01)

    def test_single_source_is_its_vertex(self, binary_source):
        sol = optimize_expert_grid(make_expert(LossSpec.zero_one(2), [binary_source]), [binary_source])
        assert sol.policy.weights.tolist() == [1.0]
        assert sol.exponent == pytest.approx(1 / 8, abs=1e-10)

    def test_source_count_guard(self):
        sources = [GaussianSource(f"s{i}", [0.0, 1.0 + i], 1.0) for i in range(5)]
        with pytest.raises(ValueError):
            optimize_expert_grid(make_expert(LossSpec.zero_one(2), sources), sources)

    @pytest.mark.parametrize("step", [0.0, 0.6, -0.1])
    def test_step_guard(self, study, step):
        with pytest.raises(ValueError):
            optimize_expert_grid(study.expert(1), study.models(1), step)

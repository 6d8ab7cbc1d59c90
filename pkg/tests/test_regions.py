import itertools
import math

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from exponentlab.fenchel import chernoff_info, lambda_star, lambda_star_tail, phi_star
from exponentlab.mgf import llr_model, mean_llr
from exponentlab.regions import (
    EnumerationError,
    build_regions,
    concrete_log_losses,
    f,
    f_tilde,
    g,
    g_tilde,
    inf_rate_over_region,
    lift,
)
from exponentlab.scenario import GaussianSource, LossSpec, Policy

from conftest import gaussian_sources, row_rate_losses, symmetric_finite

ZERO_ONE = LossSpec.zero_one(3)


class TestDecisionFunctions:
    def test_f_tilde_plain_max(self):
        assert f_tilde(LossSpec(np.zeros((3, 2))), [0, 0.3, -0.2], 0) == pytest.approx(0.3)

    def test_f_tilde_drops_diagonal(self):
        assert f_tilde(ZERO_ONE, [0, 0.5, 0.2], 1) == pytest.approx(0.2)

    def test_f_tilde_row_rates(self):
        assert f_tilde(LossSpec.from_rates([0, 0, 0.2]), [0, 0, 0], 0) == 0.0

    def test_f_sign_pattern(self):
        z0 = lift([0.5, 0.2])
        assert f(ZERO_ONE, z0, 1) < 0
        assert f(ZERO_ONE, z0, 0) >= 0 and f(ZERO_ONE, z0, 2) >= 0

    def test_tie_point_claimed_by_none(self):
        assert all(f(ZERO_ONE, lift([0, 0]), d) == 0 for d in range(3))

    def test_at_most_one_negative(self):
        rng = np.random.default_rng(0)
        loss = LossSpec.from_rates([0, 0.05, 0.2])
        for z in rng.normal(size=(1000, 2)):
            assert sum(f(loss, lift(z), d) < 0 for d in range(3)) <= 1

    def test_g_single_term(self):
        priors = np.array([0.5, 0.5])
        log_losses = np.array([[-np.inf, math.log(0.3)], [math.log(0.2), -np.inf]])
        z0, n = np.array([0.0, 0.7]), 50
        assert g_tilde(log_losses, priors, z0, 0, n) == pytest.approx(z0[1] + (math.log(0.2) + math.log(0.5)) / n)

    @pytest.mark.parametrize("n", [100, 1000, 10_000])
    def test_gap_bound(self, n):
        loss = LossSpec.from_rates([0, 0, 0.2])
        priors = np.full(3, 1 / 3)
        bound = (math.log(3) + math.log(3)) / n
        rng = np.random.default_rng(n)
        for z in rng.uniform(-1, 1, (300, 2)):
            for d in range(3):
                gap = abs(g(concrete_log_losses(loss, n), priors, lift(z), d, n) - f(loss, lift(z), d))
                assert gap <= bound + 1e-9


class TestBuildRegions:
    def test_zero_one_three_pieces(self):
        regions = build_regions(ZERO_ONE)
        assert [len(p) for p in regions.regions] == [1, 1, 1]
        expected = {
            0: {(-1.0, 0.0, 0.0), (0.0, -1.0, 0.0)},
            1: {(1.0, 0.0, 0.0), (0.7071, -0.7071, 0.0)},
            2: {(0.0, 1.0, 0.0), (-0.7071, 0.7071, 0.0)},
        }
        for d, pieces in enumerate(regions.regions):
            rows = {tuple(np.round(list(r) + [b], 4)) for r, b in zip(pieces[0].G, pieces[0].h)}
            assert rows == expected[d]

    def test_single_decision_rejected(self):
        with pytest.raises(ValueError):
            build_regions(LossSpec(np.zeros((3, 1))))

    def test_enumeration_cap(self):
        from exponentlab.config import Tolerances

        with pytest.raises(EnumerationError):
            build_regions(LossSpec.zero_one(4), Tolerances(enumeration_cap=100))

    def test_merged_hypotheses_share_a_decision(self):
        # decision 0 for hypothesis 0, decision 1 for hypotheses 1 and 2
        loss = LossSpec([[np.inf, 0.0], [0.0, np.inf], [0.0, np.inf]])
        regions = build_regions(loss)
        rng = np.random.default_rng(3)
        for z in rng.uniform(-1, 1, (2000, 2)):
            assert regions.decision_of(z) == regions.decision_of(z[::-1])
            assert regions.decision_of(z) == (1 if z.max() > 0 else 0)

    @pytest.mark.parametrize("rates", [[0, 0, 0], [0, 0, 0.2], [0, 0.05, 0], [0.1, 0.25, 0.0]])
    def test_decomposition_complete(self, rates):
        loss = LossSpec.from_rates(rates)
        regions = build_regions(loss)
        rng = np.random.default_rng(1)
        for z in rng.uniform(-1, 1, (10_000, 2)):
            vals = [f(loss, lift(z), d) for d in range(3)]
            if min(abs(v) for v in vals) < 1e-9:
                continue
            for d in range(3):
                inside = any(p.contains(z) for p in regions.regions[d])
                assert inside == (vals[d] < 0)

    def test_non_square_decomposition(self):
        loss = LossSpec([[np.inf, 0.1], [0.0, np.inf], [0.3, 0.0]])
        regions = build_regions(loss)
        rng = np.random.default_rng(2)
        for z in rng.uniform(-1, 1, (5000, 2)):
            vals = [f(loss, lift(z), d) for d in range(2)]
            if min(abs(v) for v in vals) < 1e-9:
                continue
            assert regions.decision_of(z) == next((d for d in range(2) if vals[d] < 0), None)


# ---------------------------------------------------------------- oracles


def gaussian_rate_quadratic(m, pol):
    """Phi*_m for gaussian sources is 0.5 (z - mean)' S^-1 (z - mean)."""
    cov = sum(w * s.variance * np.outer(llr_model(s).a, llr_model(s).a) for w, s in zip(pol.weights, pol.sources))
    return mean_llr(m, pol), cov


def cvx_region_infimum(loss, d, m, pol):
    """min of Phi*_m over the closure of A(d), via one convex QP per choice of
    maximizers of the competing decisions' f_tilde."""
    rates = loss.rates
    M, D = rates.shape
    mean, cov = gaussian_rate_quadratic(m, pol)
    prec = np.linalg.inv(cov)
    prec = 0.5 * (prec + prec.T)
    others = [e for e in range(D) if e != d]
    best = math.inf
    for choice in itertools.product(range(M), repeat=len(others)):
        if any(math.isinf(rates[mc, e]) for mc, e in zip(choice, others)):
            continue
        z = cp.Variable(M - 1)
        z0 = cp.hstack([0.0, z])
        slack = cp.Variable()
        diffs = [
            z0[mc] - rates[mc, e] - z0[k] + rates[k, d]
            for mc, e in zip(choice, others)
            for k in range(M)
            if math.isfinite(rates[k, d])
        ]
        # cells of pure ties have no interior and are not in the closure of A(d)
        interior = cp.Problem(cp.Maximize(slack), [x >= slack for x in diffs] + [slack <= 1])
        interior.solve(solver=cp.CLARABEL)
        if interior.status not in ("optimal", "optimal_inaccurate") or slack.value < 1e-7:
            continue
        cons = [x >= 0 for x in diffs]
        prob = cp.Problem(cp.Minimize(0.5 * cp.quad_form(z - mean, prec)), cons)
        prob.solve(solver=cp.CLARABEL)
        if prob.status in ("optimal", "optimal_inaccurate"):
            best = min(best, prob.value)
    return best


class TestRegionInfimum:
    def test_binary_chernoff(self, binary_source):
        regions = build_regions(LossSpec.zero_one(2))
        pol = Policy((binary_source,), [1.0])
        res = inf_rate_over_region(0, pol, regions, 1)
        assert res.value == pytest.approx(1 / 8, abs=1e-12)
        assert res.z[0] == pytest.approx(0.0, abs=1e-9)

    def test_mean_inside_gives_zero(self, study_models):
        loss = LossSpec.from_rates([0, 0, 0.2])
        regions = build_regions(loss)
        pol = Policy(study_models, [1.0, 0.0])
        for m in range(3):
            d = regions.decision_of(mean_llr(m, pol))
            assert inf_rate_over_region(m, pol, regions, d).value == 0.0

    def test_hand_value_far_region(self, study_models):
        # expert 2 at x=(1,0): declaring 2 under H=0 needs y > 8.95 under N(-1, 4)
        regions = build_regions(LossSpec.from_rates([0, 0, 0.2]))
        res = inf_rate_over_region(0, Policy(study_models, [1.0, 0.0]), regions, 2)
        assert res.value == pytest.approx(9.95**2 / 8, rel=1e-9)

    def test_unreachable_region_is_infinite(self, study_models):
        regions = build_regions(LossSpec.from_rates([0, 0.05, 0]))
        res = inf_rate_over_region(0, Policy(study_models, [1.0, 0.0]), regions, 1)
        assert res.unbounded

    @settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(gaussian_sources(), row_rate_losses(), st.floats(0.1, 0.9), st.integers(0, 2), st.integers(0, 2))
    def test_matches_cvxpy_oracle(self, models, loss, w, m, d):
        a1, a2 = (llr_model(s).a for s in models)
        if abs(a1[0] * a2[1] - a1[1] * a2[0]) < 1e-2 * np.linalg.norm(a1) * np.linalg.norm(a2):
            return  # nearly parallel: covariance too ill-conditioned for the QP oracle
        pol = Policy(models, [w, 1 - w])
        regions = build_regions(loss)
        ours = inf_rate_over_region(m, pol, regions, d)
        oracle = cvx_region_infimum(loss, d, m, pol)
        assert ours.converged
        assert ours.value == pytest.approx(oracle, rel=1e-5, abs=1e-7)
        if ours.piece is not None:
            assert phi_star(m, pol, ours.z).value == pytest.approx(ours.value, rel=1e-7, abs=1e-10)
            assert abs(ours.gap) <= 1e-7

    @settings(max_examples=40, deadline=None)
    @given(gaussian_sources(), row_rate_losses(), st.floats(0, 1), st.integers(0, 2), st.integers(0, 2))
    def test_zero_iff_mean_in_closure(self, models, loss, w, m, d):
        pol = Policy(models, [w, 1 - w])
        regions = build_regions(loss)
        res = inf_rate_over_region(m, pol, regions, d)
        assert res.value >= 0
        margin = f(loss, lift(mean_llr(m, pol)), d)
        if margin < -1e-9:
            assert res.value == 0
        elif margin > 1e-6:
            assert res.value > 0

    def test_finite_source_against_sampling(self):
        src = symmetric_finite(0.3)
        pol = Policy((src,), [1.0])
        loss = LossSpec.from_rates([0, 0.1, 0.0])
        regions = build_regions(loss)
        res = inf_rate_over_region(0, pol, regions, 1)
        rng = np.random.default_rng(5)
        # no sampled point of the region beats the computed infimum
        pts = rng.uniform(-3, 3, (3000, 2))
        inside = [z for z in pts if f(loss, lift(z), 1) < 0]
        sampled = min(phi_star(0, pol, z).value for z in inside)
        assert res.value <= sampled + 1e-9
        assert res.value == pytest.approx(sampled, abs=0.05)


class TestPairwisePath:
    """The pairwise transform at the rate gap versus the polyhedral infimum."""

    def test_lower_bound_on_study(self, study):
        for e in study.experts:
            c = e.loss.row_rates()
            regions = build_regions(e.loss)
            for w in ([0.5, 0.5], [1.0, 0.0], [0.2, 0.8]):
                pol = Policy(study.models(e.id), w)
                for i, j in itertools.permutations(range(3), 2):
                    poly = inf_rate_over_region(j, pol, regions, i).value
                    pair = lambda_star_tail(j, i, pol, c[i] - c[j]).value
                    assert pair <= poly + 1e-9

    def test_counterexample_with_hypothesis_between(self, study_models):
        regions = build_regions(LossSpec.from_rates([0, 0, 0.2]))
        pol = Policy(study_models, [1.0, 0.0])
        poly = inf_rate_over_region(0, pol, regions, 2).value
        pair = lambda_star(0, 2, pol, 0.2).value
        assert poly == pytest.approx(9.95**2 / 8, rel=1e-9)
        assert pair == pytest.approx(0.245, rel=1e-6)

    def test_equal_when_pair_is_adjacent(self, study_models):
        regions = build_regions(LossSpec.zero_one(3))
        pol = Policy(study_models, [0.5, 0.5])
        poly = inf_rate_over_region(0, pol, regions, 1).value
        pair = lambda_star(0, 1, pol, 0.0).value
        assert poly == pytest.approx(pair, abs=1e-9)
        assert pair == pytest.approx(chernoff_info(0, 1, pol)[0], abs=1e-9)

"""Monte Carlo estimation of probability and loss exponents at finite sample sizes.

Every cell of work is keyed by ``(n index, true hypothesis, chunk, stream)``
and seeded from that key, so counts do not depend on how chunks are spread
over workers.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import linregress

from .config import worker_count
from .mgf import llr_model
from .scenario import FiniteSource, GaussianSource, Policy

EXPERT_STREAM, AGENT_STREAM = 0, 1


@dataclass(frozen=True)
class SimConfig:
    """Sample-size grid, trials per true hypothesis, seed and chunk size."""

    n_grid: tuple
    trials: int = 100_000
    seed: int = 0
    chunk: int = 20_000

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.n_grid or min(self.n_grid) < 1:
            raise ValueError("sample sizes must be >= 1")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("sample sizes must be increasing")
        if self.chunk < 1:
            raise ValueError("chunk must be >= 1")

    @classmethod
    def load(cls, path) -> "SimConfig":
        doc = json.loads(Path(path).read_text())
        return cls(tuple(doc["n_grid"]), int(doc.get("trials", 100_000)),
                   int(doc.get("seed", 0)), int(doc.get("chunk", 20_000)))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SlopeEstimate:
    """Least-squares slope of ``log(value)`` against ``n``.

    Only the upper half of the grid enters the fit, and cells with a zero
    count are censored.  ``bound`` holds ``log(1/trials)`` for censored cells.
    """

    slope: float
    stderr: float
    n: tuple
    log_values: tuple
    censored: tuple
    bound: float

    @property
    def fitted(self) -> bool:
        return math.isfinite(self.slope)


def estimate_slope(n_grid, values, trials: int) -> SlopeEstimate:
    n_grid = np.asarray(n_grid, dtype=float)
    values = np.asarray(values, dtype=float)
    censored = values <= 0
    with np.errstate(divide="ignore"):
        logs = np.log(values)
    upper = np.arange(len(n_grid)) >= len(n_grid) // 2
    use = upper & ~censored
    if use.sum() >= 3:
        fit = linregress(n_grid[use], logs[use])
        slope, err = float(fit.slope), float(fit.stderr)
    else:
        slope, err = math.nan, math.nan
    return SlopeEstimate(
        slope, err, tuple(int(n) for n in n_grid), tuple(float(v) for v in logs),
        tuple(bool(c) for c in censored), -math.log(trials),
    )


def adaptive_grid(exponent: float, points: int = 10, depth: float = 8.0) -> tuple:
    """Sample sizes up to where ``exp(-n * exponent)`` reaches ``exp(-depth)``.

    The default keeps the rarest cell near 1e-3 to 1e-4, which 1e5 trials
    resolve.
    """
    n_max = max(int(round(depth / exponent)), 2 * points)
    return tuple(int(n) for n in np.unique(np.linspace(n_max / 5, n_max, points).astype(int)))


def allocation(policy: Policy, n: int) -> np.ndarray:
    """Observations per source ``floor(x[g] n)``; the remainder is not used."""
    return np.floor(policy.weights * n + 1e-9).astype(int)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def sample_llr_sums(policy: Policy, counts: np.ndarray, m: int, size: int, rng) -> np.ndarray:
    """Sums of LLR vectors over ``counts[g]`` draws per source under hypothesis ``m``.

    Draws the exact sufficient statistic of each source rather than the
    individual observations.
    """
    M = policy.sources[0].M
    total = np.zeros((size, M - 1))
    for src, k in zip(policy.sources, counts):
        if k == 0:
            continue
        model = llr_model(src)
        if isinstance(src, GaussianSource):
            sums = rng.normal(k * src.means[m], math.sqrt(k * src.variance), size)
            total += np.outer(sums, model.a) + k * model.b
        elif isinstance(src, FiniteSource):
            tallies = rng.multinomial(k, src.probs[m], size)
            total += tallies @ model.table
        else:
            raise TypeError(f"unsupported source {src!r}")
    return total


def bayes_decisions(llr: np.ndarray, rates: np.ndarray, priors, n: int) -> np.ndarray:
    """Minimum expected-loss decision for losses ``exp(-n c)``, lowest index on ties."""
    T = llr.shape[0]
    z0 = np.hstack([np.zeros((T, 1)), llr])
    with np.errstate(invalid="ignore"):
        terms = np.log(priors)[None, :, None] - n * rates[None, :, :] + z0[:, :, None]
    scores = logsumexp(terms, axis=1)
    return np.argmin(scores, axis=1)


def _chunks(trials: int, chunk: int):
    return [(c, min(chunk, trials - c * chunk)) for c in range(math.ceil(trials / chunk))]


def _map(fn, jobs):
    workers = worker_count()
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, jobs))


@dataclass
class ExpertSimulation:
    counts: np.ndarray  # (len(n_grid), M, d)
    probability_slopes: dict  # (m, d) -> SlopeEstimate
    loss_slope: SlopeEstimate
    expected_loss: np.ndarray
    config: SimConfig


def simulate_expert(rates, priors, policy: Policy, config: SimConfig) -> ExpertSimulation:
    """Tally the expert's finite-sample Bayes decisions for each true hypothesis."""
    rates = np.asarray(rates, dtype=float)
    priors = np.asarray(priors, dtype=float)
    M, D = rates.shape
    counts = np.zeros((len(config.n_grid), M, D), dtype=np.int64)

    def work(job):
        ni, m, c, size = job
        n = config.n_grid[ni]
        rng = _rng(config.seed, ni, m, c, EXPERT_STREAM)
        llr = sample_llr_sums(policy, allocation(policy, n), m, size, rng)
        return ni, m, np.bincount(bayes_decisions(llr, rates, priors, n), minlength=D)

    jobs = [(ni, m, c, size) for ni in range(len(config.n_grid)) for m in range(M)
            for c, size in _chunks(config.trials, config.chunk)]
    for ni, m, tally in _map(work, jobs):
        counts[ni, m] += tally
    freq = counts / config.trials
    slopes = {(m, d): estimate_slope(config.n_grid, freq[:, m, d], config.trials)
              for m in range(M) for d in range(D)}
    n = np.asarray(config.n_grid, dtype=float)
    with np.errstate(over="ignore"):
        losses = np.exp(-n[:, None, None] * rates[None])
    expected = np.einsum("m,kmd,kmd->k", priors, freq, losses)
    return ExpertSimulation(counts, slopes, estimate_slope(config.n_grid, expected, config.trials),
                            expected, config)


def pair_thresholds(c0, matrix: Optional[np.ndarray], q: float, d: Optional[int]) -> np.ndarray:
    """``h[j, i]`` such that hypothesis ``i`` survives ``j`` when ``llr_ji / n <= h[j, i]``."""
    c0 = np.asarray(c0, dtype=float)
    M = len(c0)
    h = -c0[None, :] + c0[:, None]  # -c0(i) + c0(j), indexed [j, i]
    if matrix is not None and q > 0:
        e = np.asarray(matrix, dtype=float)[:, d]
        with np.errstate(invalid="ignore"):
            expert_part = q * (e[:, None] - e[None, :])  # q (E[j] - E[i])
        h = h + np.nan_to_num(expert_part, nan=0.0, posinf=np.inf, neginf=-np.inf)
    return h


@dataclass
class AgentSimulation:
    errors: np.ndarray  # (len(n_grid), M) wrong declarations
    expert_counts: np.ndarray  # (len(n_grid), M, d)
    no_survivor: np.ndarray
    several_survivors: np.ndarray
    loss_slope: SlopeEstimate
    expected_loss: np.ndarray
    config: SimConfig

    @property
    def fallback_rate(self) -> float:
        total = self.errors.shape[1] * self.config.trials * self.errors.shape[0]
        return float((self.no_survivor.sum() + self.several_survivors.sum()) / total)


def simulate_agent0(
    priors,
    c0,
    agent_policy: Policy,
    config: SimConfig,
    expert_rates=None,
    expert_policy: Optional[Policy] = None,
    matrix=None,
    q: float = 0.0,
) -> AgentSimulation:
    """Simulate agent 0's pairwise threshold rule, optionally after an expert's decision.

    Agent 0 declares the ``i`` minimizing ``max_{j != i} llr_ji / n - h[j, i]``;
    when this is positive (no survivor) or several ``i`` survive, the same
    argmin is used and the event is counted.
    """
    priors = np.asarray(priors, dtype=float)
    c0 = np.asarray(c0, dtype=float)
    M = len(priors)
    use_expert = q > 0 and expert_rates is not None
    D = np.asarray(expert_rates).shape[1] if use_expert else 1
    thresholds = [pair_thresholds(c0, matrix, q, d) if use_expert else pair_thresholds(c0, None, 0, None)
                  for d in range(D)]
    off = ~np.eye(M, dtype=bool)
    G = len(config.n_grid)
    errors = np.zeros((G, M), dtype=np.int64)
    expert_counts = np.zeros((G, M, D), dtype=np.int64)
    none_ct = np.zeros((G, M), dtype=np.int64)
    many_ct = np.zeros((G, M), dtype=np.int64)

    def work(job):
        ni, m, c, size = job
        n0 = config.n_grid[ni]
        if use_expert:
            nk = int(round(q * n0))
            rng_k = _rng(config.seed, ni, m, c, EXPERT_STREAM)
            llr_k = sample_llr_sums(expert_policy, allocation(expert_policy, nk), m, size, rng_k)
            dec = bayes_decisions(llr_k, np.asarray(expert_rates, dtype=float), priors, nk)
        else:
            dec = np.zeros(size, dtype=int)
        rng_0 = _rng(config.seed, ni, m, c, AGENT_STREAM)
        llr0 = sample_llr_sums(agent_policy, allocation(agent_policy, n0), m, size, rng_0)
        z0 = np.hstack([np.zeros((size, 1)), llr0]) / n0
        pair = z0[:, :, None] - z0[:, None, :]  # [t, j, i] = llr_ji / n
        h = np.stack(thresholds)[dec]  # [t, j, i]
        excess = np.where(off[None], pair - h, -np.inf)
        worst = excess.max(axis=1)  # per candidate i
        declared = np.argmin(worst, axis=1)
        survivors = (worst <= 0).sum(axis=1)
        return (ni, m, int((declared != m).sum()), np.bincount(dec, minlength=D),
                int((survivors == 0).sum()), int((survivors > 1).sum()))

    jobs = [(ni, m, c, size) for ni in range(G) for m in range(M)
            for c, size in _chunks(config.trials, config.chunk)]
    for ni, m, err, tally, none, many in _map(work, jobs):
        errors[ni, m] += err
        expert_counts[ni, m] += tally
        none_ct[ni, m] += none
        many_ct[ni, m] += many
    n = np.asarray(config.n_grid, dtype=float)
    expected = (errors / config.trials * np.exp(-n[:, None] * c0[None, :])) @ priors
    return AgentSimulation(errors, expert_counts, none_ct, many_ct,
                           estimate_slope(config.n_grid, expected, config.trials), expected, config)


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    sup_gap: float
    bound: float


def verify_uniform_convergence(
    rates, priors, n_grid: Sequence[int], samples: int = 10_000, seed: int = 0, scale: float = 2.0
) -> list:
    """Largest ``|g - f|`` over uniformly sampled ``z`` for each sample size."""
    rates = np.asarray(rates, dtype=float)
    priors = np.asarray(priors, dtype=float)
    M, D = rates.shape
    zs = _rng(seed, 0).uniform(-scale, scale, (samples, M - 1))
    z0 = np.hstack([np.zeros((samples, 1)), zs])
    bound_const = math.log(M) + float(np.max(np.abs(np.log(priors))))
    limit = np.max(z0[:, :, None] - rates[None], axis=1)  # f_tilde, (samples, D)
    rows = []
    for n in n_grid:
        with np.errstate(divide="ignore"):
            log_c = -n * rates
            finite = logsumexp(np.log(priors)[None, :, None] + log_c[None] + n * z0[:, :, None], axis=1) / n
        gap = 0.0
        for d in range(D):
            others = np.delete(np.arange(D), d)
            g_d = finite[:, d] - finite[:, others].min(axis=1)
            f_d = limit[:, d] - limit[:, others].min(axis=1)
            gap = max(gap, float(np.max(np.abs(g_d - f_d))))
        rows.append(ConvergenceRow(int(n), gap, bound_const / n))
    return rows

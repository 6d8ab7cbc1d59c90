"""Three-hypothesis, two-source Gaussian study with three experts.

Both sources separate hypotheses 0 and 2 equally well; source ``g1`` puts
hypothesis 1 at ``+delta`` and ``g2`` at ``-delta``.  The experts differ only
in their loss rates.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .scenario import Agent0, Expert, GaussianSource, LossSpec, Scenario, load_scenario

EXPERT_RATES = {1: (0.0, 0.0, 0.0), 2: (0.0, 0.0, 0.2), 3: (0.0, 0.05, 0.0)}

# Reference results for delta = 0.9, sigma = 2, q = 1, c0 = expert 3's rates.
REFERENCE = {
    "expert_policy": {1: (0.5, 0.5), 2: (1.0, 0.0), 3: (0.5, 0.5)},
    "agent_policy": {1: (0.5, 0.5), 2: (0.2117, 0.7883), 3: (0.5, 0.5)},
    "agent_exponent": {1: 0.1099, 2: 0.1158, 3: 0.1066},
    "chosen": 2,
    # agent 0 with the 0-1 loss, evaluated at x0 = (0.5, 0.5)
    "zero_one_exponent": {1: 0.0884, 2: 0.0566, 3: 0.0750},
    "zero_one_chosen": 1,
    "initial_guesses": ((0.0, 1.0), (0.3, 0.7)),
    "deltas": (0.5, 0.7, 0.9, 1.0),
}


def three_expert_scenario(
    delta: float = 0.9, sigma: float = 2.0, q: float = 1.0, agent_rates=EXPERT_RATES[3]
) -> Scenario:
    sources = (
        GaussianSource("g1", [-1.0, delta, 1.0], sigma**2),
        GaussianSource("g2", [-1.0, -delta, 1.0], sigma**2),
    )
    ids = ("g1", "g2")
    experts = tuple(Expert(k, ids, LossSpec.from_rates(c), q) for k, c in EXPERT_RATES.items())
    agent0 = Agent0(ids, LossSpec.from_rates(agent_rates))
    return Scenario(np.full(3, 1.0 / 3.0), sources, agent0, experts)


def bundled_scenario() -> Scenario:
    """The delta = 0.9 study as shipped in the package data."""
    ref = resources.files("exponentlab") / "data" / "three_expert_gaussian.json"
    with resources.as_file(ref) as path:
        return load_scenario(path)

"""Large-deviations loss exponents, observation policies and expert choice
for multihypothesis social learning, with a Monte Carlo cross-check."""

from exponentlab.scenario import (
    Agent0,
    Expert,
    FiniteSource,
    GaussianSource,
    LossSpec,
    Policy,
    Scenario,
    ScenarioError,
    canonicalize_loss,
    load_scenario,
    save_scenario,
)

__all__ = [
    "Agent0",
    "Expert",
    "FiniteSource",
    "GaussianSource",
    "LossSpec",
    "Policy",
    "Scenario",
    "ScenarioError",
    "canonicalize_loss",
    "load_scenario",
    "save_scenario",
]

__version__ = "0.1.0"

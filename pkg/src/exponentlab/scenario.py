"""Problem instances: hypotheses, information sources, agent 0 and experts.

Loss-decay rates use IEEE ``inf`` for an exactly-zero loss, so the usual float
rules give ``z - inf == -inf`` and a ``max`` simply drops such terms.  In the
JSON scenario format the value is written as the string ``"inf"``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

SCHEMA_VERSION = 1
_SUM_TOL = 1e-12


class ScenarioError(ValueError):
    """Raised when a scenario violates one of its invariants."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LossSpec:
    """Matrix of loss-decay rates ``c(m, d)`` of shape ``(M, d)``."""

    rates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rates", _frozen(self.rates))
        r = self.rates
        if r.ndim != 2 or r.shape[0] < 1 or r.shape[1] < 1:
            raise ScenarioError("loss", f"expected a 2-D matrix, got shape {r.shape}")
        if np.isnan(r).any():
            raise ScenarioError("loss", "NaN rate")
        if (r < 0).any():
            raise ScenarioError("loss", "rates must be >= 0")
        if np.isinf(r).all(axis=0).any():
            d = int(np.flatnonzero(np.isinf(r).all(axis=0))[0])
            raise ScenarioError("loss", f"decision {d} has no finite rate")

    @classmethod
    def from_rates(cls, c: Sequence[float]) -> "LossSpec":
        """Square loss with ``c(m, m) = inf`` and ``c(m, d) = c[m]`` otherwise."""
        c = np.asarray(c, dtype=float)
        rates = np.repeat(c[:, None], len(c), axis=1)
        np.fill_diagonal(rates, np.inf)
        return cls(rates)

    @classmethod
    def zero_one(cls, M: int) -> "LossSpec":
        return cls.from_rates(np.zeros(M))

    @property
    def M(self) -> int:
        return self.rates.shape[0]

    @property
    def d(self) -> int:
        return self.rates.shape[1]

    def is_diagonal_free(self) -> bool:
        """Square, infinite diagonal, row-constant off the diagonal."""
        r = self.rates
        if r.shape[0] != r.shape[1]:
            return False
        if not np.isinf(np.diag(r)).all():
            return False
        off = ~np.eye(r.shape[0], dtype=bool)
        if not np.isfinite(r[off]).all():
            return False
        return all(np.all(r[m, off[m]] == r[m, off[m]][0]) for m in range(r.shape[0]) if off[m].any())

    def row_rates(self) -> np.ndarray:
        """``c(m)`` for a diagonal-free loss."""
        if not self.is_diagonal_free():
            raise ScenarioError("loss", "not of the form c(m,m)=inf, c(m,d)=c(m)")
        M = self.M
        if M == 1:
            return np.zeros(1)
        return np.array([self.rates[m, (m + 1) % M] for m in range(M)])

    def __eq__(self, other):
        return isinstance(other, LossSpec) and np.array_equal(self.rates, other.rates)

    __hash__ = object.__hash__


def canonicalize_loss(spec: LossSpec) -> LossSpec:
    """Shift finite rates so that the smallest finite one is 0."""
    r = spec.rates
    finite = np.isfinite(r)
    shift = r[finite].min()
    if shift == 0:
        return spec
    out = r.copy()
    out[finite] -= shift
    return LossSpec(out)


@dataclass(frozen=True, eq=False)
class GaussianSource:
    """Per-hypothesis means with one shared variance."""

    id: str
    means: np.ndarray
    variance: float
    kind: str = field(default="gaussian", init=False)

    def __post_init__(self):
        object.__setattr__(self, "means", _frozen(self.means))
        if self.means.ndim != 1:
            raise ScenarioError(f"sources[{self.id}].means", "must be a vector")
        if not np.isfinite(self.means).all():
            raise ScenarioError(f"sources[{self.id}].means", "must be finite")
        if not (math.isfinite(self.variance) and self.variance > 0):
            raise ScenarioError(f"sources[{self.id}].variance", "must be > 0")

    @property
    def M(self) -> int:
        return len(self.means)

    def params(self) -> dict:
        return {"means": self.means.tolist(), "variance": float(self.variance)}


@dataclass(frozen=True, eq=False)
class FiniteSource:
    """Per-hypothesis probability vectors on a common finite support."""

    id: str
    probs: np.ndarray
    kind: str = field(default="finite", init=False)

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(self.probs))
        p = self.probs
        name = f"sources[{self.id}].probs"
        if p.ndim != 2:
            raise ScenarioError(name, "must be an M x S matrix")
        if not (np.isfinite(p).all() and (p > 0).all()):
            raise ScenarioError(name, "every entry must be strictly positive")
        if np.abs(p.sum(axis=1) - 1).max() > _SUM_TOL:
            raise ScenarioError(name, "each row must sum to 1")

    @property
    def M(self) -> int:
        return self.probs.shape[0]

    def params(self) -> dict:
        return {"probs": self.probs.tolist()}


SourceModel = Union[GaussianSource, FiniteSource]


@dataclass(frozen=True, eq=False)
class Policy:
    """Fractions of an agent's observations drawn from each of its sources."""

    sources: tuple
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "weights", _frozen(self.weights))
        w = self.weights
        if w.shape != (len(self.sources),):
            raise ScenarioError("policy", "one weight per source required")
        if (w < 0).any() or not np.isfinite(w).all():
            raise ScenarioError("policy", "weights must be >= 0")
        if abs(w.sum() - 1) > _SUM_TOL:
            raise ScenarioError("policy", "weights must sum to 1")

    @classmethod
    def normalized(cls, sources, weights) -> "Policy":
        """Build a policy after clipping tiny negatives and renormalizing."""
        w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        return cls(sources, w / w.sum())

    @classmethod
    def vertex(cls, sources, index: int) -> "Policy":
        w = np.zeros(len(sources))
        w[index] = 1.0
        return cls(sources, w)

    @classmethod
    def barycenter(cls, sources) -> "Policy":
        n = len(sources)
        return cls(sources, np.full(n, 1.0 / n))

    def with_weights(self, weights) -> "Policy":
        return Policy.normalized(self.sources, weights)

    @property
    def ids(self) -> tuple:
        return tuple(s.id for s in self.sources)

    def __len__(self):
        return len(self.sources)

    def __repr__(self):
        inner = ", ".join(f"{i}={w:.6g}" for i, w in zip(self.ids, self.weights))
        return f"Policy({inner})"


@dataclass(frozen=True, eq=False)
class Agent0:
    sources: tuple
    loss: LossSpec

    @property
    def rates(self) -> np.ndarray:
        """``c_0(m)``, the decay rate of every wrong declaration under ``H = m``."""
        return self.loss.row_rates()


@dataclass(frozen=True, eq=False)
class Expert:
    id: int
    sources: tuple
    loss: LossSpec
    q: float

    @property
    def d(self) -> int:
        return self.loss.d


@dataclass(frozen=True, eq=False)
class Scenario:
    priors: np.ndarray
    sources: tuple
    agent0: Agent0
    experts: tuple

    def __post_init__(self):
        object.__setattr__(self, "priors", _frozen(self.priors))
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "experts", tuple(self.experts))
        self._validate()

    @property
    def M(self) -> int:
        return len(self.priors)

    def _validate(self):
        M = self.M
        p = self.priors
        if M < 1:
            raise ScenarioError("hypotheses.M", "must be a positive integer")
        if ((p <= 0) | (p >= 1)).any() and M > 1:
            raise ScenarioError("hypotheses.priors", "each prior must lie in (0, 1)")
        if abs(p.sum() - 1) > _SUM_TOL:
            raise ScenarioError("hypotheses.priors", "priors must sum to 1")
        ids = [s.id for s in self.sources]
        if len(set(ids)) != len(ids):
            raise ScenarioError("sources", "duplicate source id")
        for s in self.sources:
            if s.M != M:
                raise ScenarioError(f"sources[{s.id}]", f"expected {M} hypotheses, got {s.M}")
        self._check_source_set("agent0.sources", self.agent0.sources)
        if self.agent0.loss.rates.shape != (M, M) or not self.agent0.loss.is_diagonal_free():
            raise ScenarioError(
                "agent0.loss", "must be M x M with c(m,m)=inf and c(m,d)=c(m) for d != m"
            )
        seen = set()
        for e in self.experts:
            name = f"experts[{e.id}]"
            if not (isinstance(e.id, (int, np.integer)) and e.id >= 1):
                raise ScenarioError(f"{name}.id", "must be a positive integer")
            if e.id in seen:
                raise ScenarioError(f"{name}.id", "duplicate expert id")
            seen.add(e.id)
            self._check_source_set(f"{name}.sources", e.sources)
            if e.loss.M != M:
                raise ScenarioError(f"{name}.loss", f"expected {M} rows, got {e.loss.M}")
            if not 1 <= e.d <= M:
                raise ScenarioError(f"{name}.d", "decision-space size must lie in [1, M]")
            if not (math.isfinite(e.q) and e.q > 0):
                raise ScenarioError(f"{name}.q", "q_k must be > 0")

    def _check_source_set(self, name, ids):
        if len(ids) == 0:
            raise ScenarioError(name, "source set must be nonempty")
        if len(set(ids)) != len(ids):
            raise ScenarioError(name, "duplicate source in source set")
        known = {s.id for s in self.sources}
        for i in ids:
            if i not in known:
                raise ScenarioError(name, f"unknown source {i!r}")

    def source(self, sid: str) -> SourceModel:
        for s in self.sources:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def expert(self, k: int) -> Expert:
        for e in self.experts:
            if e.id == k:
                return e
        raise KeyError(k)

    def models(self, k: int = 0) -> tuple:
        """Source models of agent ``k`` (0 is agent 0)."""
        ids = self.agent0.sources if k == 0 else self.expert(k).sources
        return tuple(self.source(i) for i in ids)

    def policy(self, k: int, weights) -> Policy:
        return Policy(self.models(k), weights)

    def with_agent0_loss(self, loss: LossSpec) -> "Scenario":
        return Scenario(self.priors, self.sources, Agent0(self.agent0.sources, loss), self.experts)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "hypotheses": {"M": self.M, "priors": self.priors.tolist()},
            "sources": [{"id": s.id, "kind": s.kind, "params": s.params()} for s in self.sources],
            "agent0": {
                "sources": list(self.agent0.sources),
                "loss": _encode_matrix(self.agent0.loss.rates),
            },
            "experts": [
                {
                    "id": int(e.id),
                    "sources": list(e.sources),
                    "d": e.d,
                    "loss": _encode_matrix(e.loss.rates),
                    "q": float(e.q),
                }
                for e in self.experts
            ],
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _encode_matrix(a: np.ndarray) -> list:
    return [["inf" if math.isinf(v) else float(v) for v in row] for row in a]


def _number(v, name) -> float:
    if isinstance(v, bool):
        raise ScenarioError(name, f"not a number: {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        if v.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        try:
            return float(Fraction(v.strip()))
        except (ValueError, ZeroDivisionError):
            pass
    raise ScenarioError(name, f"not a number: {v!r}")


def _numbers(seq, name) -> list:
    if not isinstance(seq, list):
        raise ScenarioError(name, "expected a list")
    return [_number(v, f"{name}[{i}]") for i, v in enumerate(seq)]


def _matrix(rows, name) -> np.ndarray:
    if not isinstance(rows, list) or not rows:
        raise ScenarioError(name, "expected a nonempty list of rows")
    out = [_numbers(r, f"{name}[{i}]") for i, r in enumerate(rows)]
    if len({len(r) for r in out}) != 1:
        raise ScenarioError(name, "ragged matrix")
    return np.array(out, dtype=float)


def _require(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise ScenarioError(f"{where}.{key}" if where else key, "missing")
    return d[key]


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("<root>", "expected a JSON object")
    schema = doc.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ScenarioError("schema", f"unsupported schema {schema!r}")
    hyp = _require(doc, "hypotheses", "")
    priors = _numbers(_require(hyp, "priors", "hypotheses"), "hypotheses.priors")
    if "M" in hyp and hyp["M"] != len(priors):
        raise ScenarioError("hypotheses.M", "does not match the number of priors")
    sources = []
    for i, s in enumerate(_require(doc, "sources", "")):
        sid = str(_require(s, "id", f"sources[{i}]"))
        kind = _require(s, "kind", f"sources[{i}]")
        params = _require(s, "params", f"sources[{i}]")
        if kind == "gaussian":
            means = _numbers(_require(params, "means", f"sources[{sid}].params"), f"sources[{sid}].means")
            if "variance" in params:
                var = _number(params["variance"], f"sources[{sid}].variance")
            else:
                var = _number(_require(params, "sigma", f"sources[{sid}].params"), f"sources[{sid}].sigma") ** 2
            sources.append(GaussianSource(sid, means, var))
        elif kind == "finite":
            probs = _matrix(_require(params, "probs", f"sources[{sid}].params"), f"sources[{sid}].probs")
            sources.append(FiniteSource(sid, probs))
        else:
            raise ScenarioError(f"sources[{sid}].kind", f"unknown kind {kind!r}")
    a0 = _require(doc, "agent0", "")
    agent0 = Agent0(
        tuple(str(x) for x in _require(a0, "sources", "agent0")),
        LossSpec(_matrix(_require(a0, "loss", "agent0"), "agent0.loss")),
    )
    experts = []
    for i, e in enumerate(doc.get("experts", [])):
        kid = _require(e, "id", f"experts[{i}]")
        name = f"experts[{kid}]"
        loss = LossSpec(_matrix(_require(e, "loss", name), f"{name}.loss"))
        if "d" in e and e["d"] != loss.d:
            raise ScenarioError(f"{name}.d", "does not match the loss matrix width")
        experts.append(
            Expert(
                int(kid),
                tuple(str(x) for x in _require(e, "sources", name)),
                loss,
                _number(_require(e, "q", name), f"{name}.q"),
            )
        )
    return Scenario(np.array(priors), tuple(sources), agent0, tuple(experts))


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Read and validate a scenario file.

    Raises
    ------
    ScenarioError
        On malformed JSON (field ``<parse>``) or any violated invariant.
    """
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("<parse>", str(exc)) from exc
    return scenario_from_dict(doc)


def save_scenario(scenario: Scenario, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2) + "\n")


def simplex_vertices_and_center(sources: Iterable) -> list:
    """Default multistart set: every vertex plus the barycenter."""
    sources = tuple(sources)
    guesses = [Policy.vertex(sources, i) for i in range(len(sources))]
    if len(sources) > 1:
        guesses.append(Policy.barycenter(sources))
    return guesses

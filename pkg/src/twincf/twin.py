"""Twin-network counterfactual inference and the abduction-action-prediction baseline."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import NoAcceptedSamples, SpecError, UnknownVariable, ZeroEvidence
from .scm import (
    EVIDENCE_FLOOR,
    DistTable,
    Mechanism,
    Scm,
    VariableDecl,
    default_enum_cap,
    do,
    enumerate_worlds,
    propagate,
    sample_latents,
)

__all__ = [
    "Event",
    "CounterfactualQuery",
    "TwinNetwork",
    "Estimate",
    "BenchReport",
    "build_twin",
    "star",
    "counterfactual_exact",
    "counterfactual_joint",
    "counterfactual_mc",
    "counterfactual_aap",
    "bench_compare",
]

_OPS = ("eq", "ge", "le")


def star(name: str) -> str:
    return name + "*"


@dataclass(frozen=True)
class Event:
    """``var <op> value``; ``ge``/``le`` compare ranks under ``order`` when given.

    ``world`` selects the counterfactual (starred) copy or the factual one.
    """

    var: str
    op: str = "eq"
    value: int = 0
    world: str = "counterfactual"
    order: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.op not in _OPS:
            raise SpecError(f"unknown event op {self.op!r}")
        if self.world not in ("counterfactual", "factual"):
            raise SpecError(f"unknown world {self.world!r}")

    def column(self) -> str:
        return star(self.var) if self.world == "counterfactual" else self.var

    def holds(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values)
        if self.op == "eq":
            return values == self.value
        if self.order is None:
            lhs, rhs = values, self.value
        else:
            rank = np.empty(len(self.order), dtype=np.int64)
            rank[list(self.order)] = np.arange(len(self.order))
            lhs, rhs = rank[values], rank[self.value]
        return lhs >= rhs if self.op == "ge" else lhs <= rhs

    def to_dict(self) -> dict:
        d = {"var": self.var, "event": {"op": self.op, "value": self.value}}
        if self.world != "counterfactual":
            d["world"] = self.world
        if self.order is not None:
            d["event"]["order"] = list(self.order)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Event":
        ev = d.get("event", {"op": "eq", "value": d.get("value", 0)})
        order = ev.get("order")
        return cls(
            var=d["var"],
            op=ev.get("op", "eq"),
            value=int(ev["value"]),
            world=d.get("world", "counterfactual"),
            order=tuple(int(o) for o in order) if order is not None else None,
        )


@dataclass(frozen=True)
class CounterfactualQuery:
    """``P(target | evidence)`` with ``factual_do`` applied to the factual world
    and ``cf_do`` to the counterfactual world."""

    target: tuple[Event, ...]
    evidence: Mapping[str, int] = field(default_factory=dict)
    factual_do: Mapping[str, int] = field(default_factory=dict)
    cf_do: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.target, Event):
            object.__setattr__(self, "target", (self.target,))
        else:
            object.__setattr__(self, "target", tuple(self.target))
        for name in ("evidence", "factual_do", "cf_do"):
            object.__setattr__(self, name, {k: int(v) for k, v in getattr(self, name).items()})
        if not self.target:
            raise SpecError("a query needs at least one target event")
        if not self.cf_do:
            raise SpecError("cf_do is empty; use a plain conditional instead")

    def to_dict(self) -> dict:
        target = [e.to_dict() for e in self.target]
        return {
            "target": target[0] if len(target) == 1 else target,
            "evidence": dict(self.evidence),
            "factual_do": dict(self.factual_do),
            "cf_do": dict(self.cf_do),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "CounterfactualQuery":
        raw = d["target"]
        events = [Event.from_dict(raw)] if isinstance(raw, Mapping) else [Event.from_dict(e) for e in raw]
        return cls(
            target=tuple(events),
            evidence=d.get("evidence", {}),
            factual_do=d.get("factual_do", {}),
            cf_do=d.get("cf_do", {}),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CounterfactualQuery":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n_effective: int

    def to_dict(self) -> dict:
        return {"estimate": self.value, "stderr": self.stderr, "n_accepted": self.n_effective}


def binomial_estimate(hits: np.ndarray) -> Estimate:
    n = int(hits.size)
    p = float(hits.mean())
    return Estimate(p, math.sqrt(p * (1.0 - p) / n), n)


@dataclass(frozen=True, eq=False)
class TwinNetwork:
    """Factual and counterfactual copies sharing every latent.

    Counterfactual copies in ``cut_set`` have their parents removed; their
    mechanisms are placeholders until :meth:`intervene` fixes their values.
    """

    graph: Scm
    cut_set: frozenset[str]
    base: Scm

    def intervene(self, cf_do: Mapping[str, int], factual_do: Mapping[str, int] | None = None) -> Scm:
        cf_do = self.base.check_assignment(cf_do)
        factual_do = self.base.check_assignment(factual_do or {})
        if {star(v) for v in cf_do} != self.cut_set:
            raise SpecError(
                f"counterfactual intervention {sorted(cf_do)} does not match the cut set "
                f"{sorted(self.cut_set)}"
            )
        mechs = {star(v): Mechanism.constant(star(v), x) for v, x in cf_do.items()}
        mechs.update({v: Mechanism.constant(v, x) for v, x in factual_do.items()})
        return self.graph.replace(mechs)


def build_twin(scm: Scm, cf_intervention_vars: Iterable[str]) -> TwinNetwork:
    """Duplicate the observed part of ``scm``; starred copies share the latents."""
    cut = set(cf_intervention_vars)
    for v in cut:
        if v not in scm.variables:
            raise UnknownVariable(v)
        if scm.variables[v].kind != "observed":
            raise SpecError(f"cannot cut latent variable {v!r}")
    for v in scm.observed:
        if v.endswith("*"):
            raise SpecError(f"observed name {v!r} clashes with the twin naming scheme")

    def starred(p: str) -> str:
        return star(p) if scm.variables[p].kind == "observed" else p

    variables = list(scm.variables.values())
    variables += [
        VariableDecl(star(d.name), d.kind, d.cardinality)
        for d in scm.variables.values()
        if d.kind == "observed"
    ]
    mechanisms = list(scm.mechanisms.values())
    for v in scm.observed:
        if v in cut:
            mechanisms.append(Mechanism.constant(star(v), 0))
        else:
            m = scm.mechanisms[v]
            mechanisms.append(Mechanism(star(v), tuple(starred(p) for p in m.parents), m.table))
    graph = Scm(variables, mechanisms, scm.latents.values())
    return TwinNetwork(graph, frozenset(star(v) for v in cut), scm)


def _check_query(scm: Scm, q: CounterfactualQuery) -> None:
    for e in q.target:
        if e.var not in scm.variables or scm.variables[e.var].kind != "observed":
            raise UnknownVariable(e.var)
        if not 0 <= e.value < scm.card(e.var):
            raise SpecError(f"event value {e.value} out of range for {e.var!r}")
    scm.check_assignment(q.evidence)


def _target_mask(values: Mapping[str, np.ndarray], q: CounterfactualQuery) -> np.ndarray:
    hits = None
    for e in q.target:
        h = e.holds(values[e.column()])
        hits = h if hits is None else hits & h
    return hits


def _evidence_mask(values: Mapping[str, np.ndarray], evidence: Mapping[str, int], n: int) -> np.ndarray:
    m = np.ones(n, dtype=bool)
    for k, v in evidence.items():
        m &= values[k] == v
    return m


def counterfactual_exact(scm: Scm, q: CounterfactualQuery, cap: int | None = None) -> float:
    """Exact ``P(target* | evidence)`` in the intervened twin network."""
    _check_query(scm, q)
    model = build_twin(scm, q.cf_do).intervene(q.cf_do, q.factual_do)
    worlds = enumerate_worlds(model, cap)
    ev = worlds.mask(q.evidence)
    pe = float(worlds.weights[ev].sum())
    if pe < EVIDENCE_FLOOR:
        raise ZeroEvidence(dict(q.evidence), pe)
    hit = ev & _target_mask(worlds.values, q)
    return float(worlds.weights[hit].sum() / pe)


def counterfactual_joint(
    scm: Scm,
    factual_do: Mapping[str, int],
    cf_do: Mapping[str, int],
    variables: Sequence[str],
    cap: int | None = None,
) -> DistTable:
    """Exact joint table over factual and starred variables of the twin network.

    ``P(Y_x = y, Y_x' = y')`` is the entry ``(Y=y, Y*=y')`` with
    ``factual_do={X: x}`` and ``cf_do={X: x'}``.
    """
    model = build_twin(scm, cf_do).intervene(cf_do, factual_do)
    return DistTable.from_worlds(enumerate_worlds(model, cap), variables)


def counterfactual_mc(scm: Scm, q: CounterfactualQuery, n: int, seed) -> Estimate:
    """Rejection sampling in the twin network: draw latents once, propagate both
    worlds, keep draws that reproduce the evidence."""
    _check_query(scm, q)
    model = build_twin(scm, q.cf_do).intervene(q.cf_do, q.factual_do)
    rng = np.random.default_rng(seed)
    values = propagate(model, sample_latents(model, n, rng), n)
    accepted = _evidence_mask(values, q.evidence, n)
    if not accepted.any():
        raise NoAcceptedSamples(n, dict(q.evidence))
    return binomial_estimate(_target_mask(values, q)[accepted])


def counterfactual_aap(scm: Scm, q: CounterfactualQuery, n: int, seed, cap: int | None = None) -> Estimate:
    """Abduction, action, prediction.

    The posterior over joint latent configurations is materialised exactly when
    the support fits under the cap; otherwise it is represented by the prior
    draws that reproduce the evidence.  ``n`` posterior draws are then pushed
    through the intervened submodel.
    """
    _check_query(scm, q)
    rng = np.random.default_rng(seed)
    factual = do(scm, q.factual_do)
    cap = default_enum_cap() if cap is None else cap
    names = list(scm.latents)

    # abduction
    if scm.latent_support_size() <= cap:
        worlds = enumerate_worlds(factual, cap)
        post = worlds.weights * worlds.mask(q.evidence)
        pe = float(post.sum())
        if pe < EVIDENCE_FLOOR:
            raise ZeroEvidence(dict(q.evidence), pe)
        pick = rng.choice(post.size, size=n, p=post / pe)
        latents = {k: worlds.values[k][pick] for k in names}
    else:
        prior = sample_latents(scm, n, rng)
        keep = _evidence_mask(propagate(factual, prior, n), q.evidence, n)
        if not keep.any():
            raise ZeroEvidence(dict(q.evidence), 0.0)
        pick = rng.choice(np.flatnonzero(keep), size=n)
        latents = {k: v[pick] for k, v in prior.items()}

    # action + prediction
    cf_values = propagate(do(scm, q.cf_do), latents, n)
    values = {star(k): v for k, v in cf_values.items() if k in scm.observed}
    if any(e.world == "factual" for e in q.target):
        values.update({k: v for k, v in propagate(factual, latents, n).items() if k in scm.observed})
    return binomial_estimate(_target_mask(values, q))


@dataclass
class BenchReport:
    records: list[dict]
    agreements: list[bool]

    @property
    def all_agree(self) -> bool:
        return all(self.agreements)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


def bench_compare(scm: Scm, queries: Sequence[CounterfactualQuery], n: int, seed) -> BenchReport:
    """Time twin-network rejection sampling against abduction-action-prediction.

    Two estimates agree when they differ by at most twice the sum of their
    standard errors.
    """
    seeds = np.random.SeedSequence(seed).spawn(2 * len(queries))
    records, agreements = [], []
    for i, q in enumerate(queries):
        ests = {}
        for method, fn, ss in (
            ("twin-mc", counterfactual_mc, seeds[2 * i]),
            ("aap", counterfactual_aap, seeds[2 * i + 1]),
        ):
            t0 = time.perf_counter()
            est = fn(scm, q, n, ss)
            wall = (time.perf_counter() - t0) * 1e3
            ests[method] = est
            records.append(
                {
                    "query_id": i,
                    "method": method,
                    "estimate": est.value,
                    "stderr": est.stderr,
                    "n_accepted": est.n_effective,
                    "wall_ms": wall,
                }
            )
        a, b = ests["twin-mc"], ests["aap"]
        agreements.append(abs(a.value - b.value) <= 2.0 * (a.stderr + b.stderr))
    return BenchReport(records, agreements)

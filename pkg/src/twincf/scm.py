"""Discrete structural causal models: validation, sampling, exact marginalisation.

Categories are dense integers ``0..cardinality-1``.  A mechanism stores its
function as a flat lookup table over the parent-tuple index space, row-major
with the last parent varying fastest (``numpy.ravel_multi_index`` order).
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .errors import (
    BadDistribution,
    CycleDetected,
    EnumerationTooLarge,
    LatentIntervention,
    PartialMechanism,
    SpecError,
    UnknownVariable,
    ZeroEvidence,
)

__all__ = [
    "VariableDecl",
    "Mechanism",
    "LatentDist",
    "Scm",
    "DistTable",
    "Worlds",
    "validate",
    "load_scm",
    "sample",
    "sample_worlds",
    "do",
    "joint",
    "conditional",
    "interventional",
    "enumerate_worlds",
    "propagate",
    "default_enum_cap",
    "EVIDENCE_FLOOR",
]

Assignment = Mapping[str, int]

DEFAULT_ENUM_CAP = 10**7
EVIDENCE_FLOOR = 1e-15
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*\*?$")


def default_enum_cap() -> int:
    """Enumeration cap, overridable through ``TWINCF_ENUM_CAP``."""
    raw = os.environ.get("TWINCF_ENUM_CAP")
    return int(raw) if raw else DEFAULT_ENUM_CAP


@dataclass(frozen=True)
class VariableDecl:
    name: str
    kind: str  # "observed" | "latent"
    cardinality: int


@dataclass(frozen=True, eq=False)
class Mechanism:
    child: str
    parents: tuple[str, ...]
    table: np.ndarray

    @classmethod
    def constant(cls, child: str, value: int) -> "Mechanism":
        return cls(child, (), _frozen(np.array([value], dtype=np.int64)))

    @property
    def is_constant(self) -> bool:
        return not self.parents


@dataclass(frozen=True, eq=False)
class LatentDist:
    variable: str
    probs: np.ndarray


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


class Scm:
    """A validated, immutable discrete SCM.

    Construct through :func:`validate` (from the JSON dict form) or directly
    from declarations; either way every invariant is checked on construction.
    """

    def __init__(
        self,
        variables: Iterable[VariableDecl],
        mechanisms: Iterable[Mechanism],
        latents: Iterable[LatentDist],
    ):
        variables = list(variables)
        self.variables: dict[str, VariableDecl] = {}
        for v in variables:
            if not isinstance(v.name, str) or not _NAME_RE.match(v.name):
                raise SpecError(f"invalid variable name {v.name!r}")
            if v.name in self.variables:
                raise SpecError(f"duplicate variable name {v.name!r}")
            if v.kind not in ("observed", "latent"):
                raise SpecError(f"variable {v.name!r} has unknown kind {v.kind!r}")
            if int(v.cardinality) != v.cardinality or v.cardinality < 1:
                raise SpecError(f"variable {v.name!r} needs a positive cardinality")
            self.variables[v.name] = v

        self.latents: dict[str, LatentDist] = {}
        for dist in latents:
            decl = self.variables.get(dist.variable)
            if decl is None:
                raise UnknownVariable(dist.variable)
            if decl.kind != "latent":
                raise SpecError(f"distribution given for observed variable {dist.variable!r}")
            probs = np.asarray(dist.probs, dtype=np.float64)
            if probs.shape != (decl.cardinality,):
                raise BadDistribution(
                    dist.variable, float(probs.sum()), f"expected {decl.cardinality} entries"
                )
            total = float(probs.sum())
            if np.any(probs < 0) or not np.all(np.isfinite(probs)):
                raise BadDistribution(dist.variable, total, "negative or non-finite entry")
            if abs(total - 1.0) > 1e-12:
                raise BadDistribution(dist.variable, total)
            self.latents[dist.variable] = LatentDist(dist.variable, _frozen(probs))
        for name, decl in self.variables.items():
            if decl.kind == "latent" and name not in self.latents:
                raise BadDistribution(name, 0.0, "no distribution given")

        self.mechanisms: dict[str, Mechanism] = {}
        for mech in mechanisms:
            decl = self.variables.get(mech.child)
            if decl is None:
                raise UnknownVariable(mech.child)
            if decl.kind != "observed":
                raise SpecError(f"latent {mech.child!r} cannot have a mechanism")
            if mech.child in self.mechanisms:
                raise SpecError(f"two mechanisms for {mech.child!r}")
            self.mechanisms[mech.child] = self._check_mechanism(mech)
        for name, decl in self.variables.items():
            if decl.kind == "observed" and name not in self.mechanisms:
                raise SpecError(f"observed variable {name!r} has no mechanism")

        self.order: tuple[str, ...] = self._topological_order()

    def _check_mechanism(self, mech: Mechanism) -> Mechanism:
        parents = tuple(mech.parents)
        if len(set(parents)) != len(parents):
            raise SpecError(f"mechanism for {mech.child!r} repeats a parent")
        for p in parents:
            if p not in self.variables:
                raise UnknownVariable(p)
            if p == mech.child:
                raise CycleDetected((p, p))
        shape = tuple(self.variables[p].cardinality for p in parents)
        size = math.prod(shape)
        table = np.asarray(mech.table).ravel()
        if table.size and not np.issubdtype(table.dtype, np.integer):
            if not (np.issubdtype(table.dtype, np.number) and np.all(np.mod(table, 1) == 0)):
                raise SpecError(f"mechanism table for {mech.child!r} must hold integers")
        table = table.astype(np.int64)
        if table.size < size:
            missing = tuple(int(i) for i in np.unravel_index(table.size, shape)) if shape else ()
            raise PartialMechanism(mech.child, missing)
        if table.size > size:
            raise SpecError(
                f"mechanism table for {mech.child!r} has {table.size} entries, expected {size}"
            )
        card = self.variables[mech.child].cardinality
        bad = np.flatnonzero((table < 0) | (table >= card))
        if bad.size:
            where = tuple(int(i) for i in np.unravel_index(bad[0], shape)) if shape else ()
            raise PartialMechanism(
                mech.child, where, f"value {int(table[bad[0]])} outside 0..{card - 1}"
            )
        return Mechanism(mech.child, parents, _frozen(table))

    def _topological_order(self) -> tuple[str, ...]:
        observed = self.observed
        indeg = {v: 0 for v in observed}
        children: dict[str, list[str]] = {v: [] for v in observed}
        for v in observed:
            for p in self.mechanisms[v].parents:
                if self.variables[p].kind == "observed":
                    indeg[v] += 1
                    children[p].append(v)
        ready = [v for v in observed if indeg[v] == 0]
        order: list[str] = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for c in children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        if len(order) != len(observed):
            raise CycleDetected(self._find_back_edge())
        return tuple(order)

    def _find_back_edge(self) -> tuple[str, str]:
        state: dict[str, int] = {}
        for root in self.observed:
            if state.get(root):
                continue
            stack = [(root, iter(self.observed_children(root)))]
            state[root] = 1
            while stack:
                node, it = stack[-1]
                nxt = next(it, None)
                if nxt is None:
                    state[node] = 2
                    stack.pop()
                elif state.get(nxt) == 1:
                    return (node, nxt)
                elif not state.get(nxt):
                    state[nxt] = 1
                    stack.append((nxt, iter(self.observed_children(nxt))))
        raise AssertionError("no back edge found in a cyclic graph")

    # -- accessors -------------------------------------------------------

    @property
    def observed(self) -> tuple[str, ...]:
        return tuple(n for n, d in self.variables.items() if d.kind == "observed")

    @property
    def latent_names(self) -> tuple[str, ...]:
        return tuple(n for n, d in self.variables.items() if d.kind == "latent")

    def card(self, name: str) -> int:
        try:
            return self.variables[name].cardinality
        except KeyError:
            raise UnknownVariable(name) from None

    def parents(self, name: str) -> tuple[str, ...]:
        if name not in self.variables:
            raise UnknownVariable(name)
        mech = self.mechanisms.get(name)
        return mech.parents if mech else ()

    def observed_children(self, name: str) -> list[str]:
        return [v for v in self.observed if name in self.mechanisms[v].parents]

    def edges(self) -> set[tuple[str, str]]:
        return {(p, v) for v, m in self.mechanisms.items() for p in m.parents}

    def latent_support_size(self) -> int:
        return math.prod(int(np.count_nonzero(d.probs)) for d in self.latents.values())

    def check_assignment(self, assignment: Assignment, *, observed_only: bool = True) -> dict[str, int]:
        out = {}
        for name, value in assignment.items():
            decl = self.variables.get(name)
            if decl is None:
                raise UnknownVariable(name)
            if observed_only and decl.kind != "observed":
                raise LatentIntervention(name)
            value = int(value)
            if not 0 <= value < decl.cardinality:
                raise SpecError(f"value {value} out of range for {name!r}")
            out[name] = value
        return out

    # -- (de)serialisation ----------------------------------------------

    def to_dict(self) -> dict:
        return {
            "variables": [
                {"name": d.name, "kind": d.kind, "cardinality": d.cardinality}
                for d in self.variables.values()
            ],
            "latents": [
                {"variable": d.variable, "probs": d.probs.tolist()} for d in self.latents.values()
            ],
            "mechanisms": [
                {"child": m.child, "parents": list(m.parents), "table": m.table.tolist()}
                for m in self.mechanisms.values()
            ],
        }

    def replace(
        self,
        mechanisms: Mapping[str, Mechanism] | None = None,
        latents: Mapping[str, LatentDist] | None = None,
    ) -> "Scm":
        mechs = dict(self.mechanisms)
        mechs.update(mechanisms or {})
        lats = dict(self.latents)
        lats.update(latents or {})
        return Scm(self.variables.values(), mechs.values(), lats.values())

    def __repr__(self) -> str:
        return f"Scm(observed={list(self.order)}, latents={list(self.latent_names)})"


def validate(spec: Mapping) -> Scm:
    """Build a validated :class:`Scm` from the JSON dictionary form."""
    try:
        variables = [
            VariableDecl(v["name"], v.get("kind", "observed"), int(v["cardinality"]))
            for v in spec["variables"]
        ]
        latents = [LatentDist(d["variable"], np.asarray(d["probs"], float)) for d in spec.get("latents", [])]
        mechanisms = [
            Mechanism(m["child"], tuple(m.get("parents", [])), np.asarray(m["table"]))
            for m in spec.get("mechanisms", [])
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"malformed SCM description: {exc}") from exc
    return Scm(variables, mechanisms, latents)


def load_scm(path) -> Scm:
    with open(path) as fh:
        return validate(json.load(fh))


# -- evaluation -------------------------------------------------------------


def propagate(
    scm: Scm, latent_values: Mapping[str, np.ndarray], n: int | None = None
) -> dict[str, np.ndarray]:
    """Evaluate every observed variable for a batch of latent configurations."""
    values: dict[str, np.ndarray] = {k: np.asarray(v) for k, v in latent_values.items()}
    if n is None:
        n = len(next(iter(values.values()))) if values else 1
    for name in scm.order:
        mech = scm.mechanisms[name]
        if mech.is_constant:
            values[name] = np.full(n, mech.table[0], dtype=np.int64)
            continue
        shape = tuple(scm.card(p) for p in mech.parents)
        idx = np.ravel_multi_index(tuple(values[p] for p in mech.parents), shape)
        values[name] = mech.table[idx]
    return values


@dataclass(frozen=True, eq=False)
class Worlds:
    """Every latent configuration with positive mass, with observed values."""

    values: dict[str, np.ndarray]
    weights: np.ndarray

    def mask(self, assignment: Assignment) -> np.ndarray:
        m = np.ones(self.weights.shape, dtype=bool)
        for name, value in assignment.items():
            m &= self.values[name] == value
        return m

    def mass(self, assignment: Assignment) -> float:
        return float(self.weights[self.mask(assignment)].sum())


def enumerate_worlds(scm: Scm, cap: int | None = None) -> Worlds:
    """Enumerate the latent support exactly and propagate the mechanisms."""
    cap = default_enum_cap() if cap is None else cap
    size = scm.latent_support_size()
    if size > cap:
        raise EnumerationTooLarge(size, cap)
    names = list(scm.latents)
    supports = [np.flatnonzero(scm.latents[n].probs) for n in names]
    grids = np.unravel_index(np.arange(size), tuple(len(s) for s in supports))
    latent_values = {n: s[g] for n, s, g in zip(names, supports, grids)}
    weights = np.ones(size)
    for n in names:
        weights = weights * scm.latents[n].probs[latent_values[n]]
    return Worlds(propagate(scm, latent_values, size), weights)


@dataclass(frozen=True, eq=False)
class DistTable:
    """Exact distribution over a tuple of variables."""

    variables: tuple[str, ...]
    support: np.ndarray  # (k, len(variables)) integer rows
    probs: np.ndarray

    @classmethod
    def from_worlds(cls, worlds: Worlds, variables, mask=None) -> "DistTable":
        variables = tuple(variables)
        w = worlds.weights if mask is None else worlds.weights[mask]
        cols = [worlds.values[v] if mask is None else worlds.values[v][mask] for v in variables]
        if not variables:
            return cls((), np.zeros((1, 0), dtype=np.int64), np.array([w.sum()]) / w.sum())
        rows = np.stack(cols, axis=1)
        support, inv = np.unique(rows, axis=0, return_inverse=True)
        probs = np.bincount(inv.ravel(), weights=w, minlength=len(support))
        return cls(variables, support, probs / probs.sum())

    def prob(self, assignment: Assignment | None = None, **kw: int) -> float:
        a = dict(assignment or {}, **kw)
        m = np.ones(len(self.probs), dtype=bool)
        for name, value in a.items():
            m &= self.support[:, self.variables.index(name)] == value
        return float(self.probs[m].sum())

    def marginal(self, variables) -> "DistTable":
        variables = tuple(variables)
        cols = [self.variables.index(v) for v in variables]
        rows = self.support[:, cols]
        support, inv = np.unique(rows, axis=0, return_inverse=True)
        probs = np.bincount(inv.ravel(), weights=self.probs, minlength=len(support))
        return DistTable(variables, support, probs)

    def to_records(self) -> list[dict]:
        return [
            {**{v: int(r[i]) for i, v in enumerate(self.variables)}, "p": float(p)}
            for r, p in zip(self.support, self.probs)
        ]

    def __len__(self) -> int:
        return len(self.probs)


def do(scm: Scm, intervention: Assignment) -> Scm:
    """Submodel with the intervened mechanisms replaced by constants."""
    intervention = scm.check_assignment(intervention)
    if not intervention:
        return scm
    return scm.replace({v: Mechanism.constant(v, x) for v, x in intervention.items()})


def joint(scm: Scm, cap: int | None = None) -> DistTable:
    return DistTable.from_worlds(enumerate_worlds(scm, cap), scm.order)


def conditional(
    scm: Scm, target: Iterable[str], evidence: Assignment | None = None, cap: int | None = None
) -> DistTable:
    evidence = scm.check_assignment(evidence or {})
    target = tuple(target)
    for t in target:
        scm.card(t)
    worlds = enumerate_worlds(scm, cap)
    mask = worlds.mask(evidence)
    pe = float(worlds.weights[mask].sum())
    if pe < EVIDENCE_FLOOR:
        raise ZeroEvidence(evidence, pe)
    return DistTable.from_worlds(worlds, target, mask)


def interventional(
    scm: Scm,
    target: Iterable[str],
    intervention: Assignment,
    covariates: Assignment | None = None,
    cap: int | None = None,
) -> DistTable:
    """``P(target | do(intervention), covariates)`` computed in the submodel."""
    return conditional(do(scm, intervention), target, covariates, cap)


# -- sampling ---------------------------------------------------------------


def sample_latents(scm: Scm, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    return {
        name: rng.choice(len(d.probs), size=n, p=d.probs) for name, d in scm.latents.items()
    }


def sample_worlds(scm: Scm, n: int, seed) -> dict[str, np.ndarray]:
    """Ancestral samples including latent columns."""
    rng = np.random.default_rng(seed)
    return propagate(scm, sample_latents(scm, n, rng), n)


def sample(scm: Scm, n: int, seed) -> pd.DataFrame:
    """Draw ``n`` observed rows by ancestral sampling; deterministic given ``seed``."""
    values = sample_worlds(scm, n, seed)
    return pd.DataFrame({v: values[v] for v in scm.observed})

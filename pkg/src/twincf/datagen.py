"""Synthetic and semi-synthetic data generators with known ground truth.

Each generator samples an observed dataset, keeps the latent draws in a
sidecar frame (so per-row counterfactuals are recoverable), exposes its exact
``P(Y | do(x), z)`` for label making, and, when all variables are discrete,
an equivalent :class:`~twincf.scm.Scm` encoding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd
from scipy.special import expit
from scipy.stats import norm

from .causation import PocResult
from .errors import SpecError
from .scm import Scm, validate
from .twin import Estimate

__all__ = [
    "GeneratorSpec",
    "GeneratedData",
    "Generator",
    "Unconfounded",
    "Confounded",
    "Credit7",
    "IstLogistic",
    "make_generator",
    "gen_unconfounded",
    "gen_confounded",
    "gen_credit7",
    "gen_ist_logistic",
    "ambiguous_scm",
    "step",
]

KINDS = ("unconfounded", "confounded", "credit7", "ist_logistic")


def step(v):
    """Heaviside step with ``step(0) = 1``."""
    return (np.asarray(v) >= 0).astype(np.int64)


def _check_probs(name: str, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise SpecError(f"{name} must be a probability vector, got {p.tolist()}")
    return p / p.sum()


def _check_prob(name: str, p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise SpecError(f"{name} must lie in [0, 1], got {p}")
    return float(p)


def _exact(v: float) -> Estimate:
    return Estimate(float(v), 0.0, 0)


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    params: Mapping = field(default_factory=dict)
    n: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown generator kind {self.kind!r}; expected one of {KINDS}")
        if self.n <= 0:
            raise SpecError("sample count must be positive")

    def build(self) -> "GeneratedData":
        return make_generator(self.kind, **self.params).sample(self.n, self.seed)


@dataclass
class GeneratedData:
    data: pd.DataFrame
    latents: pd.DataFrame  # sidecar, one row per data row
    generator: "Generator"
    seed: int

    @property
    def analytic(self) -> PocResult | None:
        return self.generator.analytic_poc()

    def manifest(self) -> dict:
        scm = self.generator.scm()
        poc = self.analytic
        return {
            "kind": self.generator.kind,
            "params": self.generator.params(),
            "n": len(self.data),
            "seed": self.seed,
            "treatment": self.generator.treatment,
            "outcome": self.generator.outcome,
            "covariates": list(self.generator.covariates),
            "analytic_poc": None if poc is None else poc.to_dict(),
            "scm": None if scm is None else scm.to_dict(),
        }

    def write(self, out: str | Path) -> dict[str, Path]:
        """Write ``<out>.csv``, ``<out>.latents.csv`` and ``<out>.manifest.json``."""
        out = Path(out)
        stem = out.with_suffix("") if out.suffix == ".csv" else out
        paths = {
            "data": stem.with_name(stem.name + ".csv"),
            "latents": stem.with_name(stem.name + ".latents.csv"),
            "manifest": stem.with_name(stem.name + ".manifest.json"),
        }
        self.data.to_csv(paths["data"], index=False)
        self.latents.to_csv(paths["latents"], index=False)
        paths["manifest"].write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")
        return paths

    def counterfactual(self, x_star) -> np.ndarray:
        """Ground-truth outcome of every row under ``do(X = x_star)``."""
        g = self.generator
        x = np.broadcast_to(np.asarray(x_star, dtype=np.int64), (len(self.data),))
        return g.outcome_fn(x, {c: self.data[c].to_numpy() for c in g.covariates}, self.latents)


class Generator:
    kind = ""
    treatment = "X"
    outcome = "Y"
    covariates: tuple[str, ...] = ()
    n_treatments = 2
    n_outcomes = 2

    def params(self) -> dict:
        raise NotImplementedError

    def draw(self, n: int, rng: np.random.Generator) -> tuple[dict, pd.DataFrame]:
        """Return (treatment and covariate columns, latent sidecar)."""
        raise NotImplementedError

    def outcome_fn(self, x: np.ndarray, cov: Mapping[str, np.ndarray], latents: pd.DataFrame) -> np.ndarray:
        raise NotImplementedError

    def do_dist(self, x: np.ndarray, cov: Mapping[str, np.ndarray]) -> np.ndarray:
        """``P(Y = y | do(X = x), z)`` per row, shape ``(n, n_outcomes)``."""
        raise NotImplementedError

    def scm(self) -> Scm | None:
        return None

    def analytic_poc(self) -> PocResult | None:
        return None

    def sample(self, n: int, seed) -> GeneratedData:
        rng = np.random.default_rng(seed)
        cols, latents = self.draw(n, rng)
        cov = {c: cols[c] for c in self.covariates}
        y = self.outcome_fn(cols[self.treatment], cov, latents)
        data = pd.DataFrame({**cols, self.outcome: y})
        data = self._extra_columns(data, latents)
        return GeneratedData(data, latents, self, int(seed) if np.isscalar(seed) else 0)

    def _extra_columns(self, data: pd.DataFrame, latents: pd.DataFrame) -> pd.DataFrame:
        return data


def _three_branch(x, u, branch0):
    """``Y = branch0 if U=0, 0 if U=1, 1 if U=2``."""
    return np.where(u == 0, branch0, np.where(u == 1, 0, 1)).astype(np.int64)


class Unconfounded(Generator):
    kind = "unconfounded"

    def __init__(self, q=(1 / 3, 1 / 3, 1 / 3), px1: float = 0.5):
        self.q = _check_probs("q", q)
        if self.q.size != 3:
            raise SpecError("q must have three entries")
        self.px1 = _check_prob("px1", px1)

    def params(self) -> dict:
        return {"q": self.q.tolist(), "px1": self.px1}

    def draw(self, n, rng):
        ux = (rng.random(n) < self.px1).astype(np.int64)
        uy = rng.choice(3, size=n, p=self.q)
        return {"X": ux}, pd.DataFrame({"U_X": ux, "U_Y": uy})

    def outcome_fn(self, x, cov, latents):
        return _three_branch(x, latents["U_Y"].to_numpy(), x)

    def do_dist(self, x, cov):
        q0, _, q2 = self.q
        p1 = q0 * np.asarray(x, dtype=float) + q2
        return np.stack([1 - p1, p1], axis=1)

    def scm(self) -> Scm:
        return validate(
            {
                "variables": [
                    {"name": "X", "kind": "observed", "cardinality": 2},
                    {"name": "Y", "kind": "observed", "cardinality": 2},
                    {"name": "U_X", "kind": "latent", "cardinality": 2},
                    {"name": "U_Y", "kind": "latent", "cardinality": 3},
                ],
                "latents": [
                    {"variable": "U_X", "probs": [1 - self.px1, self.px1]},
                    {"variable": "U_Y", "probs": self.q.tolist()},
                ],
                "mechanisms": [
                    {"child": "X", "parents": ["U_X"], "table": [0, 1]},
                    {"child": "Y", "parents": ["X", "U_Y"], "table": [0, 0, 1, 1, 0, 1]},
                ],
            }
        )

    def analytic_poc(self) -> PocResult:
        q0, q1, q2 = self.q
        pn = q0 / (q2 + q0) if q2 + q0 > 0 else float("nan")
        ps = q0 / (q1 + q0) if q1 + q0 > 0 else float("nan")
        return PocResult(_exact(pn), _exact(ps), _exact(q0))


class Confounded(Generator):
    """``Z ~ Bern(pz1)``, ``X = U_x xor Z``, ``Y`` uses ``X*Z`` in branch 0.

    ``pux1`` is the probability of ``U_x = 1``; at 0.5 the treatment is
    independent of ``Z`` and the confounding path carries no information.
    """

    kind = "confounded"
    covariates = ("Z",)

    def __init__(self, q=(1 / 3, 1 / 3, 1 / 3), pz1: float = 0.5, pux1: float = 0.5):
        self.q = _check_probs("q", q)
        if self.q.size != 3:
            raise SpecError("q must have three entries")
        self.pz1 = _check_prob("pz1", pz1)
        self.pux1 = _check_prob("pux1", pux1)

    def params(self) -> dict:
        return {"q": self.q.tolist(), "pz1": self.pz1, "pux1": self.pux1}

    def draw(self, n, rng):
        z = (rng.random(n) < self.pz1).astype(np.int64)
        ux = (rng.random(n) < self.pux1).astype(np.int64)
        uy = rng.choice(3, size=n, p=self.q)
        return {"Z": z, "X": ux ^ z}, pd.DataFrame({"U_Z": z, "U_X": ux, "U_Y": uy})

    def outcome_fn(self, x, cov, latents):
        return _three_branch(x, latents["U_Y"].to_numpy(), x * np.asarray(cov["Z"]))

    def do_dist(self, x, cov):
        q0, _, q2 = self.q
        p1 = q0 * np.asarray(x, dtype=float) * np.asarray(cov["Z"], dtype=float) + q2
        return np.stack([1 - p1, p1], axis=1)

    def scm(self) -> Scm:
        return validate(
            {
                "variables": [
                    {"name": "Z", "kind": "observed", "cardinality": 2},
                    {"name": "X", "kind": "observed", "cardinality": 2},
                    {"name": "Y", "kind": "observed", "cardinality": 2},
                    {"name": "U_Z", "kind": "latent", "cardinality": 2},
                    {"name": "U_X", "kind": "latent", "cardinality": 2},
                    {"name": "U_Y", "kind": "latent", "cardinality": 3},
                ],
                "latents": [
                    {"variable": "U_Z", "probs": [1 - self.pz1, self.pz1]},
                    {"variable": "U_X", "probs": [1 - self.pux1, self.pux1]},
                    {"variable": "U_Y", "probs": self.q.tolist()},
                ],
                "mechanisms": [
                    {"child": "Z", "parents": ["U_Z"], "table": [0, 1]},
                    {"child": "X", "parents": ["Z", "U_X"], "table": [0, 1, 1, 0]},
                    # rows (x, z) = 00, 01, 10, 11; columns U_Y
                    {"child": "Y", "parents": ["X", "Z", "U_Y"], "table": [0, 0, 1, 0, 0, 1, 0, 0, 1, 1, 0, 1]},
                ],
            }
        )

    def pz_given_x(self, x: int) -> float:
        pz, pu = self.pz1, self.pux1
        # X = 1 needs U_x != Z
        if x == 1:
            num, den = pz * (1 - pu), pz * (1 - pu) + (1 - pz) * pu
        else:
            num, den = pz * pu, pz * pu + (1 - pz) * (1 - pu)
        return num / den if den > 0 else float("nan")

    def analytic_poc(self) -> PocResult:
        q0, q1, q2 = self.q
        a1, a0 = q0 * self.pz_given_x(1), q0 * self.pz_given_x(0)
        pn = a1 / (q2 + a1) if q2 + a1 > 0 else float("nan")
        ps = a0 / (q1 + q0) if q1 + q0 > 0 else float("nan")
        return PocResult(_exact(pn), _exact(ps), _exact(q0 * self.pz1))


_CREDIT7_BRANCHES = 7


def credit7_outcome(x, z, u) -> np.ndarray:
    x, z, u = (np.asarray(a, dtype=np.int64) for a in (x, z, u))
    branches = np.stack(
        [x + z, np.zeros_like(x), x * z, np.full_like(x, 2), np.ones_like(x), step(x - 1), 2 * step(x - 1)]
    )
    y = np.take_along_axis(branches, u[None, :], axis=0)[0]
    return np.minimum(y, 2)


class Credit7(Generator):
    """Three treatments, one three-valued covariate, seven outcome branches
    (``Y`` clipped to ``{0, 1, 2}``)."""

    kind = "credit7"
    covariates = ("Z",)
    n_treatments = 3
    n_outcomes = 3

    def params(self) -> dict:
        return {}

    def draw(self, n, rng):
        x = rng.integers(0, 3, size=n)
        z = rng.integers(0, 3, size=n)
        u = rng.integers(0, _CREDIT7_BRANCHES, size=n)
        return {"X": x, "Z": z}, pd.DataFrame({"U_X": x, "U_Z": z, "U_Y": u})

    def outcome_fn(self, x, cov, latents):
        return credit7_outcome(x, cov["Z"], latents["U_Y"].to_numpy())

    def do_dist(self, x, cov):
        x = np.asarray(x, dtype=np.int64)
        z = np.asarray(cov["Z"], dtype=np.int64)
        out = np.zeros((x.size, 3))
        for u in range(_CREDIT7_BRANCHES):
            y = credit7_outcome(x, z, np.full_like(x, u))
            out[np.arange(x.size), y] += 1.0 / _CREDIT7_BRANCHES
        return out

    def scm(self) -> Scm:
        xs, zs, us = np.meshgrid(np.arange(3), np.arange(3), np.arange(_CREDIT7_BRANCHES), indexing="ij")
        table = credit7_outcome(xs.ravel(), zs.ravel(), us.ravel())
        third = [1 / 3] * 3
        return validate(
            {
                "variables": [
                    {"name": "X", "kind": "observed", "cardinality": 3},
                    {"name": "Z", "kind": "observed", "cardinality": 3},
                    {"name": "Y", "kind": "observed", "cardinality": 3},
                    {"name": "U_X", "kind": "latent", "cardinality": 3},
                    {"name": "U_Z", "kind": "latent", "cardinality": 3},
                    {"name": "U_Y", "kind": "latent", "cardinality": _CREDIT7_BRANCHES},
                ],
                "latents": [
                    {"variable": "U_X", "probs": third},
                    {"variable": "U_Z", "probs": third},
                    {"variable": "U_Y", "probs": [1 / _CREDIT7_BRANCHES] * _CREDIT7_BRANCHES},
                ],
                "mechanisms": [
                    {"child": "X", "parents": ["U_X"], "table": [0, 1, 2]},
                    {"child": "Z", "parents": ["U_Z"], "table": [0, 1, 2]},
                    {"child": "Y", "parents": ["X", "Z", "U_Y"], "table": table.tolist()},
                ],
            }
        )


def ist_score(x, sex, age, consc, u) -> np.ndarray:
    x, sex, age, consc = (np.asarray(a, dtype=float) for a in (x, sex, age, consc))
    return x + sex + 0.2 * (consc - 1) + 0.5 * x * sex * age + np.asarray(u, dtype=float)


class IstLogistic(Generator):
    """Three treatments; binary SEX and AGE, three-level CONSC; ``Y`` is the
    strict threshold ``sigmoid(g) > 0.5`` of a score with standard normal noise."""

    kind = "ist_logistic"
    covariates = ("SEX", "AGE", "CONSC")
    n_treatments = 3

    def params(self) -> dict:
        return {}

    def draw(self, n, rng):
        cols = {
            "SEX": rng.integers(0, 2, size=n),
            "AGE": rng.integers(0, 2, size=n),
            "CONSC": rng.integers(0, 3, size=n),
            "X": rng.integers(0, 3, size=n),
        }
        return cols, pd.DataFrame({"U_Y": rng.standard_normal(n)})

    def _g(self, x, cov, latents):
        return ist_score(x, cov["SEX"], cov["AGE"], cov["CONSC"], latents["U_Y"].to_numpy())

    def outcome_fn(self, x, cov, latents):
        return (expit(self._g(x, cov, latents)) > 0.5).astype(np.int64)

    def _extra_columns(self, data, latents):
        cov = {c: data[c].to_numpy() for c in self.covariates}
        data["Y_prob"] = expit(self._g(data["X"].to_numpy(), cov, latents))
        return data

    def do_dist(self, x, cov):
        g0 = ist_score(x, cov["SEX"], cov["AGE"], cov["CONSC"], 0.0)
        p1 = norm.cdf(g0)  # P(g0 + U > 0)
        return np.stack([1 - p1, p1], axis=1)


_GENERATORS = {
    "unconfounded": Unconfounded,
    "confounded": Confounded,
    "credit7": Credit7,
    "ist_logistic": IstLogistic,
}


def make_generator(kind: str, **params) -> Generator:
    if kind not in _GENERATORS:
        raise SpecError(f"unknown generator kind {kind!r}; expected one of {KINDS}")
    return _GENERATORS[kind](**params)


def gen_unconfounded(q, px1: float, n: int, seed) -> GeneratedData:
    return Unconfounded(q, px1).sample(n, seed)


def gen_confounded(q, pz1: float, n: int, seed, pux1: float = 0.5) -> GeneratedData:
    return Confounded(q, pz1, pux1).sample(n, seed)


def gen_credit7(n: int, seed) -> GeneratedData:
    return Credit7().sample(n, seed)


def gen_ist_logistic(n: int, seed) -> GeneratedData:
    return IstLogistic().sample(n, seed)


def ambiguous_scm(q, px1: float = 0.5) -> Scm:
    """Binary ``X -> Y`` with a four-valued ``U_Y``:
    ``Y = X, 0, 1, not X`` for ``U_Y = 0, 1, 2, 3``."""
    q = _check_probs("q", q)
    if q.size != 4:
        raise SpecError("q must have four entries")
    return validate(
        {
            "variables": [
                {"name": "X", "kind": "observed", "cardinality": 2},
                {"name": "Y", "kind": "observed", "cardinality": 2},
                {"name": "U_X", "kind": "latent", "cardinality": 2},
                {"name": "U_Y", "kind": "latent", "cardinality": 4},
            ],
            "latents": [
                {"variable": "U_X", "probs": [1 - px1, px1]},
                {"variable": "U_Y", "probs": q.tolist()},
            ],
            "mechanisms": [
                {"child": "X", "parents": ["U_X"], "table": [0, 1]},
                {"child": "Y", "parents": ["X", "U_Y"], "table": [0, 0, 1, 1, 1, 0, 1, 0]},
            ],
        }
    )

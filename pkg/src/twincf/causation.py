"""Probabilities of causation and counterfactual tables, from exact SCMs or
trained twin models."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import NoAcceptedSamples, NonBinary, SpecError, ZeroEvidence
from .scm import Scm
from .twin import (
    CounterfactualQuery,
    Estimate,
    Event,
    binomial_estimate,
    counterfactual_exact,
    counterfactual_joint,
    counterfactual_mc,
    star,
)

if TYPE_CHECKING:
    from .learn import TwinModel
    from .ordering import OrderingSpec

__all__ = [
    "RESIDUAL_GATE",
    "PocResult",
    "CfTemplate",
    "CfTable",
    "Residuals",
    "poc_exact",
    "poc_from_model",
    "model_counterfactual",
    "counterfactual_table",
    "theorem2_residuals",
    "predict_counterfactuals",
    "counterfactual_f1",
]

RESIDUAL_GATE = 0.02


@dataclass(frozen=True)
class PocResult:
    pn: Estimate
    ps: Estimate
    pns: Estimate

    def values(self) -> tuple[float, float, float]:
        return self.pn.value, self.ps.value, self.pns.value

    def to_dict(self) -> dict:
        return {
            k: {"value": e.value, "stderr": e.stderr, "n_accepted": e.n_effective}
            for k, e in (("pn", self.pn), ("ps", self.ps), ("pns", self.pns))
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _exact(v: float) -> Estimate:
    return Estimate(float(v), 0.0, 0)


def poc_exact(scm: Scm, treatment: str = "X", outcome: str = "Y", cap=None) -> PocResult:
    """PN = P(Y_0=0 | X=1, Y=1), PS = P(Y_1=1 | X=0, Y=0), PNS = P(Y_0=0, Y_1=1)."""
    for v in (treatment, outcome):
        if scm.card(v) != 2:
            raise NonBinary(f"{v} has {scm.card(v)} categories; probabilities of causation need binary variables")
    pn = counterfactual_exact(
        scm, CounterfactualQuery(Event(outcome, value=0), {treatment: 1, outcome: 1}, cf_do={treatment: 0}), cap
    )
    ps = counterfactual_exact(
        scm, CounterfactualQuery(Event(outcome, value=1), {treatment: 0, outcome: 0}, cf_do={treatment: 1}), cap
    )
    table = counterfactual_joint(scm, {treatment: 0}, {treatment: 1}, [outcome, star(outcome)], cap)
    pns = table.prob({outcome: 0, star(outcome): 1})
    return PocResult(_exact(pn), _exact(ps), _exact(pns))


# -- model-based Monte Carlo ------------------------------------------------


def _covariates(model: "TwinModel", data: pd.DataFrame | None, covariates: Sequence[str]) -> np.ndarray:
    dz = model.config.z_dim
    if dz == 0:
        return np.zeros((0 if data is None else len(data), 0))
    if data is None:
        raise SpecError("a model with covariates needs a covariate dataset")
    z = data[list(covariates)].to_numpy(dtype=float)
    if z.shape[1] != dz:
        raise SpecError(f"model expects {dz} covariates, got {z.shape[1]}")
    return z


def model_counterfactual(
    model: "TwinModel",
    z_pool: np.ndarray,
    *,
    evidence_x: int | None,
    evidence_y: int | None,
    target: Sequence[tuple[int, Event]],
    n: int,
    seed,
    noise: str = "normal",
) -> Estimate:
    """Rejection sampling through a trained model.

    Each draw picks a covariate row from ``z_pool`` and a noise value.  With
    evidence, the draw is kept when ``argmax head_{evidence_x}`` equals
    ``evidence_y``.  ``target`` lists ``(treatment, event)`` pairs that must all
    hold on the corresponding heads.
    """
    from .learn import draw_noise, predict

    rng = np.random.default_rng(seed)
    cfg = model.config
    if cfg.z_dim:
        if len(z_pool) == 0:
            raise NoAcceptedSamples(n, {"rows": 0})
        z = z_pool[rng.integers(0, len(z_pool), size=n)]
    else:
        z = np.zeros((n, 0))
    u = draw_noise(rng, (n, 1, cfg.u_dim), noise)
    ys = predict(model, z, u)[:, :, 0]  # (N, n)
    keep = np.ones(n, dtype=bool)
    if evidence_x is not None:
        keep = ys[evidence_x] == evidence_y
    if not keep.any():
        raise NoAcceptedSamples(n, {"x": evidence_x, "y": evidence_y})
    hit = np.ones(n, dtype=bool)
    for t, ev in target:
        hit &= ev.holds(ys[t])
    return binomial_estimate(hit[keep])


def poc_from_model(
    model: "TwinModel",
    data: pd.DataFrame | None = None,
    n: int = 100_000,
    seed=0,
    *,
    treatment: str = "X",
    covariates: Sequence[str] = (),
    noise: str = "normal",
) -> PocResult:
    """PN, PS and PNS by sampling the model; evidence rows are drawn from the
    dataset rows with the matching treatment."""
    if model.config.n_treatments != 2 or model.config.n_outcomes != 2:
        raise NonBinary("probabilities of causation need a binary treatment and outcome")
    z = _covariates(model, data, covariates)
    if data is not None and treatment in data and model.config.z_dim:
        x = data[treatment].to_numpy()
        pools = {t: z[x == t] for t in (0, 1)}
    else:
        pools = {0: z, 1: z}
    s = np.random.SeedSequence(seed).spawn(3)
    pn = model_counterfactual(model, pools[1], evidence_x=1, evidence_y=1, target=[(0, Event("Y", value=0))],
                              n=n, seed=s[0], noise=noise)
    ps = model_counterfactual(model, pools[0], evidence_x=0, evidence_y=0, target=[(1, Event("Y", value=1))],
                              n=n, seed=s[1], noise=noise)
    pns = model_counterfactual(model, z, evidence_x=None, evidence_y=None,
                               target=[(0, Event("Y", value=0)), (1, Event("Y", value=1))],
                               n=n, seed=s[2], noise=noise)
    return PocResult(pn, ps, pns)


# -- counterfactual tables --------------------------------------------------


@dataclass(frozen=True)
class CfTemplate:
    """``P(Y_{X=T'} <op> target | X=T, Y=evidence)``."""

    evidence: int
    target: int
    op: str = "eq"

    def to_dict(self) -> dict:
        return {"evidence": self.evidence, "target": self.target, "op": self.op}


@dataclass
class CfTable:
    """Rows: factual treatment ``T``; columns: counterfactual treatment ``T'``;
    both in the ordering's treatment order.  The diagonal is 0 by convention."""

    treatments: tuple[int, ...]
    values: np.ndarray
    stderr: np.ndarray
    template: CfTemplate
    notes: list[str] = field(default_factory=list)

    @property
    def dominance(self) -> float:
        """Mean of the upper triangle minus mean of the lower triangle."""
        n = len(self.treatments)
        up = self.values[np.triu_indices(n, 1)]
        lo = self.values[np.tril_indices(n, -1)]
        return float(np.nanmean(up) - np.nanmean(lo))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=list(self.treatments), columns=list(self.treatments))

    def to_csv(self) -> str:
        rows = []
        for a, t in enumerate(self.treatments):
            for b, tp in enumerate(self.treatments):
                rows.append({"T": t, "T_prime": tp, "value": self.values[a, b], "stderr": self.stderr[a, b]})
        buf = io.StringIO()
        pd.DataFrame(rows).to_csv(buf, index=False)
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "type": "cf_table",
            "treatments": list(self.treatments),
            "values": np.where(np.isnan(self.values), None, self.values).tolist(),
            "stderr": np.where(np.isnan(self.stderr), None, self.stderr).tolist(),
            "template": self.template.to_dict(),
            "dominance": self.dominance,
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "CfTable":
        def arr(v):
            return np.array([[np.nan if c is None else c for c in row] for row in v], dtype=float)

        return cls(tuple(d["treatments"]), arr(d["values"]), arr(d["stderr"]), CfTemplate(**d["template"]),
                   list(d.get("notes", [])))


def counterfactual_table(
    source,
    template: CfTemplate,
    ord: "OrderingSpec",
    n: int = 100_000,
    seed=0,
    *,
    data: pd.DataFrame | None = None,
    covariates: Sequence[str] = (),
    noise: str = "normal",
    cap=None,
    method: str = "exact",
) -> CfTable:
    """Fill the ``T x T'`` matrix.

    An SCM source is queried exactly (``method="exact"``) or by twin-network
    rejection sampling (``method="twin-mc"``); a model source is sampled.
    """
    tr = tuple(ord.treatment_order)
    k = len(tr)
    vals = np.zeros((k, k))
    errs = np.zeros((k, k))
    notes: list[str] = []
    event = Event(ord.outcome, op=template.op, value=template.target, order=tuple(ord.outcome_order))
    if isinstance(source, Scm):
        for a, t in enumerate(tr):
            for b, tp in enumerate(tr):
                if a == b:
                    continue
                q = CounterfactualQuery(event, {ord.treatment: t, ord.outcome: template.evidence},
                                        cf_do={ord.treatment: tp})
                try:
                    if method == "exact":
                        vals[a, b] = counterfactual_exact(source, q, cap)
                    else:
                        est = counterfactual_mc(source, q, n, np.random.SeedSequence([seed, a, b]))
                        vals[a, b], errs[a, b] = est.value, est.stderr
                except (ZeroEvidence, NoAcceptedSamples):
                    vals[a, b] = errs[a, b] = np.nan
                    notes.append(f"evidence X={t}, Y={template.evidence} has no support")
        return CfTable(tr, vals, errs, template, notes)

    z = _covariates(source, data, covariates)
    x = data[ord.treatment].to_numpy() if data is not None and source.config.z_dim else None
    seeds = np.random.SeedSequence(seed).spawn(k * k)
    for a, t in enumerate(tr):
        pool = z[x == t] if x is not None else z
        for b, tp in enumerate(tr):
            if a == b:
                continue
            try:
                est = model_counterfactual(source, pool, evidence_x=t, evidence_y=template.evidence,
                                           target=[(tp, event)], n=n, seed=seeds[a * k + b], noise=noise)
                vals[a, b], errs[a, b] = est.value, est.stderr
            except NoAcceptedSamples:
                vals[a, b] = errs[a, b] = np.nan
                notes.append(f"no draw reproduced X={t}, Y={template.evidence}")
    return CfTable(tr, vals, errs, template, notes)


# -- forbidden conditionals -------------------------------------------------


@dataclass
class Residuals:
    """``matrices[(i, j)][h, l] = P(Y_{x_j}=y_l | Y_{x_i}=y_h)`` for ``i > j``,
    indices being positions in the ordering.  Entries with ``l > h`` are the
    ones that must vanish; the rest are reported only."""

    matrices: dict[tuple[int, int], np.ndarray]
    stderr: dict[tuple[int, int], np.ndarray]

    def forbidden(self) -> list[tuple[int, int, int, int, float]]:
        out = []
        for (i, j), r in sorted(self.matrices.items()):
            m = r.shape[0]
            for h in range(m):
                for l in range(h + 1, m):
                    if not np.isnan(r[h, l]):
                        out.append((i, j, h, l, float(r[h, l])))
        return out

    def max_forbidden(self) -> float:
        vals = [v for *_, v in self.forbidden()]
        return max(vals) if vals else 0.0

    def violations(self, gate: float = RESIDUAL_GATE) -> list[tuple[int, int, int, int, float]]:
        return [f for f in self.forbidden() if f[-1] > gate]

    def to_csv(self) -> str:
        rows = []
        for (i, j), r in sorted(self.matrices.items()):
            se = self.stderr[(i, j)]
            for h in range(r.shape[0]):
                for l in range(r.shape[1]):
                    rows.append({"i": i, "j": j, "h": h, "l": l, "value": r[h, l], "stderr": se[h, l],
                                 "forbidden": l > h})
        buf = io.StringIO()
        pd.DataFrame(rows, columns=["i", "j", "h", "l", "value", "stderr", "forbidden"]).to_csv(buf, index=False)
        return buf.getvalue()

    def to_dict(self) -> dict:
        def clean(a):
            return np.where(np.isnan(a), None, a).tolist()

        return {
            "type": "residuals",
            "pairs": [
                {"i": i, "j": j, "values": clean(r), "stderr": clean(self.stderr[(i, j)])}
                for (i, j), r in sorted(self.matrices.items())
            ],
            "max_forbidden": self.max_forbidden(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Residuals":
        def arr(v):
            return np.array([[np.nan if c is None else c for c in row] for row in v], dtype=float)

        mats = {(p["i"], p["j"]): arr(p["values"]) for p in d["pairs"]}
        errs = {(p["i"], p["j"]): arr(p["stderr"]) for p in d["pairs"]}
        return cls(mats, errs)


def theorem2_residuals(
    source,
    ord: "OrderingSpec",
    n: int = 100_000,
    seed=0,
    *,
    data: pd.DataFrame | None = None,
    covariates: Sequence[str] = (),
    noise: str = "normal",
    cap=None,
) -> Residuals:
    """Forbidden-conditional matrices, exact for an SCM and sampled for a model
    (covariates drawn from ``data``)."""
    from .ordering import forbidden_conditionals

    if isinstance(source, Scm):
        mats = forbidden_conditionals(source, ord, cap)
        return Residuals(mats, {k: np.where(np.isnan(v), np.nan, 0.0) for k, v in mats.items()})

    from .learn import draw_noise, predict

    cfg = source.config
    rng = np.random.default_rng(seed)
    z_all = _covariates(source, data, covariates)
    z = z_all[rng.integers(0, len(z_all), size=n)] if cfg.z_dim else np.zeros((n, 0))
    u = draw_noise(rng, (n, 1, cfg.u_dim), noise)
    ys = predict(source, z, u)[:, :, 0]
    tr, orr = list(ord.treatment_order), list(ord.outcome_order)
    rank = np.empty(len(orr), dtype=np.int64)
    rank[orr] = np.arange(len(orr))
    pos = rank[ys[tr]]  # outcome positions, rows in treatment order
    m = len(orr)
    mats, errs = {}, {}
    for j in range(len(tr)):
        for i in range(j + 1, len(tr)):
            counts = np.zeros((m, m))
            np.add.at(counts, (pos[i], pos[j]), 1.0)
            tot = counts.sum(axis=1, keepdims=True)
            with np.errstate(invalid="ignore", divide="ignore"):
                r = np.where(tot > 0, counts / tot, np.nan)
                se = np.where(tot > 0, np.sqrt(r * (1 - r) / tot), np.nan)
            mats[(i, j)], errs[(i, j)] = r, se
    return Residuals(mats, errs)


# -- counterfactual prediction quality ---------------------------------------


def predict_counterfactuals(
    model: "TwinModel",
    x: np.ndarray,
    y: np.ndarray,
    z: np.ndarray,
    x_star: np.ndarray,
    draws: int = 200,
    seed=0,
    noise: str = "normal",
) -> np.ndarray:
    """Per-row counterfactual outcome: the mode of ``head_{x_star}`` over noise
    draws that reproduce the factual ``(x, y)``; rows with no such draw fall
    back to the mode over all draws."""
    from .learn import draw_noise, predict

    cfg = model.config
    rng = np.random.default_rng(seed)
    n = len(x)
    z = np.asarray(z, dtype=float).reshape(n, cfg.z_dim)
    u = draw_noise(rng, (n, draws, cfg.u_dim), noise)
    ys = predict(model, z, u)  # (N, n, draws)
    rows = np.arange(n)
    fact = ys[np.asarray(x), rows]  # (n, draws)
    cf = ys[np.asarray(x_star), rows]
    keep = fact == np.asarray(y)[:, None]
    m = cfg.n_outcomes
    onehot = np.eye(m)[cf]  # (n, draws, m)
    counts = (onehot * keep[..., None]).sum(axis=1)
    fallback = onehot.sum(axis=1)
    counts = np.where(keep.any(axis=1, keepdims=True), counts, fallback)
    return counts.argmax(axis=1)


def counterfactual_f1(
    model: "TwinModel",
    generated,
    draws: int = 200,
    seed=0,
    noise: str = "normal",
) -> float:
    """Macro F1 of predicted counterfactual outcomes against ground truth
    recomputed from the generator's latent sidecar, over all ``x_star != x``."""
    from sklearn.metrics import f1_score

    g = generated.generator
    data = generated.data
    x = data[g.treatment].to_numpy(dtype=np.int64)
    y = data[g.outcome].to_numpy(dtype=np.int64)
    z = data[list(g.covariates)].to_numpy(dtype=float) if model.config.z_dim else np.zeros((len(data), 0))
    truth, pred = [], []
    seeds = np.random.SeedSequence(seed).spawn(g.n_treatments)
    for t in range(g.n_treatments):
        sel = x != t
        true_cf = generated.counterfactual(t)[sel]
        p = predict_counterfactuals(model, x[sel], y[sel], z[sel], np.full(sel.sum(), t), draws, seeds[t], noise)
        truth.append(true_cf)
        pred.append(p)
    return float(f1_score(np.concatenate(truth), np.concatenate(pred), average="macro"))

"""Monotonicity, counterfactual ordering and counterfactual stability checks.

All checks take an :class:`OrderingSpec` naming the treatment and outcome
variables together with total orders over their categories.  ``x_i`` and
``y_k`` below are the categories at *positions* ``i`` and ``k`` of those orders.
"""

from __future__ import annotations

import io
import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import SpecError
from .scm import Scm, do, enumerate_worlds, interventional, propagate
from .twin import counterfactual_joint, star

__all__ = [
    "OrderingSpec",
    "ViolationReport",
    "CheckReport",
    "TrendReport",
    "ZERO_TOL",
    "interventional_matrix",
    "check_interventional_premise",
    "check_monotone",
    "check_cf_ordering",
    "check_stability",
    "infer_ordering",
    "forbidden_conditionals",
]

ZERO_TOL = 1e-12


@dataclass(frozen=True)
class OrderingSpec:
    treatment: str
    outcome: str
    treatment_order: tuple[int, ...]
    outcome_order: tuple[int, ...]

    def __post_init__(self):
        for name in ("treatment_order", "outcome_order"):
            order = tuple(int(v) for v in getattr(self, name))
            if sorted(order) != list(range(len(order))):
                raise SpecError(f"{name} {order} is not a permutation")
            object.__setattr__(self, name, order)

    @classmethod
    def natural(cls, scm: Scm, treatment: str, outcome: str) -> "OrderingSpec":
        return cls(
            treatment, outcome, tuple(range(scm.card(treatment))), tuple(range(scm.card(outcome)))
        )

    def outcome_rank(self) -> np.ndarray:
        """``rank[category]`` = position of the category in the outcome order."""
        rank = np.empty(len(self.outcome_order), dtype=np.int64)
        rank[list(self.outcome_order)] = np.arange(len(self.outcome_order))
        return rank

    def reversed_treatments(self) -> "OrderingSpec":
        return OrderingSpec(
            self.treatment, self.outcome, self.treatment_order[::-1], self.outcome_order
        )

    def to_dict(self) -> dict:
        return {
            "treatment": self.treatment,
            "outcome": self.outcome,
            "treatment_order": list(self.treatment_order),
            "outcome_order": list(self.outcome_order),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "OrderingSpec":
        return cls(d["treatment"], d["outcome"], tuple(d["treatment_order"]), tuple(d["outcome_order"]))


@dataclass(frozen=True)
class ViolationReport:
    kind: str  # ordering | monotonicity | stability | interventional-premise
    witness: dict
    magnitude: float

    def to_dict(self) -> dict:
        return {"kind": self.kind, "witness": self.witness, "magnitude": self.magnitude}


class CheckReport(list):
    """List of violations; ``skipped`` records pairs whose conditioning event
    has probability zero."""

    def __init__(self, items=(), skipped=None):
        super().__init__(items)
        self.skipped: list[dict] = list(skipped or [])

    @property
    def passed(self) -> bool:
        return len(self) == 0

    def to_jsonl(self) -> str:
        import json

        return "".join(json.dumps(v.to_dict(), sort_keys=True) + "\n" for v in self)


def _check_ord(scm: Scm, ord: OrderingSpec) -> None:
    if len(ord.treatment_order) != scm.card(ord.treatment):
        raise SpecError("treatment order does not cover every treatment category")
    if len(ord.outcome_order) != scm.card(ord.outcome):
        raise SpecError("outcome order does not cover every outcome category")


def interventional_matrix(scm: Scm, treatment: str, outcome: str, cap=None) -> np.ndarray:
    """``P[x, y] = P(Y = y | do(X = x))`` in natural category indexing."""
    nx, ny = scm.card(treatment), scm.card(outcome)
    out = np.zeros((nx, ny))
    for x in range(nx):
        table = interventional(scm, [outcome], {treatment: x}, cap=cap)
        out[x, table.support[:, 0]] = table.probs
    return out


def check_interventional_premise(
    scm: Scm, ord: OrderingSpec, tol: float = ZERO_TOL, cap=None
) -> CheckReport:
    """For every i > j and k > h: ``P(Y_{x_i}=y_k) >= P(Y_{x_j}=y_k)`` and
    ``P(Y_{x_i}=y_h) <= P(Y_{x_j}=y_h)``."""
    _check_ord(scm, ord)
    return _premise_from_matrix(interventional_matrix(scm, ord.treatment, ord.outcome, cap), ord, tol)


def _premise_from_matrix(p: np.ndarray, ord: OrderingSpec, tol: float) -> CheckReport:
    tx, ty = ord.treatment_order, ord.outcome_order
    m = len(ty)
    report = CheckReport()
    for i, j in itertools.combinations(range(len(tx)), 2):
        i, j = j, i  # i > j
        hi, lo = p[tx[i]], p[tx[j]]
        for k in range(1, m):
            gap = lo[ty[k]] - hi[ty[k]]
            if gap > tol:
                report.append(
                    ViolationReport("interventional-premise", {"i": i, "j": j, "k": k, "side": "increase"}, float(gap))
                )
        for h in range(m - 1):
            gap = hi[ty[h]] - lo[ty[h]]
            if gap > tol:
                report.append(
                    ViolationReport("interventional-premise", {"i": i, "j": j, "h": h, "side": "decrease"}, float(gap))
                )
    return report


def potential_outcomes(scm: Scm, ord: OrderingSpec, cap=None):
    """Enumerate the latent support once; return ``(worlds, Y)`` where
    ``Y[i]`` holds ``Y_{x_i}(u)`` for each latent configuration."""
    worlds = enumerate_worlds(scm, cap)
    latents = {k: worlds.values[k] for k in scm.latents}
    n = worlds.weights.size
    ys = np.stack(
        [
            propagate(do(scm, {ord.treatment: x}), latents, n)[ord.outcome]
            for x in ord.treatment_order
        ]
    )
    return worlds, ys


def check_monotone(scm: Scm, ord: OrderingSpec, cap=None) -> CheckReport:
    """Report every latent configuration ``u`` (with positive mass) and pair
    ``i > j`` where ``Y_{x_i}(u)`` sits below ``Y_{x_j}(u)`` in the outcome order."""
    _check_ord(scm, ord)
    worlds, ys = potential_outcomes(scm, ord, cap)
    ranks = ord.outcome_rank()[ys]
    report = CheckReport()
    for j, i in itertools.combinations(range(len(ord.treatment_order)), 2):
        for w in np.flatnonzero((ranks[i] < ranks[j]) & (worlds.weights > 0)):
            witness = {k: int(worlds.values[k][w]) for k in scm.latents}
            witness.update({"i": i, "j": j, "y_i": int(ys[i, w]), "y_j": int(ys[j, w])})
            report.append(ViolationReport("monotonicity", witness, float(worlds.weights[w])))
    return report


def _pair_table(scm: Scm, ord: OrderingSpec, evidence_pos: int, target_pos: int, cap) -> np.ndarray:
    """``J[a, b] = P(Y_{x_e} = a, Y_{x_t} = b)`` from one twin-network enumeration."""
    te, tt = ord.treatment_order[evidence_pos], ord.treatment_order[target_pos]
    table = counterfactual_joint(
        scm, {ord.treatment: te}, {ord.treatment: tt}, [ord.outcome, star(ord.outcome)], cap
    )
    m = scm.card(ord.outcome)
    joint = np.zeros((m, m))
    joint[table.support[:, 0], table.support[:, 1]] = table.probs
    return joint


def forbidden_conditionals(scm: Scm, ord: OrderingSpec, cap=None) -> dict[tuple[int, int], np.ndarray]:
    """For every ``i > j`` the matrix ``R[h, l] = P(Y_{x_j}=y_l | Y_{x_i}=y_h)``
    (positions in the orders); rows with a zero-probability condition are NaN."""
    _check_ord(scm, ord)
    ty = ord.outcome_order
    out = {}
    for j, i in itertools.combinations(range(len(ord.treatment_order)), 2):
        joint = _pair_table(scm, ord, i, j, cap)[np.ix_(ty, ty)]
        pe = joint.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[(i, j)] = np.where(pe > 0, joint / pe, np.nan)
    return out


def check_cf_ordering(scm: Scm, ord: OrderingSpec, tol: float = ZERO_TOL, cap=None) -> CheckReport:
    """Report ``P(Y_{x_j}=y_l | Y_{x_i}=y_h) > tol`` for any ``i > j``, ``l > h``."""
    report = CheckReport()
    for (i, j), r in forbidden_conditionals(scm, ord, cap).items():
        m = r.shape[0]
        for h in range(m):
            if np.isnan(r[h, 0]):
                report.skipped.append({"i": i, "j": j, "h": h})
                continue
            for l in range(h + 1, m):
                if r[h, l] > tol:
                    report.append(
                        ViolationReport("ordering", {"i": i, "j": j, "h": h, "l": l}, float(r[h, l]))
                    )
    return report


def _ratio(a: float, b: float) -> float | None:
    if b > 0:
        return a / b
    return np.inf if a > 0 else None


def check_stability(
    scm: Scm, ord: OrderingSpec, tol: float = ZERO_TOL, all_pairs: bool = False, cap=None
) -> CheckReport:
    """Counterfactual stability.

    Whenever ``P(Y_x=y)/P(Y_x'=y') >= P(Y_x=y')/P(Y_x'=y)`` the conditional
    ``P(Y_x=y' | Y_x'=y)`` must vanish.  By default only pairs oriented by the
    ordering are checked (``x`` above ``x'`` and ``y`` above ``y'``), the scope in
    which ordering implies stability; ``all_pairs=True`` checks every pair.
    A ratio ``a/0`` counts as infinite for ``a > 0``; ``0/0`` skips the pair.
    """
    _check_ord(scm, ord)
    p = interventional_matrix(scm, ord.treatment, ord.outcome, cap)
    tx, ty = ord.treatment_order, ord.outcome_order
    n, m = len(tx), len(ty)
    if all_pairs:
        tpairs = [(a, b) for a in range(n) for b in range(n) if a != b]
        ypairs = [(a, b) for a in range(m) for b in range(m) if a != b]
    else:
        tpairs = [(i, j) for j, i in itertools.combinations(range(n), 2)]
        ypairs = [(k, h) for h, k in itertools.combinations(range(m), 2)]
    report = CheckReport()
    cache: dict[tuple[int, int], np.ndarray] = {}
    for a, b in tpairs:  # x = x_a, x' = x_b
        for k, h in ypairs:  # y = y_k, y' = y_h
            x, xp, y, yp = tx[a], tx[b], ty[k], ty[h]
            lhs, rhs = _ratio(p[x, y], p[xp, yp]), _ratio(p[x, yp], p[xp, y])
            if lhs is None or rhs is None or lhs < rhs:
                continue
            if (b, a) not in cache:
                cache[(b, a)] = _pair_table(scm, ord, b, a, cap)
            joint = cache[(b, a)]  # rows: Y_{x'}, cols: Y_x
            pe = joint[y].sum()
            if pe <= 0:
                report.skipped.append({"x": a, "x_prime": b, "y": k, "y_prime": h})
                continue
            value = joint[y, yp] / pe
            if value > tol:
                report.append(
                    ViolationReport("stability", {"x": a, "x_prime": b, "y": k, "y_prime": h}, float(value))
                )
    return report


# -- ordering inference -----------------------------------------------------


@dataclass
class TrendReport:
    means: np.ndarray  # E[Y | do(x)] by natural category
    p_y_do: np.ndarray  # rows treatments, columns outcomes
    ate: np.ndarray  # ate[i, j] = E[Y|do(j)] - E[Y|do(i)]
    non_monotone: bool
    premise_violations: int = 0
    overridden: bool = False
    notes: list[str] = field(default_factory=list)

    def ate_csv(self) -> str:
        n = len(self.means)
        df = pd.DataFrame(self.ate, index=range(n), columns=range(n))
        df.index.name = "ATE"
        buf = io.StringIO()
        df.to_csv(buf, float_format="%.6g")
        return buf.getvalue()

    def p_y_do_csv(self) -> str:
        df = pd.DataFrame(self.p_y_do)
        df.index.name = "P(Y|do(X))"
        buf = io.StringIO()
        df.to_csv(buf, float_format="%.6g")
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "means": self.means.tolist(),
            "p_y_do": self.p_y_do.tolist(),
            "ate": self.ate.tolist(),
            "non_monotone": self.non_monotone,
            "premise_violations": self.premise_violations,
            "overridden": self.overridden,
            "notes": self.notes,
        }


def _p_y_do_from_data(
    data: pd.DataFrame, treatment: str, outcome: str, adjust: Sequence[str] = ()
) -> np.ndarray:
    x = data[treatment].to_numpy(dtype=np.int64)
    y = data[outcome].to_numpy(dtype=np.int64)
    nx, ny = int(x.max()) + 1, int(y.max()) + 1
    out = np.zeros((nx, ny))
    if not adjust:
        for t in range(nx):
            sel = x == t
            if not sel.any():
                raise SpecError(f"treatment {t} never observed in the data")
            out[t] = np.bincount(y[sel], minlength=ny) / sel.sum()
        return out
    # back-door adjustment over discrete covariates
    strata = data.groupby(list(adjust), sort=True).indices
    n = len(data)
    for idx in strata.values():
        w = len(idx) / n
        xs, ys = x[idx], y[idx]
        for t in range(nx):
            sel = xs == t
            if not sel.any():
                raise SpecError(f"treatment {t} missing in an adjustment stratum")
            out[t] += w * np.bincount(ys[sel], minlength=ny) / sel.sum()
    return out


def infer_ordering(
    source: Scm | pd.DataFrame,
    treatment: str,
    outcome: str,
    *,
    adjust: Sequence[str] = (),
    override: OrderingSpec | None = None,
    cap=None,
) -> tuple[OrderingSpec, TrendReport]:
    """Order treatments by ``E[Y | do(x)]`` ascending (ties by category index).

    From an SCM the interventional distributions are exact; from a dataset they
    are group frequencies, back-door adjusted over ``adjust`` when given.  An
    explicit ``override`` is returned unchanged but the trend is still reported.
    """
    if isinstance(source, Scm):
        p = interventional_matrix(source, treatment, outcome, cap)
    else:
        p = _p_y_do_from_data(source, treatment, outcome, adjust)
    nx, ny = p.shape
    means = p @ np.arange(ny)
    ate = means[None, :] - means[:, None]
    key = np.round(means, 12)
    order = tuple(int(t) for t in np.lexsort((np.arange(nx), key)))
    diffs = np.diff(key)
    non_monotone = not (np.all(diffs >= 0) or np.all(diffs <= 0))
    spec = OrderingSpec(treatment, outcome, order, tuple(range(ny)))
    report = TrendReport(means, p, ate, non_monotone)
    if override is not None:
        spec = override
        report.overridden = True
    report.premise_violations = len(_premise_from_matrix(p, spec, ZERO_TOL))
    if non_monotone:
        report.notes.append("E[Y|do(X)] is not monotone in the category index")
    return spec, report

"""Seeded random SCMs and queries for property tests and benchmarks.

Latent cardinality is at most 6 and latent probabilities come from a
symmetric Dirichlet(1), so any failure is reproducible from its seed.
"""

from __future__ import annotations

import numpy as np

from .ordering import OrderingSpec, check_interventional_premise, infer_ordering
from .scm import Scm, enumerate_worlds, validate
from .twin import CounterfactualQuery, Event

MAX_LATENT = 6
FAMILIES = ("binary", "sorted", "middle")


def _latent(name, card, rng):
    return {"variable": name, "probs": rng.dirichlet(np.ones(card)).tolist()}


def random_scm(rng: np.random.Generator, n_nodes: int = 4, max_card: int = 3, max_parents: int = 2) -> Scm:
    """Random Markovian SCM over ``V0..V{n-1}`` (topologically indexed), each
    node with up to ``max_parents`` earlier parents and its own latent."""
    variables, latents, mechs = [], [], []
    cards = [int(rng.integers(2, max_card + 1)) for _ in range(n_nodes)]
    for i in range(n_nodes):
        name = f"V{i}"
        k = int(rng.integers(0, min(i, max_parents) + 1))
        parents = sorted(rng.choice(i, size=k, replace=False).tolist()) if k else []
        lu = int(rng.integers(2, MAX_LATENT + 1))
        variables.append({"name": name, "kind": "observed", "cardinality": cards[i]})
        variables.append({"name": f"U{i}", "kind": "latent", "cardinality": lu})
        latents.append(_latent(f"U{i}", lu, rng))
        rows = int(np.prod([cards[p] for p in parents])) * lu
        mechs.append({"child": name, "parents": [f"V{p}" for p in parents] + [f"U{i}"],
                      "table": rng.integers(0, cards[i], size=rows).tolist()})
    return validate({"variables": variables, "latents": latents, "mechanisms": mechs})


def random_query(rng: np.random.Generator, scm: Scm, min_evidence: float = 0.01) -> CounterfactualQuery:
    """Counterfactual query whose evidence has probability at least ``min_evidence``."""
    obs = list(scm.order)
    worlds = enumerate_worlds(scm)
    while True:
        cf_var = obs[int(rng.integers(0, len(obs) - 1))]
        cf_do = {cf_var: int(rng.integers(0, scm.card(cf_var)))}
        later = obs[obs.index(cf_var) + 1 :]
        target_var = later[int(rng.integers(0, len(later)))]
        op = ("eq", "ge", "le")[int(rng.integers(0, 3))]
        target = Event(target_var, op, int(rng.integers(0, scm.card(target_var))))
        pick = int(rng.choice(worlds.weights.size, p=worlds.weights))
        n_ev = int(rng.integers(1, min(3, len(obs)) + 1))
        ev_vars = rng.choice(len(obs), size=n_ev, replace=False)
        evidence = {obs[v]: int(worlds.values[obs[v]][pick]) for v in ev_vars}
        if worlds.mass(evidence) >= min_evidence:
            return CounterfactualQuery(target, evidence, cf_do=cf_do)


def _premise_tables(rng, family, n, m, lu, nz):
    """Outcome table of shape ``(n, nz, lu)``: ``[x, z, u] -> y``."""
    if family == "binary":
        return rng.integers(0, 2, size=(n, nz, lu))
    if family == "sorted":
        t = rng.integers(0, m, size=(n, nz, lu))
        return np.sort(t, axis=0)
    # middle: every branch either ignores x (any value) or maps x into {0, m-1}
    t = np.empty((n, nz, lu), dtype=np.int64)
    const = rng.random(lu) < 0.5
    for u in range(lu):
        if const[u]:
            t[:, :, u] = rng.integers(0, m)
        else:
            t[:, :, u] = rng.choice([0, m - 1], size=(n, nz))
    if rng.random() < 0.3:
        t = np.sort(t, axis=0)
    return t


def random_premise_scm(rng: np.random.Generator, max_tries: int = 50):
    """Random treatment/outcome SCM satisfying the interventional premise.

    Returns ``(scm, ordering, family)``.  The treatment order is inferred from
    ``E[Y | do(x)]``; families: binary outcomes with arbitrary tables, tables
    sorted along the treatment (monotone), and three-or-more valued outcomes
    whose middle categories carry treatment-independent mass.
    """
    for _ in range(max_tries):
        family = FAMILIES[int(rng.integers(0, 3))]
        n = int(rng.integers(2, 5))
        m = 2 if family == "binary" else int(rng.integers(2, 5))
        lu = int(rng.integers(2, MAX_LATENT + 1))
        nz = 2 if rng.random() < 0.4 else 1
        table = _premise_tables(rng, family, n, m, lu, nz)
        variables = [
            {"name": "X", "kind": "observed", "cardinality": n},
            {"name": "Y", "kind": "observed", "cardinality": m},
            {"name": "U_X", "kind": "latent", "cardinality": n},
            {"name": "U_Y", "kind": "latent", "cardinality": lu},
        ]
        latents = [_latent("U_X", n, rng), _latent("U_Y", lu, rng)]
        if nz > 1:
            variables += [{"name": "Z", "kind": "observed", "cardinality": nz},
                          {"name": "U_Z", "kind": "latent", "cardinality": 2}]
            latents.append(_latent("U_Z", 2, rng))
            mechs = [
                {"child": "Z", "parents": ["U_Z"], "table": [0, 1]},
                {"child": "X", "parents": ["Z", "U_X"], "table": rng.integers(0, n, size=2 * n).tolist()},
                {"child": "Y", "parents": ["X", "Z", "U_Y"], "table": table.reshape(-1).tolist()},
            ]
        else:
            mechs = [
                {"child": "X", "parents": ["U_X"], "table": list(range(n))},
                {"child": "Y", "parents": ["X", "U_Y"], "table": table[:, 0, :].reshape(-1).tolist()},
            ]
        scm = validate({"variables": variables, "latents": latents, "mechanisms": mechs})
        ord, _ = infer_ordering(scm, "X", "Y")
        if not check_interventional_premise(scm, ord):
            return scm, ord, family
    raise RuntimeError("no premise-satisfying model found")


def random_monotone_binary_scm(rng: np.random.Generator) -> Scm:
    """Unconfounded binary ``X -> Y`` where every latent branch is one of
    ``Y = 0``, ``Y = X``, ``Y = 1``.  At least one branch follows ``X`` so the
    evidence behind PN and PS has positive mass."""
    lu = int(rng.integers(2, MAX_LATENT + 1))
    kinds = rng.integers(0, 3, size=lu)  # 0: never, 1: follows X, 2: always
    kinds[int(rng.integers(0, lu))] = 1
    y0 = (kinds == 2).astype(int)
    y1 = (kinds >= 1).astype(int)
    table = np.concatenate([y0, y1])
    return validate(
        {
            "variables": [
                {"name": "X", "kind": "observed", "cardinality": 2},
                {"name": "Y", "kind": "observed", "cardinality": 2},
                {"name": "U_X", "kind": "latent", "cardinality": 2},
                {"name": "U_Y", "kind": "latent", "cardinality": lu},
            ],
            "latents": [_latent("U_X", 2, rng), _latent("U_Y", lu, rng)],
            "mechanisms": [
                {"child": "X", "parents": ["U_X"], "table": [0, 1]},
                {"child": "Y", "parents": ["X", "U_Y"], "table": table.tolist()},
            ],
        }
    )

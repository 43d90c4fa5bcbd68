"""Acceptance suite: one recorded pass/fail line per criterion, printed in the
terminal summary.  Run directly with ``python tests/test_acceptance.py``."""

import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import record
from twincf.causation import (
    CfTemplate,
    counterfactual_f1,
    counterfactual_table,
    poc_exact,
    poc_from_model,
    theorem2_residuals,
)
from twincf.datagen import Credit7, IstLogistic, Unconfounded, ambiguous_scm
from twincf.learn import ModelConfig, TrainConfig, TwinDataset, TwinModel, grad_check, make_labels, train
from twincf.ordering import (
    OrderingSpec,
    check_cf_ordering,
    check_monotone,
    check_stability,
    forbidden_conditionals,
)
from twincf.randgen import random_monotone_binary_scm, random_premise_scm, random_query, random_scm
from twincf.scm import conditional, interventional
from twincf.twin import CounterfactualQuery, Event, bench_compare, counterfactual_exact, counterfactual_mc


def test_1_non_identifiability():
    t0 = time.perf_counter()
    a = ambiguous_scm([1 / 2, 1 / 6, 1 / 6, 1 / 6])
    b = ambiguous_scm([1 / 3, 1 / 3, 1 / 3, 0])
    q = CounterfactualQuery(Event("Y", value=0), {"X": 0, "Y": 1}, cf_do={"X": 1})
    va, vb = counterfactual_exact(a, q), counterfactual_exact(b, q)
    gap = 0.0
    for x in (0, 1):
        ta, tb = conditional(a, ["Y"], {"X": x}), conditional(b, ["Y"], {"X": x})
        gap = max(gap, max(abs(ta.prob({"Y": y}) - tb.prob({"Y": y})) for y in (0, 1)))
    dt = time.perf_counter() - t0
    ok = abs(va - 0.5) <= 1e-12 and abs(vb) <= 1e-12 and gap <= 1e-12 and dt < 1.0
    record("1 non-identifiability", ok, f"A={va:.12f} B={vb:.12f} max conditional gap={gap:.1e} in {dt:.2f}s")
    assert ok


def test_2_uniform_poc_exact_and_mc():
    t0 = time.perf_counter()
    scm = Unconfounded().scm()
    exact = poc_exact(scm).values()
    printed = (0.5, 0.5, 0.33333)
    # the printed 0.33333 is 1/3 rounded; compare the exact value to 1/3 and the print to 5 dp
    ok_exact = all(abs(e - t) <= 1e-9 for e, t in zip(exact, (0.5, 0.5, 1 / 3)))
    ok_exact &= all(round(e, 5) == p for e, p in zip(exact, printed))
    seeds = np.random.SeedSequence(2).spawn(3)
    queries = [
        CounterfactualQuery(Event("Y", value=0), {"X": 1, "Y": 1}, cf_do={"X": 0}),
        CounterfactualQuery(Event("Y", value=1), {"X": 0, "Y": 0}, cf_do={"X": 1}),
        CounterfactualQuery((Event("Y", value=0, world="factual"), Event("Y", value=1)),
                            factual_do={"X": 0}, cf_do={"X": 1}),
    ]
    ests = [counterfactual_mc(scm, q, 200_000, s) for q, s in zip(queries, seeds)]
    ok_mc = all(abs(e.value - t) <= 3 * e.stderr for e, t in zip(ests, exact))
    dt = time.perf_counter() - t0
    ok = ok_exact and ok_mc and dt < 10
    mc = ", ".join(f"{e.value:.4f}±{e.stderr:.4f}" for e in ests)
    record("2 uniform PoC", ok, f"exact={tuple(round(v, 9) for v in exact)} mc=({mc}) in {dt:.1f}s")
    assert ok


def test_3_trained_model_poc(e1_trained):
    t0 = time.perf_counter()
    gen, res = e1_trained
    pn, ps, pns = poc_from_model(res.model, gen.data, 100_000, seed=1).values()
    ok = abs(pn - 0.5) <= 0.05 and abs(ps - 0.5) <= 0.05 and abs(pns - 1 / 3) <= 0.05
    record("3 trained-model PoC", ok, f"PN={pn:.4f} PS={ps:.4f} PNS={pns:.4f} (gate ±0.05; "
           f"sampling {time.perf_counter() - t0:.1f}s after shared training)")
    assert ok


def test_4_ordering_implications():
    t0 = time.perf_counter()
    n_models, failures, mono, worst = 120, [], 0, 0.0
    for seed in range(n_models):
        scm, ord, family = random_premise_scm(np.random.default_rng(seed))
        is_mono = check_monotone(scm, ord).passed
        is_ord = check_cf_ordering(scm, ord).passed
        if is_mono != is_ord:
            failures.append((seed, "monotone vs ordering"))
        if is_ord and not check_stability(scm, ord).passed:
            failures.append((seed, "ordering without stability"))
        if is_mono:
            mono += 1
            vals = [r[np.triu_indices(r.shape[0], 1)] for r in forbidden_conditionals(scm, ord).values()]
            top = max((float(np.nanmax(v)) for v in vals if v.size and not np.all(np.isnan(v))), default=0.0)
            worst = max(worst, top)
            if top > 1e-12:
                failures.append((seed, "forbidden conditional"))
    dt = time.perf_counter() - t0
    ok = not failures and dt < 120 and 0 < mono < n_models
    record("4 ordering implications", ok, f"{n_models} models ({mono} monotone), {len(failures)} failures, "
           f"max forbidden on monotone={worst:.1e}, {dt:.1f}s")
    assert ok, failures[:5]


def test_5_pns_identity():
    worst = 0.0
    for seed in range(50):
        scm = random_monotone_binary_scm(np.random.default_rng(1000 + seed))
        pns = poc_exact(scm).pns.value
        ate = (interventional(scm, ["Y"], {"X": 1}).prob({"Y": 1})
               - interventional(scm, ["Y"], {"X": 0}).prob({"Y": 1}))
        worst = max(worst, abs(pns - ate))
    ok = worst <= 1e-12
    record("5 PNS identity", ok, f"50 monotone binary models, max |PNS - ATE|={worst:.1e}")
    assert ok


def test_6_estimator_equivalence():
    rng = np.random.default_rng(6)
    failures, worst = 0, 0.0
    scms, queries = [], []
    for _ in range(50):
        scm = random_scm(rng, n_nodes=4)
        scms.append(scm)
        queries.append(random_query(rng, scm))
    timed = True
    for i, (scm, q) in enumerate(zip(scms, queries)):
        truth = counterfactual_exact(scm, q)
        report = bench_compare(scm, [q], 100_000, seed=i)
        for r in report.records:
            timed &= r["wall_ms"] > 0
            z = abs(r["estimate"] - truth) / r["stderr"] if r["stderr"] > 0 else (0.0 if r["estimate"] == truth
                                                                                  else np.inf)
            worst = max(worst, z)
            failures += z > 4
    ok = failures == 0 and timed
    record("6 estimator equivalence", ok, f"50 queries x 2 estimators, {failures} outside 4 stderr, "
           f"worst z={worst:.2f}, timing fields populated={timed}")
    assert ok


# -- trained semi-synthetic models ------------------------------------------

SEEDS = (0, 1, 2)


def _fit_all(gen, n):
    data = gen.sample(n, 0)
    ds = make_labels(data.data, gen, covariates=list(gen.covariates))
    t0 = time.perf_counter()
    models = {(s, lam): train(ds, TrainConfig(lam=lam, seed=s)).model for s in SEEDS for lam in (1.0, 0.0)}
    return data, models, time.perf_counter() - t0


@pytest.fixture(scope="module")
def credit7_models():
    return _fit_all(Credit7(), 20_000)


@pytest.fixture(scope="module")
def ist_models():
    return _fit_all(IstLogistic(), 10_000)


def test_7_ordering_direction(credit7_models):
    data, models, fit_s = credit7_models
    t0 = time.perf_counter()
    ord = OrderingSpec("X", "Y", (0, 1, 2), (0, 1, 2))
    cov = ["Z"]
    rows, constrained_ok, unconstrained_bad = [], True, False
    for s in SEEDS:
        res1 = theorem2_residuals(models[(s, 1.0)], ord, 100_000, 1, data=data.data, covariates=cov)
        tab = counterfactual_table(models[(s, 1.0)], CfTemplate(0, 2), ord, 50_000, 3, data=data.data,
                                   covariates=cov)
        res0 = theorem2_residuals(models[(s, 0.0)], ord, 100_000, 1, data=data.data, covariates=cov)
        constrained_ok &= tab.dominance > 0 and res1.max_forbidden() <= 0.02
        unconstrained_bad |= res0.max_forbidden() > 0.02
        rows.append(f"seed {s}: dom={tab.dominance:.3f} maxres={res1.max_forbidden():.4f} "
                    f"| lambda=0 maxres={res0.max_forbidden():.3f}")
    dt = fit_s + time.perf_counter() - t0
    ok = constrained_ok and unconstrained_bad and dt < 900
    record("7 credit7 ordering direction", ok, "; ".join(rows) + f"; {dt:.0f}s")
    assert ok


def test_8_f1_direction(credit7_models, ist_models):
    lines, ok = [], True
    for name, (data, models, _), gen in (("credit7", credit7_models, Credit7()),
                                          ("ist", ist_models, IstLogistic())):
        test = gen.sample(5000, 99)
        for s in SEEDS:
            f1c = counterfactual_f1(models[(s, 1.0)], test, 200, 2)
            f1u = counterfactual_f1(models[(s, 0.0)], test, 200, 2)
            ok &= f1c >= f1u
            lines.append(f"{name} seed {s}: {f1c:.4f} vs {f1u:.4f}")
    record("8 F1 direction", ok, "constrained vs unconstrained: " + "; ".join(lines))
    assert ok


def test_9_gradient_check():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        nt, no, dz = int(rng.integers(2, 5)), int(rng.integers(2, 4)), int(rng.integers(0, 3))
        cfg = ModelConfig(nt, no, dz, u_dim=int(rng.integers(1, 3)), width=int(rng.integers(3, 7)),
                          activation=("relu", "tanh")[seed % 2])
        model = TwinModel.init(cfg, seed).perturbed(seed)
        b = 5
        x = rng.integers(0, nt, b)
        xs = (x + rng.integers(1, nt, b)) % nt
        dist = rng.dirichlet(np.ones(no), b)
        batch = TwinDataset(x, xs, rng.normal(size=(b, dz)), rng.integers(0, no, b), dist.argmax(1), dist, nt, no)
        worst = max(worst, grad_check(model, batch, 1e-5, TrainConfig(lam=1.0, draws=4), seed=seed))
    dt = time.perf_counter() - t0
    ok = worst < 1e-4 and dt < 30
    record("9 gradient check", ok, f"max relative error {worst:.2e} over 20 seeds in {dt:.1f}s")
    assert ok


def test_10_documented_exclusions():
    readme = (Path(__file__).resolve().parents[1] / "README.md").read_text()
    needed = ("Gaussian", "Kenyan Water", "Twins", "German Credit")
    missing = [w for w in needed if w not in readme]
    record("10 exclusions", not missing, "not run at desk scale; documented in README"
           + (f" (missing: {missing})" if missing else ""))
    assert not missing


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))

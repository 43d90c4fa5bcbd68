import json

import numpy as np
import pytest

from oracles import brute_marginal
from twincf.datagen import Confounded, ambiguous_scm
from twincf.errors import (
    BadDistribution,
    CycleDetected,
    EnumerationTooLarge,
    LatentIntervention,
    PartialMechanism,
    UnknownVariable,
    ZeroEvidence,
)
from twincf.scm import conditional, do, enumerate_worlds, interventional, joint, load_scm, sample, validate

Q_A = [1 / 2, 1 / 6, 1 / 6, 1 / 6]
Q_B = [1 / 3, 1 / 3, 1 / 3, 0.0]


def point_mass_spec():
    return {
        "variables": [
            {"name": "A", "kind": "observed", "cardinality": 3},
            {"name": "B", "kind": "observed", "cardinality": 2},
            {"name": "U_A", "kind": "latent", "cardinality": 2},
            {"name": "U_B", "kind": "latent", "cardinality": 1},
        ],
        "latents": [{"variable": "U_A", "probs": [0.0, 1.0]}, {"variable": "U_B", "probs": [1.0]}],
        "mechanisms": [
            {"child": "A", "parents": ["U_A"], "table": [0, 2]},
            {"child": "B", "parents": ["A", "U_B"], "table": [0, 1, 1]},
        ],
    }


def test_ambiguous_model_validates():
    m = ambiguous_scm(Q_A)
    assert m.order == ("X", "Y")
    assert m.parents("Y") == ("X", "U_Y")


def test_single_variable_point_mass():
    m = validate(
        {
            "variables": [{"name": "A", "kind": "observed", "cardinality": 1},
                          {"name": "U", "kind": "latent", "cardinality": 1}],
            "latents": [{"variable": "U", "probs": [1.0]}],
            "mechanisms": [{"child": "A", "parents": ["U"], "table": [0]}],
        }
    )
    assert joint(m).to_records() == [{"A": 0, "p": 1.0}]


def test_cycle_detected_names_back_edge():
    spec = ambiguous_scm(Q_A).to_dict()
    spec["mechanisms"][0] = {"child": "X", "parents": ["Y", "U_X"], "table": [0, 1, 1, 0]}
    with pytest.raises(CycleDetected) as exc:
        validate(spec)
    assert set(exc.value.edge) == {"X", "Y"}


def test_partial_mechanism_names_missing_tuple():
    spec = ambiguous_scm(Q_A).to_dict()
    spec["mechanisms"][1]["table"] = spec["mechanisms"][1]["table"][:-1]
    with pytest.raises(PartialMechanism) as exc:
        validate(spec)
    assert exc.value.child == "Y"
    assert exc.value.missing == (1, 3)


def test_out_of_range_entry_rejected():
    spec = ambiguous_scm(Q_A).to_dict()
    spec["mechanisms"][1]["table"][0] = 2
    with pytest.raises(PartialMechanism):
        validate(spec)


def test_bad_distribution_reports_sum():
    spec = ambiguous_scm(Q_A).to_dict()
    spec["latents"][1]["probs"] = [0.5, 0.2, 0.2, 0.2]
    with pytest.raises(BadDistribution) as exc:
        validate(spec)
    assert exc.value.variable == "U_Y"
    assert exc.value.total == pytest.approx(1.1)


def test_json_round_trip(tmp_path):
    m = ambiguous_scm(Q_A)
    path = tmp_path / "ambiguous.json"
    path.write_text(json.dumps(m.to_dict()))
    assert load_scm(path).to_dict() == m.to_dict()


def test_sampling_matches_conditional_within_3_sigma():
    m = ambiguous_scm(Q_A)
    df = sample(m, 10**6, seed=11)
    sel = df[df.X == 0]
    p_hat = float((sel.Y == 0).mean())
    exact = Q_A[0] + Q_A[1]
    assert abs(p_hat - exact) < 3 * np.sqrt(exact * (1 - exact) / len(sel))


def test_point_mass_samples_identical():
    df = sample(validate(point_mass_spec()), 500, seed=3)
    assert (df.A == 2).all() and (df.B == 1).all()


def test_same_seed_same_sample():
    m = ambiguous_scm(Q_A)
    assert sample(m, 1000, 5).equals(sample(m, 1000, 5))


def test_do_replaces_mechanism():
    m = ambiguous_scm(Q_A)
    sub = do(m, {"X": 0})
    assert sub.mechanisms["X"].is_constant and sub.parents("X") == ()
    np.testing.assert_array_equal(sub.mechanisms["Y"].table, m.mechanisms["Y"].table)
    assert do(m, {}) is m


def test_do_on_target_is_point_mass():
    t = joint(do(ambiguous_scm(Q_A), {"Y": 1})).marginal(["Y"])
    assert t.to_records() == [{"Y": 1, "p": 1.0}]


def test_do_errors():
    m = ambiguous_scm(Q_A)
    with pytest.raises(UnknownVariable):
        do(m, {"W": 0})
    with pytest.raises(LatentIntervention):
        do(m, {"U_Y": 0})


def test_joint_matches_brute_force():
    m = ambiguous_scm(Q_A)
    t = joint(m)
    assert t.prob(X=0, Y=0) == pytest.approx(brute_marginal(m.to_dict(), {"X": 0, "Y": 0}), abs=1e-12)
    assert t.prob(X=0, Y=0) == pytest.approx(1 / 3, abs=1e-12)
    assert t.probs.sum() == pytest.approx(1.0, abs=1e-9)


def test_joint_deterministic_single_entry():
    t = joint(validate(point_mass_spec()))
    assert len(t) == 1 and t.probs[0] == 1.0


def test_enumeration_cap(monkeypatch):
    m = ambiguous_scm(Q_A)
    with pytest.raises(EnumerationTooLarge) as exc:
        joint(m, cap=4)
    assert exc.value.size == 8 and exc.value.cap == 4
    monkeypatch.setenv("TWINCF_ENUM_CAP", "2")
    with pytest.raises(EnumerationTooLarge):
        joint(m)


@pytest.mark.parametrize(
    "q, x, y, formula",
    [(Q_A, 0, 0, Q_A[0] + Q_A[1]), (Q_B, 1, 0, Q_B[1] + Q_B[3])],
)
def test_conditional_examples(q, x, y, formula):
    assert conditional(ambiguous_scm(q), ["Y"], {"X": x}).prob(Y=y) == pytest.approx(formula, abs=1e-12)


def test_conditional_full_assignment_is_point_mass():
    t = conditional(ambiguous_scm(Q_A), ["X", "Y"], {"X": 1, "Y": 0})
    assert t.to_records() == [{"X": 1, "Y": 0, "p": 1.0}]


def test_zero_evidence():
    with pytest.raises(ZeroEvidence):
        conditional(validate(point_mass_spec()), ["B"], {"A": 0})


def test_unconfounded_interventional_equals_conditional():
    m = ambiguous_scm(Q_A)
    for x in (0, 1):
        a = interventional(m, ["Y"], {"X": x})
        b = conditional(m, ["Y"], {"X": x})
        np.testing.assert_allclose(a.probs, b.probs, atol=1e-12)


def test_confounded_interventional_differs_from_conditional():
    # with pux1 = 0.5 the treatment is independent of Z, so a dependent
    # treatment assignment is needed for the two quantities to separate
    m = Confounded([1 / 3] * 3, pz1=0.5, pux1=0.2).scm()
    do_p = interventional(m, ["Y"], {"X": 1}).prob(Y=1)
    cond_p = conditional(m, ["Y"], {"X": 1}).prob(Y=1)
    spec = m.to_dict()
    assert do_p == pytest.approx(brute_marginal(spec, {"Y": 1}, {"X": 1}), abs=1e-12)
    assert cond_p == pytest.approx(brute_marginal(spec, {"X": 1, "Y": 1}) / brute_marginal(spec, {"X": 1}), abs=1e-12)
    assert abs(do_p - cond_p) > 1e-3


def test_confounded_independent_assignment_coincides():
    m = Confounded([1 / 3] * 3, pz1=0.5, pux1=0.5).scm()
    assert interventional(m, ["Y"], {"X": 1}).prob(Y=1) == pytest.approx(
        conditional(m, ["Y"], {"X": 1}).prob(Y=1), abs=1e-12
    )


def test_empirical_converges_to_joint():
    m = Confounded([0.2, 0.3, 0.5], pz1=0.3, pux1=0.3).scm()
    t = joint(m)
    n = 10**6
    df = sample(m, n, seed=2)
    counts = df.value_counts(list(t.variables)).to_dict()
    emp = np.array([counts.get(tuple(r), 0) / n for r in t.support])
    tv = 0.5 * np.abs(emp - t.probs).sum()
    bound = 5 * 0.5 * np.sqrt(t.probs * (1 - t.probs) / n).sum()
    assert tv < bound


def test_do_idempotent_and_commuting():
    m = Confounded([0.2, 0.3, 0.5], pz1=0.3).scm()
    a = do(do(m, {"X": 1}), {"X": 1})
    b = do(m, {"X": 1})
    assert a.to_dict() == b.to_dict()
    c = do(do(m, {"X": 1}), {"Z": 0}).to_dict()
    d = do(do(m, {"Z": 0}), {"X": 1}).to_dict()
    assert c == d


def test_empty_evidence_conditional_is_marginal():
    m = ambiguous_scm(Q_B)
    np.testing.assert_allclose(conditional(m, ["Y"]).probs, joint(m).marginal(["Y"]).probs, atol=1e-12)


def test_enumeration_prunes_zero_mass():
    w = enumerate_worlds(ambiguous_scm(Q_B))
    assert np.all(w.weights > 0)

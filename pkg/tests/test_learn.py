import numpy as np
import pandas as pd
import pytest

from twincf.datagen import Unconfounded, gen_credit7
from twincf.errors import NoMatch, NonFiniteLoss, SpecError
from twincf.learn import (
    ModelConfig,
    TrainConfig,
    TwinDataset,
    TwinModel,
    draw_noise,
    forward,
    grad_check,
    load_model,
    loss_and_grads,
    make_labels,
    penalty,
    reparam_noise,
    response_type_frequencies,
    train,
)


def random_batch(rng, nt, no, dz, b=6):
    x = rng.integers(0, nt, b)
    xs = (x + rng.integers(1, nt, b)) % nt
    dist = rng.dirichlet(np.ones(no), b)
    return TwinDataset(x, xs, rng.normal(size=(b, dz)), rng.integers(0, no, b), dist.argmax(1), dist, nt, no)


def test_dataset_rejects_same_treatment():
    with pytest.raises(SpecError):
        TwinDataset([0], [0], np.zeros((1, 0)), [0], [0], [[1.0, 0.0]], 2, 2)


def test_make_labels_generator_mode():
    gen = Unconfounded([1 / 3] * 3, 0.5)
    data = gen.sample(200, 0).data
    ds = make_labels(data, gen)
    # enumerate U_Y in {0, 1, 2}: Y_1 = 1, 0, 1 and Y_0 = 0, 0, 1
    p_y1_do1 = sum(q for q, y in zip(gen.q, (1, 0, 1)) if y == 1)
    sel = ds.x_star == 1
    np.testing.assert_allclose(ds.y_star_dist[sel, 1], p_y1_do1, atol=1e-12)
    assert (ds.y_star[sel] == 1).all() and (ds.y_star[~sel] == 0).all()
    assert len(ds) == len(data) and (ds.x != ds.x_star).all()


def test_make_labels_matching_exact():
    z = np.repeat(np.arange(5), 4)
    df = pd.DataFrame({"Z": z, "X": np.tile([0, 1], 10), "Y": z % 2})
    ds = make_labels(df, "matching", covariates=["Z"])
    np.testing.assert_array_equal(ds.y_star, ds.z[:, 0].astype(int) % 2)


def test_make_labels_no_match():
    df = pd.DataFrame({"X": [0, 0, 2], "Y": [0, 1, 1], "Z": [0.0, 1.0, 2.0]})
    with pytest.raises(NoMatch):
        make_labels(df, "matching", covariates=["Z"], n_treatments=3)


def test_forward_normalised_and_symmetric():
    rng = np.random.default_rng(0)
    m = TwinModel.init(ModelConfig(3, 4, 2), seed=1)
    x, xs = np.array([0, 1, 2]), np.array([2, 0, 1])
    z, u = rng.normal(size=(3, 2)), rng.normal(size=(3, 1))
    p, ps = forward(m, x, xs, z, u)
    np.testing.assert_allclose(p.sum(1), 1, atol=1e-9)
    np.testing.assert_allclose(ps.sum(1), 1, atol=1e-9)
    q, qs = forward(m, xs, x, z, u)
    np.testing.assert_array_equal(p, qs)
    np.testing.assert_array_equal(ps, q)


def test_forward_zero_model_uniform():
    m = TwinModel.zeros(ModelConfig(2, 3, 1))
    p, ps = forward(m, [0], [1], [[0.3]], [[1.2]])
    np.testing.assert_allclose(p, 1 / 3)
    np.testing.assert_allclose(ps, 1 / 3)


def test_penalty_identical_heads_zero():
    m = TwinModel.init(ModelConfig(3, 3, 0), seed=2)
    m.params["hW"][:] = m.params["hW"][0]
    u = np.random.default_rng(0).normal(size=(20, 1))
    assert penalty(m, np.zeros((20, 0)), u) == 0.0


def test_penalty_increasing_heads_zero():
    m = TwinModel.zeros(ModelConfig(3, 2, 0))
    m.params["hb"] = np.array([[1.0, -1.0], [0.0, 0.0], [-1.0, 1.0]])
    assert penalty(m, np.zeros((5, 0)), np.ones((5, 1))) == 0.0


def test_penalty_hinge_arithmetic():
    m = TwinModel.zeros(ModelConfig(2, 2, 0))
    # expected ranks: head 0 -> 0.7, head 1 -> 0.3
    m.params["hb"] = np.log(np.array([[0.3, 0.7], [0.7, 0.3]]))
    assert penalty(m, np.zeros((4, 0)), np.zeros((4, 1))) == pytest.approx(4 * 0.4, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_penalty_zero_iff_ranks_nondecreasing(seed):
    rng = np.random.default_rng(seed)
    m = TwinModel.init(ModelConfig(3, 3, 1), seed)
    z, u = rng.normal(size=(50, 1)), rng.normal(size=(50, 1))
    from twincf.learn import all_heads

    r = all_heads(m, z, u) @ np.arange(3)
    ok = np.all(np.diff(r, axis=0) >= 0)
    assert (penalty(m, z, u) == 0.0) == ok


@pytest.mark.parametrize("seed", range(6))
def test_grad_check_small(seed):
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(int(rng.integers(2, 4)), int(rng.integers(2, 4)), int(rng.integers(0, 3)), width=4,
                      activation=("relu", "tanh")[seed % 2])
    m = TwinModel.init(cfg, seed).perturbed(seed)
    batch = random_batch(rng, cfg.n_treatments, cfg.n_outcomes, cfg.z_dim)
    tc = TrainConfig(lam=0.5, draws=3, loss=("mse", "cross-entropy")[seed % 3 == 2])
    assert grad_check(m, batch, 1e-5, tc, seed=seed) < 1e-4


def test_grad_check_eps_range():
    m = TwinModel.init(ModelConfig(2, 2, 0, width=2))
    with pytest.raises(SpecError):
        grad_check(m, random_batch(np.random.default_rng(0), 2, 2, 0), eps=1e-2)


def test_unused_head_gets_zero_gradient():
    rng = np.random.default_rng(1)
    m = TwinModel.init(ModelConfig(3, 2, 0, width=4), 0)
    batch = TwinDataset([0, 1], [1, 0], np.zeros((2, 0)), [0, 1], [1, 0], [[0.2, 0.8], [0.6, 0.4]], 3, 2)
    u = draw_noise(rng, (2, 4, 1))
    _, _, g = loss_and_grads(m, batch, u, TrainConfig(lam=0.0))
    assert np.all(g["hW"][2] == 0) and np.all(g["hb"][2] == 0)


def test_grad_check_repeatable():
    rng = np.random.default_rng(3)
    m = TwinModel.init(ModelConfig(2, 3, 1, width=3), 3).perturbed(3)
    b = random_batch(rng, 2, 3, 1)
    assert grad_check(m, b, seed=1) == grad_check(m, b, seed=1)


def test_training_deterministic():
    g = gen_credit7(300, 0)
    ds = make_labels(g.data, g.generator, covariates=["Z"])
    cfg = TrainConfig(epochs=2, seed=5)
    a, b = train(ds, cfg), train(ds, cfg)
    assert a.losses == b.losses and a.penalties == b.penalties
    for k in a.model.params:
        np.testing.assert_array_equal(a.model.params[k], b.model.params[k])


def test_single_row_memorised():
    # consistent with the natural order, so the hinge never fires
    ds = TwinDataset([0], [1], [[0.5]], [0], [1], [[0.0, 1.0]], 2, 2)
    res = train(ds, TrainConfig(epochs=400, batch_size=1, lr=0.2, seed=0))
    assert res.losses[-1] < 1e-3


def test_non_finite_loss():
    ds = make_labels(Unconfounded().sample(64, 0).data, Unconfounded())
    with pytest.raises(NonFiniteLoss) as exc:
        with np.errstate(all="ignore"):
            train(ds, TrainConfig(lr=1e300, epochs=3))
    assert exc.value.epoch >= 0


def test_identity_u_block():
    m = TwinModel.init(ModelConfig(2, 2, 0, u_dim=2, width=8), identity_u=True)
    u = np.random.default_rng(0).normal(size=(100, 2))
    out = reparam_noise(m, u)
    np.testing.assert_allclose(out[:, :2], u, atol=1e-12)
    assert np.all(out[:, 2:] == 0)


def test_pushforward_is_distribution():
    m = TwinModel.init(ModelConfig(3, 3, 0), seed=4)
    freqs = response_type_frequencies(m, n=100_000, seed=1)
    assert all(v >= 0 for v in freqs.values())
    assert sum(freqs.values()) == pytest.approx(1.0)


def test_trained_latent_frequencies(e1_trained):
    _, res = e1_trained
    freqs = response_type_frequencies(res.model, n=100_000, seed=3)
    # response types (Y_0, Y_1): (0, 1) follows X, (0, 0) never, (1, 1) always
    for pattern in ((0, 1), (0, 0), (1, 1)):
        assert freqs.get(pattern, 0.0) == pytest.approx(1 / 3, abs=0.05)


def test_model_json_round_trip(tmp_path):
    m = TwinModel.init(ModelConfig(3, 2, 2, width=5), 7)
    path = tmp_path / "m.json"
    m.save(path)
    back = load_model(path)
    assert back.config == m.config
    for k in m.params:
        np.testing.assert_array_equal(back.params[k], m.params[k])
    d = m.to_dict()
    assert set(d) == {"config", "z_block", "u_block", "heads"}


def test_loss_csv():
    ds = TwinDataset([0], [1], np.zeros((1, 0)), [1], [1], [[0.0, 1.0]], 2, 2)
    res = train(ds, TrainConfig(epochs=3))
    lines = res.loss_csv().splitlines()
    assert lines[0] == "epoch,loss,penalty" and len(lines) == 4


def test_train_config_validation():
    with pytest.raises(SpecError):
        TrainConfig(lr=0)
    with pytest.raises(SpecError):
        TrainConfig(draws=1)
    with pytest.raises(SpecError):
        TrainConfig(penalty="lattice")

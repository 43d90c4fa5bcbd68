"""Deep twin networks.

A covariate block ``r_z = f_z(z)`` and a noise block ``r_u = g(u)`` feed N
softmax heads, one per treatment.  Every row is trained with ``K`` noise draws
shared by all heads:

* each evaluated head matches its target distribution through the noise
  mixture (an unbiased estimate of ``||t - E_u p(z, u)||^2``),
* a sharpness term pushes individual draws toward one-hot outputs, so that
  ``argmax head_x(z, u)`` behaves as a deterministic mechanism,
* the ordering penalty ties the heads together at every ``(z, u)``: without it
  the coupling between heads is unconstrained.

Gradients are computed by hand and verified by :func:`grad_check`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from sklearn.neighbors import NearestNeighbors

from .errors import NoMatch, NonFiniteLoss, SpecError

__all__ = [
    "ModelConfig",
    "TrainConfig",
    "TwinDataset",
    "TwinModel",
    "TrainResult",
    "make_labels",
    "forward",
    "train",
    "penalty",
    "loss_and_grads",
    "grad_check",
    "reparam_noise",
    "draw_noise",
    "response_type_frequencies",
    "load_model",
]

PENALTIES = ("none", "pairwise-hinge")
NOISES = ("normal", "uniform")
LOSSES = ("mse", "cross-entropy")
ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class ModelConfig:
    n_treatments: int
    n_outcomes: int
    z_dim: int = 0
    u_dim: int = 1
    width: int = 32
    activation: str = "relu"

    def __post_init__(self):
        if self.n_treatments < 2 or self.n_outcomes < 1:
            raise SpecError("need at least two treatments and one outcome category")
        if self.z_dim < 0 or self.u_dim < 1 or self.width < 1:
            raise SpecError("dimensions must be positive")
        if self.activation not in ACTIVATIONS:
            raise SpecError(f"activation must be one of {ACTIVATIONS}")

    @property
    def rep_dim(self) -> int:
        return (self.width if self.z_dim else 0) + self.width


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    batch_size: int = 64
    epochs: int = 20
    lam: float = 1.0
    penalty: str = "pairwise-hinge"
    seed: int = 0
    noise: str = "normal"
    draws: int = 8
    sharpness: float = 0.1
    loss: str = "mse"
    treatment_order: tuple[int, ...] | None = None
    outcome_order: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise SpecError("lr, batch_size and epochs must be positive")
        if self.lam < 0 or self.sharpness < 0:
            raise SpecError("lam and sharpness must be nonnegative")
        if self.draws < 2:
            raise SpecError("draws must be at least 2")
        if self.penalty not in PENALTIES:
            raise SpecError(f"penalty must be one of {PENALTIES}")
        if self.noise not in NOISES:
            raise SpecError(f"noise must be one of {NOISES}")
        if self.loss not in LOSSES:
            raise SpecError(f"loss must be one of {LOSSES}")

    @property
    def penalty_weight(self) -> float:
        return self.lam if self.penalty != "none" else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("treatment_order", "outcome_order"):
            d[k] = None if d[k] is None else list(d[k])
        return d


@dataclass
class TwinDataset:
    """Rows ``(x, x_star, z, y, y_star)`` with ``y_star_dist`` the soft label
    ``P(Y | do(x_star), z)`` and ``y_star`` its mode."""

    x: np.ndarray
    x_star: np.ndarray
    z: np.ndarray  # (n, z_dim)
    y: np.ndarray
    y_star: np.ndarray
    y_star_dist: np.ndarray  # (n, M)
    n_treatments: int
    n_outcomes: int

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.int64)
        self.x_star = np.asarray(self.x_star, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.y_star = np.asarray(self.y_star, dtype=np.int64)
        self.z = np.asarray(self.z, dtype=float).reshape(len(self.x), -1)
        self.y_star_dist = np.asarray(self.y_star_dist, dtype=float)
        if np.any(self.x == self.x_star):
            raise SpecError("counterfactual treatment must differ from the factual one")
        for name, v, hi in (("x", self.x, self.n_treatments), ("x_star", self.x_star, self.n_treatments),
                            ("y", self.y, self.n_outcomes), ("y_star", self.y_star, self.n_outcomes)):
            if v.size and (v.min() < 0 or v.max() >= hi):
                raise SpecError(f"{name} out of range")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def z_dim(self) -> int:
        return self.z.shape[1]

    def subset(self, idx) -> "TwinDataset":
        return TwinDataset(self.x[idx], self.x_star[idx], self.z[idx], self.y[idx], self.y_star[idx],
                           self.y_star_dist[idx], self.n_treatments, self.n_outcomes)

    def model_config(self, **kw) -> ModelConfig:
        return ModelConfig(self.n_treatments, self.n_outcomes, self.z_dim, **kw)


def _one_hot(v: np.ndarray, m: int) -> np.ndarray:
    out = np.zeros((len(v), m))
    out[np.arange(len(v)), v] = 1.0
    return out


def make_labels(
    data: pd.DataFrame,
    source,
    *,
    treatment: str = "X",
    outcome: str = "Y",
    covariates: Sequence[str] = (),
    n_treatments: int | None = None,
    n_outcomes: int | None = None,
    k: int = 1,
) -> TwinDataset:
    """Attach counterfactual labels for every row and every ``x_star != x``.

    ``source`` is either a generator exposing ``do_dist(x, cov)`` (exact labels)
    or the string ``"matching"``: the label is then the outcome distribution of
    the ``k`` nearest ``x_star``-treated rows in covariate space.
    """
    x = data[treatment].to_numpy(dtype=np.int64)
    y = data[outcome].to_numpy(dtype=np.int64)
    covariates = list(covariates)
    z = data[covariates].to_numpy(dtype=float) if covariates else np.zeros((len(data), 0))
    nt = n_treatments or int(x.max()) + 1
    no = n_outcomes or int(y.max()) + 1

    if isinstance(source, str):
        if source != "matching":
            raise SpecError(f"unknown label source {source!r}")
        dists = _matching_labels(x, y, z, nt, no, k)
    else:
        cov = {c: data[c].to_numpy() for c in covariates}
        dists = [np.asarray(source.do_dist(np.full(len(data), t), cov), dtype=float) for t in range(nt)]

    rows = [(i, t) for t in range(nt) for i in np.flatnonzero(x != t)]
    idx = np.array([r[0] for r in rows], dtype=np.int64)
    xs = np.array([r[1] for r in rows], dtype=np.int64)
    order = np.lexsort((xs, idx))  # row-major: original row, then x_star
    idx, xs = idx[order], xs[order]
    soft = np.stack([dists[t][i] for i, t in zip(idx, xs)]) if len(idx) else np.zeros((0, no))
    return TwinDataset(x[idx], xs, z[idx], y[idx], soft.argmax(axis=1), soft, nt, no)


def _matching_labels(x, y, z, nt, no, k) -> list[np.ndarray]:
    out = []
    for t in range(nt):
        pool = np.flatnonzero(x == t)
        if pool.size == 0:
            raise NoMatch(t)
        if z.shape[1] == 0:
            dist = np.bincount(y[pool], minlength=no) / pool.size
            out.append(np.tile(dist, (len(x), 1)))
            continue
        nn = NearestNeighbors(n_neighbors=min(k, pool.size)).fit(z[pool])
        _, nbr = nn.kneighbors(z)
        out.append(_one_hot(y[pool][nbr].ravel(), no).reshape(len(x), -1, no).mean(axis=1))
    return out


# -- model ------------------------------------------------------------------


def _dense_init(rng, fan_in, fan_out):
    return rng.normal(0.0, math.sqrt(2.0 / max(fan_in, 1)), size=(fan_in, fan_out)), np.zeros(fan_out)


class TwinModel:
    """Parameters live in ``self.params``; names ``z0W z0b z1W z1b`` (covariate
    block), ``u0W u0b u1W u1b`` (noise block), ``hW (N, D, M)`` and ``hb (N, M)``."""

    def __init__(self, config: ModelConfig, params: Mapping[str, np.ndarray]):
        self.config = config
        self.params = {k: np.asarray(v, dtype=float) for k, v in params.items()}

    @classmethod
    def init(cls, config: ModelConfig, seed=0, identity_u: bool = False) -> "TwinModel":
        rng = np.random.default_rng(seed)
        w, p = config.width, {}
        if config.z_dim:
            p["z0W"], p["z0b"] = _dense_init(rng, config.z_dim, w)
            p["z1W"], p["z1b"] = _dense_init(rng, w, w)
        if identity_u:
            p.update(_identity_u_block(config))
        else:
            p["u0W"], p["u0b"] = _dense_init(rng, config.u_dim, w)
            p["u1W"], p["u1b"] = _dense_init(rng, w, w)
        scale = math.sqrt(1.0 / config.rep_dim)
        p["hW"] = rng.normal(0.0, scale, size=(config.n_treatments, config.rep_dim, config.n_outcomes))
        p["hb"] = np.zeros((config.n_treatments, config.n_outcomes))
        return cls(config, p)

    @classmethod
    def zeros(cls, config: ModelConfig) -> "TwinModel":
        m = cls.init(config, 0)
        return cls(config, {k: np.zeros_like(v) for k, v in m.params.items()})

    def perturbed(self, seed=0, scale: float = 0.1) -> "TwinModel":
        """Copy with Gaussian noise on every parameter, moving off the ties that
        zero biases create (the hinge has a kink where adjacent heads agree)."""
        rng = np.random.default_rng(seed)
        return TwinModel(self.config, {k: v + scale * rng.standard_normal(v.shape) for k, v in self.params.items()})

    def copy(self) -> "TwinModel":
        return TwinModel(self.config, {k: v.copy() for k, v in self.params.items()})

    # serialization --------------------------------------------------------
    def to_dict(self) -> dict:
        p = self.params

        def block(prefix):
            if prefix + "0W" not in p:
                return []
            return [{"W": p[f"{prefix}{i}W"].tolist(), "b": p[f"{prefix}{i}b"].tolist()} for i in (0, 1)]

        return {
            "config": asdict(self.config),
            "z_block": block("z"),
            "u_block": block("u"),
            "heads": [{"W": p["hW"][k].tolist(), "b": p["hb"][k].tolist()} for k in range(self.config.n_treatments)],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TwinModel":
        config = ModelConfig(**d["config"])
        p = {}
        for prefix, layers in (("z", d["z_block"]), ("u", d["u_block"])):
            for i, layer in enumerate(layers):
                p[f"{prefix}{i}W"] = np.array(layer["W"], dtype=float).reshape(-1, config.width)
                p[f"{prefix}{i}b"] = np.array(layer["b"], dtype=float)
        p["hW"] = np.array([h["W"] for h in d["heads"]], dtype=float)
        p["hb"] = np.array([h["b"] for h in d["heads"]], dtype=float)
        return cls(config, p)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")


def load_model(path) -> TwinModel:
    return TwinModel.from_dict(json.loads(Path(path).read_text()))


def _identity_u_block(config: ModelConfig) -> dict:
    d, w = config.u_dim, config.width
    if 2 * d > w:
        raise SpecError("identity initialisation needs width >= 2 * u_dim")
    w0 = np.zeros((d, w))
    w0[:, :d] = np.eye(d)
    w0[:, d : 2 * d] = -np.eye(d)
    w1 = np.zeros((w, w))
    w1[:d, :d] = np.eye(d)
    w1[d : 2 * d, :d] = -np.eye(d)
    return {"u0W": w0, "u0b": np.zeros(w), "u1W": w1, "u1b": np.zeros(w)}


def _act(name, a):
    return np.maximum(a, 0.0) if name == "relu" else np.tanh(a)


def _act_grad(name, a, h):
    return (a > 0).astype(float) if name == "relu" else 1.0 - h * h


def _block_forward(params, prefix, inp, act):
    a0 = inp @ params[prefix + "0W"] + params[prefix + "0b"]
    h0 = _act(act, a0)
    out = h0 @ params[prefix + "1W"] + params[prefix + "1b"]
    return out, (inp, a0, h0)


def _block_backward(params, prefix, cache, g_out, act, grads):
    inp, a0, h0 = cache
    grads[prefix + "1W"] = h0.T @ g_out
    grads[prefix + "1b"] = g_out.sum(axis=0)
    g_a0 = (g_out @ params[prefix + "1W"].T) * _act_grad(act, a0, h0)
    grads[prefix + "0W"] = inp.T @ g_a0
    grads[prefix + "0b"] = g_a0.sum(axis=0)


def _softmax(s):
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def reparam_noise(model: TwinModel, u: np.ndarray) -> np.ndarray:
    """The learned map ``g`` applied to base noise samples."""
    u = np.asarray(u, dtype=float).reshape(-1, model.config.u_dim)
    return _block_forward(model.params, "u", u, model.config.activation)[0]


def draw_noise(rng: np.random.Generator, shape, kind: str = "normal") -> np.ndarray:
    return rng.standard_normal(shape) if kind == "normal" else rng.random(shape)


def _features(model: TwinModel, z: np.ndarray, u: np.ndarray):
    """``z``: (B, z_dim); ``u``: (B, K, u_dim) -> features (B*K, D) and caches."""
    cfg = model.config
    b, k = u.shape[0], u.shape[1]
    r_u, cache_u = _block_forward(model.params, "u", u.reshape(b * k, cfg.u_dim), cfg.activation)
    if cfg.z_dim:
        r_z, cache_z = _block_forward(model.params, "z", np.asarray(z, dtype=float).reshape(b, cfg.z_dim), cfg.activation)
        feats = np.concatenate([np.repeat(r_z, k, axis=0), r_u], axis=1)
    else:
        cache_z = None
        feats = r_u
    return feats, cache_z, cache_u


def all_heads(model: TwinModel, z: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Probabilities of every head, shape ``(N, B, K, M)`` for ``u`` of shape (B, K, u_dim)."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 2:
        u = u[:, None, :]
    b, k = u.shape[:2]
    feats, _, _ = _features(model, z, u)
    logits = np.einsum("nd,kdm->knm", feats, model.params["hW"]) + model.params["hb"][:, None, :]
    return _softmax(logits).reshape(model.config.n_treatments, b, k, model.config.n_outcomes)


def forward(model: TwinModel, x, x_star, z, u) -> tuple[np.ndarray, np.ndarray]:
    """Output distributions of heads ``x`` and ``x_star`` for one noise draw per row."""
    x = np.asarray(x, dtype=np.int64).ravel()
    x_star = np.asarray(x_star, dtype=np.int64).ravel()
    cfg = model.config
    u = np.asarray(u, dtype=float).reshape(len(x), 1, cfg.u_dim)
    z = np.asarray(z, dtype=float).reshape(len(x), cfg.z_dim)
    feats, _, _ = _features(model, z, u)
    w, bias = model.params["hW"], model.params["hb"]
    p = _softmax(np.einsum("nd,ndm->nm", feats, w[x]) + bias[x])
    ps = _softmax(np.einsum("nd,ndm->nm", feats, w[x_star]) + bias[x_star])
    return p, ps


def predict(model: TwinModel, z: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Deterministic mechanism ``Y_x(z, u) = argmax head_x``; shape ``(N, B, K)``."""
    return all_heads(model, z, u).argmax(axis=-1)


# -- objective --------------------------------------------------------------


def _orders(model: TwinModel, cfg: TrainConfig):
    n, m = model.config.n_treatments, model.config.n_outcomes
    tord = np.array(cfg.treatment_order if cfg.treatment_order is not None else range(n))
    oord = np.array(cfg.outcome_order if cfg.outcome_order is not None else range(m))
    rank = np.empty(m)
    rank[oord] = np.arange(m)
    return tord, rank


def penalty(model: TwinModel, z, u, cfg: TrainConfig | None = None) -> float:
    """Sum over samples and adjacent treatment pairs of
    ``max(0, E_rank[head_{x_i}] - E_rank[head_{x_{i+1}}])``."""
    cfg = cfg or TrainConfig()
    u = np.asarray(u, dtype=float)
    if u.ndim == 2:
        u = u[:, None, :]
    probs = all_heads(model, z, u)
    tord, rank = _orders(model, cfg)
    r = probs @ rank  # (N, B, K)
    return float(np.maximum(r[tord[:-1]] - r[tord[1:]], 0.0).sum())


def _targets(batch: TwinDataset):
    """Target distribution and weight per (row, head)."""
    b, n, m = len(batch), batch.n_treatments, batch.n_outcomes
    t = np.zeros((b, n, m))
    w = np.zeros((b, n))
    rows = np.arange(b)
    t[rows, batch.x] = _one_hot(batch.y, m)
    t[rows, batch.x_star] = batch.y_star_dist
    w[rows, batch.x] = 1.0
    w[rows, batch.x_star] = 1.0
    return t, w


def loss_and_grads(model: TwinModel, batch: TwinDataset, u: np.ndarray, cfg: TrainConfig, need_grads: bool = True):
    """Objective on one batch with noise ``u`` of shape (B, K, u_dim).

    Returns ``(loss, penalty_sum, grads)``.
    """
    mc = model.config
    params = model.params
    b, k = u.shape[0], u.shape[1]
    n, m = mc.n_treatments, mc.n_outcomes
    feats, cache_z, cache_u = _features(model, batch.z, u)
    logits = np.einsum("nd,kdm->knm", feats, params["hW"]) + params["hb"][:, None, :]
    p = _softmax(logits).reshape(n, b, k, m)
    t, w = _targets(batch)  # (B, N, M), (B, N)
    t = t.transpose(1, 0, 2)[:, :, None, :]  # (N, B, 1, M)
    w = w.T  # (N, B)

    s = p.sum(axis=2, keepdims=True)  # (N, B, 1, M)
    pbar = s / k
    sq = (p * p).sum(axis=-1)  # (N, B, K)
    if cfg.loss == "mse":
        cross = ((s * s).sum(axis=-1)[..., 0] - sq.sum(axis=-1)) / (k * (k - 1))
        fit = (t * t).sum(axis=-1)[..., 0] - 2.0 * (t * pbar).sum(axis=-1)[..., 0] + cross
        g_p = -2.0 / k * t + 2.0 / (k * (k - 1)) * (s - p)
    else:
        eps = 1e-12
        fit = -(t * np.log(pbar + eps)).sum(axis=-1)[..., 0]
        g_p = np.broadcast_to(-t / (pbar + eps) / k, p.shape).copy()
    sharp = cfg.sharpness * (1.0 - sq).mean(axis=-1)  # (N, B)
    g_p = g_p - 2.0 * cfg.sharpness / k * p
    per_row = ((fit + sharp) * w).sum(axis=0)
    loss = per_row.mean()
    g_p = g_p * (w[:, :, None, None] / b)

    tord, rank = _orders(model, cfg)
    r = p @ rank  # (N, B, K)
    gap = r[tord[:-1]] - r[tord[1:]]
    pen_sum = float(np.maximum(gap, 0.0).sum())
    lam = cfg.penalty_weight
    if lam > 0:
        loss += lam * pen_sum / (b * k)
        active = (gap > 0).astype(float) * (lam / (b * k))  # (N-1, B, K)
        g_r = np.zeros_like(r)
        np.add.at(g_r, tord[:-1], active)
        np.add.at(g_r, tord[1:], -active)
        g_p = g_p + g_r[..., None] * rank

    if not need_grads:
        return float(loss), pen_sum, None

    g_logits = p * (g_p - (g_p * p).sum(axis=-1, keepdims=True))
    g_logits = g_logits.reshape(n, b * k, m)
    grads = {
        "hW": np.einsum("nd,knm->kdm", feats, g_logits),
        "hb": g_logits.sum(axis=1),
    }
    g_feats = np.einsum("knm,kdm->nd", g_logits, params["hW"])
    if mc.z_dim:
        g_rz = g_feats[:, : mc.width].reshape(b, k, mc.width).sum(axis=1)
        _block_backward(params, "z", cache_z, g_rz, mc.activation, grads)
        g_ru = g_feats[:, mc.width :]
    else:
        g_ru = g_feats
    _block_backward(params, "u", cache_u, g_ru, mc.activation, grads)
    return float(loss), pen_sum, grads


def grad_check(
    model: TwinModel,
    batch: TwinDataset,
    eps: float = 1e-5,
    cfg: TrainConfig | None = None,
    seed=0,
    floor: float = 1e-6,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error is ``|a - f| / max(|a|, |f|, floor)`` per parameter entry.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise SpecError("eps must lie in [1e-7, 1e-3]")
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(seed)
    u = draw_noise(rng, (len(batch), cfg.draws, model.config.u_dim), cfg.noise)
    _, _, grads = loss_and_grads(model, batch, u, cfg)
    probe = model.copy()
    worst = 0.0
    for name, value in probe.params.items():
        flat = value.reshape(-1)
        analytic = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_and_grads(probe, batch, u, cfg, need_grads=False)[0]
            flat[i] = orig - eps
            down = loss_and_grads(probe, batch, u, cfg, need_grads=False)[0]
            flat[i] = orig
            fd = (up - down) / (2 * eps)
            err = abs(analytic[i] - fd) / max(abs(analytic[i]), abs(fd), floor)
            worst = max(worst, err)
    return worst


# -- training ---------------------------------------------------------------


@dataclass
class TrainResult:
    model: TwinModel
    losses: list[float] = field(default_factory=list)
    penalties: list[float] = field(default_factory=list)  # mean per noise sample

    @property
    def nonincreasing(self) -> bool:
        return all(b <= a + 1e-12 for a, b in zip(self.losses, self.losses[1:]))

    def loss_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["epoch", "loss", "penalty"])
        for e, (l, p) in enumerate(zip(self.losses, self.penalties)):
            wr.writerow([e, repr(l), repr(p)])
        return buf.getvalue()


def train(data: TwinDataset, cfg: TrainConfig, model_config: ModelConfig | None = None,
          init: TwinModel | None = None) -> TrainResult:
    """Mini-batch SGD on the twin objective; deterministic given ``cfg.seed``."""
    if len(data) == 0:
        raise SpecError("training data is empty")
    rng = np.random.default_rng(cfg.seed)
    model_config = model_config or data.model_config()
    model = init.copy() if init is not None else TwinModel.init(model_config, rng.integers(2**63))
    if model.config.z_dim != data.z_dim:
        raise SpecError("model covariate dimension does not match the data")
    result = TrainResult(model)
    n = len(data)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        tot_loss = tot_pen = 0.0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            batch = data.subset(idx)
            u = draw_noise(rng, (len(idx), cfg.draws, model.config.u_dim), cfg.noise)
            loss, pen, grads = loss_and_grads(model, batch, u, cfg)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFiniteLoss(epoch, bi)
            for name, g in grads.items():
                model.params[name] -= cfg.lr * g
            tot_loss += loss * len(idx)
            tot_pen += pen
        result.losses.append(tot_loss / n)
        result.penalties.append(tot_pen / (n * cfg.draws))
    return result


# -- latent diagnostics -----------------------------------------------------


def response_type_frequencies(model: TwinModel, z=None, n: int = 100_000, seed=0, noise: str = "normal") -> dict:
    """Push base noise through the model and count joint potential-outcome
    patterns ``(Y_0(u), ..., Y_{N-1}(u))`` at covariates ``z``."""
    cfg = model.config
    rng = np.random.default_rng(seed)
    u = draw_noise(rng, (1, n, cfg.u_dim), noise)
    z = np.zeros((1, cfg.z_dim)) if z is None else np.asarray(z, dtype=float).reshape(1, cfg.z_dim)
    ys = predict(model, z, u)[:, 0, :]  # (N, n)
    patterns, counts = np.unique(ys.T, axis=0, return_counts=True)
    return {tuple(int(v) for v in pat): c / n for pat, c in zip(patterns, counts)}

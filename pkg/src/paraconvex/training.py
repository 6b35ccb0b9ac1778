"""Supervised regression of every network kind on labeled (x, u, y) triples.

Loss is mean squared error over shuffled mini-batches, optimized with
bias-corrected Adam. Weights start from Xavier-uniform draws with zero
biases. All randomness (init, split, shuffles) flows through one seeded Rng,
so a (seed, data, config) triple reproduces training bit for bit.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    ConfigError,
    DimensionMismatch,
    NumericOverflow,
    TrainingDiverged,
)
from .networks import (
    FeedforwardNet,
    LogSumExpNet,
    MaxAffineNet,
    MlpParams,
    Network,
    ParamLogSumExpNet,
    ParamMaxAffineNet,
    batch_scores,
    clone_network,
    forward_batch,
    mlp_forward_batch,
    softmax_over_T,
)
from .numerics import Rng


@dataclass
class Dataset:
    """Labeled triples, stored column-wise: X is (N, n), U is (N, m), y is (N,)."""

    n: int
    m: int
    X: np.ndarray
    U: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.U = np.asarray(self.U, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        N = self.y.shape[0]
        if self.X.shape != (N, self.n) or self.U.shape != (N, self.m):
            raise DimensionMismatch("X, U, y row counts or widths disagree")
        if not (np.isfinite(self.X).all() and np.isfinite(self.U).all()
                and np.isfinite(self.y).all()):
            raise ValueError("dataset entries must be finite")

    @property
    def size(self) -> int:
        return self.y.shape[0]

    @property
    def points(self) -> list:
        return [(self.X[i], self.U[i], float(self.y[i])) for i in range(self.size)]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.n, self.m, self.X[idx], self.U[idx], self.y[idx])


def save_dataset(ds: Dataset, path) -> None:
    header = (
        [f"x_{j + 1}" for j in range(ds.n)]
        + [f"u_{j + 1}" for j in range(ds.m)]
        + ["y"]
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(ds.size):
            # repr round-trips float64 exactly
            w.writerow(
                [repr(float(v)) for v in ds.X[i]]
                + [repr(float(v)) for v in ds.U[i]]
                + [repr(float(ds.y[i]))]
            )


def load_dataset(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        n = sum(1 for c in header if c.startswith("x_"))
        m = sum(1 for c in header if c.startswith("u_"))
        if n + m + 1 != len(header) or header[-1] != "y":
            raise ConfigError(f"unrecognized dataset header {header!r}")
        body = np.loadtxt(fh, delimiter=",", ndmin=2)
    return Dataset(n=n, m=m, X=body[:, :n], U=body[:, n : n + m], y=body[:, -1])


@dataclass
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 1e-3
    batch_size: int = 64
    split_ratio: float = 0.9
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not (0.0 < self.split_ratio < 1.0):
            raise ConfigError("split_ratio must lie strictly between 0 and 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ConfigError("adam betas must lie in [0, 1)")
        if not self.adam_eps > 0:
            raise ConfigError("adam_eps must be positive")


_INT_KEYS = {"epochs", "batch_size", "seed"}


def parse_train_config(text: str) -> TrainConfig:
    """key=value lines; '#' starts a comment; unknown keys rejected."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in TrainConfig.__dataclass_fields__:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = int(val) if key in _INT_KEYS else float(val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {val!r}") from exc
    return TrainConfig(**values)


def load_train_config(path) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_train_config(fh.read())


@dataclass
class TrainReport:
    train_losses: list
    test_losses: list
    final_test_mse: float
    wall_time_s: float

    def to_json(self) -> dict:
        return {
            "epochs": len(self.train_losses),
            "train_losses": list(self.train_losses),
            "test_losses": list(self.test_losses),
            "final_test_mse": self.final_test_mse,
            "wall_time_s": self.wall_time_s,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=1)
            fh.write("\n")


# --- initialization --------------------------------------------------------


def xavier_init(n_in: int, n_out: int, rng: Rng) -> np.ndarray:
    """(n_out, n_in) matrix, entries uniform in +-sqrt(6)/sqrt(n_in + n_out)."""
    if n_in < 1 or n_out < 1:
        raise ValueError("layer widths must be >= 1")
    bound = np.sqrt(6.0) / np.sqrt(n_in + n_out)
    return rng.uniform_in(-bound, bound, n_out * n_in).reshape(n_out, n_in)


def init_mlp(widths, rng: Rng) -> MlpParams:
    Ws = [xavier_init(widths[k], widths[k + 1], rng) for k in range(len(widths) - 1)]
    bs = [np.zeros(widths[k + 1]) for k in range(len(widths) - 1)]
    return MlpParams(weights=Ws, biases=bs)


def init_network(
    kind: str,
    n: int,
    m: int,
    seed: int,
    I: int = 30,
    T: float = 0.1,
    hidden: tuple = (64, 64),
) -> Network:
    """Fresh network of the given kind with Xavier weights and zero biases.

    Bank kinds (ma/lse) draw every plane coefficient, offsets included, with
    the per-scalar Xavier bound (n_in = n_out = 1), i.e. uniform in
    +-sqrt(3).
    """
    rng = Rng(seed)
    if kind == "fnn":
        return FeedforwardNet(
            n=n, m=m, mlp=init_mlp([n + m, *hidden, 1], rng), seed=seed
        )
    if kind in ("ma", "lse"):
        A = rng.uniform_in(-np.sqrt(3.0), np.sqrt(3.0), I * (n + m)).reshape(I, n + m)
        b = rng.uniform_in(-np.sqrt(3.0), np.sqrt(3.0), I)
        if kind == "ma":
            return MaxAffineNet(n=n, m=m, A=A, b=b, seed=seed)
        return LogSumExpNet(n=n, m=m, A=A, b=b, T=T, seed=seed)
    if kind in ("pma", "plse"):
        embed = init_mlp([n, *hidden, (m + 1) * I], rng)
        if kind == "pma":
            return ParamMaxAffineNet(n=n, m=m, I=I, embed=embed, seed=seed)
        return ParamLogSumExpNet(n=n, m=m, I=I, embed=embed, T=T, seed=seed)
    raise ConfigError(f"unknown network kind {kind!r}")


# --- loss and gradients ----------------------------------------------------


def mse_loss(net: Network, X: np.ndarray, U: np.ndarray, y: np.ndarray) -> float:
    pred = forward_batch(net, X, U)
    r = pred - np.asarray(y, dtype=np.float64)
    # an overflowing square is the divergence signal the trainer checks for
    with np.errstate(over="ignore"):
        return float(np.mean(r * r))


def parameters(net: Network) -> list:
    """Live references to the trainable arrays, in the frozen canonical order:
    mlp kinds interleave [W0, b0, W1, b1, ...]; bank kinds are [A, b]."""
    if net.kind == "fnn":
        mlp = net.mlp
    elif net.kind in ("pma", "plse"):
        mlp = net.embed
    elif net.kind in ("ma", "lse"):
        return [net.A, net.b]
    else:
        raise ConfigError(f"unknown network kind {net.kind!r}")
    out = []
    for W, b in zip(mlp.weights, mlp.biases):
        out.extend([W, b])
    return out


def _mlp_trace(params: MlpParams, Z: np.ndarray):
    """Forward pass keeping activations: returns (acts, pres) with acts[0]=Z."""
    acts, pres = [Z], []
    h = Z
    last = len(params.weights) - 1
    for k, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ W.T + b
        pres.append(z)
        h = np.maximum(params.leaky_slope * z, z) if k != last else z
        acts.append(h)
    return acts, pres


def _mlp_backprop(params: MlpParams, acts, pres, delta_out: np.ndarray) -> list:
    """Grads [dW0, db0, ...] given dLoss/d(output) rows in delta_out."""
    last = len(params.weights) - 1
    grads = [None] * (2 * len(params.weights))
    delta = delta_out
    for k in range(last, -1, -1):
        grads[2 * k] = delta.T @ acts[k]
        grads[2 * k + 1] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ params.weights[k]) * np.where(
                pres[k - 1] > 0, 1.0, params.leaky_slope
            )
    return grads


def _score_weights(net: Network, scores: np.ndarray) -> np.ndarray:
    """(B, I) row weights: softmax for lse/plse, argmax one-hot for ma/pma."""
    if net.kind in ("lse", "plse"):
        return softmax_over_T(scores, net.T, axis=1)
    onehot = np.zeros_like(scores)
    onehot[np.arange(scores.shape[0]), np.argmax(scores, axis=1)] = 1.0
    return onehot


def weight_gradients(
    net: Network, X: np.ndarray, U: np.ndarray, y: np.ndarray
) -> list:
    """Gradient of mse_loss w.r.t. parameters(net), same order and shapes.

    The max in ma/pma routes gradient to the active plane only (lowest index
    on ties), the standard subgradient choice for max-affine training.
    """
    X = np.asarray(X, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    B = y.shape[0]
    if B == 0:
        raise ValueError("batch must be nonempty")
    # a run heading for divergence may pass non-finite values through here;
    # the train loop's loss check owns that failure, so keep numpy quiet
    with np.errstate(over="ignore", invalid="ignore"):
        return _weight_gradients(net, X, U, y, B)


def _weight_gradients(net, X, U, y, B):
    if net.kind == "fnn":
        Z = np.hstack([X, U])
        acts, pres = _mlp_trace(net.mlp, Z)
        resid = acts[-1][:, 0] - y
        dpred = (2.0 / B) * resid
        return _mlp_backprop(net.mlp, acts, pres, dpred[:, None])
    if net.kind in ("ma", "lse"):
        Z = np.hstack([X, U])
        scores = Z @ net.A.T + net.b
        w = _score_weights(net, scores)
        if net.kind == "lse":
            pred = net.T * np.log(
                np.sum(np.exp((scores - scores.max(1, keepdims=True)) / net.T), axis=1)
            ) + scores.max(1)
        else:
            pred = scores.max(1)
        dpred = (2.0 / B) * (pred - y)
        wd = w * dpred[:, None]
        return [wd.T @ Z, wd.sum(axis=0)]
    if net.kind in ("pma", "plse"):
        acts, pres = _mlp_trace(net.embed, X)
        out = acts[-1]
        I, m = net.I, net.m
        A_x = out[:, : I * m].reshape(B, I, m)
        b_x = out[:, I * m :]
        scores = np.einsum("bim,bm->bi", A_x, U) + b_x
        w = _score_weights(net, scores)
        if net.kind == "plse":
            top = scores.max(1)
            pred = net.T * np.log(
                np.sum(np.exp((scores - top[:, None]) / net.T), axis=1)
            ) + top
        else:
            pred = scores.max(1)
        dpred = (2.0 / B) * (pred - y)
        wd = w * dpred[:, None]
        # d pred / d A_x[i, j] = w_i * u_j and d pred / d b_x[i] = w_i
        dout = np.concatenate(
            [(wd[:, :, None] * U[:, None, :]).reshape(B, I * m), wd], axis=1
        )
        return _mlp_backprop(net.embed, acts, pres, dout)
    raise ConfigError(f"unknown network kind {net.kind!r}")


# --- Adam ------------------------------------------------------------------


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @staticmethod
    def for_params(params: list) -> "AdamState":
        return AdamState(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(
    state: AdamState,
    params: list,
    grads: list,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> list:
    """One bias-corrected Adam update; returns new parameter arrays and
    advances state in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionMismatch("params, grads, state lengths disagree")
    state.t += 1
    t = state.t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise DimensionMismatch(f"param {i}: gradient shape {g.shape} != {p.shape}")
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * (g * g)
        m_hat = state.m[i] / (1.0 - beta1**t)
        v_hat = state.v[i] / (1.0 - beta2**t)
        out.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
    return out


# --- split and train loop --------------------------------------------------


def split_dataset(ds: Dataset, ratio: float, rng: Rng) -> tuple[Dataset, Dataset]:
    """Shuffle then prefix split: sizes floor(ratio*N) and the remainder."""
    if ds.size == 0:
        raise ValueError("cannot split an empty dataset")
    if not (0.0 < ratio < 1.0):
        raise ConfigError("split ratio must lie strictly between 0 and 1")
    perm = rng.shuffle_indices(ds.size)
    cut = int(ratio * ds.size)
    return ds.subset(perm[:cut]), ds.subset(perm[cut:])


def train(net: Network, ds: Dataset, cfg: TrainConfig) -> tuple[Network, TrainReport]:
    """Train a copy of `net` on a 90:10-style internal split of `ds`.

    The split consumes the first draws of Rng(cfg.seed), so callers can
    recover the exact same partition via split_dataset(ds, cfg.split_ratio,
    Rng(cfg.seed)).
    """
    if ds.n != net.n or ds.m != net.m:
        raise DimensionMismatch("dataset dims do not match the network")
    t0 = time.perf_counter()
    rng = Rng(cfg.seed)
    train_ds, test_ds = split_dataset(ds, cfg.split_ratio, rng)
    net = clone_network(net)
    params = parameters(net)
    state = AdamState.for_params(params)
    train_losses, test_losses = [], []
    for _ in range(cfg.epochs):
        perm = rng.shuffle_indices(train_ds.size)
        for start in range(0, train_ds.size, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            grads = weight_gradients(net, train_ds.X[idx], train_ds.U[idx],
                                     train_ds.y[idx])
            new = adam_step(state, params, grads, cfg.learning_rate,
                            cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
            for p, q in zip(params, new):
                p[:] = q
        try:
            tr = mse_loss(net, train_ds.X, train_ds.U, train_ds.y)
            te = mse_loss(net, test_ds.X, test_ds.U, test_ds.y)
        except NumericOverflow as exc:
            raise TrainingDiverged(str(exc)) from exc
        if not (np.isfinite(tr) and np.isfinite(te)):
            raise TrainingDiverged(f"loss became non-finite (train={tr}, test={te})")
        train_losses.append(tr)
        test_losses.append(te)
    report = TrainReport(
        train_losses=train_losses,
        test_losses=test_losses,
        final_test_mse=test_losses[-1],
        wall_time_s=time.perf_counter() - t0,
    )
    return net, report

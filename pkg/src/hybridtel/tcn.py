"""Temporal convolutional network for one-step-ahead voltage forecasting.

Pure numpy: causal dilated 1-D convolutions in residual blocks, a linear
head on the last timestep, MSE loss, hand-written backpropagation and Adam.
Arrays are channels-last, ``(batch, time, channels)``.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConstantSeries, DivergedLoss, NotEnoughData, SeriesTooShort, ShapeMismatch
from .metrics import mae, rmse

FORMAT_VERSION = 1


class DropoutActive(UserWarning):
    """Gradient check skipped because dropout masks are random."""


# -- scaling and windows ----------------------------------------------------------

@dataclass(frozen=True)
class MinMaxScaler:
    x_min: float
    x_max: float

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.x_min) / (self.x_max - self.x_min)

    def invert(self, y):
        return np.asarray(y, dtype=float) * (self.x_max - self.x_min) + self.x_min

    @property
    def span(self) -> float:
        return self.x_max - self.x_min


def scaler_fit(series: Sequence[float]) -> MinMaxScaler:
    x = np.asarray(series, dtype=float)
    if x.size < 2 or x.min() == x.max():
        raise ConstantSeries("min-max scaling needs at least two distinct values")
    return MinMaxScaler(float(x.min()), float(x.max()))


def scaler_apply(scaler: MinMaxScaler, x):
    return scaler.apply(x)


def scaler_invert(scaler: MinMaxScaler, y):
    return scaler.invert(y)


def make_windows(series: Sequence[float], seq_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Overlapping inputs ``series[k:k+seq_len]`` with targets ``series[k+seq_len]``.

    Returns ``(inputs, targets)`` with shapes ``(n - seq_len, seq_len)`` and
    ``(n - seq_len,)``.
    """
    x = np.asarray(series, dtype=float)
    if seq_len < 1 or x.size <= seq_len:
        raise SeriesTooShort(f"need more than {seq_len} samples, got {x.size}")
    inputs = np.lib.stride_tricks.sliding_window_view(x, seq_len)[:-1].copy()
    return inputs, x[seq_len:].copy()


# -- model ------------------------------------------------------------------------

@dataclass(frozen=True)
class TcnConfig:
    seq_len: int = 40
    filters: int = 64
    kernel: int = 2
    layers: int = 2
    dropout: float = 0.0
    batch: int = 16
    epochs: int = 200
    patience: int = 10
    learning_rate: float = 1e-3
    # each residual block holds this many dilated convolutions
    convs_per_block: int = 1

    @property
    def dilations(self) -> tuple[int, ...]:
        return tuple(2**layer for layer in range(self.layers))

    @property
    def receptive_field(self) -> int:
        return 1 + self.convs_per_block * sum((self.kernel - 1) * d for d in self.dilations)


REFERENCE_CONFIG = TcnConfig(seq_len=40, filters=64, kernel=2, layers=2, batch=16)


@dataclass
class TcnModel:
    config: TcnConfig
    params: dict[str, np.ndarray]
    scaler: Optional[MinMaxScaler] = None

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def to_json(self) -> str:
        doc = {
            "format": "hybridtel.tcn",
            "version": FORMAT_VERSION,
            "config": asdict(self.config),
            "scaler": asdict(self.scaler) if self.scaler else None,
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in sorted(self.params.items())},
        }
        return json.dumps(doc, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TcnModel":
        doc = json.loads(text)
        if doc.get("format") != "hybridtel.tcn" or doc.get("version") != FORMAT_VERSION:
            raise ValueError("not a TCN model artifact of a supported version")
        params = {k: np.array(v["data"], dtype=float).reshape(v["shape"]) for k, v in doc["params"].items()}
        scaler = MinMaxScaler(**doc["scaler"]) if doc["scaler"] else None
        return cls(TcnConfig(**doc["config"]), params, scaler)


def _conv_names(layer: int, conv: int) -> tuple[str, str]:
    return f"b{layer}.conv{conv}.w", f"b{layer}.conv{conv}.b"


def init_model(config: TcnConfig, seed: int = 0, zero: bool = False) -> TcnModel:
    """Weights uniform in +-1/sqrt(fan_in); biases likewise."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}

    def uniform(shape, fan_in):
        if zero:
            return np.zeros(shape)
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, shape)

    c_in = 1
    for layer in range(config.layers):
        c = c_in
        for conv in range(config.convs_per_block):
            wn, bn = _conv_names(layer, conv)
            params[wn] = uniform((config.kernel, c, config.filters), config.kernel * c)
            params[bn] = uniform((config.filters,), config.kernel * c)
            c = config.filters
        if c_in != config.filters:
            params[f"b{layer}.down.w"] = uniform((c_in, config.filters), c_in)
            params[f"b{layer}.down.b"] = uniform((config.filters,), c_in)
        c_in = config.filters
    params["head.w"] = uniform((config.filters,), config.filters)
    params["head.b"] = uniform((1,), config.filters)
    return TcnModel(config, params)


def _conv(x: np.ndarray, w: np.ndarray, b: np.ndarray, dilation: int) -> tuple[np.ndarray, np.ndarray]:
    k = w.shape[0]
    pad = (k - 1) * dilation
    length = x.shape[1]
    xp = np.pad(x, ((0, 0), (pad, 0), (0, 0))) if pad else x
    y = np.broadcast_to(b, x.shape[:2] + (w.shape[2],)).copy()
    for j in range(k):
        start = j * dilation
        y += xp[:, start : start + length, :] @ w[j]
    return y, xp


def _conv_backward(dy: np.ndarray, xp: np.ndarray, w: np.ndarray, dilation: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    k = w.shape[0]
    pad = (k - 1) * dilation
    length = dy.shape[1]
    dxp = np.zeros_like(xp)
    dw = np.empty_like(w)
    for j in range(k):
        start = j * dilation
        seg = xp[:, start : start + length, :]
        dw[j] = np.tensordot(seg, dy, axes=([0, 1], [0, 1]))
        dxp[:, start : start + length, :] += dy @ w[j].T
    db = dy.sum(axis=(0, 1))
    return dxp[:, pad:, :], dw, db


def _forward(model: TcnModel, inputs: np.ndarray, rng: Optional[np.random.Generator] = None):
    """Forward pass; dropout is active only when ``rng`` is given."""
    cfg = model.config
    p = model.params
    if inputs.ndim != 2 or inputs.shape[1] != cfg.seq_len:
        raise ShapeMismatch(f"expected windows of length {cfg.seq_len}, got shape {inputs.shape}")
    h = inputs[:, :, None]
    caches = []
    keep = 1.0 - cfg.dropout
    for layer, dilation in enumerate(cfg.dilations):
        block_in = h
        convs = []
        z = h
        for conv in range(cfg.convs_per_block):
            wn, bn = _conv_names(layer, conv)
            pre, xp = _conv(z, p[wn], p[bn], dilation)
            act = np.maximum(pre, 0.0)
            mask = None
            if rng is not None and cfg.dropout > 0:
                mask = (rng.random(act.shape) < keep) / keep
                act = act * mask
            convs.append((xp, pre, mask))
            z = act
        if f"b{layer}.down.w" in p:
            res = block_in @ p[f"b{layer}.down.w"] + p[f"b{layer}.down.b"]
        else:
            res = block_in
        out_pre = z + res
        h = np.maximum(out_pre, 0.0)
        caches.append((block_in, convs, out_pre))
    feat = h[:, -1, :]
    y = feat @ p["head.w"] + p["head.b"][0]
    return y, (caches, h)


def last_features(model: TcnModel, inputs: np.ndarray) -> np.ndarray:
    """Features the head reads at the last timestep, shape ``(batch, filters)``."""
    _, (_, h) = _forward(model, np.atleast_2d(np.asarray(inputs, dtype=float)))
    return h[:, -1, :]


def layer_outputs(model: TcnModel, inputs: np.ndarray) -> list[np.ndarray]:
    """Block outputs, each ``(batch, seq_len, filters)``."""
    _, (caches, h) = _forward(model, np.atleast_2d(np.asarray(inputs, dtype=float)))
    outs = [np.maximum(c[2], 0.0) for c in caches]
    return outs


def tcn_forward(model: TcnModel, window: Sequence[float]) -> float:
    """Prediction (scaled units) for a single window."""
    w = np.asarray(window, dtype=float)
    if w.ndim != 1:
        raise ShapeMismatch("a single window must be 1-D")
    y, _ = _forward(model, w[None, :])
    return float(y[0])


def predict_batch(model: TcnModel, inputs: np.ndarray, chunk: int = 1024) -> np.ndarray:
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    return np.concatenate([_forward(model, inputs[i : i + chunk])[0] for i in range(0, len(inputs), chunk)])


def loss_and_grads(
    model: TcnModel, inputs: np.ndarray, targets: np.ndarray, rng: Optional[np.random.Generator] = None
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared error over the batch and its parameter gradients."""
    cfg = model.config
    p = model.params
    y, (caches, h) = _forward(model, inputs, rng)
    err = y - targets
    n = len(targets)
    loss = float(np.mean(err * err))
    grads: dict[str, np.ndarray] = {}
    dy = 2.0 * err / n
    grads["head.w"] = h[:, -1, :].T @ dy
    grads["head.b"] = np.array([dy.sum()])
    dh = np.zeros_like(h)
    dh[:, -1, :] = np.outer(dy, p["head.w"])
    for layer in reversed(range(cfg.layers)):
        dilation = cfg.dilations[layer]
        block_in, convs, out_pre = caches[layer]
        d_out = dh * (out_pre > 0)
        if f"b{layer}.down.w" in p:
            grads[f"b{layer}.down.w"] = np.tensordot(block_in, d_out, axes=([0, 1], [0, 1]))
            grads[f"b{layer}.down.b"] = d_out.sum(axis=(0, 1))
            d_in = d_out @ p[f"b{layer}.down.w"].T
        else:
            d_in = d_out.copy()
        dz = d_out
        for conv in reversed(range(cfg.convs_per_block)):
            wn, bn = _conv_names(layer, conv)
            xp, pre, mask = convs[conv]
            if mask is not None:
                dz = dz * mask
            dpre = dz * (pre > 0)
            dz, grads[wn], grads[bn] = _conv_backward(dpre, xp, p[wn], dilation)
        dh = d_in + dz
    return loss, grads


# -- training -----------------------------------------------------------------------

@dataclass
class TrainResult:
    loss_curve: list[float]
    val_mae_curve: list[float]
    best_epoch: int
    stopped_early: bool


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def chronological_split(inputs: np.ndarray, targets: np.ndarray, train_fraction: float = 0.8):
    cut = int(round(len(targets) * train_fraction))
    return (inputs[:cut], targets[:cut]), (inputs[cut:], targets[cut:])


def tcn_train(
    windows: tuple[np.ndarray, np.ndarray],
    config: TcnConfig = REFERENCE_CONFIG,
    seed: int = 0,
    val_windows: Optional[tuple[np.ndarray, np.ndarray]] = None,
    scaler: Optional[MinMaxScaler] = None,
) -> tuple[TcnModel, TrainResult]:
    """Fit on scaled windows with Adam and early stopping on validation MAE.

    Without ``val_windows`` the last 20% of ``windows`` (chronologically)
    is held out. The returned model carries the best-validation weights.
    """
    inputs, targets = (np.asarray(a, dtype=float) for a in windows)
    if val_windows is None:
        (inputs, targets), val_windows = chronological_split(inputs, targets)
    v_in, v_tg = (np.asarray(a, dtype=float) for a in val_windows)
    if len(targets) < config.batch or len(v_tg) == 0:
        raise NotEnoughData(f"need at least one batch of {config.batch} training windows and a validation set")

    model = init_model(config, seed)
    model.scaler = scaler
    rng = np.random.default_rng(seed + 1)
    opt = Adam(model.params, lr=config.learning_rate)
    best = math.inf
    best_params = {k: v.copy() for k, v in model.params.items()}
    best_epoch = 0
    losses: list[float] = []
    val_curve: list[float] = []
    stale = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(targets))
        total = 0.0
        for start in range(0, len(order), config.batch):
            idx = order[start : start + config.batch]
            loss, grads = loss_and_grads(model, inputs[idx], targets[idx], rng)
            if not math.isfinite(loss):
                raise DivergedLoss(f"non-finite loss at epoch {epoch}")
            opt.step(model.params, grads)
            total += loss * len(idx)
        losses.append(total / len(targets))
        val = mae(v_tg, predict_batch(model, v_in))
        val_curve.append(val)
        if val < best:
            best, best_epoch, stale = val, epoch, 0
            best_params = {k: v.copy() for k, v in model.params.items()}
        else:
            stale += 1
            if stale >= config.patience:
                break
    model.params = best_params
    return model, TrainResult(losses, val_curve, best_epoch, len(losses) < config.epochs)


def fit_forecaster(
    series: Sequence[float], config: TcnConfig = REFERENCE_CONFIG, seed: int = 0, scaler: Optional[MinMaxScaler] = None
) -> tuple[TcnModel, TrainResult]:
    """Scale, window and train; validation windows are the last 20%.

    Unless a ``scaler`` is supplied (e.g. one shared by runs that will be
    compared), it is fit on the first 80% of ``series`` only.
    """
    x = np.asarray(series, dtype=float)
    cut = int(round(len(x) * 0.8))
    scaler = scaler or scaler_fit(x[:cut])
    inputs, targets = make_windows(scaler.apply(x), config.seq_len)
    train_n = max(cut - config.seq_len, 0)
    if train_n < config.batch or len(targets) - train_n < 1:
        raise NotEnoughData("series too short for the requested sequence length")
    return tcn_train(
        (inputs[:train_n], targets[:train_n]), config, seed, (inputs[train_n:], targets[train_n:]), scaler
    )


@dataclass(frozen=True)
class ForecastScore:
    mae_scaled: float
    rmse_scaled: float
    mae_v: float
    rmse_v: float
    predictions_v: np.ndarray = field(repr=False)
    truth_v: np.ndarray = field(repr=False)


def evaluate_forecast(model: TcnModel, series: Sequence[float]) -> ForecastScore:
    """One-step-ahead errors over ``series`` in scaled and volt units.

    The first ``seq_len`` samples only serve as context.
    """
    if model.scaler is None:
        raise ValueError("model has no scaler attached")
    x = np.asarray(series, dtype=float)
    inputs, targets = make_windows(model.scaler.apply(x), model.config.seq_len)
    pred = predict_batch(model, inputs)
    pred_v = model.scaler.invert(pred)
    truth_v = x[model.config.seq_len :]
    return ForecastScore(mae(targets, pred), rmse(targets, pred), mae(truth_v, pred_v), rmse(truth_v, pred_v), pred_v, truth_v)


def forecast_recursive(model: TcnModel, history: Sequence[float], steps: int) -> np.ndarray:
    """Multi-step forecast in volts by feeding predictions back as inputs."""
    if model.scaler is None:
        raise ValueError("model has no scaler attached")
    window = list(model.scaler.apply(np.asarray(history, dtype=float))[-model.config.seq_len :])
    if len(window) < model.config.seq_len:
        raise SeriesTooShort("history shorter than seq_len")
    out = []
    for _ in range(steps):
        y = tcn_forward(model, window)
        out.append(y)
        window = window[1:] + [y]
    return model.scaler.invert(np.array(out))


# -- verification -------------------------------------------------------------------

def gradient_check(model: TcnModel, sample: tuple[np.ndarray, np.ndarray], epsilon: float = 1e-5, floor: float = 1e-6) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``; the floor keeps
    near-zero gradients from amplifying round-off. Returns NaN and warns
    with :class:`DropoutActive` when the model uses dropout.
    """
    if model.config.dropout > 0:
        warnings.warn("dropout active; gradient check skipped", DropoutActive, stacklevel=2)
        return math.nan
    inputs, targets = (np.atleast_1d(np.asarray(a, dtype=float)) for a in sample)
    inputs = np.atleast_2d(inputs)
    _, grads = loss_and_grads(model, inputs, targets)
    worst = 0.0
    for name, param in model.params.items():
        flat = param.reshape(-1)
        g = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up, _ = loss_and_grads(model, inputs, targets)
            flat[i] = orig - epsilon
            down, _ = loss_and_grads(model, inputs, targets)
            flat[i] = orig
            num = (up - down) / (2.0 * epsilon)
            rel = abs(g[i] - num) / max(abs(g[i]), abs(num), floor)
            worst = max(worst, rel)
    return worst


# -- grid search ------------------------------------------------------------------------

DEFAULT_GRID = {
    "seq_len": [20, 40],
    "filters": [32, 64],
    "kernel": [2, 3],
    "layers": [2, 3],
    "dropout": [0.0, 0.1],
    "batch": [16, 32],
}


def expand_grid(grid: dict[str, Iterable] | Sequence[TcnConfig], base: TcnConfig = TcnConfig()) -> list[TcnConfig]:
    if isinstance(grid, dict):
        keys = list(grid)
        return [replace(base, **dict(zip(keys, values))) for values in itertools.product(*(grid[k] for k in keys))]
    return list(grid)


@dataclass(frozen=True)
class GridRow:
    config: TcnConfig
    val_mae: float
    epochs_run: int


def tcn_grid_search(
    series: Sequence[float], grid: dict[str, Iterable] | Sequence[TcnConfig], seed: int = 0, base: TcnConfig = TcnConfig()
) -> tuple[TcnConfig, list[GridRow]]:
    """Train every configuration on the same chronological 80/20 split.

    Best is the lowest validation MAE; ties keep grid order.
    """
    configs = expand_grid(grid, base)
    if not configs:
        raise ValueError("empty grid")
    table = []
    for cfg in configs:
        model, result = fit_forecaster(series, cfg, seed)
        table.append(GridRow(cfg, min(result.val_mae_curve), len(result.loss_curve)))
    best = min(range(len(table)), key=lambda i: (table[i].val_mae, i))
    return table[best].config, table

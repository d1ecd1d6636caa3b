"""A small 1-D convnet over raw tri-axial windows, written out in numpy.

Layout: ``[conv -> ReLU -> max-pool] * len(blocks) -> dense -> ReLU ->
dense -> softmax``. Convolutions are 'valid', pooling is non-overlapping
and truncates any remainder. Everything runs in float64 on one thread so
training is bit-reproducible for a given seed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NetConfig:
    input_length: int
    classes: int
    blocks: tuple = ((16, 5, 2), (32, 5, 2))
    dense_hidden: int = 64
    learning_rate: float = 0.01
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    channels_in: int = 3

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(tuple(int(v) for v in b) for b in self.blocks))
        for name in ("input_length", "classes", "dense_hidden", "epochs", "batch_size", "channels_in"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        self.layer_lengths()

    def layer_lengths(self) -> list[int]:
        """Sequence length entering each block, plus the final pooled length."""
        lengths = [self.input_length]
        for filters, kernel, pool in self.blocks:
            if min(filters, kernel, pool) < 1:
                raise ValueError(f"invalid conv block {(filters, kernel, pool)}")
            conv_len = lengths[-1] - kernel + 1
            if conv_len < pool:
                raise ValueError(f"input too short for block {(filters, kernel, pool)}: length {lengths[-1]}")
            lengths.append(conv_len // pool)
        return lengths

    @property
    def flat_size(self) -> int:
        channels = self.blocks[-1][0] if self.blocks else self.channels_in
        return channels * self.layer_lengths()[-1]

    def param_shapes(self) -> dict[str, tuple]:
        shapes = {}
        c_in = self.channels_in
        for i, (filters, kernel, _pool) in enumerate(self.blocks):
            shapes[f"conv{i}.W"] = (filters, c_in, kernel)
            shapes[f"conv{i}.b"] = (filters,)
            c_in = filters
        shapes["hidden.W"] = (self.flat_size, self.dense_hidden)
        shapes["hidden.b"] = (self.dense_hidden,)
        shapes["out.W"] = (self.dense_hidden, self.classes)
        shapes["out.b"] = (self.classes,)
        return shapes


def reference_config(input_length: int, classes: int, **overrides) -> NetConfig:
    """conv(16,5)/pool2 -> conv(32,5)/pool2 -> dense 64 -> dense C; lr 0.01, batch 32, 50 epochs."""
    return NetConfig(input_length=input_length, classes=classes, **overrides)


def tiny_config(**overrides) -> NetConfig:
    """Small net used for gradient checks (79 parameters)."""
    base = dict(input_length=12, classes=3, blocks=((2, 3, 2), (3, 3, 2)), dense_hidden=5)
    base.update(overrides)
    return NetConfig(**base)


@dataclass
class NetParams:
    config: NetConfig
    weights: dict[str, np.ndarray]
    label_set: tuple = ()
    channel_mean: np.ndarray = None
    channel_std: np.ndarray = None
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.channel_mean is None:
            self.channel_mean = np.zeros(self.config.channels_in)
        if self.channel_std is None:
            self.channel_std = np.ones(self.config.channels_in)
        if not self.label_set:
            self.label_set = tuple(range(self.config.classes))
        expected = self.config.param_shapes()
        if set(expected) != set(self.weights):
            raise ValueError("parameter names do not match the configuration")
        for name, shape in expected.items():
            if self.weights[name].shape != shape:
                raise ValueError(f"{name}: shape {self.weights[name].shape}, expected {shape}")

    def copy(self) -> "NetParams":
        return replace(self, weights={k: v.copy() for k, v in self.weights.items()},
                       channel_mean=self.channel_mean.copy(), channel_std=self.channel_std.copy(),
                       history=list(self.history))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.weights[k].ravel() for k in self.config.param_shapes()])

    def with_flat(self, theta: np.ndarray) -> "NetParams":
        out = self.copy()
        pos = 0
        for name, shape in self.config.param_shapes().items():
            size = int(np.prod(shape))
            out.weights[name] = np.array(theta[pos:pos + size]).reshape(shape)
            pos += size
        return out

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.config.param_shapes().values())

    def save(self, path) -> None:
        """Checkpoint as ``.npz``: tensors plus a JSON manifest of shapes and metadata."""
        manifest = {
            "config": asdict(self.config),
            "shapes": {k: list(v.shape) for k, v in self.weights.items()},
            "label_set": list(self.label_set),
        }
        np.savez(path, manifest=np.array(json.dumps(manifest)), channel_mean=self.channel_mean,
                 channel_std=self.channel_std, **{f"w:{k}": v for k, v in self.weights.items()})

    @classmethod
    def load(cls, path) -> "NetParams":
        with np.load(path) as data:
            manifest = json.loads(str(data["manifest"]))
            weights = {k[2:]: data[k].copy() for k in data.files if k.startswith("w:")}
            cfg = NetConfig(**manifest["config"])
            return cls(cfg, weights, tuple(manifest["label_set"]),
                       data["channel_mean"].copy(), data["channel_std"].copy())


def init(config: NetConfig, seed: int | None = None) -> NetParams:
    """He-style uniform init, bound sqrt(6 / fan_in); biases zero."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    weights = {}
    for name, shape in config.param_shapes().items():
        if name.endswith(".b"):
            weights[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:])) if name.startswith("conv") else shape[0]
            bound = np.sqrt(6.0 / fan_in)
            weights[name] = rng.uniform(-bound, bound, size=shape)
    return NetParams(config, weights)


# --------------------------------------------------------------------------
# forward / backward


def _as_input(params: NetParams, X) -> np.ndarray:
    """``(n, length, channels)`` raw windows -> standardized ``(n, channels, length)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    cfg = params.config
    if X.shape[1:] != (cfg.input_length, cfg.channels_in):
        raise ValueError(f"window shape {X.shape[1:]} does not match network input "
                         f"{(cfg.input_length, cfg.channels_in)}")
    return ((X - params.channel_mean) / params.channel_std).transpose(0, 2, 1)


def _forward(params: NetParams, x: np.ndarray):
    w = params.weights
    caches = []
    h = x
    for i, (filters, kernel, pool) in enumerate(params.config.blocks):
        cols = sliding_window_view(h, kernel, axis=2)  # (n, c, lo, k)
        z = np.tensordot(cols, w[f"conv{i}.W"], axes=([1, 3], [1, 2])).transpose(0, 2, 1)
        z = z + w[f"conv{i}.b"][None, :, None]
        a = np.maximum(z, 0.0)
        n, f, lo = a.shape
        lp = lo // pool
        blocks = a[:, :, :lp * pool].reshape(n, f, lp, pool)
        idx = np.argmax(blocks, axis=3)
        pooled = np.take_along_axis(blocks, idx[..., None], axis=3)[..., 0]
        caches.append((h.shape, cols, z, idx, lo))
        h = pooled
    flat = h.reshape(h.shape[0], -1)
    z1 = flat @ w["hidden.W"] + w["hidden.b"]
    a1 = np.maximum(z1, 0.0)
    logits = a1 @ w["out.W"] + w["out.b"]
    return logits, (caches, h.shape, flat, z1, a1)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log-probability of the true class."""
    p = probs[np.arange(len(y)), y]
    return float(-np.mean(np.log(np.maximum(p, np.finfo(float).tiny))))


def loss_and_grads(params: NetParams, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy on a standardized batch and its gradient per parameter."""
    w = params.weights
    logits, (caches, pooled_shape, flat, z1, a1) = _forward(params, x)
    probs = softmax(logits)
    n = x.shape[0]
    loss = cross_entropy(probs, y)

    grads = {}
    d_logits = probs.copy()
    d_logits[np.arange(n), y] -= 1.0
    d_logits /= n
    grads["out.W"] = a1.T @ d_logits
    grads["out.b"] = d_logits.sum(axis=0)
    d_z1 = (d_logits @ w["out.W"].T) * (z1 > 0)
    grads["hidden.W"] = flat.T @ d_z1
    grads["hidden.b"] = d_z1.sum(axis=0)
    d_h = (d_z1 @ w["hidden.W"].T).reshape(pooled_shape)

    for i in reversed(range(len(params.config.blocks))):
        _filters, kernel, pool = params.config.blocks[i]
        in_shape, cols, z, idx, lo = caches[i]
        nb, f, lp = d_h.shape
        d_blocks = np.zeros((nb, f, lp, pool))
        np.put_along_axis(d_blocks, idx[..., None], d_h[..., None], axis=3)
        d_a = np.zeros((nb, f, lo))
        d_a[:, :, :lp * pool] = d_blocks.reshape(nb, f, lp * pool)
        d_z = d_a * (z > 0)
        grads[f"conv{i}.W"] = np.tensordot(d_z, cols, axes=([0, 2], [0, 2]))
        grads[f"conv{i}.b"] = d_z.sum(axis=(0, 2))
        if i == 0:
            break
        d_cols = np.tensordot(d_z, w[f"conv{i}.W"], axes=([1], [0]))  # (n, lo, c, k)
        d_prev = np.zeros(in_shape)
        for k in range(kernel):
            d_prev[:, :, k:k + lo] += d_cols[:, :, :, k].transpose(0, 2, 1)
        d_h = d_prev
    return loss, grads


def batch_loss(params: NetParams, x: np.ndarray, y: np.ndarray) -> float:
    logits, _ = _forward(params, x)
    return cross_entropy(softmax(logits), y)


# --------------------------------------------------------------------------
# training and inference


def _stack(windows) -> np.ndarray:
    return np.stack([w.samples for w in windows])


def train(config: NetConfig, train_windows, label_set: Sequence | None = None,
          epoch_log: str | None = None) -> NetParams:
    """Mini-batch gradient descent on softmax cross-entropy.

    Batch order is reshuffled each epoch from ``config.seed``. Inputs are
    standardized per channel with training-set statistics, which are
    stored on the returned parameters.
    """
    train_windows = list(train_windows)
    if not train_windows:
        raise ValueError("no training windows")
    labels = [w.label for w in train_windows]
    label_set = tuple(sorted(set(labels))) if label_set is None else tuple(label_set)
    if len(label_set) != config.classes:
        raise ValueError(f"config has {config.classes} classes but label set has {len(label_set)}")
    index = {c: i for i, c in enumerate(label_set)}
    y = np.array([index[c] for c in labels], dtype=int)

    X = _stack(train_windows)
    params = init(config)
    params.label_set = label_set
    params.channel_mean = X.mean(axis=(0, 1))
    params.channel_std = np.maximum(X.std(axis=(0, 1)), 1e-8)
    x = _as_input(params, X)

    rng = np.random.default_rng([config.seed, 1])
    n = x.shape[0]
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            b = order[start:start + config.batch_size]
            loss, grads = loss_and_grads(params, x[b], y[b])
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, batch starting {start} "
                    f"(learning_rate={config.learning_rate})")
            for name, g in grads.items():
                params.weights[name] -= config.learning_rate * g
            bad = [name for name, v in params.weights.items() if not np.all(np.isfinite(v))]
            if bad:
                raise FloatingPointError(
                    f"non-finite parameters {bad} at epoch {epoch}, batch starting {start} "
                    f"(learning_rate={config.learning_rate})")
            total_loss += loss * len(b)
        logits, _ = _forward(params, x)
        correct = int(np.sum(np.argmax(logits, axis=1) == y))
        params.history.append((epoch, total_loss / n, correct / n))
        log.debug("epoch %d loss %.6f acc %.4f", epoch, total_loss / n, correct / n)

    if epoch_log is not None:
        write_epoch_log(params, epoch_log)
    return params


def write_epoch_log(params: NetParams, path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,loss,train_accuracy\n")
        for epoch, loss, acc in params.history:
            fh.write(f"{epoch},{loss!r},{acc!r}\n")


def predict_proba(params: NetParams, X) -> np.ndarray:
    logits, _ = _forward(params, _as_input(params, X))
    return softmax(logits)


def predict(params: NetParams, window):
    """(class, probabilities) for one window; ties resolve to the earlier label."""
    samples = getattr(window, "samples", window)
    probs = predict_proba(params, samples)[0]
    return params.label_set[int(np.argmax(probs))], probs


def predict_windows(params: NetParams, windows) -> list:
    windows = list(windows)
    if not windows:
        return []
    probs = predict_proba(params, _stack(windows))
    return [params.label_set[i] for i in np.argmax(probs, axis=1)]


# --------------------------------------------------------------------------
# verification


def kink_margin(params: NetParams, x: np.ndarray) -> float:
    """Distance of a batch from the net's non-differentiable points.

    The smallest of |ReLU pre-activation| and the gap between the top two
    entries of each max-pool window. Central differences are only a valid
    oracle when this comfortably exceeds the probe step's effect.
    """
    _, (caches, _shape, _flat, z1, _a1) = _forward(params, np.asarray(x, dtype=float))
    margin = float(np.abs(z1).min())
    for (_filters, _kernel, pool), (_in_shape, _cols, z, _idx, lo) in zip(params.config.blocks, caches):
        margin = min(margin, float(np.abs(z).min()))
        if pool > 1:
            a = np.maximum(z, 0.0)
            n, f, _ = a.shape
            blocks = np.sort(a[:, :, :(lo // pool) * pool].reshape(n, f, -1, pool), axis=3)
            top, second = blocks[..., -1], blocks[..., -2]
            live = top > 0
            if np.any(live):
                margin = min(margin, float((top - second)[live].min()))
    return margin


GradFn = Callable[[NetParams, np.ndarray, np.ndarray], tuple]


def gradient_check(config: NetConfig, params: NetParams, batch, eps: float = 1e-4,
                   grad_fn: GradFn | None = None) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    ``batch`` is ``(x, y)`` with ``x`` already in network layout
    ``(n, channels, length)``. ``grad_fn`` replaces the analytic gradient,
    which is how fault injection is exercised.
    """
    if params.config != config:
        raise ValueError("params were built for a different configuration")
    x, y = batch
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=int)
    _, grads = (grad_fn or loss_and_grads)(params, x, y)
    analytic = np.concatenate([grads[k].ravel() for k in config.param_shapes()])
    theta = params.flat()
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + eps
        f_plus = batch_loss(params.with_flat(theta), x, y)
        theta[i] = orig - eps
        f_minus = batch_loss(params.with_flat(theta), x, y)
        theta[i] = orig
        numeric[i] = (f_plus - f_minus) / (2 * eps)
    rel = np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), 1e-12)
    return float(rel.max())

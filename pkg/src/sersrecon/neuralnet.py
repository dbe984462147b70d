"""A small 1-D CNN in numpy: forward/backward, training, layer freezing and
head replacement for transfer learning, plus a finite-difference gradient
check and a lossless JSON model format."""

from __future__ import annotations

import base64
import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .spectral_core import N_FEATURES, FeatureVector

log = logging.getLogger(__name__)

LAYER_KINDS = ("conv1d", "relu", "maxpool", "flatten", "dense", "softmax")
PARAM_KINDS = ("conv1d", "dense")
LOGIT_CLIP = 30.0
MODEL_FORMAT_VERSION = 1
# inference chunk size; bounds memory of the first conv's window expansion
_CHUNK = 64


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_channels: Optional[int] = None
    kernel_size: Optional[int] = None
    stride: int = 1
    width: Optional[int] = None
    out_units: Optional[int] = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise NetworkError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv1d":
            for name in ("out_channels", "kernel_size", "stride"):
                v = getattr(self, name)
                if v is None or v < 1:
                    raise NetworkError(f"conv1d needs {name} >= 1")
        elif self.kind == "maxpool":
            if self.width is None or self.width < 1:
                raise NetworkError("maxpool needs width >= 1")
        elif self.kind == "dense":
            if self.out_units is None or self.out_units < 1:
                raise NetworkError("dense needs out_units >= 1")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None and not (k == "stride" and self.kind != "conv1d")}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(**d)


def conv(out_channels, kernel_size, stride=1):
    return LayerSpec("conv1d", out_channels=out_channels, kernel_size=kernel_size, stride=stride)


def dense(out_units):
    return LayerSpec("dense", out_units=out_units)


def pool(width):
    return LayerSpec("maxpool", width=width)


RELU = LayerSpec("relu")
FLATTEN = LayerSpec("flatten")
SOFTMAX = LayerSpec("softmax")


@dataclass(frozen=True)
class NetworkConfig:
    input_length: int = N_FEATURES
    layers: tuple[LayerSpec, ...] = ()
    n_classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(
            l if isinstance(l, LayerSpec) else LayerSpec.from_dict(l) for l in self.layers
        ))

    def to_dict(self) -> dict:
        return {
            "input_length": self.input_length,
            "n_classes": self.n_classes,
            "layers": [l.to_dict() for l in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(d["input_length"], tuple(LayerSpec.from_dict(l) for l in d["layers"]), d["n_classes"])


def default_config(n_classes: int = 4, input_length: int = N_FEATURES) -> NetworkConfig:
    layers = (
        conv(8, 21), RELU, pool(4),
        conv(16, 11), RELU, pool(4),
        conv(32, 5), RELU, pool(4),
        FLATTEN, dense(128), RELU,
        dense(n_classes), SOFTMAX,
    )
    return NetworkConfig(input_length, layers, n_classes)


def propagate_shapes(cfg: NetworkConfig) -> list[tuple]:
    """Per-layer input shapes: ``(channels, length)`` or ``(units,)``.

    Raises :class:`NetworkError` naming the first layer the shapes don't
    fit through.
    """
    if cfg.input_length < 1:
        raise NetworkError("input_length must be >= 1")
    if not cfg.layers:
        raise NetworkError("network has no layers")
    shape: tuple = (1, cfg.input_length)
    shapes = []
    for i, l in enumerate(cfg.layers):
        shapes.append(shape)
        where = f"layer {i} ({l.kind})"
        if l.kind == "conv1d":
            if len(shape) != 2:
                raise NetworkError(f"{where}: needs (channels, length) input, got {shape}")
            n_out = (shape[1] - l.kernel_size) // l.stride + 1
            if shape[1] < l.kernel_size or n_out < 1:
                raise NetworkError(f"{where}: kernel {l.kernel_size} longer than input length {shape[1]}")
            shape = (l.out_channels, n_out)
        elif l.kind == "maxpool":
            if len(shape) != 2:
                raise NetworkError(f"{where}: needs (channels, length) input, got {shape}")
            if shape[1] // l.width < 1:
                raise NetworkError(f"{where}: width {l.width} exceeds input length {shape[1]}")
            shape = (shape[0], shape[1] // l.width)
        elif l.kind == "flatten":
            shape = (int(np.prod(shape)),)
        elif l.kind == "dense":
            # dense flattens (channels, length) input implicitly
            shape = (l.out_units,)
        elif l.kind == "softmax":
            if i != len(cfg.layers) - 1:
                raise NetworkError(f"{where}: softmax must be the final layer")
            if len(shape) != 1:
                raise NetworkError(f"{where}: needs flat input, got {shape}")
    if cfg.layers[-1].kind != "softmax":
        raise NetworkError("final layer must be softmax")
    params = [l for l in cfg.layers if l.kind in PARAM_KINDS]
    if not params or params[-1].kind != "dense":
        raise NetworkError("last parameterized layer must be dense")
    if params[-1].out_units != cfg.n_classes:
        raise NetworkError(
            f"final dense has {params[-1].out_units} units but n_classes is {cfg.n_classes}"
        )
    if shape != (cfg.n_classes,):
        raise NetworkError(f"network output shape {shape} != ({cfg.n_classes},)")
    return shapes


@dataclass
class Network:
    """Config, per-layer parameters and the per-parameterized-layer trainable mask.

    ``params[i]`` is ``{"W": ..., "b": ...}`` for conv1d/dense layers and
    ``None`` otherwise. ``trainable_mask`` is aligned with
    :attr:`param_layers`.
    """

    config: NetworkConfig
    params: list
    trainable_mask: list

    @property
    def param_layers(self) -> list[int]:
        return [i for i, l in enumerate(self.config.layers) if l.kind in PARAM_KINDS]

    def is_trainable(self, layer: int) -> bool:
        return self.trainable_mask[self.param_layers.index(layer)]

    def trainable_layers(self) -> list[int]:
        return [i for i, t in zip(self.param_layers, self.trainable_mask) if t]

    def n_trainable(self) -> int:
        return sum(self.params[i]["W"].size + self.params[i]["b"].size for i in self.trainable_layers())

    def n_params(self) -> int:
        return sum(self.params[i]["W"].size + self.params[i]["b"].size for i in self.param_layers)

    def copy(self) -> "Network":
        return copy.deepcopy(self)


def _param_shapes(spec: LayerSpec, in_shape: tuple) -> tuple[tuple, tuple, int]:
    """(weight shape, bias shape, fan-in) of a conv1d/dense layer."""
    if spec.kind == "conv1d":
        return (spec.out_channels, in_shape[0], spec.kernel_size), (spec.out_channels,), in_shape[0] * spec.kernel_size
    fan_in = int(np.prod(in_shape))
    return (fan_in, spec.out_units), (spec.out_units,), fan_in


def _init_layer(spec: LayerSpec, in_shape: tuple, rng: np.random.Generator) -> dict:
    wshape, bshape, fan_in = _param_shapes(spec, in_shape)
    limit = np.sqrt(6.0 / fan_in)
    return {"W": rng.uniform(-limit, limit, wshape), "b": np.zeros(bshape)}


def init_network(cfg: NetworkConfig, seed: int = 0) -> Network:
    shapes = propagate_shapes(cfg)
    rng = np.random.default_rng(seed)
    params = [
        _init_layer(l, shapes[i], rng) if l.kind in PARAM_KINDS else None
        for i, l in enumerate(cfg.layers)
    ]
    n_param_layers = sum(p is not None for p in params)
    return Network(cfg, params, [True] * n_param_layers)


# --- layer primitives --------------------------------------------------------

def _conv_forward(x, W, b, stride):
    K = W.shape[2]
    win = sliding_window_view(x, K, axis=2)[:, :, ::stride, :]  # (B, C, Lout, K)
    out = np.tensordot(win, W, axes=([1, 3], [1, 2]))  # (B, Lout, O)
    out = out.transpose(0, 2, 1) + b[None, :, None]
    return np.ascontiguousarray(out), win


def _conv_backward(dout, win, W, x_shape, stride, need_dx=True):
    dW = np.tensordot(dout, win, axes=([0, 2], [0, 2]))  # (O, C, K)
    db = dout.sum(axis=(0, 2))
    if not need_dx:
        return None, dW, db
    K = W.shape[2]
    n_out = dout.shape[2]
    dcols = np.tensordot(dout, W, axes=([1], [0]))  # (B, Lout, C, K)
    dx = np.zeros(x_shape)
    span = stride * (n_out - 1) + 1
    for k in range(K):
        dx[:, :, k:k + span:stride] += dcols[:, :, :, k].transpose(0, 2, 1)
    return dx, dW, db


def _pool_forward(x, width):
    B, C, L = x.shape
    n = L // width
    blocks = x[:, :, : n * width].reshape(B, C, n, width)
    arg = blocks.argmax(axis=3)
    out = np.take_along_axis(blocks, arg[..., None], axis=3)[..., 0]
    return out, arg


def _pool_backward(dout, arg, x_shape, width):
    B, C, L = x_shape
    n = dout.shape[2]
    dblocks = np.zeros((B, C, n, width))
    np.put_along_axis(dblocks, arg[..., None], dout[..., None], axis=3)
    dx = np.zeros(x_shape)
    dx[:, :, : n * width] = dblocks.reshape(B, C, n * width)
    return dx


def _softmax(z):
    zc = np.clip(z, -LOGIT_CLIP, LOGIT_CLIP)
    zc = zc - zc.max(axis=1, keepdims=True)
    e = np.exp(zc)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(z):
    zc = np.clip(z, -LOGIT_CLIP, LOGIT_CLIP)
    zc = zc - zc.max(axis=1, keepdims=True)
    return zc - np.log(np.exp(zc).sum(axis=1, keepdims=True))


def _as_batch(net: Network, x) -> np.ndarray:
    if isinstance(x, FeatureVector):
        x = x.values
    elif isinstance(x, (list, tuple)) and x and isinstance(x[0], FeatureVector):
        x = np.stack([f.values for f in x])
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.config.input_length:
        raise NetworkError(
            f"input length {x.shape[-1]} != network input_length {net.config.input_length}"
        )
    return x


def _logits(net: Network, x: np.ndarray, keep_cache: bool, gates: Optional[dict] = None, fixed: Optional[dict] = None):
    """Run every layer except the final softmax; returns logits and caches.

    ``gates`` collects each ReLU mask and pool argmax; ``fixed`` replays
    previously collected ones instead of recomputing them.
    """
    a = x[:, None, :]
    caches = []
    for i, l in enumerate(net.config.layers[:-1]):
        p = net.params[i]
        if l.kind == "conv1d":
            out, win = _conv_forward(a, p["W"], p["b"], l.stride)
            cache = (a.shape, win)
        elif l.kind == "relu":
            cache = fixed[i] if fixed is not None else a > 0
            out = a * cache
            if gates is not None:
                gates[i] = cache
        elif l.kind == "maxpool":
            if fixed is not None:
                B, C, L = a.shape
                n = L // l.width
                arg = fixed[i]
                blocks = a[:, :, : n * l.width].reshape(B, C, n, l.width)
                out = np.take_along_axis(blocks, arg[..., None], axis=3)[..., 0]
            else:
                out, arg = _pool_forward(a, l.width)
            if gates is not None:
                gates[i] = arg
            cache = (a.shape, arg)
        elif l.kind == "flatten":
            out = a.reshape(a.shape[0], -1)
            cache = a.shape
        elif l.kind == "dense":
            flat = a.reshape(a.shape[0], -1)
            out = flat @ p["W"] + p["b"]
            cache = (a.shape, flat)
        caches.append(cache if keep_cache else None)
        a = out
    return a, caches


def forward(net: Network, x) -> np.ndarray:
    """Class probabilities for one input (returns shape ``(n_classes,)``) or
    a batch (``(batch, n_classes)``)."""
    single = isinstance(x, FeatureVector) or np.ndim(getattr(x, "values", x)) == 1
    xb = _as_batch(net, x)
    probs = np.concatenate([
        _softmax(_logits(net, xb[s:s + _CHUNK], keep_cache=False)[0])
        for s in range(0, xb.shape[0], _CHUNK)
    ])
    return probs[0] if single else probs


def predict(net: Network, x) -> np.ndarray:
    # argmax picks the first maximum: ties go to the lower class index
    return np.atleast_2d(forward(net, _as_batch(net, x))).argmax(axis=1)


def _zero_grads(net: Network) -> list:
    return [None if p is None else {k: np.zeros_like(v) for k, v in p.items()} for p in net.params]


def loss_and_gradients(net: Network, x, labels) -> tuple[float, list]:
    """Mean cross-entropy and per-layer gradients.

    Gradients mirror ``net.params``; frozen layers get zero arrays.
    """
    xb = _as_batch(net, x)
    y = np.asarray(labels, dtype=int).reshape(-1)
    if y.size != xb.shape[0] or y.size == 0:
        raise NetworkError("batch must be non-empty with one label per input")
    if y.min() < 0 or y.max() >= net.config.n_classes:
        raise NetworkError(f"label out of range [0, {net.config.n_classes})")
    z, caches = _logits(net, xb, keep_cache=True)
    logp = _log_softmax(z)
    B = y.size
    loss = float(-logp[np.arange(B), y].mean())

    grads = _zero_grads(net)
    trainable = net.trainable_layers()
    if not trainable:
        return loss, grads
    lowest = min(trainable)

    dz = np.exp(logp)
    dz[np.arange(B), y] -= 1.0
    dz /= B
    dz *= (z > -LOGIT_CLIP) & (z < LOGIT_CLIP)
    d = dz
    layers = net.config.layers
    for i in range(len(layers) - 2, lowest - 1, -1):
        l = layers[i]
        cache = caches[i]
        need_dx = i > lowest
        if l.kind == "dense":
            in_shape, flat = cache
            if net.is_trainable(i):
                grads[i]["W"] = flat.T @ d
                grads[i]["b"] = d.sum(axis=0)
            if need_dx:
                d = (d @ net.params[i]["W"].T).reshape(in_shape)
        elif l.kind == "conv1d":
            x_shape, win = cache
            dx, dW, db = _conv_backward(d, win, net.params[i]["W"], x_shape, l.stride, need_dx)
            if net.is_trainable(i):
                grads[i]["W"] = dW
                grads[i]["b"] = db
            d = dx
        elif l.kind == "relu":
            d = d * cache
        elif l.kind == "maxpool":
            x_shape, arg = cache
            d = _pool_backward(d, arg, x_shape, l.width)
        elif l.kind == "flatten":
            d = d.reshape(cache)
    return loss, grads


def _gated_loss(net: Network, x: np.ndarray, y: np.ndarray, fixed: Optional[dict] = None) -> tuple[float, dict]:
    gates: dict = {}
    z, _ = _logits(net, x, keep_cache=False, gates=gates, fixed=fixed)
    logp = _log_softmax(z)
    return float(-logp[np.arange(y.size), y].mean()), gates


def loss_only(net: Network, x, labels) -> float:
    xb = _as_batch(net, x)
    y = np.asarray(labels, dtype=int).reshape(-1)
    total = 0.0
    for s in range(0, xb.shape[0], _CHUNK):
        z, _ = _logits(net, xb[s:s + _CHUNK], keep_cache=False)
        logp = _log_softmax(z)
        total += float(-logp[np.arange(z.shape[0]), y[s:s + _CHUNK]].sum())
    return total / y.size


@dataclass
class GradCheckResult:
    max_rel_error: float
    n_checked: int
    nothing_to_check: bool = False
    # coordinates whose +-epsilon probes flipped a ReLU mask or pool winner
    n_kinks: int = 0


def _rel_error(a: float, n: float, floor: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), floor)


def _same_gates(a: dict, b: dict) -> bool:
    return all(np.array_equal(a[k], b[k]) for k in a)


def gradient_check(
    net: Network,
    x,
    label,
    epsilon: float = 1e-4,
    n_samples: int = 200,
    seed: int = 0,
    floor: float = 1e-6,
) -> GradCheckResult:
    """Compare analytic gradients with central differences.

    Checks at least ``n_samples`` randomly chosen trainable scalars, split
    evenly across trainable layers (every scalar of a layer smaller than its
    share). The relative error uses ``max(|a|, |n|, floor)`` as the
    denominator so exactly-zero gradients (dead ReLUs) don't divide by zero.

    ReLU and max-pool make the loss piecewise smooth. When a probe at
    ``theta +- epsilon`` changes any ReLU mask or pool winner, the plain
    difference straddles a kink; for those coordinates the difference is
    taken on the smooth piece containing ``theta`` by replaying the gates
    recorded at ``theta``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    xb = _as_batch(net, x)
    labels = np.atleast_1d(np.asarray(label, dtype=int))
    layers = net.trainable_layers()
    if not layers:
        return GradCheckResult(0.0, 0, nothing_to_check=True)
    rng = np.random.default_rng(seed)
    # equal quota per layer so small conv kernels aren't swamped by dense weights
    quota = -(-n_samples // len(layers))
    coords = []
    for i in layers:
        n_w = net.params[i]["W"].size
        total = n_w + net.params[i]["b"].size
        for flat in np.sort(rng.choice(total, size=min(quota, total), replace=False)):
            coords.append((i, "W", flat) if flat < n_w else (i, "b", flat - n_w))

    _, grads = loss_and_gradients(net, xb, labels)
    _, gates0 = _gated_loss(net, xb, labels)
    probe = net.copy()
    worst = 0.0
    kinks = 0
    for i, k, j in coords:
        flat = probe.params[i][k].reshape(-1)
        orig = flat[j]
        flat[j] = orig + epsilon
        up, gates_up = _gated_loss(probe, xb, labels)
        flat[j] = orig - epsilon
        down, gates_down = _gated_loss(probe, xb, labels)
        if not (_same_gates(gates_up, gates0) and _same_gates(gates_down, gates0)):
            kinks += 1
            down, _ = _gated_loss(probe, xb, labels, fixed=gates0)
            flat[j] = orig + epsilon
            up, _ = _gated_loss(probe, xb, labels, fixed=gates0)
        flat[j] = orig
        numeric = (up - down) / (2.0 * epsilon)
        worst = max(worst, _rel_error(grads[i][k].reshape(-1)[j], numeric, floor))
    return GradCheckResult(float(worst), len(coords), n_kinks=kinks)


# --- training ----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 50
    target_val_accuracy: float = 0.90
    val_fraction: float = 0.2
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if not 0 < self.target_val_accuracy:
            raise ValueError("target_val_accuracy must be > 0")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must be in (0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    train_accuracy: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def to_dict(self) -> dict:
        return asdict(self)


def dataset_matrix(data) -> tuple[np.ndarray, np.ndarray]:
    feats = data.features
    if len(feats) == 0:
        raise NetworkError("empty dataset")
    if isinstance(feats[0], FeatureVector):
        X = np.stack([f.values for f in feats])
    elif hasattr(feats[0], "wavelengths_nm"):
        raise NetworkError("dataset holds raw spectra; preprocess it into feature vectors first")
    else:
        X = np.asarray(feats, dtype=float)
    return X, np.asarray(data.labels, dtype=int)


def stratified_split(labels: np.ndarray, n_classes: int, val_fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    train_idx, val_idx = [], []
    for c in range(n_classes):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        n_val = int(round(idx.size * val_fraction))
        if n_val == 0 or n_val == idx.size:
            raise NetworkError(f"class {c} has an empty train or validation split ({idx.size} samples)")
        val_idx.append(idx[:n_val])
        train_idx.append(idx[n_val:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(val_idx))


def _accuracy(net, X, y) -> float:
    return float(np.mean(predict(net, X) == y))


def train(net: Network, data, cfg: TrainConfig = TrainConfig()) -> tuple[Network, TrainHistory]:
    """Mini-batch training of the trainable layers; returns a new network.

    Stops after ``cfg.max_epochs`` or at the end of the first epoch whose
    validation accuracy reaches ``cfg.target_val_accuracy``.
    """
    X, y = dataset_matrix(data)
    n_classes = net.config.n_classes
    if len(data.class_names) != n_classes:
        raise NetworkError(f"dataset has {len(data.class_names)} classes, network has {n_classes}")
    split_ss, shuffle_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    tr, va = stratified_split(y, n_classes, cfg.val_fraction, np.random.default_rng(split_ss))
    rng = np.random.default_rng(shuffle_ss)
    net = net.copy()
    hist = TrainHistory()
    layers = net.trainable_layers()
    m = {i: {k: np.zeros_like(v) for k, v in net.params[i].items()} for i in layers}
    v = {i: {k: np.zeros_like(v) for k, v in net.params[i].items()} for i in layers}
    step = 0
    for epoch in range(cfg.max_epochs):
        order = tr[rng.permutation(tr.size)]
        if layers:
            for s in range(0, order.size, cfg.batch_size):
                batch = order[s:s + cfg.batch_size]
                _, grads = loss_and_gradients(net, X[batch], y[batch])
                step += 1
                for i in layers:
                    for k, p in net.params[i].items():
                        g = grads[i][k]
                        if cfg.optimizer == "sgd":
                            p -= cfg.learning_rate * g
                            continue
                        m[i][k] = cfg.beta1 * m[i][k] + (1 - cfg.beta1) * g
                        v[i][k] = cfg.beta2 * v[i][k] + (1 - cfg.beta2) * g * g
                        mhat = m[i][k] / (1 - cfg.beta1**step)
                        vhat = v[i][k] / (1 - cfg.beta2**step)
                        p -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.adam_eps)
        hist.train_loss.append(loss_only(net, X[tr], y[tr]))
        hist.train_accuracy.append(_accuracy(net, X[tr], y[tr]))
        hist.val_loss.append(loss_only(net, X[va], y[va]))
        hist.val_accuracy.append(_accuracy(net, X[va], y[va]))
        log.info(
            "epoch %d: train loss %.4f acc %.3f | val loss %.4f acc %.3f",
            epoch + 1, hist.train_loss[-1], hist.train_accuracy[-1],
            hist.val_loss[-1], hist.val_accuracy[-1],
        )
        if hist.val_accuracy[-1] >= cfg.target_val_accuracy:
            break
    return net, hist


def evaluate(net: Network, data) -> float:
    X, y = dataset_matrix(data)
    if len(data.class_names) != net.config.n_classes:
        raise NetworkError("dataset class count does not match the network")
    return _accuracy(net, X, y)


def freeze_all(net: Network) -> Network:
    out = net.copy()
    out.trainable_mask = [False] * len(out.trainable_mask)
    return out


def replace_head(net: Network, n_out: int, seed: int = 0) -> Network:
    """Swap the final dense layer for a fresh trainable one with ``n_out`` units."""
    head = net.param_layers[-1]
    if net.config.layers[head].kind != "dense":
        raise NetworkError("final parameterized layer is not dense")
    layers = list(net.config.layers)
    layers[head] = dense(n_out)
    cfg = NetworkConfig(net.config.input_length, tuple(layers), n_out)
    shapes = propagate_shapes(cfg)
    out = net.copy()
    out.config = cfg
    out.params[head] = _init_layer(layers[head], shapes[head], np.random.default_rng(seed))
    out.trainable_mask[-1] = True
    return out


# --- model file ----------------------------------------------------------------

def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "dtype": "<f8", "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype=d.get("dtype", "<f8")).reshape(d["shape"]).astype(float)


def model_to_dict(net: Network) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "config": net.config.to_dict(),
        "trainable_mask": list(net.trainable_mask),
        "parameters": [
            {"layer": i, "W": _encode(net.params[i]["W"]), "b": _encode(net.params[i]["b"])}
            for i in net.param_layers
        ],
    }


def model_from_dict(d: dict) -> Network:
    version = d.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise NetworkError(f"unsupported model format_version {version!r}")
    cfg = NetworkConfig.from_dict(d["config"])
    shapes = propagate_shapes(cfg)
    params: list = [None] * len(cfg.layers)
    for entry in d["parameters"]:
        params[entry["layer"]] = {"W": _decode(entry["W"]), "b": _decode(entry["b"])}
    net = Network(cfg, params, [bool(t) for t in d["trainable_mask"]])
    for i in net.param_layers:
        if params[i] is None:
            raise NetworkError(f"model file lacks parameters for layer {i}")
        wshape, bshape, _ = _param_shapes(cfg.layers[i], shapes[i])
        if params[i]["W"].shape != wshape or params[i]["b"].shape != bshape:
            raise NetworkError(f"layer {i}: parameter shapes do not match config")
    if len(net.trainable_mask) != len(net.param_layers):
        raise NetworkError("trainable_mask length does not match parameterized layers")
    return net


def save_model(net: Network, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(net), indent=1) + "\n")


def load_model(path) -> Network:
    return model_from_dict(json.loads(Path(path).read_text()))

"""Small FCN / CNN / LSTM classifiers with manual backprop and Adam."""

from __future__ import annotations

import logging
import math
from dataclasses import replace

import numpy as np

from ..errors import TrainingError, ValidationError
from .layers import Conv1D, Dense, Flatten, GlobalAvgPool1D, LSTM, MaxPool1D, ReLU
from .model import ArchConfig, InputSpec, TrainedModel

logger = logging.getLogger(__name__)

PREDICT_CHUNK = 256
SHIFT_KEY = "input.shift"
SCALE_KEY = "input.scale"


class Network:
    """A stack of layers sharing one flat ``name -> array`` parameter dict."""

    def __init__(self, layers):
        self.layers = layers

    @property
    def params(self) -> dict:
        return {
            f"{layer.name}.{k}": v for layer in self.layers for k, v in layer.params.items()
        }

    def load(self, params) -> None:
        for layer in self.layers:
            for k in layer.params:
                src = np.asarray(params[f"{layer.name}.{k}"], dtype=np.float64)
                if src.shape != layer.params[k].shape:
                    raise ValidationError(f"parameter {layer.name}.{k} has shape {src.shape}")
                layer.params[k] = np.array(src, copy=True)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dlogits) -> dict:
        d = dlogits
        for layer in reversed(self.layers):
            d = layer.backward(d)
        return {
            f"{layer.name}.{k}": v for layer in self.layers for k, v in layer.grads.items()
        }


def build_network(cfg: ArchConfig, input_shape, n_classes: int, rng=None) -> Network:
    """Instantiate the architecture. ``rng=None`` gives all-zero weights."""
    T, C = input_shape
    if cfg.kind == "FCN":
        layers = [Flatten("flatten")]
        width = T * C
        for n, h in enumerate(cfg.hidden):
            layers += [Dense(f"dense{n}", width, h, rng), ReLU(f"relu{n}")]
            width = h
        layers.append(Dense("out", width, n_classes, rng))
    elif cfg.kind == "CNN":
        layers = []
        width = C
        for n, ch in enumerate(cfg.conv_channels):
            layers += [
                Conv1D(f"conv{n}", width, ch, cfg.conv_kernel, rng),
                ReLU(f"relu{n}"),
                MaxPool1D(f"pool{n}", 2),
            ]
            width = ch
        layers += [GlobalAvgPool1D("gap"), Dense("out", width, n_classes, rng)]
    else:
        step = cfg.lstm_step if T % cfg.lstm_step == 0 else 1
        layers = [
            LSTM("lstm", C, cfg.lstm_units, step=step, rng=rng),
            Dense("out", cfg.lstm_units, n_classes, rng),
        ]
    return Network(layers)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean categorical cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = labels.size
    loss = -float(np.mean(log_p[np.arange(n), labels]))
    d = np.exp(log_p)
    d[np.arange(n), labels] -= 1.0
    return loss, d / n


def _standardize(model: TrainedModel, x: np.ndarray) -> np.ndarray:
    if SHIFT_KEY not in model.params:
        return x
    return (x - model.params[SHIFT_KEY]) / model.params[SCALE_KEY]


def _network_for(model: TrainedModel) -> Network:
    net = build_network(model.config, model.input_spec.shape, model.n_classes)
    net.load(model.params)
    return net


def _check_labels(labels, n_classes):
    labels = np.asarray(labels)
    if labels.dtype.kind not in "iu":
        if not np.all(labels == np.round(labels)):
            raise ValidationError("labels must be integers")
        labels = labels.astype(int)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValidationError(f"labels must lie in [0, {n_classes})")
    return labels


def nn_forward(model: TrainedModel, batch) -> np.ndarray:
    """Class probabilities, shape (n, n_classes)."""
    x = _standardize(model, model.input_spec.check(batch))
    net = _network_for(model)
    out = [softmax(net.forward(x[i : i + PREDICT_CHUNK])) for i in range(0, x.shape[0], PREDICT_CHUNK)]
    if not out:
        return np.zeros((0, model.n_classes))
    return np.concatenate(out, axis=0)


def nn_loss_and_grads(model: TrainedModel, batch, labels):
    """Mean cross-entropy over ``batch`` and gradients for every parameter."""
    x = _standardize(model, model.input_spec.check(batch))
    labels = _check_labels(labels, model.n_classes)
    if labels.size != x.shape[0]:
        raise ValidationError("labels and batch differ in length")
    net = _network_for(model)
    loss, dlogits = cross_entropy(net.forward(x), labels)
    return loss, net.backward(dlogits)


class Adam:
    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        """Update ``params`` arrays in place."""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _full_loss(net: Network, X, y) -> float:
    total = 0.0
    for i in range(0, X.shape[0], PREDICT_CHUNK):
        loss, _ = cross_entropy(net.forward(X[i : i + PREDICT_CHUNK]), y[i : i + PREDICT_CHUNK])
        total += loss * min(PREDICT_CHUNK, X.shape[0] - i)
    return total / X.shape[0]


def train_nn(cfg: ArchConfig, X, y, n_classes=None, seed=None, modalities=()) -> TrainedModel:
    """Train a network with Adam on mini-batches.

    Parameters
    ----------
    cfg : ArchConfig
    X : array, shape (n, time, channels)
    y : array of int, shape (n,)
    n_classes : int, optional
        Defaults to ``max(y) + 1``.
    seed : int, optional
        Overrides ``cfg.seed``; initialisation and shuffling use only this.
    modalities : tuple of str
        Recorded in the model's InputSpec.

    Returns
    -------
    TrainedModel
        ``history[0]`` is the loss over the training set before the first
        update, followed by the mean mini-batch loss of every epoch.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[0] == 0:
        raise ValidationError(f"training input must be (n, time, channels), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("training input contains non-finite values")
    if n_classes is None:
        n_classes = int(np.max(y)) + 1
    y = _check_labels(y, n_classes)
    if y.size != X.shape[0]:
        raise ValidationError("labels and inputs differ in length")
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    rng = np.random.default_rng(cfg.seed)
    extra = {}
    if cfg.standardize:
        shift = X.mean(axis=(0, 1))
        scale = X.std(axis=(0, 1))
        scale[scale == 0] = 1.0
        X = (X - shift) / scale
        extra = {SHIFT_KEY: shift, SCALE_KEY: scale}
    net = build_network(cfg, X.shape[1:], n_classes, rng)
    params = net.params
    opt = Adam(params, lr=cfg.learning_rate)
    n = X.shape[0]
    history = [_full_loss(net, X, y)]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, dlogits = cross_entropy(net.forward(X[idx]), y[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"{cfg.kind} training diverged at epoch {epoch}")
            grads = net.backward(dlogits)
            opt.step(params, grads)
            total += loss * idx.size
        history.append(total / n)
    spec = InputSpec(tuple(X.shape[1:]), tuple(modalities), int(n_classes))
    return TrainedModel(cfg.kind, {**net.params, **extra}, spec, cfg, tuple(history))

"""Tiny reconstruction models over flattened windows, trained with Adam.

A window ``x`` of shape ``L x D`` is flattened row-major (time-major,
channel-minor) to a vector of length ``L*D`` and reconstructed as

    linear:  x_hat = (x W1 + b1) W2 + b2
    mlp:     x_hat = tanh(x W1 + b1) W2 + b2

Gradients are derived by hand; the residual is ``r = x - x_hat`` so the
gradient reaching ``x_hat`` is the negated upstream gradient.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import MultiSeries, NormStats, WindowBatch, tiling_offsets, windows_at
from .gwnr import GwnrConfig, GwnrLearnables, total_loss

log = logging.getLogger(__name__)

PARAM_NAMES = ("W1", "b1", "W2", "b2")
CHECKPOINT_FORMAT = "cognos-checkpoint/1"


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class BackboneParams:
    kind: str
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        if self.kind not in ("linear", "mlp"):
            raise ValueError(f"unknown backbone kind {self.kind!r}")
        n_in, H = self.W1.shape
        if H < 1 or self.b1.shape != (H,) or self.W2.shape != (H, n_in) or self.b2.shape != (n_in,):
            raise ValueError(
                f"inconsistent parameter shapes W1{self.W1.shape} b1{self.b1.shape} "
                f"W2{self.W2.shape} b2{self.b2.shape}"
            )

    @property
    def input_size(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    def tensors(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "BackboneParams":
        return BackboneParams(self.kind, *(getattr(self, n).copy() for n in PARAM_NAMES))

    def equal(self, other: "BackboneParams") -> bool:
        return self.kind == other.kind and all(
            np.array_equal(getattr(self, n), getattr(other, n)) for n in PARAM_NAMES
        )


def init_params(kind: str, window_length: int, channels: int, hidden: int, seed: int) -> BackboneParams:
    """Glorot-uniform weights, zero biases."""
    n_in = window_length * channels
    rng = np.random.default_rng(seed)
    a = np.sqrt(6.0 / (n_in + hidden))
    W1 = rng.uniform(-a, a, size=(n_in, hidden))
    W2 = rng.uniform(-a, a, size=(hidden, n_in))
    return BackboneParams(kind, W1, np.zeros(hidden), W2, np.zeros(n_in))


def zero_params(kind: str, window_length: int, channels: int, hidden: int) -> BackboneParams:
    n_in = window_length * channels
    return BackboneParams(kind, np.zeros((n_in, hidden)), np.zeros(hidden), np.zeros((hidden, n_in)), np.zeros(n_in))


def _flatten(params: BackboneParams, windows: np.ndarray) -> np.ndarray:
    B, L, D = windows.shape
    if L * D != params.input_size:
        raise ValueError(f"window of {L}x{D}={L * D} values does not match model input size {params.input_size}")
    return windows.reshape(B, L * D)


def _hidden(params: BackboneParams, flat: np.ndarray):
    pre = flat @ params.W1 + params.b1
    return pre, (np.tanh(pre) if params.kind == "mlp" else pre)


def forward(params: BackboneParams, batch: WindowBatch):
    """Return ``(reconstruction, residual)``, both ``B x L x D``."""
    windows = batch.windows if isinstance(batch, WindowBatch) else np.asarray(batch)
    flat = _flatten(params, windows)
    _, h = _hidden(params, flat)
    recon = (h @ params.W2 + params.b2).reshape(windows.shape)
    return recon, windows - recon


def backward(params: BackboneParams, batch: WindowBatch, upstream: np.ndarray) -> dict:
    """Parameter gradients given ``dLoss/dr`` (same shape as the residual)."""
    windows = batch.windows if isinstance(batch, WindowBatch) else np.asarray(batch)
    if upstream.shape != windows.shape:
        raise ValueError(f"upstream gradient shape {upstream.shape} != residual shape {windows.shape}")
    flat = _flatten(params, windows)
    _, h = _hidden(params, flat)
    g_out = -upstream.reshape(flat.shape)
    grads = {"W2": h.T @ g_out, "b2": g_out.sum(axis=0)}
    g_h = g_out @ params.W2.T
    if params.kind == "mlp":
        g_h = g_h * (1.0 - h * h)
    grads["W1"] = flat.T @ g_h
    grads["b1"] = g_h.sum(axis=0)
    return grads


@dataclass
class OptimState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: OptimState):
    """One bias-corrected Adam update. Returns new ``(params, state)``; inputs are not mutated."""
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown tensor {name!r}")
        if np.shape(g) != np.shape(params[name]):
            raise ValueError(f"gradient shape {np.shape(g)} != parameter shape {np.shape(params[name])} for {name!r}")
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient for tensor {name!r}")
    t = state.step + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m = state.m.get(name, np.zeros_like(g))
        v = state.v.get(name, np.zeros_like(g))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        new_params[name] = p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new_m[name], new_v[name] = m, v
    new_state = OptimState(state.lr, state.beta1, state.beta2, state.eps, t, new_m, new_v)
    return new_params, new_state


@dataclass(frozen=True)
class TrainConfig:
    """Backbone and optimiser settings; defaults: window 100, hidden 128, batch 128, lr 1e-4, 10 epochs."""

    kind: str = "linear"
    window_length: int = 100
    stride: Optional[int] = None  # None: non-overlapping (stride = window_length)
    hidden: int = 128
    batch_size: int = 128
    lr: float = 1e-4
    epochs: int = 10
    seed: int = 2021


@dataclass
class Model:
    """Backbone weights plus the regulariser learnables; the unit that is checkpointed."""

    params: BackboneParams
    learnables: GwnrLearnables = field(default_factory=GwnrLearnables)
    window_length: int = 0
    channels: int = 0
    normalizer: Optional[NormStats] = None
    measurement_noise: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def copy(self) -> "Model":
        return Model(
            self.params.copy(),
            self.learnables.copy(),
            self.window_length,
            self.channels,
            self.normalizer,
            None if self.measurement_noise is None else self.measurement_noise.copy(),
            dict(self.meta),
        )


def new_model(config: TrainConfig, channels: int) -> Model:
    params = init_params(config.kind, config.window_length, channels, config.hidden, config.seed)
    return Model(params, GwnrLearnables(), config.window_length, channels)


@dataclass
class EpochRecord:
    mse: float
    mmd: float
    acf: float
    total: float


def train(model: Model, windows: WindowBatch, loss_config: GwnrConfig, config: TrainConfig, seed: Optional[int] = None):
    """Minibatch Adam over ``windows``; returns ``(trained model, history)``.

    Windows are reshuffled every epoch and target samples for the MMD term
    are redrawn every batch, both from a generator seeded with ``seed``
    (``config.seed`` when omitted). History holds one
    :class:`EpochRecord` per epoch with batch-averaged loss values.
    """
    if windows.shape[0] < 1:
        raise ValueError("need at least one training window")
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng([seed, 1])
    model = model.copy()
    tensors = model.params.tensors()
    tensors["omega"] = np.array(model.learnables.omega)
    tensors["awl_logvars"] = model.learnables.awl_logvars.copy()
    state = OptimState(lr=config.lr)
    history = []
    n = windows.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        sums = np.zeros(4)
        n_batches = 0
        for b, start in enumerate(range(0, n, config.batch_size)):
            batch = windows.windows[order[start : start + config.batch_size]]
            params = BackboneParams(model.params.kind, *(tensors[k] for k in PARAM_NAMES))
            learn = GwnrLearnables(float(tensors["omega"]), tensors["awl_logvars"])
            _, r = forward(params, batch)
            lb = total_loss(r, learn, loss_config, rng)
            if not np.isfinite(lb.total):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {b}")
            grads = backward(params, batch, lb.grad_r)
            grads["omega"] = np.array(lb.grad_omega)
            grads["awl_logvars"] = lb.grad_logvars
            try:
                tensors, state = adam_step(tensors, grads, state)
            except ValueError as exc:
                raise TrainingDiverged(f"epoch {epoch}, batch {b}: {exc}") from exc
            sums += (lb.mse, lb.mmd, lb.acf, lb.total)
            n_batches += 1
        rec = EpochRecord(*(sums / n_batches))
        log.debug("epoch %d mse=%.6g mmd=%.6g acf=%.6g total=%.6g", epoch, rec.mse, rec.mmd, rec.acf, rec.total)
        history.append(rec)
    model.params = BackboneParams(model.params.kind, *(tensors[k] for k in PARAM_NAMES))
    model.learnables = GwnrLearnables(float(tensors["omega"]), tensors["awl_logvars"])
    return model, history


def residual_series(params: BackboneParams, series: MultiSeries, window_length: int) -> np.ndarray:
    """``T x D`` residuals from non-overlapping windows plus a tail window anchored at ``T - L``."""
    if series.T < window_length:
        raise ValueError(f"series of length {series.T} is shorter than the window length {window_length}")
    offsets = tiling_offsets(series.T, window_length)
    _, r = forward(params, windows_at(series, window_length, offsets))
    out = np.empty_like(series.values)
    for off, block in zip(offsets, r):
        out[off : off + window_length] = block
    return out


def _array_doc(a) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "values": [float(v) for v in a.ravel()]}


def _array_from(doc) -> np.ndarray:
    return np.asarray(doc["values"], dtype=np.float64).reshape(doc["shape"])


def checkpoint_dict(model: Model) -> dict:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "kind": model.params.kind,
        "window_length": int(model.window_length),
        "channels": int(model.channels),
        "hidden": int(model.params.hidden),
        "params": {name: _array_doc(getattr(model.params, name)) for name in PARAM_NAMES},
        "omega": float(model.learnables.omega),
        "awl_logvars": [float(v) for v in model.learnables.awl_logvars],
        "normalizer": None,
        "measurement_noise": None,
        "meta": model.meta,
    }
    if model.normalizer is not None:
        doc["normalizer"] = {
            "mean": [float(v) for v in model.normalizer.mean],
            "std": [float(v) for v in model.normalizer.std],
        }
    if model.measurement_noise is not None:
        doc["measurement_noise"] = [float(v) for v in model.measurement_noise]
    return doc


def model_from_dict(doc: dict) -> Model:
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {doc.get('format')!r}")
    params = BackboneParams(doc["kind"], *(_array_from(doc["params"][n]) for n in PARAM_NAMES))
    norm = doc.get("normalizer")
    noise = doc.get("measurement_noise")
    return Model(
        params=params,
        learnables=GwnrLearnables(doc["omega"], doc["awl_logvars"]),
        window_length=int(doc["window_length"]),
        channels=int(doc["channels"]),
        normalizer=None if norm is None else NormStats(np.asarray(norm["mean"]), np.asarray(norm["std"])),
        measurement_noise=None if noise is None else np.asarray(noise, dtype=np.float64),
        meta=dict(doc.get("meta", {})),
    )


def save_checkpoint(model: Model, path) -> None:
    Path(path).write_text(json.dumps(checkpoint_dict(model), indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path) -> Model:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

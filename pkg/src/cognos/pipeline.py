"""End-to-end runs: normalise, train, compute residuals, smooth, threshold, evaluate."""

from __future__ import annotations

import contextlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import diagnostics, kalman, metrics
from .backbone import Model, TrainConfig, new_model, residual_series, train
from .core import MultiSeries, apply_normalizer, fit_normalizer, make_windows
from .gwnr import TERMS, GwnrConfig

MODES = ("vanilla_mse", "gwnr", "gwnr_no_smooth", "mse_plus_smooth")
_REGULARIZED = {"gwnr", "gwnr_no_smooth"}
_SMOOTHED = {"gwnr", "mse_plus_smooth"}


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc


def mode_terms(mode: str) -> tuple:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    return TERMS if mode in _REGULARIZED else ("mse",)


def mode_smooths(mode: str) -> bool:
    mode_terms(mode)
    return mode in _SMOOTHED


@dataclass(frozen=True)
class RunConfig:
    mode: str = "gwnr"
    backbone: TrainConfig = field(default_factory=TrainConfig)
    gwnr: GwnrConfig = field(default_factory=GwnrConfig)
    lam: float = 1.0
    ratio: Optional[float] = None  # per-dataset; scoring refuses to run without it
    holdout_fraction: float = 0.2
    aggregate: str = "sum"

    def __post_init__(self):
        mode_terms(self.mode)
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in (0, 1)")

    @property
    def seed(self) -> int:
        return self.backbone.seed

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, backbone=replace(self.backbone, seed=seed))

    def loss_config(self) -> GwnrConfig:
        return replace(self.gwnr, terms=mode_terms(self.mode))

    def to_dict(self) -> dict:
        """Flat document; see :func:`config_from_dict` for the keys."""
        doc = {"mode": self.mode}
        for f in fields(TrainConfig):
            doc[f.name] = getattr(self.backbone, f.name)
        doc["bandwidth_multipliers"] = [float(b) for b in self.gwnr.bandwidth_multipliers]
        doc["lags"] = [int(k) for k in self.gwnr.lags]
        doc["target_sample_ratio"] = self.gwnr.target_sample_ratio
        doc["mmd_max_points"] = self.gwnr.mmd_max_points
        doc.update(
            {"lambda": self.lam, "ratio": self.ratio, "holdout_fraction": self.holdout_fraction, "aggregate": self.aggregate}
        )
        return doc


_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_GWNR_KEYS = {"bandwidth_multipliers", "lags", "target_sample_ratio", "mmd_max_points"}
_RUN_KEYS = {"mode", "lambda", "ratio", "holdout_fraction", "aggregate"}


def config_from_dict(doc: dict) -> RunConfig:
    """Build a :class:`RunConfig` from a flat mapping.

    Keys are the :class:`TrainConfig` field names, the GWNR settings
    ``bandwidth_multipliers``, ``lags``, ``target_sample_ratio`` and
    ``mmd_max_points``, plus ``mode``, ``lambda``, ``ratio``,
    ``holdout_fraction`` and ``aggregate``. Missing keys take defaults;
    unknown keys are an error.
    """
    unknown = set(doc) - _TRAIN_KEYS - _GWNR_KEYS - _RUN_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    backbone = TrainConfig(**{k: doc[k] for k in _TRAIN_KEYS if k in doc})
    gw = {k: doc[k] for k in _GWNR_KEYS if k in doc}
    for k in ("bandwidth_multipliers", "lags"):
        if k in gw:
            gw[k] = tuple(gw[k])
    run = {"mode": doc.get("mode", "gwnr"), "backbone": backbone, "gwnr": GwnrConfig(**gw)}
    for key, name in (("lambda", "lam"), ("ratio", "ratio"), ("holdout_fraction", "holdout_fraction"), ("aggregate", "aggregate")):
        if key in doc:
            run[name] = doc[key]
    return RunConfig(**run)


def load_config(path) -> RunConfig:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return config_from_dict(doc)


@dataclass
class TrainedStage:
    """Everything that depends only on the training data and the loss terms."""

    model: Model
    history: list
    holdout_before: np.ndarray  # held-out residuals with the initial weights
    holdout_after: np.ndarray
    train_residuals: np.ndarray

    @property
    def acf_before(self) -> list:
        return diagnostics.channel_profiles(self.holdout_before)

    @property
    def acf_after(self) -> list:
        return diagnostics.channel_profiles(self.holdout_after)


@dataclass
class RunResult:
    report: metrics.MetricsReport
    scores: kalman.ScoreSeries
    acf_before: list
    acf_after: list
    model: Model
    history: list
    predictions: np.ndarray
    test_residuals: np.ndarray


def fit_stage(config: RunConfig, train_series: MultiSeries) -> TrainedStage:
    """Normalise on ``train_series``, train on all but a held-out tail, and calibrate ``R_m``."""
    L = config.backbone.window_length
    with _stage("normalize"):
        stats = fit_normalizer(train_series)
        normed = apply_normalizer(train_series, stats)
        n_hold = max(L, int(round(config.holdout_fraction * normed.T)))
        if normed.T - n_hold < L:
            raise ValueError(f"training series of length {normed.T} too short for window {L} plus a held-out slice")
        fit_part = normed.slice(0, normed.T - n_hold)
        holdout = normed.slice(normed.T - n_hold, normed.T)
    with _stage("init"):
        model = new_model(config.backbone, normed.D)
        before = residual_series(model.params, holdout, L)
    with _stage("train"):
        windows = make_windows(fit_part, L, config.backbone.stride or L)
        model, history = train(model, windows, config.loss_config(), config.backbone)
    with _stage("calibrate"):
        train_res = residual_series(model.params, fit_part, L)
        model.normalizer = stats
        model.measurement_noise = kalman.estimate_measurement_noise(train_res)
        model.meta = {"terms": list(config.loss_config().terms)}
        after = residual_series(model.params, holdout, L)
    return TrainedStage(model, history, before, after, train_res)


def residuals_for(model: Model, test: MultiSeries) -> np.ndarray:
    normed = apply_normalizer(test, model.normalizer)
    return residual_series(model.params, normed, model.window_length)


def score_residuals(model: Model, residuals, smooth: bool, lam: float, aggregate: str = "sum") -> kalman.ScoreSeries:
    if not smooth:
        return kalman.raw_scores(residuals, aggregate)
    cfg = kalman.SmootherConfig(lam=lam, r_m=model.measurement_noise, aggregate=aggregate)
    return kalman.smooth_residuals(residuals, cfg)


def score_stage(
    stage: TrainedStage,
    test: MultiSeries,
    mode: str,
    lam: float,
    ratio: Optional[float],
    aggregate: str = "sum",
    residuals: Optional[np.ndarray] = None,
) -> RunResult:
    if test.labels is None:
        raise PipelineError("score", ValueError("test series needs labels"))
    with _stage("residuals"):
        res = residuals_for(stage.model, test) if residuals is None else residuals
    with _stage("smooth"):
        scores = score_residuals(stage.model, res, mode_smooths(mode), lam, aggregate)
    with _stage("evaluate"):
        if ratio is None:
            raise ValueError("no threshold ratio configured; set 'ratio' for this dataset")
        pred = metrics.threshold_by_ratio(scores.aggregated, ratio)
        report = metrics.evaluate(pred, test.labels)
    return RunResult(report, scores, stage.acf_before, stage.acf_after, stage.model, stage.history, pred, res)


def run(config: RunConfig, train_series: MultiSeries, test: MultiSeries) -> RunResult:
    """Train per ``config.mode`` and score the labelled ``test`` series."""
    if test.labels is None:
        raise PipelineError("input", ValueError("test series needs labels"))
    stage = fit_stage(config, train_series)
    return score_stage(stage, test, config.mode, config.lam, config.ratio, config.aggregate)


def ablation(config: RunConfig, train_series: MultiSeries, test: MultiSeries) -> dict:
    """All four modes; the two trainings are shared by the smoothing on/off pairs."""
    stages = {}
    out = {}
    for mode in MODES:
        terms = mode_terms(mode)
        if terms not in stages:
            stages[terms] = fit_stage(replace(config, mode=mode), train_series)
        out[mode] = score_stage(stages[terms], test, mode, config.lam, config.ratio, config.aggregate)
    return out

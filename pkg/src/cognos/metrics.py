"""Thresholding, point-adjusted and affiliation precision/recall, and their average."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

Segment = tuple  # (start, end), half-open


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f: float


@dataclass(frozen=True)
class MetricsReport:
    adjusted: PRF
    affiliation: PRF
    average: PRF

    def to_dict(self) -> dict:
        out = {}
        for name in ("adjusted", "affiliation", "average"):
            prf = getattr(self, name)
            out[f"{name}_precision"] = prf.precision
            out[f"{name}_recall"] = prf.recall
            out[f"{name}_f"] = prf.f
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricsReport":
        parts = {
            name: PRF(doc[f"{name}_precision"], doc[f"{name}_recall"], doc[f"{name}_f"])
            for name in ("adjusted", "affiliation", "average")
        }
        return cls(**parts)


def f_score(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


def threshold_by_ratio(scores, ratio: float) -> np.ndarray:
    """Flag the ``ceil(ratio*T)`` highest scores; ties go to the earlier index."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.size < 1:
        raise ValueError("empty score sequence")
    k = math.ceil(ratio * scores.size)
    order = np.argsort(-scores, kind="stable")
    pred = np.zeros(scores.size, dtype=np.int64)
    pred[order[:k]] = 1
    return pred


def labels_to_segments(labels) -> list:
    labels = np.asarray(labels).astype(np.int64).ravel()
    padded = np.concatenate([[0], labels, [0]])
    edges = np.flatnonzero(np.diff(padded))
    return [(int(s), int(e)) for s, e in zip(edges[::2], edges[1::2])]


def segments_to_labels(segments, T: int) -> np.ndarray:
    out = np.zeros(T, dtype=np.int64)
    for s, e in segments:
        out[s:e] = 1
    return out


def point_adjust(pred, gt_segments) -> np.ndarray:
    """Mark a whole ground-truth segment detected when any of its points is predicted."""
    adjusted = np.asarray(pred).astype(np.int64).ravel().copy()
    for s, e in gt_segments:
        if adjusted[s:e].any():
            adjusted[s:e] = 1
    return adjusted


def prf(pred, gt) -> PRF:
    pred = np.asarray(pred).astype(bool).ravel()
    gt = np.asarray(gt).astype(bool).ravel()
    if pred.shape != gt.shape:
        raise ValueError(f"prediction length {pred.size} != label length {gt.size}")
    tp = int(np.sum(pred & gt))
    fp = int(np.sum(pred & ~gt))
    fn = int(np.sum(~pred & gt))
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 1.0
    return PRF(p, r, f_score(p, r))


def adjusted_prf(pred, gt_labels) -> PRF:
    return prf(point_adjust(pred, labels_to_segments(gt_labels)), gt_labels)


# --- affiliation -----------------------------------------------------------
#
# Events are half-open intervals on the real line. Every ground-truth event
# owns the part of [0, T) closer to it than to any other event (cut at the
# midpoints of the gaps). Inside a zone Z = [z0, z1) around event J:
#
# precision: for a predicted point x, the probability that a point drawn
#   uniformly from Z lies at least as far from J as x does;
# recall: for a ground-truth point y, the probability that a uniform point
#   of Z lies at least as far from y as the nearest prediction in Z does.
#
# Both integrands are piecewise linear in the position, so they are
# integrated exactly with the trapezoid rule between breakpoints.


def affiliation_zones(gt_segments: Sequence[Segment], T: float) -> list:
    zones = []
    n = len(gt_segments)
    for j, (s, e) in enumerate(gt_segments):
        left = 0.0 if j == 0 else 0.5 * (gt_segments[j - 1][1] + s)
        right = float(T) if j == n - 1 else 0.5 * (e + gt_segments[j + 1][0])
        zones.append((left, right))
    return zones


def _clip(interval, zone):
    lo, hi = max(interval[0], zone[0]), min(interval[1], zone[1])
    return (lo, hi) if lo < hi else None


def _integrate(f, lo: float, hi: float, breaks) -> float:
    pts = sorted({lo, hi, *(b for b in breaks if lo < b < hi)})
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        total += 0.5 * (b - a) * (f(a) + f(b))
    return total


def _dist_to_interval(x: float, iv) -> float:
    if x < iv[0]:
        return iv[0] - x
    if x > iv[1]:
        return x - iv[1]
    return 0.0


def _precision_survival_outside(x: float, J, Z) -> float:
    """Survival for a point outside ``J``, continued to the edges of ``J``.

    The survival jumps from 1 inside ``J`` to ``1 - |J|/|Z|`` just outside,
    so the parts before and after ``J`` are integrated separately.
    """
    d = _dist_to_interval(x, J)
    width = Z[1] - Z[0]
    closer = (J[1] - J[0]) + min(d, J[0] - Z[0]) + min(d, Z[1] - J[1])
    return 1.0 - closer / width


def _recall_survival(y: float, preds, Z) -> float:
    d = min(_dist_to_interval(y, iv) for iv in preds)
    if d == 0.0:
        return 1.0
    width = Z[1] - Z[0]
    return 1.0 - (min(d, y - Z[0]) + min(d, Z[1] - y)) / width


def _zone_precision(preds, J, Z) -> float:
    m_left, m_right = J[0] - Z[0], Z[1] - J[1]
    breaks = (J[0] - m_left, J[0] - m_right, J[1] + m_left, J[1] + m_right)
    outside = lambda x: _precision_survival_outside(x, J, Z)
    num = 0.0
    for a, b in preds:
        num += max(0.0, min(b, J[1]) - max(a, J[0]))
        if a < J[0]:
            num += _integrate(outside, a, min(b, J[0]), breaks)
        if b > J[1]:
            num += _integrate(outside, max(a, J[1]), b, breaks)
    return num / sum(b - a for a, b in preds)


def _zone_recall(preds, J, Z) -> float:
    breaks = [J[0], J[1]]
    for i, (a, b) in enumerate(preds):
        breaks += [a, b, 0.5 * (a + Z[0]), 0.5 * (b + Z[0]), 0.5 * (a + Z[1]), 0.5 * (b + Z[1])]
        if i + 1 < len(preds):
            breaks.append(0.5 * (b + preds[i + 1][0]))
    num = _integrate(lambda y: _recall_survival(y, preds, Z), J[0], J[1], breaks)
    return num / (J[1] - J[0])


def affiliation_prf(pred_segments: Sequence[Segment], gt_segments: Sequence[Segment], T: int) -> PRF:
    """Affiliation precision/recall against the uniform-random baseline in each zone.

    Precision averages over zones that contain predictions and is 0 when no
    zone does; recall averages over every zone, counting empty zones as 0.
    """
    if not gt_segments:
        raise ValueError("affiliation metrics are undefined without ground-truth events")
    for segs in (pred_segments, gt_segments):
        for s, e in segs:
            if not 0 <= s < e <= T:
                raise ValueError(f"event [{s}, {e}) outside [0, {T})")
    zones = affiliation_zones(gt_segments, T)
    precisions, recalls = [], []
    for J, Z in zip(gt_segments, zones):
        J = (float(J[0]), float(J[1]))
        preds = [c for c in (_clip((float(a), float(b)), Z) for a, b in pred_segments) if c is not None]
        if not preds:
            recalls.append(0.0)
            continue
        precisions.append(_zone_precision(preds, J, Z))
        recalls.append(_zone_recall(preds, J, Z))
    p = sum(precisions) / len(precisions) if precisions else 0.0
    r = sum(recalls) / len(recalls)
    return PRF(p, r, f_score(p, r))


def average_metrics(adjusted: PRF, affiliation: PRF) -> PRF:
    return PRF(
        0.5 * (adjusted.precision + affiliation.precision),
        0.5 * (adjusted.recall + affiliation.recall),
        0.5 * (adjusted.f + affiliation.f),
    )


def evaluate(pred, gt_labels) -> MetricsReport:
    """Full report from binary predictions and binary ground truth."""
    pred = np.asarray(pred).astype(np.int64).ravel()
    gt_labels = np.asarray(gt_labels).astype(np.int64).ravel()
    if pred.shape != gt_labels.shape:
        raise ValueError(f"prediction length {pred.size} != label length {gt_labels.size}")
    gt_segments = labels_to_segments(gt_labels)
    adjusted = adjusted_prf(pred, gt_labels)
    affiliation = affiliation_prf(labels_to_segments(pred), gt_segments, pred.size)
    return MetricsReport(adjusted, affiliation, average_metrics(adjusted, affiliation))


def evaluate_scores(scores, gt_labels, ratio: float) -> MetricsReport:
    return evaluate(threshold_by_ratio(scores, ratio), gt_labels)

"""Independent oracles and shared fixture builders for the test suite."""

import json
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded

from cognos import ingest, pipeline

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
DATA = Path(__file__).resolve().parent / "data"


def map_random_walk(obs, q, r):
    """Batch MAP states of s_t = s_{t-1} + w, obs_t = s_t + v.

    Minimises sum (obs - s)^2 / r + sum (s_t - s_{t-1})^2 / q, i.e. solves the
    symmetric tridiagonal system (I/r + D'D/q) s = obs/r.
    """
    obs = np.asarray(obs, dtype=np.float64)
    T = obs.size
    diag = np.full(T, 1.0 / r)
    if T > 1:
        diag[0] += 1.0 / q
        diag[-1] += 1.0 / q
        diag[1:-1] += 2.0 / q
    off = np.full(T, -1.0 / q)
    ab = np.vstack([off, diag, off])
    ab[0, 0] = 0.0
    ab[2, -1] = 0.0
    return solve_banded((1, 1), ab, obs / r)


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f(x)
        flat[i] = old - h
        down = f(x)
        flat[i] = old
        gf[i] = (up - down) / (2 * h)
    return g


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(floor, np.max(np.abs(a)), np.max(np.abs(b))))


def brute_point_adjust(pred, gt):
    pred = [int(v) for v in pred]
    out = list(pred)
    T = len(gt)
    t = 0
    while t < T:
        if gt[t]:
            s = t
            while t < T and gt[t]:
                t += 1
            if any(pred[s:t]):
                for i in range(s, t):
                    out[i] = 1
        else:
            t += 1
    return out


def brute_prf(pred, gt):
    tp = fp = fn = 0
    for p, g in zip(pred, gt):
        if p and g:
            tp += 1
        elif p:
            fp += 1
        elif g:
            fn += 1
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 1.0
    f = 0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec)
    return prec, rec, f


def load_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


# --- the synthetic acceptance fixture -----------------------------------------

TEST_SEED_OFFSET = 10_000


def fixture_specs(seed):
    train = ingest.SyntheticSpec.from_json(CONFIGS / "fixture_train.json")
    test = ingest.SyntheticSpec.from_json(CONFIGS / "fixture_test.json")
    return replace(train, seed=seed), replace(test, seed=seed + TEST_SEED_OFFSET)


def fixture_data(seed):
    train, test = fixture_specs(seed)
    return ingest.generate_synthetic(train), ingest.generate_synthetic(test)


def fixture_config(seed=0, **overrides):
    cfg = pipeline.load_config(CONFIGS / "fixture_run.json").with_seed(seed)
    return replace(cfg, **overrides) if overrides else cfg

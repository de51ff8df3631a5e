"""Per-channel random-walk Kalman filter and RTS smoother over residuals.

Each channel is treated as a scalar state-space model

    s_t = s_{t-1} + w_t,   w_t ~ N(0, q)
    r_t = s_t + v_t,       v_t ~ N(0, R)

with ``q = lambda * R`` and ``R`` the training-residual variance. The
anomaly score is the squared smoothed state, summed over channels.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

NOISE_FLOOR = 1e-12
THREADS_ENV = "COGNOS_THREADS"


@dataclass(frozen=True)
class SmootherConfig:
    lam: float
    r_m: np.ndarray
    init_policy: str = "first_obs"
    aggregate: str = "sum"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        r_m = np.maximum(np.asarray(self.r_m, dtype=np.float64).ravel(), NOISE_FLOOR)
        object.__setattr__(self, "r_m", r_m)
        if self.init_policy != "first_obs":
            raise ValueError(f"unknown init policy {self.init_policy!r}")
        if self.aggregate not in ("sum", "mean"):
            raise ValueError(f"unknown aggregation {self.aggregate!r}")

    @property
    def q_p(self) -> np.ndarray:
        return self.lam * self.r_m


@dataclass(frozen=True)
class FilterTrace:
    filtered_state: np.ndarray
    filtered_cov: np.ndarray
    predicted_cov: np.ndarray


@dataclass(frozen=True)
class ScoreSeries:
    per_channel: np.ndarray
    aggregated: np.ndarray


def estimate_measurement_noise(train_residuals) -> np.ndarray:
    r = np.asarray(train_residuals, dtype=np.float64)
    if r.ndim == 1:
        r = r[:, None]
    if r.shape[0] < 2:
        raise ValueError("need at least two residuals per channel to estimate the noise variance")
    return np.maximum(r.var(axis=0), NOISE_FLOOR)


def kf_forward(obs, q_p: float, r_m: float, init_policy: str = "first_obs") -> FilterTrace:
    """Scalar Kalman filter with unit transition and observation.

    The state starts at the first observation with variance ``r_m``.
    ``predicted_cov[t]`` is ``P_{t|t-1}`` (index 0 holds ``P_{0|0}``).
    """
    obs = np.asarray(obs, dtype=np.float64).ravel()
    T = obs.size
    if T < 1:
        raise ValueError("empty observation sequence")
    if init_policy != "first_obs":
        raise ValueError(f"unknown init policy {init_policy!r}")
    if not q_p >= 0 or not r_m > 0:
        raise ValueError(f"need q_p >= 0 and r_m > 0, got q_p={q_p}, r_m={r_m}")
    bad = np.flatnonzero(~np.isfinite(obs))
    if bad.size:
        raise ValueError(f"non-finite observation at index {bad[0]}")

    xs = obs.tolist()
    s_f = [0.0] * T
    p_f = [0.0] * T
    p_p = [0.0] * T
    s, p = xs[0], float(r_m)
    s_f[0], p_f[0], p_p[0] = s, p, p
    q, R = float(q_p), float(r_m)
    for t in range(1, T):
        pp = p + q
        k = pp / (pp + R)
        s = s + k * (xs[t] - s)
        p = (1.0 - k) * pp
        s_f[t], p_f[t], p_p[t] = s, p, pp
    return FilterTrace(np.array(s_f), np.array(p_f), np.array(p_p))


def rts_backward(trace: FilterTrace, return_cov: bool = False):
    """Rauch-Tung-Striebel pass; returns smoothed states (and covariances if asked)."""
    s_f = trace.filtered_state.tolist()
    p_f = trace.filtered_cov.tolist()
    p_p = trace.predicted_cov.tolist()
    T = len(s_f)
    if not (len(p_f) == len(p_p) == T):
        raise ValueError("inconsistent filter trace lengths")
    s_s = list(s_f)
    p_s = list(p_f)
    for t in range(T - 2, -1, -1):
        pp = p_p[t + 1]
        if pp <= 0:
            raise ValueError(f"non-positive predicted covariance at index {t + 1}")
        g = p_f[t] / pp
        s_s[t] = s_f[t] + g * (s_s[t + 1] - s_f[t])
        p_s[t] = p_f[t] + g * g * (p_s[t + 1] - pp)
    if return_cov:
        return np.array(s_s), np.array(p_s)
    return np.array(s_s)


def smooth_channel(obs, q_p: float, r_m: float, init_policy: str = "first_obs") -> np.ndarray:
    return rts_backward(kf_forward(obs, q_p, r_m, init_policy))


def _thread_cap(n_channels: int) -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
        return max(1, min(cap, n_channels))
    return max(1, min(os.cpu_count() or 1, n_channels))


def smooth_states(residuals, config: SmootherConfig) -> np.ndarray:
    r = np.asarray(residuals, dtype=np.float64)
    if r.ndim == 1:
        r = r[:, None]
    D = r.shape[1]
    if config.r_m.size != D:
        raise ValueError(f"residuals have {D} channels, smoother configured for {config.r_m.size}")
    q_p = config.q_p
    jobs = [(r[:, d], float(q_p[d]), float(config.r_m[d])) for d in range(D)]
    workers = _thread_cap(D)
    if workers == 1:
        cols = [smooth_channel(*job, config.init_policy) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cols = list(pool.map(lambda job: smooth_channel(*job, config.init_policy), jobs))
    return np.column_stack(cols)


def score_from_states(states, aggregate: str = "sum") -> ScoreSeries:
    per_channel = np.square(np.asarray(states, dtype=np.float64))
    if per_channel.ndim == 1:
        per_channel = per_channel[:, None]
    agg = per_channel.sum(axis=1) if aggregate == "sum" else per_channel.mean(axis=1)
    return ScoreSeries(per_channel, agg)


def smooth_residuals(residuals, config: SmootherConfig) -> ScoreSeries:
    return score_from_states(smooth_states(residuals, config), config.aggregate)


def raw_scores(residuals, aggregate: str = "sum") -> ScoreSeries:
    """Unsmoothed baseline: squared residuals aggregated over channels."""
    return score_from_states(residuals, aggregate)


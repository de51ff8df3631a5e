"""Residual regularisation losses with analytic gradients.

Three terms are evaluated on the reconstruction residuals ``r = x - x_hat``
(shape ``B x L x D``):

* ``mse``  - mean of squared residual elements;
* ``mmd``  - biased (V-statistic) maximum mean discrepancy between the
  flattened residual scalars and samples from ``N(0, sigma*^2)`` under a
  multi-bandwidth RBF kernel, with ``sigma* = exp(omega)`` learnable;
* ``acf``  - squared lag-k autocorrelation of every (window, channel)
  sequence, averaged over sequences and summed over lags.

They are combined by homoscedastic-uncertainty weighting,
``total = sum_i exp(-2 v_i) / 2 * L_i + v_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

TERMS = ("mse", "mmd", "acf")
DEFAULT_MULTIPLIERS = (0.1, 0.5, 1.0, 2.0, 5.0)
DEFAULT_LAGS = tuple(range(1, 11))
ACF_DEGENERATE = 1e-12


@dataclass(frozen=True)
class GwnrConfig:
    bandwidth_multipliers: Sequence[float] = DEFAULT_MULTIPLIERS
    lags: Sequence[int] = DEFAULT_LAGS
    target_sample_ratio: float = 1.0
    # Cap on residual scalars entering the MMD term per batch (random subset); None uses all.
    mmd_max_points: Optional[int] = None
    terms: Sequence[str] = TERMS

    def __post_init__(self):
        if not self.bandwidth_multipliers or any(b <= 0 for b in self.bandwidth_multipliers):
            raise ValueError("bandwidth multipliers must be positive")
        if not self.lags or any(int(k) < 1 for k in self.lags):
            raise ValueError("lags must be a non-empty set of positive integers")
        if self.target_sample_ratio <= 0:
            raise ValueError("target_sample_ratio must be positive")
        unknown = set(self.terms) - set(TERMS)
        if unknown or "mse" not in self.terms:
            raise ValueError(f"terms must include 'mse' and be drawn from {TERMS}, got {tuple(self.terms)}")

    @property
    def regularized(self) -> bool:
        return len(self.terms) > 1


@dataclass
class GwnrLearnables:
    omega: float = 0.0
    awl_logvars: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.awl_logvars = np.asarray(self.awl_logvars, dtype=np.float64).reshape(3)
        if not (np.isfinite(self.omega) and np.all(np.isfinite(self.awl_logvars))):
            raise ValueError("learnables must be finite")

    @property
    def sigma_star(self) -> float:
        return float(np.exp(self.omega))

    def copy(self) -> "GwnrLearnables":
        return GwnrLearnables(float(self.omega), self.awl_logvars.copy())


@dataclass
class LossBreakdown:
    mse: float
    mmd: float
    acf: float
    total: float
    grad_r: np.ndarray
    grad_omega: float
    grad_logvars: np.ndarray


def mse_loss(r) -> tuple[float, np.ndarray]:
    r = np.asarray(r, dtype=np.float64)
    if r.size == 0:
        raise ValueError("empty residual batch")
    return float(np.mean(r * r)), 2.0 * r / r.size


def rbf_kernel(a, b, sigma_star: float, multipliers=DEFAULT_MULTIPLIERS):
    """Sum over bandwidths ``B_j * sigma_star`` of ``exp(-(a-b)^2 / (2 (B_j sigma_star)^2))``."""
    if not sigma_star > 0:
        raise ValueError(f"sigma_star must be positive, got {sigma_star}")
    d2 = np.square(np.subtract(a, b, dtype=np.float64))
    out = sum(np.exp(-d2 / (2.0 * (m * sigma_star) ** 2)) for m in multipliers)
    return out if np.ndim(out) else float(out)


def sample_target(n: int, sigma_star: float, rng: np.random.Generator) -> np.ndarray:
    """``sigma_star * eps`` with standard-normal ``eps``, so ``dS/domega = S``."""
    if n < 1:
        raise ValueError("need at least one target sample")
    return sigma_star * rng.standard_normal(n)


def _kernel_stats(x, y, sigma_star, multipliers):
    """Sum of kernel values ``K`` and ``W = sum_j exp(.)/s_j^2`` on the difference grid."""
    diff = x[:, None] - y[None, :]
    d2 = diff * diff
    K = np.zeros_like(d2)
    W = np.zeros_like(d2)
    for m in multipliers:
        s2 = (m * sigma_star) ** 2
        e = np.exp(d2 * (-0.5 / s2))
        K += e
        W += e / s2
    return diff, d2, K, W


def mmd_loss(R, S, sigma_star: float, multipliers=DEFAULT_MULTIPLIERS):
    """Biased MMD^2 between scalar samples ``R`` and target samples ``S``.

    Returns ``(value, grad_R, grad_omega)``. ``S`` is taken to be
    ``sigma_star * eps`` for fixed ``eps``; the omega gradient therefore
    runs through both the kernel bandwidths and the samples themselves.
    """
    if not sigma_star > 0:
        raise ValueError(f"sigma_star must be positive, got {sigma_star}")
    R = np.asarray(R, dtype=np.float64).ravel()
    S = np.asarray(S, dtype=np.float64).ravel()
    n, m = R.size, S.size
    if n < 1 or m < 1:
        raise ValueError("MMD needs non-empty sample sets")

    d_rr, q_rr, K_rr, W_rr = _kernel_stats(R, R, sigma_star, multipliers)
    d_ss, q_ss, K_ss, W_ss = _kernel_stats(S, S, sigma_star, multipliers)
    d_rs, q_rs, K_rs, W_rs = _kernel_stats(R, S, sigma_star, multipliers)

    value = K_rr.sum() / n**2 + K_ss.sum() / m**2 - 2.0 * K_rs.sum() / (n * m)

    # d kappa(a, b) / da = -(a - b) W ;  d kappa / d omega (bandwidth path) = (a - b)^2 W
    g_R = (-2.0 / n**2) * (d_rr * W_rr).sum(axis=1) + (2.0 / (n * m)) * (d_rs * W_rs).sum(axis=1)
    g_S = (-2.0 / m**2) * (d_ss * W_ss).sum(axis=1) - (2.0 / (n * m)) * (d_rs * W_rs).sum(axis=0)

    g_omega_bw = (q_rr * W_rr).sum() / n**2 + (q_ss * W_ss).sum() / m**2 - 2.0 * (q_rs * W_rs).sum() / (n * m)
    g_omega = g_omega_bw + float(g_S @ S)
    return float(value), g_R, float(g_omega)


def acf_coeff(x, k: int) -> tuple[float, np.ndarray]:
    """Lag-``k`` autocorrelation of a 1-d sequence and its gradient.

    Returns 0 with a zero gradient when the centred sum of squares is
    below ``1e-12``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    rho, grad = _acf_batch(x[None, :, None], [k])
    return float(rho[0, 0, 0]), grad[0][0, :, 0]


def _acf_batch(r: np.ndarray, lags):
    """Autocorrelations ``rho[k_idx, b, d]`` and per-lag gradients ``d rho / d r``."""
    B, L, D = r.shape
    for k in lags:
        if not 1 <= k < L:
            raise ValueError(f"lag {k} must satisfy 1 <= k < window length {L}")
    c = r - r.mean(axis=1, keepdims=True)
    den = np.sum(c * c, axis=1)  # B x D
    ok = den >= ACF_DEGENERATE
    safe = np.where(ok, den, 1.0)
    rhos, grads = [], []
    for k in lags:
        num = np.sum(c[:, k:, :] * c[:, :-k, :], axis=1)
        rho = np.where(ok, num / safe, 0.0)
        dnum = np.zeros_like(c)
        dnum[:, k:, :] += c[:, :-k, :]
        dnum[:, :-k, :] += c[:, k:, :]
        g_c = (dnum - 2.0 * rho[:, None, :] * c) / safe[:, None, :]
        g = g_c - g_c.mean(axis=1, keepdims=True)
        g *= ok[:, None, :]
        rhos.append(rho)
        grads.append(g)
    return np.stack(rhos), grads


def acf_loss(r, lags=DEFAULT_LAGS) -> tuple[float, np.ndarray]:
    r = np.asarray(r, dtype=np.float64)
    B, _, D = r.shape
    rho, grads = _acf_batch(r, lags)
    value = float(np.sum(np.mean(rho * rho, axis=(1, 2))))
    grad = np.zeros_like(r)
    for i, g in enumerate(grads):
        grad += (2.0 / (B * D)) * rho[i][:, None, :] * g
    return value, grad


def awl_combine(losses, logvars):
    """Uncertainty-weighted sum; returns ``(total, d total / d losses, d total / d logvars)``."""
    losses = np.asarray(losses, dtype=np.float64)
    v = np.asarray(logvars, dtype=np.float64)
    if not np.all(np.isfinite(losses)):
        raise ValueError(f"non-finite loss component in {losses}")
    w = 0.5 * np.exp(-2.0 * v)
    total = float(np.sum(w * losses + v))
    return total, w, 1.0 - 2.0 * w * losses


def total_loss(r, learnables: GwnrLearnables, config: GwnrConfig, rng: np.random.Generator) -> LossBreakdown:
    """Evaluate all three terms on ``r`` and combine the active ones.

    With only ``mse`` active the total is the plain MSE and the learnables
    receive zero gradient. Otherwise the active terms go through
    :func:`awl_combine` using their slots of ``awl_logvars``.
    """
    r = np.asarray(r, dtype=np.float64)
    mse, g_mse = mse_loss(r)
    acf, g_acf = acf_loss(r, config.lags)

    flat = r.ravel()
    if config.mmd_max_points is not None and flat.size > config.mmd_max_points:
        idx = rng.choice(flat.size, size=config.mmd_max_points, replace=False)
    else:
        idx = None
    R = flat if idx is None else flat[idx]
    n_target = max(1, int(round(config.target_sample_ratio * R.size)))
    S = sample_target(n_target, learnables.sigma_star, rng)
    mmd, g_R, g_omega_mmd = mmd_loss(R, S, learnables.sigma_star, config.bandwidth_multipliers)
    g_mmd = np.zeros(flat.size)
    if idx is None:
        g_mmd += g_R
    else:
        g_mmd[idx] += g_R
    g_mmd = g_mmd.reshape(r.shape)

    values = np.array([mse, mmd, acf])
    grads = (g_mse, g_mmd, g_acf)
    grad_logvars = np.zeros(3)
    if not config.regularized:
        return LossBreakdown(mse, mmd, acf, mse, g_mse, 0.0, grad_logvars)

    active = np.array([t in config.terms for t in TERMS])
    total, d_losses, d_v = awl_combine(values[active], learnables.awl_logvars[active])
    grad_r = np.zeros_like(r)
    weights = np.zeros(3)
    weights[active] = d_losses
    for w, g in zip(weights, grads):
        if w:
            grad_r += w * g
    grad_logvars[active] = d_v
    grad_omega = weights[1] * g_omega_mmd
    return LossBreakdown(mse, mmd, acf, total, grad_r, float(grad_omega), grad_logvars)

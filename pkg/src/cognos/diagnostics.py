"""Residual whiteness and Gaussianity diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .gwnr import acf_coeff


@dataclass(frozen=True)
class AcfProfile:
    coefficients: np.ndarray  # rho_1 .. rho_K
    confidence_bound: float
    within_band: np.ndarray

    @property
    def lags(self) -> np.ndarray:
        return np.arange(1, self.coefficients.size + 1)

    @property
    def energy(self) -> float:
        """Sum of squared coefficients over all lags."""
        return float(np.sum(self.coefficients**2))


@dataclass(frozen=True)
class QqData:
    theoretical_quantiles: np.ndarray
    sample_quantiles: np.ndarray
    sample_variance: float


@dataclass(frozen=True)
class Verdict:
    passed: bool
    worst_lag: int
    worst_value: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} worst_lag={self.worst_lag} rho={self.worst_value:.6g}"


def white_noise_bound(n: int, alpha: float = 0.05) -> float:
    """Half-width ``z_{alpha/2} / sqrt(n)`` of the white-noise ACF band."""
    return float(ndtri(1.0 - alpha / 2.0) / np.sqrt(n))


def acf_profile(residuals, max_lag: int = 10, alpha: float = 0.05) -> AcfProfile:
    x = np.asarray(residuals, dtype=np.float64).ravel()
    if max_lag >= x.size:
        raise ValueError(f"max_lag {max_lag} must be smaller than the series length {x.size}")
    if max_lag < 1:
        raise ValueError("max_lag must be at least 1")
    rho = np.array([acf_coeff(x, k)[0] for k in range(1, max_lag + 1)])
    bound = white_noise_bound(x.size, alpha)
    return AcfProfile(rho, bound, np.abs(rho) <= bound)


def qq_data(residuals, standardize: bool = True) -> QqData:
    """Normal Q-Q pairs with plotting positions ``(i - 0.5) / N``.

    With ``standardize`` the theoretical quantiles are mapped onto the
    sample mean and (population) standard deviation, so points on
    ``y = x`` indicate a Gaussian shape.
    """
    x = np.sort(np.asarray(residuals, dtype=np.float64).ravel())
    n = x.size
    if n < 2:
        raise ValueError("need at least two residuals for a Q-Q plot")
    z = ndtri((np.arange(1, n + 1) - 0.5) / n)
    var = float(x.var())
    if standardize:
        z = x.mean() + np.sqrt(var) * z
    return QqData(z, x, var)


def whiteness_verdict(profile: AcfProfile) -> Verdict:
    worst = int(np.argmax(np.abs(profile.coefficients)))
    return Verdict(bool(np.all(profile.within_band)), worst + 1, float(profile.coefficients[worst]))


def write_acf(profile: AcfProfile, path) -> None:
    rows = np.column_stack([profile.lags, profile.coefficients])
    np.savetxt(path, rows, fmt=["%d", "%.17g"], delimiter=" ")


def write_qq(qq: QqData, path) -> None:
    rows = np.column_stack([qq.theoretical_quantiles, qq.sample_quantiles])
    np.savetxt(path, rows, fmt="%.17g", delimiter=" ")


def channel_profiles(residuals, max_lag: int = 10, alpha: float = 0.05) -> list:
    r = np.asarray(residuals, dtype=np.float64)
    if r.ndim == 1:
        r = r[:, None]
    return [acf_profile(r[:, d], max_lag, alpha) for d in range(r.shape[1])]


def mean_acf_energy(residuals, max_lag: int = 10) -> float:
    """Channel-averaged sum of squared ACF coefficients at lags ``1..max_lag``."""
    return float(np.mean([p.energy for p in channel_profiles(residuals, max_lag)]))


def write_channel_files(residuals, prefix, names=None, max_lag: int = 10, alpha: float = 0.05) -> list:
    """Write ``<prefix>.<channel>.acf.txt`` and ``.qq.txt`` per channel; return the verdicts."""
    r = np.asarray(residuals, dtype=np.float64)
    if r.ndim == 1:
        r = r[:, None]
    names = names or [f"ch{d}" for d in range(r.shape[1])]
    prefix = Path(prefix)
    verdicts = []
    for d, name in enumerate(names):
        profile = acf_profile(r[:, d], max_lag, alpha)
        write_acf(profile, f"{prefix}.{name}.acf.txt")
        write_qq(qq_data(r[:, d]), f"{prefix}.{name}.qq.txt")
        verdicts.append(whiteness_verdict(profile))
    return verdicts

"""Bivariate Gaussian kernels evaluated in log space.

Every rule and risk formula in the package is a ratio of sums of these
densities, so everything here returns logs and the callers aggregate with
:func:`log_sum_exp`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class NoiseSpec:
    """Noise standard deviations of the primary and auxiliary sequences.

    ``rho_corr`` is the correlation between the two observations of one
    index; it is 0 for the independent model.
    """

    sigma1: float = 1.0
    sigma2: float = 1.0
    rho_corr: float = 0.0

    def __post_init__(self):
        for name in ("sigma1", "sigma2", "rho_corr"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("noise standard deviations must be positive")
        if abs(self.rho_corr) >= 1:
            raise ValueError(f"correlation must lie in (-1, 1), got {self.rho_corr}")

    @property
    def independent(self) -> bool:
        return self.rho_corr == 0.0

    def covariance(self) -> np.ndarray:
        off = self.rho_corr * self.sigma1 * self.sigma2
        return np.array([[self.sigma1**2, off], [off, self.sigma2**2]])


def _check_finite(*values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise ValueError("density arguments must be finite")


def log_density_indep(x1, x2, t1, t2, noise: NoiseSpec):
    """Log density of independent N(t1, sigma1^2) x N(t2, sigma2^2) at (x1, x2).

    Broadcasts over array arguments.
    """
    if not noise.independent:
        raise ValueError("log_density_indep requires rho_corr == 0")
    _check_finite(x1, x2, t1, t2)
    z1 = (np.subtract(x1, t1)) / noise.sigma1
    z2 = (np.subtract(x2, t2)) / noise.sigma2
    out = (
        -LOG_2PI
        - math.log(noise.sigma1)
        - math.log(noise.sigma2)
        - 0.5 * (z1 * z1 + z2 * z2)
    )
    return out if np.ndim(out) else float(out)


def log_density_corr(x1, x2, t1, t2, noise: NoiseSpec):
    """Log density of the correlated bivariate normal with mean (t1, t2).

    With ``rho_corr == 0`` this is the same expression as
    :func:`log_density_indep`.
    """
    _check_finite(x1, x2, t1, t2)
    r = noise.rho_corr
    one_m_r2 = 1.0 - r * r
    z1 = (np.subtract(x1, t1)) / noise.sigma1
    z2 = (np.subtract(x2, t2)) / noise.sigma2
    quad = (z1 * z1 - 2.0 * r * z1 * z2 + z2 * z2) / one_m_r2
    out = (
        -LOG_2PI
        - math.log(noise.sigma1)
        - math.log(noise.sigma2)
        - 0.5 * math.log(one_m_r2)
        - 0.5 * quad
    )
    return out if np.ndim(out) else float(out)


def log_sum_exp(values, axis=None):
    """``log(sum(exp(values)))`` by max-shifting.

    Slices that are entirely ``-inf`` give ``-inf``.
    """
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        raise ValueError("log_sum_exp of an empty sequence")
    m = np.max(a, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - shift), axis=axis, keepdims=True)) + shift
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def density_ratios(log_p, weights, log_rho=-np.inf):
    """Row-wise ratios of weighted density sums, computed without leaving log space.

    For each row ``i`` with densities ``p_ij = exp(log_p[i, j])`` and signed
    weights ``w_ij`` this returns three arrays::

        sum_j p_ij / (rho + sum_j p_ij)
        sum_j w_ij p_ij / (rho + sum_j p_ij)
        sum_j w_ij^2 p_ij / (rho + sum_j p_ij)

    The signed middle sum is split into its positive and negative parts so
    each part can go through :func:`log_sum_exp`.
    """
    log_p = np.asarray(log_p, dtype=float)
    w = np.asarray(weights, dtype=float)
    log_d = log_sum_exp(log_p, axis=1)
    if np.isfinite(log_rho):
        log_den = np.logaddexp(log_d, log_rho)
    else:
        log_den = log_d
    with np.errstate(divide="ignore"):
        log_abs = np.log(np.abs(w))
    lw = log_p + log_abs
    neg_inf = -np.inf
    log_pos = log_sum_exp(np.where(w > 0, lw, neg_inf), axis=1)
    log_neg = log_sum_exp(np.where(w < 0, lw, neg_inf), axis=1)
    log_s = log_sum_exp(log_p + 2.0 * log_abs, axis=1)
    d_ratio = np.exp(log_d - log_den)
    n_ratio = np.exp(log_pos - log_den) - np.exp(log_neg - log_den)
    s_ratio = np.exp(log_s - log_den)
    return d_ratio, n_ratio, s_ratio


def row_blocks(n: int, width: int):
    """Yield slices covering ``range(n)`` in chunks; bounds n-by-n temporaries."""
    block = max(1, (1 << 22) // max(width, 1))
    for start in range(0, n, block):
        yield slice(start, min(n, start + block))

"""Oracle separable rules: the best rules available when the true means are known.

They cannot be used on real data but serve as risk baselines in simulations
and as exact anchors for the data-driven estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernel import (
    NoiseSpec,
    density_ratios,
    log_density_corr,
    log_density_indep,
    row_blocks,
)


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name} must contain at least one value")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class MeanSet:
    """True means of the primary (``theta1``) and auxiliary (``theta2``) sequences."""

    theta1: np.ndarray
    theta2: np.ndarray

    def __post_init__(self):
        t1 = _as_vector(self.theta1, "theta1")
        t2 = _as_vector(self.theta2, "theta2")
        if t1.shape != t2.shape:
            raise ValueError(f"theta1 has length {t1.size} but theta2 has length {t2.size}")
        object.__setattr__(self, "theta1", t1)
        object.__setattr__(self, "theta2", t2)

    @property
    def n(self) -> int:
        return self.theta1.size


@dataclass(frozen=True)
class ObservationSet:
    """Paired primary/auxiliary observations and their noise model."""

    x1: np.ndarray
    x2: np.ndarray
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        x1 = _as_vector(self.x1, "x1")
        x2 = _as_vector(self.x2, "x2")
        if x1.shape != x2.shape:
            raise ValueError(f"x1 has length {x1.size} but x2 has length {x2.size}")
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "x2", x2)

    @property
    def n(self) -> int:
        return self.x1.size


def _check_pair(obs: ObservationSet, means: MeanSet):
    if obs.n != means.n:
        raise ValueError(f"{obs.n} observations but {means.n} mean pairs")


def _weighted_average(log_w: np.ndarray, values: np.ndarray) -> np.ndarray:
    # rows are observations, columns support points
    w = np.exp(log_w - log_w.max(axis=1, keepdims=True))
    return (w @ values) / w.sum(axis=1)


def oracle_integrative(obs: ObservationSet, means: MeanSet) -> np.ndarray:
    """Posterior mean of theta1 under the empirical prior of the true mean pairs."""
    if not obs.noise.independent:
        raise ValueError("oracle_integrative assumes independent noise; use oracle_correlated")
    _check_pair(obs, means)
    out = np.empty(obs.n)
    for rows in row_blocks(obs.n, means.n):
        log_p = log_density_indep(
            obs.x1[rows, None], obs.x2[rows, None], means.theta1[None, :],
            means.theta2[None, :], obs.noise,
        )
        out[rows] = _weighted_average(log_p, means.theta1)
    return out


def oracle_regularized(obs: ObservationSet, means: MeanSet, rho: float) -> np.ndarray:
    """Oracle rule with ``rho`` added to the density sum in the denominator.

    ``rho = 0`` gives the same rule as :func:`oracle_integrative`; as ``rho``
    grows the estimate moves back towards ``x1``.
    """
    if rho < 0 or not math.isfinite(rho):
        raise ValueError(f"rho must be a finite nonnegative number, got {rho}")
    if not obs.noise.independent:
        raise ValueError("oracle_regularized assumes independent noise")
    _check_pair(obs, means)
    log_rho = math.log(rho) if rho > 0 else -np.inf
    out = np.empty(obs.n)
    for rows in row_blocks(obs.n, means.n):
        x1 = obs.x1[rows, None]
        log_p = log_density_indep(
            x1, obs.x2[rows, None], means.theta1[None, :], means.theta2[None, :], obs.noise
        )
        _, shift, _ = density_ratios(log_p, means.theta1[None, :] - x1, log_rho)
        out[rows] = obs.x1[rows] + shift
    return out


def oracle_univariate(x1, theta1, sigma1: float) -> np.ndarray:
    """Best separable rule that ignores the auxiliary sequence."""
    x1 = _as_vector(x1, "x1")
    theta1 = _as_vector(theta1, "theta1")
    if x1.size != theta1.size:
        raise ValueError(f"{x1.size} observations but {theta1.size} means")
    if not sigma1 > 0:
        raise ValueError("sigma1 must be positive")
    out = np.empty(x1.size)
    for rows in row_blocks(x1.size, theta1.size):
        z = (x1[rows, None] - theta1[None, :]) / sigma1
        out[rows] = _weighted_average(-0.5 * z * z, theta1)
    return out


def oracle_correlated(obs: ObservationSet, means: MeanSet) -> np.ndarray:
    """Oracle integrative rule when the two noises of an index are correlated.

    Weights use the Mahalanobis distance from each observation pair to each
    true mean pair ``j``.
    """
    _check_pair(obs, means)
    out = np.empty(obs.n)
    for rows in row_blocks(obs.n, means.n):
        log_p = log_density_corr(
            obs.x1[rows, None], obs.x2[rows, None], means.theta1[None, :],
            means.theta2[None, :], obs.noise,
        )
        out[rows] = _weighted_average(log_p, means.theta1)
    return out

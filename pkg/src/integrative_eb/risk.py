"""The rule family indexed by a support vector, its loss, and its unbiased risk estimate.

For a support ``t = (t1, t2)`` and regulariser ``rho`` the rule estimates
``theta1[i]`` by::

    x1[i] + sum_j (t1[j] - x1[i]) p_ij / (rho + sum_j p_ij)

with ``p_ij`` the Gaussian density of observation ``i`` centred at support
point ``j``.  Its risk estimate follows from Stein's lemma applied to the
shrinkage term.  The functions here are the exact log-space reference
implementations; :mod:`integrative_eb.optimizer` evaluates the same
quantities incrementally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernel import LOG_2PI, density_ratios, log_density_indep, row_blocks
from .oracle import ObservationSet, _as_vector


@dataclass(frozen=True)
class SupportVector:
    """Support points of the rule; ``t2`` is ``None`` for a univariate support."""

    t1: np.ndarray
    t2: np.ndarray | None = None

    def __post_init__(self):
        t1 = _as_vector(self.t1, "t1")
        object.__setattr__(self, "t1", t1)
        if self.t2 is not None:
            t2 = _as_vector(self.t2, "t2")
            if t1.shape != t2.shape:
                raise ValueError(f"t1 has length {t1.size} but t2 has length {t2.size}")
            object.__setattr__(self, "t2", t2)

    @property
    def n(self) -> int:
        return self.t1.size


@dataclass(frozen=True)
class RuleParams:
    support: SupportVector
    rho: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.rho) and self.rho >= 0):
            raise ValueError(f"rho must be a finite nonnegative number, got {self.rho}")


def _log_rho(rho: float) -> float:
    return math.log(rho) if rho > 0 else -np.inf


def _ratios_2d(params: RuleParams, obs: ObservationSet):
    if not obs.noise.independent:
        raise ValueError("the rule family is defined for independent noise only")
    if params.support.n != obs.n:
        raise ValueError(f"support has length {params.support.n} but there are {obs.n} observations")
    t = params.support
    if t.t2 is None:
        raise ValueError("a bivariate rule needs both support coordinates")
    log_rho = _log_rho(params.rho)
    d = np.empty(obs.n)
    nr = np.empty(obs.n)
    s = np.empty(obs.n)
    for rows in row_blocks(obs.n, t.n):
        x1 = obs.x1[rows, None]
        log_p = log_density_indep(x1, obs.x2[rows, None], t.t1[None, :], t.t2[None, :], obs.noise)
        d[rows], nr[rows], s[rows] = density_ratios(log_p, t.t1[None, :] - x1, log_rho)
    return d, nr, s


def _ratios_1d(support1, rho, x1, sigma1):
    t1 = _as_vector(support1, "support1")
    x1 = _as_vector(x1, "x1")
    if t1.size != x1.size:
        raise ValueError(f"support has length {t1.size} but there are {x1.size} observations")
    if not sigma1 > 0:
        raise ValueError("sigma1 must be positive")
    if not (math.isfinite(rho) and rho >= 0):
        raise ValueError(f"rho must be a finite nonnegative number, got {rho}")
    log_rho = _log_rho(rho)
    d = np.empty(x1.size)
    nr = np.empty(x1.size)
    s = np.empty(x1.size)
    for rows in row_blocks(x1.size, t1.size):
        diff = t1[None, :] - x1[rows, None]
        z = diff / sigma1
        log_p = -0.5 * z * z - 0.5 * LOG_2PI - math.log(sigma1)
        d[rows], nr[rows], s[rows] = density_ratios(log_p, diff, log_rho)
    return x1, d, nr, s


def _sure_from_ratios(d, nr, s, sigma1):
    var = sigma1 * sigma1
    return float(np.mean(2.0 * s - 2.0 * var * d - nr * nr) + var)


def apply_rule(params: RuleParams, obs: ObservationSet) -> np.ndarray:
    """Estimates of ``theta1`` produced by the rule indexed by ``params``."""
    _, nr, _ = _ratios_2d(params, obs)
    return obs.x1 + nr


def sure(params: RuleParams, obs: ObservationSet) -> float:
    """Stein's unbiased estimate of the per-coordinate risk of :func:`apply_rule`."""
    d, nr, s = _ratios_2d(params, obs)
    return _sure_from_ratios(d, nr, s, obs.noise.sigma1)


def loss(params: RuleParams, obs: ObservationSet, theta1) -> float:
    """Realised per-coordinate squared error of :func:`apply_rule` against ``theta1``."""
    theta1 = _as_vector(theta1, "theta1")
    if theta1.size != obs.n:
        raise ValueError(f"{theta1.size} means but {obs.n} observations")
    return mean_squared_error(apply_rule(params, obs), theta1)


def mean_squared_error(estimates, theta1) -> float:
    diff = np.asarray(estimates, dtype=float) - np.asarray(theta1, dtype=float)
    return float(np.mean(diff * diff))


def apply_rule_1d(support1, rho: float, x1, sigma1: float) -> np.ndarray:
    """Univariate rule: same form with the kernel phi((x1 - t1) / sigma1) / sigma1."""
    x1, _, nr, _ = _ratios_1d(support1, rho, x1, sigma1)
    return x1 + nr


def sure_1d(support1, rho: float, x1, sigma1: float) -> float:
    x1, d, nr, s = _ratios_1d(support1, rho, x1, sigma1)
    return _sure_from_ratios(d, nr, s, sigma1)

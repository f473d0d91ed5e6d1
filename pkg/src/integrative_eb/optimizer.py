"""Coordinate-descent minimisation of the unbiased risk estimate.

The support starts at the observations.  Each coordinate update picks the
candidate with the smallest risk estimate among the incumbent value and
``K`` equally spaced points in ``[x - M sigma, x + M sigma]``.  Coordinates
are visited as ``t1[0..n)`` then ``t2[0..n)``, and the fit stops once a full
sweep changes the risk estimate by at most ``tol_epsilon``.

The inner loops live in the compiled ``_cd_core`` extension; ``_cd_py`` is
the numpy fallback.  Set ``INTEGRATIVE_EB_BACKEND=python`` to force the
fallback.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import _cd_py
from .oracle import ObservationSet, _as_vector
from .risk import SupportVector

log = logging.getLogger(__name__)

try:
    from . import _cd_core
except ImportError:  # extension not built
    _cd_core = None

BACKENDS = {"python": _cd_py}
if _cd_core is not None:
    BACKENDS["cython"] = _cd_core


def _default_backend() -> str:
    choice = os.environ.get("INTEGRATIVE_EB_BACKEND", "auto").lower()
    if choice == "auto":
        return "cython" if "cython" in BACKENDS else "python"
    if choice not in BACKENDS:
        raise ImportError(f"requested backend {choice!r} is not available")
    return choice


BACKEND = _default_backend()

# relative margin a candidate must beat the incumbent by; keeps rounding noise
# from registering as a move
_MOVE_TOLERANCE = 1e-11


@dataclass(frozen=True)
class FitConfig:
    rho: float = 0.0
    box_halfwidth_m: float = 5.0
    candidates_k: int = 10
    tol_epsilon: float = 1e-5
    max_sweeps: int = 100
    underflow_fallback_rho: float = 1e-12

    def __post_init__(self):
        if not (math.isfinite(self.rho) and self.rho >= 0):
            raise ValueError("rho must be a finite nonnegative number")
        if not self.box_halfwidth_m > 0:
            raise ValueError("box_halfwidth_m must be positive")
        if int(self.candidates_k) != self.candidates_k or self.candidates_k < 2:
            raise ValueError("candidates_k must be an integer >= 2")
        if not self.tol_epsilon > 0:
            raise ValueError("tol_epsilon must be positive")
        if int(self.max_sweeps) != self.max_sweeps or self.max_sweeps < 1:
            raise ValueError("max_sweeps must be an integer >= 1")
        if not self.underflow_fallback_rho > 0:
            raise ValueError("underflow_fallback_rho must be positive")
        object.__setattr__(self, "candidates_k", int(self.candidates_k))
        object.__setattr__(self, "max_sweeps", int(self.max_sweeps))


@dataclass
class FitResult:
    """Outcome of a fit.

    For univariate fits ``support.t2`` is ``None``.
    """

    support: SupportVector
    estimates: np.ndarray
    sure_value: float
    sweeps_used: int
    sure_trace: list = field(default_factory=list)
    converged: bool = False


def grid_offsets(config: FitConfig) -> np.ndarray:
    return np.linspace(-config.box_halfwidth_m, config.box_halfwidth_m, config.candidates_k)


def candidate_grid(x: float, sigma: float, config: FitConfig) -> np.ndarray:
    """The ``K`` equally spaced candidates spanning ``[x - M sigma, x + M sigma]``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return x + sigma * grid_offsets(config)


def _search_order(k: int) -> np.ndarray:
    # closest to the observation first, then the smaller value
    idx = np.arange(k)
    return np.lexsort((idx, np.abs(2 * idx - (k - 1)))).astype(np.intp)


def _backend(name):
    name = name or BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable backend {name!r}") from None


def _sure_from_acc(D, N, S, rho_u, fb_u, var):
    return float(var + np.mean(_cd_py._term(D, N, S, rho_u, fb_u, var)))


def _coordinate_descent(x1, x2, sigma1, sigma2, two_d, config, backend):
    core = _backend(backend)
    n = x1.size
    t1 = x1.copy()
    t2 = x2.copy()
    a1 = 0.5 / sigma1**2
    a2 = 0.5 / sigma2**2 if two_d else 0.0
    var = sigma1 * sigma1
    # the kernels drop the normalising constant, so rho is rescaled by it
    if two_d:
        norm = 2.0 * math.pi * sigma1 * sigma2
    else:
        norm = math.sqrt(2.0 * math.pi) * sigma1
    rho_u = config.rho * norm
    fb_u = config.underflow_fallback_rho * norm
    offsets = grid_offsets(config)
    order = _search_order(config.candidates_k)
    D = np.empty(n)
    N = np.empty(n)
    S = np.empty(n)

    def refresh():
        core.accumulate(x1, x2, t1, t2, a1, a2, D, N, S)
        return _sure_from_acc(D, N, S, rho_u, fb_u, var)

    blocks = [(1, sigma1)] + ([(2, sigma2)] if two_d else [])
    previous = refresh()
    trace = []
    converged = False
    sweeps = 0
    for sweeps in range(1, config.max_sweeps + 1):
        saved = (t1.copy(), t2.copy())
        moves = 0
        for dim, sd in blocks:
            moves += core.update_block(
                dim, x1, x2, t1, t2, a1, a2, var, rho_u, fb_u, sd, offsets, order,
                D, N, S, _MOVE_TOLERANCE,
            )
            current = refresh()
        if current > previous:
            # accumulated rounding made the sweep a net loss; undo it
            log.debug("sweep %d raised SURE by %.3g, rolled back", sweeps, current - previous)
            t1[:], t2[:] = saved
            current = refresh()
            trace.append(current)
            converged = True
            break
        trace.append(current)
        log.debug("sweep %d: %d moves, SURE %.10g", sweeps, moves, current)
        if abs(previous - current) <= config.tol_epsilon:
            converged = True
            break
        previous = current
    den = rho_u + D
    den = np.where(den <= 0.0, fb_u, den)
    estimates = x1 + N / den
    return t1, t2, estimates, trace[-1], sweeps, trace, converged


def fit_integrative(obs: ObservationSet, config: FitConfig | None = None, *, backend=None) -> FitResult:
    """Minimise the bivariate risk estimate over the support and apply the fitted rule."""
    config = config or FitConfig()
    if not obs.noise.independent:
        raise ValueError("fit_integrative requires independent noise")
    t1, t2, est, value, sweeps, trace, converged = _coordinate_descent(
        obs.x1, obs.x2, obs.noise.sigma1, obs.noise.sigma2, True, config, backend
    )
    return FitResult(SupportVector(t1, t2), est, value, sweeps, trace, converged)


def fit_univariate(x1, sigma1: float, config: FitConfig | None = None, *, backend=None) -> FitResult:
    """Same procedure without side information: only ``t1`` is optimised."""
    config = config or FitConfig()
    x1 = _as_vector(x1, "x1")
    if not sigma1 > 0:
        raise ValueError("sigma1 must be positive")
    zeros = np.zeros_like(x1)
    t1, _, est, value, sweeps, trace, converged = _coordinate_descent(
        x1, zeros, float(sigma1), 1.0, False, config, backend
    )
    return FitResult(SupportVector(t1), est, value, sweeps, trace, converged)

"""Scenario generation and replication harness for the normal-means experiments.

Random streams
--------------
All draws use numpy's counter-based Philox generator seeded through
``SeedSequence``:

* means: ``SeedSequence(mean_seed)`` spawns two children, the first for
  ``theta1`` and the second for the Unif(-4, 4) perturbations ``e``;
* noise of replication ``r``: ``SeedSequence([replication_seed_base, r])``,
  from which an ``(n, 2)`` block of standard normals is drawn row-major, so
  index ``i`` and coordinate ``d`` always read the same position of the stream.

Replications therefore do not depend on execution order and can run in
separate processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .kernel import NoiseSpec
from .optimizer import FitConfig, fit_integrative, fit_univariate
from .oracle import (
    MeanSet,
    ObservationSet,
    oracle_correlated,
    oracle_integrative,
    oracle_univariate,
)
from .risk import mean_squared_error

THETA1_CONFIGS = ("normal01", "uniform_m2_2", "exp1", "sparse")
THETA2_CONFIGS = ("strong", "weak", "none")

# "Proposed" row of the classical (no side information) experiment:
# average total squared error over 100 replications, n = 1000, K = 50.
TABLE1_REFERENCE = {
    (5, 3.0): 37, (5, 4.0): 32, (5, 5.0): 21, (5, 7.0): 11,
    (50, 3.0): 158, (50, 4.0): 110, (50, 5.0): 56, (50, 7.0): 14,
    (500, 3.0): 460, (500, 4.0): 289, (500, 5.0): 133, (500, 7.0): 21,
}


@dataclass(frozen=True)
class Sparse:
    """``count`` means equal to ``value``, the rest zero."""

    count: int
    value: float = 1.5


@dataclass(frozen=True)
class ScenarioSpec:
    n: int
    theta1_config: str | Sparse = "normal01"
    theta2_config: str = "strong"
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    mean_seed: int = 0
    replication_seed_base: int = 1

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        cfg = self.theta1_config
        if cfg == "sparse":
            # the dense experiments' sparse setting: 10% of the means at 1.5
            object.__setattr__(self, "theta1_config", Sparse(self.n // 10, 1.5))
        elif isinstance(cfg, Sparse):
            if not 0 <= cfg.count <= self.n:
                raise ValueError(f"sparse count {cfg.count} outside [0, {self.n}]")
        elif cfg not in THETA1_CONFIGS:
            raise ValueError(f"unknown theta1 configuration {cfg!r}")
        if self.theta2_config not in THETA2_CONFIGS:
            raise ValueError(f"unknown theta2 configuration {self.theta2_config!r}")

    @property
    def label(self) -> str:
        cfg = self.theta1_config
        t1 = f"sparse{cfg.count}@{cfg.value:g}" if isinstance(cfg, Sparse) else cfg
        return f"{t1}/{self.theta2_config}/n={self.n}/r={self.noise.rho_corr:g}"


@dataclass
class ReplicationReport:
    method: str
    losses: np.ndarray
    mean: float
    se: float
    count: int

    @classmethod
    def from_losses(cls, method: str, losses) -> "ReplicationReport":
        losses = np.asarray(losses, dtype=float)
        count = losses.size
        se = float(np.std(losses, ddof=1) / math.sqrt(count)) if count > 1 else math.nan
        return cls(method, losses, float(np.mean(losses)), se, count)


def _generator(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def parse_theta1(text: str) -> str | Sparse:
    """Parse ``normal01``, ``sparse`` or ``sparse:COUNT:VALUE``."""
    if text.startswith("sparse:"):
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"expected sparse:COUNT:VALUE, got {text!r}")
        return Sparse(int(parts[1]), float(parts[2]))
    return text


def generate_means(spec: ScenarioSpec) -> MeanSet:
    """Fixed means of a scenario; a deterministic function of ``spec.mean_seed``."""
    theta_ss, e_ss = np.random.SeedSequence(spec.mean_seed).spawn(2)
    rng = _generator(theta_ss)
    n = spec.n
    cfg = spec.theta1_config
    if isinstance(cfg, Sparse):
        theta1 = np.zeros(n)
        theta1[: cfg.count] = cfg.value
    elif cfg == "normal01":
        theta1 = rng.standard_normal(n)
    elif cfg == "uniform_m2_2":
        theta1 = rng.uniform(-2.0, 2.0, n)
    elif cfg == "exp1":
        theta1 = rng.exponential(1.0, n)
    else:
        raise ValueError(f"unknown theta1 configuration {cfg!r}")
    e = _generator(e_ss).uniform(-4.0, 4.0, n)
    if spec.theta2_config == "strong":
        theta2 = 2.0 * theta1**2
    elif spec.theta2_config == "weak":
        theta2 = theta1**2 + e
    else:
        theta2 = e
    return MeanSet(theta1, theta2)


def generate_observations(means: MeanSet, noise: NoiseSpec, replication_index: int,
                          spec: ScenarioSpec) -> ObservationSet:
    z = _generator(np.random.SeedSequence([spec.replication_seed_base, replication_index])
                   ).standard_normal((means.n, 2))
    r = noise.rho_corr
    eps1 = noise.sigma1 * z[:, 0]
    eps2 = noise.sigma2 * (r * z[:, 0] + math.sqrt(1.0 - r * r) * z[:, 1])
    return ObservationSet(means.theta1 + eps1, means.theta2 + eps2, noise)


def _require_independent(obs: ObservationSet, name: str):
    if not obs.noise.independent:
        raise ValueError(f"method {name} needs independent noise")


def _mle(obs, means, config):
    return obs.x1


def _oracle_integrative(obs, means, config):
    _require_independent(obs, "oracle_integrative")
    return oracle_integrative(obs, means)


def _oracle_univariate(obs, means, config):
    return oracle_univariate(obs.x1, means.theta1, obs.noise.sigma1)


def _oracle_correlated(obs, means, config):
    return oracle_correlated(obs, means)


def _fit_integrative(obs, means, config):
    _require_independent(obs, "fit_integrative")
    return fit_integrative(obs, config).estimates


def _fit_univariate(obs, means, config):
    return fit_univariate(obs.x1, obs.noise.sigma1, config).estimates


METHODS: dict[str, Callable] = {
    "mle": _mle,
    "oracle_integrative": _oracle_integrative,
    "oracle_univariate": _oracle_univariate,
    "oracle_correlated": _oracle_correlated,
    "fit_integrative": _fit_integrative,
    "fit_univariate": _fit_univariate,
}


def _one_replication(spec, means, names, probes, config, index):
    obs = generate_observations(means, spec.noise, index, spec)
    out = {}
    for name in names:
        est = probes[name](obs, means) if name in probes else METHODS[name](obs, means, config)
        out[name] = mean_squared_error(est, means.theta1)
    return out


def _run_chunk(args):
    spec, names, config, indices = args
    means = generate_means(spec)
    return [_one_replication(spec, means, names, {}, config, r) for r in indices]


def run_replications(spec: ScenarioSpec, methods, R: int, config: FitConfig | None = None,
                     *, probes: Mapping[str, Callable] | None = None,
                     workers: int = 1) -> list[ReplicationReport]:
    """Evaluate each method on the same ``R`` simulated data sets.

    Losses are per-coordinate mean squared errors.  ``probes`` maps extra
    names to callables ``f(obs, means) -> estimates``; they run in-process.
    Reports come back sorted by method name.
    """
    if int(R) != R or R < 1:
        raise ValueError(f"R must be a positive integer, got {R}")
    probes = dict(probes or {})
    names = sorted(set(methods) | set(probes))
    unknown = [m for m in names if m not in METHODS and m not in probes]
    if unknown:
        raise ValueError(f"unknown method(s): {', '.join(unknown)}; known: {', '.join(METHODS)}")
    config = config or FitConfig()
    if workers > 1 and not probes:
        chunks = [(spec, names, config, list(range(r, R, workers))) for r in range(workers)]
        rows = [None] * R
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk, result in zip(chunks, pool.map(_run_chunk, chunks)):
                for r, row in zip(chunk[3], result):
                    rows[r] = row
    else:
        means = generate_means(spec)
        rows = [_one_replication(spec, means, names, probes, config, r) for r in range(R)]
    return [ReplicationReport.from_losses(m, [row[m] for row in rows]) for m in names]


def table1_report(mu: float, nonzero_count: int, R: int = 100, config: FitConfig | None = None,
                  *, n: int = 1000, mean_seed: int = 0,
                  replication_seed_base: int = 1) -> ReplicationReport:
    """Total squared error of the univariate fit on sparse means (no side information).

    Unlike :func:`run_replications` the losses are totals over coordinates.
    """
    config = config or FitConfig(candidates_k=50)
    spec = ScenarioSpec(n, Sparse(nonzero_count, mu), "none", NoiseSpec(),
                        mean_seed, replication_seed_base)
    means = generate_means(spec)
    totals = []
    for r in range(R):
        obs = generate_observations(means, spec.noise, r, spec)
        est = fit_univariate(obs.x1, 1.0, config).estimates
        totals.append(float(np.sum((est - means.theta1) ** 2)))
    return ReplicationReport.from_losses("fit_univariate", totals)


def table1_experiment(mu: float, nonzero_count: int, R: int = 100,
                      config: FitConfig | None = None, **kwargs) -> float:
    """Average total squared error over ``R`` replications."""
    return table1_report(mu, nonzero_count, R, config, **kwargs).mean

"""Linear classifier for two-class expression data with shrunken standardized weights.

Each gene contributes ``theta_hat[i] * G[i] / s_hat[i]`` to the score, where
``theta_hat`` is an estimate of the expected standardized mean difference.
Genes are first screened so that the kept set is roughly uncorrelated, then
``theta_hat`` comes from the univariate fit or, when an auxiliary study's
z-scores are supplied, from the integrative fit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import special

from .kernel import NoiseSpec
from .optimizer import FitConfig, fit_integrative, fit_univariate
from .oracle import ObservationSet

log = logging.getLogger(__name__)


@dataclass
class ExpressionDataset:
    """Genes in rows, samples in columns, 0/1 class label per sample."""

    matrix: np.ndarray
    labels: np.ndarray
    gene_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        self.labels = np.asarray(self.labels).astype(int)
        if self.matrix.ndim != 2:
            raise ValueError("expression matrix must be two-dimensional")
        n_genes, n_samples = self.matrix.shape
        if not self.gene_ids:
            self.gene_ids = [f"g{i}" for i in range(n_genes)]
        self.gene_ids = [str(g) for g in self.gene_ids]
        if len(self.gene_ids) != n_genes:
            raise ValueError(f"{len(self.gene_ids)} gene ids for {n_genes} genes")
        if len(set(self.gene_ids)) != n_genes:
            raise ValueError("gene ids must be unique")
        if self.labels.shape != (n_samples,):
            raise ValueError(f"{self.labels.size} labels for {n_samples} samples")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        for y in (0, 1):
            if np.sum(self.labels == y) < 2:
                raise ValueError(f"class {y} needs at least two samples")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("expression matrix contains non-finite values")


@dataclass
class TrainingStats:
    mean0: np.ndarray
    mean1: np.ndarray
    sd0: np.ndarray
    sd1: np.ndarray
    s_hat: np.ndarray
    z: np.ndarray
    degenerate: np.ndarray


@dataclass
class TrainedClassifier:
    kept_genes: np.ndarray
    gene_ids: list
    theta_hat: np.ndarray
    s_hat: np.ndarray
    cutoff: float
    aux_used: bool
    dropped_genes: list = field(default_factory=list)

    def margin(self, sample) -> float:
        sample = np.asarray(sample, dtype=float)
        if sample.shape != self.theta_hat.shape:
            raise ValueError(f"sample has {sample.size} values for {self.theta_hat.size} kept genes")
        return float(np.sum(self.theta_hat * sample / self.s_hat))

    def to_dict(self) -> dict:
        return {
            "kept_gene_ids": list(self.gene_ids),
            "kept_gene_index": [int(i) for i in self.kept_genes],
            "theta_hat": [float(v) for v in self.theta_hat],
            "s_hat": [float(v) for v in self.s_hat],
            "cutoff": float(self.cutoff),
            "aux_used": bool(self.aux_used),
            "dropped_gene_ids": list(self.dropped_genes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedClassifier":
        return cls(
            np.asarray(d["kept_gene_index"], dtype=int),
            list(d["kept_gene_ids"]),
            np.asarray(d["theta_hat"], dtype=float),
            np.asarray(d["s_hat"], dtype=float),
            float(d["cutoff"]),
            bool(d["aux_used"]),
            list(d.get("dropped_gene_ids", [])),
        )


def training_statistics(data: ExpressionDataset) -> TrainingStats:
    """Class means, class SDs (n - 1 denominator), pooled scale and z-scores per gene.

    Genes with zero within-class variance in both classes are flagged as
    degenerate; their ``z`` is NaN.
    """
    g0 = data.matrix[:, data.labels == 0]
    g1 = data.matrix[:, data.labels == 1]
    n0, n1 = g0.shape[1], g1.shape[1]
    mean0, mean1 = g0.mean(axis=1), g1.mean(axis=1)
    sd0, sd1 = g0.std(axis=1, ddof=1), g1.std(axis=1, ddof=1)
    s_hat = np.sqrt(sd1**2 / n1 + sd0**2 / n0)
    degenerate = s_hat == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(degenerate, np.nan, (mean1 - mean0) / s_hat)
    return TrainingStats(mean0, mean1, sd0, sd1, s_hat, z, degenerate)


def welch_pvalues(data: ExpressionDataset) -> np.ndarray:
    """Two-sided Welch t-test p-value per gene; degenerate genes get 1."""
    st = training_statistics(data)
    n0 = int(np.sum(data.labels == 0))
    n1 = data.labels.size - n0
    v0 = st.sd0**2 / n0
    v1 = st.sd1**2 / n1
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (st.mean1 - st.mean0) / st.s_hat
        # Welch-Satterthwaite degrees of freedom
        df = (v0 + v1) ** 2 / (v0**2 / (n0 - 1) + v1**2 / (n1 - 1))
        p = 2.0 * special.stdtr(df, -np.abs(t))
    # zero variance in both classes gives t = +-inf (p = 0) or nan; rank such genes last
    return np.where(np.isfinite(p) & ~st.degenerate, np.minimum(p, 1.0), 1.0)


def _standardized_rows(matrix: np.ndarray) -> np.ndarray:
    centered = matrix - matrix.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.sum(centered**2, axis=1, keepdims=True))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(norms > 0, centered / norms, 0.0)
    return out


def correlation_screen(data: ExpressionDataset, pvalues: Sequence[float], threshold: float = 0.2,
                       candidates: Sequence[int] | None = None) -> np.ndarray:
    """Greedy decorrelation: walk genes by increasing p-value, keep a gene and
    discard every later gene whose absolute correlation with it exceeds
    ``threshold``.

    ``candidates`` restricts the pass to a subset of gene indices.  Returns
    kept indices in the order they were kept.
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    pvalues = np.asarray(pvalues, dtype=float)
    if pvalues.shape != (data.matrix.shape[0],):
        raise ValueError("need one p-value per gene")
    idx = np.arange(data.matrix.shape[0]) if candidates is None else np.asarray(candidates, dtype=int)
    # stable sort keeps original index order among tied p-values
    idx = idx[np.argsort(pvalues[idx], kind="stable")]
    unit = _standardized_rows(data.matrix[idx])
    alive = np.ones(idx.size, dtype=bool)
    kept = []
    for pos in range(idx.size):
        if not alive[pos]:
            continue
        kept.append(int(idx[pos]))
        rest = np.flatnonzero(alive[pos + 1:]) + pos + 1
        if rest.size:
            corr = unit[rest] @ unit[pos]
            alive[rest[np.abs(corr) > threshold]] = False
    return np.asarray(kept, dtype=int)


def _align_aux(aux_z, data: ExpressionDataset) -> np.ndarray:
    if isinstance(aux_z, Mapping):
        values = []
        for gid in data.gene_ids:
            if gid not in aux_z:
                raise KeyError(f"auxiliary z-scores have no entry for gene {gid!r}")
            values.append(float(aux_z[gid]))
        out = np.asarray(values)
    else:
        out = np.asarray(aux_z, dtype=float)
        if out.shape != (len(data.gene_ids),):
            raise ValueError(f"{out.size} auxiliary z-scores for {len(data.gene_ids)} genes")
    if not np.all(np.isfinite(out)):
        raise ValueError("auxiliary z-scores must be finite")
    return out


def train(data: ExpressionDataset, aux_z=None, config: FitConfig | None = None,
          threshold: float = 0.2) -> TrainedClassifier:
    """Fit the classifier.

    ``aux_z`` is either a mapping ``gene_id -> z`` or a sequence aligned with
    ``data.gene_ids``.  Screening never looks at ``aux_z``.
    """
    config = config or FitConfig()
    aux = None if aux_z is None else _align_aux(aux_z, data)
    st = training_statistics(data)
    dropped = [data.gene_ids[i] for i in np.flatnonzero(st.degenerate)]
    if dropped:
        log.info("dropping %d genes with zero within-class variance", len(dropped))
    pvals = welch_pvalues(data)
    kept = correlation_screen(data, pvals, threshold, candidates=np.flatnonzero(~st.degenerate))
    if kept.size == 0:
        raise ValueError("no genes left after removing degenerate genes")
    z = st.z[kept]
    if aux is None:
        theta_hat = fit_univariate(z, 1.0, config).estimates
    else:
        obs = ObservationSet(z, aux[kept], NoiseSpec(1.0, 1.0))
        theta_hat = fit_integrative(obs, config).estimates
    s_hat = st.s_hat[kept]
    cutoff = float(np.sum(theta_hat * (st.mean1[kept] + st.mean0[kept]) / (2.0 * s_hat)))
    return TrainedClassifier(kept, [data.gene_ids[i] for i in kept], theta_hat, s_hat,
                             cutoff, aux is not None, dropped)


def predict(model: TrainedClassifier, sample) -> int:
    """Class 1 iff the linear score reaches the cutoff."""
    return int(model.margin(sample) >= model.cutoff)


def predict_matrix(model: TrainedClassifier, matrix) -> np.ndarray:
    """Predict every column of a (kept genes x samples) matrix."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != model.theta_hat.size:
        raise ValueError(f"expected {model.theta_hat.size} rows, got shape {matrix.shape}")
    scores = (model.theta_hat / model.s_hat) @ matrix
    return (scores >= model.cutoff).astype(int)


def misclassification_rate(predicted, truth) -> float:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError("prediction and truth lengths differ")
    return float(np.mean(predicted != truth)) if truth.size else math.nan

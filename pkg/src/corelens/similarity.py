"""Cosine-similarity audits of a query vector against an embedding set.

Summarizes the similarity distribution with box-plot statistics: mean,
median, quartiles by linear interpolation (type 7), and whiskers at the
most extreme points within 1.5 IQR of the quartiles.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class SimilarityStats:
    n: int
    mean: float
    median: float
    q1: float
    q3: float
    min: float
    max: float
    whisker_low: float
    whisker_high: float

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("n", "mean", "median", "q1", "q3", "min", "max",
                 "whisker_low", "whisker_high")}


def cosine_similarity(u, v):
    """<u, v> / (|u| |v|), clamped to [-1, 1] against rounding."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.shape != v.shape:
        raise DataError(f"dim mismatch: {u.shape[0]} vs {v.shape[0]}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise DataError("cosine similarity undefined for a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def similarities(query, dataset):
    """Cosine similarity of the query against every row of the set."""
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    if q.shape[0] != dataset.dim:
        raise DataError(f"query dim {q.shape[0]} != set dim {dataset.dim}")
    nq = np.linalg.norm(q)
    if nq == 0:
        raise DataError("cosine similarity undefined for a zero query")
    norms = np.linalg.norm(dataset.rows, axis=1)
    if np.any(norms == 0):
        idx = int(np.argwhere(norms == 0)[0, 0])
        raise DataError(f"image row {idx} has zero norm")
    sims = dataset.rows @ q / (norms * nq)
    return np.clip(sims, -1.0, 1.0)


def audit(query, dataset):
    """Box-plot statistics of the query's similarities to all rows."""
    sims = similarities(query, dataset)
    q1, med, q3 = np.percentile(sims, [25, 50, 75])  # type-7 interpolation
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = sims[(sims >= lo_fence) & (sims <= hi_fence)]
    return SimilarityStats(
        n=int(sims.size),
        mean=float(sims.mean()),
        median=float(med),
        q1=float(q1),
        q3=float(q3),
        min=float(sims.min()),
        max=float(sims.max()),
        whisker_low=float(inside.min()),
        whisker_high=float(inside.max()),
    )

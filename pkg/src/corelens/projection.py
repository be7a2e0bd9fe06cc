"""Background-subspace removal by orthogonal-complement projection.

Given m linearly independent background vectors spanning a subspace W of
R^D, the projector P = I - B (B^T B)^{-1} B^T maps any vector to its
component orthogonal to W. The Gram-inverse path (Cholesky on B^T B) is
the default; an orthonormalized path P = I - Q Q^T built from modified
Gram-Schmidt is kept alongside as a cross-check, since near-dependent
background vectors are the realistic failure mode.
"""

from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingSet
from .errors import ConditioningError, DataError, RankError

DROP_TOLERANCE = 1e-10
CONDITION_LIMIT = 1e8


@dataclass(frozen=True)
class BackgroundBasis:
    """D x m background matrix B with its cached orthonormalization."""

    dim: int
    columns: np.ndarray  # (D, m) original vectors, as given
    orthonormal_q: np.ndarray  # (D, m) modified Gram-Schmidt of columns
    condition_estimate: float  # estimate of cond(B^T B)

    def __post_init__(self):
        b = np.asarray(self.columns, dtype=np.float64)
        q = np.asarray(self.orthonormal_q, dtype=np.float64)
        if b.shape != q.shape or b.shape[0] != self.dim:
            raise DataError("basis matrices must both be D x m")
        m = b.shape[1]
        if not 1 <= m <= self.dim:
            raise DataError(f"need 1 <= m <= D, got m={m}, D={self.dim}")
        # span(Q) must reproduce every original column
        resid = b - q @ (q.T @ b)
        scale = np.linalg.norm(b, axis=0)
        if np.any(np.linalg.norm(resid, axis=0) > 1e-8 * scale):
            raise DataError("orthonormal basis does not span the columns")
        b.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "columns", b)
        object.__setattr__(self, "orthonormal_q", q)

    @property
    def rank(self):
        return self.orthonormal_q.shape[1]


@dataclass(frozen=True)
class Projector:
    """Dense D x D orthogonal-complement projector."""

    dim: int
    matrix: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.matrix, dtype=np.float64)
        if p.shape != (self.dim, self.dim):
            raise DataError("projector must be D x D")
        p.setflags(write=False)
        object.__setattr__(self, "matrix", p)

    def apply(self, vectors):
        """Project a vector, a batch of row vectors, or an EmbeddingSet."""
        if isinstance(vectors, EmbeddingSet):
            if vectors.dim != self.dim:
                raise DataError(
                    f"set dim {vectors.dim} does not match projector dim {self.dim}"
                )
            return vectors.with_rows(vectors.rows @ self.matrix.T)
        v = np.asarray(vectors, dtype=np.float64)
        if v.shape[-1] != self.dim:
            raise DataError(
                f"vector dim {v.shape[-1]} does not match projector dim {self.dim}"
            )
        return v @ self.matrix.T


def build_basis(vectors, drop_tolerance=DROP_TOLERANCE):
    """Orthonormalize background vectors by modified Gram-Schmidt.

    A vector whose residual after orthogonalization against the earlier
    ones falls below drop_tolerance times its own norm is rejected with a
    RankError naming its index: callers must supply independent columns.
    """
    cols = [np.asarray(v, dtype=np.float64).reshape(-1) for v in vectors]
    if not cols:
        raise DataError("need at least one background vector")
    dim = cols[0].shape[0]
    qs = []
    for i, v in enumerate(cols):
        if v.shape[0] != dim:
            raise DataError(f"background vector {i} has dim {v.shape[0]}, expected {dim}")
        if not np.all(np.isfinite(v)):
            raise DataError(f"background vector {i} has non-finite entries")
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise DataError(f"background vector {i} is zero")
        w = v.copy()
        for q in qs:
            w -= np.dot(q, w) * q
        resid = np.linalg.norm(w)
        if resid < drop_tolerance * norm:
            raise RankError(
                f"background vector {i} is linearly dependent on earlier ones "
                f"(residual {resid:.3e} < {drop_tolerance:.1e} * norm)"
            )
        qs.append(w / resid)
    b = np.stack(cols, axis=1)
    q = np.stack(qs, axis=1)
    sv = np.linalg.svd(b, compute_uv=False)
    cond = float((sv[0] / sv[-1]) ** 2) if sv[-1] > 0 else np.inf
    return BackgroundBasis(dim=dim, columns=b, orthonormal_q=q,
                           condition_estimate=cond)


def projector_matrix(basis, method="gram"):
    """P = I - B (B^T B)^{-1} B^T, with the Gram inverse done by Cholesky.

    method="orthonormal" instead returns I - Q Q^T from the cached
    Gram-Schmidt basis; the two agree to ~1e-8 whenever the Gram matrix is
    decently conditioned, and tests cross-check them.
    """
    d = basis.dim
    if method == "orthonormal":
        q = basis.orthonormal_q
        return Projector(dim=d, matrix=np.eye(d) - q @ q.T)
    if method != "gram":
        raise DataError(f"unknown projector method {method!r}")
    if basis.condition_estimate > CONDITION_LIMIT:
        raise ConditioningError(
            f"Gram matrix condition estimate {basis.condition_estimate:.3e} "
            f"exceeds {CONDITION_LIMIT:.1e}"
        )
    b = basis.columns
    gram = b.T @ b
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"Gram matrix is not positive definite: {exc}") from exc
    return Projector(dim=d, matrix=np.eye(d) - b @ _gram_solve(chol, b.T))


def _gram_solve(chol, rhs):
    """Solve (L L^T) X = rhs given the Cholesky factor L."""
    y = np.linalg.solve(chol, rhs)
    return np.linalg.solve(chol.T, y)


def project_out(vectors, basis, method="gram"):
    """Orthogonal component of vectors with respect to span(basis).

    Accepts a single vector, a batch of rows, or an EmbeddingSet; labels,
    attributes and groups pass through untouched.
    """
    return projector_matrix(basis, method=method).apply(vectors)


def decompose(vector, basis, method="gram"):
    """Split v into (v_in_span, v_orthogonal); their sum reconstructs v."""
    v = np.asarray(vector, dtype=np.float64)
    v_perp = project_out(v, basis, method=method)
    return v - v_perp, v_perp

"""Weighted least-squares solve of the normal system plus residual helpers.

The solve minimises sum_k w_k ||S(u_k, v_k) - Q_k||^2 over the control
points.  The default route factorises the weight-scaled design matrix
orthogonally (LAPACK SVD-based lstsq), which avoids squaring the condition
number; problems too large for a dense factorisation fall back to the
sparse normal equations with a Cholesky solve, which is the standard
image-scale path.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.linalg

from .bspline import ControlNet, DesignMatrix
from .errors import InvalidInputError, SingularSystemError

__all__ = ["residual_sq_norms", "solve_wls", "weighted_mse"]

log = logging.getLogger(__name__)

# weights below this are dropped from the factorisation; the threshold sits
# far below anything the entropy weighting produces deliberately
DROP_BELOW = 1e-300

# m * n above this switches to the sparse normal-equation route
DENSE_LIMIT = 4_000_000

RANK_RCOND = 1e-12


def _as_observations(q, m: int) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.ndim == 1:
        q = q[:, None]
    if q.ndim != 2 or q.shape[0] != m:
        raise InvalidInputError(f"observations must be ({m}, s), got {q.shape}")
    return q


def _check_weights(w, m: int) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (m,):
        raise InvalidInputError(f"weights must have shape ({m},), got {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise InvalidInputError("weights must be finite and non-negative")
    if not np.any(w > 0.0):
        raise InvalidInputError("all weights vanish")
    return w


def solve_wls(design: DesignMatrix, w, q) -> ControlNet:
    """Minimiser of the weighted squared residual sum.

    The solution is invariant to a positive rescaling of the weights, so
    they need not be normalised here.  All s observation columns share one
    factorisation.  Raises SingularSystemError, with the estimated rank
    attached, when the weighted system does not determine every coefficient.
    """
    m, n = design.m, design.n
    w = _check_weights(w, m)
    q = _as_observations(q, m)

    keep = w > DROP_BELOW
    dropped = int(m - keep.sum())
    if dropped:
        log.debug("dropping %d rows with weights below %g", dropped, DROP_BELOW)
        b = design.matrix[keep]
        w_kept = w[keep]
        q_kept = q[keep]
    else:
        b = design.matrix
        w_kept = w
        q_kept = q

    if b.shape[0] * n <= DENSE_LIMIT:
        sw = np.sqrt(w_kept)
        a = b.toarray() * sw[:, None]
        sol, _, rank, _ = np.linalg.lstsq(a, q_kept * sw[:, None], rcond=RANK_RCOND)
        if rank < n:
            raise SingularSystemError(
                f"weighted design matrix is rank deficient ({rank} < {n})",
                rank=int(rank),
                size=n,
            )
    else:
        bw = b.multiply(w_kept[:, None]).tocsr()
        g = (b.T @ bw).toarray()
        rhs = b.T @ (q_kept * w_kept[:, None])
        try:
            cf = scipy.linalg.cho_factor(g)
        except np.linalg.LinAlgError:
            rank = int(np.linalg.matrix_rank(g, tol=RANK_RCOND * np.abs(g).max()))
            raise SingularSystemError(
                f"weighted normal matrix is rank deficient ({rank} < {n})",
                rank=rank,
                size=n,
            ) from None
        sol = scipy.linalg.cho_solve(cf, rhs)

    return ControlNet(sol, design.n1, design.n2)


def residual_sq_norms(design: DesignMatrix, net: ControlNet, q) -> np.ndarray:
    """Per-point squared residual norms ||row_k . P - Q_k||^2."""
    q = _as_observations(q, design.m)
    if net.values.shape != (design.n, q.shape[1]):
        raise InvalidInputError(
            f"control net shape {net.values.shape} does not match design "
            f"({design.n} coefficients) and observations ({q.shape[1]} channels)"
        )
    r = design.matrix @ net.values - q
    return np.einsum("ks,ks->k", r, r)


def weighted_mse(r2, w) -> float:
    """sum_k w_k * r2_k.  Uniform weights 1/m give the plain mean."""
    r2 = np.asarray(r2, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if r2.shape != w.shape:
        raise InvalidInputError("residuals and weights must have equal length")
    return float(w @ r2)

"""Computable convergence-theory quantities for the entropy-weighted fit.

These are desk-scale diagnostics: the local solvability indicator at the
uniform-weight point, the Jacobian blocks of the full nonlinear system, the
weight-block iteration matrix whose spectral radius governs local
Gauss-Seidel convergence, and a spectral-radius estimator.  The Jacobian
machinery is restricted to scalar-valued surfaces (s = 1); multichannel
fits are analysed per channel.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .bspline import DesignMatrix, extract_free_net
from .errors import DegenerateResidualsError, InvalidInputError, SingularSystemError

__all__ = [
    "ConvergenceReport",
    "JacobianBlocks",
    "entropy",
    "jacobian_blocks",
    "ols_constraint_slope",
    "spectral_radius",
    "weight_iteration_matrix",
]


def entropy(w) -> float:
    """Shannon entropy -sum w log w, with 0 log 0 = 0."""
    w = np.asarray(w, dtype=np.float64)
    pos = w[w > 0.0]
    return float(-(pos @ np.log(pos)))


def ols_constraint_slope(residuals) -> float:
    """Slope of the multiplier equation at the uniform-weight solution.

    For ordinary least-squares residuals r this is
    (1/m) (sum r^2)^2 - sum r^4, which equals -m * Var(r^2).  By Jensen's
    inequality it is strictly negative unless all |r| coincide; a value
    near zero signals that tightening the error target buys nothing.
    """
    r = np.asarray(residuals, dtype=np.float64).ravel()
    if r.size == 0:
        raise InvalidInputError("empty residual vector")
    r2 = r * r
    return float(r2.sum() ** 2 / r.size - (r2 * r2).sum())


@dataclass(frozen=True)
class JacobianBlocks:
    """Blocks of the Jacobian of the full system F = (F1, F2, F3).

    a:        (n, n)  weighted normal matrix
    c:        (n, m)  d F1 / d w
    d_vec:    (n,)    d F2 / d P
    s_scalar: float   d F2 / d mu
    dd:       (m, n)  d F3 / d P
    v_vec:    (m,)    d F3 / d mu

    For negative mu the exponentials in d_vec and s_scalar are computed
    with a common downshift to avoid overflow; the shared positive factor
    cancels in the iteration matrix.  ``exp_shift`` records it (0 for
    mu >= 0, where the blocks are the raw formulas).
    """

    a: np.ndarray
    c: np.ndarray
    d_vec: np.ndarray
    s_scalar: float
    dd: np.ndarray
    v_vec: np.ndarray
    exp_shift: float = 0.0


def jacobian_blocks(state, design: DesignMatrix, q) -> JacobianBlocks:
    """Assemble the six Jacobian blocks at a solver state (s = 1 only).

    ``design`` must be the matrix of the system actually solved, i.e. the
    column-folded one for closed surfaces, and ``q`` the matching flat
    observation vector.
    """
    q = np.asarray(q, dtype=np.float64).reshape(design.m, -1)
    if q.shape[1] != 1:
        raise InvalidInputError("Jacobian diagnostics require a scalar-valued fit")
    b = design.matrix
    m, n = design.m, design.n
    coeffs = np.asarray(state.net.values, dtype=np.float64)
    if coeffs.shape[0] != n:
        # closed surface: the state stores the expanded net
        coeffs = extract_free_net(state.spec, state.net).values
    r = (b @ coeffs - q).ravel()
    mu = float(state.mu)
    w = np.asarray(state.w, dtype=np.float64)
    target = float(state.target_mse)
    r2 = r * r

    a = (b.T @ b.multiply(w[:, None])).toarray()
    c = b.T.multiply(r[None, :]).toarray()

    x = -mu * r2
    shift = max(0.0, float(x.max()))
    e = np.exp(x - shift)
    d_vec = ((2.0 * r * ((1.0 + mu * target) - mu * r2) * e) @ b).ravel()
    s_scalar = float((r2 * e) @ (target - r2))

    sig_x = x - x.max()
    sig = np.exp(sig_x)
    sig /= sig.sum()
    sr = sig * r
    bd = b.multiply((2.0 * mu * sr)[:, None]).toarray()
    dd = bd - np.outer(2.0 * mu * sig, sr @ b)
    v_vec = sig * (r2 - sig @ r2)

    return JacobianBlocks(
        a=a,
        c=c,
        d_vec=d_vec,
        s_scalar=s_scalar,
        dd=dd,
        v_vec=v_vec,
        exp_shift=shift,
    )


def weight_iteration_matrix(blocks: JacobianBlocks) -> np.ndarray:
    """The m x m block that propagates weight errors across one sweep.

    Linearising one Gauss-Seidel sweep around a fixed point gives
    dw_new = (dd - v d^T / s) a^{-1} c dw, so the spectral radius of this
    matrix decides local convergence.
    """
    if blocks.s_scalar == 0.0:
        raise DegenerateResidualsError(
            "multiplier-equation slope vanishes; iteration matrix undefined"
        )
    try:
        x = scipy.linalg.solve(blocks.a, blocks.c, assume_a="sym")
    except np.linalg.LinAlgError:
        raise SingularSystemError(
            "weighted normal matrix singular in the iteration-matrix assembly",
            size=blocks.a.shape[0],
        ) from None
    mfac = blocks.dd - np.outer(blocks.v_vec, blocks.d_vec) / blocks.s_scalar
    return mfac @ x


DENSE_EIG_LIMIT = 1500


def spectral_radius(
    matrix: np.ndarray,
    tol: float = 1e-8,
    max_iters: int = 5000,
    seed: int = 0,
) -> float:
    """Largest eigenvalue modulus.

    Small matrices (up to DENSE_EIG_LIMIT) use a dense eigenvalue solve;
    larger ones use power iteration with a geometric-tail stopping rule.
    If the iteration stalls, for instance on a dominant complex pair, the
    best running estimate is returned with a warning.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidInputError("spectral radius needs a square matrix")
    m = matrix.shape[0]
    if m == 0:
        return 0.0
    if m <= DENSE_EIG_LIMIT:
        return float(np.abs(np.linalg.eigvals(matrix)).max())
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(m)
    x /= np.linalg.norm(x)
    est = 0.0
    stable = 0
    for it in range(max_iters):
        y = matrix @ x
        nrm = float(np.linalg.norm(y))
        if nrm == 0.0:
            return 0.0
        stable = stable + 1 if abs(nrm - est) <= tol * max(1.0, nrm) else 0
        if it >= 10 and stable >= 3:
            return nrm
        est = nrm
        x = y / nrm
    warnings.warn("power iteration did not converge; estimate is approximate")
    return est


@dataclass
class ConvergenceReport:
    """Continuation-level convergence diagnostics (see the CLI diagnose command)."""

    s_star: float
    factors: list
    rho_g33: list
    iterations: list
    entropy_trace: list

"""The maximum-entropy weighted least-squares solver.

The fit jointly determines control points P, a scalar multiplier mu and a
weight distribution w such that

* P minimises the w-weighted squared residuals (normal system),
* the w-weighted mean squared error equals a prescribed target,
* w is the entropy-maximal distribution under those constraints, which
  works out to the softmax law w_k proportional to exp(-mu * r2_k).

A nonlinear Gauss-Seidel sweep cycles the three blocks; a continuation over
decreasing targets keeps each solve inside the basin of attraction of the
branch connected to the plain least-squares fit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bspline import (
    ControlNet,
    Dataset,
    DesignMatrix,
    SurfaceSpec,
    design_matrix,
    expand_closed_net,
    fold_design_columns,
)
from .diagnostics import entropy
from .errors import (
    ConfigError,
    DegenerateResidualsError,
    InfeasibleTargetError,
    InvalidInputError,
    IterationError,
)
from .wls import residual_sq_norms, solve_wls

__all__ = [
    "ContinuationSchedule",
    "FitReport",
    "MewlsState",
    "continuation_fit",
    "gauss_seidel_fit",
    "mse_constraint",
    "mse_constraint_slope",
    "softmax_weights",
    "solve_multiplier",
]


def _residuals_array(r2) -> np.ndarray:
    r2 = np.asarray(r2, dtype=np.float64)
    if r2.ndim != 1 or r2.size == 0:
        raise InvalidInputError("squared residuals must form a non-empty vector")
    if not np.all(np.isfinite(r2)) or np.any(r2 < 0.0):
        raise InvalidInputError("squared residuals must be finite and non-negative")
    return r2


def mse_constraint(r2, mu: float, target_mse: float) -> float:
    """Residual of the scalar equation fixing the multiplier.

    Equals sum_i exp(-mu (r2_i - min r2)) * (r2_i - target).  Relative to
    the raw sum (without subtracting min r2 in the exponent) this is scaled
    by the positive factor exp(mu * min r2), so roots and signs are
    unchanged while the value stays finite and retains its sign for
    arbitrarily large positive mu, which the root bracketing relies on.
    """
    r2 = _residuals_array(r2)
    d = r2 - r2.min()
    e = np.exp(-mu * d)
    return float(e @ (r2 - target_mse))


def mse_constraint_slope(r2, mu: float, target_mse: float) -> float:
    """Derivative of mse_constraint with respect to mu (same scaling)."""
    r2 = _residuals_array(r2)
    d = r2 - r2.min()
    e = np.exp(-mu * d)
    return float((d * e) @ (target_mse - r2))


def softmax_weights(r2, mu: float) -> np.ndarray:
    """Normalised weights w_k proportional to exp(-mu * r2_k).

    Computed with the max-shift so the normalising sum never underflows to
    zero; shifting all r2 by a constant leaves the result unchanged.
    """
    r2 = _residuals_array(r2)
    x = -mu * r2
    x -= x.max()
    e = np.exp(x)
    return e / e.sum()


def _constraint_terms(r2, mu, target):
    d = r2 - r2.min()
    e = np.exp(-mu * d)
    z = e.sum()
    gap = float(e @ (r2 - target))
    slope = float((d * e) @ (target - r2))
    return gap, slope, z


def solve_multiplier(
    r2,
    target_mse: float,
    mu0: float = 0.0,
    *,
    rtol: float = 1e-13,
    max_iters: int = 200,
) -> float:
    """Root of the multiplier equation via safeguarded Newton.

    The softmax-weighted mean of r2 is strictly decreasing in mu, so a root
    exists and is unique exactly when the target lies strictly between the
    smallest and largest squared residual.  Newton steps are taken inside a
    sign-change bracket grown geometrically from ``mu0``; steps that leave
    the bracket fall back to bisection, which makes the solve total on
    feasible inputs.
    """
    r2 = _residuals_array(r2)
    rmin = float(r2.min())
    rmax = float(r2.max())
    scale = max(abs(target_mse), rmax, 1e-300)
    if rmax - rmin <= 1e-15 * max(rmax, 1.0):
        raise DegenerateResidualsError(
            "all squared residuals coincide; the multiplier equation is "
            "degenerate (residual moduli must not all be equal)"
        )

    def gap_at(mu):
        gap, slope, z = _constraint_terms(r2, mu, target_mse)
        # weighted-MSE mismatch, scale free
        return gap, slope, gap / z

    gap0, slope0, mis0 = gap_at(mu0)
    if abs(mis0) <= rtol * scale:
        return float(mu0)

    if target_mse <= rmin or target_mse >= rmax:
        raise InfeasibleTargetError(
            f"target {target_mse} outside the reachable open interval "
            f"({rmin}, {rmax})"
        )

    # bracket a sign change; the gap is positive below the root and negative
    # above it because the softmax-weighted mean decreases in mu
    step = 1.0 / max(rmax - rmin, 1e-30)
    lo = hi = float(mu0)
    if gap0 > 0.0:
        for _ in range(600):
            hi = lo + step
            if gap_at(hi)[0] <= 0.0:
                break
            lo = hi
            step *= 2.0
        else:
            raise IterationError("failed to bracket the multiplier root")
    else:
        for _ in range(600):
            lo = hi - step
            if gap_at(lo)[0] > 0.0:
                break
            hi = lo
            step *= 2.0
        else:
            raise IterationError("failed to bracket the multiplier root")

    mu = 0.5 * (lo + hi)
    for _ in range(max_iters):
        gap, slope, mis = gap_at(mu)
        if abs(mis) <= rtol * scale:
            return float(mu)
        if gap > 0.0:
            lo = mu
        else:
            hi = mu
        if slope != 0.0:
            candidate = mu - gap / slope
        else:
            candidate = np.nan
        if np.isfinite(candidate) and lo < candidate < hi:
            mu = candidate
        else:
            mu = 0.5 * (lo + hi)
        if hi - lo <= abs(mu) * 1e-16:
            return float(mu)
    raise IterationError(
        f"multiplier iteration did not converge within {max_iters} steps",
        last_state=float(mu),
    )


@dataclass(frozen=True)
class MewlsState:
    """Converged (or last) solver state: the fixed-point triple plus context."""

    spec: SurfaceSpec
    net: ControlNet
    mu: float
    w: np.ndarray
    r2: np.ndarray
    target_mse: float
    mse_uw: float

    @property
    def weighted_mse(self) -> float:
        return float(self.w @ self.r2)


@dataclass
class FitReport:
    """Per-fit diagnostics, JSON-friendly."""

    reduction: float
    target_mse: float
    mse_uw: float
    iterations: int
    converged: bool
    mu: float
    weighted_mse: float
    entropy: float
    mu_trace: list = field(default_factory=list)
    change_trace: list = field(default_factory=list)
    entropy_trace: list = field(default_factory=list)
    weight_sum_error: float = 0.0
    block_residuals: dict = field(default_factory=dict)
    wall_time_s: float = 0.0


@dataclass(frozen=True)
class ContinuationSchedule:
    """Strictly increasing reduction factors; target_mse = mse_uw / factor."""

    factors: tuple
    tol: float = 1e-8
    max_iters: int = 200

    def __post_init__(self):
        factors = tuple(float(f) for f in self.factors)
        object.__setattr__(self, "factors", factors)
        if not factors:
            raise ConfigError("schedule needs at least one factor")
        if factors[0] < 1.0:
            raise ConfigError("first reduction factor must be at least 1")
        if any(b <= a for a, b in zip(factors, factors[1:])):
            raise ConfigError("reduction factors must be strictly increasing")

    @classmethod
    def to_reduction(cls, r_final: float, *, tol: float = 1e-8, max_iters: int = 200):
        """Default ladder: 1, 2, 5, 10, 20, 50, ... up to the terminal factor."""
        if r_final < 1.0:
            raise ConfigError("terminal reduction factor must be at least 1")
        factors = [1.0]
        decade = 1.0
        while True:
            advanced = False
            for mult in (2.0, 5.0, 10.0):
                cand = decade * mult
                if cand < r_final:
                    factors.append(cand)
                    advanced = True
            if decade * 10.0 >= r_final:
                break
            decade *= 10.0
            if not advanced:
                break
        if r_final > factors[-1]:
            factors.append(float(r_final))
        return cls(tuple(factors), tol=tol, max_iters=max_iters)


def _block_change(new: np.ndarray, old: np.ndarray) -> float:
    denom = max(float(np.abs(new).max()), 1e-300)
    return float(np.abs(new - old).max()) / denom


def _uniform_mse(design_folded: DesignMatrix, q: np.ndarray) -> float:
    m = design_folded.m
    w = np.full(m, 1.0 / m)
    net = solve_wls(design_folded, w, q)
    return float(residual_sq_norms(design_folded, net, q).mean())


def gauss_seidel_fit(
    spec: SurfaceSpec,
    data: Dataset,
    target_mse: float,
    *,
    tol: float = 1e-8,
    max_iters: int = 200,
    w0: np.ndarray | None = None,
    mu0: float = 0.0,
    mse_uw: float | None = None,
    design: DesignMatrix | None = None,
) -> tuple[MewlsState, FitReport]:
    """One nonlinear Gauss-Seidel solve at a fixed target MSE.

    Each sweep solves the weighted normal system for the control points,
    re-solves the scalar multiplier equation warm-started at the previous
    multiplier, and refreshes the softmax weights.  Convergence is declared
    when the largest relative sweep-to-sweep change over the three blocks
    drops below ``tol``.  On the first sweep only the multiplier and weight
    changes are measured; the control points are a pure function of the
    weights, so an unchanged weight vector already certifies a fixed point.
    """
    t0 = time.perf_counter()
    dm_full = design if design is not None else design_matrix(spec, data)
    dm = fold_design_columns(spec, dm_full)
    q = data.flat_q()
    m = dm.m

    if mse_uw is None:
        mse_uw = _uniform_mse(dm, q)

    if w0 is None:
        w = np.full(m, 1.0 / m)
    else:
        w = np.asarray(w0, dtype=np.float64)
        if w.shape != (m,):
            raise InvalidInputError(f"w0 must have shape ({m},)")
        w = w / w.sum()
    mu = float(mu0)

    report = FitReport(
        reduction=mse_uw / target_mse if target_mse > 0 else np.inf,
        target_mse=float(target_mse),
        mse_uw=float(mse_uw),
        iterations=0,
        converged=False,
        mu=mu,
        weighted_mse=np.nan,
        entropy=np.nan,
    )

    net = None
    r2 = None
    prev_coeffs = None
    for sweep in range(1, max_iters + 1):
        try:
            net = solve_wls(dm, w, q)
            r2 = residual_sq_norms(dm, net, q)
            mu_new = solve_multiplier(r2, target_mse, mu0=mu)
        except Exception as exc:
            if isinstance(exc, IterationError):
                exc.report = report
            raise
        w_new = softmax_weights(r2, mu_new)

        change = max(
            _block_change(w_new, w),
            abs(mu_new - mu) / max(1.0, abs(mu_new)),
        )
        if prev_coeffs is not None:
            change = max(change, _block_change(net.values, prev_coeffs))
        prev_coeffs = net.values

        report.iterations = sweep
        report.mu_trace.append(float(mu_new))
        report.change_trace.append(change)
        report.entropy_trace.append(entropy(w_new))
        report.weight_sum_error = max(
            report.weight_sum_error, abs(float(w_new.sum()) - 1.0)
        )

        w, mu = w_new, mu_new
        if change <= tol:
            report.converged = True
            break

    if not report.converged:
        raise IterationError(
            f"Gauss-Seidel did not converge in {max_iters} sweeps "
            f"(last change {report.change_trace[-1]:.3e})",
            report=report,
        )

    full_net = expand_closed_net(spec, net) if spec.closed_u else net
    state = MewlsState(
        spec=spec,
        net=full_net,
        mu=mu,
        w=w,
        r2=r2,
        target_mse=float(target_mse),
        mse_uw=float(mse_uw),
    )

    # fixed-point residuals of the three blocks at exit
    f1 = dm.matrix.T @ (w[:, None] * (dm.matrix @ net.values - q))
    gap, _, z = _constraint_terms(r2, mu, target_mse)
    report.mu = mu
    report.weighted_mse = state.weighted_mse
    report.entropy = entropy(w)
    report.block_residuals = {
        "normal_system": float(np.abs(f1).max()),
        "mse_constraint": abs(gap / z),
        "weight_update": float(np.abs(w - softmax_weights(r2, mu)).max()),
    }
    report.wall_time_s = time.perf_counter() - t0
    return state, report


def continuation_fit(
    spec: SurfaceSpec,
    data: Dataset,
    schedule: ContinuationSchedule,
) -> tuple[MewlsState, list[FitReport]]:
    """Run the solver along a ladder of decreasing target MSEs.

    The first stage at factor 1 is the plain least-squares fit and fixes
    the baseline error; each later stage is warm-started from the previous
    triple.  A stage failure re-raises with the last successful state
    attached to the exception.
    """
    dm_full = design_matrix(spec, data)
    q = data.flat_q()
    mse_uw = _uniform_mse(fold_design_columns(spec, dm_full), q)

    state = None
    reports: list[FitReport] = []
    w = None
    mu = 0.0
    for factor in schedule.factors:
        target = mse_uw / factor
        try:
            state, rep = gauss_seidel_fit(
                spec,
                data,
                target,
                tol=schedule.tol,
                max_iters=schedule.max_iters,
                w0=w,
                mu0=mu,
                mse_uw=mse_uw,
                design=dm_full,
            )
        except Exception as exc:
            # abort with the last successful stage attached
            exc.last_state = state
            raise
        rep.reduction = factor
        reports.append(rep)
        w, mu = state.w, state.mu
    return state, reports

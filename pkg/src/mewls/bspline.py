"""Tensor-product B-spline surfaces.

Knot vectors, basis evaluation, surface evaluation, and assembly of the
design matrix for scattered and structured data.  Everything here is a pure
function of its inputs; the types are frozen dataclasses.

Conventions used throughout the package:

* knots live in [0, 1] and are non-decreasing; a basis of n functions of
  degree d needs n + d + 1 knots,
* degree-0 functions are indicators of the half-open spans
  [knot_i, knot_{i+1}), except that the final one also covers the right
  endpoint,
* any 0/0 arising from zero-width spans in the two-term recursion counts
  as 0,
* control points and design-matrix columns are ordered with the u-index
  running fastest: column j*n1 + i holds the function b_i(u) * b_j(v).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse

from . import _kernels
from .errors import ConfigError, DomainError, InvalidInputError

__all__ = [
    "ControlNet",
    "Dataset",
    "DesignMatrix",
    "KnotVector",
    "SurfaceSpec",
    "basis_values",
    "clamped_knots",
    "design_matrix",
    "design_matrix_scattered",
    "design_matrix_structured",
    "eval_surface",
    "expand_closed_net",
    "extract_free_net",
    "fold_design_columns",
    "scattered_data",
    "structured_data",
    "uniform_knots",
]

_VALIDITY_SLACK = 1e-12


@dataclass(frozen=True)
class KnotVector:
    """Ordered knot sequence in [0, 1] defining one univariate basis."""

    knots: np.ndarray
    degree: int

    def __post_init__(self):
        knots = np.ascontiguousarray(self.knots, dtype=np.float64)
        object.__setattr__(self, "knots", knots)
        if self.degree < 0:
            raise ConfigError("degree must be non-negative")
        if knots.ndim != 1 or knots.size < 2 * (self.degree + 1):
            raise ConfigError(
                f"need at least {2 * (self.degree + 1)} knots for degree "
                f"{self.degree}, got {knots.size}"
            )
        if np.any(np.diff(knots) < 0):
            raise ConfigError("knots must be non-decreasing")
        if knots[0] != 0.0 or knots[-1] != 1.0:
            raise ConfigError("knots must start at 0 and end at 1")

    @property
    def basis_count(self) -> int:
        return self.knots.size - self.degree - 1

    @property
    def validity(self) -> tuple[float, float]:
        """Interval on which the basis sums to one."""
        n = self.basis_count
        return float(self.knots[self.degree]), float(self.knots[n])

    def is_clamped(self) -> bool:
        d = self.degree
        return bool(
            np.all(self.knots[: d + 1] == 0.0) and np.all(self.knots[-(d + 1):] == 1.0)
        )


def clamped_knots(n: int, degree: int) -> KnotVector:
    """Clamped knot vector: d+1 zeros, equispaced interior, d+1 ones.

    The resulting basis interpolates the first and last coefficients at the
    interval ends.
    """
    if n <= degree:
        raise ConfigError(f"basis count {n} must exceed degree {degree}")
    interior = n - degree - 1
    knots = np.concatenate(
        [
            np.zeros(degree + 1),
            np.arange(1, interior + 1, dtype=np.float64) / (interior + 1),
            np.ones(degree + 1),
        ]
    )
    return KnotVector(knots, degree)


def uniform_knots(n: int, degree: int) -> KnotVector:
    """n + d + 1 equally spaced knots spanning [0, 1]."""
    if n <= degree:
        raise ConfigError(f"basis count {n} must exceed degree {degree}")
    return KnotVector(np.linspace(0.0, 1.0, n + degree + 1), degree)


def basis_values(kv: KnotVector, t: float) -> np.ndarray:
    """All basis values at a single point, by the two-term recursion.

    Runs the recursion over the full set of degree-0 indicators, so it is
    valid anywhere in [0, 1], including outside the validity interval where
    the values no longer sum to one.  This is the slow reference route; bulk
    evaluation goes through the span kernel.
    """
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"parameter {t} outside [0, 1]")
    knots = kv.knots
    b = np.where((knots[:-1] <= t) & (t < knots[1:]), 1.0, 0.0)
    if t >= knots[-1]:
        # right-endpoint convention: the final step function covers t = 1;
        # with repeated end knots that is the last span of positive width
        nonempty = np.nonzero(knots[:-1] < knots[1:])[0]
        b[nonempty[-1]] = 1.0
    for deg in range(1, kv.degree + 1):
        nb = b.size - 1
        left_den = knots[deg : deg + nb] - knots[:nb]
        right_den = knots[deg + 1 : deg + 1 + nb] - knots[1 : 1 + nb]
        with np.errstate(divide="ignore", invalid="ignore"):
            lt = np.where(left_den > 0.0, (t - knots[:nb]) / left_den, 0.0)
            rt = np.where(right_den > 0.0, (knots[deg + 1 : deg + 1 + nb] - t) / right_den, 0.0)
        b = lt * b[:-1] + rt * b[1:]
    return b


@dataclass(frozen=True)
class SurfaceSpec:
    """Configuration of a tensor-product spline surface.

    ``closed_u`` ties the last ``wrap_count`` rows of the control grid to
    the first ones, which makes every u-curve closed with degree-1
    continuous derivatives when ``wrap_count`` equals the degree.
    """

    knots_u: KnotVector
    knots_v: KnotVector
    s: int = 1
    closed_u: bool = False
    wrap_count: int = 0

    def __post_init__(self):
        if self.knots_u.degree != self.knots_v.degree:
            raise ConfigError("u and v degrees must be equal")
        if self.s < 1:
            raise ConfigError("codomain dimension must be at least 1")
        if not self.closed_u and self.wrap_count != 0:
            raise ConfigError("wrap_count requires closed_u")
        if self.wrap_count < 0:
            raise ConfigError("wrap_count must be non-negative")
        if self.closed_u and self.wrap_count >= self.n1 - self.wrap_count:
            raise ConfigError("wrap_count must be smaller than the free row count")

    @property
    def degree(self) -> int:
        return self.knots_u.degree

    @property
    def n1(self) -> int:
        return self.knots_u.basis_count

    @property
    def n2(self) -> int:
        return self.knots_v.basis_count

    @property
    def n1_free(self) -> int:
        return self.n1 - self.wrap_count

    @property
    def n_coeffs(self) -> int:
        return self.n1 * self.n2

    @property
    def validity(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return self.knots_u.validity, self.knots_v.validity


@dataclass(frozen=True)
class ControlNet:
    """Control-point matrix, one point per row, u-index fastest.

    ``values[j * n1 + i]`` is the point multiplying b_i(u) * b_j(v).
    """

    values: np.ndarray
    n1: int
    n2: int

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        if values.shape[0] == 1 and self.n1 * self.n2 > 1:
            values = values.T
        object.__setattr__(self, "values", values)
        if values.shape[0] != self.n1 * self.n2:
            raise InvalidInputError(
                f"control net has {values.shape[0]} rows, expected {self.n1 * self.n2}"
            )

    @property
    def s(self) -> int:
        return self.values.shape[1]

    def grid(self) -> np.ndarray:
        """(n1, n2, s) view with grid[i, j] the control point P_ij."""
        return self.values.reshape(self.n2, self.n1, self.s).transpose(1, 0, 2)


@dataclass(frozen=True)
class Dataset:
    """Observation set, either scattered points or a structured grid.

    Scattered: ``u``, ``v`` are length-m parameter vectors and ``q`` is the
    (m, s) observation matrix.  Structured: ``u`` has length m1, ``v`` has
    length m2 and ``q`` is an (m1, m2, s) block array; the flattened point
    order runs the u-index fastest, matching the control-net ordering.
    """

    u: np.ndarray
    v: np.ndarray
    q: np.ndarray
    structured: bool = False

    def __post_init__(self):
        u = np.ascontiguousarray(self.u, dtype=np.float64)
        v = np.ascontiguousarray(self.v, dtype=np.float64)
        q = np.asarray(self.q, dtype=np.float64)
        if u.ndim != 1 or v.ndim != 1:
            raise InvalidInputError("parameter vectors must be one-dimensional")
        if u.size == 0 or v.size == 0:
            raise InvalidInputError("empty dataset")
        for name, arr in (("u", u), ("v", v)):
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise DomainError(f"{name} parameters must lie in [0, 1]")
        if self.structured:
            if q.ndim == 2:
                q = q[:, :, None]
            if q.ndim != 3 or q.shape[0] != u.size or q.shape[1] != v.size:
                raise InvalidInputError(
                    f"structured observations must have shape ({u.size}, {v.size}, s)"
                )
        else:
            if q.ndim == 1:
                q = q[:, None]
            if q.ndim != 2 or q.shape[0] != u.size or u.size != v.size:
                raise InvalidInputError("scattered u, v, q lengths must agree")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "q", q)

    @property
    def m(self) -> int:
        return self.q.shape[0] * self.q.shape[1] if self.structured else self.q.shape[0]

    @property
    def s(self) -> int:
        return self.q.shape[-1]

    @property
    def m1(self) -> int:
        if not self.structured:
            raise InvalidInputError("m1 is defined for structured data only")
        return self.u.size

    @property
    def m2(self) -> int:
        if not self.structured:
            raise InvalidInputError("m2 is defined for structured data only")
        return self.v.size

    def flat_q(self) -> np.ndarray:
        """(m, s) observation matrix in design-matrix row order."""
        if not self.structured:
            return self.q
        return self.q.reshape(self.m1 * self.m2, self.s, order="F")

    def expanded_params(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-row (u, v) parameters in design-matrix row order."""
        if not self.structured:
            return self.u, self.v
        return np.tile(self.u, self.m2), np.repeat(self.v, self.m1)


def scattered_data(u, v, q) -> Dataset:
    return Dataset(np.asarray(u), np.asarray(v), np.asarray(q), structured=False)


def structured_data(u, v, q) -> Dataset:
    return Dataset(np.asarray(u), np.asarray(v), np.asarray(q), structured=True)


@dataclass(frozen=True)
class DesignMatrix:
    """Sparse m x (n1*n2) matrix of tensor basis values at the data points.

    At most (degree+1)^2 entries per row are nonzero.  ``n1`` and ``n2``
    describe the control grid the columns refer to; after column folding for
    closed surfaces they are the reduced grid dimensions.
    """

    matrix: sparse.csr_matrix
    n1: int
    n2: int

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()


def _basis_rows(kv: KnotVector, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = kv.validity
    t = np.ascontiguousarray(t, dtype=np.float64)
    if t.size and (t.min() < lo - _VALIDITY_SLACK or t.max() > hi + _VALIDITY_SLACK):
        raise DomainError(
            f"parameters outside basis validity interval [{lo}, {hi}]"
        )
    return _kernels.basis_span_values(kv.knots, kv.degree, t)


def _sparse_1d(kv: KnotVector, t: np.ndarray) -> sparse.csr_matrix:
    spans, vals = _basis_rows(kv, t)
    m = t.size
    d = kv.degree
    cols = spans[:, None] - d + np.arange(d + 1)[None, :]
    rows = np.repeat(np.arange(m), d + 1)
    return sparse.csr_matrix(
        (vals.ravel(), (rows, cols.ravel())), shape=(m, kv.basis_count)
    )


def design_matrix_scattered(spec: SurfaceSpec, data: Dataset) -> DesignMatrix:
    """Row k holds b_i(u_k) * b_j(v_k) in u-fastest column order."""
    if data.structured:
        raise InvalidInputError("expected a scattered dataset")
    d = spec.degree
    su, bu = _basis_rows(spec.knots_u, data.u)
    sv, bv = _basis_rows(spec.knots_v, data.v)
    m = data.m
    offs = np.arange(d + 1)
    iu = su[:, None] - d + offs[None, :]
    jv = sv[:, None] - d + offs[None, :]
    cols = (jv[:, :, None] * spec.n1 + iu[:, None, :]).reshape(m, -1)
    vals = (bv[:, :, None] * bu[:, None, :]).reshape(m, -1)
    rows = np.repeat(np.arange(m), (d + 1) ** 2)
    mat = sparse.csr_matrix(
        (vals.ravel(), (rows, cols.ravel())), shape=(m, spec.n_coeffs)
    )
    return DesignMatrix(mat, spec.n1, spec.n2)


def design_matrix_structured(spec: SurfaceSpec, data: Dataset) -> DesignMatrix:
    """Kronecker assembly over the parameter grid.

    Identical, row for row, to the scattered matrix on the expanded grid of
    all (u_k, v_l) pairs with the u-index running fastest.
    """
    if not data.structured:
        raise InvalidInputError("expected a structured dataset")
    bu = _sparse_1d(spec.knots_u, data.u)
    bv = _sparse_1d(spec.knots_v, data.v)
    mat = sparse.kron(bv, bu, format="csr")
    return DesignMatrix(mat, spec.n1, spec.n2)


def design_matrix(spec: SurfaceSpec, data: Dataset) -> DesignMatrix:
    if data.structured:
        return design_matrix_structured(spec, data)
    return design_matrix_scattered(spec, data)


def fold_design_columns(spec: SurfaceSpec, dm: DesignMatrix) -> DesignMatrix:
    """Merge columns of wrapped control rows for a closed-u surface.

    Column (i, j) with i >= n1_free is added onto column (i - n1_free, j),
    which is exactly the design matrix of the periodic basis in which the
    tied control rows are a single unknown.  No-op for open surfaces.
    """
    if not spec.closed_u or spec.wrap_count == 0:
        return dm
    nf = spec.n1_free
    coo = dm.matrix.tocoo()
    i = coo.col % spec.n1
    j = coo.col // spec.n1
    i = np.where(i >= nf, i - nf, i)
    mat = sparse.csr_matrix(
        (coo.data, (coo.row, j * nf + i)), shape=(dm.m, nf * spec.n2)
    )
    return DesignMatrix(mat, nf, spec.n2)


def expand_closed_net(spec: SurfaceSpec, free_net: ControlNet) -> ControlNet:
    """Append the wrapped rows: rows n1_free..n1-1 copy rows 0..wrap-1."""
    wrap = spec.wrap_count
    if free_net.n1 != spec.n1_free or free_net.n2 != spec.n2:
        raise ConfigError(
            f"free net is {free_net.n1} x {free_net.n2}, expected "
            f"{spec.n1_free} x {spec.n2}"
        )
    if wrap == 0:
        return free_net
    grid = free_net.values.reshape(spec.n2, spec.n1_free, free_net.s)
    full = np.concatenate([grid, grid[:, :wrap, :]], axis=1)
    return ControlNet(full.reshape(spec.n2 * spec.n1, free_net.s), spec.n1, spec.n2)


def extract_free_net(spec: SurfaceSpec, net: ControlNet) -> ControlNet:
    """Inverse of expand_closed_net: drop the wrapped rows."""
    if net.n1 != spec.n1 or net.n2 != spec.n2:
        raise ConfigError("net dimensions do not match the surface spec")
    if spec.wrap_count == 0:
        return net
    grid = net.values.reshape(spec.n2, spec.n1, net.s)
    free = grid[:, : spec.n1_free, :]
    return ControlNet(
        free.reshape(spec.n2 * spec.n1_free, net.s), spec.n1_free, spec.n2
    )


def eval_surface(spec: SurfaceSpec, net: ControlNet, u: float, v: float) -> np.ndarray:
    """Point on the surface, S(u, v) = sum_ij P_ij b_i(u) b_j(v)."""
    (ulo, uhi), (vlo, vhi) = spec.validity
    if not (ulo - _VALIDITY_SLACK <= u <= uhi + _VALIDITY_SLACK):
        raise DomainError(f"u={u} outside validity interval [{ulo}, {uhi}]")
    if not (vlo - _VALIDITY_SLACK <= v <= vhi + _VALIDITY_SLACK):
        raise DomainError(f"v={v} outside validity interval [{vlo}, {vhi}]")
    if net.n1 != spec.n1 or net.n2 != spec.n2:
        raise ConfigError("control net does not match the surface spec")
    bu = basis_values(spec.knots_u, float(u))
    bv = basis_values(spec.knots_v, float(v))
    grid = net.values.reshape(spec.n2, spec.n1, net.s)
    return np.einsum("i,j,jic->c", bu, bv, grid)

import numpy as np
import pytest

import mewls
from mewls import bspline
from mewls._kernels import _basis_py
from mewls.errors import ConfigError, DomainError, InvalidInputError

try:
    from mewls._kernels import _basis as _basis_cy

    BACKENDS = [_basis_py, _basis_cy]
except ImportError:
    BACKENDS = [_basis_py]


# ---------------------------------------------------------------- knots


def test_clamped_knots_bezier_case():
    kv = mewls.clamped_knots(4, 3)
    assert np.array_equal(kv.knots, [0, 0, 0, 0, 1, 1, 1, 1])


def test_clamped_knots_single_interior():
    kv = mewls.clamped_knots(5, 3)
    assert np.array_equal(kv.knots, [0, 0, 0, 0, 0.5, 1, 1, 1, 1])


def test_clamped_knots_rejects_low_basis_count():
    with pytest.raises(ConfigError):
        mewls.clamped_knots(3, 3)


def test_uniform_knots_thirteen_equispaced():
    kv = mewls.uniform_knots(9, 3)
    assert kv.knots.size == 13
    assert np.allclose(np.diff(kv.knots), 1.0 / 12)
    assert kv.validity == (0.25, 0.75)


def test_uniform_knots_degenerate_cases():
    assert np.array_equal(mewls.uniform_knots(1, 0).knots, [0, 1])
    assert np.allclose(mewls.uniform_knots(2, 1).knots, [0, 1 / 3, 2 / 3, 1])


def test_knotvector_validation():
    with pytest.raises(ConfigError):
        mewls.KnotVector(np.array([0.0, 0.5, 0.2, 1.0]), 1)
    with pytest.raises(ConfigError):
        mewls.KnotVector(np.array([0.1, 0.5, 0.7, 1.0]), 1)


# ---------------------------------------------------------------- basis


def test_basis_corner_values():
    kv = mewls.clamped_knots(4, 3)
    assert np.allclose(mewls.basis_values(kv, 0.0), [1, 0, 0, 0], atol=1e-15)
    assert np.allclose(mewls.basis_values(kv, 1.0), [0, 0, 0, 1], atol=1e-15)


def test_basis_cubic_bernstein_midpoint():
    kv = mewls.clamped_knots(4, 3)
    got = mewls.basis_values(kv, 0.5)
    assert np.abs(got - [0.125, 0.375, 0.375, 0.125]).max() < 1e-13


def test_basis_partition_of_unity(rng):
    for maker, n, d in [
        (mewls.clamped_knots, 10, 3),
        (mewls.clamped_knots, 5, 2),
        (mewls.uniform_knots, 9, 3),
    ]:
        kv = maker(n, d)
        lo, hi = kv.validity
        for t in lo + (hi - lo) * rng.random(200):
            b = mewls.basis_values(kv, t)
            assert abs(b.sum() - 1.0) < 1e-12
            assert (b >= 0).all()


def test_basis_rejects_out_of_range():
    kv = mewls.clamped_knots(4, 3)
    with pytest.raises(DomainError):
        mewls.basis_values(kv, 1.5)


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.__name__.split(".")[-1])
def test_kernel_matches_naive_recursion(backend, rng):
    for maker, n, d in [
        (mewls.clamped_knots, 7, 3),
        (mewls.clamped_knots, 4, 1),
        (mewls.uniform_knots, 9, 3),
        (mewls.uniform_knots, 6, 2),
    ]:
        kv = maker(n, d)
        lo, hi = kv.validity
        t = np.concatenate(
            [[lo, hi], lo + (hi - lo) * rng.random(300),
             kv.knots[(kv.knots >= lo) & (kv.knots <= hi)]]
        )
        spans, vals = backend.basis_span_values(kv.knots, d, t)
        dense = np.zeros((t.size, n))
        for i, (sp, row) in enumerate(zip(spans, vals)):
            dense[i, sp - d : sp + 1] = row
        naive = np.array([mewls.basis_values(kv, x) for x in t])
        assert np.abs(dense - naive).max() < 1e-14


def test_backends_agree_bitwise(rng):
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernel not built")
    kv = mewls.uniform_knots(9, 3)
    t = 0.25 + 0.5 * rng.random(500)
    s1, v1 = BACKENDS[0].basis_span_values(kv.knots, 3, t)
    s2, v2 = BACKENDS[1].basis_span_values(kv.knots, 3, t)
    assert np.array_equal(s1, s2)
    assert np.array_equal(v1, v2)


# ---------------------------------------------------------------- surfaces


def _random_net(rng, n1, n2, s):
    return mewls.ControlNet(rng.standard_normal((n1 * n2, s)), n1, n2)


def test_eval_surface_constant_net(rng):
    spec = mewls.SurfaceSpec(mewls.clamped_knots(5, 3), mewls.clamped_knots(4, 3))
    net = mewls.ControlNet(np.full((20, 1), 3.25), 5, 4)
    for u, v in rng.random((20, 2)):
        assert abs(mewls.eval_surface(spec, net, u, v)[0] - 3.25) < 1e-12


def test_eval_surface_corner_interpolation(rng):
    spec = mewls.SurfaceSpec(mewls.clamped_knots(5, 3), mewls.clamped_knots(4, 3), s=2)
    net = _random_net(rng, 5, 4, 2)
    grid = net.grid()
    assert np.allclose(mewls.eval_surface(spec, net, 0, 0), grid[0, 0], atol=1e-12)
    assert np.allclose(mewls.eval_surface(spec, net, 1, 0), grid[-1, 0], atol=1e-12)
    assert np.allclose(mewls.eval_surface(spec, net, 0, 1), grid[0, -1], atol=1e-12)
    assert np.allclose(mewls.eval_surface(spec, net, 1, 1), grid[-1, -1], atol=1e-12)


def test_eval_surface_matches_triple_loop_oracle(rng):
    spec = mewls.SurfaceSpec(mewls.clamped_knots(5, 2), mewls.clamped_knots(6, 2), s=3)
    net = _random_net(rng, 5, 6, 3)
    grid = net.grid()
    for u, v in rng.random((25, 2)):
        bu = mewls.basis_values(spec.knots_u, u)
        bv = mewls.basis_values(spec.knots_v, v)
        expected = np.zeros(3)
        for i in range(5):
            for j in range(6):
                expected += grid[i, j] * bu[i] * bv[j]
        got = mewls.eval_surface(spec, net, u, v)
        assert np.abs(got - expected).max() < 1e-13


def test_eval_surface_domain_error():
    spec = mewls.SurfaceSpec(mewls.uniform_knots(9, 3), mewls.clamped_knots(5, 3))
    net = mewls.ControlNet(np.zeros((45, 1)), 9, 5)
    with pytest.raises(DomainError):
        mewls.eval_surface(spec, net, 0.1, 0.5)  # outside u validity [0.25, 0.75]


# ---------------------------------------------------------------- design matrices


def test_scattered_corner_row_is_unit_vector():
    spec = mewls.SurfaceSpec(mewls.clamped_knots(4, 3), mewls.clamped_knots(4, 3))
    data = mewls.scattered_data([0.0], [0.0], [[1.0]])
    row = mewls.design_matrix_scattered(spec, data).toarray()[0]
    expected = np.zeros(16)
    expected[0] = 1.0
    assert np.abs(row - expected).max() < 1e-15


def test_scattered_rows_sum_to_one(rng):
    spec = mewls.SurfaceSpec(mewls.clamped_knots(7, 3), mewls.clamped_knots(5, 3))
    m = 300
    data = mewls.scattered_data(rng.random(m), rng.random(m), np.zeros((m, 1)))
    dm = mewls.design_matrix_scattered(spec, data)
    assert np.abs(dm.row_sums() - 1.0).max() < 1e-12
    nnz = np.diff(dm.matrix.indptr)
    assert nnz.max() <= 16


def test_scattered_matrix_consistent_with_eval(rng):
    spec = mewls.SurfaceSpec(mewls.clamped_knots(6, 3), mewls.clamped_knots(5, 3), s=2)
    net = _random_net(rng, 6, 5, 2)
    m = 60
    u, v = rng.random(m), rng.random(m)
    data = mewls.scattered_data(u, v, np.zeros((m, 2)))
    dm = mewls.design_matrix_scattered(spec, data)
    via_matrix = dm.matrix @ net.values
    direct = np.array([mewls.eval_surface(spec, net, a, b) for a, b in zip(u, v)])
    assert np.abs(via_matrix - direct).max() < 1e-13


def test_structured_degenerate_grid_matches_scattered(rng):
    spec = mewls.SurfaceSpec(mewls.clamped_knots(5, 3), mewls.clamped_knots(5, 3))
    u, v = [0.3], [0.7]
    ds = mewls.structured_data(u, v, np.zeros((1, 1, 1)))
    dx = mewls.scattered_data(u, v, np.zeros((1, 1)))
    a = mewls.design_matrix_structured(spec, ds).toarray()
    b = mewls.design_matrix_scattered(spec, dx).toarray()
    assert np.abs(a - b).max() < 1e-15


def test_structured_equals_expanded_scattered(rng):
    spec = mewls.SurfaceSpec(mewls.clamped_knots(5, 2), mewls.clamped_knots(6, 2))
    u = np.sort(rng.random(3))
    v = np.sort(rng.random(4))
    ds = mewls.structured_data(u, v, np.zeros((3, 4, 1)))
    dm_s = mewls.design_matrix_structured(spec, ds)
    ue, ve = ds.expanded_params()
    dm_x = mewls.design_matrix_scattered(
        spec, mewls.scattered_data(ue, ve, np.zeros((12, 1)))
    )
    assert np.abs(dm_s.toarray() - dm_x.toarray()).max() < 1e-14
    assert np.abs(dm_s.row_sums() - 1.0).max() < 1e-12


def test_empty_dataset_rejected():
    with pytest.raises(InvalidInputError):
        mewls.scattered_data([], [], np.zeros((0, 1)))


def test_dataset_flat_order_u_fastest():
    q = np.arange(6.0).reshape(3, 2, 1)  # q[k, l]
    ds = mewls.structured_data([0.0, 0.5, 1.0], [0.0, 1.0], q)
    flat = ds.flat_q().ravel()
    # index l * m1 + k
    assert np.array_equal(flat, [q[0, 0, 0], q[1, 0, 0], q[2, 0, 0], q[0, 1, 0], q[1, 1, 0], q[2, 1, 0]])


# ---------------------------------------------------------------- closed surfaces


def _closed_spec(s=1):
    return mewls.SurfaceSpec(
        mewls.uniform_knots(9, 3),
        mewls.clamped_knots(5, 3),
        s=s,
        closed_u=True,
        wrap_count=3,
    )


def test_expand_closed_net_ties_rows(rng):
    spec = _closed_spec(s=2)
    free = mewls.ControlNet(rng.standard_normal((30, 2)), 6, 5)
    full = mewls.expand_closed_net(spec, free)
    grid = full.grid()
    fgrid = free.grid()
    assert full.n1 == 9
    assert np.array_equal(grid[:6], fgrid)
    assert np.array_equal(grid[6:], fgrid[:3])
    back = mewls.extract_free_net(spec, full)
    assert np.array_equal(back.values, free.values)


def test_expand_wrap_zero_is_identity(rng):
    spec = mewls.SurfaceSpec(mewls.clamped_knots(5, 3), mewls.clamped_knots(5, 3))
    net = _random_net(rng, 5, 5, 1)
    assert mewls.expand_closed_net(spec, net) is net


def test_closed_config_validation():
    with pytest.raises(ConfigError):
        mewls.SurfaceSpec(
            mewls.uniform_knots(5, 3),
            mewls.clamped_knots(5, 3),
            closed_u=True,
            wrap_count=3,
        )  # 3 >= 5 - 3


def test_fold_design_columns_matches_expanded_net(rng):
    spec = _closed_spec()
    m = 40
    lo, hi = spec.knots_u.validity
    u = lo + (hi - lo) * rng.random(m)
    v = rng.random(m)
    data = mewls.scattered_data(u, v, np.zeros((m, 1)))
    dm = mewls.design_matrix_scattered(spec, data)
    folded = mewls.fold_design_columns(spec, dm)
    assert folded.n == 30
    free = mewls.ControlNet(rng.standard_normal((30, 1)), 6, 5)
    full = mewls.expand_closed_net(spec, free)
    a = folded.matrix @ free.values
    b = dm.matrix @ full.values
    assert np.abs(a - b).max() < 1e-14


def _derivative_coeffs(knots, degree, coeffs):
    """Control points of the derivative curve (standard difference formula)."""
    out = np.zeros(coeffs.size + 1)
    for j in range(coeffs.size + 1):
        den = knots[j + degree] - knots[j]
        if den > 0:
            prev = coeffs[j - 1] if j - 1 >= 0 else 0.0
            cur = coeffs[j] if j < coeffs.size else 0.0
            out[j] = degree * (cur - prev) / den
    return out


def test_closed_curves_join_smoothly(rng):
    # per-column u-curves close with matching value and first two derivatives
    spec = _closed_spec()
    free = mewls.ControlNet(rng.standard_normal((30, 1)), 6, 5)
    full = mewls.expand_closed_net(spec, free)
    grid = full.grid()[:, :, 0]  # (n1, n2)
    kv = spec.knots_u
    lo, hi = kv.validity
    kv1 = mewls.KnotVector(kv.knots, 2)
    kv2 = mewls.KnotVector(kv.knots, 1)

    for j in range(5):
        p = grid[:, j]
        d1 = _derivative_coeffs(kv.knots, 3, p)  # degree-2 coefficients
        d2 = _derivative_coeffs(kv.knots, 2, d1)  # degree-1 coefficients
        for kvec, c in ((kv, p), (kv1, d1), (kv2, d2)):
            assert c.size == kvec.basis_count
            a = float(mewls.basis_values(kvec, lo) @ c)
            b = float(mewls.basis_values(kvec, hi) @ c)
            assert abs(a - b) <= 1e-10 * max(1.0, abs(a))

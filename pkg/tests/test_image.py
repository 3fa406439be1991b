import numpy as np
import pytest

import mewls
from mewls.errors import DomainError, InvalidInputError
from mewls.image import (
    ImageGrid,
    box_counting_dimension,
    fit_image,
    image_to_dataset,
    load_png,
    mask_boundary,
    outlier_mask,
    restore_image,
    roi_contours,
    save_png,
    weight_grid,
)


def test_image_grid_validation():
    with pytest.raises(InvalidInputError):
        ImageGrid(np.full((4, 4), 1.5))
    with pytest.raises(InvalidInputError):
        ImageGrid(np.zeros((4, 4, 2)))
    img = ImageGrid(np.zeros((4, 5)))
    assert img.channels == 1 and img.width == 5 and img.height == 4


def test_image_to_dataset_2x2():
    img = ImageGrid(np.array([[0.0, 0.25], [0.5, 0.75]]))
    ds = image_to_dataset(img)
    assert ds.m == 4
    assert np.array_equal(ds.u, [0.0, 1.0])
    assert np.array_equal(ds.v, [0.0, 1.0])
    # q[k, l] = pixel (row=l, col=k)
    assert ds.q[1, 0, 0] == 0.25
    assert ds.q[0, 1, 0] == 0.5


def test_image_to_dataset_roundtrip(rng):
    img = ImageGrid(rng.random((7, 9, 3)))
    ds = image_to_dataset(img)
    back = ds.q.transpose(1, 0, 2)
    assert np.array_equal(back, img.values)


def test_degenerate_images_rejected():
    with pytest.raises(DomainError):
        image_to_dataset(ImageGrid(np.zeros((1, 8))))
    with pytest.raises(DomainError):
        image_to_dataset(ImageGrid(np.zeros((8, 1))))


def test_image_pixel_count_invariant():
    ds = image_to_dataset(ImageGrid(np.zeros((239, 425))))
    assert ds.m == 101575


def test_weight_grid_raster_order(rng):
    img = ImageGrid(rng.random((5, 4)))
    w = np.arange(20.0)
    grid = weight_grid(w, img)
    assert grid.shape == (5, 4)
    # flat index row * width + col
    assert grid[2, 3] == 2 * 4 + 3


def test_outlier_mask_thresholding():
    w = np.full(50, 1e-2)
    assert not outlier_mask(w).any()
    w[17] = 1e-9
    mask = outlier_mask(w)
    assert mask.sum() == 1 and mask[17]
    assert outlier_mask(w, relative_threshold=1e8).sum() == 0


def test_png_roundtrip(tmp_path, rng):
    img = ImageGrid(np.round(rng.random((12, 10, 3)) * 255) / 255)
    save_png(tmp_path / "a.png", img)
    again = load_png(tmp_path / "a.png")
    assert np.abs(again.values - img.values).max() < 1e-12
    gray = ImageGrid(np.round(rng.random((6, 8)) * 255) / 255)
    save_png(tmp_path / "g.png", gray)
    assert np.abs(load_png(tmp_path / "g.png").values - gray.values).max() < 1e-12


# ------------------------------------------------------------- fit + restore


def _smooth_with_salt(seed, n=64, salt_frac=0.01):
    gen = np.random.default_rng(seed)
    y, x = np.mgrid[0:n, 0:n] / (n - 1)
    base = 0.4 + 0.2 * np.sin(np.pi * x) * np.sin(np.pi * y)
    noisy = np.clip(base + gen.normal(0, 0.02, (n, n)), 0, 1)
    k = int(salt_frac * n * n)
    idx = gen.choice(n * n, size=k, replace=False)
    salted = noisy.copy().ravel()
    salted[idx] = 0.95
    flags = np.zeros(n * n, dtype=bool)
    flags[idx] = True
    return ImageGrid(noisy), ImageGrid(salted.reshape(n, n)), flags.reshape(n, n)


def test_fit_constant_image_raises_degenerate():
    # perfect fit leaves all residuals equal (zero): the weight law has no
    # isolated solution and the solver must say so
    img = ImageGrid(np.full((16, 16), 0.5))
    with pytest.raises(mewls.DegenerateResidualsError):
        fit_image(img, (4, 4), degree=2, reduction=2.0)


def test_fit_image_downweights_salt_pixels():
    clean, salted, flags = _smooth_with_salt(1)
    state, reports = fit_image(salted, (8, 8), reduction=2.0)
    wg = weight_grid(state.w, salted)
    median = np.median(wg)
    assert (wg[flags] < median).mean() >= 0.9


def test_restore_empty_mask_is_identity(rng):
    clean, salted, flags = _smooth_with_salt(2)
    state, _ = fit_image(salted, (8, 8), reduction=2.0)
    mask = np.zeros((salted.height, salted.width), dtype=bool)
    out = restore_image(salted, mask, state)
    assert np.array_equal(out.values, salted.values)


def test_restore_full_mask_is_model_render():
    clean, salted, flags = _smooth_with_salt(3)
    state, _ = fit_image(salted, (8, 8), reduction=2.0)
    mask = np.ones((salted.height, salted.width), dtype=bool)
    out = restore_image(salted, mask, state)
    ds = image_to_dataset(salted)
    dm = mewls.design_matrix_structured(state.spec, ds)
    pred = np.clip(dm.matrix @ state.net.values, 0.0, 1.0).reshape(
        salted.height, salted.width, 1
    )
    assert np.array_equal(out.values, pred)


def test_restore_idempotent():
    clean, salted, flags = _smooth_with_salt(4)
    state, _ = fit_image(salted, (8, 8), reduction=2.0)
    mask = outlier_mask(weight_grid(state.w, salted))
    once = restore_image(salted, mask, state)
    twice = restore_image(once, mask, state)
    assert np.array_equal(once.values, twice.values)


def test_mask_flag_count_monotone_in_reduction():
    clean, salted, flags = _smooth_with_salt(5)
    counts = []
    for r in (1.0, 2.0, 5.0):
        state, _ = fit_image(salted, (8, 8), reduction=r)
        counts.append(outlier_mask(weight_grid(state.w, salted)).sum())
    assert counts[0] <= counts[1] <= counts[2]


# ------------------------------------------------------------- contours


def _radial_dip(centers, n=60, width=6.0):
    y, x = np.mgrid[0:n, 0:n].astype(float)
    field = np.ones((n, n))
    for cy, cx in centers:
        field -= 0.9 * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / width**2)
    return field


def test_single_dip_gives_one_enclosing_contour():
    field = _radial_dip([(30, 30)])
    contours = roi_contours(field, 0.5)
    assert len(contours) == 1
    poly = contours[0]
    assert np.allclose(poly[0], poly[-1])  # closed
    center = poly.mean(axis=0)
    assert abs(center[0] - 30) < 1.0 and abs(center[1] - 30) < 1.0
    radii = np.linalg.norm(poly - center, axis=1)
    assert radii.std() / radii.mean() < 0.05  # near circular


def test_two_dips_give_two_contours():
    field = _radial_dip([(18, 18), (42, 42)])
    assert len(roi_contours(field, 0.5)) == 2


def test_contour_level_outside_range_empty():
    field = _radial_dip([(30, 30)])
    assert roi_contours(field, 2.0) == []
    assert roi_contours(np.ones((10, 10)), 0.5) == []


# ------------------------------------------------------------- fractal dimension


def test_box_dimension_filled_square():
    mask = np.zeros((400, 400), dtype=bool)
    mask[40:360, 40:360] = True
    res = box_counting_dimension(mask)
    assert abs(res.dimension - 2.0) < 0.1
    assert res.r_squared > 0.99
    assert len(res.box_sizes) >= 4


def test_box_dimension_line():
    mask = np.zeros((400, 400), dtype=bool)
    mask[np.arange(400), np.arange(400)] = True
    assert abs(box_counting_dimension(mask).dimension - 1.0) < 0.1


def test_box_dimension_empty_rejected():
    with pytest.raises(InvalidInputError):
        box_counting_dimension(np.zeros((64, 64), dtype=bool))


def test_mask_boundary_eight_connected():
    mask = np.zeros((9, 9), dtype=bool)
    mask[2:7, 2:7] = True
    boundary = mask_boundary(mask)
    assert boundary.sum() == 16  # perimeter of a 5x5 block
    assert not boundary[4, 4]

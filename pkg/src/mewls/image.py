"""Image applications: outlier-pixel detection, restoration, region contours
and a box-counting dimension estimator.

An image becomes a structured dataset by normalising pixel indices to
[0, 1] (u along columns, v along rows) and fitting all channels jointly
with one weight per pixel.  Pixels whose converged weight falls well below
the maximum are flagged as outliers and can be replaced by the model
prediction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.ndimage
from PIL import Image
from skimage import measure

from .bspline import (
    ControlNet,
    Dataset,
    SurfaceSpec,
    clamped_knots,
    design_matrix_structured,
    structured_data,
)
from .errors import DomainError, InvalidInputError
from .solver import ContinuationSchedule, MewlsState, continuation_fit

__all__ = [
    "BoxCountResult",
    "ImageGrid",
    "box_counting_dimension",
    "fit_image",
    "image_to_dataset",
    "load_png",
    "mask_boundary",
    "outlier_mask",
    "restore_image",
    "roi_contours",
    "save_png",
    "weight_grid",
]


@dataclass(frozen=True)
class ImageGrid:
    """Pixel raster with values normalised to [0, 1].

    ``values`` has shape (height, width, channels) with channels 1 or 3.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.ndim != 3 or values.shape[2] not in (1, 3):
            raise InvalidInputError("image must be (H, W) or (H, W, 1 or 3)")
        if values.size == 0:
            raise InvalidInputError("empty image")
        if values.min() < 0.0 or values.max() > 1.0:
            raise InvalidInputError("image values must lie in [0, 1]")
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


def load_png(path) -> ImageGrid:
    img = Image.open(path)
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB" if img.mode in ("RGBA", "P", "CMYK") else "L")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    return ImageGrid(arr)


def save_png(path, img: ImageGrid) -> None:
    arr = np.clip(np.round(img.values * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[2] == 1:
        Image.fromarray(arr[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(arr, mode="RGB").save(path)


def image_to_dataset(img: ImageGrid) -> Dataset:
    """Structured dataset: u = column/(W-1), v = row/(H-1), Q = pixel values.

    The flattened point order runs columns fastest, so a length-m weight
    vector reshapes back to the (H, W) raster directly.
    """
    h, w = img.height, img.width
    if h < 2 or w < 2:
        raise DomainError("images must be at least 2 x 2 to span a 2-d domain")
    u = np.arange(w) / (w - 1)
    v = np.arange(h) / (h - 1)
    q = img.values.transpose(1, 0, 2)  # (W, H, s) = (m1, m2, s)
    return structured_data(u, v, q)


def weight_grid(w: np.ndarray, img: ImageGrid) -> np.ndarray:
    """Reshape a flat per-point weight vector onto the image raster."""
    w = np.asarray(w, dtype=np.float64)
    if w.size != img.height * img.width:
        raise InvalidInputError("weight vector does not match the image size")
    return w.reshape(img.height, img.width)


def fit_image(
    img: ImageGrid,
    grid_dims: tuple[int, int],
    degree: int = 3,
    reduction: float = 2.0,
    *,
    schedule: ContinuationSchedule | None = None,
    tol: float = 1e-8,
    max_iters: int = 200,
):
    """Joint-channel entropy-weighted fit of an image.

    ``grid_dims`` is (n_u, n_v): control counts along the width and height.
    All channels share one weight per pixel.  Returns the converged state
    and the per-stage reports.
    """
    n1, n2 = grid_dims
    data = image_to_dataset(img)
    spec = SurfaceSpec(
        clamped_knots(n1, degree), clamped_knots(n2, degree), s=img.channels
    )
    if schedule is None:
        schedule = ContinuationSchedule.to_reduction(
            reduction, tol=tol, max_iters=max_iters
        )
    return continuation_fit(spec, data, schedule)


def outlier_mask(weights: np.ndarray, relative_threshold: float = 10.0) -> np.ndarray:
    """Flag entries whose weight fell below max(w) / relative_threshold."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size == 0 or np.any(weights < 0):
        raise InvalidInputError("weights must be non-empty and non-negative")
    return weights < weights.max() / relative_threshold


def restore_image(img: ImageGrid, mask: np.ndarray, state: MewlsState) -> ImageGrid:
    """Replace flagged pixels with the model prediction, clamped to [0, 1].

    Unflagged pixels are passed through bit for bit, so restoring twice
    with the same mask and state changes nothing.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (img.height, img.width):
        raise InvalidInputError("mask shape must match the image")
    data = image_to_dataset(img)
    dm = design_matrix_structured(state.spec, data)
    pred = np.clip(dm.matrix @ state.net.values, 0.0, 1.0)
    pred_img = pred.reshape(img.height, img.width, img.channels)
    out = img.values.copy()
    out[mask] = pred_img[mask]
    return ImageGrid(out)


def roi_contours(field: np.ndarray, level: float) -> list[np.ndarray]:
    """Iso-level polylines of a scalar field, as (x, y) vertex arrays.

    Marching-squares contours: each polyline is either closed or ends on
    the field boundary, contours never cross, and orientation is consistent
    (higher values on one fixed side).  A flat field, or a level outside
    the field range, yields no contours.
    """
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2:
        raise InvalidInputError("contour extraction needs a 2-d field")
    if field.min() == field.max():
        return []
    if not field.min() < level < field.max():
        return []
    contours = measure.find_contours(field, level)
    return [np.column_stack([c[:, 1], c[:, 0]]) for c in contours]


def mask_boundary(mask: np.ndarray) -> np.ndarray:
    """8-connected morphological boundary of a binary mask."""
    mask = np.asarray(mask, dtype=bool)
    eroded = scipy.ndimage.binary_erosion(
        mask, structure=np.ones((3, 3), dtype=bool), border_value=0
    )
    return mask & ~eroded


@dataclass(frozen=True)
class BoxCountResult:
    """Box-counting estimate with its log-log fit quality."""

    dimension: float
    r_squared: float
    box_sizes: tuple
    counts: tuple


def box_counting_dimension(mask: np.ndarray, min_scales: int = 4) -> BoxCountResult:
    """Box-counting (Minkowski) dimension of a binary pixel set.

    The set is cropped to its bounding box, padded to a power-of-two
    square, and occupied boxes are counted over dyadic box sizes up to a
    quarter of the padded side; coarser scales saturate (a handful of
    boxes always hit) and would flatten the slope.  Returns the
    least-squares slope of log(count) against log(1/size) together with
    the coefficient of determination of that fit.
    """
    mask = np.asarray(mask).astype(bool)
    if mask.ndim != 2:
        raise InvalidInputError("box counting needs a 2-d binary image")
    if not mask.any():
        raise InvalidInputError("box-counting dimension undefined for an empty set")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    mask = mask[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    side = 1
    while side < max(mask.shape):
        side *= 2
    padded = np.zeros((side, side), dtype=bool)
    padded[: mask.shape[0], : mask.shape[1]] = mask

    sizes = []
    counts = []
    size = 1
    while size <= side // 4:
        nb = side // size
        blocks = padded.reshape(nb, size, nb, size).any(axis=(1, 3))
        sizes.append(size)
        counts.append(int(blocks.sum()))
        size *= 2
    if len(sizes) < min_scales:
        raise InvalidInputError(
            f"need at least {min_scales} dyadic scales, image too small"
        )

    logs = np.log(np.asarray(sizes, dtype=np.float64))
    logc = np.log(np.asarray(counts, dtype=np.float64))
    slope, intercept = np.polyfit(logs, logc, 1)
    fit = slope * logs + intercept
    ss_res = float(((logc - fit) ** 2).sum())
    ss_tot = float(((logc - logc.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return BoxCountResult(
        dimension=float(-slope),
        r_squared=r2,
        box_sizes=tuple(sizes),
        counts=tuple(counts),
    )

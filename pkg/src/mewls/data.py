"""Synthetic datasets and cross-validation scoring.

Generators are pure functions of their seed.  Independent substreams
(spawned from one seed sequence) drive point placement, noise and outlier
cohorts, so changing one count never reshuffles the others.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bspline import (
    ControlNet,
    Dataset,
    SurfaceSpec,
    design_matrix_structured,
    scattered_data,
    structured_data,
)
from .errors import ConfigError, InvalidInputError

__all__ = [
    "SyntheticConfig",
    "cv_mse",
    "franke",
    "generate_franke_dataset",
    "generate_sphere_dataset",
    "load_scattered_csv",
    "load_structured_csv",
    "remap_to_validity",
    "save_scattered_csv",
    "save_structured_csv",
]


def franke(x, y):
    """The classic four-bump test surface on the unit square.

    Positive with two local maxima and one dip; values stay inside [0, 1]
    except in a small region around one peak.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    t1 = 0.75 * np.exp(-((9 * x - 2) ** 2 + (9 * y - 2) ** 2) / 4)
    t2 = 0.75 * np.exp(-((9 * x + 1) ** 2 / 49 + (9 * y + 1) / 10))
    t3 = 0.5 * np.exp(-((9 * x - 7) ** 2 + (9 * y - 3) ** 2) / 4)
    t4 = -0.2 * np.exp(-((9 * x - 4) ** 2 + (9 * y - 7) ** 2))
    return t1 + t2 + t3 + t4


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the scattered point-cloud generator."""

    seed: int
    n_clean: int = 1000
    noise_sigma: float = 1e-3
    n_outliers: int = 150
    grid_cv: int = 101

    def __post_init__(self):
        if self.n_clean < 0 or self.n_outliers < 0 or self.grid_cv < 2:
            raise ConfigError("counts must be non-negative and grid_cv >= 2")
        if self.noise_sigma < 0:
            raise ConfigError("noise sigma must be non-negative")


def generate_franke_dataset(cfg: SyntheticConfig) -> tuple[Dataset, np.ndarray]:
    """Noisy samples of the test surface plus uniform-cube outliers.

    Returns the scattered dataset and a boolean flag vector marking the
    outlier cohort.  Clean points are uniform on the unit square with
    additive Gaussian noise on the value; outliers are uniform in the unit
    cube and are never rejected, even if one lands near the surface.
    """
    ss = np.random.SeedSequence(cfg.seed)
    rng_pts, rng_noise, rng_out = (np.random.default_rng(s) for s in ss.spawn(3))

    uc = rng_pts.random(cfg.n_clean)
    vc = rng_pts.random(cfg.n_clean)
    zc = franke(uc, vc) + rng_noise.normal(0.0, cfg.noise_sigma, cfg.n_clean)

    out = rng_out.random((cfg.n_outliers, 3))

    u = np.concatenate([uc, out[:, 0]])
    v = np.concatenate([vc, out[:, 1]])
    z = np.concatenate([zc, out[:, 2]])
    flags = np.zeros(u.size, dtype=bool)
    flags[cfg.n_clean :] = True
    return scattered_data(u, v, z), flags


def generate_sphere_dataset(
    seed: int,
    perturb_fraction: float = 0.5,
    max_radial_factor: float = 4.0,
    m1: int = 15,
    m2: int = 12,
) -> tuple[Dataset, np.ndarray]:
    """Structured grid wrapping a unit sphere, with radial perturbations.

    Columns of the m1 x m2 grid are closed level circles (the last u-row
    repeats the first), rows are pole-to-pole meridians, and the first and
    last columns collapse to the poles.  A seeded subset of the physical
    points is scaled radially by factors drawn uniformly from
    [1, max_radial_factor]; grid entries that represent the same physical
    point (wrap row, pole columns) always move together.  Returns the
    dataset and the per-entry perturbation flags.
    """
    if max_radial_factor < 1.0:
        raise ConfigError("max_radial_factor must be at least 1")
    if not 0.0 <= perturb_fraction <= 1.0:
        raise ConfigError("perturb_fraction must lie in [0, 1]")
    ss = np.random.SeedSequence(seed)
    rng_sel, rng_fac = (np.random.default_rng(s) for s in ss.spawn(2))

    n_az = m1 - 1  # distinct azimuths; row m1-1 repeats row 0
    theta = 2.0 * np.pi * np.arange(n_az) / n_az
    phi = np.pi * np.arange(m2) / (m2 - 1)

    # one perturbation factor per physical point
    factors = np.ones((n_az, m2))
    selected = rng_sel.random((n_az, m2)) < perturb_fraction
    draws = 1.0 + (max_radial_factor - 1.0) * rng_fac.random((n_az, m2))
    # poles are single physical points: reuse the azimuth-0 decision
    selected[1:, 0] = selected[0, 0]
    selected[1:, -1] = selected[0, -1]
    draws[1:, 0] = draws[0, 0]
    draws[1:, -1] = draws[0, -1]
    factors[selected] = draws[selected]

    q = np.empty((m1, m2, 3))
    flags = np.zeros((m1, m2), dtype=bool)
    for k in range(m1):
        a = k % n_az
        for l in range(m2):
            p = np.array(
                [
                    np.sin(phi[l]) * np.cos(theta[a]),
                    np.sin(phi[l]) * np.sin(theta[a]),
                    np.cos(phi[l]),
                ]
            )
            q[k, l] = factors[a, l] * p
            flags[k, l] = selected[a, l]

    u = np.arange(m1) / (m1 - 1)
    v = np.arange(m2) / (m2 - 1)
    return structured_data(u, v, q), flags


def remap_to_validity(data: Dataset, spec: SurfaceSpec) -> Dataset:
    """Affinely map unit-interval parameters onto the spec's validity window.

    Needed for closed (uniform-knot) directions, whose basis is a partition
    of unity only on an interior subinterval of [0, 1].
    """
    (ulo, uhi), (vlo, vhi) = spec.validity
    u = ulo + data.u * (uhi - ulo)
    v = vlo + data.v * (vhi - vlo)
    return Dataset(u, v, data.q, structured=data.structured)


def cv_mse(spec: SurfaceSpec, net: ControlNet, reference, grid: int = 101) -> float:
    """Mean squared deviation from a reference on a uniform evaluation grid.

    ``reference`` is either a callable (u, v) -> values or another
    ControlNet under the same spec.  The grid covers the validity
    rectangle.
    """
    if grid < 2:
        raise InvalidInputError("grid must have at least 2 points per side")
    (ulo, uhi), (vlo, vhi) = spec.validity
    u = np.linspace(ulo, uhi, grid)
    v = np.linspace(vlo, vhi, grid)
    dm = design_matrix_structured(
        spec, structured_data(u, v, np.zeros((grid, grid, 1)))
    )
    surf = dm.matrix @ net.values
    if isinstance(reference, ControlNet):
        ref = dm.matrix @ reference.values
    else:
        uu, vv = np.tile(u, grid), np.repeat(v, grid)
        ref = np.asarray(reference(uu, vv), dtype=np.float64)
        if ref.ndim == 1:
            ref = ref[:, None]
    diff = surf - ref
    return float(np.einsum("ks,ks->k", diff, diff).mean())


def _fmt(x: float) -> str:
    return repr(float(x))


def save_scattered_csv(path, data: Dataset, flags=None) -> None:
    """u,v,q1..qs per row; optional companion .flags.csv with 0/1 rows."""
    if data.structured:
        raise InvalidInputError("expected scattered data")
    s = data.s
    header = "u,v," + ",".join(f"q{i + 1}" for i in range(s))
    lines = [header]
    for k in range(data.m):
        vals = [_fmt(data.u[k]), _fmt(data.v[k])] + [_fmt(x) for x in data.q[k]]
        lines.append(",".join(vals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    if flags is not None:
        fpath = str(path) + ".flags.csv"
        with open(fpath, "w") as fh:
            fh.write("outlier\n")
            fh.write("\n".join(str(int(f)) for f in np.asarray(flags).ravel()) + "\n")


def load_scattered_csv(path) -> Dataset:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("u,v"):
        raise InvalidInputError(f"{path}: not a scattered dataset CSV")
    rows = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    return scattered_data(rows[:, 0], rows[:, 1], rows[:, 2:])


def save_structured_csv(path, data: Dataset, flags=None) -> None:
    """Header with m1,m2,s, the two parameter vectors, then row-major blocks."""
    if not data.structured:
        raise InvalidInputError("expected structured data")
    m1, m2, s = data.m1, data.m2, data.s
    lines = ["m1,m2,s", f"{m1},{m2},{s}"]
    lines.append(",".join(_fmt(x) for x in data.u))
    lines.append(",".join(_fmt(x) for x in data.v))
    for k in range(m1):
        lines.append(",".join(_fmt(x) for x in data.q[k].ravel()))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    if flags is not None:
        fpath = str(path) + ".flags.csv"
        flags = np.asarray(flags, dtype=int)
        with open(fpath, "w") as fh:
            fh.write("\n".join(",".join(str(x) for x in row) for row in flags) + "\n")


def load_structured_csv(path) -> Dataset:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "m1,m2,s":
        raise InvalidInputError(f"{path}: not a structured dataset CSV")
    m1, m2, s = (int(x) for x in lines[1].split(","))
    u = np.array([float(x) for x in lines[2].split(",")])
    v = np.array([float(x) for x in lines[3].split(",")])
    if len(lines) != 4 + m1 or u.size != m1 or v.size != m2:
        raise InvalidInputError(f"{path}: inconsistent structured CSV")
    q = np.array(
        [[float(x) for x in lines[4 + k].split(",")] for k in range(m1)]
    ).reshape(m1, m2, s)
    return structured_data(u, v, q)

"""Command-line front end.

Subcommands: generate, fit, diagnose, restore, contours, fractal-dim.
Options may come from a JSON config file (unknown keys are rejected) with
command-line flags taking precedence; every run writes a manifest recording
the fully resolved configuration, so reruns with the same manifest and seed
reproduce the outputs byte for byte (PNGs may differ in metadata only).

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, _kernels, data as data_mod, diagnostics, image as image_mod
from .bspline import (
    ControlNet,
    KnotVector,
    SurfaceSpec,
    clamped_knots,
    design_matrix,
    fold_design_columns,
    uniform_knots,
)
from .errors import (
    ConfigError,
    DegenerateResidualsError,
    DomainError,
    InfeasibleTargetError,
    InvalidInputError,
    IterationError,
    MewlsError,
    SingularSystemError,
)
from .solver import ContinuationSchedule, continuation_fit
from .wls import solve_wls, residual_sq_norms

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

_SOLVER_ERRORS = (
    IterationError,
    SingularSystemError,
    DegenerateResidualsError,
    InfeasibleTargetError,
)
_CONFIG_ERRORS = (ConfigError, InvalidInputError, DomainError)


def _report_dict(rep) -> dict:
    """FitReport as a dict without volatile timing fields (byte-stable)."""
    payload = dataclasses.asdict(rep)
    payload.pop("wall_time_s", None)
    return payload


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("MEWLS_OUT_DIR") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(outdir: Path, command: str, cfg: dict) -> None:
    _write_json(
        outdir / "manifest.json",
        {
            "command": command,
            "config": cfg,
            "version": __version__,
            "kernel_backend": _kernels.BACKEND,
        },
    )


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


# ---------------------------------------------------------------------------
# JSON serialisation of spline objects


def spec_to_dict(spec: SurfaceSpec) -> dict:
    return {
        "degree": spec.degree,
        "knots_u": spec.knots_u.knots.tolist(),
        "knots_v": spec.knots_v.knots.tolist(),
        "n1": spec.n1,
        "n2": spec.n2,
        "s": spec.s,
        "closed_u": spec.closed_u,
        "wrap_count": spec.wrap_count,
    }


def spec_from_dict(d: dict) -> SurfaceSpec:
    return SurfaceSpec(
        KnotVector(np.asarray(d["knots_u"]), d["degree"]),
        KnotVector(np.asarray(d["knots_v"]), d["degree"]),
        s=d.get("s", 1),
        closed_u=d.get("closed_u", False),
        wrap_count=d.get("wrap_count", 0),
    )


def net_to_dict(spec: SurfaceSpec, net: ControlNet) -> dict:
    payload = spec_to_dict(spec)
    payload["values"] = net.values.tolist()
    return payload


def net_from_dict(d: dict) -> tuple[SurfaceSpec, ControlNet]:
    spec = spec_from_dict(d)
    return spec, ControlNet(np.asarray(d["values"]), spec.n1, spec.n2)


# ---------------------------------------------------------------------------
# config handling


def _merge_config(args, parser_defaults: dict, keys: set[str]) -> dict:
    """Layer: defaults < JSON config file < explicit CLI flags."""
    cfg = dict(parser_defaults)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        unknown = set(loaded) - keys
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None and value != parser_defaults.get(key):
            cfg[key] = value
        cfg.setdefault(key, parser_defaults.get(key))
    return cfg


def _build_spec(cfg: dict, s: int) -> SurfaceSpec:
    degree = int(cfg["degree"])
    n1, n2 = int(cfg["n1"]), int(cfg["n2"])
    if cfg.get("closed_u"):
        return SurfaceSpec(
            uniform_knots(n1, degree),
            clamped_knots(n2, degree),
            s=s,
            closed_u=True,
            wrap_count=degree,
        )
    return SurfaceSpec(clamped_knots(n1, degree), clamped_knots(n2, degree), s=s)


def _schedule_from_cfg(cfg: dict) -> ContinuationSchedule:
    if cfg.get("schedule"):
        factors = cfg["schedule"]
        if isinstance(factors, str):
            factors = _float_list(factors)
        return ContinuationSchedule(
            tuple(factors), tol=float(cfg["tol"]), max_iters=int(cfg["max_iters"])
        )
    return ContinuationSchedule.to_reduction(
        float(cfg["r"]), tol=float(cfg["tol"]), max_iters=int(cfg["max_iters"])
    )


def _load_dataset(path: str):
    with open(path) as fh:
        first = fh.readline().strip()
    if first == "m1,m2,s":
        return data_mod.load_structured_csv(path)
    return data_mod.load_scattered_csv(path)


def _save_weights_csv(path: Path, w: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("w\n")
        fh.write("\n".join(repr(float(x)) for x in w) + "\n")


def _save_grid_csv(path: Path, grid: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write(
            "\n".join(",".join(repr(float(x)) for x in row) for row in grid) + "\n"
        )


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    keys = {
        "dataset",
        "seed",
        "n_clean",
        "sigma",
        "n_outliers",
        "perturb",
        "max_factor",
    }
    defaults = {
        "dataset": args.dataset,
        "seed": 0,
        "n_clean": 1000,
        "sigma": 1e-3,
        "n_outliers": 150,
        "perturb": 0.5,
        "max_factor": 4.0,
    }
    cfg = _merge_config(args, defaults, keys)
    outdir = _out_dir(args)
    if cfg["dataset"] == "franke":
        sc = data_mod.SyntheticConfig(
            seed=int(cfg["seed"]),
            n_clean=int(cfg["n_clean"]),
            noise_sigma=float(cfg["sigma"]),
            n_outliers=int(cfg["n_outliers"]),
        )
        dataset, flags = data_mod.generate_franke_dataset(sc)
        data_mod.save_scattered_csv(outdir / "franke.csv", dataset, flags)
        print(f"wrote {outdir / 'franke.csv'} ({dataset.m} points)")
    elif cfg["dataset"] == "sphere":
        dataset, flags = data_mod.generate_sphere_dataset(
            int(cfg["seed"]),
            perturb_fraction=float(cfg["perturb"]),
            max_radial_factor=float(cfg["max_factor"]),
        )
        data_mod.save_structured_csv(outdir / "sphere.csv", dataset, flags)
        print(
            f"wrote {outdir / 'sphere.csv'} "
            f"({dataset.m1} x {dataset.m2} grid, {int(flags.sum())} perturbed)"
        )
    else:
        raise ConfigError(f"unknown dataset {cfg['dataset']!r}")
    _write_manifest(outdir, "generate", cfg)
    return EXIT_OK


def _fit_common_keys():
    return {
        "data",
        "n1",
        "n2",
        "degree",
        "closed_u",
        "r",
        "schedule",
        "tol",
        "max_iters",
        "reference",
    }


def cmd_fit(args) -> int:
    defaults = {
        "data": None,
        "n1": 10,
        "n2": 10,
        "degree": 3,
        "closed_u": False,
        "r": 1.0,
        "schedule": None,
        "tol": 1e-8,
        "max_iters": 200,
        "reference": None,
    }
    cfg = _merge_config(args, defaults, _fit_common_keys())
    if not cfg["data"]:
        raise ConfigError("fit requires --data")
    outdir = _out_dir(args)
    dataset = _load_dataset(cfg["data"])
    spec = _build_spec(cfg, dataset.s)
    dataset = data_mod.remap_to_validity(dataset, spec)
    schedule = _schedule_from_cfg(cfg)

    state, reports = continuation_fit(spec, dataset, schedule)

    _write_json(outdir / "control_net.json", net_to_dict(spec, state.net))
    _save_weights_csv(outdir / "weights.csv", state.w)

    stage_rows = []
    reference = None
    if cfg["reference"] == "franke":
        reference = data_mod.franke
    elif cfg["reference"]:
        raise ConfigError(f"unknown reference {cfg['reference']!r}")
    for rep in reports:
        row = {
            "r": rep.reduction,
            "target_mse": rep.target_mse,
            "weighted_mse": rep.weighted_mse,
            "iterations": rep.iterations,
            "entropy": rep.entropy,
            "mu": rep.mu,
        }
        stage_rows.append(row)
    if reference is not None:
        # cross-validated error of the final surface only; per-stage values
        # would need the intermediate nets, which the solver does not keep
        final_cv = data_mod.cv_mse(spec, state.net, reference)
        stage_rows[-1]["cv_mse"] = final_cv

    _write_json(
        outdir / "report.json",
        {
            "mse_uw": state.mse_uw,
            "target_mse": state.target_mse,
            "mu": state.mu,
            "stages": [_report_dict(rep) for rep in reports],
        },
    )
    cols = ["r", "target_mse", "weighted_mse", "iterations", "entropy", "mu"]
    if reference is not None:
        cols.append("cv_mse")
    with open(outdir / "summary.csv", "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in stage_rows:
            fh.write(",".join(repr(row.get(c, "")) for c in cols) + "\n")
    _write_manifest(outdir, "fit", cfg)
    print(
        f"fit converged: mse_uw={state.mse_uw:.6e} "
        f"target={state.target_mse:.6e} mu={state.mu:.6e}"
    )
    return EXIT_OK


def cmd_diagnose(args) -> int:
    keys = _fit_common_keys() | {"r_list", "max_points", "subsample", "subsample_seed"}
    defaults = {
        "data": None,
        "n1": 10,
        "n2": 10,
        "degree": 3,
        "closed_u": False,
        "r": 1.0,
        "schedule": None,
        "tol": 1e-8,
        "max_iters": 200,
        "reference": None,
        "r_list": "1,2,5,10,20,50,100,200,500",
        "max_points": 5000,
        "subsample": None,
        "subsample_seed": 0,
    }
    cfg = _merge_config(args, defaults, keys)
    if not cfg["data"]:
        raise ConfigError("diagnose requires --data")
    outdir = _out_dir(args)
    dataset = _load_dataset(cfg["data"])
    if dataset.s != 1:
        raise ConfigError("diagnostics require scalar-valued data (s = 1)")
    if cfg["subsample"]:
        n_sub = int(cfg["subsample"])
        rng = np.random.default_rng(int(cfg["subsample_seed"]))
        if dataset.structured:
            raise ConfigError("subsampling applies to scattered data only")
        idx = rng.choice(dataset.m, size=n_sub, replace=False)
        dataset = data_mod.scattered_data(
            dataset.u[idx], dataset.v[idx], dataset.q[idx]
        )
    spec = _build_spec(cfg, 1)
    dataset = data_mod.remap_to_validity(dataset, spec)
    if dataset.m > int(cfg["max_points"]):
        raise ConfigError(
            f"dataset has {dataset.m} points, above the diagnostics cap "
            f"{cfg['max_points']}; use --subsample"
        )

    factors = _float_list(cfg["r_list"]) if isinstance(cfg["r_list"], str) else [
        float(x) for x in cfg["r_list"]
    ]
    dm_full = design_matrix(spec, dataset)
    dm = fold_design_columns(spec, dm_full)
    q = dataset.flat_q()

    # baseline least-squares residuals for the solvability indicator
    uniform = np.full(dm.m, 1.0 / dm.m)
    ols_net = solve_wls(dm, uniform, q)
    r_signed = (dm.matrix @ ols_net.values - q).ravel()
    s_star = diagnostics.ols_constraint_slope(r_signed)

    rows = []
    w = None
    mu = 0.0
    mse_uw = float(residual_sq_norms(dm, ols_net, q).mean())
    from .solver import gauss_seidel_fit

    for factor in factors:
        state, rep = gauss_seidel_fit(
            spec,
            dataset,
            mse_uw / factor,
            tol=float(cfg["tol"]),
            max_iters=int(cfg["max_iters"]),
            w0=w,
            mu0=mu,
            mse_uw=mse_uw,
            design=dm_full,
        )
        w, mu = state.w, state.mu
        blocks = diagnostics.jacobian_blocks(state, dm, q)
        rho = diagnostics.spectral_radius(diagnostics.weight_iteration_matrix(blocks))
        rows.append({"r": factor, "rho_g33": rho, "iterations": rep.iterations})

    with open(outdir / "rho_g33.csv", "w") as fh:
        fh.write("r,rho_g33\n")
        for row in rows:
            fh.write(f"{row['r']!r},{row['rho_g33']!r}\n")
    with open(outdir / "iterations.csv", "w") as fh:
        fh.write("r,iterations\n")
        for row in rows:
            fh.write(f"{row['r']!r},{row['iterations']}\n")
    report = diagnostics.ConvergenceReport(
        s_star=s_star,
        factors=[row["r"] for row in rows],
        rho_g33=[row["rho_g33"] for row in rows],
        iterations=[row["iterations"] for row in rows],
        entropy_trace=[],
    )
    _write_json(outdir / "diagnostics.json", dataclasses.asdict(report))
    _write_manifest(outdir, "diagnose", cfg)
    print(f"s_star = {s_star:.6e}")
    for row in rows:
        print(f"r={row['r']:g}: rho_g33={row['rho_g33']:.6e} iters={row['iterations']}")
    return EXIT_OK


def cmd_restore(args) -> int:
    keys = {
        "image",
        "n1",
        "n2",
        "degree",
        "r",
        "schedule",
        "tol",
        "max_iters",
        "threshold_div",
    }
    defaults = {
        "image": None,
        "n1": 40,
        "n2": 40,
        "degree": 3,
        "r": 2.0,
        "schedule": None,
        "tol": 1e-8,
        "max_iters": 200,
        "threshold_div": 10.0,
    }
    cfg = _merge_config(args, defaults, keys)
    if not cfg["image"]:
        raise ConfigError("restore requires --image")
    outdir = _out_dir(args)
    img = image_mod.load_png(cfg["image"])
    schedule = _schedule_from_cfg(cfg)
    state, reports = image_mod.fit_image(
        img,
        (int(cfg["n1"]), int(cfg["n2"])),
        degree=int(cfg["degree"]),
        schedule=schedule,
    )
    wgrid = image_mod.weight_grid(state.w, img)
    mask = image_mod.outlier_mask(wgrid, float(cfg["threshold_div"]))
    restored = image_mod.restore_image(img, mask, state)

    image_mod.save_png(outdir / "restored.png", restored)
    image_mod.save_png(outdir / "mask.png", image_mod.ImageGrid(mask.astype(float)))
    _save_grid_csv(outdir / "weights.csv", wgrid)
    _write_json(
        outdir / "mask.json",
        {
            "flagged_pixels": int(mask.sum()),
            "total_pixels": int(mask.size),
            "flagged_fraction": float(mask.mean()),
            "threshold_div": float(cfg["threshold_div"]),
            "w_max": float(wgrid.max()),
        },
    )
    _write_json(
        outdir / "report.json",
        {
            "mse_uw": state.mse_uw,
            "target_mse": state.target_mse,
            "mu": state.mu,
            "stages": [_report_dict(rep) for rep in reports],
        },
    )
    _write_manifest(outdir, "restore", cfg)
    print(
        f"flagged {int(mask.sum())} of {mask.size} pixels "
        f"({100.0 * mask.mean():.1f}%)"
    )
    return EXIT_OK


def cmd_contours(args) -> int:
    keys = {"weights", "level"}
    defaults = {"weights": None, "level": None}
    cfg = _merge_config(args, defaults, keys)
    if not cfg["weights"] or cfg["level"] is None:
        raise ConfigError("contours requires --weights and --level")
    outdir = _out_dir(args)
    grid = np.loadtxt(cfg["weights"], delimiter=",", ndmin=2)
    contours = image_mod.roi_contours(grid, float(cfg["level"]))
    with open(outdir / "contours.csv", "w") as fh:
        fh.write("contour,x,y\n")
        for idx, poly in enumerate(contours):
            for x, y in poly:
                fh.write(f"{idx},{x!r},{y!r}\n")
    _write_manifest(outdir, "contours", cfg)
    print(f"extracted {len(contours)} contour(s)")
    return EXIT_OK


def cmd_fractal_dim(args) -> int:
    keys = {"mask", "boundary"}
    defaults = {"mask": None, "boundary": False}
    cfg = _merge_config(args, defaults, keys)
    if not cfg["mask"]:
        raise ConfigError("fractal-dim requires --mask")
    outdir = _out_dir(args)
    img = image_mod.load_png(cfg["mask"])
    mask = img.values[:, :, 0] > 0.5
    if cfg["boundary"]:
        mask = image_mod.mask_boundary(mask)
    result = image_mod.box_counting_dimension(mask)
    _write_json(
        outdir / "fractal.json",
        {
            "dimension": result.dimension,
            "r_squared": result.r_squared,
            "box_sizes": list(result.box_sizes),
            "counts": list(result.counts),
            "boundary": bool(cfg["boundary"]),
        },
    )
    _write_manifest(outdir, "fractal-dim", cfg)
    print(f"dimension = {result.dimension:.4f} (R^2 = {result.r_squared:.5f})")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mewls",
        description="Robust B-spline surface fitting via maximum-entropy weighting",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output directory (default $MEWLS_OUT_DIR or .)")
        p.add_argument("--config", help="JSON config file; flags override its keys")

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("dataset", choices=["franke", "sphere"])
    p.add_argument("--seed", type=int)
    p.add_argument("--n-clean", dest="n_clean", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--n-outliers", dest="n_outliers", type=int)
    p.add_argument("--perturb", type=float)
    p.add_argument("--max-factor", dest="max_factor", type=float)
    common(p)
    p.set_defaults(func=cmd_generate)

    def spline_flags(p):
        p.add_argument("--n1", type=int)
        p.add_argument("--n2", type=int)
        p.add_argument("--degree", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--max-iters", dest="max_iters", type=int)
        p.add_argument("--r", type=float, help="terminal reduction factor")
        p.add_argument("--schedule", help="explicit factor list, e.g. 1,2,5")

    p = sub.add_parser("fit", help="entropy-weighted fit of a dataset")
    p.add_argument("--data", help="dataset CSV (scattered or structured)")
    spline_flags(p)
    p.add_argument("--closed-u", dest="closed_u", action="store_true", default=None)
    p.add_argument("--reference", help="analytic reference for cv error (franke)")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("diagnose", help="convergence-theory diagnostics")
    p.add_argument("--data")
    spline_flags(p)
    p.add_argument("--closed-u", dest="closed_u", action="store_true", default=None)
    p.add_argument("--reference")
    p.add_argument("--r-list", dest="r_list")
    p.add_argument("--max-points", dest="max_points", type=int)
    p.add_argument("--subsample", type=int)
    p.add_argument("--subsample-seed", dest="subsample_seed", type=int)
    common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("restore", help="detect and repair outlier pixels")
    p.add_argument("--image", help="input PNG")
    spline_flags(p)
    p.add_argument("--threshold-div", dest="threshold_div", type=float)
    common(p)
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("contours", help="iso-level contours of a weight grid")
    p.add_argument("--weights", help="weight grid CSV")
    p.add_argument("--level", type=float)
    common(p)
    p.set_defaults(func=cmd_contours)

    p = sub.add_parser("fractal-dim", help="box-counting dimension of a mask PNG")
    p.add_argument("--mask")
    p.add_argument("--boundary", action="store_true", default=None)
    common(p)
    p.set_defaults(func=cmd_fractal_dim)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which matches our config code
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except MewlsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O or file
format error, 3 solver failure (or a failed ``check``).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import GEOMETRIES, MODES, PHANTOMS, ExperimentConfig
from .forward import ObjectState, SlantStack, forward_linear
from .grid import Grid
from .io import (
    FormatError,
    ensure_dir,
    read_array,
    read_config,
    read_lightcurve_csv,
    write_array,
    write_lightcurve_csv,
    write_pgm,
)
from .lightcurve import Lightcurve, convex_hull_mask, lightcurve_reconstruct, shape_estimate
from .metrics import iou, localize_sources, visible_brightness_error
from .occlusion import add_noise, render_occluded, visibility_map
from .operators import build_downsampler, build_nonlinear, build_projection
from .phantoms import five_circles, point_sources, shape
from .solver import SolveResult, make_problem, reconstruct

log = logging.getLogger("occtomo")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# flag dest -> config key
_FLAG_KEYS = {
    "kind": "phantom.kind",
    "n_sources": "phantom.n_sources",
    "phantom_seed": "phantom.seed",
    "nx": "grid.nx",
    "ny": "grid.ny",
    "pixel_size": "grid.pixel_size",
    "views": "views.n",
    "start": "views.start_deg",
    "step": "views.step_deg",
    "detector_pixels": "views.detector_pixels",
    "geometry": "views.geometry",
    "distance": "views.distance",
    "weighting": "model.weighting",
    "noise": "noise.level",
    "seed": "noise.seed",
    "mode": "mode",
    "tol": "solver.tol",
    "max_iter": "solver.max_iter",
    "mu": "solver.mu",
    "epsilon": "solver.epsilon",
    "log_reparam": "solver.log_reparam",
    "solver_seed": "solver.seed",
    "a_max": "solver.a_max",
}


def _add_scene_flags(p):
    g = p.add_argument_group("scene")
    g.add_argument("--kind", choices=PHANTOMS)
    g.add_argument("--n-sources", type=int)
    g.add_argument("--phantom-seed", type=int)
    g.add_argument("--nx", type=int)
    g.add_argument("--ny", type=int)
    g.add_argument("--pixel-size", type=float)


def _add_view_flags(p):
    g = p.add_argument_group("views")
    g.add_argument("--views", type=int, help="number of views")
    g.add_argument("--start", type=float, help="first view angle in degrees")
    g.add_argument("--step", type=float, help="angle step in degrees")
    g.add_argument("--detector-pixels", type=int)
    g.add_argument("--geometry", choices=GEOMETRIES)
    g.add_argument("--distance", type=float, help="pinhole distance in grid radii")
    g.add_argument("--weighting", choices=("length", "binary"))


def _add_solver_flags(p):
    g = p.add_argument_group("solver")
    g.add_argument("--tol", type=float)
    g.add_argument("--max-iter", type=int)
    g.add_argument("--mu", type=str, help="regularization weight, or 'none' for the noise-based default")
    g.add_argument("--epsilon", type=float)
    g.add_argument("--log-reparam", choices=("true", "false"))
    g.add_argument("--solver-seed", type=int)
    g.add_argument("--a-max", type=str, help="upper bound on a, or 'none'")


def _add_common(p):
    p.add_argument("--config", type=Path, help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--out", type=Path, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="occtomo", description="Occlusion-aware 2-D tomography toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("phantom", help="write a phantom's a/s maps")
    _add_common(p)
    _add_scene_flags(p)

    p = sub.add_parser("simulate", help="render occluded data from a phantom")
    _add_common(p)
    _add_scene_flags(p)
    _add_view_flags(p)
    p.add_argument("--noise", type=float, help="noise level relative to the data maximum")
    p.add_argument("--seed", type=int, help="noise seed")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--linear", action="store_true", help="also write the unoccluded slant stack")
    p.add_argument("--lightcurve", action="store_true", help="also write the lightcurve")

    p = sub.add_parser("reconstruct", help="estimate a/s from simulated data")
    p.add_argument("--data", type=Path, required=True, help="directory written by 'simulate'")
    _add_common(p)
    _add_solver_flags(p)
    p.add_argument("--mode", choices=MODES)

    p = sub.add_parser("lightcurve", help="simulate and invert a lightcurve")
    _add_common(p)
    _add_scene_flags(p)
    _add_view_flags(p)
    _add_solver_flags(p)
    p.add_argument("--noise", type=float)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("check", help="run the invariant checks on a small instance")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _resolve_config(args, base: ExperimentConfig | None = None) -> ExperimentConfig:
    values: dict[str, str] = {}
    if getattr(args, "config", None) is not None:
        values.update(read_config(args.config))
    for dest, key in _FLAG_KEYS.items():
        v = getattr(args, dest, None)
        if v is not None:
            values[key] = str(v)
    for item in getattr(args, "set", []):
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    if getattr(args, "out", None) is not None:
        values["output"] = str(args.out)
    try:
        return ExperimentConfig.from_dict(values, base)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc.args[0]) if exc.args else str(exc)) from exc


def _make_phantom(cfg: ExperimentConfig, grid: Grid):
    sources = None
    if cfg.phantom == "five-circles":
        x = five_circles(grid, eps=cfg.solver.epsilon)
    elif cfg.phantom == "point-sources":
        x, sources = point_sources(grid, cfg.n_sources, seed=cfg.phantom_seed, eps=cfg.solver.epsilon)
    else:
        x = shape(cfg.phantom, grid, eps=cfg.solver.epsilon)
    return x, sources


def _write_state(out: Path, grid: Grid, x: ObjectState, suffix: str = "") -> None:
    for name, v in (("a", x.a), ("s", x.s)):
        img = grid.to_image(v)
        write_array(out / f"{name}{suffix}.array", img)
        write_pgm(out / f"{name}{suffix}.pgm", img)


def _read_state(directory: Path, grid: Grid, suffix: str = "") -> ObjectState:
    a = read_array(directory / f"a{suffix}.array")
    s = read_array(directory / f"s{suffix}.array")
    if a.shape != (grid.ny, grid.nx) or s.shape != (grid.ny, grid.nx):
        raise FormatError(f"{directory}: state arrays do not match the {grid.nx}x{grid.ny} grid")
    return ObjectState(a.ravel(), s.ravel())


def _write_sources(path: Path, sources) -> None:
    with open(path, "w") as fh:
        for j in sources:
            fh.write(f"{int(j)}\n")


def _read_sources(path: Path) -> np.ndarray:
    try:
        with open(path) as fh:
            return np.array([int(t) for t in fh.read().split()], dtype=np.int64)
    except ValueError as exc:
        raise FormatError(f"{path}: expected one flat pixel index per line") from exc


def cmd_phantom(args) -> int:
    cfg = _resolve_config(args)
    grid = cfg.grid()
    x, sources = _make_phantom(cfg, grid)
    out = ensure_dir(cfg.output)
    _write_state(out, grid, x)
    if sources is not None:
        _write_sources(out / "sources.csv", sources)
    cfg.save(out / "config.txt")
    return EXIT_OK


def _simulate(cfg: ExperimentConfig, out: Path, linear=False, lightcurve=False) -> ExperimentConfig:
    grid = cfg.grid()
    views = cfg.views(grid)
    x, sources = _make_phantom(cfg, grid)
    _write_state(out, grid, x)
    if sources is not None:
        _write_sources(out / "sources.csv", sources)

    clean = render_occluded(grid, views, x.a, x.s, weighting=cfg.weighting)
    shape2 = (views.n_views, views.detector_pixels)
    if cfg.mode == "lightcurve":
        D = build_downsampler(views)
        lc_clean = SlantStack(D.apply(clean.vector)[:, None])
        noisy = add_noise(lc_clean, cfg.noise, cfg.seed)
        write_lightcurve_csv(out / "lightcurve.csv", views.angles_deg, noisy.vector)
    else:
        noisy = add_noise(clean, cfg.noise, cfg.seed)
        write_array(out / "slantstack.array", noisy.data)
        # one column per view
        write_pgm(out / "slantstack.pgm", noisy.data.T)
        if lightcurve:
            D = build_downsampler(views)
            write_lightcurve_csv(out / "lightcurve.csv", views.angles_deg, D.apply(noisy.vector))
    if linear:
        P = build_projection(grid, views, cfg.weighting)
        lin = forward_linear(P, x.s).reshape(shape2)
        write_array(out / "linear.array", lin)
        write_pgm(out / "linear.pgm", lin.T)

    cfg.noise_sigma = noisy.noise_sigma
    cfg.output = str(out)
    cfg.save(out / "config.txt")
    return cfg


def cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    out = ensure_dir(cfg.output)
    _simulate(cfg, out, linear=args.linear, lightcurve=args.lightcurve)
    return EXIT_OK


def _metrics(cfg: ExperimentConfig, grid: Grid, views, data_dir: Path, res: SolveResult) -> dict[str, str]:
    m: dict[str, str] = {
        "status": res.status,
        "iterations": str(res.iterations),
        "objective": repr(float(res.objective_trace[-1])),
        "projected_gradient_norm": repr(float(res.grad_norm)),
    }
    if not (data_dir / "a.array").exists():
        return m
    truth = _read_state(data_dir, grid)
    matter = truth.a <= 0.5
    est = shape_estimate(res)
    m["support_iou"] = repr(iou(est, matter))
    if matter.any():
        hull = convex_hull_mask(truth, grid)
        m["hull_iou"] = repr(iou(est, hull))
    if cfg.mode == "slantstack":
        vis = visibility_map(grid, views, truth.a, weighting=cfg.weighting)
        m["visible_brightness_error"] = repr(visible_brightness_error(res.x.s, truth.s, vis, matter))
        src_path = data_dir / "sources.csv"
        if src_path.exists():
            sources = _read_sources(src_path)
            dist, found = localize_sources(grid, res.x.s, sources)
            visible = vis[sources] > 0
            m["sources_total"] = str(len(sources))
            m["sources_visible"] = str(int(visible.sum()))
            m["sources_found"] = str(int(found.sum()))
            m["visible_sources_found"] = str(int((found & visible).sum()))
            m["hidden_sources_found"] = str(int((found & ~visible).sum()))
    return m


def _reconstruct(cfg: ExperimentConfig, data_dir: Path, out: Path) -> int:
    grid = cfg.grid()
    views = cfg.views(grid)
    if cfg.mode == "lightcurve":
        angles, values = read_lightcurve_csv(data_dir / "lightcurve.csv")
        if len(values) != views.n_views:
            raise FormatError(f"{data_dir / 'lightcurve.csv'}: {len(values)} values for {views.n_views} views")
        lc = Lightcurve(values, views)
        res = lightcurve_reconstruct(grid, views, lc, cfg.solver, cfg.weighting, noise_sigma=cfg.noise_sigma)
    else:
        data = read_array(data_dir / "slantstack.array")
        if data.shape != (views.n_views, views.detector_pixels):
            raise FormatError(
                f"{data_dir / 'slantstack.array'}: shape {data.shape} does not match "
                f"{views.n_views} views x {views.detector_pixels} detector pixels"
            )
        model = build_nonlinear(grid, views, cfg.weighting)
        problem = make_problem(model, data.ravel(), cfg.solver, noise_sigma=cfg.noise_sigma)
        res = reconstruct(problem, cfg.solver)

    _write_state(out, grid, res.x, "_est")
    with open(out / "objective.csv", "w") as fh:
        for i, f in enumerate(res.objective_trace):
            fh.write(f"{i},{f:.17g}\n")
    metrics = _metrics(cfg, grid, views, data_dir, res)
    with open(out / "metrics.txt", "w") as fh:
        for k, v in metrics.items():
            fh.write(f"{k}={v}\n")
    cfg.save(out / "config.txt")
    log.info("solver %s after %d iterations", res.status, res.iterations)
    return EXIT_SOLVER if res.status == "line_search_failure" else EXIT_OK


def cmd_reconstruct(args) -> int:
    cfg_path = args.data / "config.txt"
    if not cfg_path.exists():
        raise FileNotFoundError(f"{cfg_path}: missing data config (run 'simulate' first)")
    try:
        base = ExperimentConfig.load(cfg_path)
    except (KeyError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{cfg_path}: {exc}") from exc
    base.output = str(args.data / "recon")
    cfg = _resolve_config(args, base)
    out = ensure_dir(cfg.output)
    return _reconstruct(cfg, args.data, out)


def cmd_lightcurve(args) -> int:
    base = ExperimentConfig(phantom="square", nx=20, ny=20, mode="lightcurve")
    cfg = _resolve_config(args, base)
    cfg.mode = "lightcurve"
    out = ensure_dir(cfg.output)
    data_dir = ensure_dir(out / "data")
    cfg = _simulate(cfg, data_dir)
    cfg.output = str(out)
    return _reconstruct(cfg, data_dir, out)


def cmd_check(args) -> int:
    from .checks import run_checks

    results = run_checks(seed=args.seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_SOLVER


COMMANDS = {
    "phantom": cmd_phantom,
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "lightcurve": cmd_lightcurve,
    "check": cmd_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"occtomo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"occtomo: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"occtomo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

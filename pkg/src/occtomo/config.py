"""Experiment configuration with flat ``section.key=value`` serialization."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields

from .grid import Grid, PinholePose, ViewSet, make_grid, parallel_views, pinhole_views
from .io import read_config, write_config
from .operators import WEIGHTINGS
from .solver import SolverConfig

__all__ = ["ExperimentConfig", "PHANTOMS", "MODES", "GEOMETRIES"]

PHANTOMS = ("five-circles", "point-sources", "square", "circle", "cross")
MODES = ("slantstack", "lightcurve")
GEOMETRIES = ("parallel", "pinhole")

# config key -> attribute name
_KEYS = {
    "phantom.kind": "phantom",
    "phantom.n_sources": "n_sources",
    "phantom.seed": "phantom_seed",
    "grid.nx": "nx",
    "grid.ny": "ny",
    "grid.pixel_size": "pixel_size",
    "views.n": "n_views",
    "views.start_deg": "start_deg",
    "views.step_deg": "step_deg",
    "views.detector_pixels": "detector_pixels",
    "views.geometry": "geometry",
    "views.distance": "distance",
    "model.weighting": "weighting",
    "noise.level": "noise",
    "noise.seed": "seed",
    "noise.sigma": "noise_sigma",
    "mode": "mode",
    "output": "output",
}
_SOLVER_KEYS = ("tol", "max_iter", "mu", "epsilon", "log_reparam", "seed", "a_max", "init_jitter")


def _parse_bool(v: str) -> bool:
    t = v.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _parse_opt_float(v: str):
    return None if v.strip().lower() in ("", "none") else float(v)


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class ExperimentConfig:
    phantom: str = "five-circles"
    n_sources: int = 7
    phantom_seed: int = 2
    nx: int = 50
    ny: int = 50
    pixel_size: float = 1.0
    n_views: int = 360
    start_deg: float = 0.0
    step_deg: float = 1.0
    detector_pixels: int | None = None
    geometry: str = "parallel"
    distance: float = 100.0
    weighting: str = "binary"
    noise: float = 0.0
    seed: int = 0
    noise_sigma: float | None = None
    mode: str = "slantstack"
    output: str = "out"
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        self.validate()

    def validate(self) -> "ExperimentConfig":
        if self.phantom not in PHANTOMS:
            raise ValueError(f"phantom.kind must be one of {PHANTOMS}, got {self.phantom!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"views.geometry must be one of {GEOMETRIES}, got {self.geometry!r}")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"model.weighting must be one of {WEIGHTINGS}, got {self.weighting!r}")
        for name in ("nx", "ny", "n_views"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive count")
        if self.detector_pixels is not None and self.detector_pixels < 1:
            raise ValueError("detector_pixels must be a positive count")
        if self.n_sources < 0:
            raise ValueError("n_sources must be >= 0")
        if self.noise < 0:
            raise ValueError("noise level must be >= 0")
        if not self.pixel_size > 0:
            raise ValueError("pixel_size must be > 0")
        if self.solver.max_iter < 0:
            raise ValueError("solver.max_iter must be >= 0")
        return self

    @property
    def n_detector(self) -> int:
        return self.detector_pixels if self.detector_pixels is not None else max(self.nx, self.ny)

    def grid(self) -> Grid:
        return make_grid(self.nx, self.ny, self.pixel_size)

    def views(self, grid: Grid | None = None) -> ViewSet:
        grid = grid or self.grid()
        if self.geometry == "parallel":
            return parallel_views(grid, self.n_views, self.start_deg, self.step_deg, self.n_detector)
        poses = [
            PinholePose(self.start_deg + i * self.step_deg, self.distance * grid.radius)
            for i in range(self.n_views)
        ]
        return pinhole_views(grid, poses, self.n_detector)

    def to_dict(self) -> dict[str, str]:
        out = {key: _fmt(getattr(self, attr)) for key, attr in _KEYS.items()}
        for name in _SOLVER_KEYS:
            out[f"solver.{name}"] = _fmt(getattr(self.solver, name))
        return out

    @classmethod
    def from_dict(cls, values: dict[str, str], base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        cfg = copy.deepcopy(base) if base is not None else cls()
        types = {f.name: f.type for f in fields(cls)}
        for key, raw in values.items():
            if key.startswith("solver."):
                name = key[len("solver."):]
                if name not in _SOLVER_KEYS:
                    raise KeyError(f"unknown config key {key!r}")
                setattr(cfg.solver, name, _convert_solver(name, raw))
                continue
            if key not in _KEYS:
                raise KeyError(f"unknown config key {key!r}")
            attr = _KEYS[key]
            setattr(cfg, attr, _convert(types[attr], raw))
        return cfg.validate()

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(read_config(path))

    def save(self, path) -> None:
        """Write every key except ``output`` so saved configs do not depend
        on where they were written."""
        values = self.to_dict()
        del values["output"]
        write_config(path, values)


def _convert(type_name: str, raw: str):
    t = type_name.replace(" ", "")
    if t == "int":
        return int(raw)
    if t == "int|None":
        return None if raw.strip().lower() in ("", "none") else int(raw)
    if t == "float":
        return float(raw)
    if t == "float|None":
        return _parse_opt_float(raw)
    return raw.strip()


def _convert_solver(name: str, raw: str):
    if name in ("max_iter", "seed"):
        return int(raw)
    if name == "log_reparam":
        return _parse_bool(raw)
    if name in ("mu", "a_max"):
        return _parse_opt_float(raw)
    value = float(raw)
    if name == "epsilon" and not value > 0:
        raise ValueError("solver.epsilon must be > 0")
    return value


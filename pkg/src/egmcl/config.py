"""Run configuration: flags, flat key=value files and benchmark presets."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

from .errors import ConfigurationError
from .limiters import SchemeMode
from .problems import PROBLEM_NAMES, ProblemError, get_problem

SCHEMES = tuple(m.value for m in SchemeMode)


@dataclass
class RunConfig:
    problem: str
    schemes: tuple = ("bp-es",)
    nx: Optional[int] = None
    ny: Optional[int] = None
    dt: Optional[float] = None
    dt_over_h: Optional[float] = None
    t_final: float = 1.0
    out: str = "out"
    snapshot_every: int = 0          # 0: first and last step only
    reproducible: bool = False
    levels: tuple = ()               # refinement exponents k, h = 2^-k
    cfl_policy: str = "warn"
    profile: str = "none"            # none | midline | diagonal
    preset: Optional[str] = None

    @property
    def scheme(self) -> str:
        return self.schemes[0]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schemes"] = list(self.schemes)
        d["levels"] = list(self.levels)
        return d

    def domain(self):
        return get_problem(self.problem).domain

    def cells_for_level(self, k: int) -> tuple[int, int]:
        """Cell counts giving h = 2^-k on the problem domain."""
        x0, x1, y0, y1 = self.domain()
        h = 2.0 ** (-k)
        nx, ny = (x1 - x0) / h, (y1 - y0) / h
        if abs(nx - round(nx)) > 1e-9 or abs(ny - round(ny)) > 1e-9 or round(nx) < 1 or round(ny) < 1:
            raise ConfigurationError(f"levels: h=2^-{k} does not divide the domain {self.domain()}")
        return int(round(nx)), int(round(ny))

    def mesh_size(self) -> tuple[int, int]:
        if self.nx is not None:
            return self.nx, self.ny if self.ny is not None else self.nx
        if self.levels:
            return self.cells_for_level(self.levels[-1])
        raise ConfigurationError("nx: mesh size not given (set nx/ny or levels)")

    def time_step(self, nx: int, ny: int) -> float:
        """Requested step for a mesh; the loop later rounds it to T / N_T."""
        if self.dt is not None:
            return self.dt
        x0, x1, y0, y1 = self.domain()
        h = max((x1 - x0) / nx, (y1 - y0) / ny)
        return self.dt_over_h * h


def _validate(cfg: RunConfig) -> RunConfig:
    try:
        get_problem(cfg.problem)
    except ProblemError as exc:
        raise ConfigurationError(f"problem: {exc}") from None
    if not cfg.schemes:
        raise ConfigurationError("scheme: at least one scheme mode is required")
    cfg.schemes = tuple(SchemeMode.parse(s).value for s in cfg.schemes)
    if (cfg.dt is None) == (cfg.dt_over_h is None):
        raise ConfigurationError("dt/dt_over_h: exactly one of dt or dt_over_h must be given")
    for name in ("dt", "dt_over_h"):
        v = getattr(cfg, name)
        if v is not None and not (v > 0 and math.isfinite(v)):
            raise ConfigurationError(f"{name}: must be a positive number, got {v}")
    if not (cfg.t_final >= 0 and math.isfinite(cfg.t_final)):
        raise ConfigurationError(f"t_final: must be a finite non-negative number, got {cfg.t_final}")
    for name in ("nx", "ny"):
        v = getattr(cfg, name)
        if v is not None and (int(v) != v or v < 1):
            raise ConfigurationError(f"{name}: must be a positive integer, got {v}")
    if cfg.snapshot_every < 0:
        raise ConfigurationError(f"snapshot_every: must be >= 0, got {cfg.snapshot_every}")
    if len(set(cfg.levels)) != len(cfg.levels):
        raise ConfigurationError(f"levels: repeated refinement levels {list(cfg.levels)}")
    if list(cfg.levels) != sorted(cfg.levels):
        raise ConfigurationError(f"levels: must be increasing (coarse to fine), got {list(cfg.levels)}")
    for k in cfg.levels:
        cfg.cells_for_level(k)
    if cfg.cfl_policy not in ("warn", "assert"):
        raise ConfigurationError(f"cfl_policy: expected warn or assert, got {cfg.cfl_policy!r}")
    if cfg.profile not in ("none", "midline", "diagonal"):
        raise ConfigurationError(f"profile: expected none, midline or diagonal, got {cfg.profile!r}")
    if cfg.nx is None and not cfg.levels:
        raise ConfigurationError("nx: mesh size not given (set nx/ny or levels)")
    return cfg


ALL_SCHEMES = ("lo", "ho", "bp", "bp-es")

PRESETS = {
    "example1": dict(problem="advection", schemes=ALL_SCHEMES, t_final=0.5, dt_over_h=0.1,
                     levels=(2, 3, 4, 5, 6, 7, 8)),
    "example1-small": dict(problem="advection", schemes=ALL_SCHEMES, t_final=0.5, dt_over_h=0.1,
                           levels=(2, 3, 4, 5, 6)),
    "example2": dict(problem="burgers", schemes=ALL_SCHEMES, t_final=0.1, dt_over_h=0.002,
                     levels=(1, 2, 3, 4, 5, 6, 7)),
    "example2-small": dict(problem="burgers", schemes=ALL_SCHEMES, t_final=0.1, dt_over_h=0.002,
                           levels=(1, 2, 3, 4, 5, 6)),
    "example2-shock": dict(problem="burgers", schemes=ALL_SCHEMES, t_final=1.0, dt=0.001,
                           levels=(7,), profile="midline"),
    "example2-shock-small": dict(problem="burgers", schemes=ALL_SCHEMES, t_final=1.0, dt=0.001,
                                 levels=(6,), profile="midline"),
    "example3": dict(problem="kpp-smooth", schemes=ALL_SCHEMES, t_final=1.0, dt_over_h=0.256,
                     levels=(5, 6, 7)),
    "example3-small": dict(problem="kpp-smooth", schemes=ALL_SCHEMES, t_final=1.0, dt_over_h=0.256,
                           levels=(4, 5, 6)),
    "example4": dict(problem="kpp-rotational", schemes=("lo", "bp", "bp-es"), t_final=1.0, dt=0.001,
                     levels=(7,), profile="diagonal"),
    "example4-small": dict(problem="kpp-rotational", schemes=("lo", "bp", "bp-es"), t_final=1.0, dt=0.004,
                           levels=(5,), profile="diagonal"),
}


def preset(name: str, **overrides) -> RunConfig:
    key = name.strip().lower()
    if key not in PRESETS:
        raise ConfigurationError(f"preset: unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    values = dict(PRESETS[key])
    values.update({k: v for k, v in overrides.items() if v is not None})
    if overrides.get("dt") is not None:
        values.pop("dt_over_h", None)
    if overrides.get("dt_over_h") is not None:
        values.pop("dt", None)
    values["preset"] = key
    return _validate(RunConfig(**values))


# ---------------------------------------------------------------------------
# parsing

def _bool(text: str, name: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"{name}: expected a boolean, got {text!r}")


def _levels(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    text = str(text).strip()
    if not text:
        return ()
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return tuple(out)


_CONVERTERS = {
    "problem": str,
    "schemes": lambda s: tuple(p.strip() for p in str(s).split(",") if p.strip()),
    "nx": int,
    "ny": int,
    "dt": float,
    "dt_over_h": float,
    "t_final": float,
    "out": str,
    "snapshot_every": int,
    "reproducible": lambda s: s if isinstance(s, bool) else _bool(str(s), "reproducible"),
    "levels": _levels,
    "cfl_policy": str,
    "profile": str,
}
_ALIASES = {"scheme": "schemes", "dt-over-h": "dt_over_h", "t-final": "t_final",
            "snapshot-every": "snapshot_every", "cfl-policy": "cfl_policy"}


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigurationError(f"config: cannot read {path}: {exc}") from None
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config: {path}:{n}: expected key = value, got {raw!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        values[k] = v
    return values


def parse_config(values: dict | None = None, path=None) -> RunConfig:
    """Build a validated RunConfig from a mapping of (string or typed) values and/or a file.

    Explicit ``values`` override entries read from ``path``; a ``preset`` key
    expands to the benchmark settings before overrides are applied.
    """
    merged: dict = {}
    if path is not None:
        merged.update(read_config_file(path))
    for k, v in (values or {}).items():
        if v is not None:
            merged[k] = v
    typed = {}
    preset_name = merged.pop("preset", None)
    for k, v in merged.items():
        key = _ALIASES.get(k, k).replace("-", "_")
        if key not in _CONVERTERS:
            raise ConfigurationError(f"{k}: unknown configuration key")
        try:
            typed[key] = _CONVERTERS[key](v) if isinstance(v, str) or key in ("levels", "reproducible") else v
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"{k}: invalid value {v!r}") from None
    if "schemes" in typed and isinstance(typed["schemes"], str):
        typed["schemes"] = _CONVERTERS["schemes"](typed["schemes"])
    if preset_name:
        return preset(preset_name, **typed)
    if "problem" not in typed:
        raise ConfigurationError(f"problem: required (one of {', '.join(PROBLEM_NAMES)}) unless a preset is given")
    return _validate(RunConfig(**typed))


def with_mesh(cfg: RunConfig, nx: int, ny: int) -> RunConfig:
    return replace(cfg, nx=nx, ny=ny)

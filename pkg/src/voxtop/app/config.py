"""Run configuration: flat key=value files merged with CLI flags."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..errors import ConfigError
from ..multigrid import max_feasible_levels
from .presets import PRESETS, parse_resolution

__all__ = ["RunConfig", "parse_config", "KNOWN_KEYS"]

# keys mirror the CLI flags; hyphens and underscores are interchangeable
KNOWN_KEYS = {
    "preset",
    "resolution",
    "volfrac",
    "scheme",
    "levels",
    "out",
    "checkpoint-every",
    "resume",
    "max-iters",
    "export-every",
    "tol",
    "profile",
}


@dataclass
class RunConfig:
    preset: str
    resolution: Optional[tuple[int, int, int]] = None
    volfrac: Optional[float] = None
    scheme: str = "galerkin"
    levels: Optional[int] = None
    out: str = "voxtop_out"
    checkpoint_every: int = 0
    resume: Optional[str] = None
    max_iters: int = 300
    export_every: int = 0
    tol: float = 1e-5
    profile: str = "uniform"


def _read_file(path) -> dict:
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def _norm_key(key: str) -> str:
    return key.replace("_", "-")


def parse_config(path=None, overrides: Optional[dict] = None) -> RunConfig:
    """Merge a config file (if any) with override flags and validate.

    Unknown keys are rejected. Requesting more multigrid levels than the
    resolution supports is a config error naming the first indivisible axis.
    """
    raw: dict[str, str] = {}
    if path is not None:
        raw.update(_read_file(path))
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[_norm_key(key)] = value

    unknown = {k for k in raw if _norm_key(k) not in KNOWN_KEYS}
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    raw = {_norm_key(k): v for k, v in raw.items()}

    if "preset" not in raw:
        raise ConfigError("a preset is required (preset=<name>)")
    preset_name = str(raw["preset"])
    if preset_name not in PRESETS:
        raise ConfigError(
            f"unknown preset {preset_name!r}; available: {', '.join(sorted(PRESETS))}"
        )
    preset = PRESETS[preset_name]

    cfg = RunConfig(preset=preset_name)
    if "resolution" in raw:
        res = raw["resolution"]
        cfg.resolution = res if isinstance(res, tuple) else parse_resolution(str(res))
    if "volfrac" in raw:
        cfg.volfrac = _parse_float(raw, "volfrac")
        if not 0 < cfg.volfrac < 1:
            raise ConfigError(f"volfrac must lie in (0, 1), got {cfg.volfrac}")
    if "scheme" in raw:
        cfg.scheme = str(raw["scheme"])
        if cfg.scheme not in ("galerkin", "homogenized"):
            raise ConfigError(
                f"scheme must be galerkin or homogenized, got {cfg.scheme!r}"
            )
    if "levels" in raw:
        cfg.levels = _parse_int(raw, "levels")
        if cfg.levels < 1:
            raise ConfigError("levels must be at least 1")
    if "out" in raw:
        cfg.out = str(raw["out"])
    if "checkpoint-every" in raw:
        cfg.checkpoint_every = _parse_int(raw, "checkpoint-every")
    if "resume" in raw:
        cfg.resume = str(raw["resume"])
    if "max-iters" in raw:
        cfg.max_iters = _parse_int(raw, "max-iters")
        if cfg.max_iters < 1:
            raise ConfigError("max-iters must be at least 1")
    if "export-every" in raw:
        cfg.export_every = _parse_int(raw, "export-every")
    if "tol" in raw:
        cfg.tol = _parse_float(raw, "tol")
        if cfg.tol <= 0:
            raise ConfigError("tol must be positive")
    if "profile" in raw:
        cfg.profile = str(raw["profile"])
        if cfg.profile not in ("uniform", "parabolic"):
            raise ConfigError("profile must be uniform or parabolic")

    res = cfg.resolution or preset.default_resolution
    hs = [L / n for L, n in zip(preset.domain, res)]
    if any(abs(hh - hs[0]) > 1e-9 * hs[0] for hh in hs):
        raise ConfigError(
            f"resolution {res} does not keep elements cubic for preset "
            f"{preset_name} with domain {preset.domain}"
        )
    if cfg.levels is not None and cfg.levels > 1:
        divisor = 2 ** (cfg.levels - 1)
        for axis, (label, dim) in enumerate(zip("xyz", res)):
            if dim % divisor != 0 or dim // divisor < 2:
                raise ConfigError(
                    f"axis {label} with {dim} elements cannot support "
                    f"{cfg.levels} multigrid levels (needs a multiple of "
                    f"{divisor} with at least 2 coarse elements)"
                )
    return cfg


def _parse_int(raw: dict, key: str) -> int:
    try:
        return int(str(raw[key]))
    except ValueError as exc:
        raise ConfigError(f"{key} must be an integer, got {raw[key]!r}") from exc


def _parse_float(raw: dict, key: str) -> float:
    try:
        return float(str(raw[key]))
    except ValueError as exc:
        raise ConfigError(f"{key} must be a number, got {raw[key]!r}") from exc


def effective_levels(cfg: RunConfig, resolution: tuple[int, int, int]) -> int:
    if cfg.levels is not None:
        return cfg.levels
    return max_feasible_levels(*resolution)

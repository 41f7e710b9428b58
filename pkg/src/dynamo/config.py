"""Run configuration: one JSON document per experiment."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .spectral import Grid3
from .velocity import eps_n


class ConfigError(ValueError):
    pass


class UnknownKeyError(ConfigError):
    pass


class InvalidValueError(ConfigError):
    pass


class MissingConfigError(ConfigError, FileNotFoundError):
    pass


@dataclass(frozen=True)
class RunConfig:
    delta: float = 0.2
    n0: int = 32
    n: int | str = 1                   # or "diagonal"
    eps: float | str = "auto"
    dt: float = 0.1
    K: int = 1
    lambda_hat: float | str = "measure"
    eta: float = 0.1
    C: float = 1.0
    grid: list | None = None           # [nx, ny, nz]; None picks the smallest alias-free grid
    bloch_K: int = 8
    j_sweep: list = field(default_factory=lambda: [0.005, 0.01, 0.015, 0.02, 0.025, 0.03, 0.035, 0.04])
    slope_j: list = field(default_factory=lambda: [0.002, 0.004])
    slope_K: int = 5
    polarization: str = "numeric"      # growing eigenvector of M, or "closed_form" for (-i, 1, 0) from M0
    control: bool = False              # drop the generation window
    reduce_lattice: bool = True
    sample_every: int = 100
    heat_samples: int = 50
    clean_every: int = 100
    out: str = "out"
    seed: int = 0

    def __post_init__(self):
        _require(0 <= self.delta < 1, "delta must lie in [0, 1)")
        _require(_is_int(self.n0) and self.n0 >= 1, "n0 must be a positive integer")
        _require(self.n == "diagonal" or (_is_int(self.n) and self.n >= 1),
                 "n must be a positive integer or 'diagonal'")
        if self.eps == "auto":
            _require(self.n != "diagonal", "eps 'auto' needs an integer n")
        else:
            _require(_is_num(self.eps) and self.eps > 0, "eps must be positive or 'auto'")
        _require(_is_num(self.dt) and self.dt > 0, "dt must be positive")
        _require(_is_int(self.K) and self.K >= 1, "K must be a positive integer")
        _require(self.lambda_hat == "measure" or (_is_num(self.lambda_hat) and self.lambda_hat > 0),
                 "lambda_hat must be positive or 'measure'")
        _require(_is_num(self.eta) and 0 < self.eta < 1, "eta must lie in (0, 1)")
        _require(_is_num(self.C) and self.C > 0, "C must be positive")
        if self.grid is not None:
            _require(isinstance(self.grid, (list, tuple)) and len(self.grid) == 3, "grid must be [nx, ny, nz]")
            try:
                Grid3(*self.grid)
            except (TypeError, ValueError) as e:
                raise InvalidValueError(f"grid: {e}") from None
        _require(_is_int(self.bloch_K) and self.bloch_K >= 2, "bloch_K must be an integer >= 2")
        _require(len(self.j_sweep) > 0 and all(_is_num(j) and j > 0 for j in self.j_sweep),
                 "j_sweep must be a nonempty list of positive numbers")
        _require(len(self.slope_j) == 2 and self.slope_j[0] != self.slope_j[1], "slope_j needs two distinct values")
        _require(self.polarization in ("numeric", "closed_form"), "polarization must be 'numeric' or 'closed_form'")
        for name in ("sample_every", "heat_samples"):
            _require(_is_int(getattr(self, name)) and getattr(self, name) >= 1, f"{name} must be >= 1")
        _require(_is_int(self.clean_every) and self.clean_every >= 0, "clean_every must be >= 0")
        _require(_is_int(self.seed) and 0 <= self.seed < 2 ** 64, "seed must be an unsigned 64-bit integer")

    @property
    def eps_value(self) -> float:
        return eps_n(self.n, self.n0) if self.eps == "auto" else float(self.eps)

    def n_max(self) -> int:
        if self.n != "diagonal":
            return int(self.n)
        m = 1
        while m * (m + 1) // 2 < self.K:
            m += 1
        return m

    def sim_grid(self) -> Grid3:
        if self.grid is not None:
            return Grid3(*self.grid)
        f = self.n_max() * self.n0
        return Grid3(_even_above(3 * f), _even_above(3 * f), _even_above(3 * self.n_max()))

    def to_dict(self) -> dict:
        return asdict(self)


def _even_above(x: int) -> int:
    """Smallest even integer > x (at least 4): an axis that resolves x/3 alias free."""
    n = x + 1
    n += n % 2
    return max(4, n)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _require(ok: bool, msg: str):
    if not ok:
        raise InvalidValueError(msg)


def config_from_dict(d: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise UnknownKeyError(f"unknown config key(s): {', '.join(unknown)}")
    try:
        return RunConfig(**d)
    except TypeError as e:  # comparisons against wrongly typed values
        raise InvalidValueError(str(e)) from None


def parse_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise MissingConfigError(f"config file not found: {p}")
    try:
        d = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise InvalidValueError(f"{p}: not valid JSON ({e})") from None
    if not isinstance(d, dict):
        raise InvalidValueError(f"{p}: top level must be a JSON object")
    return config_from_dict(d)


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})

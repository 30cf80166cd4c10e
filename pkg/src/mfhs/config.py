"""Run configuration in a line-oriented ``section.key = value`` format."""
from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field

from .errors import ConfigError, ConstraintError
from .measures import FAMILIES, MeasureSpec, SwitchedBernoulli
from .symbolic import Schedule

SECTIONS = ("measure", "grids", "schedules", "output")
GRID_KEYS = {"q", "alpha"}
SCHEDULE_KEYS = {"depths", "eps", "max_depth"}
OUTPUT_KEYS = {"dir", "cache", "seed"}


@dataclass(frozen=True)
class Grid:
    start: float
    stop: float
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"grid step must be positive, got {self.step}")
        if self.stop < self.start:
            raise ValueError(f"grid is empty: stop {self.stop} < start {self.start}")

    def values(self):
        import numpy as np

        n = int(math.floor((self.stop - self.start) / self.step + 1e-9))
        return np.round(self.start + self.step * np.arange(n + 1), 12)


@dataclass(frozen=True)
class RunConfig:
    measure: MeasureSpec = field(default_factory=SwitchedBernoulli)
    q_grid: Grid = Grid(-5.0, 5.0, 0.05)
    alpha_grid: Grid | None = None
    depth_schedule: tuple[int, ...] | None = None
    eps_schedule: tuple[float, ...] = (0.2, 0.1, 0.05, 0.02)
    max_depth: int | None = None
    out_dir: str = "out"
    cache: bool = True
    seed: int = 0

    def digest(self) -> str:
        return hashlib.sha256(serialize(self).encode()).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, Schedule):
        if v.kind == "custom":
            return "custom:" + " ".join(str(x) for x in v.values)
        return v.kind
    return str(v)


def _measure_fields(cls) -> list[dataclasses.Field]:
    return [f for f in dataclasses.fields(cls) if f.init]


def serialize(cfg: RunConfig) -> str:
    m = cfg.measure
    lines = [f"measure.family = {m.family}"]
    for f in _measure_fields(type(m)):
        lines.append(f"measure.{f.name} = {_fmt(getattr(m, f.name))}")
    g = cfg.q_grid
    lines.append(f"grids.q = {_fmt((g.start, g.stop, g.step))}")
    if cfg.alpha_grid is not None:
        a = cfg.alpha_grid
        lines.append(f"grids.alpha = {_fmt((a.start, a.stop, a.step))}")
    if cfg.depth_schedule is not None:
        lines.append(f"schedules.depths = {_fmt(cfg.depth_schedule)}")
    lines.append(f"schedules.eps = {_fmt(cfg.eps_schedule)}")
    if cfg.max_depth is not None:
        lines.append(f"schedules.max_depth = {cfg.max_depth}")
    lines.append(f"output.dir = {cfg.out_dir}")
    lines.append(f"output.cache = {_fmt(cfg.cache)}")
    lines.append(f"output.seed = {cfg.seed}")
    return "\n".join(lines) + "\n"


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _schedule(text: str) -> Schedule:
    t = text.strip()
    if t.startswith("custom:"):
        return Schedule("custom", tuple(int(x) for x in t[7:].replace(",", " ").split()))
    return Schedule(t)


def _convert(field_type, text: str):
    ft = str(field_type)
    if "Schedule" in ft:
        return _schedule(text)
    if "tuple" in ft:
        return _floats(text)
    if "bool" in ft:
        return _bool(text)
    return float(text)


def parse_config(text: str) -> RunConfig:
    """Parse and validate; errors name the offending line."""
    entries: dict[str, tuple[int, str]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"line {lineno}: key {key!r} lacks a section prefix")
        section, name = key.split(".", 1)
        if section not in SECTIONS:
            raise ConfigError(f"line {lineno}: unknown section {section!r}")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first on line {entries[key][0]})")
        entries[key] = (lineno, value)

    def line_of(key: str) -> int:
        return entries.get(key, (0, ""))[0]

    def fail(key: str, msg: str):
        ln = line_of(key) or line_of("measure.family")
        where = f"line {ln}: " if ln else ""
        raise ConfigError(where + msg)

    fam_name = entries.get("measure.family", (0, "SwitchedBernoulli"))[1]
    if fam_name not in FAMILIES:
        fail("measure.family", f"unknown family {fam_name!r}; choose from {sorted(FAMILIES)}")
    cls = FAMILIES[fam_name]
    fields = {f.name: f for f in _measure_fields(cls)}
    kwargs = {}
    cfg_kw: dict = {}
    for key, (ln, value) in entries.items():
        section, name = key.split(".", 1)
        try:
            if section == "measure":
                if name == "family":
                    continue
                if name not in fields:
                    fail(key, f"unknown key {key!r} for {fam_name}; expected one of {sorted(fields)}")
                kwargs[name] = _convert(fields[name].type, value)
            elif section == "grids":
                if name not in GRID_KEYS:
                    fail(key, f"unknown key {key!r}")
                vals = _floats(value)
                if len(vals) != 3:
                    fail(key, f"{key} needs 'start, stop, step'")
                cfg_kw["q_grid" if name == "q" else "alpha_grid"] = Grid(*vals)
            elif section == "schedules":
                if name not in SCHEDULE_KEYS:
                    fail(key, f"unknown key {key!r}")
                if name == "depths":
                    d = _ints(value)
                    if not d or any(b <= a for a, b in zip(d, d[1:])) or d[0] < 1:
                        fail(key, "schedules.depths must be increasing positive integers")
                    cfg_kw["depth_schedule"] = d
                elif name == "eps":
                    e = _floats(value)
                    if not e or any(x <= 0 for x in e):
                        fail(key, "schedules.eps must be positive numbers")
                    cfg_kw["eps_schedule"] = e
                else:
                    cfg_kw["max_depth"] = int(value)
            else:
                if name not in OUTPUT_KEYS:
                    fail(key, f"unknown key {key!r}")
                if name == "dir":
                    cfg_kw["out_dir"] = value
                elif name == "cache":
                    cfg_kw["cache"] = _bool(value)
                else:
                    cfg_kw["seed"] = int(value)
        except ConfigError:
            raise
        except ValueError as exc:
            fail(key, f"{key} = {value}: {exc}")
    try:
        measure = cls(**kwargs)
    except ConstraintError as exc:
        fail(f"measure.{exc.param}", f"measure.{exc.param}: {exc}")
    return RunConfig(measure=measure, **cfg_kw)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())

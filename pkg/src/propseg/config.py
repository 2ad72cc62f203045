"""Run configuration and its flat text format.

Config files are ``key = value`` lines with ``#`` comments. Every key
must name a RunConfig field; values are coerced by the field's type
(ints, floats, booleans as true/false, comma-separated ints for layer
width tuples).
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import ConfigError


@dataclass(frozen=True)
class RunConfig:
    # propagation head
    sigma: float = 1.0
    alpha: float = 0.99
    beta: float = 0.8
    groups: int = 8
    bidirectional: bool = True
    stratified: bool = True
    squared_distance: bool = True
    unit_diagonal: bool = False
    # instance loss margins
    delta_v: float = 0.5
    delta_d: float = 1.5
    # inference
    bandwidth: float = 0.8
    merge_cell: float = 0.5
    merge_overlap: float = 0.3
    # optimization
    lr: float = 0.01
    lr_halve_every: int = 20
    epochs: int = 100
    batch: int = 8
    momentum: float = 0.0
    # data pipeline
    points_per_block: int = 512
    block_size: float = 1.0
    mode: str = "scene"
    seed: int = 0
    validate_every: int = 5
    # architecture (embedding widths 32/128 and the joint 160 are fixed)
    point_widths: tuple = (64, 128, 256)
    fuse_hidden: tuple = (256,)
    feature_dim: int = 256
    ins_hidden: int = 128

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError(
                f"alpha must lie strictly between 0 and 1, got {self.alpha}")
        if self.beta < 0:
            raise ConfigError(f"beta must be non-negative, got {self.beta}")
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.groups < 2 or self.groups % 2:
            raise ConfigError(
                f"groups must be an even number >= 2, got {self.groups}")
        if self.delta_v <= 0 or self.delta_d <= 0:
            raise ConfigError("margins must be positive")
        if self.bandwidth <= 0 or self.merge_cell <= 0:
            raise ConfigError("bandwidth and merge_cell must be positive")
        if not (0.0 < self.merge_overlap <= 1.0):
            raise ConfigError(
                f"merge_overlap must be in (0, 1], got {self.merge_overlap}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.lr_halve_every < 1:
            raise ConfigError("lr_halve_every must be at least 1")
        if self.epochs < 1 or self.batch < 1:
            raise ConfigError("epochs and batch must be at least 1")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.points_per_block < self.groups:
            raise ConfigError(
                f"points_per_block ({self.points_per_block}) must be at "
                f"least groups ({self.groups})")
        if self.block_size <= 0:
            raise ConfigError("block_size must be positive")
        if self.mode not in ("scene", "shape"):
            raise ConfigError(f"mode must be scene or shape, got {self.mode!r}")
        if self.validate_every < 0:
            raise ConfigError("validate_every must be >= 0")

    @property
    def input_dim(self) -> int:
        return 9 if self.mode == "scene" else 3

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **kw)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(field, raw: str):
    if isinstance(field.default, bool):
        low = raw.lower()
        if low not in ("true", "false"):
            raise ConfigError(f"{field.name} expects true or false, got {raw!r}")
        return low == "true"
    if isinstance(field.default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{field.name} expects an integer, got {raw!r}") \
                from None
    if isinstance(field.default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{field.name} expects a number, got {raw!r}") \
                from None
    if isinstance(field.default, tuple):
        try:
            return tuple(int(v) for v in raw.split(",") if v.strip())
        except ValueError:
            raise ConfigError(
                f"{field.name} expects comma-separated integers, got {raw!r}") \
                from None
    return raw


def parse_config(text: str, base: RunConfig = None) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', "
                              f"got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        field = _FIELDS.get(key)
        if field is None:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _coerce(field, value)
    if base is not None:
        return base.with_overrides(**values)
    return RunConfig(**values)


def load_config(path, base: RunConfig = None) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return parse_config(text, base)

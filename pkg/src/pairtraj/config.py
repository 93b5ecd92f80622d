"""Flat key=value run configuration: explicit types, strict keys, stable hash."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

from .errors import ConfigError

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_int(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def _parse_float(text: str) -> float:
    try:
        return float(text.strip())
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}") from None


def _parse_floats(text: str) -> tuple[float, ...]:
    stripped = text.strip()
    if not stripped:
        return ()
    return tuple(_parse_float(part) for part in stripped.split(","))


def _parse_ints(text: str) -> tuple[int, ...]:
    stripped = text.strip()
    if not stripped:
        return ()
    return tuple(_parse_int(part) for part in stripped.split(","))


def _parse_strs(text: str) -> tuple[str, ...]:
    stripped = text.strip()
    if not stripped:
        return ()
    return tuple(part.strip() for part in stripped.split(","))


def _parse_str(text: str) -> str:
    return text.strip()


_PARSERS = {
    "input": _parse_str,
    "output_dir": _parse_str,
    "method": _parse_str,
    "kind": _parse_str,
    "axis1": _parse_str,
    "axis2": _parse_str,
    "num_samples": _parse_int,
    "k": _parse_int,
    "beta": _parse_int,
    "seed": _parse_int,
    "max_iter": _parse_int,
    "n_init": _parse_int,
    "anchor": _parse_int,
    "workers": _parse_int,
    "per_family": _parse_int,
    "count": _parse_int,
    "normalize": _parse_bool,
    "r": _parse_float,
    "noise": _parse_float,
    "box": _parse_float,
    "epsilons": _parse_floats,
    "axis1_values": _parse_floats,
    "axis2_values": _parse_floats,
    "knots": _parse_ints,
    "families": _parse_strs,
}

_KINDS = ("families", "encounters")


@dataclass
class RunConfig:
    """Every knob the pipeline reads; field names double as config keys."""

    input: str = ""
    output_dir: str = "out"
    num_samples: int = 101
    normalize: bool = False
    method: str = "mds"
    k: int = 3
    beta: int = 2
    seed: int = 0
    max_iter: int = 300
    n_init: int = 8
    anchor: int = 0
    r: float = 2.0
    workers: int = 0
    epsilons: tuple[float, ...] = ()
    axis1: str = "k"
    axis1_values: tuple[float, ...] = (2.0, 3.0, 4.0)
    axis2: str = "beta"
    axis2_values: tuple[float, ...] = (2.0, 3.0)
    kind: str = "families"
    families: tuple[str, ...] = ("parallel", "opposing", "crossing")
    per_family: int = 50
    noise: float = 0.01
    count: int = 8
    knots: tuple[int, ...] = (40, 80)
    box: float = 2.0

    def set(self, key: str, text: str) -> None:
        """Assign one key from its text form; unknown keys are rejected."""
        if key not in _PARSERS:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(self, key, _PARSERS[key](text))

    def validate(self) -> None:
        from .clustering import METHODS

        if self.method not in METHODS:
            raise ConfigError(
                f"method must be one of {', '.join(METHODS)}, got {self.method!r}"
            )
        if self.kind not in _KINDS:
            raise ConfigError(f"kind must be one of {', '.join(_KINDS)}")
        if self.num_samples < 2:
            raise ConfigError("num_samples must be at least 2")
        if self.r < 1.0:
            raise ConfigError("r must be at least 1")
        if self.workers < 0:
            raise ConfigError("workers must be nonnegative")

    def render(self) -> str:
        """Canonical text form: one sorted key=value line per parameter.

        Paths (input, output_dir) are locations rather than parameters and are
        left out, so the hash identifies the computation, not where it ran.
        """
        lines = []
        for field in sorted(f.name for f in fields(self)):
            if field in ("input", "output_dir"):
                continue
            value = getattr(self, field)
            if isinstance(value, tuple):
                text = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{field}={text}")
        return "\n".join(lines) + "\n"

    def sha256(self) -> str:
        return hashlib.sha256(self.render().encode()).hexdigest()


def load_config(path) -> RunConfig:
    """Read `key = value` lines; '#' comments and blank lines are skipped."""
    config = RunConfig()
    try:
        with open(path) as handle:
            for lineno, raw in enumerate(handle, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, _, value = line.partition("=")
                try:
                    config.set(key.strip(), value)
                except ConfigError as exc:
                    raise ConfigError(f"{path}:{lineno}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config

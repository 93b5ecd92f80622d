"""Core types for planar trajectory pairs sampled on shared time grids."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError, InvalidInputError

CSV_HEADER = ("encounter_id", "t", "x1", "y1", "x2", "y2")


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


def _fmt(value: float) -> str:
    # shortest text that round-trips a double
    return format(float(value), ".17g")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A planar curve: samples (T, 2) observed on a strictly increasing grid (T,)."""

    samples: np.ndarray
    grid: np.ndarray

    def __post_init__(self) -> None:
        samples = _frozen_array(self.samples)
        grid = _frozen_array(self.grid)
        if grid.ndim != 1 or grid.size < 2:
            raise InvalidInputError("grid must be 1-d with at least two samples")
        if samples.shape != (grid.size, 2):
            raise InvalidInputError(
                f"samples must have shape ({grid.size}, 2), got {samples.shape}"
            )
        if not (np.all(np.isfinite(grid)) and np.all(np.isfinite(samples))):
            raise InvalidInputError("trajectory contains non-finite values")
        if not np.all(np.diff(grid) > 0):
            raise InvalidInputError("time grid must be strictly increasing")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "grid", grid)

    def __len__(self) -> int:
        return int(self.grid.size)


@dataclass(frozen=True, eq=False)
class Interaction:
    """An ordered pair of trajectories on one shared time grid."""

    first: Trajectory
    second: Trajectory

    def __post_init__(self) -> None:
        if not np.array_equal(self.first.grid, self.second.grid):
            raise InvalidInputError("paired trajectories must share one time grid")

    @property
    def grid(self) -> np.ndarray:
        return self.first.grid

    def __len__(self) -> int:
        return len(self.first)

    def swapped(self) -> "Interaction":
        """The same encounter with the pair order exchanged."""
        return Interaction(self.second, self.first)


@dataclass(frozen=True, eq=False)
class TimeMeasure:
    """Discrete weights over a time grid; nonnegative, summing to one."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = _frozen_array(self.weights)
        if w.ndim != 1 or w.size < 1:
            raise InvalidInputError("weights must be a nonempty 1-d array")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidInputError("weights must be finite and nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise InvalidInputError("weights must sum to 1 within 1e-12")
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return int(self.weights.size)


def uniform_measure(num_samples: int) -> TimeMeasure:
    """Uniform weights 1/T on a grid of T samples."""
    if num_samples < 1:
        raise InvalidInputError("num_samples must be positive")
    return TimeMeasure(np.full(num_samples, 1.0 / num_samples))


def resample(interaction: Interaction, num_samples: int = 101) -> Interaction:
    """Linearly interpolate both curves onto the uniform grid over [0, 1].

    The raw grid is first mapped affinely onto [0, 1]; already-uniform input
    of matching length passes through unchanged.
    """
    if num_samples < 2:
        raise InvalidInputError("num_samples must be at least 2")
    old = interaction.grid
    scaled = (old - old[0]) / (old[-1] - old[0])
    target = np.linspace(0.0, 1.0, num_samples)
    curves = []
    for traj in (interaction.first, interaction.second):
        pts = np.column_stack(
            [np.interp(target, scaled, traj.samples[:, d]) for d in range(2)]
        )
        curves.append(Trajectory(pts, target))
    return Interaction(curves[0], curves[1])


def interaction_to_dict(interaction: Interaction) -> dict:
    """JSON-ready encoding: inline grid plus both coordinate arrays."""
    return {
        "grid": [float(t) for t in interaction.grid],
        "first": [[float(x), float(y)] for x, y in interaction.first.samples],
        "second": [[float(x), float(y)] for x, y in interaction.second.samples],
    }


def interaction_from_dict(payload: dict) -> Interaction:
    try:
        grid = payload["grid"]
        first = payload["first"]
        second = payload["second"]
    except (KeyError, TypeError) as exc:
        raise DataError(f"interaction record is missing field {exc}") from None
    return Interaction(Trajectory(first, grid), Trajectory(second, grid))


def read_encounters_csv(path) -> list[tuple[str, Interaction]]:
    """Read `encounter_id,t,x1,y1,x2,y2` rows grouped by encounter, sorted by t.

    Leading `#` lines (metadata) are skipped.  Malformed rows raise DataError
    with the offending line number.
    """
    order: list[str] = []
    rows: dict[str, list[tuple[float, float, float, float, float]]] = {}
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with handle:
        lineno = 0
        header_seen = False
        last_id = None
        for raw in handle:
            lineno += 1
            if raw.startswith("#"):
                continue
            line = raw.strip()
            if not line:
                continue
            fields = next(csv.reader([line]))
            if not header_seen:
                if tuple(f.strip() for f in fields) != CSV_HEADER:
                    raise DataError(
                        f"{path}:{lineno}: expected header {','.join(CSV_HEADER)}"
                    )
                header_seen = True
                continue
            if len(fields) != 6:
                raise DataError(f"{path}:{lineno}: expected 6 fields, got {len(fields)}")
            enc_id = fields[0]
            try:
                t, x1, y1, x2, y2 = (float(v) for v in fields[1:])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value") from None
            if enc_id not in rows:
                rows[enc_id] = []
                order.append(enc_id)
            elif enc_id != last_id:
                raise DataError(
                    f"{path}:{lineno}: rows for encounter {enc_id!r} are not contiguous"
                )
            if rows[enc_id] and t <= rows[enc_id][-1][0]:
                raise DataError(f"{path}:{lineno}: t is not strictly increasing")
            rows[enc_id].append((t, x1, y1, x2, y2))
            last_id = enc_id
        if not header_seen:
            raise DataError(f"{path}: empty file, expected header row")

    encounters = []
    for enc_id in order:
        arr = np.array(rows[enc_id])
        if arr.shape[0] < 2:
            raise DataError(f"{path}: encounter {enc_id!r} has fewer than 2 samples")
        grid = arr[:, 0]
        inter = Interaction(
            Trajectory(arr[:, 1:3], grid), Trajectory(arr[:, 3:5], grid)
        )
        encounters.append((enc_id, inter))
    return encounters


def write_encounters_csv(path, encounters, meta: dict | None = None) -> None:
    """Write encounters in the ingest format, with an optional metadata line."""
    with open(path, "w", newline="") as handle:
        if meta is not None:
            handle.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        handle.write(",".join(CSV_HEADER) + "\n")
        for enc_id, inter in encounters:
            f, s, grid = inter.first.samples, inter.second.samples, inter.grid
            for i in range(len(grid)):
                handle.write(
                    ",".join(
                        [str(enc_id)]
                        + [_fmt(v) for v in (grid[i], f[i, 0], f[i, 1], s[i, 0], s[i, 1])]
                    )
                    + "\n"
                )

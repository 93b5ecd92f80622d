"""Two-step spline segmentation of raw encounters into basic interactions.

Step 1 proposes change points per coordinate series: a binary search tests the
midpoint of a shrinking valid interval, accepts it when fitting separate
cubics to the two halves beats the single fit by more than a scale-aware
slack, rules out the smaller-error half otherwise, and recurses into accepted
segments.  Step 2 unions the candidates over all four coordinate series and
thins them with one forward pass: the middle point of each consecutive triple
is dropped whenever one cubic per series spans the outer pair with total SSE
below the tolerance, or the span has at most 4 observations.  The tolerance
is picked from a candidate grid by minimizing

    sum over series and segments of own-segment squared residuals + L + 2,

with L the number of surviving change points (penalty applied once, not per
series) and each observation counted in the unique segment containing it
(left-closed, right-open; the final point belongs to the last segment).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateFitError, InvalidInputError
from .trajectory import Interaction, Trajectory, _fmt, resample

_MIN_SEGMENT = 5  # raw samples; enough for one cubic fit plus a residual
_MIN_SIDE = 4  # samples on each side of a split, shared endpoint included
_SPLIT_SLACK = 1e-12  # of the segment's sum of squares; guards exact fits


@dataclass(frozen=True, eq=False)
class Encounter:
    """A raw recording: an id plus an interaction on the original time grid."""

    id: str
    interaction: Interaction

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise InvalidInputError("encounter id must be a nonempty string")
        if len(self.interaction) < _MIN_SEGMENT:
            raise InvalidInputError(
                f"encounter needs at least {_MIN_SEGMENT} samples, "
                f"got {len(self.interaction)}"
            )

    def series(self) -> np.ndarray:
        """(T, 4) columns x1, y1, x2, y2."""
        return np.column_stack(
            [self.interaction.first.samples, self.interaction.second.samples]
        )


@dataclass(frozen=True, eq=False)
class ChangePointSet:
    """Interior grid indices where an encounter may be cut, plus the ε used."""

    points: tuple[int, ...]
    tolerance: float | None = None

    def __post_init__(self) -> None:
        pts = []
        for p in self.points:
            if int(p) != p:
                raise InvalidInputError(f"change point {p!r} is not an index")
            pts.append(int(p))
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise InvalidInputError("change points must be strictly increasing")
        if pts and pts[0] < 1:
            raise InvalidInputError("change points must be interior indices")
        if self.tolerance is not None:
            tol = float(self.tolerance)
            if np.isnan(tol) or tol < 0:
                raise InvalidInputError("tolerance must be nonnegative")
            object.__setattr__(self, "tolerance", tol)
        object.__setattr__(self, "points", tuple(pts))

    def __len__(self) -> int:
        return len(self.points)


def fit_cubic(samples) -> tuple[np.ndarray, float]:
    """Least-squares cubic through (t, value) samples: (coefficients, sse).

    Coefficients are in increasing powers of the raw t.  A design of rank < 4
    (fewer than 4 distinct t values) has no unique cubic and is rejected.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidInputError("samples must be (t, value) pairs")
    t, y = arr[:, 0], arr[:, 1]
    design = np.vander(t, 4, increasing=True)
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < 4:
        raise DegenerateFitError(
            f"cubic design has rank {rank}; need 4 distinct t values"
        )
    resid = y - design @ coef
    return coef, float(resid @ resid)


def _span_residuals(t: np.ndarray, y: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Residuals of one cubic on the inclusive index span [lo, hi].

    Spans with < 4 points are interpolated exactly (residuals 0); t is shifted
    to start at zero, which changes the coefficients but not the fit.
    """
    ts = t[lo : hi + 1] - t[lo]
    ys = y[lo : hi + 1]
    design = np.vander(ts, 4, increasing=True)
    coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
    return ys - design @ coef


def _span_sse(t: np.ndarray, y: np.ndarray, lo: int, hi: int) -> float:
    resid = _span_residuals(t, y, lo, hi)
    return float(resid @ resid)


def _find_split(t: np.ndarray, y: np.ndarray, lo: int, hi: int) -> int | None:
    """Binary search of Appendix-style step 1 on one segment of one series."""
    if hi - lo + 1 < 2 * _MIN_SIDE - 1:  # both sides need >= 4 samples
        return None
    base = _span_sse(t, y, lo, hi)
    ys = y[lo : hi + 1]
    slack = _SPLIT_SLACK * float(ys @ ys)
    a, b = lo, hi
    last = -1
    while True:
        c = (a + b) // 2
        if c == last or c - lo < _MIN_SIDE - 1 or hi - c < _MIN_SIDE - 1:
            return None  # no further candidates in the valid interval
        last = c
        left = _span_sse(t, y, lo, c)
        right = _span_sse(t, y, c, hi)
        if left + right < base - slack:
            return c
        # rule out the smaller-error half; keep searching the other
        if left >= right:
            b = c
        else:
            a = c


def _series_change_points(t: np.ndarray, y: np.ndarray) -> set[int]:
    out: set[int] = set()

    def visit(lo: int, hi: int) -> None:
        c = _find_split(t, y, lo, hi)
        if c is not None:
            out.add(c)
            visit(lo, c)
            visit(c, hi)

    visit(0, len(y) - 1)
    return out


def add_change_points(traj: Trajectory) -> ChangePointSet:
    """Candidate change points for one trajectory (union over x and y series)."""
    found: set[int] = set()
    for series in (traj.samples[:, 0], traj.samples[:, 1]):
        found |= _series_change_points(traj.grid, series)
    return ChangePointSet(tuple(sorted(found)))


def combined_candidates(encounter: Encounter) -> ChangePointSet:
    """Union of candidates over all four coordinate series of both vehicles."""
    inter = encounter.interaction
    pts = set(add_change_points(inter.first).points)
    pts |= set(add_change_points(inter.second).points)
    return ChangePointSet(tuple(sorted(pts)))


def prune_change_points(
    encounter: Encounter, candidates: ChangePointSet, epsilon: float
) -> ChangePointSet:
    """One forward pass dropping removable candidates.

    Walks consecutive triples (c_l, c_l', c_l'') over start + candidates + end;
    the middle point is removed when the outer span has at most 4 observations
    or its four per-series cubic fits have total SSE strictly below epsilon.
    """
    epsilon = float(epsilon)
    if np.isnan(epsilon) or epsilon < 0:
        raise InvalidInputError("epsilon must be nonnegative")
    T = len(encounter.interaction)
    if any(not 0 < p < T - 1 for p in candidates.points):
        raise InvalidInputError("candidates must be interior to the grid")
    t = encounter.interaction.grid
    series = encounter.series()
    bounds = [0, *candidates.points, T - 1]
    i = 0
    while i + 2 < len(bounds):
        lo, hi = bounds[i], bounds[i + 2]
        if hi - lo + 1 <= 4:
            del bounds[i + 1]
            continue
        total = sum(_span_sse(t, series[:, s], lo, hi) for s in range(4))
        if total < epsilon:
            del bounds[i + 1]
        else:
            i += 1
    return ChangePointSet(tuple(bounds[1:-1]), tolerance=epsilon)


def _criterion(encounter: Encounter, knots: ChangePointSet) -> float:
    t = encounter.interaction.grid
    series = encounter.series()
    bounds = [0, *knots.points, len(encounter.interaction) - 1]
    total = 0.0
    for s in range(4):
        for idx in range(len(bounds) - 1):
            resid = _span_residuals(t, series[:, s], bounds[idx], bounds[idx + 1])
            if idx < len(bounds) - 2:
                resid = resid[:-1]  # boundary sample belongs to the next segment
            total += float(resid @ resid)
    return total + len(knots) + 2


def default_tolerances(encounter: Encounter, count: int = 10) -> np.ndarray:
    """Log-spaced ε grid spanning [1e-4, 1e2] times the mean series variance."""
    scale = float(encounter.series().var(axis=0).mean())
    if scale <= 0:
        scale = 1.0
    return scale * np.logspace(-4.0, 2.0, count)


def select_tolerance(
    encounter: Encounter,
    candidate_epsilons,
    candidates: ChangePointSet | None = None,
) -> float:
    """The ε whose pruned fit minimizes the penalized criterion (ties: smallest)."""
    grid = sorted(float(e) for e in candidate_epsilons)
    if not grid:
        raise InvalidInputError("need at least one candidate tolerance")
    if any(np.isnan(e) or e <= 0 for e in grid):
        raise InvalidInputError("candidate tolerances must be positive")
    if candidates is None:
        candidates = combined_candidates(encounter)
    best_eps, best_crit = None, None
    for eps in grid:
        crit = _criterion(encounter, prune_change_points(encounter, candidates, eps))
        if best_crit is None or crit < best_crit:
            best_eps, best_crit = eps, crit
    return best_eps


def _merge_short_spans(bounds: list[int]) -> list[tuple[int, int]]:
    spans = list(zip(bounds[:-1], bounds[1:]))
    merged: list[tuple[int, int]] = []
    for lo, hi in spans:
        if merged and hi - lo + 1 < _MIN_SEGMENT:
            merged[-1] = (merged[-1][0], hi)
        else:
            merged.append((lo, hi))
    # only the leading span can still be short; it merges rightward
    if len(merged) >= 2 and merged[0][1] - merged[0][0] + 1 < _MIN_SEGMENT:
        merged[1] = (merged[0][0], merged[1][1])
        merged.pop(0)
    return merged


def _slice_interaction(inter: Interaction, lo: int, hi: int) -> Interaction:
    grid = inter.grid[lo : hi + 1]
    return Interaction(
        Trajectory(inter.first.samples[lo : hi + 1], grid),
        Trajectory(inter.second.samples[lo : hi + 1], grid),
    )


def segment_with_knots(
    encounter: Encounter,
    candidate_epsilons=None,
    num_samples: int = 101,
) -> tuple[list[Interaction], ChangePointSet]:
    """Full pipeline returning the resampled segments and the surviving cuts."""
    if candidate_epsilons is None:
        candidate_epsilons = default_tolerances(encounter)
    candidates = combined_candidates(encounter)
    eps = select_tolerance(encounter, candidate_epsilons, candidates)
    pruned = prune_change_points(encounter, candidates, eps)
    T = len(encounter.interaction)
    spans = _merge_short_spans([0, *pruned.points, T - 1])
    segments = [
        resample(_slice_interaction(encounter.interaction, lo, hi), num_samples)
        for lo, hi in spans
    ]
    knots = ChangePointSet(tuple(hi for _, hi in spans[:-1]), tolerance=eps)
    return segments, knots


def segment(
    encounter: Encounter, candidate_epsilons=None, num_samples: int = 101
) -> list[Interaction]:
    """Cut one encounter at its selected change points; see segment_with_knots."""
    return segment_with_knots(encounter, candidate_epsilons, num_samples)[0]


# ---------------------------------------------------------------------------
# artifacts

SEGMENT_HEADER = ("encounter_id", "segment_index", "t", "x1", "y1", "x2", "y2")


def write_segments_csv(path, segmented, meta: dict | None = None) -> None:
    """Rows of every segment of every encounter; segmented is (id, segments) pairs."""
    with open(path, "w", newline="") as handle:
        if meta is not None:
            handle.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        handle.write(",".join(SEGMENT_HEADER) + "\n")
        for enc_id, segments in segmented:
            for index, inter in enumerate(segments):
                for row in range(len(inter)):
                    fields = (
                        enc_id,
                        str(index),
                        _fmt(inter.grid[row]),
                        _fmt(inter.first.samples[row, 0]),
                        _fmt(inter.first.samples[row, 1]),
                        _fmt(inter.second.samples[row, 0]),
                        _fmt(inter.second.samples[row, 1]),
                    )
                    handle.write(",".join(fields) + "\n")


def read_segments_csv(path) -> list[tuple[str, list[Interaction]]]:
    try:
        handle = open(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with handle:
        lines = [
            (no, ln.rstrip("\n"))
            for no, ln in enumerate(handle, start=1)
            if ln.strip() and not ln.startswith("#")
        ]
    if not lines or lines[0][1] != ",".join(SEGMENT_HEADER):
        raise DataError(f"{path}: bad segment header")
    groups: dict[tuple[str, int], list[list[float]]] = {}
    order: list[tuple[str, int]] = []
    for no, line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 7:
            raise DataError(f"{path}:{no}: expected 7 fields")
        try:
            key = (parts[0], int(parts[1]))
            values = [float(v) for v in parts[2:]]
        except ValueError as exc:
            raise DataError(f"{path}:{no}: bad field: {exc}") from exc
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(values)
    out: list[tuple[str, list[Interaction]]] = []
    for key in order:
        rows = np.array(groups[key])
        inter = Interaction(
            Trajectory(rows[:, 1:3], rows[:, 0]), Trajectory(rows[:, 3:5], rows[:, 0])
        )
        if out and out[-1][0] == key[0]:
            out[-1][1].append(inter)
        else:
            out.append((key[0], [inter]))
    return out


def write_knots_json(path, entries, meta: dict | None = None) -> None:
    """entries: (encounter_id, ChangePointSet) pairs with the selected ε each."""
    payload: dict = {
        "encounters": {
            enc_id: {"knots": list(knots.points), "epsilon": knots.tolerance}
            for enc_id, knots in entries
        }
    }
    if meta is not None:
        payload["meta"] = meta
    with open(path, "w") as handle:
        json.dump(payload, handle, sort_keys=True, indent=2)
        handle.write("\n")


def read_knots_json(path) -> list[tuple[str, ChangePointSet]]:
    try:
        with open(path) as handle:
            payload = json.load(handle)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return [
            (enc_id, ChangePointSet(tuple(entry["knots"]), entry["epsilon"]))
            for enc_id, entry in sorted(payload["encounters"].items())
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed knot manifest: {exc}") from exc

"""Rigid-motion quotient distance between ordered trajectory pairs.

The distance between interactions (f11, f12) and (f21, f22) is the infimum
over rotations O in SO(2), translations c, and the pair-order swap of the
second interaction, of the weighted mismatch

    rho^2 = sum_i integral ||f_1i - (O f_2i + c)||^2 dmu .

Both curves of a pair move under one shared rigid motion.  The optimal motion
has a closed form through the SVD of the 2x2 cross-covariance of jointly
centered curves; the swap branch is the same computation with the source
curves exchanged, and the reported distance is the smaller branch.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import DataError, InvalidInputError
from .trajectory import Interaction, TimeMeasure, Trajectory, _fmt, uniform_measure

_MAGIC = b"PTDM"


@dataclass(frozen=True, eq=False)
class Alignment:
    """A proper rigid motion x -> rotation @ x + translation, plus the swap flag."""

    rotation: np.ndarray
    translation: np.ndarray
    swapped: bool

    def __post_init__(self) -> None:
        rot = np.array(self.rotation, dtype=float)
        trans = np.array(self.translation, dtype=float)
        if rot.shape != (2, 2) or trans.shape != (2,):
            raise InvalidInputError("rotation must be 2x2 and translation length 2")
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(trans))):
            raise InvalidInputError("alignment contains non-finite values")
        if np.max(np.abs(rot.T @ rot - np.eye(2))) > 1e-10:
            raise InvalidInputError("rotation is not orthogonal within 1e-10")
        if abs(np.linalg.det(rot) - 1.0) > 1e-10:
            raise InvalidInputError("rotation must be proper (det +1 within 1e-10)")
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    def apply(self, interaction: Interaction) -> Interaction:
        """Move both curves of an interaction by this rigid motion.

        The swap flag is the caller's business: apply() never reorders the pair.
        """
        grid = interaction.grid
        moved = [
            Trajectory(traj.samples @ self.rotation.T + self.translation, grid)
            for traj in (interaction.first, interaction.second)
        ]
        return Interaction(moved[0], moved[1])


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Symmetric nonnegative pairwise distances with a (near-)zero diagonal."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        ent = np.array(self.entries, dtype=float)
        if ent.ndim != 2 or ent.shape[0] != ent.shape[1] or ent.shape[0] < 1:
            raise InvalidInputError("entries must be a nonempty square matrix")
        if not np.all(np.isfinite(ent)):
            raise InvalidInputError("distance matrix contains non-finite values")
        if np.any(ent < 0):
            raise InvalidInputError("distances must be nonnegative")
        if np.max(np.abs(ent - ent.T)) > 1e-10:
            raise InvalidInputError("distance matrix must be symmetric within 1e-10")
        if np.max(np.abs(np.diag(ent))) > 1e-10:
            raise InvalidInputError("diagonal must be zero within 1e-10")
        ent.setflags(write=False)
        object.__setattr__(self, "entries", ent)

    @property
    def n(self) -> int:
        return int(self.entries.shape[0])


class _Packed:
    """Per-interaction cache for the closed-form alignment.

    rows stacks first over second (2T, 2); the mean is the joint mean over
    both curves; `weighted` carries the per-row measure weights so the 2x2
    cross-covariance of any pair is a single (2T,2)^T (2T,2) product.
    """

    __slots__ = ("centered", "weighted", "mean", "half")

    def __init__(self, interaction: Interaction, row_weights: np.ndarray):
        rows = np.concatenate([interaction.first.samples, interaction.second.samples])
        mean = 0.5 * (row_weights @ rows)
        centered = rows - mean
        self.centered = centered
        self.weighted = centered * row_weights[:, None]
        self.mean = mean
        self.half = rows.shape[0] // 2

    def centered_swapped(self) -> np.ndarray:
        h = self.half
        return np.concatenate([self.centered[h:], self.centered[:h]])

    def weighted_swapped(self) -> np.ndarray:
        h = self.half
        return np.concatenate([self.weighted[h:], self.weighted[:h]])


def _resolve_measure(mu: TimeMeasure | None, num_samples: int) -> TimeMeasure:
    if mu is None:
        return uniform_measure(num_samples)
    if len(mu) != num_samples:
        raise InvalidInputError(
            f"measure has {len(mu)} weights but the grid has {num_samples} samples"
        )
    return mu


def _row_weights(mu: TimeMeasure) -> np.ndarray:
    return np.concatenate([mu.weights, mu.weights])


def _cross_covariance(source: _Packed, target: _Packed, swap: bool) -> np.ndarray:
    src = source.weighted_swapped() if swap else source.weighted
    return src.T @ target.centered


def _optimal_rotation(cross: np.ndarray) -> np.ndarray:
    """The rotation in SO(2) maximizing trace(cross @ O)."""
    u, sv, vh = np.linalg.svd(cross)
    if sv[0] == 0.0:
        # all mass coincident after centering: any rotation ties, pick identity
        return np.eye(2)
    sign = np.sign(np.linalg.det(u) * np.linalg.det(vh))
    return vh.T @ np.diag([1.0, sign]) @ u.T


def _branch_residual_sq(
    source: _Packed, target: _Packed, w_row: np.ndarray, swap: bool
) -> tuple[float, np.ndarray]:
    """Optimal rotation for one ordering plus the realized weighted mismatch.

    The residual is evaluated as the mismatch of the actually rotated curves
    (a plain sum of squares) rather than total_norm2 - 2*trace: the subtraction
    form cancels catastrophically for near-identical pairs.
    """
    src = source.centered_swapped() if swap else source.centered
    rot = _optimal_rotation(_cross_covariance(source, target, swap))
    diff = target.centered - src @ rot.T
    return float(np.sum(w_row[:, None] * diff * diff)), rot


def _check_pair(target: Interaction, source: Interaction) -> None:
    if len(target) != len(source):
        raise InvalidInputError(
            f"interactions have different grid lengths ({len(target)} vs {len(source)})"
        )


def align(
    target: Interaction, source: Interaction, mu: TimeMeasure | None = None
) -> tuple[Alignment, Interaction]:
    """Optimally rotate and translate `source` (both curves jointly) onto `target`.

    Pair order is never permuted here; the returned Alignment always has
    swapped=False.  Minimizes rho^2 over SO(2) x R^2 in closed form.
    """
    _check_pair(target, source)
    mu = _resolve_measure(mu, len(target))
    w = _row_weights(mu)
    tgt, src = _Packed(target, w), _Packed(source, w)
    rot = _optimal_rotation(_cross_covariance(src, tgt, swap=False))
    trans = tgt.mean - rot @ src.mean
    fit = Alignment(rot, trans, swapped=False)
    return fit, fit.apply(source)


def distance(a: Interaction, b: Interaction, mu: TimeMeasure | None = None) -> float:
    """Quotient distance: rho minimized over rigid motions and the pair-order swap."""
    _check_pair(a, b)
    mu = _resolve_measure(mu, len(a))
    w = _row_weights(mu)
    tgt, src = _Packed(a, w), _Packed(b, w)
    r_keep, _ = _branch_residual_sq(src, tgt, w, swap=False)
    r_swap, _ = _branch_residual_sq(src, tgt, w, swap=True)
    return float(np.sqrt(min(r_keep, r_swap)))


def distance_with_alignment(
    a: Interaction, b: Interaction, mu: TimeMeasure | None = None
) -> tuple[float, Alignment]:
    """Like distance(), also reporting the realized rigid motion and swap flag.

    Ties between the two orderings keep swapped=False.
    """
    _check_pair(a, b)
    mu = _resolve_measure(mu, len(a))
    w = _row_weights(mu)
    tgt, src = _Packed(a, w), _Packed(b, w)
    r_keep, rot_keep = _branch_residual_sq(src, tgt, w, swap=False)
    r_swap, rot_swap = _branch_residual_sq(src, tgt, w, swap=True)
    swapped = bool(r_swap < r_keep)
    rot = rot_swap if swapped else rot_keep
    trans = tgt.mean - rot @ src.mean
    dist = float(np.sqrt(min(r_keep, r_swap)))
    return dist, Alignment(rot, trans, swapped=swapped)


def _batched_branch_residual_sq(
    src_centered: np.ndarray,
    src_weighted: np.ndarray,
    tgt_centered: np.ndarray,
    w_row: np.ndarray,
) -> np.ndarray:
    """Vectorized _branch_residual_sq for one target against a stack of sources."""
    cross = np.einsum("jta,tb->jab", src_weighted, tgt_centered)
    u, sv, vh = np.linalg.svd(cross)
    sign = np.sign(np.linalg.det(u) * np.linalg.det(vh))
    diagd = np.stack([np.ones_like(sign), sign], axis=-1)
    rot = np.einsum("jba,jb,jcb->jac", vh, diagd, u)
    degen = sv[:, 0] == 0.0
    if np.any(degen):
        rot[degen] = np.eye(2)
    diff = tgt_centered[None, :, :] - np.einsum("jac,jtc->jta", rot, src_centered)
    return np.einsum("t,jta,jta->j", w_row, diff, diff)


def _matrix_rows(
    start: int,
    stop: int,
    centered: np.ndarray,
    centered_swap: np.ndarray,
    weighted: np.ndarray,
    weighted_swap: np.ndarray,
    w_row: np.ndarray,
    out: np.ndarray,
) -> None:
    n = out.shape[0]
    for i in range(start, stop):
        if i + 1 >= n:
            continue
        tail = slice(i + 1, n)
        r_keep = _batched_branch_residual_sq(
            centered[tail], weighted[tail], centered[i], w_row
        )
        r_swap = _batched_branch_residual_sq(
            centered_swap[tail], weighted_swap[tail], centered[i], w_row
        )
        out[i, tail] = np.sqrt(np.minimum(r_keep, r_swap))


def distance_matrix(
    data: list[Interaction],
    mu: TimeMeasure | None = None,
    normalize: bool = False,
    workers: int | None = None,
) -> DistanceMatrix:
    """All pairwise quotient distances.

    With normalize=True the matrix is rescaled so its largest entry is 1
    (no-op on an all-zero matrix).  `workers` splits rows across threads;
    entries are written to disjoint slices, so the result does not depend
    on the worker count.
    """
    if len(data) < 1:
        raise InvalidInputError("need at least one interaction")
    T = len(data[0])
    for idx, inter in enumerate(data):
        if len(inter) != T:
            raise InvalidInputError(
                f"interaction {idx} has grid length {len(inter)}, expected {T}"
            )
    mu = _resolve_measure(mu, T)
    w = _row_weights(mu)
    packed = [_Packed(inter, w) for inter in data]
    centered = np.stack([p.centered for p in packed])
    centered_swap = np.stack([p.centered_swapped() for p in packed])
    weighted = np.stack([p.weighted for p in packed])
    weighted_swap = np.stack([p.weighted_swapped() for p in packed])

    n = len(data)
    out = np.zeros((n, n))
    if workers is not None and workers > 1 and n > 2:
        bounds = np.linspace(0, n - 1, workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(
                    _matrix_rows, bounds[t], bounds[t + 1],
                    centered, centered_swap, weighted, weighted_swap, w, out,
                )
                for t in range(workers)
            ]
            for fut in futures:
                fut.result()
    else:
        _matrix_rows(0, n - 1, centered, centered_swap, weighted, weighted_swap, w, out)
    out += out.T
    if normalize:
        top = out.max()
        if top > 0:
            out = out / top
    return DistanceMatrix(out)


def cross_distance_matrix(
    left: list[Interaction],
    right: list[Interaction],
    mu: TimeMeasure | None = None,
) -> np.ndarray:
    """Rectangular matrix of quotient distances d(left[i], right[j])."""
    if not left or not right:
        raise InvalidInputError("need at least one interaction on each side")
    T = len(left[0])
    for idx, inter in enumerate(list(left) + list(right)):
        if len(inter) != T:
            raise InvalidInputError(
                f"interaction {idx} has grid length {len(inter)}, expected {T}"
            )
    mu = _resolve_measure(mu, T)
    w = _row_weights(mu)
    packed = [_Packed(inter, w) for inter in left]
    centered = np.stack([p.centered for p in packed])
    centered_swap = np.stack([p.centered_swapped() for p in packed])
    weighted = np.stack([p.weighted for p in packed])
    weighted_swap = np.stack([p.weighted_swapped() for p in packed])
    out = np.empty((len(left), len(right)))
    for j, inter in enumerate(right):
        tgt = _Packed(inter, w)
        r_keep = _batched_branch_residual_sq(centered, weighted, tgt.centered, w)
        r_swap = _batched_branch_residual_sq(
            centered_swap, weighted_swap, tgt.centered, w
        )
        out[:, j] = np.sqrt(np.minimum(r_keep, r_swap))
    return out


def write_matrix_csv(path, matrix: DistanceMatrix, meta: dict | None = None) -> None:
    """Text form: optional `#` metadata line, a header line holding n, then n rows."""
    import json

    with open(path, "w", newline="") as handle:
        if meta is not None:
            handle.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        handle.write(f"{matrix.n}\n")
        for row in matrix.entries:
            handle.write(",".join(_fmt(v) for v in row) + "\n")


def read_matrix_csv(path) -> DistanceMatrix:
    try:
        handle = open(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with handle:
        lines = [ln.strip() for ln in handle if not ln.startswith("#") and ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty distance matrix file")
    try:
        n = int(lines[0])
    except ValueError:
        raise DataError(f"{path}: first line must hold the matrix size") from None
    if len(lines) != n + 1:
        raise DataError(f"{path}: expected {n} rows, found {len(lines) - 1}")
    try:
        rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    except ValueError:
        raise DataError(f"{path}: non-numeric matrix entry") from None
    if any(len(r) != n for r in rows):
        raise DataError(f"{path}: ragged rows, expected {n} entries per row")
    return DistanceMatrix(np.array(rows))


def write_matrix_binary(path, matrix: DistanceMatrix) -> None:
    """Compact layout: magic, little-endian int64 n, row-major float64 entries."""
    with open(path, "wb") as handle:
        handle.write(_MAGIC)
        handle.write(struct.pack("<q", matrix.n))
        handle.write(np.ascontiguousarray(matrix.entries, dtype="<f8").tobytes())


def read_matrix_binary(path) -> DistanceMatrix:
    try:
        with open(path, "rb") as handle:
            blob = handle.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    head = len(_MAGIC) + 8
    if len(blob) < head or blob[: len(_MAGIC)] != _MAGIC:
        raise DataError(f"{path}: not a distance-matrix binary file")
    (n,) = struct.unpack("<q", blob[len(_MAGIC) : head])
    expected = head + 8 * n * n
    if n < 1 or len(blob) != expected:
        raise DataError(f"{path}: truncated or oversized payload for n={n}")
    entries = np.frombuffer(blob[head:], dtype="<f8").reshape(n, n)
    return DistanceMatrix(entries)

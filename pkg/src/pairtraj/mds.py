"""Metric multidimensional scaling of a distance matrix into R^beta.

Classical (double-centered spectral) coordinates start the search; a
majorization loop (Guttman transform) then descends the raw stress

    stress(Y) = sum_{i,j} (||y_i - y_j|| - D_ij)^2

over all ordered pairs.  Each majorization step never increases the stress,
so the reported value is monotone over iterations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError, InvalidInputError
from .procrustes import DistanceMatrix
from .trajectory import _fmt

_REL_TOL = 1e-8
_MAX_ITER = 500


@dataclass(frozen=True, eq=False)
class Embedding:
    """Embedded coordinates (n, beta) plus the realized raw stress."""

    points: np.ndarray
    stress: float

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise InvalidInputError("points must be a (n, beta) array")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("embedding contains non-finite values")
        if not (np.isfinite(self.stress) and self.stress >= 0):
            raise InvalidInputError("stress must be finite and nonnegative")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "stress", float(self.stress))

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def beta(self) -> int:
        return int(self.points.shape[1])


def _pairwise(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _raw_stress(points: np.ndarray, deltas: np.ndarray) -> float:
    gap = _pairwise(points) - deltas
    return float(np.sum(gap * gap))


def _classical_start(deltas: np.ndarray, beta: int) -> np.ndarray:
    n = deltas.shape[0]
    sq = deltas * deltas
    # double centering: B = -1/2 J D^2 J
    row = sq.mean(axis=1, keepdims=True)
    col = sq.mean(axis=0, keepdims=True)
    B = -0.5 * (sq - row - col + sq.mean())
    vals, vecs = np.linalg.eigh(B)
    order = np.argsort(vals)[::-1][:beta]
    lam = np.clip(vals[order], 0.0, None)
    return vecs[:, order] * np.sqrt(lam)


def _smacof(points: np.ndarray, deltas: np.ndarray, max_iter: int) -> tuple[np.ndarray, float]:
    n = points.shape[0]
    stress = _raw_stress(points, deltas)
    for _ in range(max_iter):
        if stress == 0.0:
            break
        dist = _pairwise(points)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dist > 0, deltas / np.where(dist > 0, dist, 1.0), 0.0)
        B = -ratio
        B[np.arange(n), np.arange(n)] = ratio.sum(axis=1)
        candidate = (B @ points) / n
        new_stress = _raw_stress(candidate, deltas)
        if new_stress > stress:
            # majorization guarantees non-increase; float noise at convergence
            break
        points, prev, stress = candidate, stress, new_stress
        if (prev - stress) <= _REL_TOL * prev:
            break
    return points, stress


def embed(
    matrix: DistanceMatrix,
    beta: int,
    seed: int = 0,
    max_iter: int = _MAX_ITER,
    n_restarts: int = 8,
) -> Embedding:
    """Embed a distance matrix into R^beta; 1 <= beta <= n-1.

    The spectral start is always refined first (so Euclidean-realizable input
    is recovered exactly); n_restarts additional majorization runs from seeded
    random configurations guard against symmetric saddles of the stress, and
    the lowest-stress result wins (ties keep the spectral run).  Deterministic
    given seed.  max_iter=0 returns the raw spectral coordinates.
    """
    n = matrix.n
    if not 1 <= beta <= n - 1:
        raise InvalidInputError(f"beta must lie in [1, {n - 1}], got {beta}")
    if max_iter < 0 or n_restarts < 0:
        raise InvalidInputError("max_iter and n_restarts must be nonnegative")
    deltas = matrix.entries
    points = _classical_start(deltas, beta)
    if max_iter == 0:
        return Embedding(points, _raw_stress(points, deltas))
    points, stress = _smacof(points, deltas, max_iter)
    positive = deltas[deltas > 0]
    if stress > 0.0 and positive.size:
        rng = np.random.default_rng(seed)
        scale = float(positive.mean())
        for _ in range(n_restarts):
            start = rng.normal(size=(n, beta)) * scale
            cand_points, cand_stress = _smacof(start, deltas, max_iter)
            if cand_stress < stress:
                points, stress = cand_points, cand_stress
    return Embedding(points, stress)


def write_embedding(csv_path, json_path, embedding: Embedding, meta: dict | None = None) -> None:
    """CSV of coordinates (id,coord_1..coord_beta) plus a JSON stress sidecar."""
    with open(csv_path, "w", newline="") as handle:
        if meta is not None:
            handle.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        cols = ",".join(f"coord_{d + 1}" for d in range(embedding.beta))
        handle.write(f"id,{cols}\n")
        for idx, row in enumerate(embedding.points):
            handle.write(f"{idx}," + ",".join(_fmt(v) for v in row) + "\n")
    payload: dict = {
        "n": embedding.n,
        "beta": embedding.beta,
        "stress": embedding.stress,
    }
    if meta is not None:
        payload["meta"] = meta
    with open(json_path, "w") as handle:
        json.dump(payload, handle, sort_keys=True, indent=2)
        handle.write("\n")


def read_embedding(csv_path, json_path) -> Embedding:
    try:
        with open(csv_path) as handle:
            lines = [ln.strip() for ln in handle if not ln.startswith("#") and ln.strip()]
        with open(json_path) as handle:
            sidecar = json.load(handle)
    except OSError as exc:
        raise DataError(f"cannot read embedding: {exc}") from exc
    if not lines or not lines[0].startswith("id,"):
        raise DataError(f"{csv_path}: missing id,coord_* header")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        try:
            rows.append([float(v) for v in parts[1:]])
        except ValueError:
            raise DataError(f"{csv_path}: non-numeric coordinate") from None
    try:
        stress = float(sidecar["stress"])
    except (KeyError, TypeError, ValueError):
        raise DataError(f"{json_path}: missing stress value") from None
    return Embedding(np.array(rows), stress)

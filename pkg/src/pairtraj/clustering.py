"""Clustering schemes over interactions.

Four methods share one model type:

- mds: embed the distance matrix, Euclidean k-means there, snap centroids to
  embedded points (medoids); objective in the true quotient metric.
- geo1: align everything to one anchor interaction, Euclidean k-means on the
  flattened aligned curves; centroids reshape back into interactions.
- geo2: alternate centroid updates (members aligned to the cluster's first
  member, then averaged pointwise) with align-then-L2 reassignment.
- spline-coef: cubic polynomial coefficients per coordinate series (16 values)
  as features for Euclidean k-means; representatives snap to data points.

All Euclidean k-means stages use k-means++ seeding, Lloyd iteration, and a
handful of seeded restarts keeping the best objective, so every run is
deterministic given its seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InvalidInputError
from .procrustes import (
    _batched_branch_residual_sq,
    _branch_residual_sq,
    _Packed,
    _resolve_measure,
    _row_weights,
    DistanceMatrix,
    align,
)
from .trajectory import (
    Interaction,
    TimeMeasure,
    Trajectory,
    interaction_from_dict,
    interaction_to_dict,
)

METHODS = ("mds", "geo1", "geo2", "spline-coef")

_DEFAULT_MAX_ITER = 300
_DEFAULT_N_INIT = 8
_REL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ClusterModel:
    """Assignments, k representative interactions, and the method's objective."""

    method: str
    k: int
    seed: int
    assignments: np.ndarray
    representatives: tuple[Interaction, ...]
    objective: float
    objective_history: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown method {self.method!r}")
        labels = np.array(self.assignments, dtype=int)
        if labels.ndim != 1 or labels.size < 1:
            raise InvalidInputError("assignments must be a nonempty 1-d array")
        if labels.min() < 0 or labels.max() >= self.k:
            raise InvalidInputError("assignments must lie in [0, k)")
        if len(self.representatives) != self.k:
            raise InvalidInputError("need exactly k representatives")
        if not (np.isfinite(self.objective) and self.objective >= 0):
            raise InvalidInputError("objective must be finite and nonnegative")
        labels.setflags(write=False)
        object.__setattr__(self, "assignments", labels)
        object.__setattr__(self, "representatives", tuple(self.representatives))
        object.__setattr__(self, "objective", float(self.objective))
        object.__setattr__(
            self, "objective_history", tuple(float(v) for v in self.objective_history)
        )

    @property
    def n(self) -> int:
        return int(self.assignments.size)

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


# ---------------------------------------------------------------------------
# Euclidean k-means core


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[int(rng.integers(n))]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))  # everything coincides with a center
        centers[j] = X[idx]
        d2 = np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1))
    return centers


def _repair_empty(labels: np.ndarray, point_d2: np.ndarray, k: int) -> None:
    """Give each empty cluster the point farthest from its current centroid."""
    counts = np.bincount(labels, minlength=k)
    worst = point_d2.copy()
    for j in np.flatnonzero(counts == 0):
        steal = int(np.argmax(worst))
        labels[steal] = j
        worst[steal] = -np.inf


def _lloyd(
    X: np.ndarray, centers: np.ndarray, max_iter: int
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    n, k = X.shape[0], centers.shape[0]
    labels = None
    history: list[float] = []
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        _repair_empty(new_labels, d2[np.arange(n), new_labels], k)
        obj = float(d2[np.arange(n), new_labels].sum())
        history.append(obj)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = X[labels == j]
            if members.size:
                centers[j] = members.mean(axis=0)
        if len(history) >= 2 and abs(history[-2] - history[-1]) <= _REL_TOL * max(
            history[-2], 1e-300
        ):
            break
    return labels, centers, history


def _kmeans(
    X: np.ndarray, k: int, seed: int, n_init: int, max_iter: int
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    if not 1 <= k <= X.shape[0]:
        raise InvalidInputError(f"k must lie in [1, {X.shape[0]}], got {k}")
    if n_init < 1 or max_iter < 1:
        raise InvalidInputError("n_init and max_iter must be positive")
    best = None
    for child in np.random.default_rng(seed).spawn(n_init):
        centers0 = _kmeans_pp(X, k, child)
        labels, centers, history = _lloyd(X, centers0.copy(), max_iter)
        if best is None or history[-1] < best[2][-1]:
            best = (labels, centers, history)
    return best


def _snap_to_points(centers: np.ndarray, X: np.ndarray) -> list[int]:
    """Nearest data point per centroid; collisions take the next nearest."""
    chosen: list[int] = []
    taken: set[int] = set()
    for center in centers:
        order = np.argsort(((X - center) ** 2).sum(axis=1), kind="stable")
        pick = next(int(i) for i in order if int(i) not in taken)
        chosen.append(pick)
        taken.add(pick)
    return chosen


def _check_shared_grid(data: list[Interaction]) -> int:
    if not data:
        raise InvalidInputError("need at least one interaction")
    T = len(data[0])
    for idx, inter in enumerate(data):
        if len(inter) != T:
            raise InvalidInputError(
                f"interaction {idx} has grid length {len(inter)}, expected {T}"
            )
    return T


def _stack_rows(interaction: Interaction) -> np.ndarray:
    return np.concatenate(
        [interaction.first.samples, interaction.second.samples]
    )


def _rows_to_interaction(rows: np.ndarray, grid: np.ndarray) -> Interaction:
    half = rows.shape[0] // 2
    return Interaction(Trajectory(rows[:half], grid), Trajectory(rows[half:], grid))


# ---------------------------------------------------------------------------
# mds


def cluster_mds(
    data: list[Interaction],
    matrix: DistanceMatrix,
    beta: int,
    k: int,
    seed: int = 0,
    n_init: int = _DEFAULT_N_INIT,
    max_iter: int = _DEFAULT_MAX_ITER,
) -> ClusterModel:
    """Embed, k-means in R^beta, then take each cluster's medoid as its rep.

    The partition comes from Euclidean k-means on the embedded coordinates;
    the representative of each cluster is its medoid in the true quotient
    metric (the member minimizing the within-cluster sum of squared
    distances), so embedding distortion cannot push the reported objective
    off the best medoid choice.  Assignments and the objective
    sum_i min_j d^2(data[i], rep[j]) are taken through the supplied matrix,
    which must be unnormalized for the objective to be meaningful.
    """
    from .mds import embed  # local import; mds depends on procrustes only

    _check_shared_grid(data)
    n = len(data)
    if matrix.n != n:
        raise InvalidInputError(f"matrix is {matrix.n}x{matrix.n} but n={n}")
    if not 1 <= k <= n:
        raise InvalidInputError(f"k must lie in [1, {n}], got {k}")
    embedding = embed(matrix, beta, seed)
    labels, _, history = _kmeans(embedding.points, k, seed, n_init, max_iter)
    d2 = matrix.entries**2
    medoids = []
    for j in range(k):
        members = np.flatnonzero(labels == j)
        within = d2[np.ix_(members, members)].sum(axis=1)
        medoids.append(int(members[within.argmin()]))
    to_reps = matrix.entries[:, medoids]
    assignments = to_reps.argmin(axis=1)
    objective = float((to_reps.min(axis=1) ** 2).sum())
    return ClusterModel(
        method="mds",
        k=k,
        seed=seed,
        assignments=assignments,
        representatives=tuple(data[m] for m in medoids),
        objective=objective,
        objective_history=tuple(history),
    )


# ---------------------------------------------------------------------------
# geo1


def align_to_anchor(
    data: list[Interaction], mu: TimeMeasure | None = None, anchor: int = 0
) -> list[Interaction]:
    """Rigidly align every interaction onto data[anchor] (no pair-order swap)."""
    _check_shared_grid(data)
    if not 0 <= anchor < len(data):
        raise InvalidInputError(f"anchor must lie in [0, {len(data) - 1}]")
    target = data[anchor]
    out = []
    for idx, inter in enumerate(data):
        if idx == anchor:
            out.append(inter)
        else:
            out.append(align(target, inter, mu)[1])
    return out


def cluster_geo1(
    data: list[Interaction],
    mu: TimeMeasure | None = None,
    k: int = 2,
    seed: int = 0,
    anchor: int = 0,
    n_init: int = _DEFAULT_N_INIT,
    max_iter: int = _DEFAULT_MAX_ITER,
) -> ClusterModel:
    """Common alignment to one anchor, then Euclidean k-means on the curves.

    Features are the flattened aligned curves with each sample row scaled by
    sqrt(mu_t), so feature-space Euclidean distance equals the measure-weighted
    mismatch rho of the aligned pair; centroid curves are reported as
    interactions on the anchor's grid, and the objective is the within-cluster
    sum of squares in that space.
    """
    T = _check_shared_grid(data)
    mu = _resolve_measure(mu, T)
    aligned = align_to_anchor(data, mu, anchor)
    w_row = _row_weights(mu)
    root = np.sqrt(w_row)[:, None]
    X = np.stack([(_stack_rows(inter) * root).ravel() for inter in aligned])
    labels, centers, history = _kmeans(X, k, seed, n_init, max_iter)

    grid = data[anchor].grid
    reps = []
    for j in range(k):
        rows = centers[j].reshape(-1, 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            rows = np.where(root > 0, rows / np.where(root > 0, root, 1.0), 0.0)
        if np.any(w_row == 0):
            # zero-weight samples carry no signal; fall back to the plain mean
            members = [_stack_rows(aligned[i]) for i in np.flatnonzero(labels == j)]
            fallback = np.mean(members, axis=0)
            rows = np.where(root > 0, rows, fallback)
        reps.append(_rows_to_interaction(rows, grid))
    return ClusterModel(
        method="geo1",
        k=k,
        seed=seed,
        assignments=labels,
        representatives=tuple(reps),
        objective=history[-1],
        objective_history=tuple(history),
    )


# ---------------------------------------------------------------------------
# geo2


def _geo2_run(
    data: list[Interaction],
    packed: list[_Packed],
    stacks: tuple[np.ndarray, np.ndarray],
    w_row: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int,
) -> tuple[np.ndarray, list[Interaction], list[float]]:
    centered_stack, weighted_stack = stacks
    n = len(data)
    labels = rng.integers(0, k, size=n)
    history: list[float] = []
    centroids: list[Interaction] = []
    dist2 = None
    for _ in range(max_iter):
        if dist2 is not None:
            _repair_empty(labels, dist2[np.arange(n), labels], k)
        elif len(np.unique(labels)) < k:
            # first pass has no distances yet: seed missing clusters with the
            # points farthest from the joint mean of everything
            spread = (centered_stack**2).sum(axis=(1, 2))
            _repair_empty(labels, spread, k)
        centroids = []
        for j in range(k):
            members = np.flatnonzero(labels == j)
            ref = packed[int(members[0])]
            acc = np.zeros_like(ref.centered)
            for i in members:
                _, rot = _branch_residual_sq(packed[int(i)], ref, w_row, swap=False)
                acc += packed[int(i)].centered @ rot.T
            rows = acc / members.size + ref.mean
            centroids.append(_rows_to_interaction(rows, data[int(members[0])].grid))
        cpacked = [_Packed(c, w_row) for c in centroids]
        dist2 = np.stack(
            [
                _batched_branch_residual_sq(
                    centered_stack, weighted_stack, cp.centered, w_row
                )
                for cp in cpacked
            ],
            axis=1,
        )
        new_labels = dist2.argmin(axis=1)
        obj = float(dist2[np.arange(n), new_labels].sum())
        history.append(obj)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        if len(history) >= 2 and abs(history[-2] - history[-1]) <= _REL_TOL * max(
            history[-2], 1e-300
        ):
            break
    return labels, centroids, history


def cluster_geo2(
    data: list[Interaction],
    mu: TimeMeasure | None = None,
    k: int = 2,
    seed: int = 0,
    n_init: int = _DEFAULT_N_INIT,
    max_iter: int = _DEFAULT_MAX_ITER,
) -> ClusterModel:
    """Alternating pointwise-mean centroids and align-then-L2 reassignment.

    Starts from a seeded random assignment.  Cluster centroids average the
    members after aligning them to the cluster's lowest-index member; each
    interaction then moves to the centroid with the smallest aligned mismatch
    (no pair-order swap).  Emptied clusters are re-seeded with the point
    farthest from its current centroid.  Restarts keep the best objective.
    """
    T = _check_shared_grid(data)
    n = len(data)
    if not 1 <= k <= n:
        raise InvalidInputError(f"k must lie in [1, {n}], got {k}")
    if n_init < 1 or max_iter < 1:
        raise InvalidInputError("n_init and max_iter must be positive")
    mu = _resolve_measure(mu, T)
    w_row = _row_weights(mu)
    packed = [_Packed(inter, w_row) for inter in data]
    stacks = (
        np.stack([p.centered for p in packed]),
        np.stack([p.weighted for p in packed]),
    )
    best = None
    for child in np.random.default_rng(seed).spawn(n_init):
        labels, centroids, history = _geo2_run(
            data, packed, stacks, w_row, k, child, max_iter
        )
        if best is None or history[-1] < best[2][-1]:
            best = (labels, centroids, history)
    labels, centroids, history = best
    return ClusterModel(
        method="geo2",
        k=k,
        seed=seed,
        assignments=labels,
        representatives=tuple(centroids),
        objective=history[-1],
        objective_history=tuple(history),
    )


# ---------------------------------------------------------------------------
# spline-coef


def _cubic_features(interaction: Interaction) -> np.ndarray:
    grid = interaction.grid
    t = (grid - grid[0]) / (grid[-1] - grid[0])
    design = np.vander(t, 4, increasing=True)
    series = np.column_stack(
        [interaction.first.samples, interaction.second.samples]
    )  # (T, 4): x1, y1, x2, y2
    coef, *_ = np.linalg.lstsq(design, series, rcond=None)
    return coef.T.ravel()  # series-major: 4 coefficients per coordinate series


def cluster_spline_coef(
    data: list[Interaction],
    k: int = 2,
    seed: int = 0,
    n_init: int = _DEFAULT_N_INIT,
    max_iter: int = _DEFAULT_MAX_ITER,
) -> ClusterModel:
    """Euclidean k-means on per-series cubic coefficients (16 per interaction).

    Coefficients are taken over the grid normalized to [0, 1].  Representatives
    are the interactions whose features sit nearest the centroids; the
    objective is the k-means within-cluster sum of squares in feature space.
    """
    T = _check_shared_grid(data)
    if T < 4:
        raise InvalidInputError("cubic features need grids of at least 4 samples")
    X = np.stack([_cubic_features(inter) for inter in data])
    labels, centers, history = _kmeans(X, k, seed, n_init, max_iter)
    reps = [data[i] for i in _snap_to_points(centers, X)]
    return ClusterModel(
        method="spline-coef",
        k=k,
        seed=seed,
        assignments=labels,
        representatives=tuple(reps),
        objective=history[-1],
        objective_history=tuple(history),
    )


# ---------------------------------------------------------------------------
# serialization


def write_model_json(path, model: ClusterModel, meta: dict | None = None) -> None:
    payload: dict = {
        "method": model.method,
        "k": model.k,
        "seed": model.seed,
        "objective": model.objective,
        "assignments": [int(z) for z in model.assignments],
        "representatives": [interaction_to_dict(r) for r in model.representatives],
    }
    if meta is not None:
        payload["meta"] = meta
    with open(path, "w") as handle:
        json.dump(payload, handle, sort_keys=True, indent=2)
        handle.write("\n")


def read_model_json(path) -> ClusterModel:
    try:
        with open(path) as handle:
            payload = json.load(handle)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return ClusterModel(
            method=payload["method"],
            k=int(payload["k"]),
            seed=int(payload["seed"]),
            assignments=payload["assignments"],
            representatives=tuple(
                interaction_from_dict(r) for r in payload["representatives"]
            ),
            objective=float(payload["objective"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed cluster model: {exc}") from exc

"""Wasserstein distances between finitely supported measures on interactions.

A measure puts probability weights on interaction atoms; the ground cost
between atoms is the quotient Procrustes distance raised to the order r, and
the transportation linear program is solved exactly.  Typical uses compare a
cluster model (atoms = representatives, mass = cluster proportions) with the
empirical measure of a data sample.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .clustering import ClusterModel
from .errors import DataError, InvalidInputError, NumericalError
from .procrustes import cross_distance_matrix
from .trajectory import (
    Interaction,
    TimeMeasure,
    interaction_from_dict,
    interaction_to_dict,
)

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability weights on a finite set of interaction atoms."""

    atoms: tuple[Interaction, ...]
    weights: np.ndarray

    def __post_init__(self) -> None:
        atoms = tuple(self.atoms)
        if not atoms:
            raise InvalidInputError("measure needs at least one atom")
        w = np.array(self.weights, dtype=float)
        if w.shape != (len(atoms),):
            raise InvalidInputError(
                f"got {len(atoms)} atoms but {w.size} weights"
            )
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidInputError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > _WEIGHT_TOL:
            raise InvalidInputError(f"weights sum to {w.sum()!r}, expected 1")
        w.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.atoms)


def empirical_measure(data: list[Interaction]) -> DiscreteMeasure:
    """Mass 1/n on every interaction in the sample."""
    if not data:
        raise InvalidInputError("need at least one interaction")
    n = len(data)
    return DiscreteMeasure(tuple(data), np.full(n, 1.0 / n))


def model_measure(model: ClusterModel, n: int | None = None) -> DiscreteMeasure:
    """Representatives weighted by the share of points assigned to them."""
    if n is None:
        n = model.n
    elif n != model.n:
        raise InvalidInputError(
            f"model assigns {model.n} points, caller claims {n}"
        )
    return DiscreteMeasure(model.representatives, model.cluster_sizes() / n)


def ground_cost(
    F: DiscreteMeasure, G: DiscreteMeasure, r: float, mu: TimeMeasure | None = None
) -> np.ndarray:
    return cross_distance_matrix(list(F.atoms), list(G.atoms), mu) ** r


def wasserstein(
    F: DiscreteMeasure,
    G: DiscreteMeasure,
    r: float = 2.0,
    mu: TimeMeasure | None = None,
) -> float:
    """Order-r Wasserstein distance under the quotient Procrustes ground metric.

    Solves the transportation LP exactly; the optimal coupling exists because
    both marginals are finite probability vectors.
    """
    if not r >= 1.0:
        raise InvalidInputError(f"order r must be >= 1, got {r}")
    cost = ground_cost(F, G, r, mu)
    m, n = cost.shape
    A = np.zeros((m + n, m * n))
    for i in range(m):
        A[i, i * n : (i + 1) * n] = 1.0
    for j in range(n):
        A[m + j, j::n] = 1.0
    b = np.concatenate([F.weights, G.weights])
    # the last column constraint is implied by the others; dropping it keeps
    # the system consistent when the two weight sums differ by rounding
    res = linprog(cost.ravel(), A_eq=A[:-1], b_eq=b[:-1], method="highs")
    if not res.success:
        raise NumericalError(f"transport LP failed: {res.message}")
    return float(max(res.fun, 0.0) ** (1.0 / r))


def write_measure_json(path, measure: DiscreteMeasure, meta: dict | None = None) -> None:
    payload: dict = {
        "weights": [float(w) for w in measure.weights],
        "atoms": [interaction_to_dict(a) for a in measure.atoms],
    }
    if meta is not None:
        payload["meta"] = meta
    with open(path, "w") as handle:
        json.dump(payload, handle, sort_keys=True, indent=2)
        handle.write("\n")


def read_measure_json(path) -> DiscreteMeasure:
    try:
        with open(path) as handle:
            payload = json.load(handle)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    try:
        atoms = tuple(interaction_from_dict(a) for a in payload["atoms"])
        return DiscreteMeasure(atoms, np.array(payload["weights"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed measure: {exc}") from exc

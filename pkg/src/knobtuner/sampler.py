"""Clustering-based selection of which configurations to measure.

A search round emits far more configurations than the hardware budget allows.
This module clusters the round's deduplicated trajectory in index space,
grows k until the k-means loss curve hits its knee, and measures the rounded
centroids. Centroids that were already measured are replaced by the
trajectory's per-knob mode configuration; anything still visited or duplicate
after that is dropped, so a batch never wastes a measurement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agent import Trajectory
from .space import Configuration, DesignSpace

KNEE_CONSTANT = 1.1
KNEE_K_MIN = 8
KNEE_K_MAX = 63  # Algorithm scans k in [8, 64)
KMEANS_MAX_ITERS = 100


class VisitedSet:
    """Configurations measured so far, by exact index-vector equality."""

    def __init__(self, configs: list[Configuration] | None = None):
        self._seen: set[tuple[int, ...]] = set()
        for c in configs or []:
            self.add(c)

    def add(self, config: Configuration) -> None:
        self._seen.add(config.indices)

    def add_all(self, configs: list[Configuration]) -> None:
        for c in configs:
            self.add(c)

    def __contains__(self, config: Configuration) -> bool:
        return config.indices in self._seen

    def __len__(self) -> int:
        return len(self._seen)


@dataclass(frozen=True)
class ClusteringResult:
    centroids: np.ndarray  # (k, d)
    assignment: np.ndarray  # (m,) cluster index per point
    loss: float  # sum of squared distances to assigned centroids
    loss_history: tuple[float, ...]  # one entry per Lloyd assignment pass


def _plus_plus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    m = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(0, m))
    centroids[0] = points[first]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        u = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(d2), u, side="right"))
        idx = min(idx, m - 1)
        centroids[j] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def kmeans(points: np.ndarray | list, k: int, seed: int) -> ClusteringResult:
    """Lloyd's algorithm with seeded k-means++ starts.

    Iterates until the assignment is stable or 100 passes; a cluster left
    empty by an update is re-seeded at the point farthest from its assigned
    centroid. Requires 1 <= k <= number of distinct points.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.size == 0:
        raise ValueError("kmeans needs at least one point")
    m = pts.shape[0]
    n_distinct = len({tuple(row) for row in pts})
    if not 1 <= k <= n_distinct:
        raise ValueError(f"k={k} out of range [1, {n_distinct}] for {m} points ({n_distinct} distinct)")

    rng = np.random.default_rng(np.random.SeedSequence(seed & (2**64 - 1)))
    centroids = _plus_plus_init(pts, k, rng)

    assignment = np.full(m, -1, dtype=np.int64)
    history: list[float] = []
    for iteration in range(KMEANS_MAX_ITERS):
        d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assignment = d2.argmin(axis=1)  # ties go to the lowest index
        point_d2 = d2[np.arange(m), new_assignment]
        history.append(float(point_d2.sum()))
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        if iteration == KMEANS_MAX_ITERS - 1:
            break  # keep loss consistent with the returned centroids
        counts = np.bincount(assignment, minlength=k)
        for j in range(k):
            if counts[j] > 0:
                centroids[j] = pts[assignment == j].mean(axis=0)
        if (counts == 0).any():
            # re-seed each empty cluster at the current farthest point
            blocked: set[int] = set()
            for j in np.nonzero(counts == 0)[0]:
                order = np.argsort(-point_d2, kind="stable")
                pick = next(int(i) for i in order if int(i) not in blocked)
                blocked.add(pick)
                centroids[int(j)] = pts[pick]

    return ClusteringResult(
        centroids=centroids,
        assignment=assignment,
        loss=history[-1],
        loss_history=tuple(history),
    )


def knee_scan(
    points: np.ndarray,
    seed: int,
    knee_constant: float = KNEE_CONSTANT,
    k_max: int = KNEE_K_MAX,
) -> tuple[ClusteringResult, list[tuple[int, float]]]:
    """Grow k from 8 until constant * Loss(k) exceeds the previous loss.

    Returns the clustering of the breaking k (or the last scanned k when the
    loss keeps dropping) plus the scanned (k, loss) curve.
    """
    n_distinct = len({tuple(row) for row in np.asarray(points)})
    upper = min(k_max, n_distinct)
    previous = np.inf
    scanned: list[tuple[int, float]] = []
    result = None
    for k in range(KNEE_K_MIN, upper + 1):
        result = kmeans(points, k, seed)
        scanned.append((k, result.loss))
        if knee_constant * result.loss > previous:
            break
        previous = result.loss
    assert result is not None  # upper >= KNEE_K_MIN is guaranteed by the caller
    return result, scanned


def mode_config(trajectory: Trajectory, space: DesignSpace) -> Configuration:
    """Per-knob most frequent index over the trajectory; ties take the smallest."""
    arr = np.array([c.indices for c in trajectory.configs()], dtype=np.int64)
    indices = tuple(
        int(np.bincount(arr[:, dim], minlength=card).argmax())
        for dim, card in enumerate(space.cardinalities)
    )
    return Configuration(indices=indices)


def round_to_config(centroid: np.ndarray, space: DesignSpace) -> Configuration:
    """Nearest lattice point; .5 rounds up, out-of-range clamps."""
    centroid = np.asarray(centroid, dtype=np.float64)
    if centroid.shape != (space.n_knobs,):
        raise ValueError(f"centroid shape {centroid.shape} does not match {space.n_knobs} knobs")
    indices = []
    for x, card in zip(centroid, space.cardinalities):
        idx = int(np.floor(x + 0.5))
        indices.append(min(max(idx, 0), card - 1))
    return Configuration(indices=tuple(indices))


def adaptive_sample(
    trajectory: Trajectory,
    visited: VisitedSet,
    space: DesignSpace,
    seed: int,
    knee_constant: float = KNEE_CONSTANT,
) -> list[Configuration]:
    """Pick the measurement batch for a round from its search trajectory.

    Small trajectories (at most 8 distinct configurations) skip clustering and
    return their distinct unvisited configurations directly. The returned
    batch has no duplicates and nothing already visited; it is empty only in
    the degenerate corner where every candidate was measured before.
    """
    distinct: list[Configuration] = []
    seen: set[tuple[int, ...]] = set()
    for config in trajectory.configs():
        if config.indices not in seen:
            seen.add(config.indices)
            distinct.append(config)

    if len(distinct) <= KNEE_K_MIN:
        return [c for c in distinct if c not in visited]

    points = np.array([c.indices for c in distinct], dtype=np.float64)
    result, _ = knee_scan(points, seed, knee_constant)

    batch: list[Configuration] = []
    batch_seen: set[tuple[int, ...]] = set()
    mode: Configuration | None = None
    for centroid in result.centroids:
        candidate = round_to_config(centroid, space)
        if candidate in visited:
            if mode is None:
                mode = mode_config(trajectory, space)
            candidate = mode
            if candidate in visited:
                continue
        if candidate.indices in batch_seen:
            continue
        batch_seen.add(candidate.indices)
        batch.append(candidate)
    return batch

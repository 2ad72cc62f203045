"""Inference-side instance extraction.

Mean-shift with a flat kernel turns per-point instance embeddings into
block-local clusters; BlockMerging stitches those into scene-level
instances through a voxel ownership registry, so an object crossing a
block boundary keeps one id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.exceptions import NotFittedError

from .errors import ContractError, DataError
from .validation import check_labels, check_matrix, check_positive

MAX_ITER = 300
SHIFT_TOL_FACTOR = 1e-3


@dataclass(frozen=True)
class ClusterResult:
    labels: np.ndarray
    modes: np.ndarray
    bandwidth: float


def mean_shift(embeddings, bandwidth: float) -> ClusterResult:
    """Flat-kernel mean-shift seeded at every point.

    Each seed moves to the mean of the points within ``bandwidth`` until
    the shift drops below 1e-3 * bandwidth (or 300 iterations). Converged
    modes closer than bandwidth/2 collapse onto the earliest seed's mode;
    points join their nearest retained mode, lowest index on ties.
    """
    x = check_matrix(embeddings, "embeddings")
    n = x.shape[0]
    if n == 0:
        raise ContractError("mean_shift needs at least one point")
    bandwidth = check_positive(bandwidth, "bandwidth")
    tol = SHIFT_TOL_FACTOR * bandwidth
    sq_bw = bandwidth * bandwidth

    seeds = x.copy()
    active = np.arange(n)
    for _ in range(MAX_ITER):
        if active.size == 0:
            break
        d2 = _sq_dists(seeds[active], x)
        within = d2 <= sq_bw
        counts = within.sum(axis=1)
        # a window can only be empty if a seed drifted past every point;
        # freeze such seeds where they are
        counts_safe = np.maximum(counts, 1)
        moved = (within @ x) / counts_safe[:, None]
        moved[counts == 0] = seeds[active[counts == 0]]
        shift = np.sqrt(np.sum((moved - seeds[active]) ** 2, axis=1))
        seeds[active] = moved
        active = active[shift >= tol]

    modes = []
    mode_of_seed = np.empty(n, dtype=np.int64)
    half = 0.5 * bandwidth
    for i in range(n):
        placed = False
        for k, m in enumerate(modes):
            if np.sqrt(np.sum((seeds[i] - m) ** 2)) < half:
                mode_of_seed[i] = k
                placed = True
                break
        if not placed:
            mode_of_seed[i] = len(modes)
            modes.append(seeds[i])
    modes = np.vstack(modes)

    d2 = _sq_dists(x, modes)
    labels = np.argmin(d2, axis=1)  # argmin takes the lowest index on ties
    return ClusterResult(labels.astype(np.int64), modes, bandwidth)


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sq_a = np.sum(a * a, axis=1)[:, None]
    sq_b = np.sum(b * b, axis=1)[None, :]
    return np.maximum(sq_a + sq_b - 2.0 * (a @ b.T), 0.0)


class FlatMeanShift(BaseEstimator, ClusterMixin):
    """Estimator wrapper around :func:`mean_shift`.

    Attributes after fit: ``labels_``, ``cluster_centers_``.
    """

    def __init__(self, bandwidth=0.8):
        self.bandwidth = bandwidth

    def fit(self, X, y=None):
        result = mean_shift(X, self.bandwidth)
        self.labels_ = result.labels
        self.cluster_centers_ = result.modes
        return self

    def predict(self, X):
        if not hasattr(self, "cluster_centers_"):
            raise NotFittedError("FlatMeanShift must be fitted before predict")
        X = check_matrix(X, "X", cols=self.cluster_centers_.shape[1])
        return np.argmin(_sq_dists(X, self.cluster_centers_), axis=1)


# ---------------------------------------------------------------------------
# cross-block merging

@dataclass
class VoxelRegistry:
    """Voxel ownership map carried across the blocks of one scene.

    The grid is offset by half a cell so that a voxel straddles each
    block boundary; without the offset, adjacent blocks would never
    share a voxel and nothing would ever merge.
    """

    cell: float = 0.5
    owner: dict = field(default_factory=dict)
    owner_class: dict = field(default_factory=dict)
    next_id: int = 0

    def voxel_keys(self, coords: np.ndarray) -> np.ndarray:
        return np.floor(coords / self.cell + 0.5).astype(np.int64)

    def allocate(self, sem_class: int) -> int:
        gid = self.next_id
        self.next_id += 1
        self.owner_class[gid] = int(sem_class)
        return gid


def block_merging(coords, local_ids, sem_ids, registry: VoxelRegistry, *,
                  overlap_thresh: float = 0.3) -> np.ndarray:
    """Convert one block's local instance ids to scene-global ids.

    For each local instance (ascending id): if at least
    ``overlap_thresh`` of its points sit in voxels already owned by
    global instances of the same semantic class, it adopts the most
    common such owner (lowest id on ties); otherwise it gets a fresh id.
    Either way the instance then claims its so-far-unowned voxels.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise DataError(f"coordinates must be Nx3, got {coords.shape}")
    if coords.size and not np.all(np.isfinite(coords)):
        raise DataError("coordinates contain non-finite values")
    n = coords.shape[0]
    local_ids = check_labels(local_ids, "local_ids", n=n, low=0)
    sem_ids = check_labels(sem_ids, "sem_ids", n=n, low=0)
    if not (0.0 < overlap_thresh <= 1.0):
        raise ContractError(
            f"overlap_thresh must be in (0, 1], got {overlap_thresh}")

    out = np.empty(n, dtype=np.int64)
    if n == 0:
        return out
    voxels = registry.voxel_keys(coords)
    for local in np.unique(local_ids):
        points = np.flatnonzero(local_ids == local)
        sem_class = _majority(sem_ids[points])
        keys = [tuple(v) for v in voxels[points]]

        votes = {}
        for key in keys:
            gid = registry.owner.get(key)
            if gid is not None and registry.owner_class[gid] == sem_class:
                votes[gid] = votes.get(gid, 0) + 1
        matched = sum(votes.values())
        if matched >= overlap_thresh * points.size:
            gid = max(votes.items(), key=lambda kv: (kv[1], -kv[0]))[0]
        else:
            gid = registry.allocate(sem_class)
        out[points] = gid
        for key in keys:
            registry.owner.setdefault(key, gid)
    return out


def _majority(values: np.ndarray) -> int:
    counts = np.bincount(values)
    return int(np.argmax(counts))  # lowest value wins ties

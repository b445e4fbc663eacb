"""Correlation distances and agglomerative clustering with minimax linkage.

The linkage between clusters G and H is the minimax radius of their
union: the smallest over members x of the largest distance from x to
any other member.  The minimising member is the cluster's prototype.
Minimax linkage produces dendrograms without inversions, and every
cluster comes with a concrete representative instead of a centroid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyCluster, InsufficientOverlap, ZeroVariance
from .panel import ReturnsPanel

MIN_OVERLAP = 3


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric matrix of 1 - |corr| distances with zero diagonal."""

    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("distance matrix must be square")
        if not np.allclose(d, d.T, atol=1e-12):
            raise ValueError("distance matrix must be symmetric")
        if np.any(np.diag(d) != 0):
            raise ValueError("diagonal must be zero")
        if np.any(d < -1e-12) or np.any(d > 1 + 1e-12):
            raise ValueError("entries must lie in [0, 1]")
        d = np.clip((d + d.T) / 2.0, 0.0, 1.0)
        np.fill_diagonal(d, 0.0)
        d.setflags(write=False)
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.d.shape[0]


@dataclass(frozen=True)
class Dendrogram:
    """Merge history of an agglomerative clustering.

    Leaves are numbered 0..n-1; the cluster created by merge i gets id
    n + i.  Each merge records (cluster_a, cluster_b, height,
    prototype_index) where the prototype is a leaf belonging to the
    merged cluster.
    """

    leaves: int
    merges: tuple[tuple[int, int, float, int], ...]

    def members(self, cluster_id: int) -> tuple[int, ...]:
        """Leaf indices belonging to a cluster id."""
        if cluster_id < self.leaves:
            return (cluster_id,)
        a, b, _, _ = self.merges[cluster_id - self.leaves]
        return self.members(a) + self.members(b)


def correlation_distance(panel: ReturnsPanel) -> DistanceMatrix:
    """Pairwise 1 - |Pearson correlation| on pairwise-complete rows.

    Each asset pair must share at least three observed periods, and
    neither series may be constant on the shared window.
    """
    n = panel.n_assets
    d = np.zeros((n, n))
    values, mask = panel.values, panel.mask
    if mask.all():
        sd = values.std(axis=0)
        zero = np.flatnonzero(sd <= 0)
        if zero.size:
            raise ZeroVariance(f"constant series: {panel.assets[zero[0]]!r}")
        if values.shape[0] < MIN_OVERLAP:
            raise InsufficientOverlap("fewer than three common periods")
        c = np.corrcoef(values, rowvar=False)
        d = 1.0 - np.abs(c)
    else:
        for i in range(n):
            for j in range(i + 1, n):
                common = mask[:, i] & mask[:, j]
                if common.sum() < MIN_OVERLAP:
                    raise InsufficientOverlap(
                        f"assets {panel.assets[i]!r} and {panel.assets[j]!r} "
                        f"share only {int(common.sum())} periods")
                xi = values[common, i]
                xj = values[common, j]
                if xi.std() <= 0 or xj.std() <= 0:
                    raise ZeroVariance(
                        f"constant series on the shared window of "
                        f"{panel.assets[i]!r}/{panel.assets[j]!r}")
                c = np.corrcoef(xi, xj)[0, 1]
                d[i, j] = d[j, i] = 1.0 - abs(c)
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(np.clip(d, 0.0, 1.0))


def minimax_radius(cluster, d: DistanceMatrix | np.ndarray):
    """Minimax radius and prototype of an index set.

    The prototype is the member whose farthest other member is nearest;
    ties resolve to the lowest index.
    """
    idx = np.asarray(sorted(cluster), dtype=int)
    if idx.size == 0:
        raise EmptyCluster("cluster is empty")
    dm = d.d if isinstance(d, DistanceMatrix) else np.asarray(d)
    if idx.size == 1:
        return 0.0, int(idx[0])
    sub = dm[np.ix_(idx, idx)]
    far = sub.max(axis=1)
    k = int(np.argmin(far))  # argmin takes the first minimum: lowest index
    return float(far[k]), int(idx[k])


def minimax_cluster(d: DistanceMatrix) -> Dendrogram:
    """Agglomerative clustering under minimax linkage.

    At every step the pair of active clusters with the smallest
    minimax radius of their union is merged; ties resolve to the pair
    with the lowest smallest-member leaf index (then the lowest index
    of the other cluster).
    """
    n = d.n
    if n == 0:
        raise EmptyCluster("no leaves to cluster")
    dm = d.d
    active: dict[int, list[int]] = {i: [i] for i in range(n)}
    smallest = {i: i for i in range(n)}
    linkage: dict[tuple[int, int], tuple[float, int]] = {}

    def union_radius(ia, ib):
        idx = np.asarray(sorted(active[ia] + active[ib]), dtype=int)
        sub = dm[np.ix_(idx, idx)]
        far = sub.max(axis=1)
        k = int(np.argmin(far))
        return float(far[k]), int(idx[k])

    ids = sorted(active)
    for ai, a in enumerate(ids):
        for b in ids[ai + 1:]:
            linkage[(a, b)] = union_radius(a, b)

    merges = []
    next_id = n
    while len(active) > 1:
        best_key = None
        best_rank = None
        for (a, b), (h, _) in linkage.items():
            rank = (h, min(smallest[a], smallest[b]), max(smallest[a], smallest[b]))
            if best_rank is None or rank < best_rank:
                best_rank = rank
                best_key = (a, b)
        a, b = best_key
        height, proto = linkage[(a, b)]
        merges.append((a, b, height, proto))

        members = active.pop(a) + active.pop(b)
        small = min(smallest[a], smallest[b])
        for key in [k for k in linkage if a in k or b in k]:
            del linkage[key]
        active[next_id] = members
        smallest[next_id] = small
        for other in active:
            if other == next_id:
                continue
            key = (other, next_id) if other < next_id else (next_id, other)
            linkage[key] = union_radius(other, next_id)
        next_id += 1

    return Dendrogram(n, tuple(merges))


def cut_by_threshold(dend: Dendrogram, max_height: float):
    """Clusters formed by merges with height <= ``max_height``.

    Returns a list of (member_leaf_tuple, prototype_leaf) pairs whose
    member sets partition the leaves.  Singletons are their own
    prototypes.
    """
    if not 0 <= max_height <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    n = dend.leaves
    clusters: dict[int, list[int]] = {i: [i] for i in range(n)}
    protos: dict[int, int] = {i: i for i in range(n)}
    next_id = n
    for a, b, height, proto in dend.merges:
        if height <= max_height and a in clusters and b in clusters:
            clusters[next_id] = clusters.pop(a) + clusters.pop(b)
            protos.pop(a)
            protos.pop(b)
            protos[next_id] = proto
        next_id += 1
    out = []
    for cid in sorted(clusters, key=lambda c: min(clusters[c])):
        out.append((tuple(sorted(clusters[cid])), protos[cid]))
    return out

"""k-reciprocal Jaccard distances, DBSCAN, and per-cluster statistics.

The pipeline per epoch is knn_lists -> jaccard_distance -> dbscan ->
build_clusters. Every tie is broken toward the lower sample id and all
scans run in ascending id order, so the whole chain is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import kernels
from .dataset import OUTLIER


class ClusteringError(ValueError):
    """Invalid clustering input (bad k, malformed distance matrix, ...)."""


def knn_lists(features, k: int) -> np.ndarray:
    """Indices of the k nearest other samples per row, ascending distance.

    Ties break toward the lower id (stable sort over ascending ids).
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if not 1 <= k < n:
        raise ClusteringError(f"k must satisfy 1 <= k < n, got k={k}, n={n}")
    if not np.isfinite(features).all():
        raise ClusteringError("features must be finite")
    dist = cdist(features, features, "sqeuclidean")
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")
    return order[:, :k].astype(np.int64)


def reciprocal_membership(neighbors, k: int) -> np.ndarray:
    """Boolean matrix of k-reciprocal sets R(i,k), self always included."""
    neighbors = np.asarray(neighbors)
    n = neighbors.shape[0]
    if neighbors.shape[1] < k:
        raise ClusteringError("neighbor lists shorter than k")
    member = np.zeros((n, n), dtype=bool)
    rows = np.repeat(np.arange(n), k)
    member[rows, neighbors[:, :k].ravel()] = True
    recip = member & member.T
    np.fill_diagonal(recip, True)
    return recip


def jaccard_distance(neighbors, k: int) -> np.ndarray:
    """Symmetric zero-diagonal Jaccard distance matrix over k-reciprocal sets."""
    recip = reciprocal_membership(neighbors, k)
    return kernels.jaccard_from_reciprocal(recip)


def dbscan(distances, eps: float, min_pts: int) -> np.ndarray:
    """DBSCAN assignments over a precomputed distance matrix.

    Returns one label per sample; noise is OUTLIER (-1). Core points count
    themselves; clusters are maximal density-connected sets discovered in
    ascending-id scan order.
    """
    distances = np.asarray(distances, dtype=np.float64)
    n = distances.shape[0]
    if distances.shape != (n, n):
        raise ClusteringError("distance matrix must be square")
    if not np.array_equal(distances, distances.T):
        raise ClusteringError("distance matrix must be symmetric")
    if (np.diagonal(distances) != 0.0).any():
        raise ClusteringError("distance matrix diagonal must be zero")
    if eps <= 0:
        raise ClusteringError("eps must be positive")
    if min_pts < 1:
        raise ClusteringError("min_pts must be >= 1")
    adj = distances <= eps
    core = adj.sum(axis=1) >= min_pts
    return kernels.dbscan_from_adjacency(adj, core).astype(np.int64)


@dataclass
class Cluster:
    """One cluster with its statistics, representative, and chaotic sample."""

    cluster_id: int
    members: list            # sample ids, ascending
    f_mean: np.ndarray
    var_diag: np.ndarray
    g_mean: np.ndarray | None
    representative: int
    chaotic: int
    chaotic_degree: float

    @property
    def size(self):
        return len(self.members)


def make_cluster(cluster_id, members, features, g_descriptors, gamma) -> Cluster:
    """Compute stats, representative, and chaotic sample for a member set."""
    if gamma < 0:
        raise ClusteringError("gamma must be >= 0")
    members = sorted(int(m) for m in members)
    if not members:
        raise ClusteringError("cluster must have at least one member")
    feats = features[members]
    f_mean = feats.mean(axis=0)
    var_diag = np.mean((feats - f_mean) ** 2, axis=0)
    dist_to_mean = np.linalg.norm(feats - f_mean, axis=1)
    representative = members[int(np.argmin(dist_to_mean))]

    degrees = dist_to_mean
    g_mean = None
    if g_descriptors is not None:
        g = g_descriptors[members]
        g_mean = g.mean(axis=0)
        degrees = degrees + gamma * np.linalg.norm(g - g_mean, axis=1)
    chaotic_idx = int(np.argmax(degrees))
    return Cluster(
        cluster_id=int(cluster_id),
        members=members,
        f_mean=f_mean,
        var_diag=var_diag,
        g_mean=g_mean,
        representative=representative,
        chaotic=members[chaotic_idx],
        chaotic_degree=float(degrees[chaotic_idx]),
    )


class ClusterSet:
    """Mutable partition of the non-noise samples into clusters.

    `assignment[i]` is the cluster id of sample i or OUTLIER. Split/merge
    re-assignment happens through the annotation module; fresh cluster ids
    are handed out by next_id so ids never recycle within an epoch.
    """

    def __init__(self, assignment, clusters):
        self.assignment = np.asarray(assignment, dtype=np.int64).copy()
        self.clusters = dict(sorted(clusters.items()))
        self.next_id = max(self.clusters, default=-1) + 1

    @property
    def noise_ids(self):
        return np.nonzero(self.assignment == OUTLIER)[0]

    def cluster_of(self, sample_id) -> int:
        return int(self.assignment[sample_id])

    def ids(self):
        return sorted(self.clusters)

    def sample_multiset(self):
        """All member ids across clusters plus noise; conservation checks."""
        out = []
        for cid in sorted(self.clusters):
            out.extend(self.clusters[cid].members)
        out.extend(int(i) for i in self.noise_ids)
        return sorted(out)


def build_clusters(assignment, features, g_descriptors=None, gamma=0.1) -> ClusterSet:
    """ClusterSet with full statistics from a DBSCAN assignment vector."""
    assignment = np.asarray(assignment, dtype=np.int64)
    clusters = {}
    for cid in np.unique(assignment):
        if cid == OUTLIER:
            continue
        members = np.nonzero(assignment == cid)[0]
        clusters[int(cid)] = make_cluster(cid, members, features, g_descriptors, gamma)
    return ClusterSet(assignment, clusters)


def cluster_pipeline(features, g_descriptors, k, eps, min_pts, gamma) -> ClusterSet:
    """knn -> k-reciprocal Jaccard -> DBSCAN -> stats, in one call."""
    neighbors = knn_lists(features, k)
    dist = jaccard_distance(neighbors, k)
    assignment = dbscan(dist, eps, min_pts)
    return build_clusters(assignment, features, g_descriptors, gamma)

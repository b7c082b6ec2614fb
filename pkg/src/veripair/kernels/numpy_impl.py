"""Pure-numpy kernels: Jaccard distance from reciprocal sets, DBSCAN labels.

These are the per-epoch hot loops. The compiled extension in _ext.pyx
implements the same contracts; both backends produce bitwise-identical
output (integer set arithmetic, one float division per matrix entry).
"""

from __future__ import annotations

import numpy as np


def jaccard_from_reciprocal(recip: np.ndarray) -> np.ndarray:
    """Pairwise Jaccard distance between the rows of a boolean membership matrix.

    d(i, j) = 1 - |R_i & R_j| / |R_i | R_j|. Rows must include the diagonal
    (every set contains its own sample), so unions are never empty.
    """
    rf = recip.astype(np.float64)
    # counts are small integers, exact in float64 via BLAS
    inter = rf @ rf.T
    sizes = rf.sum(axis=1)
    union = sizes[:, None] + sizes[None, :] - inter
    return 1.0 - inter / union


def dbscan_from_adjacency(adj: np.ndarray, core: np.ndarray) -> np.ndarray:
    """Density-connected component labels from an eps-adjacency matrix.

    Clusters are discovered by scanning core points in ascending id; each
    cluster is fully expanded (breadth-first over core points) before the
    next scan resumes, so border points reachable from several clusters
    join the earliest-discovered one. Non-reachable points stay -1.
    """
    n = adj.shape[0]
    labels = np.full(n, -1, dtype=np.int32)
    cid = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cid
        frontier = np.zeros(n, dtype=bool)
        frontier[i] = True
        while frontier.any():
            reached = adj[frontier].any(axis=0) & (labels == -1)
            labels[reached] = cid
            frontier = reached & core
        cid += 1
    return labels

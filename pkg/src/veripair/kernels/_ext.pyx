# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: Jaccard from reciprocal sets, DBSCAN label propagation.

Bitwise-compatible with veripair.kernels.numpy_impl: set sizes are exact
integers and the only float operation is the final division per entry.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def jaccard_from_reciprocal(recip):
    """Pairwise Jaccard distance between rows of a boolean membership matrix.

    Intersections are counted through an inverted index (member -> rows
    containing it), so the work scales with the number of co-memberships
    rather than with n^2 row pairs.
    """
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] r = np.ascontiguousarray(recip, dtype=np.uint8)
    cdef Py_ssize_t n = r.shape[0]
    # CSR of the per-row member lists and CSC-style inverted index
    rows, cols = np.nonzero(r)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] indices = np.ascontiguousarray(cols, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] indptr = np.zeros(n + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] sizes = r.sum(axis=1, dtype=np.int64)
    np.cumsum(sizes, out=indptr[1:])
    inv_rows, inv_cols = np.nonzero(r.T)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] inv_indices = np.ascontiguousarray(inv_cols, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] inv_indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(r.sum(axis=0, dtype=np.int64), out=inv_indptr[1:])

    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.ones((n, n), dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] inter = np.zeros(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] touched = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t i, j, mi, m, vi, n_touched, t
    cdef double d
    for i in range(n):
        n_touched = 0
        for mi in range(indptr[i], indptr[i + 1]):
            m = indices[mi]
            for vi in range(inv_indptr[m], inv_indptr[m + 1]):
                j = inv_indices[vi]
                if j > i:
                    if inter[j] == 0:
                        touched[n_touched] = j
                        n_touched += 1
                    inter[j] += 1
        for t in range(n_touched):
            j = touched[t]
            d = 1.0 - (<double>inter[j]) / (<double>(sizes[i] + sizes[j] - inter[j]))
            out[i, j] = d
            out[j, i] = d
            inter[j] = 0
        out[i, i] = 0.0
    return out


def dbscan_from_adjacency(adj, core):
    """Density-connected component labels; same discovery order as numpy_impl."""
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] a = np.ascontiguousarray(adj, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] c = np.ascontiguousarray(core, dtype=np.uint8)
    cdef Py_ssize_t n = a.shape[0]
    cdef cnp.ndarray[cnp.int32_t, ndim=1] labels = np.full(n, -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] queue = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t i, u, v, head, tail
    cdef cnp.int32_t cid = 0
    for i in range(n):
        if labels[i] != -1 or c[i] == 0:
            continue
        labels[i] = cid
        queue[0] = i
        head = 0
        tail = 1
        while head < tail:
            u = queue[head]
            head += 1
            for v in range(n):
                if a[u, v] != 0 and labels[v] == -1:
                    labels[v] = cid
                    if c[v] != 0:
                        queue[tail] = v
                        tail += 1
        cid += 1
    return labels

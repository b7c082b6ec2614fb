"""Kernel backend selection: compiled extension when built, numpy otherwise.

Set VERIPAIR_KERNELS=numpy (or =cython) to force a backend; the benchmark
and the agreement tests use this to compare both paths.
"""

from __future__ import annotations

import os

from . import numpy_impl

try:
    from . import _ext
except ImportError:
    _ext = None

_FORCED = os.environ.get("VERIPAIR_KERNELS", "").strip().lower()
if _FORCED == "numpy":
    _impl = numpy_impl
elif _FORCED == "cython":
    if _ext is None:
        raise ImportError("VERIPAIR_KERNELS=cython but the extension is not built")
    _impl = _ext
else:
    _impl = _ext if _ext is not None else numpy_impl

BACKEND = "cython" if _impl is not numpy_impl else "numpy"


def available_backends():
    return ("numpy", "cython") if _ext is not None else ("numpy",)


def get_impl(backend=None):
    """Return the kernel module for `backend` (default: the selected one)."""
    if backend in (None, BACKEND):
        return _impl
    if backend == "numpy":
        return numpy_impl
    if backend == "cython" and _ext is not None:
        return _ext
    raise ValueError(f"kernel backend {backend!r} not available")


def jaccard_from_reciprocal(recip, backend=None):
    return get_impl(backend).jaccard_from_reciprocal(recip)


def dbscan_from_adjacency(adj, core, backend=None):
    return get_impl(backend).dbscan_from_adjacency(adj, core)

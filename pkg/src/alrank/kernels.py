"""Kernel backend selection.

Prefers the compiled extension; falls back to the numpy implementation when
the extension is missing or ALRANK_NO_EXT is set.  Everything downstream
imports kernels from here, so one process always runs one backend.
"""
import os

from . import _kernels_py

if os.environ.get("ALRANK_NO_EXT"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND
query_cost = _impl.query_cost
query_lambdas = _impl.query_lambdas
hist_build = _impl.hist_build
hist_best_split = _impl.hist_best_split
partition = _impl.partition
tree_apply = _impl.tree_apply

"""Kernel backend selection.

The compiled extension implements the two hot kernels (Bellman composition
of piecewise-linear functions and the first-exit scan of the embedding
simulator).  When it is missing, or when GAMEHEDGE_PURE is set, the pure
numpy twins take over.  Both expose the same functions with identical
semantics; tests assert their outputs agree.
"""

from __future__ import annotations

import os

from . import _pwl_py, _sim_py

if os.environ.get("GAMEHEDGE_PURE"):
    _ext = None
else:
    try:
        from . import _kernels as _ext  # type: ignore[attr-defined]
    except ImportError:
        _ext = None

if _ext is not None:
    BACKEND = "compiled"
    compose_arrays = _ext.compose_arrays
    exit_scan = _ext.exit_scan
else:
    BACKEND = "pure"
    compose_arrays = _pwl_py.compose_arrays
    exit_scan = _sim_py.exit_scan

PURE_COMPOSE = _pwl_py.compose_arrays
PURE_EXIT_SCAN = _sim_py.exit_scan

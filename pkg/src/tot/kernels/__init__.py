"""Kernel backend selection.

The hot numeric loops (blur, resize, pooling, centroid assignment) have two
interchangeable implementations: numba-jitted (default) and pure numpy.
Set ``TOT_KERNELS=numpy`` to force the fallback, ``TOT_KERNELS=numba`` to
require the jitted path (import error if numba is missing).

Both paths produce bit-identical results for pooling, blur, and resize;
centroid assignment may differ in the last ulp between paths (each path is
deterministic on its own).
"""

from __future__ import annotations

import os

_requested = os.environ.get("TOT_KERNELS", "").strip().lower()

if _requested not in ("", "numba", "numpy"):
    raise RuntimeError(
        f"TOT_KERNELS={_requested!r} not recognized (use 'numba' or 'numpy')"
    )

if _requested == "numpy":
    from . import numpy_impl as _impl

    _BACKEND = "numpy"
elif _requested == "numba":
    from . import numba_impl as _impl

    _BACKEND = "numba"
else:
    try:
        from . import numba_impl as _impl

        _BACKEND = "numba"
    except ImportError:
        from . import numpy_impl as _impl

        _BACKEND = "numpy"


def backend_name() -> str:
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return _BACKEND


convolve_separable = _impl.convolve_separable
resize_bilinear = _impl.resize_bilinear
pool_cells = _impl.pool_cells
assign_nearest = _impl.assign_nearest
centroid_sums = _impl.centroid_sums

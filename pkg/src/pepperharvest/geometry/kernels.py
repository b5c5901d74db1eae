"""Backend selection for the geometry hot loops.

The compiled extension is used when it imports; set ``PEPPERHARVEST_PURE_PYTHON=1``
to force the numpy fallback (both give identical results).
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("PEPPERHARVEST_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND
radius_neighbors = _impl.radius_neighbors
knn = _impl.knn
euclidean_components = _impl.euclidean_components
zbuffer = _impl.zbuffer
angle_gaps = _impl.angle_gaps
patch_covariances = _impl.patch_covariances


def available_backends() -> dict:
    """Map backend name to kernel module, for benchmarks and cross-checks."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        out["cython"] = _kernels
    return out

"""Dispatch between the numba-compiled kernels and the numpy fallback.

The backend is fixed at import time:

  - ``RAILODO_NUMBA=0`` forces the pure-numpy path.
  - otherwise numba is used when it imports cleanly.

``BACKEND`` reports which one is active.
"""

from __future__ import annotations

import os

from . import _numpy

_want_numba = os.environ.get("RAILODO_NUMBA", "1") != "0"
_numba_mod = None
if _want_numba:
    try:
        from . import _numba as _numba_mod  # noqa: F401
    except ImportError:
        _numba_mod = None

if _numba_mod is not None:
    BACKEND = "numba"
    warp_bilinear = _numba_mod.warp_bilinear
    render_plane = _numba_mod.render_plane
    ssd_band = _numba_mod.ssd_band
    harris_score = _numba_mod.harris_score
    max_filter2d = _numba_mod.max_filter2d
else:
    BACKEND = "numpy"
    warp_bilinear = _numpy.warp_bilinear
    render_plane = _numpy.render_plane
    ssd_band = _numpy.ssd_band
    harris_score = _numpy.harris_score
    max_filter2d = _numpy.max_filter2d

__all__ = ["BACKEND", "warp_bilinear", "render_plane", "ssd_band", "harris_score", "max_filter2d"]

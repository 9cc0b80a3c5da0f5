"""Geometry kernel backend selection.

Prefers the compiled extension when it was built; falls back to the
pure-numpy implementations otherwise. Set ``BREPSYNTH_NO_EXT=1`` to force
the fallback (used by the parity tests and the benchmark).
"""

import os

from . import _kernels_np as _np_impl

if os.environ.get("BREPSYNTH_NO_EXT"):
    _impl = _np_impl
    USING_EXT = False
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        USING_EXT = True
    except ImportError:
        _impl = _np_impl
        USING_EXT = False

nn_sqdist = _impl.nn_sqdist
cubic_points = _impl.cubic_points
bicubic_eval = _impl.bicubic_eval
bicubic_full = _impl.bicubic_full
grid_gap_dist = _impl.grid_gap_dist

numpy_backend = _np_impl

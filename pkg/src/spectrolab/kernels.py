"""Kernel dispatch: the compiled extension when it imports, numpy otherwise.

Set ``SPECTROLAB_PURE=1`` to force the numpy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("SPECTROLAB_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

ball_counts = _impl.ball_counts
greedy_cover = _impl.greedy_cover

__all__ = ["BACKEND", "ball_counts", "greedy_cover"]

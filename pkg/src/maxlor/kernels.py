"""Mode-loop kernels, compiled when available.

The compiled extension ``maxlor._kernels`` is used if it imports; otherwise
the numpy implementation in ``maxlor._kernels_py`` is selected.  Setting the
environment variable ``MAXLOR_PURE_PYTHON=1`` forces the numpy path.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("MAXLOR_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _kernels_py

IMPLEMENTATION = _impl.IMPLEMENTATION
coupling_pairings = _impl.coupling_pairings
transverse_source = _impl.transverse_source
rotate = _impl.rotate
lawson_combine = _impl.lawson_combine

__all__ = ["IMPLEMENTATION", "coupling_pairings", "transverse_source", "rotate", "lawson_combine"]

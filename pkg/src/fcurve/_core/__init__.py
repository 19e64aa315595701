"""Evaluation kernels with an optional compiled fast path.

The Cython extension is used when it imported cleanly and the
``FCURVE_PURE_PYTHON`` environment variable is unset; otherwise the
vectorized numpy implementation takes over.  Both backends run the
same arithmetic in the same order, so their outputs are identical
bit for bit.
"""

import os

from . import _bspline_py

if os.environ.get("FCURVE_PURE_PYTHON"):
    _impl = _bspline_py
else:
    try:
        from . import _bspline_cy as _impl
    except ImportError:
        _impl = _bspline_py

design_matrix = _impl.design_matrix

BACKEND = "python" if _impl is _bspline_py else "cython"


def backend_name():
    """Name of the active kernel backend, ``"cython"`` or ``"python"``."""
    return BACKEND

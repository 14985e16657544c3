"""Hot loops of the quotient optimizer, compiled when the extension is built.

``smoothed_power(y, w, p, eps)`` returns ``sum_r w_r (|y_r|^2 + eps^2)^(p/2)``
and the per-row derivative factors ``p w_r (|y_r|^2 + eps^2)^(p/2 - 1)``.
``row_norms(y)`` returns the Euclidean norm of every row.

Set ``KORNLAB_PURE_PYTHON=1`` to force the NumPy fallback.
"""

import os

import numpy as np

from . import _kernels_py

if os.environ.get("KORNLAB_PURE_PYTHON"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"


def smoothed_power(y, w, p, eps):
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.ascontiguousarray(np.broadcast_to(w, (y.shape[0],)), dtype=np.float64)
    return _impl.smoothed_power(y, w, float(p), float(eps))


def row_norms(y):
    return _impl.row_norms(np.ascontiguousarray(y, dtype=np.float64))

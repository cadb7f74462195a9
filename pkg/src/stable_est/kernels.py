"""Backend selection for the pairwise kernels.

The compiled module is used when it was built; setting
``STABLE_EST_PURE_PYTHON=1`` forces the NumPy fallback.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("STABLE_EST_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def weighted_power_sum(out, w, p):
    return _impl.weighted_power_sum(np.ascontiguousarray(out, dtype=float),
                                    np.ascontiguousarray(w, dtype=float), float(p))


def weighted_max_dist(out, w):
    value, a, b = _impl.weighted_max_dist(np.ascontiguousarray(out, dtype=float),
                                          np.ascontiguousarray(w, dtype=float))
    return float(value), int(a), int(b)

"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when it was built; otherwise
the NumPy fallback in ``_kernels_py`` is loaded.  Set the environment
variable ``DAMPEDEULER_PURE_PYTHON=1`` before import to force the fallback.
"""

import os

import numpy as np

from . import _kernels_py
from .errors import DegenerateDensity

if os.environ.get("DAMPEDEULER_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"


def backends():
    """Map of available backend name -> kernel module."""
    out = {"python": _kernels_py}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out


def sign_sum(x, w=None, impl=None):
    """``sum_j w_j sign(x_i - x_j)`` for any ordering of ``x``.

    With ``w=None`` every point has unit weight.
    """
    impl = impl or _impl
    x = np.ascontiguousarray(x, dtype=float)
    w = np.ones_like(x) if w is None else np.ascontiguousarray(w, dtype=float)
    if x.size < 2 or np.all(x[1:] >= x[:-1]):
        return impl.sign_sum_sorted(x, w)
    order = np.argsort(x, kind="stable")
    res = impl.sign_sum_sorted(np.ascontiguousarray(x[order]), np.ascontiguousarray(w[order]))
    out = np.empty_like(res)
    out[order] = res
    return out


def pressure_gradient(chi, m, impl=None):
    impl = impl or _impl
    out = impl.pressure_gradient(np.ascontiguousarray(chi, dtype=float), float(m))
    if out is None:
        raise DegenerateDensity("adjacent quantile nodes coincide; density is singular")
    return out


def merge_cascade(x, v, s, tol, impl=None):
    impl = impl or _impl
    return impl.merge_cascade(
        np.ascontiguousarray(x, dtype=float),
        np.ascontiguousarray(v, dtype=float),
        np.ascontiguousarray(s, dtype=float),
        float(tol),
    )


def pairwise_sum(x, w, dfun, impl=None):
    impl = impl or _impl
    return impl.pairwise_sum(np.ascontiguousarray(x, dtype=float),
                             np.ascontiguousarray(w, dtype=float), dfun)

"""Kernel backend selection.

The compiled extension (gauss_cy) is used when present; otherwise the
pure-Python twin. TEAMSCHED_PURE=1 forces the fallback, which is handy for
benchmarks and debugging.
"""

from __future__ import annotations

import os

from . import gauss_py

if os.environ.get("TEAMSCHED_PURE") == "1":
    _impl = gauss_py
else:
    try:
        from . import gauss_cy as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = gauss_py

BACKEND = _impl.BACKEND_NAME
max_upper_bound = _impl.max_upper_bound
norm_cdf = _impl.norm_cdf
product_cdf = _impl.product_cdf

DEFAULT_WINDOW_POINTS = gauss_py.DEFAULT_WINDOW_POINTS
DEFAULT_GUARD_TS = gauss_py.DEFAULT_GUARD_TS
DEFAULT_TOL = gauss_py.DEFAULT_TOL

__all__ = [
    "BACKEND",
    "max_upper_bound",
    "norm_cdf",
    "product_cdf",
    "gauss_py",
    "DEFAULT_WINDOW_POINTS",
    "DEFAULT_GUARD_TS",
    "DEFAULT_TOL",
]

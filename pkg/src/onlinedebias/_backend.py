"""Kernel backend selection.

The env var ``ONLINEDEBIAS_BACKEND`` picks the implementation of the hot
kernels: ``numba`` (default when numba imports), ``numpy`` for the pure
fallback.  Both expose identical functions; see ``benchmarks/`` for a
speed comparison.
"""
from __future__ import annotations

import os

_requested = os.environ.get("ONLINEDEBIAS_BACKEND", "auto").strip().lower()

if _requested in ("numpy", "np", "0", "off"):
    from . import _kernels_np as kernels

    BACKEND = "numpy"
elif _requested in ("numba", "nb", "1", "on"):
    from . import _kernels_numba as kernels

    BACKEND = "numba"
elif _requested in ("auto", ""):
    try:
        from . import _kernels_numba as kernels

        BACKEND = "numba"
    except ImportError:
        from . import _kernels_np as kernels

        BACKEND = "numpy"
else:
    raise ValueError(
        f"ONLINEDEBIAS_BACKEND={_requested!r}: expected 'numba', 'numpy' or 'auto'"
    )


def backend_name() -> str:
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return BACKEND

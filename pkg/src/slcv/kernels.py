"""Backend selection for the hot kernels.

The compiled ``_core`` extension is used when it imports; otherwise the numpy
fallback.  Set ``SLCV_BACKEND=python`` to force the fallback.
"""
import os

from . import _fallback

BACKENDS = {"python": _fallback}

try:
    from . import _core
except ImportError:  # extension not built
    _core = None
else:
    BACKENDS["cython"] = _core

_requested = os.environ.get("SLCV_BACKEND", "").strip().lower()
if _requested and _requested not in BACKENDS:
    _requested = ""
BACKEND = _requested or ("cython" if _core is not None else "python")


def det_batch(lines, planes, anchor_rows, backend=None):
    return BACKENDS[backend or BACKEND].det_batch(lines, planes, anchor_rows)

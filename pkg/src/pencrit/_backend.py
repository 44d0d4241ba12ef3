"""Kernel backend selection: compiled extension if available, numpy fallback.

Set ``PENCRIT_BACKEND=python`` or ``PENCRIT_BACKEND=c`` to force a choice;
forcing ``c`` raises if the extension is missing.
"""

from __future__ import annotations

import logging
import os

from . import _kernels_py

logger = logging.getLogger("pencrit.backend")

_forced = os.environ.get("PENCRIT_BACKEND", "").strip().lower()

if _forced == "python":
    _kernels = _kernels_py
else:
    try:
        from . import _ckernels as _kernels  # type: ignore[no-redef]
    except ImportError:
        if _forced == "c":
            raise ImportError(
                "PENCRIT_BACKEND=c but the compiled extension is not built"
            )
        logger.info("compiled kernels unavailable; using the numpy fallback")
        _kernels = _kernels_py

BACKEND_NAME: str = _kernels.BACKEND_NAME


def kernels():
    """The active kernel module."""
    return _kernels


def available_backends():
    out = {"python": _kernels_py}
    try:
        from . import _ckernels

        out["c"] = _ckernels
    except ImportError:
        pass
    return out

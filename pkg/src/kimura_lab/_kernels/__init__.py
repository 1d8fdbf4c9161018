"""Stepping kernels: compiled core with a pure-numpy fallback.

The backend is chosen once at import. Set KIMURA_LAB_KERNEL=python (or =c)
to force a choice; forcing the compiled kernel when it is unavailable
raises immediately rather than silently degrading.
"""

import os

from . import reference

_forced = os.environ.get("KIMURA_LAB_KERNEL", "").strip().lower()

if _forced == "python":
    _impl = reference
else:
    try:
        from . import _core as _impl
    except ImportError:
        if _forced == "c":
            raise ImportError(
                "KIMURA_LAB_KERNEL=c but the compiled kernel is not built"
            ) from None
        _impl = reference

em_step = _impl.em_step
BACKEND = _impl.BACKEND


def backend() -> str:
    """Name of the active kernel backend: 'c' or 'python'."""
    return BACKEND

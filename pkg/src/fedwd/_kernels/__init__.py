"""Kernel backend selection.

The compiled extension is preferred when importable.  Set FEDWD_BACKEND to
"python" to force the numpy fallback or "compiled" to make a missing
extension an import error; any other value besides "auto" is rejected.
"""

import os

from . import _py

_requested = os.environ.get("FEDWD_BACKEND", "auto").lower()
if _requested not in ("auto", "compiled", "python"):
    raise ImportError(
        "FEDWD_BACKEND must be 'auto', 'compiled' or 'python', "
        f"got {_requested!r}"
    )

if _requested == "python":
    _impl = _py
else:
    try:
        from . import _core as _impl
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _py

BACKEND = _impl.BACKEND_NAME
batch_summary = _impl.batch_summary

__all__ = ["BACKEND", "batch_summary"]

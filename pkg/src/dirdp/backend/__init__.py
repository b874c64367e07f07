"""Array-kernel backend selection.

The compiled Cython kernels are preferred when the extension built;
otherwise the numpy implementation is used. Override with the
DIRDP_BACKEND environment variable ("compiled" or "python"); asking
for "compiled" when the extension is missing is an error rather than
a silent slowdown.
"""

from __future__ import annotations

import os

from . import _kernels_py

_choice = os.environ.get("DIRDP_BACKEND", "").strip().lower()
if _choice not in ("", "compiled", "python"):
    raise RuntimeError(f"DIRDP_BACKEND must be 'compiled' or 'python', got {_choice!r}")

_impl = None
if _choice != "python":
    try:
        from . import _kernels_cy as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "compiled":
            raise RuntimeError("DIRDP_BACKEND=compiled but the compiled extension is not built")
        _impl = None
if _impl is None:
    _impl = _kernels_py

HAVE_COMPILED = _impl is not _kernels_py

conv2d_fwd = _impl.conv2d_fwd
conv2d_bwd = _impl.conv2d_bwd
avgpool2_fwd = _impl.avgpool2_fwd
avgpool2_bwd = _impl.avgpool2_bwd


def backend_name() -> str:
    """Which kernel implementation is active: 'compiled' or 'python'."""
    return _impl.BACKEND_NAME

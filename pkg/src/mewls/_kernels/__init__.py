"""Backend selection for the basis-evaluation kernel.

The compiled extension is preferred when it imported cleanly; otherwise the
NumPy implementation is used.  Set MEWLS_BACKEND=python or
MEWLS_BACKEND=compiled to force a choice ("compiled" raises if the
extension is unavailable).
"""

import os

from . import _basis_py

_requested = os.environ.get("MEWLS_BACKEND", "auto").lower()

if _requested not in ("auto", "compiled", "python"):
    raise ValueError(f"unknown MEWLS_BACKEND value: {_requested!r}")

if _requested == "python":
    _impl = _basis_py
    BACKEND = "python"
else:
    try:
        from . import _basis as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "MEWLS_BACKEND=compiled but the compiled kernel is not built"
            ) from None
        _impl = _basis_py
        BACKEND = "python"

find_spans = _impl.find_spans
basis_span_values = _impl.basis_span_values

__all__ = ["BACKEND", "basis_span_values", "find_spans"]

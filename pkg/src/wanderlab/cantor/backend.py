"""Kernel selection: the compiled extension when importable, else pure Python."""
from __future__ import annotations

import os

if os.environ.get("WANDERLAB_PURE_PYTHON"):
    from . import _fallback as kernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - exercised only without a build
        from . import _fallback as kernels
        BACKEND = "python"

__all__ = ["BACKEND", "kernels"]

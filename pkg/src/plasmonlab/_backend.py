"""Select the counting-kernel implementation at import time.

The compiled Cython extension is preferred; the pure-Python twin is the
fallback.  Set PLASMONLAB_PURE_PYTHON=1 to force the fallback (used by the
benchmark and for debugging).
"""

import os

if os.environ.get("PLASMONLAB_PURE_PYTHON"):
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as kernels

KERNEL_BACKEND = kernels.BACKEND

"""Pick the compiled sampling kernels when available.

Set ``LATTICELAB_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

if os.environ.get("LATTICELAB_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels
    except ImportError:  # extension not built
        from . import _kernels_py as kernels

BACKEND = kernels.BACKEND

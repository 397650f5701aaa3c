"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``PARAPOISSON_PURE=1`` to force the numpy path.
"""

import os

from . import _kernels_ref

try:
    if os.environ.get("PARAPOISSON_PURE"):
        raise ImportError("pure-python path requested")
    from . import _kernels as _impl
    BACKEND = "compiled"
except ImportError:
    _impl = _kernels_ref
    BACKEND = "numpy"

block_tridiag_solve = _impl.block_tridiag_solve
reference = _kernels_ref

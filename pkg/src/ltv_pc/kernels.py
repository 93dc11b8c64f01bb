"""Backend selection for the trajectory kernels.

The compiled extension is used when it imports; otherwise the numpy versions.
Set ``LTV_PC_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("LTV_PC_PURE_PYTHON"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

transfer_blocks = _impl.transfer_blocks
rollout = _impl.rollout
dynamics_residual = _impl.dynamics_residual

__all__ = ["BACKEND", "transfer_blocks", "rollout", "dynamics_residual"]

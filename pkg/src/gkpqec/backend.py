"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy twin.
Set ``GKPQEC_BACKEND=python`` to force the fallback.
"""
import os

if os.environ.get("GKPQEC_BACKEND", "").lower() == "python":
    from . import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        from . import _kernels_py as _impl

        BACKEND = "python"

rk4_propagate = _impl.rk4_propagate
apply_generator = _impl.apply_generator

__all__ = ["BACKEND", "rk4_propagate", "apply_generator"]

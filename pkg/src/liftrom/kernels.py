"""Backend selection for the Euler residual kernel.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``LIFTROM_KERNELS=python`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
compute_residual = _kernels_py.compute_residual

if os.environ.get("LIFTROM_KERNELS", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on build
        pass
    else:
        BACKEND = "cython"
        compute_residual = _compiled.compute_residual


def get_backend(name: str | None = None):
    """Return ``compute_residual`` for ``name`` ('cython' or 'python')."""
    if name is None:
        return compute_residual
    if name == "python":
        return _kernels_py.compute_residual
    if name == "cython":
        from . import _kernels

        return _kernels.compute_residual
    raise ValueError(f"unknown kernel backend {name!r}")

"""Kernel backend selection.

The compiled extension is used when it was built and ``TSIC_PURE_PYTHON`` is
unset; otherwise the numpy fallback is loaded. ``BACKEND`` names the choice.
"""
import os

from . import _pykernels

_FUNCS = ("masked_argmax", "argmin_priority", "mlp_forward", "mlp_backward")


def _load(name):
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def get_backend(name):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    return _load(name)


if os.environ.get("TSIC_PURE_PYTHON"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        _impl = _load("cython")
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

masked_argmax = _impl.masked_argmax
argmin_priority = _impl.argmin_priority
mlp_forward = _impl.mlp_forward
mlp_backward = _impl.mlp_backward

__all__ = ["BACKEND", "get_backend", *_FUNCS]

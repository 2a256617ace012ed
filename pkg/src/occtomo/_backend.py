"""Kernel backend selection.

The compiled extension is used when importable unless ``OCCTOMO_PURE_PYTHON``
is set to a non-empty value other than ``0``.
"""
import importlib
import os

from . import _pykernels


def load(name: str):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _pykernels
    if name == "cython":
        return importlib.import_module("occtomo._kernels")
    raise ValueError(f"unknown backend {name!r}")


def available() -> list[str]:
    out = ["python"]
    try:
        load("cython")
    except ImportError:
        pass
    else:
        out.insert(0, "cython")
    return out


if os.environ.get("OCCTOMO_PURE_PYTHON", "") not in ("", "0"):
    kernels = _pykernels
    BACKEND = "python"
else:
    try:
        kernels = load("cython")
        BACKEND = "cython"
    except ImportError:
        kernels = _pykernels
        BACKEND = "python"

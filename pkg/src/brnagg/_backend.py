"""Pick the search kernels at import time.

The compiled module is preferred; set ``BRNAGG_PURE_PYTHON=1`` to force the
numpy/pure-Python fallback.
"""
import importlib
import os

from . import _pykernels

_NAMES = {"cython": "brnagg._ckernels", "python": "brnagg._pykernels"}


def load(name):
    """Return the kernel module called ``name`` (``"cython"`` or ``"python"``)."""
    try:
        return importlib.import_module(_NAMES[name])
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(_NAMES)}") from None


def available():
    out = ["python"]
    try:
        load("cython")
    except ImportError:
        pass
    else:
        out.insert(0, "cython")
    return out


if os.environ.get("BRNAGG_PURE_PYTHON", "").strip() not in ("", "0"):
    kernels, BACKEND = _pykernels, "python"
else:
    try:
        from . import _ckernels as kernels

        BACKEND = "cython"
    except ImportError:
        kernels, BACKEND = _pykernels, "python"

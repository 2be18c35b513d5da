"""Kernel backend selection.

The compiled extension is used when importable; ``ILPTEMPER_BACKEND=python``
forces the numpy fallback.
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_MODULES = {"python": _pykernels}
if _ckernels is not None:
    _MODULES["cython"] = _ckernels

if os.environ.get("ILPTEMPER_BACKEND", "").lower() == "python" or _ckernels is None:
    NAME = "python"
else:
    NAME = "cython"
kernels = _MODULES[NAME]


def available():
    return sorted(_MODULES)


def get(name=None):
    if name is None:
        return kernels
    try:
        return _MODULES[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {available()}") from None


def arrays(inst, backend=None):
    """Kernel-ready view of the instance, cached per backend."""
    mod = get(backend)
    key = mod.__name__
    cached = inst._kernel_cache.get(key)
    if cached is None:
        cached = mod.prepare((inst.c, inst.b, inst.row_ptr, inst.row_col, inst.row_val,
                              inst.col_ptr, inst.col_row, inst.col_val))
        inst._kernel_cache[key] = cached
    return cached

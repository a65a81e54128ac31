"""Backend selection for the element kernels.

The compiled extension is used when it imports; setting ``ERFLOW_PURE_PYTHON=1``
forces the numpy fallback. Both backends stay importable for benchmarking.
"""

import os
from contextlib import contextmanager

import numpy as np

from . import _kernels_py as python

try:
    from . import _kernels as compiled
except ImportError:  # extension not built
    compiled = None

if compiled is not None and os.environ.get("ERFLOW_PURE_PYTHON", "") != "1":
    _impl = compiled
    BACKEND = "compiled"
else:
    _impl = python
    BACKEND = "python"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def weighted_gram(B, D, w):
    return _impl.weighted_gram(_c(B), _c(D), _c(w))


def weighted_outer(L, R, w):
    return _impl.weighted_outer(_c(L), _c(R), _c(w))


def weighted_apply(B, s, w):
    return _impl.weighted_apply(_c(B), _c(s), _c(w))


def backend(name: str):
    """Return the kernel module for ``"compiled"`` or ``"python"``."""
    if name == "python":
        return python
    if name == "compiled":
        if compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return compiled
    raise ValueError(f"unknown backend {name!r}")


@contextmanager
def use_backend(name: str):
    """Temporarily route the element kernels through one backend."""
    global _impl, BACKEND
    saved = _impl, BACKEND
    _impl, BACKEND = backend(name), name
    try:
        yield _impl
    finally:
        _impl, BACKEND = saved

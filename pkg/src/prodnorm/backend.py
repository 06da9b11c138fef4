"""Kernel backend selection.

Two interchangeable kernel sets exist: the compiled extension
(``prodnorm._kernels``, a deterministic cache-blocked triple loop) and the
numpy/BLAS fallback (``prodnorm._kernels_np``).  The active one is picked at
import time: the compiled module when it built, numpy otherwise.  The
environment variable ``PRODNORM_KERNELS`` (``auto`` | ``cython`` | ``numpy``)
overrides the choice; ``use_backend`` switches it programmatically (used by
the benchmark and the cross-validation tests).

Within one backend, results are bitwise independent of thread count: each
output entry is accumulated in a fixed order by exactly one worker.
"""

import os

from . import _kernels_np

_BACKENDS = {"numpy": _kernels_np}

try:
    from . import _kernels as _kernels_cy

    _BACKENDS["cython"] = _kernels_cy
except ImportError:
    _kernels_cy = None


def available_backends():
    return tuple(sorted(_BACKENDS))


def _pick_default():
    choice = os.environ.get("PRODNORM_KERNELS", "auto").lower()
    if choice == "auto":
        return "cython" if "cython" in _BACKENDS else "numpy"
    if choice not in _BACKENDS:
        raise RuntimeError(
            f"PRODNORM_KERNELS={choice!r} is not available; "
            f"choose one of {available_backends()} or 'auto'"
        )
    return choice


_active_name = _pick_default()
_active = _BACKENDS[_active_name]


def active_backend():
    return _active_name


def use_backend(name):
    """Switch the kernel backend; returns the previously active name."""
    global _active, _active_name
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    previous = _active_name
    _active_name = name
    _active = _BACKENDS[name]
    return previous


def matmul(a, b):
    return _active.matmul(a, b)


def inf_norm(a):
    return float(_active.inf_norm(a))


def abs_row_sums(a):
    return _active.abs_row_sums(a)

"""Kernel dispatch: the compiled extension when importable, else numpy.

Set ``ADAPTIVE_LQR_PURE=1`` before import to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("ADAPTIVE_LQR_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def backend(name=None):
    """The kernel module for ``name`` ("cython" or "python"); None gives the default."""
    if name is None:
        return _impl
    if not isinstance(name, str):
        return name
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _c(m):
    return np.ascontiguousarray(m, dtype=np.float64)


def rollout(a, b, l, q, r, noise, states, inputs, costs, gram=None, cross=None,
            limit=1e30, impl=None):
    impl = backend(impl)
    p, nr = b.shape
    accumulate = gram is not None
    if not accumulate:
        gram = np.zeros((p + nr, p + nr))
        cross = np.zeros((p, p + nr))
    return impl.rollout(_c(a), _c(b), _c(l), _c(q), _c(r), _c(noise),
                        states, inputs, costs, gram, cross, accumulate, float(limit))


def decompose_terms(a0, b0, lstar, k, m, states, inputs, noise, impl=None):
    impl = backend(impl)
    return impl.decompose_terms(_c(a0), _c(b0), _c(lstar), _c(k), _c(m),
                                _c(states), _c(inputs), _c(noise))

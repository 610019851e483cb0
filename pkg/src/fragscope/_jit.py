"""JIT shim.

Hot kernels are decorated with :func:`njit` from this module.  With numba
available and ``FRAGSCOPE_NO_NUMBA`` unset (or ``0``), they are compiled in
nopython mode.  Otherwise the decorator is the identity and the very same
source runs under CPython on numpy scalars and arrays.

Kernels only draw ``rng.random()`` from a ``numpy.random.Generator`` and use
:mod:`math` for transcendental functions, so both paths consume the random
stream identically.
"""
import os

_FLAG = os.environ.get("FRAGSCOPE_NO_NUMBA", "0").strip().lower()

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _numba = None

NUMBA_ENABLED = _numba is not None and _FLAG in ("", "0", "false", "no")


def njit(func=None, **options):
    opts = {"cache": True, "nogil": True}
    opts.update(options)

    def wrap(f):
        if NUMBA_ENABLED:
            return _numba.njit(**opts)(f)
        return f

    if func is None:
        return wrap
    return wrap(func)


def python_impl(kernel):
    """Return the uncompiled Python function behind a kernel."""
    return getattr(kernel, "py_func", kernel)

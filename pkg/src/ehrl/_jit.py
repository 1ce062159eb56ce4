"""Optional numba acceleration.

Each hot kernel in :mod:`ehrl._kernels` exists twice: an explicit-loop version
compiled with ``numba.njit`` and a vectorized pure-numpy version. The public
name is bound to the numba version unless ``EHRL_PURE_NUMPY`` is set to a
truthy value or numba cannot be imported.
"""
import os

_flag = os.environ.get("EHRL_PURE_NUMPY", "0").strip().lower()
PURE_NUMPY = _flag not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not PURE_NUMPY


def njit(fn):
    """Compile ``fn`` with numba when it is importable (lazily, on first call)."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True)(fn)


def pick(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"

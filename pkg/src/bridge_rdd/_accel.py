"""Kernel backend selection.

Hot loops are written twice: a numba ``@njit`` kernel and a vectorized numpy
fallback. Set ``BRIDGE_RDD_NUMBA=0`` to force the numpy path (useful for
debugging or where numba is unavailable).
"""
import os

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("BRIDGE_RDD_NUMBA", "1") not in ("0", "false", "no")


# reassociation lets numba vectorize the reductions; NaN/Inf semantics are kept
FAST_FLAGS = frozenset({"reassoc", "contract", "nsz"})


def njit(fn=None, *, fast=False):
    """Compile ``fn`` with numba when available, else return it untouched."""
    if fn is None:
        return lambda f: njit(f, fast=fast)
    if not NUMBA_AVAILABLE:
        return fn
    return numba.njit(cache=True, fastmath=set(FAST_FLAGS) if fast else False)(fn)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"

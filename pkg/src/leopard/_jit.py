"""Optional numba acceleration.

Set ``LEOPARD_DISABLE_NUMBA=1`` to run every kernel as plain Python/numpy.
The flag is read once at import time.
"""

import os

DISABLE_ENV_VAR = "LEOPARD_DISABLE_NUMBA"

NUMBA_ENABLED = os.environ.get(DISABLE_ENV_VAR, "0").lower() not in ("1", "true", "yes")

if NUMBA_ENABLED:
    try:
        import numba as _nb
    except ImportError:  # pragma: no cover
        NUMBA_ENABLED = False


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity decorator otherwise."""
    if NUMBA_ENABLED:
        kwargs.setdefault("cache", True)
        return _nb.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func

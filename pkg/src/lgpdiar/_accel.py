"""Numba detection and the env switch that forces the pure-numpy path.

Set ``LGPDIAR_NO_NUMBA=1`` before importing lgpdiar to run every kernel
through its numpy implementation.
"""

import os
from typing import Any, Callable

_FALSY = {"", "0", "false", "no", "off"}

NUMBA_DISABLED_BY_ENV = os.getenv("LGPDIAR_NO_NUMBA", "").strip().lower() not in _FALSY

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args: Any, **kwargs: Any) -> Callable:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


USE_NUMBA = HAS_NUMBA and not NUMBA_DISABLED_BY_ENV
BACKEND = "numba" if USE_NUMBA else "numpy"

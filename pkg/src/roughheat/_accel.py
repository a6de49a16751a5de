"""Numba dispatch.

``ROUGHHEAT_NUMBA`` selects the kernel backend: ``auto`` (default, numba when
importable), ``1``/``true`` (require numba) or ``0``/``false`` (pure numpy).
"""

from __future__ import annotations

import os

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        """Identity decorator used when numba is missing."""

        def decorator(func):
            return func

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return decorator


def _resolve(flag: str) -> bool:
    flag = flag.strip().lower()
    if flag == "auto":
        return NUMBA_AVAILABLE
    if flag in ("1", "true", "yes", "on"):
        if not NUMBA_AVAILABLE:
            raise ImportError("ROUGHHEAT_NUMBA requests numba but it is not installed")
        return True
    return False


USE_NUMBA = _resolve(os.environ.get("ROUGHHEAT_NUMBA", "auto"))

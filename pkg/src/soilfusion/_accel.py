"""Backend selection for the numeric kernels.

Numba is used when importable unless ``SOILFUSION_DISABLE_NUMBA`` is set to a
truthy value, in which case the pure-numpy kernels are used everywhere.
"""
import os

_FALSY = {"", "0", "false", "no", "off"}


def numba_requested() -> bool:
    return os.environ.get("SOILFUSION_DISABLE_NUMBA", "").strip().lower() in _FALSY


try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"

"""Kernel backend selection.

The chain-stepping kernels exist twice: a compiled Cython extension
(``atmc._kernels_c``) and a pure numpy fallback (``atmc._kernels_py``)
with identical contracts and random-stream consumption.  The compiled one
is picked at import time when present; set ``ATMC_BACKEND=py`` or
``ATMC_BACKEND=c`` to force a choice (forcing ``c`` fails loudly if the
extension did not build).  ``select()`` switches at runtime, which the
benchmark and the equivalence tests use.
"""

import os

from . import _kernels_py

try:
    from . import _kernels_c
except ImportError:
    _kernels_c = None

COMPILED_AVAILABLE = _kernels_c is not None


def _resolve(requested):
    requested = (requested or "auto").strip().lower()
    if requested in ("auto", ""):
        return _kernels_c if COMPILED_AVAILABLE else _kernels_py
    if requested in ("c", "compiled"):
        if not COMPILED_AVAILABLE:
            raise RuntimeError(
                "compiled kernels requested but atmc._kernels_c is not importable; "
                "reinstall with a working C compiler or use ATMC_BACKEND=py"
            )
        return _kernels_c
    if requested in ("py", "python"):
        return _kernels_py
    raise RuntimeError(f"unknown backend {requested!r}; expected 'auto', 'c', or 'py'")


_active = _resolve(os.environ.get("ATMC_BACKEND"))


def kernels():
    """The active kernel module."""
    return _active


def name():
    """'compiled' or 'python'."""
    return "compiled" if _active is _kernels_c else "python"


def available():
    return ("compiled", "python") if COMPILED_AVAILABLE else ("python",)


def select(which):
    """Switch backends at runtime; returns the previously active name."""
    global _active
    previous = name()
    _active = _resolve(which)
    return previous

"""Kernel backend selection.

The compiled Cython kernel is preferred; the pure-Python twin is the
fallback. SHAPSEL_BACKEND=python|cython forces a choice (cython raises if
the extension was not built). Both produce bit-identical results; only
speed differs.
"""

from __future__ import annotations

import os


def _load():
    forced = os.environ.get("SHAPSEL_BACKEND", "").strip().lower()
    if forced not in ("", "cython", "python"):
        raise ValueError(f"SHAPSEL_BACKEND must be 'cython' or 'python', got {forced!r}")
    if forced != "python":
        try:
            from . import _treeshap_cy

            return "cython", _treeshap_cy
        except ImportError:
            if forced == "cython":
                raise ImportError(
                    "SHAPSEL_BACKEND=cython but the compiled kernel is not available;"
                    " reinstall with a C compiler or unset the variable"
                ) from None
    from . import _treeshap_py

    return "python", _treeshap_py


BACKEND, _module = _load()


def backend_name() -> str:
    return BACKEND


def is_compiled() -> bool:
    return BACKEND == "cython"

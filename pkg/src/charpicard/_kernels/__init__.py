"""Numeric backend selection.

The compiled extension (``_core``, built from Cython) is preferred; the
pure-numpy ``fallback`` module is used when it is unavailable.  Both
expose the same two entry points (``eval_program``, ``picard_sweep``)
and agree to rounding, so everything above this package is
backend-agnostic.

Set ``CHARPICARD_BACKEND=python`` (or ``compiled``) to force a choice,
e.g. for the backend benchmark.
"""

from __future__ import annotations

import os

from . import fallback

try:
    from . import _core
except ImportError:  # extension not built; pure-Python install
    _core = None

HAVE_COMPILED = _core is not None

_forced = os.environ.get("CHARPICARD_BACKEND", "").strip().lower()
if _forced == "python":
    _active = fallback
elif _forced == "compiled":
    if _core is None:
        raise ImportError(
            "CHARPICARD_BACKEND=compiled but the extension is not built")
    _active = _core
else:
    _active = _core if HAVE_COMPILED else fallback


def get_backend(name=None):
    """Return a backend module: the active one, "python", or "compiled"."""
    if name is None:
        return _active
    if name == "python":
        return fallback
    if name == "compiled":
        if _core is None:
            raise ValueError("compiled backend is not available")
        return _core
    raise ValueError(f"unknown backend '{name}'")


def active_name():
    return _active.NAME

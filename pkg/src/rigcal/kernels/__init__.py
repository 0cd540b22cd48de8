"""Backend dispatch for the hot numeric kernels.

Two interchangeable implementations exist: a numba-JIT backend
(kernels drop to compiled scalar loops) and a pure-numpy vectorized
fallback. Selection, in priority order:

1. ``set_backend(name)`` (programmatic override, used by tests/benchmarks)
2. the ``RIGCAL_BACKEND`` environment variable: ``numba``, ``numpy``, or
   ``auto`` (default)
3. ``auto``: numba when importable, else numpy

Both backends expose the same functions with identical semantics:
``bilinear_batch``, ``cast_rays``, ``render_depth``, ``geo_blocks``,
``cycle_blocks``. See ``benchmarks/bench_backends.py`` for a speed and
agreement comparison.
"""

from __future__ import annotations

import os

_ENV_VAR = "RIGCAL_BACKEND"
_override = None
_active = None


def resolve(name: str):
    """Import and return a backend module by name ('numpy' or 'numba')."""
    if name == "numpy":
        from . import numpy_impl

        return numpy_impl
    if name == "numba":
        from . import numba_impl

        return numba_impl
    raise ValueError(f"unknown kernel backend {name!r} (expected 'numpy' or 'numba')")


def _resolve_auto():
    try:
        return resolve("numba")
    except ImportError:
        return resolve("numpy")


def active():
    """The backend module currently in effect."""
    global _active
    if _override is not None:
        return _override
    if _active is None:
        requested = os.environ.get(_ENV_VAR, "auto").strip().lower()
        _active = _resolve_auto() if requested in ("", "auto") else resolve(requested)
    return _active


def active_name() -> str:
    return active().NAME


def set_backend(name: str | None):
    """Force a backend (or None to restore env-based selection); returns the previous override."""
    global _override
    previous = _override
    _override = None if name is None else resolve(name)
    return previous

"""Numeric kernel backends.

Two implementations of the same kernel API exist:

``_core``
    Cython extension; the hot path for posterior sampling.

``_pyref``
    Pure numpy reference implementation, always available.

The active backend is chosen at import time: the compiled extension when
it is importable, the numpy fallback otherwise.  Set ``MPTORDER_BACKEND``
to ``cython`` or ``python`` to force one (forcing ``cython`` raises if
the extension is missing).
"""

from __future__ import annotations

import os

from . import _pyref

try:
    from . import _core
except ImportError:
    _core = None

_BACKENDS = {"python": _pyref}
if _core is not None:
    _BACKENDS["cython"] = _core

_ALIASES = {
    "python": "python",
    "pyref": "python",
    "numpy": "python",
    "cython": "cython",
    "c": "cython",
    "compiled": "cython",
}


def get_backend(name: str):
    """Return the kernel module for ``name`` ('cython' or 'python')."""
    key = _ALIASES.get(name.strip().lower())
    if key is None:
        raise ValueError(f"unknown backend {name!r}")
    if key not in _BACKENDS:
        raise ImportError(f"backend {name!r} is not available (extension not built)")
    return _BACKENDS[key]


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def _select():
    forced = os.environ.get("MPTORDER_BACKEND")
    if forced:
        return get_backend(forced)
    return _BACKENDS.get("cython", _pyref)


impl = _select()

__all__ = ["impl", "get_backend", "available_backends"]

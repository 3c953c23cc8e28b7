"""Kernel backend selection.

The compiled extension (`_fastcore`) is preferred when importable; the numpy
implementation (`_purecore`) is the fallback. Set COGEFFORT_BACKEND=python or
=cython to force one; forcing cython raises if the extension is missing.
"""

import os
from contextlib import contextmanager

from ..errors import ConfigError
from . import _purecore

try:
    from . import _fastcore
except ImportError:
    _fastcore = None

_BACKENDS = {"python": _purecore}
if _fastcore is not None:
    _BACKENDS["cython"] = _fastcore


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def get_backend(name: str):
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ConfigError(
            f"backend {name!r} not available (have: {', '.join(available_backends())})"
        ) from None


def _select_initial():
    forced = os.environ.get("COGEFFORT_BACKEND", "auto").lower()
    if forced in ("auto", ""):
        return _fastcore if _fastcore is not None else _purecore
    return get_backend(forced)


_active = _select_initial()


def active():
    """The kernel module currently in use."""
    return _active


def active_name() -> str:
    return _active.NAME


@contextmanager
def use(name: str):
    """Temporarily switch the active backend (bench/tests only)."""
    global _active
    previous = _active
    _active = get_backend(name)
    try:
        yield _active
    finally:
        _active = previous

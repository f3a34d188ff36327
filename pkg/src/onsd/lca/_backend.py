"""Backend selection for the sparse-coding inner loop.

The compiled extension is preferred when it imported cleanly; the NumPy
fallback is always available. ONSD_LCA_BACKEND=numpy|compiled overrides
the default at import time, and every public entry point also accepts an
explicit backend name, which is how the benchmark compares the two in one
process.
"""

from __future__ import annotations

import os
from types import ModuleType

from ..errors import LcaError
from . import _core_py

try:
    from . import _core  # compiled extension, absent on fallback installs
except ImportError:
    _core = None

_BACKENDS: dict[str, ModuleType] = {"numpy": _core_py}
if _core is not None:
    _BACKENDS["compiled"] = _core


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def _pick_default() -> str:
    env = os.environ.get("ONSD_LCA_BACKEND", "").strip().lower()
    if env:
        if env not in _BACKENDS:
            raise LcaError(
                f"ONSD_LCA_BACKEND={env!r} not available (have {', '.join(available_backends())})"
            )
        return env
    return "compiled" if "compiled" in _BACKENDS else "numpy"


_DEFAULT = _pick_default()


def default_backend() -> str:
    return _DEFAULT


def get_core(name: str | None = None) -> ModuleType:
    if name is None:
        name = _DEFAULT
    try:
        return _BACKENDS[name]
    except KeyError:
        raise LcaError(
            f"unknown backend {name!r} (have {', '.join(available_backends())})"
        ) from None

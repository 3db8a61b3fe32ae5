"""Hot-loop kernels: compiled extension when built, NumPy fallback otherwise.

Selection happens once at import. Set RAWBURST_KERNELS=numpy or =native to
force a backend; forcing native raises if the extension is not importable.
"""

from __future__ import annotations

import importlib
import logging
import os

from . import numpy_backend

_log = logging.getLogger(__name__)
_requested = os.environ.get("RAWBURST_KERNELS", "").strip().lower()

_native = None
if _requested != "numpy":
    try:
        _native = importlib.import_module("._native", __name__)
    except ImportError as exc:
        if _requested == "native":
            raise ImportError(
                "RAWBURST_KERNELS=native but the compiled extension is unavailable"
            ) from exc
        _log.debug("compiled kernels unavailable, using NumPy fallback: %s", exc)

if _native is not None:
    BACKEND = "native"
    distance_maps = _native.distance_maps
    l1_candidate_distances = _native.l1_candidate_distances
    wiener_merge = _native.wiener_merge
else:
    BACKEND = "numpy"
    distance_maps = numpy_backend.distance_maps
    l1_candidate_distances = numpy_backend.l1_candidate_distances
    wiener_merge = numpy_backend.wiener_merge


def available_backends() -> dict:
    """Name -> module for every importable backend (for tests and bench)."""
    backends = {"numpy": numpy_backend}
    if _native is not None:
        backends["native"] = _native
    else:
        try:
            backends["native"] = importlib.import_module("._native", __name__)
        except ImportError:
            pass
    return backends

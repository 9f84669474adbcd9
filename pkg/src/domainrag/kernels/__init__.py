"""Hot-kernel backend selection.

The compiled extension is preferred when present; the NumPy implementation
is the fallback. DOMAINRAG_KERNELS=python|cython forces a backend (useful
for the equivalence tests and the benchmark), anything else means auto.
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available_backends():
    return sorted(_BACKENDS)


def get_backend(name: str):
    """Return the kernel module for `name` ('python' or 'cython')."""
    if name not in _BACKENDS:
        raise ValueError(f"kernel backend {name!r} not available; have {available_backends()}")
    return _BACKENDS[name]


def _select():
    forced = os.environ.get("DOMAINRAG_KERNELS", "auto").lower()
    if forced in _BACKENDS:
        return forced
    if forced not in ("", "auto"):
        raise ImportError(f"DOMAINRAG_KERNELS={forced!r} requested but backend is unavailable")
    return "cython" if _ckernels is not None else "python"


ACTIVE_BACKEND = _select()
_impl = _BACKENDS[ACTIVE_BACKEND]

cosine_scores = _impl.cosine_scores
l2_distances = _impl.l2_distances
channel_stats = _impl.channel_stats
resize_bilinear = _impl.resize_bilinear
resize_nearest = _impl.resize_nearest
compose_pixels = _impl.compose_pixels

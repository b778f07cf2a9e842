"""Select the compiled or numpy forest kernels.

The compiled extension is used when it imports; set ``HINGEFOREST_BACKEND``
to ``numpy`` to force the fallback or to ``compiled`` to require the
extension.
"""
import os

from . import _npkernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"numpy": _npkernels}
if _ckernels is not None:
    BACKENDS["compiled"] = _ckernels


def get_backend(name=None):
    """Return the kernel module called ``name`` (default: best available)."""
    if name is None:
        return BACKENDS.get("compiled", _npkernels)
    try:
        return BACKENDS[name]
    except KeyError:
        raise ImportError(f"forest kernel backend '{name}' is not available "
                          f"(have: {', '.join(sorted(BACKENDS))})") from None


_requested = os.environ.get("HINGEFOREST_BACKEND") or None
default_backend = get_backend(_requested)
DEFAULT_BACKEND_NAME = next(k for k, v in BACKENDS.items() if v is default_backend)

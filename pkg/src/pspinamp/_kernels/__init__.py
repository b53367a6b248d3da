"""Hot kernels with a compiled core and a numpy fallback.

The compiled extension ``_core`` is used when it imports; setting the
environment variable ``PSPINAMP_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("PSPINAMP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback

interp_linear = _impl.interp_linear
convolve_slice = _impl.convolve_slice
gray_code_enumerate = _impl.gray_code_enumerate


def backends():
    """Return ``{name: module}`` for every importable backend."""
    out = {"python": _fallback}
    try:
        from . import _core

        out["cython"] = _core
    except ImportError:
        pass
    return out

"""Backend selection for the hot sampling kernels.

The compiled module is preferred when present; the numpy reference is the
fallback. ``SCENECODE_BACKEND`` forces the choice: ``native`` (error if the
extension is missing), ``python`` (always the numpy fallback), or ``auto``
(the default). Both backends are bit-identical; see tests/test_kernels.py.
"""

import os

_requested = os.environ.get("SCENECODE_BACKEND", "auto").lower()

if _requested not in ("auto", "native", "python"):
    raise RuntimeError(f"SCENECODE_BACKEND must be auto, native or python, got {_requested!r}")

if _requested in ("auto", "native"):
    try:
        from . import _native as _impl

        BACKEND = "native"
    except ImportError:
        if _requested == "native":
            raise
        from . import reference as _impl

        BACKEND = "python"
else:
    from . import reference as _impl

    BACKEND = "python"

bilinear_map = _impl.bilinear_map
bilinear_volume = _impl.bilinear_volume
bilinear_volume_values = _impl.bilinear_volume_values

__all__ = ["BACKEND", "bilinear_map", "bilinear_volume", "bilinear_volume_values"]

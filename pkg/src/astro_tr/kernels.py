"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set ``ASTRO_TR_PURE=1`` to
force the numpy fallback.
"""

import os

if os.environ.get("ASTRO_TR_PURE", "") not in ("", "0"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        from . import _kernels_py as _impl

BACKEND = _impl.BACKEND
root_key = _impl.root_key
derive_keys = _impl.derive_keys
raw_words = _impl.raw_words
uniforms = _impl.uniforms
normals = _impl.normals
brownian = _impl.brownian
segment_tag = _impl.segment_tag

__all__ = [
    "BACKEND",
    "root_key",
    "derive_keys",
    "raw_words",
    "uniforms",
    "normals",
    "brownian",
    "segment_tag",
]

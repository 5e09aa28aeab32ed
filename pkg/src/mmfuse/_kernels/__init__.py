"""Kernel backend selection: compiled extension when available, numpy fallback
otherwise. Set MMFUSE_PURE=1 to force the fallback."""

import os

from . import _fallback

if os.environ.get("MMFUSE_PURE"):
    impl = _fallback
else:
    try:
        from . import _core as impl  # type: ignore[no-redef]
    except ImportError:
        impl = _fallback

HAVE_COMPILED = impl.BACKEND == "compiled"


def backend_name() -> str:
    return impl.BACKEND

"""Integration-kernel backend selection.

The compiled Cython core is preferred when importable; otherwise the
pure-numpy fallback is used.  Setting ``BTCSIM_KERNELS=numpy`` forces
the fallback (useful for cross-checking), ``BTCSIM_KERNELS=cython``
makes a missing extension a hard error instead of a silent downgrade.

Single-trajectory kernels dispatch on the backend; the ``*_batch``
variants are always the vectorized numpy implementations, which drivers
use when the compiled core is absent (the compiled path runs one
trajectory per thread instead).
"""

from __future__ import annotations

import os

from . import _fallback

_forced = os.environ.get("BTCSIM_KERNELS", "").lower()
if _forced not in ("", "numpy", "cython"):
    raise ImportError(f"BTCSIM_KERNELS must be 'numpy' or 'cython', got {_forced!r}")

if _forced == "numpy":
    _core = None
else:
    try:
        from . import _core
    except ImportError:
        if _forced == "cython":
            raise
        _core = None

BACKEND = "numpy" if _core is None else "cython"
_impl = _fallback if _core is None else _core

phase_path = _impl.phase_path
phase_events = _impl.phase_events
jump_chunk = _impl.jump_chunk
homodyne_chunk = _impl.homodyne_chunk
homodyne_dense_chunk = _impl.homodyne_dense_chunk

phase_events_batch = _fallback.phase_events_batch
jump_chunk_batch = _fallback.jump_chunk_batch
homodyne_chunk_batch = _fallback.homodyne_chunk_batch

__all__ = [
    "BACKEND",
    "phase_path",
    "phase_events",
    "jump_chunk",
    "homodyne_chunk",
    "homodyne_dense_chunk",
    "phase_events_batch",
    "jump_chunk_batch",
    "homodyne_chunk_batch",
]

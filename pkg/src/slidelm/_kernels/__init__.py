"""Backend dispatch for the packed cross-attention kernel.

The compiled Cython extension is used when available; otherwise the
numpy implementation. Both expose the same forward/backward contract
(see ``_numpy_ref``) and are exercised against each other in the tests
and in ``benchmarks/bench_segment_attention.py``.
"""

from __future__ import annotations

import numpy as np

from . import _numpy_ref

try:
    from . import _seg_attn as _compiled
    BACKEND = "cython"
except ImportError:
    _compiled = None
    BACKEND = "numpy"

_active = _compiled if _compiled is not None else _numpy_ref


def available_backends() -> list[str]:
    return ["cython", "numpy"] if _compiled is not None else ["numpy"]


def use_backend(name: str) -> None:
    """Force a backend ("cython" | "numpy"); mainly for tests/benchmarks."""
    global _active, BACKEND
    if name == "numpy":
        _active, BACKEND = _numpy_ref, "numpy"
    elif name == "cython":
        if _compiled is None:
            raise RuntimeError("cython kernel not built")
        _active, BACKEND = _compiled, "cython"
    else:
        raise ValueError(f"unknown backend {name!r}")


def _prep(q, k, v, offsets):
    dtype = q.dtype
    if dtype not in (np.float32, np.float64):
        raise TypeError(f"unsupported dtype {dtype}")
    q = np.ascontiguousarray(q)
    k = np.ascontiguousarray(k, dtype=dtype)
    v = np.ascontiguousarray(v, dtype=dtype)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    return q, k, v, offsets


def segment_attention_forward(q, k, v, offsets, scale):
    q, k, v, offsets = _prep(q, k, v, offsets)
    return _active.segment_attention_forward(q, k, v, offsets, float(scale))


def segment_attention_backward(g_out, q, k, v, attn, offsets, scale):
    q, k, v, offsets = _prep(q, k, v, offsets)
    g_out = np.ascontiguousarray(g_out, dtype=q.dtype)
    attn = np.ascontiguousarray(attn, dtype=q.dtype)
    return _active.segment_attention_backward(g_out, q, k, v, attn, offsets, float(scale))

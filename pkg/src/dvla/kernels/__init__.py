"""Numeric kernels behind the hot paths, with two interchangeable backends.

The numba backend compiles the loops with ``@njit(nogil=True, cache=True)`` so
busy-compute burns and batch math release the GIL; the numpy backend is a pure
numpy/python fallback with identical signatures and semantics.

Selection: env var ``DVLA_BACKEND`` = ``auto`` (default; numba when importable),
``numpy``, or ``numba`` (error if numba is unavailable).
"""

from __future__ import annotations

import os

from . import numpy_backend as _numpy_backend

_numba_import_error = None
try:
    from . import numba_backend as _numba_backend
except Exception as exc:  # pragma: no cover - environment dependent
    _numba_backend = None
    _numba_import_error = exc


def _select():
    choice = os.environ.get("DVLA_BACKEND", "auto").strip().lower()
    if choice in ("", "auto"):
        return _numba_backend if _numba_backend is not None else _numpy_backend
    if choice == "numpy":
        return _numpy_backend
    if choice == "numba":
        if _numba_backend is None:
            raise ImportError(
                f"DVLA_BACKEND=numba but the numba backend failed to import: "
                f"{_numba_import_error!r}"
            )
        return _numba_backend
    raise ValueError(f"DVLA_BACKEND must be auto|numpy|numba, got {choice!r}")


_impl = _select()
BACKEND = "numba" if _impl is _numba_backend else "numpy"
HAS_NUMBA = _numba_backend is not None

spin = _impl.spin
mlp_forward = _impl.mlp_forward
chunk_log_prob = _impl.chunk_log_prob
policy_backward = _impl.policy_backward
env_step_chunk = _impl.env_step_chunk
alloc_trace_run = _impl.alloc_trace_run
alloc_oracle_run = _impl.alloc_oracle_run

_warmed = False


def warmup():
    """Trigger one-time compilation of every kernel (no-op on numpy)."""
    global _warmed
    if _warmed:
        return
    import numpy as np

    spin(16)
    w1 = np.zeros((3, 4), dtype=np.float32)
    b1 = np.zeros(3, dtype=np.float32)
    w2 = np.zeros((2, 3), dtype=np.float32)
    b2 = np.zeros(2, dtype=np.float32)
    ls = np.zeros(2, dtype=np.float32)
    obs = np.zeros((2, 4), dtype=np.float32)
    act = np.zeros((2, 2), dtype=np.float32)
    means = mlp_forward(w1, b1, w2, b2, obs)
    chunk_log_prob(means, ls, act)
    out = np.zeros(3 * 4 + 3 + 2 * 3 + 2 + 2, dtype=np.float64)
    policy_backward(w1, b1, w2, b2, ls, obs, act, np.ones(2), out)
    pos = np.zeros((2, 2), dtype=np.float32)
    t = np.zeros(2, dtype=np.int64)
    env_step_chunk(pos, t, np.zeros((2, 3, 2), dtype=np.float32), 0.1, 3)
    n = 4
    is_alloc = np.array([1, 1, 0, 1], dtype=np.uint8)
    size = np.array([16, 16, 0, 16], dtype=np.int64)
    align = np.array([1, 8, 1, 1], dtype=np.int64)
    pick = np.zeros(n, dtype=np.uint64)
    ok = np.zeros(n, dtype=np.uint8)
    off = np.zeros(n, dtype=np.int64)
    alloc_trace_run(256, is_alloc, size, align, pick, ok, off)
    alloc_oracle_run(256, is_alloc, size, align, pick, ok.copy(), off.copy())
    _warmed = True

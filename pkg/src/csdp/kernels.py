"""Hot loops, backed by a compiled extension when one was built.

Set ``CSDP_PURE_PYTHON=1`` to force the pure-Python fallback. Both backends take
their randomness as explicit inputs, so they produce identical results.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("CSDP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def available_backends() -> dict:
    """Map of backend name to kernel module, for tests and benchmarks."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:
        return out
    out["cython"] = _compiled
    return out


def fisher_yates_draws(n: int, rng: np.random.Generator) -> np.ndarray:
    """Swap partners for a Fisher-Yates pass over ``n`` items (j_i uniform on [0, n-1-i])."""
    if n < 2:
        return np.zeros(0, dtype=np.int64)
    highs = np.arange(n, 1, -1, dtype=np.int64)
    return rng.integers(0, highs, dtype=np.int64)


def permutation(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random permutation of ``range(n)``."""
    perm = np.arange(n, dtype=np.int64)
    _impl.fisher_yates(perm, fisher_yates_draws(n, rng))
    return perm


def cover_sums(prev: np.ndarray, top: np.ndarray, node_values: np.ndarray) -> np.ndarray:
    """Running sums along the cover chain; see ``TreePlan.cover_chain``.

    ``node_values`` is (num_nodes,) or (num_nodes, dim); the result has one row per
    close time and the same trailing shape.
    """
    vals = np.asarray(node_values, dtype=np.float64)
    squeeze = vals.ndim == 1
    vals2 = np.ascontiguousarray(vals.reshape(len(vals), -1))
    out = np.empty((len(prev), vals2.shape[1]), dtype=np.float64)
    if len(prev):
        _impl.cover_sums(
            np.ascontiguousarray(prev, dtype=np.int64),
            np.ascontiguousarray(top, dtype=np.int64),
            vals2,
            out,
        )
    return out[:, 0] if squeeze else out

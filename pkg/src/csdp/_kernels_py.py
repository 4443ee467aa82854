"""Pure-Python versions of the compiled kernels in ``_kernels.pyx``."""
from __future__ import annotations

import numpy as np


def fisher_yates(perm: np.ndarray, draws: np.ndarray) -> None:
    n = len(perm)
    if n > 0 and len(draws) < n - 1:
        raise ValueError("not enough draws for permutation")
    p = perm.tolist()
    for i, j in enumerate(draws[: max(n - 1, 0)].tolist()):
        last = n - 1 - i
        p[last], p[j] = p[j], p[last]
    perm[:] = p


def cover_sums(prev: np.ndarray, top: np.ndarray, node_values: np.ndarray, out: np.ndarray) -> None:
    dim = node_values.shape[1]
    if dim == 1:
        vals = node_values[:, 0].tolist()
        acc: list[float] = []
        for p, v in zip(prev.tolist(), top.tolist()):
            acc.append(vals[v] if p < 0 else acc[p] + vals[v])
        out[:, 0] = acc
        return
    for i, (p, v) in enumerate(zip(prev.tolist(), top.tolist())):
        out[i] = node_values[v] if p < 0 else out[p] + node_values[v]

"""NumPy versions of the pairwise leave-one-out kernels.

Both functions take the distinct leave-one-out outputs ``out`` (K, d) and the
multiplicity ``w`` (K,) of each, and aggregate over ordered pairs (a, b).
"""

import numpy as np

_CHUNK = 512


def weighted_power_sum(out, w, p):
    """sum_{a,b} w_a w_b ||out_a - out_b||^p."""
    out = np.ascontiguousarray(out, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    total = 0.0
    for start in range(0, out.shape[0], _CHUNK):
        blk = out[start:start + _CHUNK]
        diff = blk[:, None, :] - out[None, :, :]
        dist = np.sqrt(np.einsum("abd,abd->ab", diff, diff))
        if p == 1.0:
            powered = dist
        else:
            powered = dist**p
        total += float(w[start:start + _CHUNK] @ powered @ w)
    return total


def weighted_max_dist(out, w):
    """Largest ||out_a - out_b|| over pairs with positive weight; returns (value, a, b)."""
    out = np.ascontiguousarray(out, dtype=float)
    live = np.flatnonzero(np.asarray(w) > 0)
    best, ba, bb = 0.0, 0, 0
    sub = out[live]
    for start in range(0, sub.shape[0], _CHUNK):
        blk = sub[start:start + _CHUNK]
        diff = blk[:, None, :] - sub[None, :, :]
        dist = np.einsum("abd,abd->ab", diff, diff)
        flat = int(np.argmax(dist))
        i, j = divmod(flat, dist.shape[1])
        if dist[i, j] > best:
            best, ba, bb = float(dist[i, j]), int(live[start + i]), int(live[j])
    return float(np.sqrt(best)), ba, bb

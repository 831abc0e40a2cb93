"""Rank-based merge and bottom-up merge sort over packed (distance, id) keys.

Worklists and neighbour lists order entries by ascending (distance, node id).
Both fields are packed into one uint64 (the float32 distance bit pattern in
the high half, the id in the low half), which makes the lexicographic order a
plain integer order: squared distances are non-negative, and the IEEE-754 bit
pattern of non-negative floats is monotone.  An all-ones key is the padding
sentinel and sorts after every real entry.

The merge places each element at (index in its own list) + (insertion index
in the other list), with the insertion index found by binary search; elements
of the first list precede equal elements of the second, so the produced
positions are always a permutation.  The sort builds sorted runs bottom-up,
doubling the run length each round through the same merge.  Both operations
are data-parallel per element and are evaluated here row-vectorized, so the
results are identical for any worker count.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError

SENTINEL = np.uint64(0xFFFFFFFFFFFFFFFF)
_ID_MASK = np.uint64(0xFFFFFFFF)


def pack_keys(dists: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Pack float32 distances and non-negative ids into sortable uint64 keys."""
    d = np.ascontiguousarray(dists, dtype=np.float32)
    high = d.view(np.uint32).astype(np.uint64) << np.uint64(32)
    return high | np.asarray(ids, dtype=np.uint64)


def unpack_keys(keys: np.ndarray):
    """Inverse of :func:`pack_keys`; returns (dists float32, ids int64)."""
    keys = np.asarray(keys, dtype=np.uint64)
    ids = (keys & _ID_MASK).astype(np.int64)
    dists = (keys >> np.uint64(32)).astype(np.uint32).view(np.float32)
    return dists, ids


def _row_bounds(x: np.ndarray, y: np.ndarray, side: str) -> np.ndarray:
    """Per-element binary-search bound of x's entries within the same row of y.

    ``side='left'`` counts y-entries strictly below x, ``side='right'`` counts
    those below or equal.  y rows must be sorted ascending.
    """
    n, wx = x.shape
    wy = y.shape[1]
    out_shape = (n, wx)
    if wy == 0 or wx == 0:
        return np.zeros(out_shape, dtype=np.int64)
    lo = np.zeros(out_shape, dtype=np.int64)
    hi = np.full(out_shape, wy, dtype=np.int64)
    rows = np.arange(n, dtype=np.int64)[:, None]
    for _ in range(int(wy).bit_length() + 1):
        mid = (lo + hi) >> 1
        yv = y[rows, np.minimum(mid, wy - 1)]
        go_right = (yv < x) if side == "left" else (yv <= x)
        go_right &= mid < hi
        lo = np.where(go_right, mid + 1, lo)
        hi = np.where(go_right, hi, np.minimum(mid, hi))
    return lo


def merge_rows(a_keys: np.ndarray, b_keys: np.ndarray,
               a_payload: np.ndarray | None = None):
    """Row-wise merge of two sorted key matrices into (n, wa+wb).

    ``a_payload`` (row-aligned with ``a_keys``) is scattered alongside; b-side
    payload slots are False, matching fresh unvisited worklist entries.
    """
    n, wa = a_keys.shape
    wb = b_keys.shape[1]
    rows = np.arange(n, dtype=np.int64)[:, None]
    pos_a = np.arange(wa, dtype=np.int64)[None, :] + _row_bounds(a_keys, b_keys, "left")
    pos_b = np.arange(wb, dtype=np.int64)[None, :] + _row_bounds(b_keys, a_keys, "right")
    merged = np.empty((n, wa + wb), dtype=np.uint64)
    merged[rows, pos_a] = a_keys
    merged[rows, pos_b] = b_keys
    if a_payload is None:
        return merged
    payload = np.zeros((n, wa + wb), dtype=a_payload.dtype)
    payload[rows, pos_a] = a_payload
    return merged, payload


def _next_pow2(value: int) -> int:
    return 1 if value <= 1 else 1 << (value - 1).bit_length()


def merge_sort_rows(keys: np.ndarray) -> np.ndarray:
    """Sort every row ascending via bottom-up run doubling with merge_rows.

    The row width must be a power of two; sentinel padding sorts to the tail.
    """
    n, w = keys.shape
    if w & (w - 1):
        raise ParameterError(f"row width {w} must be a power of two")
    out = keys.copy()
    run = 1
    while run < w:
        paired = out.reshape(n * (w // (2 * run)), 2 * run)
        merged = merge_rows(paired[:, :run], paired[:, run:])
        out = merged.reshape(n, w)
        run *= 2
    return out


def _check_sorted_pairs(items, name: str):
    keys = [(np.float32(d), int(i)) for i, d in items]
    if any(keys[j] > keys[j + 1] for j in range(len(keys) - 1)):
        raise ParameterError(f"{name} must be sorted by (dist, node_id)")


def parallel_merge(a, b) -> list[tuple[int, float]]:
    """Merge two (id, dist) lists, each sorted by ascending (dist, id).

    Duplicate ids across the inputs are both placed; entries of ``a`` precede
    equal entries of ``b``.
    """
    _check_sorted_pairs(a, "a")
    _check_sorted_pairs(b, "b")
    if not a:
        return [(int(i), np.float32(d)) for i, d in b]
    if not b:
        return [(int(i), np.float32(d)) for i, d in a]
    a_keys = pack_keys(np.array([d for _, d in a], dtype=np.float32),
                       np.array([i for i, _ in a], dtype=np.int64))[None, :]
    b_keys = pack_keys(np.array([d for _, d in b], dtype=np.float32),
                       np.array([i for i, _ in b], dtype=np.int64))[None, :]
    merged = merge_rows(a_keys, b_keys)[0]
    dists, ids = unpack_keys(merged)
    return [(int(i), d) for i, d in zip(ids, dists)]


def parallel_merge_sort(items) -> list[tuple[int, float]]:
    """Sort an (id, dist) list ascending by (dist, id) via run doubling."""
    items = list(items)
    if len(items) <= 1:
        return [(int(i), np.float32(d)) for i, d in items]
    width = _next_pow2(len(items))
    keys = np.full((1, width), SENTINEL, dtype=np.uint64)
    keys[0, :len(items)] = pack_keys(
        np.array([d for _, d in items], dtype=np.float32),
        np.array([i for i, _ in items], dtype=np.int64))
    ordered = merge_sort_rows(keys)[0, :len(items)]
    dists, ids = unpack_keys(ordered)
    return [(int(i), d) for i, d in zip(ids, dists)]

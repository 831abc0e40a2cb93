"""Per-query visited-set tracking with a two-hash Bloom filter.

Hashing is pinned bit-exactly: h1 is FNV-1a-64 over the node id's four
little-endian bytes, h2 is FNV-1a-64 over the same bytes with 0x5A prepended,
and each indexes bits[h % entries].  The filter admits false positives but
never false negatives, so a node filtered into the candidate stream once can
never re-enter it.

The paper-described layout is one bool per entry; this implementation packs
entries into uint64 words while keeping the same entry-count semantics.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError

FNV_OFFSET = np.uint64(0xCBF29CE484222325)
FNV_PRIME = np.uint64(0x100000001B3)
_H2_PREFIX = np.uint64(0x5A)
_BYTE = np.uint64(0xFF)
DEFAULT_ENTRIES = 399_887


def fnv1a_node_hash(node_ids: np.ndarray, prefixed: bool = False) -> np.ndarray:
    """Vectorized FNV-1a-64 over each id's 4 little-endian bytes."""
    ids = np.asarray(node_ids, dtype=np.uint64)
    h = np.full(ids.shape, FNV_OFFSET, dtype=np.uint64)
    if prefixed:
        h = (h ^ _H2_PREFIX) * FNV_PRIME
    for shift in (np.uint64(0), np.uint64(8), np.uint64(16), np.uint64(24)):
        h = (h ^ ((ids >> shift) & _BYTE)) * FNV_PRIME
    return h


def bit_positions(node_ids: np.ndarray, entries: int):
    """The two filter slots probed for each id."""
    z = np.uint64(entries)
    p1 = fnv1a_node_hash(node_ids) % z
    p2 = fnv1a_node_hash(node_ids, prefixed=True) % z
    return p1, p2


class BloomFilter:
    """Single-query filter over ``entries`` bit slots."""

    def __init__(self, entries: int = DEFAULT_ENTRIES):
        if entries < 1:
            raise ParameterError("bloom_entries must be positive")
        self.entries = int(entries)
        self._bits = np.zeros((self.entries + 63) // 64, dtype=np.uint64)

    def _slots(self, node_id: int):
        p1, p2 = bit_positions(np.asarray([node_id]), self.entries)
        return int(p1[0]), int(p2[0])

    def test(self, node_id: int) -> bool:
        p1, p2 = self._slots(node_id)
        bits = self._bits
        hit1 = bits[p1 >> 6] >> np.uint64(p1 & 63) & np.uint64(1)
        hit2 = bits[p2 >> 6] >> np.uint64(p2 & 63) & np.uint64(1)
        return bool(hit1 and hit2)

    def set(self, node_id: int) -> None:
        p1, p2 = self._slots(node_id)
        self._bits[p1 >> 6] |= np.uint64(1) << np.uint64(p1 & 63)
        self._bits[p2 >> 6] |= np.uint64(1) << np.uint64(p2 & 63)

    def test_and_set(self, node_id: int) -> bool:
        """Returns the pre-set membership answer, then marks the id."""
        seen = self.test(node_id)
        if not seen:
            self.set(node_id)
        return seen


class BloomFilterBank:
    """One packed filter per batch query, vectorized across probes.

    ``filter_and_set`` reproduces exact per-row sequential test-and-set
    semantics: rows where the batched evaluation could diverge (two fresh
    candidates of the same row touching one slot) are detected and replayed
    in order.
    """

    def __init__(self, count: int, entries: int = DEFAULT_ENTRIES):
        if entries < 1:
            raise ParameterError("bloom_entries must be positive")
        self.count = int(count)
        self.entries = int(entries)
        self.words = (self.entries + 63) // 64
        self.bits = np.zeros((self.count, self.words), dtype=np.uint64)

    def set_all_rows(self, node_id: int) -> None:
        """Mark one id in every filter (used for the shared entry point)."""
        p1, p2 = bit_positions(np.asarray([node_id]), self.entries)
        for p in (int(p1[0]), int(p2[0])):
            self.bits[:, p >> 6] |= np.uint64(1) << np.uint64(p & 63)

    def _test(self, rows: np.ndarray, pos: np.ndarray) -> np.ndarray:
        word = self.bits[rows, (pos >> np.uint64(6)).astype(np.int64)]
        return (word >> (pos & np.uint64(63))) & np.uint64(1) != 0

    def _set(self, rows: np.ndarray, pos: np.ndarray) -> None:
        np.bitwise_or.at(self.bits,
                         (rows, (pos >> np.uint64(6)).astype(np.int64)),
                         np.uint64(1) << (pos & np.uint64(63)))

    def _replay_row(self, row: int, ids: np.ndarray) -> np.ndarray:
        fresh = np.zeros(ids.size, dtype=bool)
        bits = self.bits[row]
        for j, node in enumerate(ids):
            p1, p2 = bit_positions(np.asarray([node]), self.entries)
            p1, p2 = int(p1[0]), int(p2[0])
            hit = (bits[p1 >> 6] >> np.uint64(p1 & 63) & np.uint64(1)) and \
                  (bits[p2 >> 6] >> np.uint64(p2 & 63) & np.uint64(1))
            if not hit:
                fresh[j] = True
                bits[p1 >> 6] |= np.uint64(1) << np.uint64(p1 & 63)
                bits[p2 >> 6] |= np.uint64(1) << np.uint64(p2 & 63)
        return fresh

    def filter_and_set(self, rows: np.ndarray, node_ids: np.ndarray) -> np.ndarray:
        """Test-and-set each (row, id) probe; equal rows are processed in
        order of appearance.  Returns a fresh/admitted mask."""
        rows = np.asarray(rows, dtype=np.int64)
        ids = np.asarray(node_ids)
        if ids.size == 0:
            return np.zeros(0, dtype=bool)
        p1, p2 = bit_positions(ids, self.entries)
        fresh = ~(self._test(rows, p1) & self._test(rows, p2))

        # Batched test-then-set diverges from sequential test-and-set only
        # when fresh candidates of one row share a slot; replay those rows.
        f_idx = np.flatnonzero(fresh)
        suspects = np.zeros(0, dtype=np.int64)
        if f_idx.size > 1:
            slot_keys = np.concatenate([
                rows[f_idx] * np.int64(self.entries) + p1[f_idx].astype(np.int64),
                rows[f_idx] * np.int64(self.entries) + p2[f_idx].astype(np.int64),
            ])
            owners = np.concatenate([f_idx, f_idx])
            order = np.argsort(slot_keys, kind="stable")
            slot_keys = slot_keys[order]
            owners = owners[order]
            dup = (slot_keys[1:] == slot_keys[:-1]) & (owners[1:] != owners[:-1])
            if dup.any():
                hit = np.unique(np.concatenate([owners[:-1][dup], owners[1:][dup]]))
                suspects = np.unique(rows[hit])
        if suspects.size == 0:
            self._set(rows[f_idx], p1[f_idx])
            self._set(rows[f_idx], p2[f_idx])
            return fresh

        calm = ~np.isin(rows, suspects)
        set_idx = f_idx[calm[f_idx]]
        self._set(rows[set_idx], p1[set_idx])
        self._set(rows[set_idx], p2[set_idx])
        for row in suspects:
            sel = np.flatnonzero(rows == row)
            fresh[sel] = self._replay_row(int(row), ids[sel])
        return fresh

"""Per-query search state and the scalar forms of the engine phases.

These mirror the batched engine one query at a time: the worklist is kept
sorted ascending by (distance, node id) and holds at most t entries, the
Bloom filter test-and-sets every id admitted to the candidate stream, and the
next candidate is picked eagerly from the freshly scored neighbours and the
first unvisited worklist entry before the sort/merge completes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bloom import BloomFilter
from .kernels import parallel_merge


@dataclass
class WorklistEntry:
    node_id: int
    dist: np.float32
    visited: bool = False

    def key(self):
        return (np.float32(self.dist), self.node_id)


@dataclass
class QueryState:
    query_id: int
    bloom: BloomFilter
    worklist: list[WorklistEntry] = field(default_factory=list)
    current_candidate: int | None = None
    visited_log: list[int] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def filter_neighbours(state: QueryState, neighbour_ids) -> list[int]:
    """Drop Bloom-positive ids, preserving order; set the filter for the rest.

    Test-and-set semantics: an id admitted earlier in the same list already
    marks the filter, so a repeat occurrence is dropped.
    """
    fresh = []
    for node in neighbour_ids:
        if not state.bloom.test_and_set(int(node)):
            fresh.append(int(node))
    return fresh


def first_unvisited(state: QueryState) -> WorklistEntry | None:
    for entry in state.worklist:
        if not entry.visited:
            return entry
    return None


def eager_next_candidate(state: QueryState, new_nbr_dists) -> int | None:
    """Next candidate before sort+merge: the better of the nearest fresh
    neighbour and the first unvisited worklist entry; None when both are
    absent (the query converges this iteration)."""
    best: tuple | None = None
    for node, dist in new_nbr_dists:
        key = (np.float32(dist), int(node))
        if best is None or key < best:
            best = key
    head = first_unvisited(state)
    if head is not None:
        key = head.key()
        if best is None or key < best:
            best = key
    return None if best is None else best[1]


def update_worklist(state: QueryState, sorted_new, t: int) -> None:
    """Merge scored fresh neighbours into the worklist, keep the t nearest.

    Duplicate node ids keep the earlier (flag-preserving) copy; surviving
    entries keep their visited flags and fresh entries start unvisited.
    """
    merged = parallel_merge(
        [(e.node_id, e.dist) for e in state.worklist], list(sorted_new))
    old = {e.node_id: e for e in state.worklist}
    out: list[WorklistEntry] = []
    seen: set[int] = set()
    for node, dist in merged:
        if node in seen:
            continue
        seen.add(node)
        prior = old.get(node)
        kept_is_old = prior is not None and np.float32(prior.dist) == np.float32(dist)
        out.append(WorklistEntry(node, np.float32(dist),
                                 prior.visited if kept_is_old else False))
        if len(out) == t:
            break
    state.worklist = out

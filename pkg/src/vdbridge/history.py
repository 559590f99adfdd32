"""Bounded ring of past snapshots with change sets and source locations."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .diffing import ChangeSet
from .graph import ObjectGraph, SourceLocation


class HistoryRangeError(IndexError):
    """Requested index is outside the stored history."""


@dataclass(frozen=True)
class HistoryEntry:
    """One snapshot: graph, changes versus the previous entry, and origin.

    The entry's position in the store is its index (0 = current).
    """

    graph: ObjectGraph
    changes: ChangeSet
    location: SourceLocation
    step_seq: int


class HistoryStore:
    """Drop-oldest snapshot ring; capacity 0 disables storage entirely."""

    def __init__(self, capacity: int):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self._capacity = capacity
        self._entries: deque[HistoryEntry] = deque(maxlen=capacity)
        self._step_seq = 0

    @property
    def capacity(self) -> int:
        return self._capacity

    def __len__(self) -> int:
        return len(self._entries)

    def push(self, graph: ObjectGraph, changes: ChangeSet, location: SourceLocation) -> HistoryEntry:
        """Insert the newest snapshot at index 0; returns it either way.

        The entry comes back even when capacity is 0 so the caller can
        keep broadcasting with history switched off.
        """
        self._step_seq += 1
        entry = HistoryEntry(graph=graph, changes=changes, location=location, step_seq=self._step_seq)
        if self._capacity > 0:
            self._entries.appendleft(entry)
        return entry

    def get(self, index: int) -> HistoryEntry:
        if index < 0 or index >= len(self._entries):
            raise HistoryRangeError(f"history index {index} out of range (length {len(self._entries)})")
        return self._entries[index]

    def replace_current(self, entry: HistoryEntry) -> None:
        """Swap the index-0 entry after a lazy expansion amended it.

        Historical entries are frozen; only the current one may be
        replaced, and only by an entry for the same step.
        """
        if not self._entries:
            return
        if self._entries[0].step_seq != entry.step_seq:
            raise ValueError("replace_current must keep the current step_seq")
        self._entries[0] = entry

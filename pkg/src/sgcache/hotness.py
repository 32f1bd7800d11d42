"""Hybrid hotness tracking.

One access bit per object, kept only for set-groups inside the hotness
window (the oldest configured fraction of the on-flash pool), combined with
index-cache residency: an object is hot only if its bit is set AND the
filter page covering its (group, offset) is currently cache-resident.
Periodic cooling clears every tracked bit whose page is not resident, so
only recency-backed hotness survives.
"""

from __future__ import annotations

from typing import Sequence

from .index import PbfgIndex


class CoolingClock:
    """Fires once each time `period_bytes` of cache writes accumulate."""

    def __init__(self, period_bytes: int):
        if period_bytes <= 0:
            raise ValueError("cooling period must be positive")
        self.period_bytes = period_bytes
        self.accumulated = 0

    def add(self, nbytes: int) -> bool:
        self.accumulated += nbytes
        if self.accumulated >= self.period_bytes:
            self.accumulated = 0
            return True
        return False


class HotnessTracker:
    def __init__(self, window_fraction: float, group_size: int, index: PbfgIndex):
        self.window_fraction = window_fraction
        self.group_size = group_size
        self.index = index
        # sg_seq -> offset -> slot bitmask; allocated only inside the window
        self._bits: dict[int, dict[int, int]] = {}
        # sg_seq -> object slots allocated (1 bit per object)
        self._window: dict[int, int] = {}

    # -- window management ----------------------------------------------------

    def sync_window(self, pool: Sequence[tuple[int, int]]) -> None:
        """Admit set-groups that aged into the window.

        `pool` lists live on-flash set-groups oldest first as
        (sequence, object count) pairs. Membership only grows here; eviction
        removes via drop_sg.
        """
        target = int(self.window_fraction * len(pool))
        for seq, objects in pool[:target]:
            if seq not in self._window:
                self._window[seq] = objects
                self._bits[seq] = {}

    def drop_sg(self, sg_seq: int) -> None:
        self._window.pop(sg_seq, None)
        self._bits.pop(sg_seq, None)

    def in_window(self, sg_seq: int) -> bool:
        return sg_seq in self._window

    # -- tracking ----------------------------------------------------------------

    def mark_access(self, sg_seq: int, offset: int, slot: int) -> bool:
        """Set the object's bit if its set-group is inside the window."""
        per_offset = self._bits.get(sg_seq)
        if per_offset is None:
            return False
        per_offset[offset] = per_offset.get(offset, 0) | (1 << slot)
        return True

    def is_hot(self, sg_seq: int, offset: int, slot: int) -> bool:
        """Bit set AND the covering filter page is cache-resident."""
        per_offset = self._bits.get(sg_seq)
        if per_offset is None:
            return False
        mask = per_offset.get(offset, 0)
        if not (mask >> slot) & 1:
            return False
        return self.index.page_resident(sg_seq // self.group_size, offset)

    def cool(self) -> int:
        """Clear bits whose filter page is not resident; returns bits cleared."""
        cleared = 0
        for seq, per_offset in self._bits.items():
            group = seq // self.group_size
            for offset in list(per_offset):
                if not self.index.page_resident(group, offset):
                    cleared += per_offset[offset].bit_count()
                    del per_offset[offset]
        return cleared

    # -- accounting ----------------------------------------------------------------

    @property
    def allocated_bits(self) -> int:
        return sum(self._window.values())

"""Approximate object index: packed per-set bloom filter groups.

Every (set-group, intra-SG offset) pair owns one fixed-size bloom filter,
sized for the configured false-positive rate at the per-set design load.
Filters are built in an in-memory buffer while their set-group accepts
inserts and become write-once at flush. When all members of an index group
(G consecutive set-groups) have flushed, the group's filters are packed
page-aligned and appended to dedicated index-pool zones: page ``j`` of a
group holds the G filters for intra-SG offset ``j``, in flush order,
zero-padded to the page size.

Queries probe, for the key's offset, the buffered filters plus one page per
on-flash group; pages are fetched through a FIFO in-memory cache. A liveness
bitmap masks set-groups that were evicted before their group's index pages
became reclaimable.

Index page layout: ``filter_bytes = ceil(m / 8)`` bytes per filter,
little-endian bit order (bit i lives in byte i // 8 at bit i % 8), G filters
ordered by ascending set-group sequence, then zeros.

Concurrency contract: queries may run concurrently with each other;
recording into one filter and cache admission/eviction must be serialized.
Implementation is single-threaded.
"""

from __future__ import annotations

from collections import OrderedDict, deque
from dataclasses import dataclass

from .core import EngineConfig, KeyDigest
from .errors import ImmutableFilter, PoolExhausted
from .flash import FlashAddress, FlashDevice


def pack_index_page(filters: list[int], filter_bytes: int, page_size: int) -> bytes:
    parts = [f.to_bytes(filter_bytes, "little") for f in filters]
    blob = b"".join(parts)
    return blob + b"\x00" * (page_size - len(blob))


def unpack_index_page(data: bytes, group_size: int, filter_bytes: int) -> list[int]:
    return [int.from_bytes(data[i * filter_bytes:(i + 1) * filter_bytes], "little")
            for i in range(group_size)]


@dataclass
class _FlashGroup:
    zones: tuple[int, ...]
    # page j lives at zones[j // pages_per_zone], page j % pages_per_zone


class PbfgIndex:
    def __init__(self, config: EngineConfig, device: FlashDevice, index_zones: list[int]):
        self.config = config
        self.device = device
        self._free_zones: deque[int] = deque(index_zones)
        geo = device.geometry
        self._pages_per_zone = geo.pages_per_zone
        self._zones_per_group = -(-config.sets_per_sg // geo.pages_per_zone)

        self._buffer: dict[int, list[int]] = {}      # sg_seq -> per-offset filters
        self._sealed: set[int] = set()               # flushed, group not packed yet
        self._groups: dict[int, _FlashGroup] = {}    # packed groups, ascending id
        self._live: set[int] = set()                 # flushed and not evicted
        self._cache: OrderedDict[tuple[int, int], list[int]] = OrderedDict()

        groups_at_capacity = -(-config.sg_count_on_flash // config.sgs_per_index_group)
        total_index_pages = groups_at_capacity * config.sets_per_sg
        self.cache_capacity = int(config.cached_pbfg_fraction * total_index_pages)

        self.pages_written = 0
        self.pages_read = 0

    # -- build path -----------------------------------------------------------

    def register_sg(self, sg_seq: int) -> None:
        """Start buffering filters for a new in-memory set-group."""
        self._buffer[sg_seq] = [0] * self.config.sets_per_sg

    def record_object(self, sg_seq: int, intra_sg_offset: int, probe_mask: int) -> None:
        """Set the key's probe bits in the owning filter."""
        if sg_seq in self._sealed or sg_seq not in self._buffer:
            raise ImmutableFilter(f"set-group {sg_seq} already flushed")
        self._buffer[sg_seq][intra_sg_offset] |= probe_mask

    def seal_sg(self, sg_seq: int) -> int:
        """Mark a set-group flushed; packs its group when it completes.

        Returns the number of index pages written (0 unless this seal
        completed a group).
        """
        if sg_seq not in self._buffer:
            raise ImmutableFilter(f"set-group {sg_seq} unknown to the index")
        self._sealed.add(sg_seq)
        self._live.add(sg_seq)
        group = sg_seq // self.config.sgs_per_index_group
        members = self._group_members(group)
        if all(m in self._sealed for m in members):
            return self.flush_group(group)
        return 0

    def _group_members(self, group: int) -> range:
        g = self.config.sgs_per_index_group
        return range(group * g, (group + 1) * g)

    def flush_group(self, group: int) -> int:
        """Pack one group's filters page-aligned into index-pool zones."""
        cfg = self.config
        if len(self._free_zones) < self._zones_per_group:
            raise PoolExhausted("no index zones left for group flush")
        zones = tuple(self._free_zones.popleft() for _ in range(self._zones_per_group))
        members = list(self._group_members(group))
        for offset in range(cfg.sets_per_sg):
            filters = [self._buffer[m][offset] for m in members]
            data = pack_index_page(filters, cfg.filter_bytes, cfg.page_size)
            self.device.append(zones[offset // self._pages_per_zone], data)
        for m in members:
            del self._buffer[m]
            self._sealed.discard(m)
        self._groups[group] = _FlashGroup(zones=zones)
        self.pages_written += cfg.sets_per_sg
        return cfg.sets_per_sg

    # -- query path -----------------------------------------------------------

    def _page_addr(self, group: int, offset: int) -> FlashAddress:
        zones = self._groups[group].zones
        return FlashAddress(zones[offset // self._pages_per_zone],
                            offset % self._pages_per_zone)

    def _fetch_page(self, group: int, offset: int) -> tuple[list[int], int]:
        key = (group, offset)
        filters = self._cache.get(key)
        if filters is not None:
            return filters, 0
        data = self.device.read(self._page_addr(group, offset))
        filters = unpack_index_page(data, self.config.sgs_per_index_group,
                                    self.config.filter_bytes)
        self.pages_read += 1
        self._admit(key, filters)
        return filters, 1

    def _admit(self, key: tuple[int, int], filters: list[int]) -> None:
        if self.cache_capacity <= 0:
            return
        while len(self._cache) >= self.cache_capacity:
            self._cache.popitem(last=False)
        self._cache[key] = filters

    def page_resident(self, group: int, offset: int) -> bool:
        return (group, offset) in self._cache

    def query_candidates(self, digest: KeyDigest) -> tuple[list[int], int]:
        """Candidate set-group sequences for a key, newest first."""
        return self.query(digest.intra_sg_offset, digest.mask)

    def query(self, offset: int, mask: int) -> tuple[list[int], int]:
        """Candidates for one (offset, probe mask), newest first.

        Probes buffered filters (in-memory and not-yet-packed set-groups) at
        no I/O cost, then one page per packed group, reading it from the
        index pool and admitting it to the cache when absent. Returns the
        candidates and the number of index pages read.
        """
        g = self.config.sgs_per_index_group
        out = []
        for seq, filters in self._buffer.items():
            if seq in self._sealed and seq not in self._live:
                continue
            if filters[offset] & mask == mask:
                out.append(seq)
        pages_read = 0
        for group in self._groups:
            filters, read = self._fetch_page(group, offset)
            pages_read += read
            base = group * g
            for i in range(g):
                seq = base + i
                if (filters[i] & mask) == mask and seq in self._live:
                    out.append(seq)
        out.sort(reverse=True)
        return out, pages_read

    # -- lifecycle -------------------------------------------------------------

    def is_live(self, sg_seq: int) -> bool:
        return sg_seq in self._live

    def invalidate_sg(self, sg_seq: int) -> None:
        """Drop an evicted set-group; reclaims its group once all members die."""
        self._live.discard(sg_seq)
        group = sg_seq // self.config.sgs_per_index_group
        if group not in self._groups:
            return
        if any(m in self._live for m in self._group_members(group)):
            return
        for zone in self._groups[group].zones:
            self.device.reset(zone)
            self._free_zones.append(zone)
        del self._groups[group]
        for key in [k for k in self._cache if k[0] == group]:
            del self._cache[key]

    # -- accounting -------------------------------------------------------------

    @property
    def resident_filter_bits(self) -> int:
        return len(self._cache) * self.config.sgs_per_index_group * self.config.filter_bits

    @property
    def buffer_capacity_bits(self) -> int:
        """Allocated size of the in-memory index-group buffer.

        Sized for one full group plus the in-memory set-groups, independent
        of instantaneous occupancy.
        """
        cfg = self.config
        sgs = cfg.sgs_per_index_group + cfg.in_memory_sg_count
        return sgs * cfg.sets_per_sg * cfg.filter_bits

    @property
    def resident_pages(self) -> int:
        return len(self._cache)

"""The set-group cache engine.

Objects are buffered in a small circular queue of in-memory set-groups; an
object lands in the set at its hash offset in the set-group nearest the
queue front that has room. Flushing the front set-group is delayed (so the
short-term skew of hashed keys evens out) until either the rear set-group is
nearly full or the front has absorbed a configured count of set-full events,
each absorbed by evicting the oldest entries of the contended set. Flushed
set-groups form a FIFO on-flash pool; evicting the oldest one writes its
still-hot objects back into the set-group being flushed. Lookups check
memory first, then resolve candidates through the packed filter-group index
newest-first, verifying by full-key comparison.

Write-amplification accounting: ``logical_new_bytes`` counts every object
admitted through insert, including those early-evicted while a flush was
held, and never counts writeback re-insertions. ``wa_data`` is flushed
set-group bytes over logical bytes; ``wa_with_index`` adds index-pool
writes.

Concurrency contract: lookups may run concurrently with each other and with
a background flush; insert and flush-trigger evaluation are serialized;
per-set mutation is serialized per set. This implementation is the required
deterministic single-threaded mode: given a fixed config and seed, all
metrics are bit-reproducible.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field

from .core import (OBJECT_HEADER_BYTES, EngineConfig, SetPage, decode_set,
                   encode_set, object_size, probe_mask, probe_positions)
from .errors import BadKey, ConfigError, ObjectTooLarge, PoolExhausted
from .flash import FlashAddress, FlashDevice
from .hotness import CoolingClock, HotnessTracker
from .index import PbfgIndex

ACCEPTING = "accepting"
FLUSHING = "flushing"


@dataclass
class AdmissionResult:
    stored: bool
    replaced: bool
    early_evicted_victims: int = 0
    flushed_sg: int | None = None


@dataclass
class LookupResult:
    value: bytes | None
    index_pages_read: int = 0
    candidate_sets_read: int = 0
    false_positive_reads: int = 0

    @property
    def hit(self) -> bool:
        return self.value is not None


@dataclass
class EvictionResult:
    writeback_count: int
    dropped_count: int


@dataclass
class WaLedger:
    flash_bytes_written_sg_data: int = 0
    flash_bytes_written_index: int = 0
    logical_new_bytes: int = 0

    @property
    def wa_data(self) -> float | None:
        if self.logical_new_bytes == 0 or self.flash_bytes_written_sg_data == 0:
            return None
        return self.flash_bytes_written_sg_data / self.logical_new_bytes

    @property
    def wa_with_index(self) -> float | None:
        if self.logical_new_bytes == 0 or self.flash_bytes_written_sg_data == 0:
            return None
        total = self.flash_bytes_written_sg_data + self.flash_bytes_written_index
        return total / self.logical_new_bytes


class _MemSg:
    """Mutable in-memory set-group."""

    __slots__ = ("seq", "sets", "fill_total", "hold_counter", "state")

    def __init__(self, seq: int, sets_per_sg: int):
        self.seq = seq
        self.sets = [SetPage() for _ in range(sets_per_sg)]
        self.fill_total = 0
        self.hold_counter = 0
        self.state = ACCEPTING


class _FlashSg:
    """Immutable on-flash set-group descriptor."""

    __slots__ = ("seq", "zones", "entries_per_set", "entry_total",
                 "insert_fill", "total_fill")

    def __init__(self, seq, zones, entries_per_set, insert_fill, total_fill):
        self.seq = seq
        self.zones = zones
        self.entries_per_set = entries_per_set
        self.entry_total = sum(entries_per_set)
        self.insert_fill = insert_fill
        self.total_fill = total_fill


class SetGroupCache:
    def __init__(self, device: FlashDevice, config: EngineConfig):
        geo = device.geometry
        if geo.page_size != config.page_size:
            raise ConfigError("device.page_size: must match engine page_size")
        self.device = device
        self.config = config

        zones_per_sg = -(-config.sets_per_sg // geo.pages_per_zone)
        groups_alive = -(-config.sg_count_on_flash // config.sgs_per_index_group) + 1
        data_zones = config.sg_count_on_flash * zones_per_sg
        index_zones = groups_alive * zones_per_sg
        if geo.zone_count < data_zones + index_zones:
            raise ConfigError(
                f"device.zone_count: need >= {data_zones + index_zones} zones "
                f"({data_zones} data + {index_zones} index), have {geo.zone_count}")
        self._zones_per_sg = zones_per_sg
        self._free_data_zones: deque[int] = deque(range(data_zones))
        self.index = PbfgIndex(config, device,
                               list(range(data_zones, data_zones + index_zones)))
        self.hotness = HotnessTracker(config.hotness_window_fraction,
                                      config.sgs_per_index_group, self.index)
        pool_bytes = config.sg_count_on_flash * config.sg_bytes
        self.clock = CoolingClock(max(1, int(config.cooling_period_fraction * pool_bytes)))
        self.ledger = WaLedger()

        self._next_seq = 0
        self._mem: deque[_MemSg] = deque()
        for _ in range(config.in_memory_sg_count):
            self._mem.append(self._new_mem_sg())
        self._pool: deque[_FlashSg] = deque()
        self._pool_by_seq: dict[int, _FlashSg] = {}

        # lookup statistics
        self.lookups = 0
        self.lookup_misses = 0
        self.index_pages_read = 0
        self.candidate_sets_read = 0
        self.false_positive_reads = 0
        self.lookups_touching_pool = 0
        # eviction / flush history
        self.fill_history: list[tuple[int, float, float]] = []
        self.evicted_seqs: list[int] = []
        self.writeback_objects = 0
        self.dropped_objects = 0
        self.cooling_fires = 0

        self._seed_bytes = config.rng_seed.to_bytes(8, "little", signed=False)
        self._hash_cache: dict[bytes, tuple[int, int]] = {}

    # -- internals -------------------------------------------------------------

    def _new_mem_sg(self) -> _MemSg:
        sg = _MemSg(self._next_seq, self.config.sets_per_sg)
        self._next_seq += 1
        self.index.register_sg(sg.seq)
        return sg

    def _hash(self, key: bytes) -> tuple[int, int]:
        """(intra_sg_offset, probe mask) for a key, memoized."""
        cached = self._hash_cache.get(key)
        if cached is not None:
            return cached
        digest = int.from_bytes(
            hashlib.blake2b(key, digest_size=8, key=self._seed_bytes).digest(),
            "little")
        cfg = self.config
        entry = (digest % cfg.sets_per_sg,
                 probe_mask(probe_positions(digest, cfg.filter_bits, cfg.probe_count)))
        if len(self._hash_cache) >= (1 << 18):
            self._hash_cache.clear()
        self._hash_cache[key] = entry
        return entry

    def _set_addr(self, sg: _FlashSg, offset: int) -> FlashAddress:
        ppz = self.device.geometry.pages_per_zone
        return FlashAddress(sg.zones[offset // ppz], offset % ppz)

    # -- operations --------------------------------------------------------------

    def insert(self, key: bytes, value: bytes) -> AdmissionResult:
        """Admit one object; may trigger early eviction and a flush."""
        if not key:
            raise BadKey("empty key")
        size = object_size(key, value)
        payload = self.config.set_payload_capacity
        if size > payload:
            raise ObjectTooLarge(f"{size} B object exceeds {payload} B set payload")
        offset, mask = self._hash(key)

        replaced = False
        victims = 0
        flushed = None
        target: _MemSg | None = None

        # replace in place wherever the key already lives
        for sg in self._mem:
            page = sg.sets[offset]
            old = page.get(key)
            if old is None:
                continue
            delta = len(value) - len(old)
            if page.fill_bytes + delta <= payload:
                page.put(key, value)
                sg.fill_total += delta
                replaced = True
                target = sg
            else:
                page.remove(key)
                sg.fill_total -= object_size(key, old)
            break

        if target is None:
            for sg in self._mem:
                page = sg.sets[offset]
                if page.fill_bytes + size <= payload:
                    page.put(key, value)
                    sg.fill_total += size
                    target = sg
                    break

        if target is None:
            front = self._mem[0]
            if 0 < self.config.flush_threshold and front.hold_counter < self.config.flush_threshold:
                # hold the flush: make room in the front's contended set
                page = front.sets[offset]
                while page.fill_bytes + size > payload:
                    vk, vv = page.pop_oldest()
                    front.fill_total -= object_size(vk, vv)
                    victims += 1
                page.put(key, value)
                front.fill_total += size
                front.hold_counter += 1
                target = front
            else:
                flushed = self._flush_front()
                target = self._mem[-1]
                target.sets[offset].put(key, value)
                target.fill_total += size

        # drop stale copies from the other in-memory set-groups
        for sg in self._mem:
            if sg is target:
                continue
            old = sg.sets[offset].remove(key)
            if old is not None:
                sg.fill_total -= object_size(key, old)

        self.index.record_object(target.seq, offset, mask)
        self.ledger.logical_new_bytes += size

        auto = self.maybe_flush_front()
        if auto is not None:
            flushed = auto
        return AdmissionResult(stored=True, replaced=replaced,
                               early_evicted_victims=victims, flushed_sg=flushed)

    def maybe_flush_front(self) -> int | None:
        """Flush the front set-group if either delay trigger has tripped."""
        rear = self._mem[-1]
        front = self._mem[0]
        rear_full = rear.fill_total >= self.config.rear_full_fraction * self.config.sg_payload_capacity
        held_out = 0 < self.config.flush_threshold <= front.hold_counter
        if rear_full or held_out:
            return self._flush_front()
        return None

    def _flush_front(self) -> int:
        """Flush the front set-group to flash, evicting the oldest if needed."""
        cfg = self.config
        front = self._mem[0]
        front.state = FLUSHING
        insert_fill = front.fill_total

        if len(self._pool) >= cfg.sg_count_on_flash:
            self.evict_oldest_sg()

        if len(self._free_data_zones) < self._zones_per_sg:
            raise PoolExhausted("no data zones left for set-group flush")
        zones = tuple(self._free_data_zones.popleft() for _ in range(self._zones_per_sg))
        ppz = self.device.geometry.pages_per_zone
        for j, page in enumerate(front.sets):
            self.device.append(zones[j // ppz], encode_set(page, cfg.page_size))
        self.ledger.flash_bytes_written_sg_data += cfg.sg_bytes

        fsg = _FlashSg(front.seq, zones, [len(p) for p in front.sets],
                       insert_fill, front.fill_total)
        self._pool.append(fsg)
        self._pool_by_seq[fsg.seq] = fsg
        self.fill_history.append((front.seq,
                                  insert_fill / cfg.sg_bytes,
                                  front.fill_total / cfg.sg_bytes))

        index_pages = self.index.seal_sg(front.seq)
        self.ledger.flash_bytes_written_index += index_pages * cfg.page_size

        self.hotness.sync_window([(s.seq, s.entry_total) for s in self._pool])
        if self.clock.add(cfg.sg_bytes + index_pages * cfg.page_size):
            self.cooling_fires += 1
            self.hotness.cool()

        self._mem.popleft()
        self._mem.append(self._new_mem_sg())
        return fsg.seq

    def evict_oldest_sg(self) -> EvictionResult:
        """Evict the pool's oldest set-group, writing hot objects back.

        The front in-memory set-group (in flushing state) receives the
        writebacks; objects that are cold, already present, or out of room
        are dropped. Writeback bytes are never added to logical_new_bytes.
        """
        cfg = self.config
        victim = self._pool.popleft()
        del self._pool_by_seq[victim.seq]
        dest = self._mem[0]
        payload = cfg.set_payload_capacity
        wrote = dropped = 0

        if cfg.writeback_enabled:
            for j, entry_count in enumerate(victim.entries_per_set):
                if entry_count == 0:
                    continue
                page = decode_set(self.device.read(self._set_addr(victim, j)))
                dest_page = dest.sets[j]
                for slot, (k, v) in enumerate(page.entries.items()):
                    if not self.hotness.is_hot(victim.seq, j, slot):
                        dropped += 1
                        continue
                    size = object_size(k, v)
                    if (dest_page.get(k) is not None
                            or dest_page.fill_bytes + size > payload
                            or any(sg.sets[j].get(k) is not None
                                   for sg in self._mem if sg is not dest)):
                        dropped += 1
                        continue
                    dest_page.put(k, v)
                    dest.fill_total += size
                    _, mask = self._hash(k)
                    self.index.record_object(dest.seq, j, mask)
                    wrote += 1
        else:
            dropped = victim.entry_total

        for zone in victim.zones:
            self.device.reset(zone)
            self._free_data_zones.append(zone)
        self.index.invalidate_sg(victim.seq)
        self.hotness.drop_sg(victim.seq)
        self.evicted_seqs.append(victim.seq)
        self.writeback_objects += wrote
        self.dropped_objects += dropped
        return EvictionResult(writeback_count=wrote, dropped_count=dropped)

    def lookup(self, key: bytes) -> LookupResult:
        """Hierarchical search: memory, then flash candidates newest-first."""
        if not key:
            raise BadKey("empty key")
        offset, mask = self._hash(key)
        self.lookups += 1

        for sg in self._mem:
            value = sg.sets[offset].get(key)
            if value is not None:
                return LookupResult(value)

        candidates, pages_read = self.index.query(offset, mask)
        self.index_pages_read += pages_read
        if pages_read:
            self.lookups_touching_pool += 1

        sets_read = 0
        false_positives = 0
        mem_seqs = {sg.seq for sg in self._mem}
        for seq in candidates:
            if seq in mem_seqs:
                continue
            fsg = self._pool_by_seq.get(seq)
            if fsg is None:
                continue
            page = decode_set(self.device.read(self._set_addr(fsg, offset)))
            sets_read += 1
            value = page.get(key)
            if value is not None:
                slot = list(page.entries).index(key)
                self.hotness.mark_access(seq, offset, slot)
                self.candidate_sets_read += sets_read
                self.false_positive_reads += false_positives
                return LookupResult(value, pages_read, sets_read, false_positives)
            false_positives += 1

        self.lookup_misses += 1
        self.candidate_sets_read += sets_read
        self.false_positive_reads += false_positives
        return LookupResult(None, pages_read, sets_read, false_positives)

    # -- metrics --------------------------------------------------------------

    def live_objects(self) -> int:
        mem = sum(len(page) for sg in self._mem for page in sg.sets)
        flash = sum(sg.entry_total for sg in self._pool)
        return mem + flash

    def mean_fill_rate(self, last: int | None = None, insert_path: bool = False) -> float | None:
        history = self.fill_history[-last:] if last else self.fill_history
        if not history:
            return None
        idx = 1 if insert_path else 2
        return sum(h[idx] for h in history) / len(history)

    def metrics_snapshot(self) -> dict:
        cfg = self.config
        live = self.live_objects()
        bits = None
        bits_filters = bits_hotness = bits_buffer = None
        if live > 0:
            bits_filters = self.index.resident_filter_bits / live
            bits_hotness = self.hotness.allocated_bits / live
            bits_buffer = self.index.buffer_capacity_bits / live
            bits = bits_filters + bits_hotness + bits_buffer
        lookups = self.lookups
        return {
            "wa_data": self.ledger.wa_data,
            "wa_with_index": self.ledger.wa_with_index,
            "mean_sg_fill_rate": self.mean_fill_rate(),
            "mean_insert_fill_rate": self.mean_fill_rate(insert_path=True),
            "miss_ratio": (self.lookup_misses / lookups) if lookups else None,
            "reads_per_lookup": ((self.index_pages_read + self.candidate_sets_read) / lookups)
                                if lookups else None,
            "index_pool_read_fraction": (self.lookups_touching_pool / lookups)
                                        if lookups else None,
            "bits_per_object": bits,
            "bits_per_object_cached_filters": bits_filters,
            "bits_per_object_hotness": bits_hotness,
            "bits_per_object_buffer": bits_buffer,
            "live_objects": live,
            "flushed_sgs": len(self.fill_history),
            "pool_size": len(self._pool),
            "dlwa": self.device.counters.dlwa,
        }

"""The three comparison cache engines.

``LogCache`` appends buffered objects to a FIFO flash log and keeps an exact
in-memory key-to-address map: near-ideal write amplification, expensive
index. ``SetAssocCache`` hashes keys into page-sized sets and rewrites the
whole set per insert on a page-mapped FTL with configurable
over-provisioning: tiny index, heavy write amplification. ``HierCache``
models the hierarchical designs: a log front tier whose hash buckets batch
objects per destination set, passive migration when the log wraps, and a
set tier reclaimed either by merged rewrites (fairywren mode, where garbage
collection and log-to-set migration fold into one host write) or by verbatim
device copies (kangaroo mode).

The hierarchical engine exists to measure the migration model: it tracks
object sizes, not contents, unless ``track_contents`` is set, and its
``MigrationLedger`` records passive/active set writes and their newly
written bytes, from which L2SWA(P), L2SWA(A) and p are derived.

All three count I/O through the shared flash device, so DLWA falls out of
the device counters: 1.0 exactly for the zoned log/hierarchical engines,
above 1.0 for the FTL-backed set-associative engine and for kangaroo-mode
garbage collection.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import OBJECT_HEADER_BYTES, PAGE_HEADER_BYTES, SetPage, decode_set, encode_set
from .errors import BadKey, ConfigError, ObjectTooLarge
from .flash import FlashAddress, FlashDevice, GreedyFtl


def _digest64(key: bytes, seed_bytes: bytes) -> int:
    return int.from_bytes(
        hashlib.blake2b(key, digest_size=8, key=seed_bytes).digest(), "little")


@dataclass
class MigrationLedger:
    passive_set_writes: int = 0
    passive_new_bytes: int = 0
    active_set_writes: int = 0
    active_new_bytes: int = 0

    @property
    def total_set_writes(self) -> int:
        return self.passive_set_writes + self.active_set_writes

    @property
    def passive_fraction(self) -> float | None:
        total = self.total_set_writes
        return self.passive_set_writes / total if total else None

    def l2swa_passive(self, page_size: int) -> float | None:
        if self.passive_new_bytes == 0:
            return None
        return page_size * self.passive_set_writes / self.passive_new_bytes

    def l2swa_active(self, page_size: int) -> float | None:
        if self.active_new_bytes == 0:
            return None
        return page_size * self.active_set_writes / self.active_new_bytes

    def l2swa_overall(self, page_size: int) -> float | None:
        new = self.passive_new_bytes + self.active_new_bytes
        if new == 0:
            return None
        return page_size * self.total_set_writes / new


class LogCache:
    """Log-structured cache: batched appends, exact per-object index."""

    def __init__(self, device: FlashDevice, rng_seed: int = 0):
        self.device = device
        self.page_size = device.geometry.page_size
        self.payload = self.page_size - PAGE_HEADER_BYTES
        self._seed_bytes = rng_seed.to_bytes(8, "little")
        self._buffer = SetPage()
        self._map: dict[bytes, FlashAddress] = {}
        self._zone_keys: dict[int, list[bytes]] = {}
        self._ring: deque[int] = deque()
        self._free: deque[int] = deque(range(device.geometry.zone_count))
        self._open: int | None = None
        self.logical_new_bytes = 0
        self.lookups = 0
        self.misses = 0
        self.page_fill_sum = 0.0
        self.pages_flushed = 0

    def _flush_buffer(self) -> None:
        if len(self._buffer) == 0:
            return
        zone = self._open
        if zone is None or self.device.write_pointer(zone) >= self.device.geometry.pages_per_zone:
            if not self._free:
                self._evict_oldest_zone()
            zone = self._free.popleft()
            self._ring.append(zone)
            self._zone_keys[zone] = []
            self._open = zone
        addr = self.device.append(zone, encode_set(self._buffer, self.page_size))
        base = addr.page
        keys = self._zone_keys[zone]
        for key in self._buffer.entries:
            self._map[key] = FlashAddress(zone, base)
            keys.append(key)
        self.page_fill_sum += self._buffer.fill_bytes / self.page_size
        self.pages_flushed += 1
        self._buffer = SetPage()

    def _evict_oldest_zone(self) -> None:
        zone = self._ring.popleft()
        for key in self._zone_keys.pop(zone):
            addr = self._map.get(key)
            if addr is not None and addr.zone == zone:
                del self._map[key]
        self.device.reset(zone)
        self._free.append(zone)
        if self._open == zone:
            self._open = None

    def insert(self, key: bytes, value: bytes) -> None:
        if not key:
            raise BadKey("empty key")
        size = len(key) + len(value) + OBJECT_HEADER_BYTES
        if size > self.payload:
            raise ObjectTooLarge(f"{size} B object exceeds log page payload")
        if self._buffer.fill_bytes + size > self.payload:
            self._flush_buffer()
        self._buffer.put(key, value)
        self.logical_new_bytes += size

    def lookup(self, key: bytes) -> bytes | None:
        self.lookups += 1
        value = self._buffer.get(key)
        if value is not None:
            return value
        addr = self._map.get(key)
        if addr is not None:
            page = decode_set(self.device.read(addr))
            value = page.get(key)
            if value is not None:
                return value
        self.misses += 1
        return None

    def snapshot(self) -> dict:
        host_bytes = self.device.counters.host_pages_written * self.page_size
        return {
            "wa_data": (host_bytes / self.logical_new_bytes) if self.logical_new_bytes else None,
            "wa_with_index": (host_bytes / self.logical_new_bytes) if self.logical_new_bytes else None,
            "mean_sg_fill_rate": (self.page_fill_sum / self.pages_flushed)
                                 if self.pages_flushed else None,
            "miss_ratio": (self.misses / self.lookups) if self.lookups else None,
            "dlwa": self.device.counters.dlwa,
            "live_objects": len(self._map) + len(self._buffer),
        }


class SetAssocCache:
    """Set-associative cache: read-modify-write of one page per insert."""

    def __init__(self, device: FlashDevice, op_fraction: float = 0.5,
                 rng_seed: int = 0, gc_watermark: int = 2):
        self.device = device
        self.page_size = device.geometry.page_size
        self.payload = self.page_size - PAGE_HEADER_BYTES
        self.ftl = GreedyFtl(device, op_fraction, gc_watermark)
        self.sets_total = self.ftl.logical_pages
        if self.sets_total < 1:
            raise ConfigError("device.op_fraction: no logical sets left")
        self._seed_bytes = rng_seed.to_bytes(8, "little")
        self.logical_new_bytes = 0
        self.inserts = 0
        self.lookups = 0
        self.misses = 0

    def _set_of(self, key: bytes) -> int:
        return _digest64(key, self._seed_bytes) % self.sets_total

    def insert(self, key: bytes, value: bytes) -> None:
        if not key:
            raise BadKey("empty key")
        size = len(key) + len(value) + OBJECT_HEADER_BYTES
        if size > self.payload:
            raise ObjectTooLarge(f"{size} B object exceeds set payload")
        set_id = self._set_of(key)
        if self.ftl.is_mapped(set_id):
            page = decode_set(self.ftl.read(set_id))
        else:
            page = SetPage()
        page.put(key, value)
        while page.fill_bytes > self.payload:
            page.pop_oldest()
        self.ftl.write(set_id, encode_set(page, self.page_size))
        self.logical_new_bytes += size
        self.inserts += 1

    def lookup(self, key: bytes) -> bytes | None:
        self.lookups += 1
        set_id = self._set_of(key)
        if self.ftl.is_mapped(set_id):
            page = decode_set(self.ftl.read(set_id))
            value = page.get(key)
            if value is not None:
                return value
        self.misses += 1
        return None

    @property
    def alwa(self) -> float | None:
        if self.logical_new_bytes == 0:
            return None
        return self.device.counters.host_pages_written * self.page_size / self.logical_new_bytes

    def snapshot(self) -> dict:
        return {
            "wa_data": self.alwa,
            "wa_with_index": self.alwa,
            "miss_ratio": (self.misses / self.lookups) if self.lookups else None,
            "dlwa": self.device.counters.dlwa,
        }


_OBJ_SET = 0
_OBJ_SIZE = 1
_OBJ_PAGE = 2
_OBJ_ALIVE = 3
_OBJ_KEY = 4


class HierCache:
    """Hierarchical cache: log front tier feeding a set-associative back tier.

    mode "hier_fairywren": garbage collection merges each valid set with its
    pending log objects in a single host rewrite, and the hash table has one
    bucket per cold set (half the usable sets). mode "hier_kangaroo": GC
    copies valid set pages verbatim inside the device, and every usable set
    has a bucket.
    """

    def __init__(self, device: FlashDevice, *, log_fraction: float = 0.05,
                 op_fraction: float = 0.05, mode: str = "hier_fairywren",
                 rng_seed: int = 0, gc_watermark: int = 2,
                 track_contents: bool = False):
        if mode not in ("hier_fairywren", "hier_kangaroo"):
            raise ConfigError(f"engine: unknown hierarchical mode {mode!r}")
        if not 0.0 < log_fraction < 1.0:
            raise ConfigError("hier.log_fraction: must be in (0, 1)")
        if not 0.0 <= op_fraction < 1.0:
            raise ConfigError("hier.op_fraction: must be in [0, 1)")
        geo = device.geometry
        self.device = device
        self.mode = mode
        self.page_size = geo.page_size
        self.payload = self.page_size - PAGE_HEADER_BYTES
        self.pages_per_zone = geo.pages_per_zone
        self.gc_watermark = gc_watermark
        self.track_contents = track_contents
        self._seed_bytes = rng_seed.to_bytes(8, "little")
        self._filler = b"\x00" * self.page_size

        log_zone_count = max(1, round(log_fraction * geo.zone_count))
        if log_zone_count + gc_watermark + 2 >= geo.zone_count:
            raise ConfigError("device.zone_count: too few zones for the set tier")
        self.log_zone_count = log_zone_count
        self.log_pages = log_zone_count * geo.pages_per_zone
        tier_zone_ids = list(range(log_zone_count, geo.zone_count))
        self.set_pages = len(tier_zone_ids) * geo.pages_per_zone
        usable = (1.0 - op_fraction) * self.set_pages
        if mode == "hier_fairywren":
            # hot/cold halving: one bucket per cold set, and the cold sets
            # occupy half the tier's physical zones (the hot half is not
            # modeled); the cold partition keeps the nominal OP headroom
            self.buckets_total = max(1, int(usable) // 2)
            set_zone_ids = tier_zone_ids[:(len(tier_zone_ids) + 1) // 2]
        else:
            self.buckets_total = max(1, int(usable))
            set_zone_ids = tier_zone_ids
        if len(set_zone_ids) <= gc_watermark + 2:
            raise ConfigError("device.zone_count: too few zones for the set tier")
        self.op_fraction = op_fraction

        # front tier
        self._free_log_zones: deque[int] = deque(range(log_zone_count))
        self._log_ring: deque[int] = deque()
        self._open_log: int | None = None
        self._log_page_objs: dict[int, list] = {}      # global page id -> objects
        self._buf: list = []
        self._buf_fill = 0

        # back tier
        self._buckets: list[list] = [[] for _ in range(self.buckets_total)]
        self._set_addr: dict[int, int] = {}            # set id -> global page id
        self._page_owner: dict[int, int] = {}          # global page id -> set id
        self._set_fill: dict[int, int] = {}
        self._zone_valid = [0] * geo.zone_count
        self._free_set_zones: deque[int] = deque(set_zone_ids)
        self._open_set: int | None = None
        self._gc_open_set: int | None = None
        self._set_zone_ids = set_zone_ids

        # content tracking (lookups) -- optional
        self._pending_by_key: dict[bytes, list] = {}
        self._set_contents: dict[int, dict[bytes, int]] = {}

        self.ledger = MigrationLedger()
        self.logical_new_bytes = 0
        self.log_pages_written = 0
        self.log_fill_sum = 0.0
        self.lookups = 0
        self.misses = 0
        self.gc_passes = 0

    # -- address helpers ------------------------------------------------------

    def _gpage(self, addr: FlashAddress) -> int:
        return addr.zone * self.pages_per_zone + addr.page

    def _addr(self, gpage: int) -> FlashAddress:
        return FlashAddress(gpage // self.pages_per_zone, gpage % self.pages_per_zone)

    # -- front tier -------------------------------------------------------------

    def insert(self, key: bytes, value_or_size) -> None:
        """Admit one object; value bytes are not retained, only sizes."""
        if not key:
            raise BadKey("empty key")
        vsize = value_or_size if isinstance(value_or_size, int) else len(value_or_size)
        size = len(key) + vsize + OBJECT_HEADER_BYTES
        if size > self.payload:
            raise ObjectTooLarge(f"{size} B object exceeds page payload")
        if self._buf_fill + size > self.payload:
            self._flush_log_page()
        set_id = _digest64(key, self._seed_bytes) % self.buckets_total
        obj = [set_id, size, -1, True]
        if self.track_contents:
            obj.append(key)
            stale = self._pending_by_key.get(key)
            if stale is not None:
                stale[_OBJ_ALIVE] = False
            self._pending_by_key[key] = obj
        self._buf.append(obj)
        self._buf_fill += size
        self.logical_new_bytes += size

    def _flush_log_page(self) -> None:
        if not self._buf:
            return
        zone = self._open_log
        if zone is None or self.device.write_pointer(zone) >= self.pages_per_zone:
            if not self._free_log_zones:
                self._drain_log()
            zone = self._free_log_zones.popleft()
            self._log_ring.append(zone)
            self._open_log = zone
        addr = self.device.append(zone, self._filler)
        gpage = self._gpage(addr)
        for obj in self._buf:
            obj[_OBJ_PAGE] = gpage
            self._buckets[obj[_OBJ_SET]].append(obj)
        self._log_page_objs[gpage] = self._buf
        self.log_fill_sum += self._buf_fill / self.page_size
        self.log_pages_written += 1
        self._buf = []
        self._buf_fill = 0

    def _drain_log(self) -> None:
        """Passive migration: the write pointer reached the oldest live zone.

        The oldest zone's pages are evicted in order; each surviving
        object's page is fetched and its whole pending bucket is rewritten
        into the target set. The zone is then erased and recycled, keeping
        the log a circular buffer.
        """
        zone = self._log_ring.popleft()
        base = zone * self.pages_per_zone
        for p in range(self.device.write_pointer(zone)):
            gpage = base + p
            objs = self._log_page_objs.pop(gpage, [])
            live = [o for o in objs if o[_OBJ_ALIVE]]
            if not live:
                continue
            self.device.read(self._addr(gpage))  # fetch the evicted log page
            for obj in live:
                if obj[_OBJ_ALIVE]:
                    self._flush_bucket(obj[_OBJ_SET], passive=True)
        self.device.reset(zone)
        self._free_log_zones.append(zone)
        if self._open_log == zone:
            self._open_log = None

    # -- back tier ---------------------------------------------------------------

    def _flush_bucket(self, set_id: int, passive: bool) -> None:
        bucket = self._buckets[set_id]
        batch = [o for o in bucket if o[_OBJ_ALIVE]]
        self._buckets[set_id] = []
        self._rewrite_set(set_id, batch, passive)

    def _rewrite_set(self, set_id: int, batch: list, passive: bool,
                     during_gc: bool = False) -> None:
        """Read-modify-write one set, merging a batch of pending objects.

        GC-driven rewrites append to the dedicated GC destination zone so
        reclamation can never recurse into itself.
        """
        old_gpage = self._set_addr.get(set_id)
        if old_gpage is not None:
            self.device.read(self._addr(old_gpage))
            del self._page_owner[old_gpage]
            self._zone_valid[old_gpage // self.pages_per_zone] -= 1
        batch_bytes = 0
        for obj in batch:
            batch_bytes += obj[_OBJ_SIZE]
            obj[_OBJ_ALIVE] = False
            if self.track_contents:
                key = obj[_OBJ_KEY]
                if self._pending_by_key.get(key) is obj:
                    del self._pending_by_key[key]
        batch_bytes = min(batch_bytes, self.payload)

        if self.track_contents:
            contents = self._set_contents.setdefault(set_id, {})
            for obj in batch:
                key = obj[_OBJ_KEY]
                contents.pop(key, None)
                contents[key] = obj[_OBJ_SIZE]
            fill = sum(contents.values())
            while fill > self.payload:
                oldest = next(iter(contents))
                fill -= contents.pop(oldest)
            self._set_fill[set_id] = fill
        else:
            fill = min(self.payload, self._set_fill.get(set_id, 0) + batch_bytes)
            self._set_fill[set_id] = fill

        zone = self._gc_dest_zone() if during_gc else self._alloc_set_zone()
        addr = self.device.append(zone, self._filler)
        gpage = self._gpage(addr)
        self._set_addr[set_id] = gpage
        self._page_owner[gpage] = set_id
        self._zone_valid[zone] += 1
        if passive:
            self.ledger.passive_set_writes += 1
            self.ledger.passive_new_bytes += batch_bytes
        else:
            self.ledger.active_set_writes += 1
            self.ledger.active_new_bytes += batch_bytes

    def _alloc_set_zone(self) -> int:
        zone = self._open_set
        if zone is not None and self.device.write_pointer(zone) < self.pages_per_zone:
            return zone
        while len(self._free_set_zones) <= self.gc_watermark:
            self._gc_set_tier()
        self._open_set = self._free_set_zones.popleft()
        return self._open_set

    def _gc_dest_zone(self) -> int:
        zone = self._gc_open_set
        if zone is not None and self.device.write_pointer(zone) < self.pages_per_zone:
            return zone
        self._gc_open_set = self._free_set_zones.popleft()
        return self._gc_open_set

    def _pick_gc_victim(self) -> int:
        valid = np.fromiter((self._zone_valid[z] for z in self._set_zone_ids),
                            dtype=np.int64, count=len(self._set_zone_ids))
        order = np.argsort(valid, kind="stable")
        for idx in order:
            zone = self._set_zone_ids[idx]
            if zone in (self._open_set, self._gc_open_set):
                continue
            if self.device.write_pointer(zone) < self.pages_per_zone:
                continue  # not yet sealed
            if self._zone_valid[zone] >= self.pages_per_zone:
                break  # all remaining candidates are fully valid: no progress
            return zone
        raise ConfigError("device.zone_count: set tier cannot reclaim any zone")

    def _gc_set_tier(self) -> None:
        victim = self._pick_gc_victim()
        base = victim * self.pages_per_zone
        self.gc_passes += 1
        for p in range(self.pages_per_zone):
            gpage = base + p
            set_id = self._page_owner.get(gpage)
            if set_id is None or self._set_addr.get(set_id) != gpage:
                continue
            if self.mode == "hier_fairywren":
                # merged rewrite: pull the pending bucket in with the rewrite
                bucket = self._buckets[set_id]
                batch = [o for o in bucket if o[_OBJ_ALIVE]]
                self._buckets[set_id] = []
                for log_page in {o[_OBJ_PAGE] for o in batch if o[_OBJ_PAGE] >= 0}:
                    self.device.read(self._addr(log_page))
                self._rewrite_set(set_id, batch, passive=False, during_gc=True)
            else:
                dest = self._gc_dest_zone()
                new_addr = self.device.relocate(self._addr(gpage), dest)
                new_gpage = self._gpage(new_addr)
                del self._page_owner[gpage]
                self._zone_valid[victim] -= 1
                self._set_addr[set_id] = new_gpage
                self._page_owner[new_gpage] = set_id
                self._zone_valid[dest] += 1
        self.device.reset(victim)
        self._zone_valid[victim] = 0
        self._free_set_zones.append(victim)
        if self._open_set == victim:
            self._open_set = None

    # -- read path -----------------------------------------------------------------

    def lookup(self, key: bytes) -> bool:
        """Hit/miss check; available only with content tracking."""
        if not self.track_contents:
            raise ConfigError("workload.get_fraction: hierarchical engine runs "
                              "without content tracking; use a set-only stream")
        self.lookups += 1
        obj = self._pending_by_key.get(key)
        if obj is not None and obj[_OBJ_ALIVE]:
            if obj[_OBJ_PAGE] >= 0:
                self.device.read(self._addr(obj[_OBJ_PAGE]))
            return True
        set_id = _digest64(key, self._seed_bytes) % self.buckets_total
        contents = self._set_contents.get(set_id)
        if contents and key in contents:
            gpage = self._set_addr.get(set_id)
            if gpage is not None:
                self.device.read(self._addr(gpage))
            return True
        self.misses += 1
        return False

    # -- metrics ----------------------------------------------------------------------

    def snapshot(self) -> dict:
        host_bytes = self.device.counters.host_pages_written * self.page_size
        led = self.ledger
        return {
            "wa_data": (host_bytes / self.logical_new_bytes) if self.logical_new_bytes else None,
            "wa_with_index": (host_bytes / self.logical_new_bytes) if self.logical_new_bytes else None,
            "mean_sg_fill_rate": (self.log_fill_sum / self.log_pages_written)
                                 if self.log_pages_written else None,
            "miss_ratio": (self.misses / self.lookups) if self.lookups else None,
            "dlwa": self.device.counters.dlwa,
            "l2swa_p": led.l2swa_passive(self.page_size),
            "l2swa_a": led.l2swa_active(self.page_size),
            "l2swa": led.l2swa_overall(self.page_size),
            "p_passive": led.passive_fraction,
            "passive_set_writes": led.passive_set_writes,
            "active_set_writes": led.active_set_writes,
            "passive_new_bytes": led.passive_new_bytes,
            "active_new_bytes": led.active_new_bytes,
        }

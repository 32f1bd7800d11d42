"""Simulated log-structured flash device.

Two modes are provided. ``FlashDevice`` is the zoned, append-only primitive:
writes land at a zone's write pointer, reads hit previously written pages, and
space is reclaimed only by whole-zone resets. ``GreedyFtl`` layers a
page-mapped translation table with greedy garbage collection on top of it and
emulates a conventional SSD with configurable over-provisioning; only the
set-associative baseline uses it.

All I/O is accounted in ``IoCounters``. In zoned mode nothing ever increments
``device_copied_pages``, so DLWA is exactly 1.0 by construction.

Concurrency contract: appends to distinct zones may run concurrently, appends
to one zone must be serialized by the caller, and reads are safe alongside
appends to other pages. This implementation is single-threaded and
deterministic; the contract documents what callers may assume, not what the
simulator parallelizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import BadAddress, DeviceFullDeadlock, UnwrittenPage, ZoneFull


@dataclass(frozen=True)
class DeviceGeometry:
    """Physical shape of the simulated device."""

    page_size: int = 4096
    pages_per_zone: int = 4096
    zone_count: int = 128

    def __post_init__(self):
        if self.page_size <= 0 or self.pages_per_zone <= 0 or self.zone_count <= 0:
            raise ValueError("geometry fields must be positive")

    @property
    def zone_bytes(self) -> int:
        return self.page_size * self.pages_per_zone

    @property
    def total_pages(self) -> int:
        return self.pages_per_zone * self.zone_count

    @property
    def capacity_bytes(self) -> int:
        return self.zone_bytes * self.zone_count


class FlashAddress(NamedTuple):
    zone: int
    page: int


@dataclass
class IoCounters:
    """Monotone I/O accounting.

    DLWA = (host_pages_written + device_copied_pages) / host_pages_written.
    """

    host_pages_written: int = 0
    device_copied_pages: int = 0
    pages_read: int = 0
    zones_erased: int = 0

    @property
    def dlwa(self) -> float | None:
        if self.host_pages_written == 0:
            return None
        return (self.host_pages_written + self.device_copied_pages) / self.host_pages_written


class FlashDevice:
    """Append-only zoned page store.

    Each zone is a list of page payloads; the write pointer is the list
    length, and a reset truncates the list. The set of readable pages in a
    zone is therefore exactly ``[0, write_pointer)`` since the last reset.
    """

    def __init__(self, geometry: DeviceGeometry):
        self.geometry = geometry
        self.counters = IoCounters()
        self._zones: list[list[bytes]] = [[] for _ in range(geometry.zone_count)]

    # -- zone state ---------------------------------------------------------

    def _check_zone(self, zone: int) -> None:
        if not 0 <= zone < self.geometry.zone_count:
            raise BadAddress(f"zone {zone} out of range")

    def write_pointer(self, zone: int) -> int:
        self._check_zone(zone)
        return len(self._zones[zone])

    def zone_state(self, zone: int) -> str:
        wp = self.write_pointer(zone)
        if wp == 0:
            return "empty"
        if wp == self.geometry.pages_per_zone:
            return "full"
        return "open"

    # -- I/O ----------------------------------------------------------------

    def append(self, zone: int, data: bytes) -> FlashAddress:
        """Append one page at the zone's write pointer (host write)."""
        self._check_zone(zone)
        pages = self._zones[zone]
        if len(pages) >= self.geometry.pages_per_zone:
            raise ZoneFull(f"zone {zone} is full")
        if len(data) != self.geometry.page_size:
            raise ValueError(f"page data must be exactly {self.geometry.page_size} bytes")
        addr = FlashAddress(zone, len(pages))
        pages.append(data)
        self.counters.host_pages_written += 1
        return addr

    def read(self, addr: FlashAddress) -> bytes:
        zone, page = addr
        self._check_zone(zone)
        pages = self._zones[zone]
        if not 0 <= page < self.geometry.pages_per_zone:
            raise BadAddress(f"page {page} out of range")
        if page >= len(pages):
            raise UnwrittenPage(f"page ({zone},{page}) not written since last reset")
        self.counters.pages_read += 1
        return pages[page]

    def reset(self, zone: int) -> None:
        """Erase a zone; all its pages become unreadable."""
        self._check_zone(zone)
        self._zones[zone] = []
        self.counters.zones_erased += 1

    def relocate(self, addr: FlashAddress, dest_zone: int) -> FlashAddress:
        """Device-internal copy of a live page (GC traffic, not a host write)."""
        zone, page = addr
        self._check_zone(zone)
        self._check_zone(dest_zone)
        pages = self._zones[zone]
        if page >= len(pages):
            raise UnwrittenPage(f"page ({zone},{page}) not written since last reset")
        dest = self._zones[dest_zone]
        if len(dest) >= self.geometry.pages_per_zone:
            raise ZoneFull(f"zone {dest_zone} is full")
        new_addr = FlashAddress(dest_zone, len(dest))
        dest.append(pages[page])
        self.counters.device_copied_pages += 1
        return new_addr


class GreedyFtl:
    """Page-mapped FTL with greedy garbage collection over a FlashDevice.

    Exposes a logical page space of ``(1 - op_fraction) * total_pages``; the
    remainder is over-provisioning headroom. Host overwrites invalidate the
    previous physical page; when the count of empty zones drops below the
    watermark, the non-open zone with the fewest valid pages is reclaimed:
    its valid pages are relocated (counted as device copies) and the zone is
    reset. Host writes and GC relocations use separate open zones so that GC
    cannot starve itself.
    """

    def __init__(self, device: FlashDevice, op_fraction: float, gc_watermark: int = 2):
        if not 0.0 < op_fraction < 1.0:
            raise ValueError("op_fraction must be in (0, 1)")
        if gc_watermark < 1:
            raise ValueError("gc_watermark must be >= 1")
        self.device = device
        self.op_fraction = op_fraction
        self.gc_watermark = gc_watermark
        geo = device.geometry
        self.logical_pages = int(geo.total_pages * (1.0 - op_fraction))
        self._map: dict[int, FlashAddress] = {}
        self._owner: dict[FlashAddress, int] = {}
        self._zone_valid = [0] * geo.zone_count
        self._empty = set(range(geo.zone_count))
        self._host_zone: int | None = None
        self._gc_zone: int | None = None

    # -- helpers ------------------------------------------------------------

    def _take_empty_zone(self) -> int:
        zone = min(self._empty)
        self._empty.discard(zone)
        return zone

    def _zone_has_room(self, zone: int | None) -> bool:
        return (zone is not None
                and self.device.write_pointer(zone) < self.device.geometry.pages_per_zone)

    def _ensure_host_zone(self) -> int:
        if not self._zone_has_room(self._host_zone):
            self._host_zone = None
            while len(self._empty) <= self.gc_watermark:
                self.collect_garbage()
            self._host_zone = self._take_empty_zone()
        return self._host_zone

    def _ensure_gc_zone(self) -> int:
        if not self._zone_has_room(self._gc_zone):
            if not self._empty:
                raise DeviceFullDeadlock("no destination zone for GC relocation")
            self._gc_zone = self._take_empty_zone()
        return self._gc_zone

    def _invalidate(self, addr: FlashAddress) -> None:
        self._owner.pop(addr, None)
        self._zone_valid[addr.zone] -= 1

    # -- host interface -----------------------------------------------------

    def write(self, lpn: int, data: bytes) -> FlashAddress:
        if not 0 <= lpn < self.logical_pages:
            raise BadAddress(f"logical page {lpn} out of range")
        zone = self._ensure_host_zone()
        addr = self.device.append(zone, data)
        old = self._map.get(lpn)
        if old is not None:
            self._invalidate(old)
        self._map[lpn] = addr
        self._owner[addr] = lpn
        self._zone_valid[zone] += 1
        return addr

    def read(self, lpn: int) -> bytes:
        addr = self._map.get(lpn)
        if addr is None:
            raise UnwrittenPage(f"logical page {lpn} is unmapped")
        return self.device.read(addr)

    def is_mapped(self, lpn: int) -> bool:
        return lpn in self._map

    # -- garbage collection --------------------------------------------------

    def collect_garbage(self) -> int:
        """Reclaim the zone with the fewest valid pages; returns pages copied."""
        geo = self.device.geometry
        if not self._zone_has_room(self._host_zone):
            self._host_zone = None
        if not self._zone_has_room(self._gc_zone):
            self._gc_zone = None
        victim = None
        victim_valid = geo.pages_per_zone + 1
        for z in range(geo.zone_count):
            if z == self._host_zone or z == self._gc_zone or z in self._empty:
                continue
            if self._zone_valid[z] < victim_valid:
                victim, victim_valid = z, self._zone_valid[z]
        if victim is None or victim_valid >= geo.pages_per_zone:
            raise DeviceFullDeadlock("no reclaimable zone; OP headroom exhausted")

        copied = 0
        if victim_valid > 0:
            wp = self.device.write_pointer(victim)
            for page in range(wp):
                addr = FlashAddress(victim, page)
                lpn = self._owner.get(addr)
                if lpn is None:
                    continue
                dest = self._ensure_gc_zone()
                new_addr = self.device.relocate(addr, dest)
                del self._owner[addr]
                self._map[lpn] = new_addr
                self._owner[new_addr] = lpn
                self._zone_valid[dest] += 1
                copied += 1
        self.device.reset(victim)
        self._zone_valid[victim] = 0
        self._empty.add(victim)
        return copied

"""Shared domain types: object records, key hashing, set-page codec, config.

The on-page set layout (documented here because decode tests must be
portable):

    page   := magic:u16  entry_count:u16  entry*  zero-padding
    entry  := key_len:u16  value_len:u32  key  value

All integers are little-endian. ``fill_bytes`` counts entry bytes including
the 6-byte per-entry header but not the 4-byte page header, so the payload
capacity of a set is ``page_size - 4``.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

from . import analytic
from .errors import BadKey, MalformedSet

OBJECT_HEADER_BYTES = 6     # u16 key length + u32 value length
PAGE_HEADER_BYTES = 4       # u16 magic + u16 entry count
SET_PAGE_MAGIC = 0x5347

_ENTRY_HDR = struct.Struct("<HI")
_PAGE_HDR = struct.Struct("<HH")


def object_size(key: bytes, value: bytes) -> int:
    return len(key) + len(value) + OBJECT_HEADER_BYTES


@dataclass(frozen=True)
class ObjectRecord:
    """A cached key/value pair; the unit of insertion, lookup and eviction."""

    key: bytes
    value: bytes

    def __post_init__(self):
        if not self.key:
            raise BadKey("object key must be non-empty")

    @property
    def total_size(self) -> int:
        return object_size(self.key, self.value)


@dataclass(frozen=True)
class KeyDigest:
    """Deterministic key hash plus everything derived from it.

    ``intra_sg_offset`` is the set index the key maps to in every set-group
    it is ever written to. ``probes`` are the filter bit positions, derived
    by double hashing from the two 32-bit halves of the digest; ``mask`` is
    the same probes as one OR-ed integer for single-op filter tests.
    """

    digest: int
    intra_sg_offset: int
    probes: tuple[int, ...]
    mask: int


def _digest64(key: bytes, seed: int) -> int:
    h = hashlib.blake2b(key, digest_size=8,
                        key=seed.to_bytes(8, "little", signed=False))
    return int.from_bytes(h.digest(), "little")


def probe_positions(digest: int, m_bits: int, k: int) -> tuple[int, ...]:
    """Probe positions via enhanced double hashing from the digest's halves.

    The second hash drifts by the loop index each step; without the drift
    the probes form an arithmetic progression mod m, which measurably
    inflates the false-positive rate at small filter sizes.
    """
    h1 = digest & 0xFFFFFFFF
    h2 = (digest >> 32) | 1
    out = []
    for i in range(k):
        out.append(h1 % m_bits)
        h1 = (h1 + h2) & 0xFFFFFFFFFFFFFFFF
        h2 = (h2 + i + 1) & 0xFFFFFFFFFFFFFFFF
    return tuple(out)


def probe_mask(positions: tuple[int, ...]) -> int:
    mask = 0
    for p in positions:
        mask |= 1 << p
    return mask


def hash_key(key: bytes, config: "EngineConfig") -> KeyDigest:
    """Hash a key to its digest, intra-SG offset and filter probes."""
    if not key:
        raise BadKey("empty key")
    digest = _digest64(key, config.rng_seed)
    positions = probe_positions(digest, config.filter_bits, config.probe_count)
    return KeyDigest(
        digest=digest,
        intra_sg_offset=digest % config.sets_per_sg,
        probes=positions,
        mask=probe_mask(positions),
    )


class SetPage:
    """A flash-page-sized container of objects sharing one hash offset.

    Entries are kept in insertion order; re-inserting a present key replaces
    the value in place, so no two entries share a key. ``fill_bytes`` tracks
    occupied payload including per-entry headers.
    """

    __slots__ = ("entries", "fill_bytes")

    def __init__(self):
        self.entries: dict[bytes, bytes] = {}
        self.fill_bytes = 0

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, SetPage) and list(self.entries.items()) == list(other.entries.items())

    def get(self, key: bytes) -> bytes | None:
        return self.entries.get(key)

    def put(self, key: bytes, value: bytes) -> bool:
        """Insert or replace; returns True when an existing key was replaced."""
        old = self.entries.get(key)
        if old is not None:
            self.fill_bytes += len(value) - len(old)
            self.entries[key] = value
            return True
        self.entries[key] = value
        self.fill_bytes += object_size(key, value)
        return False

    def remove(self, key: bytes) -> bytes | None:
        value = self.entries.pop(key, None)
        if value is not None:
            self.fill_bytes -= object_size(key, value)
        return value

    def pop_oldest(self) -> tuple[bytes, bytes]:
        key = next(iter(self.entries))
        value = self.entries.pop(key)
        self.fill_bytes -= object_size(key, value)
        return key, value


def encode_set(page: SetPage, page_size: int) -> bytes:
    """Serialize a set into one zero-padded flash page."""
    if page.fill_bytes > page_size - PAGE_HEADER_BYTES:
        raise ValueError("set overflows page payload")
    parts = [_PAGE_HDR.pack(SET_PAGE_MAGIC, len(page.entries))]
    for key, value in page.entries.items():
        parts.append(_ENTRY_HDR.pack(len(key), len(value)))
        parts.append(key)
        parts.append(value)
    blob = b"".join(parts)
    return blob + b"\x00" * (page_size - len(blob))


def decode_set(data: bytes) -> SetPage:
    """Inverse of encode_set; raises MalformedSet on foreign bytes."""
    if len(data) < PAGE_HEADER_BYTES:
        raise MalformedSet("short page")
    magic, count = _PAGE_HDR.unpack_from(data, 0)
    if magic != SET_PAGE_MAGIC:
        raise MalformedSet("bad magic")
    page = SetPage()
    pos = PAGE_HEADER_BYTES
    for _ in range(count):
        if pos + OBJECT_HEADER_BYTES > len(data):
            raise MalformedSet("truncated entry header")
        key_len, value_len = _ENTRY_HDR.unpack_from(data, pos)
        pos += OBJECT_HEADER_BYTES
        if key_len == 0:
            raise MalformedSet("empty key")
        if pos + key_len + value_len > len(data):
            raise MalformedSet("entry overruns page")
        key = data[pos:pos + key_len]
        pos += key_len
        value = data[pos:pos + value_len]
        pos += value_len
        if key in page.entries:
            raise MalformedSet("duplicate key")
        page.put(key, value)
    return page


@dataclass(frozen=True)
class EngineConfig:
    """Tunables of the set-group engine.

    Defaults follow the reference configuration: 4 KB sets, 0.1% filter
    false-positive rate, 50 set-groups per index group, two in-memory
    set-groups, a count-based flush threshold of 4096 held set-full events,
    half the filter pages cached, hotness tracked over the oldest 30% of the
    pool, and cooling every 10% of cache capacity written. ``sets_per_sg``
    is scaled down from production values for desk-scale runs.
    """

    page_size: int = 4096
    sets_per_sg: int = 4096
    sg_count_on_flash: int = 100
    in_memory_sg_count: int = 2
    flush_threshold: int = 4096
    sgs_per_index_group: int = 50
    bf_false_positive_rate: float = 0.001
    cached_pbfg_fraction: float = 0.5
    hotness_window_fraction: float = 0.3
    cooling_period_fraction: float = 0.1
    rng_seed: int = 0
    objects_per_set_target: int = 40
    rear_full_fraction: float = 0.95
    writeback_enabled: bool = True
    # derived, filled in __post_init__
    filter_bits: int = field(init=False)
    probe_count: int = field(init=False)

    def __post_init__(self):
        if self.page_size <= PAGE_HEADER_BYTES:
            raise ValueError("page_size too small")
        if self.sets_per_sg <= 0 or self.sg_count_on_flash <= 0:
            raise ValueError("set-group shape must be positive")
        if self.in_memory_sg_count < 1:
            raise ValueError("need at least one in-memory set-group")
        if self.flush_threshold < 0:
            raise ValueError("flush_threshold must be >= 0")
        if self.sgs_per_index_group < 1:
            raise ValueError("sgs_per_index_group must be >= 1")
        if not 0.0 < self.bf_false_positive_rate < 1.0:
            raise ValueError("bf_false_positive_rate must be in (0, 1)")
        for name in ("cached_pbfg_fraction", "hotness_window_fraction",
                     "cooling_period_fraction", "rear_full_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        m_bits, k = analytic.filter_geometry(self.bf_false_positive_rate,
                                             self.objects_per_set_target)
        filter_bytes = (m_bits + 7) // 8
        if self.sgs_per_index_group * filter_bytes > self.page_size:
            raise ValueError("index group's filters do not fit in one page")
        object.__setattr__(self, "filter_bits", m_bits)
        object.__setattr__(self, "probe_count", k)

    @property
    def set_payload_capacity(self) -> int:
        return self.page_size - PAGE_HEADER_BYTES

    @property
    def sg_bytes(self) -> int:
        return self.sets_per_sg * self.page_size

    @property
    def sg_payload_capacity(self) -> int:
        return self.sets_per_sg * self.set_payload_capacity

    @property
    def filter_bytes(self) -> int:
        return (self.filter_bits + 7) // 8

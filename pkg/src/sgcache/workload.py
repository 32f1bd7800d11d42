"""Workload generation and trace ingestion.

The generator produces a deterministic stream of get/set records with
Zipfian key popularity (alpha = 0 degenerates to uniform) and a configurable
value-size distribution. Sampling inverts the exact rank CDF with
searchsorted, so the empirical rank-frequency slope matches the requested
skew at any desk-scale keyspace. A key-prefix shard option interleaves
disjoint keyspaces, mimicking several traces replayed concurrently.

Trace files are delimiter-separated UTF-8 with a header line::

    op,key,key_size,value_size

where op is ``get`` or ``set`` and key_size must equal the key's byte
length. Replayed value bytes are deterministic filler derived from
key + size. Files are streamed, never loaded whole.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import ParseError


@dataclass(frozen=True)
class ZipfSpec:
    alpha: float
    keyspace: int
    op_count: int
    get_fraction: float = 0.0
    seed: int = 0
    shards: int = 1

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.keyspace < 1:
            raise ValueError("keyspace must be >= 1")
        if not 0.0 <= self.get_fraction <= 1.0:
            raise ValueError("get_fraction must be in [0, 1]")
        if self.shards < 1:
            raise ValueError("shards must be >= 1")


@dataclass(frozen=True)
class SizeSpec:
    """Value-size distribution: normal(mean, std) clamped, or fixed."""

    kind: str = "normal"
    mean: float = 250.0
    std: float = 200.0
    min_bytes: int = 16
    max_bytes: int = 3500
    fixed_bytes: int = 246

    def __post_init__(self):
        if self.kind not in ("normal", "fixed"):
            raise ValueError("kind must be 'normal' or 'fixed'")
        if self.kind == "normal" and not self.min_bytes <= self.mean <= self.max_bytes:
            raise ValueError("mean must lie within [min_bytes, max_bytes]")


@dataclass(frozen=True)
class TraceRecord:
    op: str          # "get" | "set"
    key: bytes
    value_size: int

    @property
    def key_size(self) -> int:
        return len(self.key)


def filler_value(key: bytes, size: int) -> bytes:
    """Deterministic value bytes for a (key, size) pair."""
    if size <= 0:
        return b""
    reps = size // len(key) + 1
    return (key * reps)[:size]


def _zipf_cdf(alpha: float, keyspace: int) -> np.ndarray:
    ranks = np.arange(1, keyspace + 1, dtype=np.float64)
    weights = ranks ** (-alpha) if alpha > 0 else np.ones_like(ranks)
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    return cdf


def generate(spec: ZipfSpec, sizes: SizeSpec, batch: int = 65536) -> Iterator[TraceRecord]:
    """Deterministic get/set stream; identical for identical (spec, sizes)."""
    rng = np.random.default_rng(spec.seed)
    cdf = _zipf_cdf(spec.alpha, spec.keyspace)
    remaining = spec.op_count
    while remaining > 0:
        n = min(batch, remaining)
        remaining -= n
        ranks = np.searchsorted(cdf, rng.random(n), side="right")
        is_get = rng.random(n) < spec.get_fraction
        if sizes.kind == "fixed":
            vsizes = np.full(n, sizes.fixed_bytes, dtype=np.int64)
        else:
            raw = rng.normal(sizes.mean, sizes.std, n)
            vsizes = np.clip(np.rint(raw), sizes.min_bytes, sizes.max_bytes).astype(np.int64)
        if spec.shards > 1:
            shard = rng.integers(0, spec.shards, n)
        else:
            shard = np.zeros(n, dtype=np.int64)
        for i in range(n):
            key = b"%d:k%09d" % (shard[i], ranks[i])
            yield TraceRecord("get" if is_get[i] else "set", key, int(vsizes[i]))


def write_trace(path: str, records: Iterable[TraceRecord]) -> int:
    """Write records in the documented trace format; returns rows written."""
    count = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["op", "key", "key_size", "value_size"])
        for rec in records:
            writer.writerow([rec.op, rec.key.decode("utf-8"), len(rec.key), rec.value_size])
            count += 1
    return count


def read_trace(path: str) -> Iterator[TraceRecord]:
    """Stream records from a trace file; constant memory in the file size."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["op", "key", "key_size", "value_size"]:
            raise ParseError(1, "missing or malformed header")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(line_no, f"expected 4 fields, got {len(row)}")
            op, key_text, key_size_s, value_size_s = row
            if op not in ("get", "set"):
                raise ParseError(line_no, f"unknown op {op!r}")
            key = key_text.encode("utf-8")
            if not key:
                raise ParseError(line_no, "empty key")
            try:
                key_size = int(key_size_s)
                value_size = int(value_size_s)
            except ValueError:
                raise ParseError(line_no, "sizes must be integers") from None
            if key_size <= 0 or value_size <= 0:
                raise ParseError(line_no, "sizes must be positive")
            if key_size != len(key):
                raise ParseError(line_no, "key_size does not match key length")
            yield TraceRecord(op, key, value_size)

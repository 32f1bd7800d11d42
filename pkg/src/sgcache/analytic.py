"""Closed-form write-amplification and index-cost models.

Covers the hierarchical-cache migration model (expected bucket length,
passive/active log-to-set write amplification and their combination), the
batched set-group engine's fill-rate identity, bloom-filter sizing, and the
expected flash-read cost of the packed filter-group index, together with a
grid optimizer over the accuracy/read-amplification trade-off.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import BadParams

LN2 = math.log(2.0)
LN2_SQ = LN2 * LN2


@dataclass(frozen=True)
class HierParams:
    """Inputs of the hierarchical-cache migration model.

    page_bytes:   set (page) size in bytes
    object_bytes: expected object size in bytes
    log_pages:    flash pages in the front-tier log
    set_pages:    flash pages in the back-tier set store
    op_fraction:  fraction of the set tier reserved for garbage collection
    passive_fraction: fraction of set rewrites caused by passive migration
    """

    page_bytes: float
    object_bytes: float
    log_pages: float
    set_pages: float
    op_fraction: float = 0.05
    passive_fraction: float = 0.25

    def __post_init__(self):
        if self.page_bytes <= 0 or self.object_bytes <= 0:
            raise BadParams("sizes must be positive")
        if self.log_pages <= 0 or self.set_pages <= 0:
            raise BadParams("page counts must be positive")
        if not 0.0 <= self.op_fraction < 1.0:
            raise BadParams("op_fraction must be in [0, 1)")
        if not 0.0 <= self.passive_fraction <= 1.0:
            raise BadParams("passive_fraction must be in [0, 1]")

    @property
    def usable_sets(self) -> float:
        return (1.0 - self.op_fraction) * self.set_pages


def expected_list_len(params: HierParams) -> float:
    """Expected objects pending per hash bucket when the log wraps."""
    denom = params.object_bytes * params.usable_sets
    if denom <= 0:
        raise BadParams("usable set count must be positive")
    return 2.0 * params.page_bytes * params.log_pages / denom


def l2swa_p(params: HierParams) -> float:
    """Log-to-set write amplification of passive migration."""
    return params.usable_sets / (2.0 * params.log_pages)


def l2swa_total(params: HierParams) -> float:
    """Overall log-to-set write amplification, (2 - p) * L2SWA(P)."""
    return (2.0 - params.passive_fraction) * l2swa_p(params)


def wa_fairywren(expected_fill_rate: float, l2swa: float) -> float:
    """Hierarchical-cache write amplification: 1/E(FR) + L2SWA."""
    if expected_fill_rate <= 0:
        raise BadParams("fill rate must be positive")
    if l2swa < 0:
        raise BadParams("l2swa must be non-negative")
    return 1.0 / expected_fill_rate + l2swa


def wa_setgroup(expected_sg_fill_rate: float) -> float:
    """Batched set-group engine write amplification: 1/E(FR_SG)."""
    if expected_sg_fill_rate <= 0:
        raise BadParams("fill rate must be positive")
    return 1.0 / expected_sg_fill_rate


# -- bloom filter sizing -----------------------------------------------------

def bf_bits_per_object(fp_rate: float) -> float:
    """Memory cost of an optimally-tuned bloom filter, -ln(x) / ln(2)^2."""
    if not 0.0 < fp_rate < 1.0:
        raise BadParams("false-positive rate must be in (0, 1)")
    return -math.log(fp_rate) / LN2_SQ


def filter_geometry(fp_rate: float, objects_per_set: int) -> tuple[int, int]:
    """Size one set-level filter: (bits, probe count) at its design load."""
    if objects_per_set <= 0:
        raise BadParams("objects_per_set must be positive")
    m_bits = math.ceil(objects_per_set * bf_bits_per_object(fp_rate))
    k = max(1, round(m_bits / objects_per_set * LN2))
    return m_bits, k


def filters_per_page(fp_rate: float, objects_per_set: int, page_bytes: int = 4096) -> int:
    """How many fixed-size set-level filters pack into one flash page."""
    m_bits, _ = filter_geometry(fp_rate, objects_per_set)
    filter_bytes = (m_bits + 7) // 8
    n = page_bytes // filter_bytes
    if n < 1:
        raise BadParams("one filter does not fit in a page")
    return n


# -- index read-cost model ---------------------------------------------------

@dataclass(frozen=True)
class PbfgCostParams:
    """Inputs of the expected flash-read cost of one lookup via the index.

    pool_size:       live set-groups N
    object_bytes:    average object size s
    fp_rate:         filter false-positive rate x
    page_bytes:      flash page size
    objects_per_set: filter design load (packed layout); None selects the
                     continuous N*o/s retrieval term instead
    """

    pool_size: int
    object_bytes: float
    fp_rate: float
    page_bytes: int = 4096
    objects_per_set: int | None = 40

    def __post_init__(self):
        if self.pool_size <= 0 or self.object_bytes <= 0:
            raise BadParams("pool size and object size must be positive")
        if not 0.0 < self.fp_rate < 1.0:
            raise BadParams("false-positive rate must be in (0, 1)")


def pbfg_retrieval_pages(params: PbfgCostParams) -> float:
    """Flash pages read to fetch one offset's filters for the whole pool."""
    if params.objects_per_set is not None:
        n = filters_per_page(params.fp_rate, params.objects_per_set, params.page_bytes)
        return float(math.ceil(params.pool_size / n))
    bits_per_obj = bf_bits_per_object(params.fp_rate)
    object_bits = params.object_bytes * 8.0
    return params.pool_size * bits_per_obj / object_bits


def pbfg_cost(params: PbfgCostParams, present: bool = True) -> float:
    """Total expected flash reads per lookup: retrieval + 1 + (N-1)x.

    With ``present=False`` the certain hit on the looked-up object is
    dropped and only the (N-1)x false-positive reads remain.
    """
    reads = pbfg_retrieval_pages(params) + (params.pool_size - 1) * params.fp_rate
    if present:
        reads += 1.0
    return reads


def optimal_bf_config(pool_size: int, object_bytes: float,
                      x_grid: list[float] | None = None,
                      page_bytes: int = 4096,
                      objects_per_set: int | None = 40) -> tuple[float, float, float]:
    """Pick the false-positive rate minimizing expected flash reads.

    Scans the grid and returns (x, bits_per_object, cost); ties break toward
    the larger x, which is the cheaper filter.
    """
    if x_grid is None:
        x_grid = default_x_grid()
    if not x_grid:
        raise BadParams("x_grid must be non-empty")
    best = None
    for x in sorted(x_grid, reverse=True):
        params = PbfgCostParams(pool_size=pool_size, object_bytes=object_bytes,
                                fp_rate=x, page_bytes=page_bytes,
                                objects_per_set=objects_per_set)
        cost = pbfg_cost(params)
        if best is None or cost < best[2]:
            best = (x, bf_bits_per_object(x), cost)
    return best


def default_x_grid(lo: float = 1e-5, hi: float = 1e-1, points: int = 41) -> list[float]:
    """Log-uniform false-positive-rate grid."""
    if points < 2:
        return [lo]
    step = (math.log10(hi) - math.log10(lo)) / (points - 1)
    return [10.0 ** (math.log10(lo) + i * step) for i in range(points)]

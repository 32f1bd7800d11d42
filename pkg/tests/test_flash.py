import random

import pytest

from sgcache.errors import BadAddress, DeviceFullDeadlock, UnwrittenPage, ZoneFull
from sgcache.flash import DeviceGeometry, FlashAddress, FlashDevice, GreedyFtl


def small_device(pages_per_zone=8, zone_count=4, page_size=64):
    return FlashDevice(DeviceGeometry(page_size=page_size,
                                      pages_per_zone=pages_per_zone,
                                      zone_count=zone_count))


def page(device, fill=b"a"):
    return fill * device.geometry.page_size


def test_first_append_lands_at_offset_zero():
    dev = small_device()
    addr = dev.append(0, page(dev))
    assert addr == FlashAddress(0, 0)
    assert dev.write_pointer(0) == 1


def test_capacity_boundary():
    dev = small_device()
    for i in range(dev.geometry.pages_per_zone):
        assert dev.append(0, page(dev)) == FlashAddress(0, i)
    assert dev.zone_state(0) == "full"
    with pytest.raises(ZoneFull):
        dev.append(0, page(dev))


def test_reset_returns_zone_to_empty():
    dev = small_device()
    dev.append(0, page(dev))
    dev.reset(0)
    assert dev.zone_state(0) == "empty"
    assert dev.append(0, page(dev)) == FlashAddress(0, 0)
    assert dev.counters.zones_erased == 1


def test_read_after_write_is_bit_exact():
    dev = small_device()
    payload = bytes(range(64))
    addr = dev.append(0, payload)
    assert dev.read(addr) == payload
    assert dev.counters.pages_read == 1


def test_read_unwritten_page():
    dev = small_device()
    with pytest.raises(UnwrittenPage):
        dev.read(FlashAddress(0, 5))


def test_read_after_reset_is_unwritten():
    dev = small_device()
    addr = dev.append(0, page(dev))
    dev.reset(0)
    with pytest.raises(UnwrittenPage):
        dev.read(addr)


def test_bad_zone_index():
    dev = small_device()
    with pytest.raises(BadAddress):
        dev.append(99, page(dev))
    with pytest.raises(BadAddress):
        dev.reset(99)
    with pytest.raises(BadAddress):
        dev.read(FlashAddress(99, 0))


def test_sequential_write_invariant():
    # readable pages are exactly [0, write_pointer) since the last reset
    dev = small_device()
    rnd = random.Random(5)
    for zone in range(dev.geometry.zone_count):
        n = rnd.randrange(1, dev.geometry.pages_per_zone)
        for _ in range(n):
            dev.append(zone, page(dev))
        wp = dev.write_pointer(zone)
        assert wp == n
        for p in range(wp):
            dev.read(FlashAddress(zone, p))
        with pytest.raises(UnwrittenPage):
            dev.read(FlashAddress(zone, wp))


def test_zoned_mode_dlwa_is_exactly_one():
    dev = small_device()
    for zone in range(dev.geometry.zone_count):
        for _ in range(dev.geometry.pages_per_zone):
            dev.append(zone, page(dev))
        dev.reset(zone)
    assert dev.counters.device_copied_pages == 0
    assert dev.counters.dlwa == 1.0


def test_conservation_round_trip():
    dev = small_device()
    rnd = random.Random(11)
    written = {}
    for zone in range(dev.geometry.zone_count):
        for _ in range(rnd.randrange(1, 8)):
            payload = bytes(rnd.randrange(256) for _ in range(64))
            addr = dev.append(zone, payload)
            written[addr] = payload
    for addr, payload in written.items():
        assert dev.read(addr) == payload


# -- page-mapped FTL mode ------------------------------------------------------

def test_ftl_empty_victim_gc_is_free():
    dev = small_device(pages_per_zone=4, zone_count=4)
    ftl = GreedyFtl(dev, op_fraction=0.5, gc_watermark=1)
    data = page(dev)
    # the fifth overwrite rolls to zone 1, leaving zone 0 pure garbage
    for _ in range(5):
        ftl.write(0, data)
    assert dev.counters.zones_erased == 0
    copied = ftl.collect_garbage()
    assert copied == 0
    assert dev.counters.zones_erased == 1
    assert dev.counters.device_copied_pages == 0


def test_ftl_greedy_picks_min_valid_zone():
    dev = small_device(pages_per_zone=4, zone_count=6)
    ftl = GreedyFtl(dev, op_fraction=0.5, gc_watermark=1)
    data = page(dev)
    # zone 0 gets lpns 0-3, zone 1 gets lpns 4-7
    for lpn in range(8):
        ftl.write(lpn, data)
    # invalidate 3 pages of zone 0 and 1 page of zone 1 (writes land in zone 2)
    for lpn in (0, 1, 2, 4):
        ftl.write(lpn, data)
    copied = ftl.collect_garbage()
    assert copied == 1          # zone 0 had a single valid page left
    assert dev.write_pointer(0) == 0


def test_ftl_deadlock_when_everything_valid():
    dev = small_device(pages_per_zone=2, zone_count=2)
    ftl = GreedyFtl(dev, op_fraction=0.5, gc_watermark=1)
    data = page(dev)
    ftl.write(0, data)
    ftl.write(1, data)
    with pytest.raises(DeviceFullDeadlock):
        ftl.collect_garbage()


def test_ftl_read_back_and_remap():
    dev = small_device(pages_per_zone=4, zone_count=6)
    ftl = GreedyFtl(dev, op_fraction=0.5, gc_watermark=1)
    blobs = {lpn: bytes([lpn]) * 64 for lpn in range(8)}
    for lpn, blob in blobs.items():
        ftl.write(lpn, blob)
    for _ in range(40):  # churn to force GC relocations
        ftl.write(3, blobs[3])
    for lpn, blob in blobs.items():
        assert ftl.read(lpn) == blob


def test_ftl_uniform_overwrite_dlwa_below_1_5():
    # DERIVED oracle: brute-force uniform overwrite traffic at 50% OP.
    # Greedy GC at this OP measures ~1.26-1.27 steady state on this geometry,
    # consistent with the standard greedy-GC expectation; assert the bound.
    dev = FlashDevice(DeviceGeometry(page_size=64, pages_per_zone=32, zone_count=64))
    ftl = GreedyFtl(dev, op_fraction=0.5, gc_watermark=2)
    rnd = random.Random(42)
    data = b"x" * 64
    for lpn in range(ftl.logical_pages):
        ftl.write(lpn, data)
    base_h = dev.counters.host_pages_written
    base_c = dev.counters.device_copied_pages
    for _ in range(15 * ftl.logical_pages):
        ftl.write(rnd.randrange(ftl.logical_pages), data)
    host = dev.counters.host_pages_written - base_h
    copied = dev.counters.device_copied_pages - base_c
    dlwa = (host + copied) / host
    assert dlwa < 1.5
    assert dlwa > 1.0

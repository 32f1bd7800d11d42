import math

import pytest

from sgcache import analytic
from sgcache.analytic import (HierParams, PbfgCostParams, bf_bits_per_object,
                              default_x_grid, expected_list_len,
                              filter_geometry, filters_per_page, l2swa_p,
                              l2swa_total, optimal_bf_config, pbfg_cost,
                              wa_fairywren, wa_setgroup)
from sgcache.errors import BadParams


def hier(log=5.0, total=100.0, x=0.05, p=0.25, w=4096.0, s=246.0):
    return HierParams(page_bytes=w, object_bytes=s, log_pages=log,
                      set_pages=total - log, op_fraction=x, passive_fraction=p)


def test_passive_l2swa_reference_point():
    # Log:Set = 5:95 of equal-page flash, 5% OP
    assert l2swa_p(hier()) == pytest.approx(0.95 * 95 / (2 * 5), abs=1e-12)
    assert l2swa_p(hier()) == pytest.approx(9.025, abs=1e-12)


def test_passive_l2swa_limits():
    # everything fits in OP: no usable sets, no migration amplification
    assert l2swa_p(hier(x=1.0 - 1e-12)) == pytest.approx(0.0, abs=1e-9)
    # doubling the log halves the passive amplification
    assert l2swa_p(hier(log=10, total=105)) == pytest.approx(l2swa_p(hier()) / 2, rel=1e-12)


def test_expected_list_len_consistency():
    # w / (E(L) * s) is the same quantity as the closed passive form
    params = hier()
    e_len = expected_list_len(params)
    assert params.page_bytes / (e_len * params.object_bytes) == pytest.approx(
        l2swa_p(params), rel=1e-12)


def test_total_l2swa_reference_point():
    assert l2swa_total(hier(p=0.25)) == pytest.approx(1.75 * 9.025, rel=1e-12)
    assert l2swa_total(hier(p=0.25)) == pytest.approx(15.79375, abs=1e-9)
    # no active migration: total collapses to the passive term
    assert l2swa_total(hier(p=1.0)) == pytest.approx(l2swa_p(hier()), rel=1e-12)


def test_wa_composition():
    assert wa_fairywren(1.0, 15.75) == pytest.approx(16.75)
    assert wa_setgroup(0.6413) == pytest.approx(1.559, abs=5e-4)
    with pytest.raises(BadParams):
        wa_setgroup(0.0)


def test_monotonicity_in_op_and_log():
    base = l2swa_p(hier(x=0.05))
    assert l2swa_p(hier(x=0.2)) < base
    assert l2swa_p(hier(log=10, total=105)) < base
    bigger_set = HierParams(page_bytes=4096, object_bytes=246, log_pages=5,
                            set_pages=120, op_fraction=0.05)
    assert l2swa_p(bigger_set) > base


def test_bf_bits_per_object_reference_points():
    assert bf_bits_per_object(0.001) == pytest.approx(14.38, abs=0.005)
    assert bf_bits_per_object(0.01) == pytest.approx(9.59, abs=0.01)
    assert bf_bits_per_object(0.5) == pytest.approx(1.44, abs=0.01)
    with pytest.raises(BadParams):
        bf_bits_per_object(0.0)


def test_filter_geometry_design_load():
    m, k = filter_geometry(0.001, 40)
    assert m == 576 and k == 10
    assert filters_per_page(0.001, 40) == 56      # 72 B filters
    assert filters_per_page(0.0001, 40) == 42     # 96 B filters


def test_pbfg_cost_instantiation():
    at_x3 = pbfg_cost(PbfgCostParams(pool_size=350, object_bytes=246, fp_rate=0.001))
    assert at_x3 == pytest.approx(7 + 1 + 349 * 0.001, rel=1e-12)
    assert at_x3 == pytest.approx(8.349, abs=1e-9)
    at_x4 = pbfg_cost(PbfgCostParams(pool_size=350, object_bytes=246, fp_rate=0.0001))
    assert at_x4 == pytest.approx(9 + 1 + 349 * 0.0001, rel=1e-12)
    assert at_x4 == pytest.approx(10.0349, abs=1e-9)
    assert at_x3 < at_x4


def test_pbfg_cost_absent_key_variant():
    p = PbfgCostParams(pool_size=350, object_bytes=246, fp_rate=0.001)
    assert pbfg_cost(p, present=True) - pbfg_cost(p, present=False) == pytest.approx(1.0)


def test_pbfg_cost_continuous_form():
    p = PbfgCostParams(pool_size=350, object_bytes=246, fp_rate=0.001,
                       objects_per_set=None)
    expected = 350 * bf_bits_per_object(0.001) / (246 * 8) + 1 + 349 * 0.001
    assert pbfg_cost(p) == pytest.approx(expected, rel=1e-12)


def test_optimizer_matches_exhaustive_scan():
    # DERIVED oracle: exhaustive scan over the same grid
    grid = default_x_grid()
    assert len(grid) == 41 and grid[0] == pytest.approx(1e-5) and grid[-1] == pytest.approx(1e-1)
    best_x, best_o, best_cost = optimal_bf_config(350, 246, grid)
    scan = []
    for x in grid:
        c = pbfg_cost(PbfgCostParams(pool_size=350, object_bytes=246, fp_rate=x))
        scan.append((c, x))
    brute_cost, brute_x = min(scan, key=lambda t: (t[0], -t[1]))
    assert best_cost == pytest.approx(brute_cost, rel=1e-12)
    assert best_x == pytest.approx(brute_x, rel=1e-12)
    assert best_o == pytest.approx(bf_bits_per_object(best_x), rel=1e-12)


def test_optimizer_prefers_1e3_over_1e4():
    best_x, _, _ = optimal_bf_config(350, 246, [0.001, 0.0001])
    assert best_x == 0.001


def test_optimizer_tie_breaks_toward_larger_x():
    grid = [0.01, 0.02]

    # force a tie by comparing two grids of one point each
    c1 = pbfg_cost(PbfgCostParams(pool_size=10, object_bytes=246, fp_rate=grid[0]))
    c2 = pbfg_cost(PbfgCostParams(pool_size=10, object_bytes=246, fp_rate=grid[1]))
    best_x, _, best_cost = optimal_bf_config(10, 246, grid)
    if math.isclose(c1, c2):
        assert best_x == max(grid)
    else:
        assert best_cost == min(c1, c2)


def test_bad_params_rejected():
    with pytest.raises(BadParams):
        HierParams(page_bytes=0, object_bytes=246, log_pages=5, set_pages=95)
    with pytest.raises(BadParams):
        HierParams(page_bytes=4096, object_bytes=246, log_pages=5, set_pages=95,
                   op_fraction=1.5)
    with pytest.raises(BadParams):
        pbfg_cost(PbfgCostParams(pool_size=0, object_bytes=246, fp_rate=0.001))
    with pytest.raises(BadParams):
        optimal_bf_config(350, 246, [])

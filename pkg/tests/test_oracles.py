"""Reference-oracle unit tests.

Every expected value in this file is computed by hand on paper-sized
graphs, never by running the code under test.
"""

import numpy as np
import pytest

from tilesim import graphdata as gd
from tilesim import oracles

UNREACHED = (1 << 32) - 1


def csr_of(src, dst, w=None, nv=None):
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if nv is None:
        nv = int(max(src.max(initial=-1), dst.max(initial=-1))) + 1
    weights = None if w is None else np.asarray(w, dtype=np.int64)
    return gd.build_csr(gd.Graph(src, dst, weights, nv))


def test_sentinel_is_all_ones_of_the_flit_width():
    assert oracles.sentinel(32) == 0xFFFFFFFF
    assert oracles.sentinel(64) == 0xFFFFFFFFFFFFFFFF


def test_bfs_path():
    csr = csr_of([0, 1], [1, 2])
    assert oracles.bfs_levels(csr, 0, UNREACHED) == [0, 1, 2]


def test_bfs_star_center_root():
    csr = csr_of([0, 0, 0], [1, 2, 3])
    assert oracles.bfs_levels(csr, 0, UNREACHED) == [0, 1, 1, 1]


def test_bfs_unreached_keeps_sentinel():
    csr = csr_of([0], [1], nv=3)
    assert oracles.bfs_levels(csr, 0, UNREACHED) == [0, 1, UNREACHED]


def test_bfs_ignores_weights():
    csr = csr_of([0, 1], [1, 2], w=[9, 9])
    assert oracles.bfs_levels(csr, 0, UNREACHED) == [0, 1, 2]


def test_dijkstra_prefers_cheap_two_hop_route():
    # 0->1 costs 10 direct, but 0->2->1 costs 1 + 2 = 3
    csr = csr_of([0, 0, 2], [1, 2, 1], w=[10, 1, 2])
    assert oracles.sssp_distances(csr, 0, UNREACHED) == [0, 3, 1]


def test_dijkstra_path_unit_weights():
    csr = csr_of([0, 1], [1, 2], w=[1, 1])
    assert oracles.sssp_distances(csr, 0, UNREACHED) == [0, 1, 2]


def test_dijkstra_unreached_and_nonroot_start():
    csr = csr_of([2, 1], [1, 0], w=[5, 7], nv=4)
    assert oracles.sssp_distances(csr, 2, UNREACHED) == [12, 5, 0, UNREACHED]


def test_wcc_two_triangles():
    csr = csr_of([0, 1, 2, 3, 4, 5], [1, 2, 0, 4, 5, 3])
    assert oracles.wcc_labels(csr) == [0, 0, 0, 3, 3, 3]


def test_wcc_singleton():
    csr = csr_of([], [], nv=1)
    assert oracles.wcc_labels(csr) == [0]


def test_wcc_chain_collapses_to_min_id():
    csr = csr_of([3, 2, 1], [2, 1, 0])
    assert oracles.wcc_labels(csr) == [0, 0, 0, 0]


def test_wcc_isolated_vertices_keep_own_ids():
    csr = csr_of([1], [2], nv=5)
    assert oracles.wcc_labels(csr) == [0, 1, 1, 3, 4]


def test_pagerank_two_cycle_is_stationary():
    csr = csr_of([0, 1], [1, 0])
    ranks, epochs = oracles.pagerank_ranks(csr, 0.85, 1e-4, 20)
    # symmetric fixpoint from the start: first update leaves 0.5/0.5
    assert ranks == pytest.approx([0.5, 0.5], abs=1e-15)
    assert epochs == 1


def test_pagerank_no_edges_uniform():
    csr = csr_of([], [], nv=4)
    ranks, epochs = oracles.pagerank_ranks(csr, 0.85, 1e-4, 20)
    # all mass is dangling and redistributed uniformly:
    # 0.15/4 + 0.85*(0 + 1/4) = 0.25 again, so the delta is 0
    assert ranks == pytest.approx([0.25] * 4, abs=1e-15)
    assert epochs == 1


def test_pagerank_single_edge_hand_trace():
    # V=2, edge 0->1, damping 0.85; vertex 1 is dangling.
    # epoch 1: contrib 0->1 = 0.5, dangling mass 0.5 spread as 0.25 each:
    #   new0 = 0.075 + 0.85*0.25          = 0.2875
    #   new1 = 0.075 + 0.85*(0.5 + 0.25)  = 0.7125    delta = 0.425
    # epoch 2: contrib 0->1 = 0.2875, dangling 0.7125 spread 0.35625:
    #   new0 = 0.075 + 0.85*0.35625             = 0.3778125
    #   new1 = 0.075 + 0.85*(0.2875 + 0.35625)  = 0.6221875   delta = 0.180625
    # epsilon 0.2 stops after epoch 2.
    csr = csr_of([0], [1])
    ranks, epochs = oracles.pagerank_ranks(csr, 0.85, 0.2, 20)
    assert ranks == pytest.approx([0.3778125, 0.6221875], abs=1e-15)
    assert epochs == 2


def test_pagerank_max_epochs_stops_early():
    csr = csr_of([0], [1])
    ranks, epochs = oracles.pagerank_ranks(csr, 0.85, 1e-12, 3)
    assert epochs == 3


def test_pagerank_epsilon_inf_single_epoch():
    csr = csr_of([0], [1])
    _, epochs = oracles.pagerank_ranks(csr, 0.85, float("inf"), 20)
    assert epochs == 1


def test_pagerank_mass_conserved():
    csr = csr_of([0, 0, 1, 3], [1, 2, 3, 0], nv=5)
    ranks, _ = oracles.pagerank_ranks(csr, 0.85, 1e-10, 50)
    assert sum(ranks) == pytest.approx(1.0, abs=1e-9)


def test_spmv_hand_matrix():
    # [[1, 2], [0, 3]] * [5, 7] = [19, 21]
    csr = csr_of([0, 0, 1], [0, 1, 1], w=[1, 2, 3])
    assert oracles.spmv_product(csr, [5, 7]) == [19, 21]


def test_spmv_identity():
    csr = csr_of([0, 1, 2], [0, 1, 2], w=[1, 1, 1])
    assert oracles.spmv_product(csr, [4, -3, 9]) == [4, -3, 9]


def test_spmv_zero_matrix():
    csr = csr_of([], [], nv=3)
    assert oracles.spmv_product(csr, [4, 5, 6]) == [0, 0, 0]


def test_spmv_duplicate_entries_both_counted():
    # duplicated coordinate (0,1) contributes twice
    csr = csr_of([0, 0], [1, 1], w=[2, 3])
    assert oracles.spmv_product(csr, [10, 10]) == [50, 0]


def test_spmv_float_values():
    csr = csr_of([0, 1], [1, 0], w=[1, 1])
    fcsr = gd.Csr(csr.ptr, csr.edge_idx,
                  np.array([0.5, 0.25]), 2, 2, True)
    assert oracles.spmv_product(fcsr, [2.0, 4.0]) == pytest.approx([2.0, 0.5])

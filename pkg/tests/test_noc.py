import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tilesim import graphdata as gd
from tilesim import noc


def topo(kind="torus", w=8, h=8, r=1):
    return noc.Topology(noc.KIND_NAMES[kind], w, h, r)


def test_topology_validation():
    with pytest.raises(ValueError, match="powers of 2"):
        noc.Topology(noc.MESH, 7, 7)
    with pytest.raises(ValueError, match="ruche"):
        noc.Topology(noc.TORUS, 8, 8, 8)
    with pytest.raises(ValueError, match="ruche"):
        noc.Topology(noc.TORUS, 8, 8, 0)
    t = topo(w=16, h=16)
    assert t.num_tiles == 256
    assert t.tile_bits == 8
    assert t.local_bits(32) == 24


def test_encode_head_examples():
    t = topo(w=16, h=16)
    pol = gd.PlacementPolicy(gd.CONTIGUOUS, 256)
    # chunk size 1000: index 1001 lands on tile 1 at local offset 1
    assert noc.encode_head(0, 256000, pol, t) == 0
    assert noc.encode_head(1001, 256000, pol, t) == (1 << 24) | 1
    assert noc.decode_head((1 << 24) | 1, t) == (1, 1)
    assert noc.decode_head(0, t) == (0, 0)


def test_encode_head_overflow():
    t = topo(w=16, h=16)
    pol = gd.PlacementPolicy(gd.CONTIGUOUS, 256)
    # chunk of 2**25 entries needs 25 local bits; only 24 are available
    with pytest.raises(ValueError, match="bits"):
        noc.encode_head(2**25 - 1, 2**33, pol, t)


@given(st.integers(min_value=0, max_value=10**7 - 1),
       st.sampled_from([gd.CONTIGUOUS, gd.INTERLEAVED]))
@settings(max_examples=200, deadline=None)
def test_encode_decode_round_trip(idx, kind):
    t = topo(w=16, h=16)
    pol = gd.PlacementPolicy(kind, 256)
    tile, local = noc.decode_head(noc.encode_head(idx, 10**7, pol, t), t)
    assert (tile, local) == gd.owner_of(idx, 10**7, pol)


def test_vectorized_encode_matches_scalar():
    t = topo(w=8, h=4)
    pol = gd.PlacementPolicy(gd.INTERLEAVED, 32)
    idx = np.arange(0, 5000, 7)
    flits = noc.encode_heads(idx, 5000, pol, t)
    for i, f in zip(idx.tolist(), flits.tolist()):
        assert f == noc.encode_head(int(i), 5000, pol, t)
    tiles, locals_ = noc.decode_heads(flits, t)
    ot, ol = gd.owner_of_array(idx, 5000, pol)
    np.testing.assert_array_equal(tiles, ot)
    np.testing.assert_array_equal(locals_, ol)


def test_route_mesh_straight_east():
    t = topo("mesh", 8, 8)
    ports = noc.route_ports(t, 0, 3)
    assert ports == [noc.P_E, noc.P_E, noc.P_E]


def test_route_torus_shortest_direction():
    t = topo("torus", 8, 8)
    # 0 -> 6 in x: two west hops beat six east hops
    ports = noc.route_ports(t, 0, 6)
    assert ports == [noc.P_W, noc.P_W]
    # exact tie of 4 goes to the positive direction
    assert noc.route_ports(t, 0, 4) == [noc.P_E] * 4


def test_route_ruche_long_then_unit():
    t = topo("torus", 16, 16, r=4)
    # remaining distance 6: one ruche hop of 4, then two unit hops
    ports = noc.route_ports(t, 0, 6)
    assert ports == [noc.P_RE, noc.P_E, noc.P_E]
    assert noc.hops_between(t.kind, 16, 16, 4, 0, 6) == 3


def test_route_x_resolved_before_y():
    t = topo("mesh", 8, 8)
    dest = 3 * 8 + 2  # (x=2, y=3)
    ports = noc.route_ports(t, 0, dest)
    assert ports == [noc.P_E, noc.P_E, noc.P_S, noc.P_S, noc.P_S]


def test_route_local_when_already_there():
    t = topo()
    assert noc.route_next(t.kind, 8, 8, 1, 5, 5) == noc.P_LOCAL


@given(st.integers(min_value=0, max_value=255),
       st.integers(min_value=0, max_value=255),
       st.sampled_from(["mesh", "torus"]),
       st.sampled_from([1, 4]))
@settings(max_examples=300, deadline=None)
def test_route_reaches_dest_within_bound(src, dest, kind, r):
    t = topo(kind, 16, 16, r)
    ports = noc.route_ports(t, src, dest)
    assert len(ports) <= noc.max_hops(t)
    # dimension order: the ring-class sequence never decreases, so a
    # message never returns to a dimension or upgrades unit -> ruche
    classes = [noc.port_class(p) for p in ports]
    assert classes == sorted(classes)


def test_neighbor_wraps_only_on_torus():
    assert noc.neighbor_tile(noc.TORUS, 8, 8, 1, 7, noc.P_E) == 0
    assert noc.neighbor_tile(noc.TORUS, 8, 8, 4, 6, noc.P_RE) == 2
    assert noc.neighbor_tile(noc.MESH, 8, 8, 1, 6, noc.P_E) == 7
    with pytest.raises(AssertionError):
        noc.neighbor_tile(noc.MESH, 8, 8, 1, 7, noc.P_E)


def test_needs_bubble_cases():
    # continuing east around the ring: exempt
    assert not noc.needs_bubble(noc.TORUS, noc.X_UNIT, noc.P_E)
    # injection enters a ring
    assert noc.needs_bubble(noc.TORUS, noc.CLASS_ENTRY, noc.P_E)
    # dimension turn enters the y ring
    assert noc.needs_bubble(noc.TORUS, noc.X_UNIT, noc.P_S)
    # stepping off a ruche channel onto unit links changes rings
    assert noc.needs_bubble(noc.TORUS, noc.X_RUCHE, noc.P_E)
    assert not noc.needs_bubble(noc.TORUS, noc.X_RUCHE, noc.P_RE)
    # delivery and mesh links form no rings
    assert not noc.needs_bubble(noc.TORUS, noc.X_UNIT, noc.P_LOCAL)
    assert not noc.needs_bubble(noc.MESH, noc.CLASS_ENTRY, noc.P_E)


def test_latency_formula():
    assert noc.uncongested_latency(hops=1, flits=1) == 1
    assert noc.uncongested_latency(hops=5, flits=3) == 7


def test_slots_per_channel():
    assert noc.slots_per_channel(8, 4, 1) == 2
    # raised so the longest message plus one bubble slot fits
    assert noc.slots_per_channel(8, 4, 2) == 3
    assert noc.slots_per_channel(8, 2, 3) == 4
    assert noc.slots_per_channel(16, 2, 3) == 8


def test_parse_kind():
    assert noc.parse_kind("mesh") == noc.MESH
    assert noc.parse_kind("torus") == noc.TORUS
    with pytest.raises(ValueError, match="ring"):
        noc.parse_kind("ring")

"""Interconnect math: head flit encoding, dimension-ordered routing on mesh
and torus with optional ruche (router-bypassing long-range) channels, ring
classification for bubble deadlock avoidance, and buffer pool sizing.

The routing helpers are numba-jitted scalar functions so the cycle engine
calls the exact same code the tests exercise; with jit disabled they run as
plain Python.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from . import graphdata as gd

MESH = 0
TORUS = 1
KIND_NAMES = {"mesh": MESH, "torus": TORUS}

# router ports; ruche ports jump ruche_factor tiles in one hop
P_LOCAL = 0
P_N = 1
P_S = 2
P_E = 3
P_W = 4
P_RN = 5
P_RS = 6
P_RE = 7
P_RW = 8
N_PORTS = 9

PORT_NAMES = ("local", "n", "s", "e", "w", "rn", "rs", "re", "rw")

# ring classes for bubble admission; ordering matches route monotonicity
CLASS_ENTRY = -1
X_RUCHE = 0
X_UNIT = 1
Y_RUCHE = 2
Y_UNIT = 3


@dataclass(frozen=True)
class Topology:
    kind: int
    width: int
    height: int
    ruche_factor: int = 1

    def __post_init__(self):
        w, h, r = self.width, self.height, self.ruche_factor
        if self.kind not in (MESH, TORUS):
            raise ValueError(f"unknown topology kind {self.kind}")
        if w < 1 or (w & (w - 1)) or h < 1 or (h & (h - 1)):
            raise ValueError(f"grid {w}x{h}: dimensions must be powers of 2")
        if r < 1:
            raise ValueError("ruche factor must be >= 1")
        # r == 1 means no ruche channels and is always legal
        if r > 1 and r >= min(w, h):
            raise ValueError(f"ruche factor {r} must be < min(W, H)")

    @property
    def num_tiles(self) -> int:
        return self.width * self.height

    @property
    def tile_bits(self) -> int:
        return int(self.num_tiles - 1).bit_length()

    def local_bits(self, flit_width: int) -> int:
        return flit_width - self.tile_bits

    @property
    def has_ruche(self) -> bool:
        return self.ruche_factor > 1


def parse_kind(name: str) -> int:
    try:
        return KIND_NAMES[name]
    except KeyError:
        raise ValueError(f"unknown topology {name!r}; expected mesh or torus")


# -- head flits ----------------------------------------------------------------


def encode_head(global_idx: int, array_len: int, policy: gd.PlacementPolicy,
                topo: Topology, flit_width: int = 32) -> int:
    """Pack (owner tile, local index) into one flit word.

    The upper tile_bits carry the destination tile id (row-major y*W+x); the
    rest carry the index local to that tile's chunk.
    """
    tile, local = gd.owner_of(global_idx, array_len, policy)
    shift = topo.local_bits(flit_width)
    if local >= (1 << shift):
        raise ValueError(
            f"local index {local} needs more than {shift} bits; the array "
            f"is too large for a {topo.width}x{topo.height} grid at "
            f"{flit_width}-bit flits")
    return (tile << shift) | local


def decode_head(flit: int, topo: Topology,
                flit_width: int = 32) -> tuple[int, int]:
    shift = topo.local_bits(flit_width)
    return flit >> shift, flit & ((1 << shift) - 1)


def encode_heads(global_idx: np.ndarray, array_len: int,
                 policy: gd.PlacementPolicy, topo: Topology,
                 flit_width: int = 32) -> np.ndarray:
    """Vectorized encode_head for bulk checks."""
    tile, local = gd.owner_of_array(global_idx, array_len, policy)
    shift = topo.local_bits(flit_width)
    if local.size and int(local.max()) >= (1 << shift):
        raise ValueError("local index overflow")
    return (tile.astype(np.int64) << shift) | local.astype(np.int64)


def decode_heads(flits: np.ndarray, topo: Topology,
                 flit_width: int = 32) -> tuple[np.ndarray, np.ndarray]:
    shift = topo.local_bits(flit_width)
    return flits >> shift, flits & ((1 << shift) - 1)


# -- routing -------------------------------------------------------------------


@njit(cache=True)
def route_next(kind: int, width: int, height: int, ruche: int,
               cur: int, dest: int) -> int:
    """Next output port under dimension-ordered (X then Y) routing.

    On torus the direction with fewer hops wins, ties go to the positive
    (east/south) direction. With ruche channels the long port is taken while
    the remaining distance in the dimension is at least the ruche factor.
    """
    if cur == dest:
        return P_LOCAL
    cx = cur % width
    cy = cur // width
    dx = dest % width
    dy = dest // width
    if cx != dx:
        if kind == TORUS:
            fwd = (dx - cx) % width
            bwd = (cx - dx) % width
            if fwd <= bwd:
                rem, positive = fwd, True
            else:
                rem, positive = bwd, False
        else:
            if dx > cx:
                rem, positive = dx - cx, True
            else:
                rem, positive = cx - dx, False
        if ruche > 1 and rem >= ruche:
            return P_RE if positive else P_RW
        return P_E if positive else P_W
    if kind == TORUS:
        fwd = (dy - cy) % height
        bwd = (cy - dy) % height
        if fwd <= bwd:
            rem, positive = fwd, True
        else:
            rem, positive = bwd, False
    else:
        if dy > cy:
            rem, positive = dy - cy, True
        else:
            rem, positive = cy - dy, False
    if ruche > 1 and rem >= ruche:
        return P_RS if positive else P_RN
    return P_S if positive else P_N


@njit(cache=True)
def neighbor_tile(kind: int, width: int, height: int, ruche: int,
                  tile: int, port: int) -> int:
    """Tile reached by leaving ``tile`` through ``port``. Mesh moves must
    stay on the grid; torus wraps."""
    x = tile % width
    y = tile // width
    if port == P_E:
        x += 1
    elif port == P_W:
        x -= 1
    elif port == P_S:
        y += 1
    elif port == P_N:
        y -= 1
    elif port == P_RE:
        x += ruche
    elif port == P_RW:
        x -= ruche
    elif port == P_RS:
        y += ruche
    elif port == P_RN:
        y -= ruche
    else:
        return tile
    if kind == TORUS:
        x %= width
        y %= height
    else:
        assert 0 <= x < width and 0 <= y < height
    return y * width + x


@njit(cache=True)
def port_class(port: int) -> int:
    """Ring class of traffic moving through a port (direction-agnostic:
    opposite directions never share buffers)."""
    if port == P_E or port == P_W:
        return X_UNIT
    if port == P_RE or port == P_RW:
        return X_RUCHE
    if port == P_N or port == P_S:
        return Y_UNIT
    if port == P_RN or port == P_RS:
        return Y_RUCHE
    return CLASS_ENTRY


@njit(cache=True)
def needs_bubble(kind: int, in_class: int, out_port: int) -> bool:
    """True when a move enters a torus ring (injection, dimension turn, or
    ruche/unit transition) and must leave a free slot behind the message.
    Traffic already circulating in the same ring is exempt; mesh links form
    no rings."""
    if kind != TORUS:
        return False
    if out_port == P_LOCAL:
        return False
    return port_class(out_port) != in_class


@njit(cache=True)
def hops_between(kind: int, width: int, height: int, ruche: int,
                 src: int, dest: int) -> int:
    hops = 0
    cur = src
    while cur != dest:
        port = route_next(kind, width, height, ruche, cur, dest)
        cur = neighbor_tile(kind, width, height, ruche, cur, port)
        hops += 1
    return hops


def route_ports(topo: Topology, src: int, dest: int) -> list[int]:
    """Full port sequence src -> dest, for tests and trace output."""
    ports = []
    cur = src
    while cur != dest:
        p = route_next(topo.kind, topo.width, topo.height,
                       topo.ruche_factor, cur, dest)
        ports.append(p)
        cur = neighbor_tile(topo.kind, topo.width, topo.height,
                            topo.ruche_factor, cur, p)
    return ports


def uncongested_latency(hops: int, flits: int) -> int:
    """Cycles from the first flit leaving the source router's output buffer
    to the tail reaching the destination's local buffer."""
    return hops + flits - 1


def max_hops(topo: Topology) -> int:
    """Upper bound on delivered hop count under minimal routing (unit
    channels; ruche only shortens paths)."""
    if topo.kind == TORUS:
        return topo.width // 2 + topo.height // 2
    return (topo.width - 1) + (topo.height - 1)


def slots_per_channel(pool_per_direction: int, n_channels: int,
                      max_msg_words: int) -> int:
    """Split a per-direction buffer pool evenly across channels, raised so
    the longest message plus a bubble slot always fits."""
    base = max(1, pool_per_direction // max(1, n_channels))
    return max(base, max_msg_words + 1)

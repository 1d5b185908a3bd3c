"""Graph datasets, CSR construction, and tile placement.

Everything downstream of this module sees graphs in one of two shapes:

* :class:`Graph`, an edge list with an explicit vertex count, produced by the
  text loader, the binary container loader, or the synthetic generator.
* :class:`Csr`, the compressed-sparse-row form the kernels run on.

A :class:`PartitionedDataset` scatters a CSR across the tile grid under a
:class:`PlacementPolicy`. Vertex-indexed arrays follow the policy's mapping;
edge-space arrays are always contiguously chunked so a neighbor range stays a
contiguous run inside one tile chunk (range splitting in the fan-out task
depends on this). The row-pointer array is distributed as per-vertex
[begin, end) pairs so the neighbor range of a vertex is readable on the tile
that owns the vertex under either policy.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

CSR_MAGIC = b"DLRXCSR1"

# Header flag bits for the binary container.
_FLAG_WIDE = 1  # arrays stored as u64 instead of u32
_FLAG_WEIGHTED = 2  # edge value array present

DEFAULT_RMAT_PROBS = (0.57, 0.19, 0.19, 0.05)


@dataclass
class Graph:
    """Directed edge list plus an explicit vertex count.

    Duplicate edges and self loops are legal and preserved; several of the
    synthetic power-law instances rely on that.
    """

    src: np.ndarray
    dst: np.ndarray
    weights: np.ndarray | None
    num_vertices: int

    @property
    def num_edges(self) -> int:
        return int(self.src.shape[0])

    @property
    def weighted(self) -> bool:
        return self.weights is not None

    def validate(self) -> None:
        if self.src.shape != self.dst.shape:
            raise ValueError("src/dst length mismatch")
        if self.weights is not None and self.weights.shape != self.src.shape:
            raise ValueError("weight array length mismatch")
        if self.num_edges and (self.src.min() < 0 or self.src.max() >= self.num_vertices):
            raise ValueError("source vertex id out of range")
        if self.num_edges and (self.dst.min() < 0 or self.dst.max() >= self.num_vertices):
            raise ValueError("destination vertex id out of range")


@dataclass
class Csr:
    """Compressed sparse row arrays.

    ``edge_values`` is always materialized; for unweighted inputs it is all
    ones and ``weighted`` is False so kernels that need real weights can
    reject the dataset.
    """

    ptr: np.ndarray
    edge_idx: np.ndarray
    edge_values: np.ndarray
    num_vertices: int
    num_edges: int
    weighted: bool

    def out_degree(self, v: int) -> int:
        return int(self.ptr[v + 1] - self.ptr[v])


def load_edge_list(path: str, weighted: bool) -> Graph:
    """Parse a whitespace-separated edge list.

    Lines starting with ``#`` (or ``%``) and blank lines are skipped. Every
    data line must have exactly 2 fields, or exactly 3 when ``weighted``.
    """
    srcs: list[int] = []
    dsts: list[int] = []
    vals: list[int] = []
    want = 3 if weighted else 2
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line[0] in "#%":
                continue
            parts = line.split()
            if len(parts) != want:
                raise ValueError(
                    f"{path}:{lineno}: expected {want} fields, got {len(parts)}"
                )
            try:
                s = int(parts[0])
                d = int(parts[1])
                w = int(parts[2]) if weighted else 0
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-integer field") from exc
            if s < 0 or d < 0:
                raise ValueError(f"{path}:{lineno}: negative vertex id")
            srcs.append(s)
            dsts.append(d)
            if weighted:
                vals.append(w)
    src = np.asarray(srcs, dtype=np.int64)
    dst = np.asarray(dsts, dtype=np.int64)
    nv = int(max(src.max(initial=-1), dst.max(initial=-1)) + 1)
    weights = np.asarray(vals, dtype=np.int64) if weighted else None
    g = Graph(src, dst, weights, nv)
    g.validate()
    return g


# ---------------------------------------------------------------------------
# Synthetic power-law generator
# ---------------------------------------------------------------------------

_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)


def _mix64(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer, vectorized
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= _MIX1
    x ^= x >> np.uint64(27)
    x *= _MIX2
    x ^= x >> np.uint64(31)
    return x


def _edge_stream(seed: int, edge_ids: np.ndarray, lane: int) -> np.ndarray:
    """Counter-based per-edge random word.

    Word ``(seed, edge, lane)`` depends on nothing else, so generating edges
    in any order, or in parallel shards, yields identical output bytes.
    """
    mask = (1 << 64) - 1
    base = ((seed * int(_GOLD)) ^ ((lane + 1) * int(_MIX2))) & mask
    return _mix64(edge_ids.astype(np.uint64) * _GOLD + np.uint64(base))


def _uniform01(words: np.ndarray) -> np.ndarray:
    return (words >> np.uint64(11)).astype(np.float64) * (2.0**-53)


def rmat(
    scale: int,
    edge_factor: int,
    seed: int,
    probs: tuple[float, float, float, float] = DEFAULT_RMAT_PROBS,
    weighted: bool = False,
) -> Graph:
    """Recursive-matrix graph: 2**scale vertices, edge_factor * V edges.

    Quadrant probabilities default to (0.57, 0.19, 0.19, 0.05). Duplicates
    and self loops are kept. Weights, when requested, are uniform in [1, 64].
    """
    if scale < 1 or scale > 30:
        raise ValueError("scale out of range")
    if edge_factor < 1:
        raise ValueError("edge_factor must be positive")
    a, b, c, d = probs
    if abs(a + b + c + d - 1.0) > 1e-9 or min(probs) < 0:
        raise ValueError("quadrant probabilities must be nonnegative and sum to 1")
    nv = 1 << scale
    ne = edge_factor * nv
    eids = np.arange(ne, dtype=np.uint64)
    src = np.zeros(ne, dtype=np.int64)
    dst = np.zeros(ne, dtype=np.int64)
    for level in range(scale):
        u = _uniform01(_edge_stream(seed, eids, level))
        src_bit = (u >= a + b).astype(np.int64)
        dst_bit = ((u >= a) & (u < a + b) | (u >= a + b + c)).astype(np.int64)
        shift = scale - 1 - level
        src |= src_bit << shift
        dst |= dst_bit << shift
    weights = None
    if weighted:
        w = _edge_stream(seed, eids, scale) % np.uint64(64)
        weights = w.astype(np.int64) + 1
    return Graph(src, dst, weights, nv)


def sort_by_degree(g: Graph) -> Graph:
    """Relabel vertices by descending total degree (ties keep old order).

    Produces the adversarial layout where hot vertices share low ids, which
    a contiguous placement packs onto the first tiles.
    """
    deg = np.bincount(g.src, minlength=g.num_vertices) + np.bincount(
        g.dst, minlength=g.num_vertices
    )
    order = np.argsort(-deg, kind="stable")
    new_id = np.empty(g.num_vertices, dtype=np.int64)
    new_id[order] = np.arange(g.num_vertices, dtype=np.int64)
    return Graph(new_id[g.src], new_id[g.dst], g.weights, g.num_vertices)


def build_csr(g: Graph, symmetrize: bool = False) -> Csr:
    """Counting-sort CSR build. Duplicate edges keep their input order."""
    g.validate()
    src, dst = g.src, g.dst
    vals = g.weights
    if symmetrize:
        src = np.concatenate([g.src, g.dst])
        dst = np.concatenate([g.dst, g.src])
        if vals is not None:
            vals = np.concatenate([vals, vals])
    nv = g.num_vertices
    counts = np.bincount(src, minlength=nv) if src.size else np.zeros(nv, dtype=np.int64)
    ptr = np.zeros(nv + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    order = np.argsort(src, kind="stable")
    edge_idx = dst[order].astype(np.int64)
    if vals is not None:
        edge_values = vals[order].astype(np.int64)
    else:
        edge_values = np.ones(src.shape[0], dtype=np.int64)
    return Csr(ptr, edge_idx, edge_values, nv, int(src.shape[0]), vals is not None)


# ---------------------------------------------------------------------------
# Placement
# ---------------------------------------------------------------------------

CONTIGUOUS = "contiguous"
INTERLEAVED = "interleaved"


@dataclass(frozen=True)
class PlacementPolicy:
    """How a global array index maps to (tile, local slot)."""

    kind: str
    num_tiles: int

    def __post_init__(self):
        if self.kind not in (CONTIGUOUS, INTERLEAVED):
            raise ValueError(f"unknown placement kind {self.kind!r}")
        if self.num_tiles < 1:
            raise ValueError("num_tiles must be positive")

    def chunk(self, length: int) -> int:
        """Per-tile slot count for an array of the given length."""
        return max(1, -(-length // self.num_tiles))


def owner_of(global_idx: int, array_len: int, policy: PlacementPolicy) -> tuple[int, int]:
    """Map a global index to its owning (tile, local index)."""
    assert 0 <= global_idx < array_len, "index out of range for owner_of"
    t = policy.num_tiles
    if policy.kind == CONTIGUOUS:
        chunk = policy.chunk(array_len)
        return global_idx // chunk, global_idx % chunk
    return global_idx % t, global_idx // t


def global_of(tile: int, local: int, array_len: int, policy: PlacementPolicy) -> int:
    """Inverse of :func:`owner_of`."""
    if policy.kind == CONTIGUOUS:
        return tile * policy.chunk(array_len) + local
    return local * policy.num_tiles + tile


def owner_of_array(idx: np.ndarray, array_len: int, policy: PlacementPolicy):
    """Vectorized owner_of, returns (tiles, locals)."""
    t = policy.num_tiles
    if policy.kind == CONTIGUOUS:
        chunk = policy.chunk(array_len)
        return idx // chunk, idx % chunk
    return idx % t, idx // t


@dataclass
class PartitionedDataset:
    """Per-tile chunks of a CSR under a placement policy.

    Vertex-space arrays (the per-vertex [begin, end) neighbor ranges and any
    property arrays built on top) follow ``policy``; edge-space arrays are
    contiguous chunks of ``edges_per_chunk`` elements in both policies.
    Padded vertex slots carry the [E, E) empty range.
    """

    policy: PlacementPolicy
    num_vertices: int
    num_edges: int
    nodes_per_chunk: int
    edges_per_chunk: int
    ptr_begin: np.ndarray  # [T, nodes_per_chunk]
    ptr_end: np.ndarray  # [T, nodes_per_chunk]
    edge_idx: np.ndarray  # [T, edges_per_chunk]
    edge_values: np.ndarray  # [T, edges_per_chunk]
    local_vertex_count: np.ndarray  # [T]
    local_edge_count: np.ndarray  # [T]
    weighted: bool = False

    @property
    def num_tiles(self) -> int:
        return self.policy.num_tiles

    def vertex_owner(self, v: int) -> tuple[int, int]:
        return owner_of(v, self.num_vertices, self.policy)

    def reassemble_ptr(self) -> np.ndarray:
        """Rebuild the global row-pointer array from the begin chunks."""
        nv = self.num_vertices
        out = np.empty(nv + 1, dtype=np.int64)
        vidx = np.arange(nv, dtype=np.int64)
        tiles, locs = owner_of_array(vidx, nv, self.policy)
        out[:nv] = self.ptr_begin[tiles, locs]
        out[nv] = self.num_edges
        return out

    def reassemble_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Rebuild the global edge arrays from the contiguous chunks."""
        ne = self.num_edges
        flat_idx = self.edge_idx.reshape(-1)[:ne].copy()
        flat_val = self.edge_values.reshape(-1)[:ne].copy()
        return flat_idx, flat_val

    def scatter_vertex_array(self, values: np.ndarray, pad: int = 0) -> np.ndarray:
        """Lay a global vertex-indexed array out as per-tile chunks."""
        t = self.num_tiles
        out = np.full((t, self.nodes_per_chunk), pad, dtype=np.int64)
        vidx = np.arange(self.num_vertices, dtype=np.int64)
        tiles, locs = owner_of_array(vidx, self.num_vertices, self.policy)
        out[tiles, locs] = values
        return out

    def gather_vertex_array(self, chunks: np.ndarray) -> np.ndarray:
        """Inverse of scatter_vertex_array, dropping padded slots."""
        vidx = np.arange(self.num_vertices, dtype=np.int64)
        tiles, locs = owner_of_array(vidx, self.num_vertices, self.policy)
        return chunks[tiles, locs].copy()


def partition(csr: Csr, policy: PlacementPolicy) -> PartitionedDataset:
    """Split a CSR into per-tile chunks."""
    t = policy.num_tiles
    nv, ne = csr.num_vertices, csr.num_edges
    npc = policy.chunk(nv)
    epc = max(1, -(-ne // t))

    begins = csr.ptr[:nv]
    ends = csr.ptr[1 : nv + 1]
    ptr_begin = np.full((t, npc), ne, dtype=np.int64)
    ptr_end = np.full((t, npc), ne, dtype=np.int64)
    vidx = np.arange(nv, dtype=np.int64)
    tiles, locs = owner_of_array(vidx, nv, policy)
    ptr_begin[tiles, locs] = begins
    ptr_end[tiles, locs] = ends

    edge_idx = np.zeros((t, epc), dtype=np.int64)
    edge_values = np.zeros((t, epc), dtype=np.int64)
    flat_i = edge_idx.reshape(-1)
    flat_v = edge_values.reshape(-1)
    flat_i[:ne] = csr.edge_idx
    flat_v[:ne] = csr.edge_values

    lvc = np.bincount(tiles, minlength=t).astype(np.int64)
    lec = np.full(t, epc, dtype=np.int64)
    full_tiles, rem = divmod(ne, epc)
    lec[full_tiles:] = 0
    if full_tiles < t:
        lec[full_tiles] = rem
    return PartitionedDataset(
        policy=policy,
        num_vertices=nv,
        num_edges=ne,
        nodes_per_chunk=npc,
        edges_per_chunk=epc,
        ptr_begin=ptr_begin,
        ptr_end=ptr_end,
        edge_idx=edge_idx,
        edge_values=edge_values,
        local_vertex_count=lvc,
        local_edge_count=lec,
        weighted=csr.weighted,
    )


# ---------------------------------------------------------------------------
# Binary container
# ---------------------------------------------------------------------------


def save_csr_bin(path: str, csr: Csr) -> None:
    """Write the little-endian binary CSR container.

    Layout: magic, u64 V, u64 E, u32 flags, then ptr[V+1], edge_idx[E] and,
    when the weighted flag is set, edge_values[E]. Arrays are u32 unless any
    value needs u64, which sets the wide flag.
    """
    wide = int(csr.ptr[-1]) > 0xFFFFFFFF or csr.num_vertices > 0xFFFFFFFF
    if csr.num_edges and int(csr.edge_values.max(initial=0)) > 0xFFFFFFFF:
        wide = True
    dt = np.dtype("<u8") if wide else np.dtype("<u4")
    flags = (_FLAG_WIDE if wide else 0) | (_FLAG_WEIGHTED if csr.weighted else 0)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(CSR_MAGIC)
        fh.write(struct.pack("<QQI", csr.num_vertices, csr.num_edges, flags))
        fh.write(csr.ptr.astype(dt).tobytes())
        fh.write(csr.edge_idx.astype(dt).tobytes())
        if csr.weighted:
            fh.write(csr.edge_values.astype(dt).tobytes())
    os.replace(tmp, path)


def load_csr_bin(path: str) -> Csr:
    """Read the binary CSR container written by :func:`save_csr_bin`."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CSR_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        header = fh.read(20)
        if len(header) != 20:
            raise ValueError(f"{path}: truncated header")
        nv, ne, flags = struct.unpack("<QQI", header)
        dt = np.dtype("<u8") if flags & _FLAG_WIDE else np.dtype("<u4")
        weighted = bool(flags & _FLAG_WEIGHTED)
        want = (nv + 1 + ne + (ne if weighted else 0)) * dt.itemsize
        body = fh.read()
        if len(body) != want:
            raise ValueError(f"{path}: expected {want} array bytes, got {len(body)}")
        arr = np.frombuffer(body, dtype=dt)
        ptr = arr[: nv + 1].astype(np.int64)
        edge_idx = arr[nv + 1 : nv + 1 + ne].astype(np.int64)
        if weighted:
            edge_values = arr[nv + 1 + ne :].astype(np.int64)
        else:
            edge_values = np.ones(ne, dtype=np.int64)
    if ptr[0] != 0 or ptr[-1] != ne or np.any(np.diff(ptr) < 0):
        raise ValueError(f"{path}: row pointer array is not monotone from 0 to E")
    if ne and edge_idx.max() >= nv:
        raise ValueError(f"{path}: edge target out of range")
    return Csr(ptr, edge_idx, edge_values, int(nv), int(ne), weighted)


def csr_digest(csr: Csr) -> str:
    """Stable content hash of a CSR, for run reproducibility records."""
    import hashlib

    h = hashlib.sha256()
    h.update(struct.pack("<QQ?", csr.num_vertices, csr.num_edges, csr.weighted))
    h.update(csr.ptr.astype("<i8").tobytes())
    h.update(csr.edge_idx.astype("<i8").tobytes())
    h.update(csr.edge_values.astype("<i8").tobytes())
    return h.hexdigest()

"""Sequential reference implementations used to validate simulator output.

Each oracle recomputes a kernel's answer with a textbook single-threaded
algorithm over plain Python containers, sharing no traversal code with the
simulator. Inputs are the same CSR arrays the simulator partitions, so a
disagreement isolates a simulator or kernel-program defect rather than a
dataset one.
"""

from __future__ import annotations

import heapq
from collections import deque


def _csr_lists(csr):
    """CSR arrays as plain Python lists (fast bulk conversion)."""
    ptr = csr.ptr.tolist()
    eidx = csr.edge_idx.tolist()
    evals = csr.edge_values.tolist()
    return ptr, eidx, evals


def sentinel(flit_width: int) -> int:
    """The unreached-vertex marker: the all-ones flit payload."""
    return (1 << flit_width) - 1


def bfs_levels(csr, root: int, unreached: int) -> list[int]:
    """Hop count from ``root``; ``unreached`` where no path exists."""
    ptr, eidx, _ = _csr_lists(csr)
    dist = [unreached] * csr.num_vertices
    dist[root] = 0
    todo = deque([root])
    while todo:
        u = todo.popleft()
        d = dist[u] + 1
        for i in range(ptr[u], ptr[u + 1]):
            v = eidx[i]
            if dist[v] == unreached:
                dist[v] = d
                todo.append(v)
    return dist


def sssp_distances(csr, root: int, unreached: int) -> list[int]:
    """Dijkstra with a binary heap; weights come from the CSR values."""
    ptr, eidx, evals = _csr_lists(csr)
    dist = [unreached] * csr.num_vertices
    dist[root] = 0
    heap = [(0, root)]
    while heap:
        d, u = heapq.heappop(heap)
        if d != dist[u]:
            continue
        for i in range(ptr[u], ptr[u + 1]):
            v = eidx[i]
            nd = d + evals[i]
            if dist[v] == unreached or nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def wcc_labels(csr) -> list[int]:
    """Minimum vertex id of each weakly connected component, via union-find.

    Edge direction is ignored, so the result is the fixpoint of min-label
    propagation whether or not the CSR was symmetrized.
    """
    n = csr.num_vertices
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    ptr, eidx, _ = _csr_lists(csr)
    for u in range(n):
        for i in range(ptr[u], ptr[u + 1]):
            ru, rv = find(u), find(eidx[i])
            if ru != rv:
                # keep the smaller id as the root so roots are labels
                if ru < rv:
                    parent[rv] = ru
                else:
                    parent[ru] = rv
    return [find(v) for v in range(n)]


def pagerank_ranks(csr, damping: float, epsilon: float,
                   max_epochs: int) -> tuple[list[float], int]:
    """Power iteration with uniform dangling-mass redistribution.

    Termination mirrors the simulator's barrier controller: after each
    propagation pass the controller stops — without applying another
    update — once at least one update has happened and the latest update's
    L1 change is below ``epsilon`` (or the epoch cap is reached). Returns
    (ranks, epochs) where ``epochs`` counts applied updates.
    """
    ptr, eidx, _ = _csr_lists(csr)
    n = csr.num_vertices
    rank = [1.0 / n] * n
    base = (1.0 - damping) / n
    epochs = 0
    delta = float("inf")
    while True:
        acc = [0.0] * n
        dangling = 0.0
        for u in range(n):
            b, e = ptr[u], ptr[u + 1]
            if b == e:
                dangling += rank[u]
                continue
            share = rank[u] / (e - b)
            for i in range(b, e):
                acc[eidx[i]] += share
        if epochs >= 1 and (delta < epsilon or epochs >= max_epochs):
            return rank, epochs
        spread = dangling / n
        delta = 0.0
        for v in range(n):
            new = base + damping * (acc[v] + spread)
            delta += abs(new - rank[v])
            rank[v] = new
        epochs += 1


def spmv_product(csr, x: list) -> list:
    """y = A @ x for the CSR matrix A (rows are vertices)."""
    ptr, eidx, evals = _csr_lists(csr)
    y = [x[0] * 0] * csr.num_vertices  # zero of x's element type
    for r in range(csr.num_vertices):
        s = y[r]
        for i in range(ptr[r], ptr[r + 1]):
            s += evals[i] * x[eidx[i]]
        y[r] = s
    return y

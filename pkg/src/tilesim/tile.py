"""World layout: packs a task program, a partitioned dataset, and a topology
into flat numpy arrays the cycle engine interprets.

Everything dynamic lives in the ``World`` named tuple of arrays; every
scalar the jitted kernel needs lives in ``Cfg``. One module-level contract
worth stating: per-tile scratchpad *data* is a single int64 array ``mem``
with per-space offsets; float-valued spaces store raw float64 bit patterns
and the PU's float ops reinterpret register bits in place.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from . import graphdata as gd
from . import noc
from . import program as pr

# global counter slots (World.counters)
C_CYCLE = 0
C_ACT_IQ = 1        # words sitting in input queues
C_ACT_CQ = 2        # words staged in output channel queues
C_ACT_FLITS = 3     # flits in router buffers
C_ACT_PU = 4        # tiles with an executing task
C_SENT = 5          # messages injected (head left the channel queue)
C_DELIV = 6         # messages delivered into input queues
C_CONS_MSGS = 7     # messages fully consumed by tasks
C_EDGES = 8
C_IMPROVE = 9
C_DRAIN_TOT = 10
C_DRAIN_WIN = 11    # vertices drained since the last epoch broadcast
C_EPOCHS = 12       # epoch broadcasts fired
C_QUIET_SINCE = 13
C_LAST_EVENT = 14
C_INJ_FLITS = 15
C_DELIV_FLITS = 16
C_WIRE_UNIT = 17    # unit-link crossings
C_WIRE_RUCHE = 18   # ruche-link crossings
C_DONE = 19
C_PR_DELTA = 20     # last reduced rank delta, float bits
C_MOVES = 21        # buffer-to-buffer flit moves
C_OPS = 22          # micro-ops executed
N_COUNTERS = 24

# step_n exit status
ST_BUDGET = 0       # chunk budget exhausted, still running
ST_DONE = 1
ST_OVERFLOW = 3     # queue push with no room
ST_UNDERFLOW = 4    # queue pop/peek on empty
ST_BUF_OVERFLOW = 5
ST_LIVELOCK = 6
ST_FAULT = 7        # bad opcode, OOB memory access, MSB of 0, div by 0
ST_PARTIAL_MSG = 8  # task ended with a fraction of a message staged
ST_EPOCH_RACE = 9   # task requiring an empty queue scheduled while nonempty

STATUS_NAMES = {
    ST_BUDGET: "budget",
    ST_DONE: "done",
    ST_OVERFLOW: "queue overflow",
    ST_UNDERFLOW: "queue underflow",
    ST_BUF_OVERFLOW: "router buffer overflow",
    ST_LIVELOCK: "livelock suspected",
    ST_FAULT: "processing fault",
    ST_PARTIAL_MSG: "partial message at task end",
    ST_EPOCH_RACE: "epoch ordering violation",
}

MODE_BARRIERLESS = 0
MODE_EPOCH = 1

KERNEL_GENERIC = 0
KERNEL_PAGERANK = 1

# in-link opposite: arriving on the N link means the neighbor sent south
OPP = np.array([0, noc.P_S, noc.P_N, noc.P_W, noc.P_E,
                noc.P_RS, noc.P_RN, noc.P_RW, noc.P_RE], dtype=np.int64)


class Cfg(NamedTuple):
    kind: int
    width: int
    height: int
    ruche: int
    tiles: int
    fw: int
    nq: int
    nt: int
    nc: int
    ns: int
    slots: int
    max_msg: int
    pol_kind: int
    v_len: int
    v_chunk: int
    e_len: int
    e_chunk: int
    mode: int
    idle_lat: int
    epoch_task: int
    bc_chan: int
    livelock: int
    kernel_kind: int
    max_epochs: int
    slot_dangling: int
    slot_delta: int


class World(NamedTuple):
    # program
    code: np.ndarray
    t_begin: np.ndarray
    t_end: np.ndarray
    t_iq: np.ndarray
    t_msg: np.ndarray
    t_np: np.ndarray
    t_pwide: np.ndarray
    t_worst: np.ndarray
    t_guard: np.ndarray
    t_iqcap: np.ndarray
    t_req_empty: np.ndarray
    # queues
    q_kind: np.ndarray
    q_cap: np.ndarray
    q_off: np.ndarray
    q_msg: np.ndarray
    q_chan: np.ndarray
    q_route: np.ndarray
    q_hi: np.ndarray
    q_lo: np.ndarray
    chan_msg: np.ndarray
    chan_iq: np.ndarray
    chan_cq: np.ndarray
    # memory spaces
    space_off: np.ndarray
    space_len: np.ndarray
    mem: np.ndarray
    scratch: np.ndarray
    # queue state
    q_data: np.ndarray
    q_head: np.ndarray
    q_count: np.ndarray
    iq_tot: np.ndarray
    cq_vis: np.ndarray
    pushed_cur: np.ndarray
    # processing unit
    pu_task: np.ndarray
    pu_pc: np.ndarray
    pu_stall: np.ndarray
    # router buffers
    buf_data: np.ndarray
    buf_dest: np.ndarray
    buf_rem: np.ndarray
    buf_head: np.ndarray
    buf_count: np.ndarray
    buf_resv: np.ndarray
    occ0: np.ndarray
    resv0: np.ndarray
    # wormhole route state
    open_out: np.ndarray
    open_rem: np.ndarray
    open_resv: np.ndarray
    inj_open: np.ndarray
    inj_rem: np.ndarray
    inj_resv: np.ndarray
    inj_dest: np.ndarray
    out_owner: np.ndarray
    rr_link: np.ndarray
    rr_grant: np.ndarray
    rr_deliver: np.ndarray
    up_tile: np.ndarray
    # arbitration scratch (single-threaded reuse)
    cnd_link: np.ndarray
    cnd_chan: np.ndarray
    cnd_out: np.ndarray
    cnd_cont: np.ndarray
    cnd_bub: np.ndarray
    cnd_src: np.ndarray
    cnd_win: np.ndarray
    # floats the kernel needs (eps, damp)
    aux_f: np.ndarray
    # statistics
    counters: np.ndarray
    stat_busy: np.ndarray
    stat_gated: np.ndarray
    stat_idle: np.ndarray
    stat_rd: np.ndarray
    stat_wr: np.ndarray
    stat_stall: np.ndarray
    stat_inv: np.ndarray
    stat_iqmax: np.ndarray
    stat_flits: np.ndarray
    stat_bufmax: np.ndarray
    ch_sent: np.ndarray
    ch_deliv: np.ndarray
    qw_push: np.ndarray
    qw_pop: np.ndarray


def _space_length(spec: pr.SpaceSpec, npc: int, epc: int) -> int:
    if spec.kind == pr.PER_VERTEX:
        return npc
    if spec.kind == pr.PER_EDGE:
        return epc
    if spec.kind == pr.BITMAP:
        return max(1, (npc + 31) // 32)
    if spec.kind == pr.SCALAR:
        return max(1, spec.scalar_len)
    raise ValueError(f"unknown space kind {spec.kind!r}")


def default_idle_latency(topo: noc.Topology) -> int:
    # staged idle-signal tree: up and back down
    return 2 * (int(math.log2(topo.width)) + int(math.log2(topo.height)))


def build_world(prog: pr.Program, topo: noc.Topology, *,
                dataset: gd.PartitionedDataset | None = None,
                placement: gd.PlacementPolicy | None = None,
                v_len: int | None = None,
                e_len: int | None = None,
                flit_width: int = 32,
                pool: int = 8,
                mode: int = MODE_BARRIERLESS,
                idle_lat: int | None = None,
                seeds=(),
                seed_space: str | None = None,
                seed_queue: str | None = None,
                init_spaces: dict | None = None,
                kernel_kind: int = KERNEL_GENERIC,
                eps: float = 0.0,
                damp: float = 0.85,
                max_epochs: int = 10**9,
                slot_dangling: int = 5,
                slot_delta: int = 6,
                req_empty: dict | None = None,
                livelock: int | None = None,
                wm_hi=(7, 8),
                wm_lo=(1, 8)) -> tuple[Cfg, World]:
    """Allocate and initialize the full simulation state.

    ``seeds`` are global vertex ids: their bit is set in ``seed_space`` and
    the containing word index is queued on ``seed_queue`` at the owner tile,
    so initial work flows through the same drain task as everything else.
    """
    pr.validate_program(prog, flit_width)
    tiles = topo.num_tiles

    if dataset is not None:
        placement = dataset.policy
        v_len = int(dataset.local_vertex_count.sum())
        e_len = int(dataset.local_edge_count.sum())
        npc = dataset.nodes_per_chunk
        epc = dataset.edges_per_chunk
    else:
        if placement is None:
            placement = gd.PlacementPolicy(gd.CONTIGUOUS, tiles)
        v_len = tiles if v_len is None else v_len
        e_len = tiles if e_len is None else e_len
        npc = placement.chunk(v_len)
        epc = max(1, -(-e_len // tiles))
    if placement.num_tiles != tiles:
        raise ValueError("placement tile count does not match the grid")

    nq = len(prog.queues)
    nt = len(prog.tasks)
    ns = len(prog.spaces)

    # channels: one per output channel queue, plus the epoch broadcast
    cq_ids = [i for i, q in enumerate(prog.queues) if q.kind == pr.CQ]
    for c, qi in enumerate(cq_ids):
        if prog.queues[qi].channel != c:
            raise ValueError(
                f"queue {prog.queues[qi].name}: channel ids must follow "
                f"declaration order (expected {c})")
    nc = len(cq_ids) + (1 if mode == MODE_EPOCH else 0)
    if nc == 0:
        nc = 1  # engine arrays must not be zero-width

    q_kind = np.array([0 if q.kind == pr.IQ else 1 for q in prog.queues],
                      dtype=np.int64)
    q_cap = np.array([q.capacity_words for q in prog.queues], dtype=np.int64)
    q_off = np.zeros(nq, dtype=np.int64)
    if nq > 1:
        np.cumsum(q_cap[:-1], out=q_off[1:])
    q_msg = np.array([pr.msg_words(q.fields, flit_width)
                      for q in prog.queues], dtype=np.int64)
    q_chan = np.full(nq, -1, dtype=np.int64)
    for c, qi in enumerate(cq_ids):
        q_chan[qi] = c
    q_route = np.array(
        [0 if q.route_space == pr.ROUTE_VERTEX else
         (1 if q.route_space == pr.ROUTE_EDGE else -1)
         for q in prog.queues], dtype=np.int64)
    hn, hd = wm_hi
    ln, ld = wm_lo
    q_hi = (hn * q_cap + hd - 1) // hd
    q_lo = (ln * q_cap) // ld

    chan_msg = np.ones(nc, dtype=np.int64)
    chan_iq = np.full(nc, -1, dtype=np.int64)
    chan_cq = np.full(nc, -1, dtype=np.int64)
    for c, qi in enumerate(cq_ids):
        chan_msg[c] = q_msg[qi]
        chan_iq[c] = prog.queues[qi].delivers_to
        chan_cq[c] = qi
    bc_chan = -1
    epoch_task = -1
    if mode == MODE_EPOCH:
        names = [t.name for t in prog.tasks]
        ep = prog.meta.get("epoch_task")
        if ep is None or ep not in names:
            raise ValueError("per-epoch mode needs an epoch task")
        epoch_task = names.index(ep)
        bc_chan = nc - 1
        ep_iq = prog.tasks[epoch_task].iq
        chan_msg[bc_chan] = q_msg[ep_iq]
        chan_iq[bc_chan] = ep_iq

    max_msg = int(chan_msg.max())
    slots = noc.slots_per_channel(pool, nc, max_msg)

    # head flits must fit every routed local index
    lb = topo.local_bits(flit_width)
    if npc > (1 << lb) or epc > (1 << lb):
        raise ValueError(
            f"chunk of {max(npc, epc)} entries does not fit {lb} local "
            f"index bits on a {topo.width}x{topo.height} grid")

    # program tables
    code_parts = []
    t_begin = np.zeros(nt, dtype=np.int64)
    t_end = np.zeros(nt, dtype=np.int64)
    pos = 0
    for k, t in enumerate(prog.tasks):
        t_begin[k] = pos
        pos += t.code.shape[0]
        t_end[k] = pos
        code_parts.append(t.code)
    code = (np.concatenate(code_parts) if code_parts
            else np.zeros((0, 6), dtype=np.int64))
    t_iq = np.array([t.iq for t in prog.tasks], dtype=np.int64)
    t_msg = q_msg[t_iq] if nt else np.zeros(0, dtype=np.int64)
    t_np = np.array([len(t.params) for t in prog.tasks], dtype=np.int64)
    maxp = max(1, int(t_np.max()) if nt else 1)
    t_pwide = np.zeros((nt, maxp), dtype=np.int64)
    for k, t in enumerate(prog.tasks):
        for i, (_, wide) in enumerate(t.params):
            t_pwide[k, i] = 1 if wide else 0
    t_worst = np.zeros((nt, nq), dtype=np.int64)
    t_guard = np.zeros((nt, nq), dtype=np.int64)
    for k, t in enumerate(prog.tasks):
        for o in t.outs:
            t_worst[k, o.queue] = o.worst_words
            t_guard[k, o.queue] = 1 if o.guarded else 0
    t_iqcap = q_cap[t_iq] if nt else np.zeros(0, dtype=np.int64)
    t_req_empty = np.full(nt, -1, dtype=np.int64)
    for tname, qname in (req_empty or {}).items():
        t_req_empty[prog.task_index(tname)] = prog.queue_index(qname)

    # a preloading task must consume exactly one input message at dispatch
    for k, t in enumerate(prog.tasks):
        if not t.params:
            continue
        words = sum(pr.field_words(pr.WIDE if w_ else pr.WORD, flit_width)
                    for _, w_ in t.params)
        if words != int(t_msg[k]):
            raise ValueError(
                f"task {t.name}: params span {words} words but its input "
                f"message is {int(t_msg[k])}")

    # memory spaces
    space_len = np.array([_space_length(s, npc, epc) for s in prog.spaces],
                         dtype=np.int64)
    space_off = np.zeros(ns, dtype=np.int64)
    if ns > 1:
        np.cumsum(space_len[:-1], out=space_off[1:])
    mem_words = int(space_len.sum()) if ns else 1
    mem = np.zeros((tiles, mem_words), dtype=np.int64)

    for i, s in enumerate(prog.spaces):
        sl = slice(int(space_off[i]), int(space_off[i] + space_len[i]))
        if dataset is not None and s.name in ("ptr_b", "ptr_e", "eidx",
                                              "eval"):
            src = {"ptr_b": dataset.ptr_begin, "ptr_e": dataset.ptr_end,
                   "eidx": dataset.edge_idx, "eval": dataset.edge_values
                   }[s.name]
            mem[:, sl] = src
        elif init_spaces and s.name in init_spaces:
            val = init_spaces[s.name]
            if isinstance(val, float):
                mem[:, sl] = np.int64(pr.float_bits(val))
            elif isinstance(val, int):
                mem[:, sl] = val
            else:
                arr = np.asarray(val)
                if arr.dtype == np.float64:
                    arr = arr.view(np.int64)
                mem[:, sl] = arr

    qw = int(q_cap.sum()) if nq else 1
    counters = np.zeros(N_COUNTERS, dtype=np.int64)
    counters[C_QUIET_SINCE] = -1

    # link wiring: up_tile[t, L] is the neighbor whose OPP[L] buffer feeds
    # in-link L of tile t; -1 on mesh edges or when ruche is disabled
    up_tile = np.full((tiles, noc.N_PORTS), -1, dtype=np.int64)
    for t in range(tiles):
        for link in range(1, noc.N_PORTS):
            if topo.ruche_factor == 1 and link >= noc.P_RN:
                continue
            try:
                up_tile[t, link] = noc.neighbor_tile(
                    topo.kind, topo.width, topo.height, topo.ruche_factor,
                    t, link)
            except AssertionError:
                pass

    cfg = Cfg(kind=topo.kind, width=topo.width, height=topo.height,
              ruche=topo.ruche_factor, tiles=tiles, fw=flit_width, nq=nq,
              nt=nt, nc=nc, ns=ns, slots=slots, max_msg=max_msg,
              pol_kind=1 if placement.kind == gd.INTERLEAVED else 0,
              v_len=v_len,
              v_chunk=placement.chunk(v_len), e_len=e_len,
              e_chunk=max(1, -(-e_len // tiles)), mode=mode,
              idle_lat=default_idle_latency(topo) if idle_lat is None
              else idle_lat,
              epoch_task=epoch_task, bc_chan=bc_chan,
              livelock=(tiles * max_msg * slots if livelock is None
                        else livelock),
              kernel_kind=kernel_kind, max_epochs=max_epochs,
              slot_dangling=slot_dangling, slot_delta=slot_delta)

    world = World(
        code=code, t_begin=t_begin, t_end=t_end, t_iq=t_iq, t_msg=t_msg,
        t_np=t_np, t_pwide=t_pwide, t_worst=t_worst, t_guard=t_guard,
        t_iqcap=t_iqcap, t_req_empty=t_req_empty,
        q_kind=q_kind, q_cap=q_cap, q_off=q_off, q_msg=q_msg, q_chan=q_chan,
        q_route=q_route, q_hi=q_hi, q_lo=q_lo,
        chan_msg=chan_msg, chan_iq=chan_iq, chan_cq=chan_cq,
        space_off=space_off, space_len=space_len,
        mem=mem, scratch=np.zeros((tiles, pr.N_SCRATCH), dtype=np.int64),
        q_data=np.zeros((tiles, qw), dtype=np.int64),
        q_head=np.zeros((tiles, nq), dtype=np.int64),
        q_count=np.zeros((tiles, nq), dtype=np.int64),
        iq_tot=np.zeros(tiles, dtype=np.int64),
        cq_vis=np.zeros((tiles, nq), dtype=np.int64),
        pushed_cur=np.zeros((tiles, nq), dtype=np.int64),
        pu_task=np.full(tiles, -1, dtype=np.int64),
        pu_pc=np.zeros(tiles, dtype=np.int64),
        pu_stall=np.zeros(tiles, dtype=np.int64),
        buf_data=np.zeros((tiles, noc.N_PORTS, nc, slots), dtype=np.int64),
        buf_dest=np.zeros((tiles, noc.N_PORTS, nc, slots), dtype=np.int64),
        buf_rem=np.zeros((tiles, noc.N_PORTS, nc, slots), dtype=np.int64),
        buf_head=np.zeros((tiles, noc.N_PORTS, nc), dtype=np.int64),
        buf_count=np.zeros((tiles, noc.N_PORTS, nc), dtype=np.int64),
        buf_resv=np.zeros((tiles, noc.N_PORTS, nc), dtype=np.int64),
        occ0=np.zeros((tiles, noc.N_PORTS, nc), dtype=np.int64),
        resv0=np.zeros((tiles, noc.N_PORTS, nc), dtype=np.int64),
        open_out=np.full((tiles, 8, nc), -1, dtype=np.int64),
        open_rem=np.zeros((tiles, 8, nc), dtype=np.int64),
        open_resv=np.zeros((tiles, 8, nc), dtype=np.int64),
        inj_open=np.full((tiles, nc), -1, dtype=np.int64),
        inj_rem=np.zeros((tiles, nc), dtype=np.int64),
        inj_resv=np.zeros((tiles, nc), dtype=np.int64),
        inj_dest=np.zeros((tiles, nc), dtype=np.int64),
        out_owner=np.full((tiles, noc.N_PORTS, nc), -1, dtype=np.int64),
        rr_link=np.zeros((tiles, 8), dtype=np.int64),
        rr_grant=np.zeros((tiles, noc.N_PORTS, nc), dtype=np.int64),
        rr_deliver=np.zeros(tiles, dtype=np.int64),
        up_tile=up_tile,
        cnd_link=np.zeros(9 + nc, dtype=np.int64),
        cnd_chan=np.zeros(9 + nc, dtype=np.int64),
        cnd_out=np.zeros(9 + nc, dtype=np.int64),
        cnd_cont=np.zeros(9 + nc, dtype=np.int64),
        cnd_bub=np.zeros(9 + nc, dtype=np.int64),
        cnd_src=np.zeros(9 + nc, dtype=np.int64),
        cnd_win=np.zeros(9 + nc, dtype=np.int64),
        aux_f=np.array([eps, damp, 0.0, 0.0], dtype=np.float64),
        counters=counters,
        stat_busy=np.zeros(tiles, dtype=np.int64),
        stat_gated=np.zeros(tiles, dtype=np.int64),
        stat_idle=np.zeros(tiles, dtype=np.int64),
        stat_rd=np.zeros(tiles, dtype=np.int64),
        stat_wr=np.zeros(tiles, dtype=np.int64),
        stat_stall=np.zeros(tiles, dtype=np.int64),
        stat_inv=np.zeros((tiles, max(1, nt)), dtype=np.int64),
        stat_iqmax=np.zeros((tiles, nq), dtype=np.int64),
        stat_flits=np.zeros((tiles, noc.N_PORTS), dtype=np.int64),
        stat_bufmax=np.zeros((tiles, noc.N_PORTS), dtype=np.int64),
        ch_sent=np.zeros(nc, dtype=np.int64),
        ch_deliv=np.zeros(nc, dtype=np.int64),
        qw_push=np.zeros(nq, dtype=np.int64),
        qw_pop=np.zeros(nq, dtype=np.int64),
    )

    if seeds:
        if seed_space is None or seed_queue is None:
            raise ValueError("seeds need a bitmap space and a drain queue")
        si = prog.space_index(seed_space)
        qi = prog.queue_index(seed_queue)
        per_tile_words: dict[int, list[int]] = {}
        for v in seeds:
            tile, lv = gd.owner_of(int(v), v_len, placement)
            word = lv // 32
            off = int(space_off[si]) + word
            if not (world.mem[tile, off] >> (lv % 32)) & 1:
                world.mem[tile, off] |= 1 << (lv % 32)
                per_tile_words.setdefault(tile, []).append(word)
        for tile, words in per_tile_words.items():
            for w in sorted(set(words)):
                push_queue(world, tile, qi, [w])

    return cfg, world


# -- python-side queue helpers (mirror the kernel's bookkeeping) ---------------


def push_queue(world: World, tile: int, q: int, words) -> None:
    off = int(world.q_off[q])
    cap = int(world.q_cap[q])
    for v in words:
        cnt = int(world.q_count[tile, q])
        if cnt >= cap:
            raise ValueError(f"tile {tile} queue {q} full")
        world.q_data[tile, off + (int(world.q_head[tile, q]) + cnt) % cap] \
            = v
        world.q_count[tile, q] += 1
        world.qw_push[q] += 1
        if world.q_kind[q] == 0:
            world.iq_tot[tile] += 1
            world.counters[C_ACT_IQ] += 1
        else:
            world.counters[C_ACT_CQ] += 1
        if world.q_count[tile, q] > world.stat_iqmax[tile, q]:
            world.stat_iqmax[tile, q] = world.q_count[tile, q]


def read_queue(world: World, tile: int, q: int) -> list[int]:
    off = int(world.q_off[q])
    cap = int(world.q_cap[q])
    head = int(world.q_head[tile, q])
    return [int(world.q_data[tile, off + (head + k) % cap])
            for k in range(int(world.q_count[tile, q]))]


def seed_buffer(cfg: Cfg, world: World, tile: int, port: int, chan: int,
                payloads, dest: int) -> None:
    """Place one whole message directly into a router output buffer, as if
    it had just been routed there. For interconnect tests."""
    n = len(payloads)
    for i, v in enumerate(payloads):
        idx = (int(world.buf_head[tile, port, chan])
               + int(world.buf_count[tile, port, chan])) % cfg.slots
        world.buf_data[tile, port, chan, idx] = v
        world.buf_dest[tile, port, chan, idx] = dest
        world.buf_rem[tile, port, chan, idx] = n - i
        world.buf_count[tile, port, chan] += 1
        world.counters[C_ACT_FLITS] += 1
    world.counters[C_SENT] += 1
    world.counters[C_INJ_FLITS] += n
    world.ch_sent[chan] += 1


def space_view(cfg: Cfg, world: World, prog: pr.Program, name: str,
               dtype=np.int64) -> np.ndarray:
    """Per-tile view of one memory space, optionally as float64."""
    i = prog.space_index(name)
    sl = world.mem[:, int(world.space_off[i]):
                   int(world.space_off[i] + world.space_len[i])]
    return sl.view(np.float64) if dtype == np.float64 else sl

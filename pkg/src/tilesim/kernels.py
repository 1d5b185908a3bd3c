"""Kernel task programs and the builder that wires them to a dataset.

Every kernel follows the same four-task pipeline over the partitioned CSR:

* ``explore`` (T1) peeks the next vertex off the local work queue, reads its
  neighbor range, and splits it into sub-ranges that each live inside one
  edge chunk, sending one range message per sub-range to the chunk's owner.
  When the range-output channel fills mid-vertex it retires and resumes on
  the next invocation; the vertex stays at the head of the work queue until
  its whole range has been emitted (the resume flag is simply
  ``cursor == range_end``).
* ``expand`` (T2) walks one sub-range of edge chunk memory and emits one
  candidate message per edge to the destination vertex's owner.
* ``apply`` (T3) owns the destination vertex: it folds the candidate into
  the vertex property (relax-min for the distance kernels, accumulate for
  the others) and, for frontier kernels, inserts the vertex into the local
  frontier bitmap, queueing the bitmap word's id the moment the word goes
  from zero to nonzero.
* ``drain`` (T4) pops a bitmap word id and moves its vertices into the work
  queue while there is room, re-queueing the word id if the work queue
  fills first, so a word id is queued exactly when its word is nonzero.

Per-epoch (barrier) variants add an ``epoch`` task triggered by the global
idle detector's broadcast; it promotes the next-epoch bitmap into the live
one (or, for the rank kernel, applies the gathered contributions) and
re-seeds the drain queue.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import graphdata as gd
from . import noc
from . import oracles
from . import program as pr
from .engine import RunResult, run
from .program import (CQ, F_DRAIN, F_EDGE, F_IMPROVE, F_WIDE, HEAD, IQ,
                      ROUTE_EDGE, ROUTE_VERTEX, WIDE, WORD, Asm, OutSpec,
                      Program, QueueSpec, SpaceSpec, TaskSpec)
from .tile import (KERNEL_GENERIC, KERNEL_PAGERANK, MODE_BARRIERLESS,
                   MODE_EPOCH, build_world, space_view)

KERNELS = ("bfs", "sssp", "wcc", "pagerank", "spmv")

# queue capacities in words
WORK_Q_WORDS = 32
RANGE_IQ_WORDS = 128
CAND_IQ_WORDS = 2048
RANGE_CQ_WORDS = 128
PROD_CQ_MSGS = 64
DEFAULT_CHUNK_LIMIT = 512

# persistent scratch slots (survive across task invocations on a tile)
SLOT_CURSOR = 0
SLOT_RANGE_END = 1
SLOT_DANGLING = 5
SLOT_DELTA = 6


def _to_int64_bits(value: int) -> int:
    """Reinterpret an unsigned 64-bit payload as the signed storage word."""
    value &= (1 << 64) - 1
    return value - (1 << 64) if value >= 1 << 63 else value


def frontier_words(nodes_per_chunk: int) -> int:
    """Bitmap words per tile: 32 vertices per word."""
    return max(1, (nodes_per_chunk + 31) // 32)


# ---------------------------------------------------------------------------
# Task bodies
# ---------------------------------------------------------------------------


def _emit_range_chunks(a: Asm, iq_work: int, cq_range: int, msg_w: int,
                       epc: int, chunk_limit: int, val_reg: str,
                       val_wide: bool) -> None:
    """Shared tail of every explore task: split [cur, end) at edge-chunk
    boundaries (and at ``chunk_limit``) and push one range message per
    piece while the output channel has room. The head flit carries the
    global begin index (localized at injection); the second flit carries
    the chunk-local end index. Falls off the end with the vertex retained
    when the channel fills; pops it when the range is done."""
    for nm in ("t", "room", "nb", "ce", "n", "tepc"):
        a.temp(nm)
    a.label("chunk_loop")
    a.cmpeq("t", "cur", "end")
    a.bnez("t", "range_done")
    a.qroom("room", cq_range)
    a.cmplti("t", "room", msg_w)
    a.bnez("t", "end")  # channel full: retire, resume later
    a.ldi("tepc", epc)
    a.div("nb", "cur", "tepc")
    a.addi("nb", "nb", 1)
    a.mul("nb", "nb", "tepc")  # next edge-chunk boundary above cur
    a.min_("ce", "end", "nb")
    a.addi("t", "cur", chunk_limit)
    a.min_("ce", "ce", "t")
    a.sub("n", "ce", "nb")
    a.add("n", "n", "tepc")  # ce - chunk base = local end index
    a.qpush(cq_range, "cur")  # head: global edge index, owner-routed
    a.qpush(cq_range, "n")
    a.qpush(cq_range, val_reg, flags=F_WIDE if val_wide else 0)
    a.mov("cur", "ce")
    a.jmp("chunk_loop")
    a.label("range_done")
    a.qdrop(iq_work, 1)


def _explore_task(iq_work: int, cq_range: int, msg_w: int, sp_ptrb: int,
                  sp_ptre: int, sp_val: int, epc: int,
                  chunk_limit: int) -> tuple[np.ndarray, int]:
    """Explore body for kernels whose range message carries a per-vertex
    property word (distance, label, or global row id)."""
    a = Asm()
    a.glob("cur", SLOT_CURSOR)
    a.glob("end", SLOT_RANGE_END)
    a.temp("v")
    a.temp("dv")
    a.temp("t0")
    a.qpeek("v", iq_work, 0)
    a.cmpeq("t0", "cur", "end")
    a.beqz("t0", "emit")  # mid-range: resume
    a.ld("cur", sp_ptrb, "v")
    a.ld("end", sp_ptre, "v")
    a.label("emit")
    a.ld("dv", sp_val, "v")
    _emit_range_chunks(a, iq_work, cq_range, msg_w, epc, chunk_limit,
                       "dv", False)
    return a.build(), a.n_temps()


def _explore_rank_task(iq_work: int, cq_range: int, msg_w: int, sp_ptrb: int,
                       sp_ptre: int, sp_rank: int, epc: int,
                       chunk_limit: int) -> tuple[np.ndarray, int]:
    """Explore body for the rank kernel: the range message carries this
    vertex's contribution rank/outdeg; vertices with no out-edges add
    their whole rank to the tile's dangling accumulator instead."""
    a = Asm()
    a.glob("cur", SLOT_CURSOR)
    a.glob("end", SLOT_RANGE_END)
    a.glob("dang", SLOT_DANGLING)
    for nm in ("v", "od", "rk", "b0", "odf", "cf", "t0"):
        a.temp(nm)
    a.qpeek("v", iq_work, 0)
    a.cmpeq("t0", "cur", "end")
    a.beqz("t0", "contrib")  # mid-range: recompute the share and resume
    a.ld("cur", sp_ptrb, "v")
    a.ld("end", sp_ptre, "v")
    a.sub("od", "end", "cur")
    a.bnez("od", "contrib")
    a.ld("rk", sp_rank, "v")  # dangling: bank the rank for the reducer
    a.fadd("dang", "dang", "rk")
    a.qdrop(iq_work, 1)
    a.jmp("end")
    a.label("contrib")
    a.ld("rk", sp_rank, "v")
    a.ld("b0", sp_ptrb, "v")
    a.sub("od", "end", "b0")
    a.i2f("odf", "od")
    a.fdiv("cf", "rk", "odf")
    _emit_range_chunks(a, iq_work, cq_range, msg_w, epc, chunk_limit,
                       "cf", True)
    return a.build(), a.n_temps()


def _expand_body(cq_cand: int, sp_eidx: int, sp_eval: int, mode: str,
                 extra_reg: Optional[str] = None,
                 wide_val: bool = False) -> tuple[np.ndarray, int, tuple]:
    """Expand body: one candidate message per edge in [e, e+n).

    mode selects the payload next to the routed head:
      "addw"  — edge weight + carried distance (fused load-add-push)
      "inc"   — carried distance + 1, computed once
      "copy"  — carried value verbatim
      "matrix"— edge value then carried row id (two payload words)
    """
    if mode == "copy" and wide_val:
        params = (("e", False), ("n", False), ("d", True))
    else:
        params = (("e", False), ("n", False), ("d", False))
    a = Asm(params=params)
    a.temp("i")
    a.temp("endi")
    a.temp("t0")
    if mode == "inc":
        a.temp("cand")
        a.addi("cand", "d", 1)
    a.mov("i", "e")
    a.add("endi", "e", "n")
    a.label("edge_loop")
    a.qpushl(cq_cand, sp_eidx, "i", flags=F_EDGE)  # head: dest vertex id
    if mode == "addw":
        a.qpushla(cq_cand, sp_eval, "i", "d")
    elif mode == "inc":
        a.qpush(cq_cand, "cand")
    elif mode == "copy":
        a.qpush(cq_cand, "d", flags=F_WIDE if wide_val else 0)
    elif mode == "matrix":
        a.qpushl(cq_cand, sp_eval, "i", flags=F_WIDE if wide_val else 0)
        a.qpush(cq_cand, "d")  # carried global row id
    else:
        raise ValueError(mode)
    a.addi("i", "i", 1)
    a.cmplt("t0", "i", "endi")
    a.bnez("t0", "edge_loop")
    return a.build(), a.n_temps(), params


def _relax_body(iq_blocks: int, sp_value: int, sp_bitmap: int,
                queue_block: bool,
                unsigned_cmp: bool) -> tuple[np.ndarray, int, tuple]:
    """Apply body for the distance kernels: relax-min the carried candidate
    into the owned property element; on improvement, insert the vertex into
    the frontier bitmap and queue the word id on the 0 -> nonzero edge.
    ``queue_block=False`` (per-epoch mode) only marks the next-epoch bitmap.
    ``unsigned_cmp`` compares through a sign flip so the all-ones unreached
    sentinel at 64-bit flit width still orders above every real value."""
    params = (("v", False), ("d", False))
    a = Asm(params=params)
    for nm in ("old", "t0", "wi", "bw", "bi", "nw"):
        a.temp(nm)
    a.ld("old", sp_value, "v")
    if unsigned_cmp:
        a.temp("sb")
        a.temp("x1")
        a.temp("x2")
        a.ldi("sb", _to_int64_bits(1 << 63))
        a.xor("x1", "d", "sb")
        a.xor("x2", "old", "sb")
        a.cmplt("t0", "x1", "x2")
    else:
        a.cmplt("t0", "d", "old")
    a.beqz("t0", "end")
    a.st(sp_value, "v", "d", flags=F_IMPROVE)
    a.shri("wi", "v", 5)
    a.ld("bw", sp_bitmap, "wi")
    a.andi("bi", "v", 31)
    a.bset("nw", "bw", "bi")
    a.st(sp_bitmap, "wi", "nw")
    if queue_block:
        a.bnez("bw", "end")  # word was already nonzero: id already queued
        a.qpush(iq_blocks, "wi")
    return a.build(), a.n_temps(), params


def _drain_body(iq_work: int, iq_blocks: int,
                sp_bitmap: int) -> tuple[np.ndarray, int, tuple]:
    """Drain body: move one bitmap word's vertices into the work queue,
    re-queueing the word id if the work queue fills mid-word."""
    params = (("w", False),)
    a = Asm(params=params)
    for nm in ("bits", "room", "b", "v", "t0"):
        a.temp(nm)
    a.ld("bits", sp_bitmap, "w")
    a.label("bit_loop")
    a.bnez("bits", "more")
    a.st(sp_bitmap, "w", "bits")  # word fully drained: write back the zero
    a.jmp("end")
    a.label("more")
    a.qroom("room", iq_work)
    a.beqz("room", "requeue")
    a.msb("b", "bits")
    a.bclr("bits", "bits", "b")
    a.shli("v", "w", 5)
    a.add("v", "v", "b")
    a.qpush(iq_work, "v", flags=F_DRAIN)
    a.jmp("bit_loop")
    a.label("requeue")
    a.st(sp_bitmap, "w", "bits")
    a.qpush(iq_blocks, "w")
    return a.build(), a.n_temps(), params


def _epoch_promote_body(iq_blocks: int, sp_front: int, sp_next: int,
                        flen: int) -> tuple[np.ndarray, int, tuple]:
    """Generic epoch task: promote the next-epoch bitmap into the live one
    and queue every nonzero word for draining."""
    params = (("ep", False),)
    a = Asm(params=params)
    for nm in ("z", "wi", "t0", "v2"):
        a.temp(nm)
    a.ldi("z", 0)
    a.ldi("wi", 0)
    a.label("word_loop")
    a.cmplti("t0", "wi", flen)
    a.beqz("t0", "end")
    a.ld("v2", sp_next, "wi")
    a.beqz("v2", "next_word")
    a.st(sp_front, "wi", "v2")
    a.st(sp_next, "wi", "z")
    a.qpush(iq_blocks, "wi")
    a.label("next_word")
    a.addi("wi", "wi", 1)
    a.jmp("word_loop")
    return a.build(), a.n_temps(), params


def _epoch_rank_body(iq_blocks: int, sp_rank: int, sp_acc: int, sp_front: int,
                     sp_nloc: int, sp_fmask: int, flen: int,
                     num_vertices: int, damping: float
                     ) -> tuple[np.ndarray, int, tuple]:
    """Rank kernel epoch task: fold the gathered contributions and the
    globally reduced dangling mass into each owned rank, bank the local L1
    change for the idle-time reducer, clear the accumulators, and re-seed
    every owned vertex for the next epoch."""
    params = (("ep", False), ("dg", True))
    a = Asm(params=params)
    a.glob("dang", SLOT_DANGLING)
    a.glob("delta", SLOT_DELTA)
    for nm in ("dampf", "basef", "dgpv", "z", "t0", "wi", "a0", "old", "nv",
               "df", "nlim", "m"):
        a.temp(nm)
    a.ldif("dampf", damping)
    a.ldif("basef", (1.0 - damping) / num_vertices)
    a.ldif("dgpv", 1.0 / num_vertices)
    a.fmul("dgpv", "dg", "dgpv")  # dangling mass per vertex
    a.ldi("z", 0)
    a.mov("dang", "z")  # reset both idle-time reduction slots
    a.mov("delta", "z")
    a.ld("nlim", sp_nloc, "z")  # this tile's real vertex count
    a.ldi("wi", 0)
    a.label("vertex_loop")
    a.cmplt("t0", "wi", "nlim")
    a.beqz("t0", "reseed")
    a.ld("a0", sp_acc, "wi")
    a.ld("old", sp_rank, "wi")
    a.fadd("nv", "a0", "dgpv")
    a.fmul("nv", "nv", "dampf")
    a.fadd("nv", "nv", "basef")
    a.st(sp_rank, "wi", "nv")
    a.fsub("df", "nv", "old")
    a.fabs_("df", "df")
    a.fadd("delta", "delta", "df")
    a.st(sp_acc, "wi", "z")
    a.addi("wi", "wi", 1)
    a.jmp("vertex_loop")
    a.label("reseed")
    a.ldi("wi", 0)
    a.label("mask_loop")
    a.cmplti("t0", "wi", flen)
    a.beqz("t0", "end")
    a.ld("m", sp_fmask, "wi")
    a.beqz("m", "next_mask")
    a.st(sp_front, "wi", "m")
    a.qpush(iq_blocks, "wi")
    a.label("next_mask")
    a.addi("wi", "wi", 1)
    a.jmp("mask_loop")
    return a.build(), a.n_temps(), params


# ---------------------------------------------------------------------------
# Program assembly
# ---------------------------------------------------------------------------


def _distance_program(name: str, epc: int, flen: int, flit_width: int,
                      barrier: bool, chunk_limit: int, *, expand_mode: str,
                      has_eval: bool, value_space: str,
                      unsigned_cmp: bool) -> Program:
    """Common scaffold for the three relax-min kernels."""
    range_fields = (("e", HEAD), ("n", WORD), ("d", WORD))
    cand_fields = (("v", HEAD), ("d", WORD))
    range_w = pr.msg_words(range_fields, flit_width)
    cand_w = pr.msg_words(cand_fields, flit_width)

    IQ_WORK, IQ_RANGE, IQ_CAND, IQ_BLOCK = 0, 1, 2, 3
    CQ_RANGE, CQ_RANGE_CH = 4, 0
    CQ_CAND, CQ_CAND_CH = 5, 1
    IQ_EPOCH = 6

    queues = [
        QueueSpec("work", IQ, WORK_Q_WORDS, (("v", WORD),)),
        QueueSpec("ranges", IQ, RANGE_IQ_WORDS, range_fields),
        QueueSpec("cands", IQ, CAND_IQ_WORDS, cand_fields),
        QueueSpec("blocks", IQ, flen + 1, (("w", WORD),)),
        QueueSpec("ranges_out", CQ, RANGE_CQ_WORDS, range_fields,
                  route_space=ROUTE_EDGE, delivers_to=IQ_RANGE, channel=0),
        QueueSpec("cands_out", CQ, cand_w * chunk_limit, cand_fields,
                  route_space=ROUTE_VERTEX, delivers_to=IQ_CAND, channel=1),
    ]
    spaces = [
        SpaceSpec("ptr_b", pr.PER_VERTEX),
        SpaceSpec("ptr_e", pr.PER_VERTEX),
        SpaceSpec("eidx", pr.PER_EDGE),
        SpaceSpec(value_space, pr.PER_VERTEX),
        SpaceSpec("front", pr.BITMAP),
    ]
    if has_eval:
        spaces.insert(3, SpaceSpec("eval", pr.PER_EDGE))
    sp = {s.name: i for i, s in enumerate(spaces)}

    code1, nt1 = _explore_task(IQ_WORK, CQ_RANGE, range_w, sp["ptr_b"],
                               sp["ptr_e"], sp[value_space], epc, chunk_limit)
    code2, nt2, p2 = _expand_body(CQ_CAND, sp["eidx"],
                                  sp.get("eval", sp["eidx"]), expand_mode)
    relax_bitmap = "front2" if barrier else "front"
    if barrier:
        spaces.append(SpaceSpec("front2", pr.BITMAP))
        sp["front2"] = len(spaces) - 1
    code3, nt3, p3 = _relax_body(IQ_BLOCK, sp[value_space], sp[relax_bitmap],
                                 queue_block=not barrier,
                                 unsigned_cmp=unsigned_cmp)
    code4, nt4, p4 = _drain_body(IQ_WORK, IQ_BLOCK, sp["front"])

    tasks = [
        TaskSpec("explore", IQ_WORK, (), (
            OutSpec(CQ_RANGE, range_w, guarded=True),), code1, nt1),
        TaskSpec("expand", IQ_RANGE, p2, (
            OutSpec(CQ_CAND, cand_w * chunk_limit),), code2, nt2),
        TaskSpec("apply", IQ_CAND, p3,
                 (() if barrier else (OutSpec(IQ_BLOCK, 1),)), code3, nt3),
        TaskSpec("drain", IQ_BLOCK, p4, (
            OutSpec(IQ_WORK, 1, guarded=True), OutSpec(IQ_BLOCK, 1)),
            code4, nt4),
    ]
    meta = {"kernel": name, "barrier": barrier}
    if barrier:
        epoch_fields = (("ep", WORD),)
        queues.append(QueueSpec("epochs", IQ, 2 * len(epoch_fields),
                                epoch_fields))
        code5, nt5, p5 = _epoch_promote_body(IQ_BLOCK, sp["front"],
                                             sp["front2"], flen)
        tasks.append(TaskSpec("epoch", IQ_EPOCH, p5,
                              (OutSpec(IQ_BLOCK, flen),), code5, nt5))
        meta["epoch_task"] = "epoch"

    prog = Program(name, queues, tasks, spaces, start_queue=IQ_WORK,
                   meta=meta)
    pr.validate_program(prog, flit_width)
    return prog


def bfs_program(epc: int, flen: int, flit_width: int = 32,
                barrier: bool = False,
                chunk_limit: int = DEFAULT_CHUNK_LIMIT) -> Program:
    """Hop counts from a root: relax-min with candidate = distance + 1."""
    return _distance_program(
        "bfs", epc, flen, flit_width, barrier, chunk_limit,
        expand_mode="inc", has_eval=False, value_space="dist",
        unsigned_cmp=flit_width == 64)


def sssp_program(epc: int, flen: int, flit_width: int = 32,
                 barrier: bool = False,
                 chunk_limit: int = DEFAULT_CHUNK_LIMIT) -> Program:
    """Weighted shortest paths: relax-min with candidate = distance + w."""
    return _distance_program(
        "sssp", epc, flen, flit_width, barrier, chunk_limit,
        expand_mode="addw", has_eval=True, value_space="dist",
        unsigned_cmp=flit_width == 64)


def wcc_program(epc: int, flen: int, flit_width: int = 32,
                barrier: bool = False,
                chunk_limit: int = DEFAULT_CHUNK_LIMIT) -> Program:
    """Connected components by min-label propagation over an undirected
    (symmetrized) CSR; labels start as each vertex's own id."""
    return _distance_program(
        "wcc", epc, flen, flit_width, barrier, chunk_limit,
        expand_mode="copy", has_eval=False, value_space="label",
        unsigned_cmp=False)


def pagerank_program(epc: int, flen: int, num_vertices: int,
                     damping: float, flit_width: int = 32,
                     chunk_limit: int = DEFAULT_CHUNK_LIMIT) -> Program:
    """Rank flow with per-epoch synchronization (always barrier mode)."""
    range_fields = (("e", HEAD), ("n", WORD), ("c", WIDE))
    cand_fields = (("v", HEAD), ("c", WIDE))
    epoch_fields = (("ep", WORD), ("dg", WIDE))
    range_w = pr.msg_words(range_fields, flit_width)
    cand_w = pr.msg_words(cand_fields, flit_width)
    epoch_w = pr.msg_words(epoch_fields, flit_width)

    IQ_WORK, IQ_RANGE, IQ_CAND, IQ_BLOCK = 0, 1, 2, 3
    CQ_RANGE, CQ_CAND, IQ_EPOCH = 4, 5, 6

    queues = [
        QueueSpec("work", IQ, WORK_Q_WORDS, (("v", WORD),)),
        QueueSpec("ranges", IQ, RANGE_IQ_WORDS, range_fields),
        QueueSpec("cands", IQ, CAND_IQ_WORDS, cand_fields),
        QueueSpec("blocks", IQ, flen + 1, (("w", WORD),)),
        QueueSpec("ranges_out", CQ, max(RANGE_CQ_WORDS, 4 * range_w),
                  range_fields, route_space=ROUTE_EDGE,
                  delivers_to=IQ_RANGE, channel=0),
        QueueSpec("cands_out", CQ, cand_w * chunk_limit, cand_fields,
                  route_space=ROUTE_VERTEX, delivers_to=IQ_CAND, channel=1),
        QueueSpec("epochs", IQ, 2 * epoch_w, epoch_fields),
    ]
    spaces = [
        SpaceSpec("ptr_b", pr.PER_VERTEX),
        SpaceSpec("ptr_e", pr.PER_VERTEX),
        SpaceSpec("eidx", pr.PER_EDGE),
        SpaceSpec("rank", pr.PER_VERTEX),
        SpaceSpec("acc", pr.PER_VERTEX),
        SpaceSpec("front", pr.BITMAP),
        SpaceSpec("nloc", pr.SCALAR, 1),
        SpaceSpec("fmask", pr.SCALAR, flen),
    ]
    sp = {s.name: i for i, s in enumerate(spaces)}

    code1, nt1 = _explore_rank_task(IQ_WORK, CQ_RANGE, range_w, sp["ptr_b"],
                                    sp["ptr_e"], sp["rank"], epc,
                                    chunk_limit)
    code2, nt2, p2 = _expand_body(CQ_CAND, sp["eidx"], sp["eidx"], "copy",
                                  wide_val=True)
    p3 = (("v", False), ("c", True))
    a3 = Asm(params=p3)
    a3.temp("a0")
    a3.ld("a0", sp["acc"], "v")
    a3.fadd("a0", "a0", "c")
    a3.st(sp["acc"], "v", "a0")
    code3, nt3 = a3.build(), a3.n_temps()
    code4, nt4, p4 = _drain_body(IQ_WORK, IQ_BLOCK, sp["front"])
    code5, nt5, p5 = _epoch_rank_body(IQ_BLOCK, sp["rank"], sp["acc"],
                                      sp["front"], sp["nloc"], sp["fmask"],
                                      flen, num_vertices, damping)

    tasks = [
        TaskSpec("explore", IQ_WORK, (), (
            OutSpec(CQ_RANGE, range_w, guarded=True),), code1, nt1),
        TaskSpec("expand", IQ_RANGE, p2, (
            OutSpec(CQ_CAND, cand_w * chunk_limit),), code2, nt2),
        TaskSpec("apply", IQ_CAND, p3, (), code3, nt3),
        TaskSpec("drain", IQ_BLOCK, p4, (
            OutSpec(IQ_WORK, 1, guarded=True), OutSpec(IQ_BLOCK, 1)),
            code4, nt4),
        TaskSpec("epoch", IQ_EPOCH, p5, (OutSpec(IQ_BLOCK, flen),),
                 code5, nt5),
    ]
    prog = Program("pagerank", queues, tasks, spaces, start_queue=IQ_WORK,
                   meta={"kernel": "pagerank", "barrier": True,
                         "epoch_task": "epoch"})
    pr.validate_program(prog, flit_width)
    return prog


def spmv_program(epc: int, flen: int, flit_width: int = 32,
                 barrier: bool = False, float_mode: bool = False,
                 chunk_limit: int = DEFAULT_CHUNK_LIMIT) -> Program:
    """Sparse matrix times dense vector, one pass: rows explore, edges
    carry (column, value, row), column owners multiply, row owners
    accumulate into the result vector through a dedicated task.

    Matrix values and products travel as 64-bit payloads in both modes
    (integer products may be negative or wider than one narrow flit);
    ``float_mode`` only selects the arithmetic."""
    range_fields = (("e", HEAD), ("n", WORD), ("r", WORD))
    cand_fields = (("v", HEAD), ("a", WIDE), ("r", WORD))
    prod_fields = (("r", HEAD), ("p", WIDE))
    range_w = pr.msg_words(range_fields, flit_width)
    cand_w = pr.msg_words(cand_fields, flit_width)
    prod_w = pr.msg_words(prod_fields, flit_width)

    IQ_WORK, IQ_RANGE, IQ_CAND, IQ_BLOCK, IQ_PROD = 0, 1, 2, 3, 4
    CQ_RANGE, CQ_CAND, CQ_PROD, IQ_EPOCH = 5, 6, 7, 8

    queues = [
        QueueSpec("work", IQ, WORK_Q_WORDS, (("v", WORD),)),
        QueueSpec("ranges", IQ, RANGE_IQ_WORDS, range_fields),
        QueueSpec("cands", IQ, CAND_IQ_WORDS, cand_fields),
        QueueSpec("blocks", IQ, flen + 1, (("w", WORD),)),
        QueueSpec("prods", IQ, CAND_IQ_WORDS, prod_fields),
        QueueSpec("ranges_out", CQ, RANGE_CQ_WORDS, range_fields,
                  route_space=ROUTE_EDGE, delivers_to=IQ_RANGE, channel=0),
        QueueSpec("cands_out", CQ, cand_w * chunk_limit, cand_fields,
                  route_space=ROUTE_VERTEX, delivers_to=IQ_CAND, channel=1),
        QueueSpec("prods_out", CQ, prod_w * PROD_CQ_MSGS, prod_fields,
                  route_space=ROUTE_VERTEX, delivers_to=IQ_PROD, channel=2),
    ]
    spaces = [
        SpaceSpec("ptr_b", pr.PER_VERTEX),
        SpaceSpec("ptr_e", pr.PER_VERTEX),
        SpaceSpec("eidx", pr.PER_EDGE),
        SpaceSpec("eval", pr.PER_EDGE),
        SpaceSpec("xvec", pr.PER_VERTEX),
        SpaceSpec("yvec", pr.PER_VERTEX),
        SpaceSpec("gid", pr.PER_VERTEX),
        SpaceSpec("front", pr.BITMAP),
    ]
    sp = {s.name: i for i, s in enumerate(spaces)}

    code1, nt1 = _explore_task(IQ_WORK, CQ_RANGE, range_w, sp["ptr_b"],
                               sp["ptr_e"], sp["gid"], epc, chunk_limit)
    code2, nt2, p2 = _expand_body(CQ_CAND, sp["eidx"], sp["eval"], "matrix",
                                  wide_val=True)
    p3 = (("v", False), ("a", True), ("r", False))
    a3 = Asm(params=p3)
    a3.temp("x0")
    a3.temp("p")
    a3.ld("x0", sp["xvec"], "v")
    if float_mode:
        a3.fmul("p", "a", "x0")
    else:
        a3.mul("p", "a", "x0")
    a3.qpush(CQ_PROD, "r")
    a3.qpush(CQ_PROD, "p", flags=F_WIDE)
    code3, nt3 = a3.build(), a3.n_temps()
    code4, nt4, p4 = _drain_body(IQ_WORK, IQ_BLOCK, sp["front"])
    p5 = (("r", False), ("p", True))
    a5 = Asm(params=p5)
    a5.temp("y0")
    a5.ld("y0", sp["yvec"], "r")
    if float_mode:
        a5.fadd("y0", "y0", "p")
    else:
        a5.add("y0", "y0", "p")
    a5.st(sp["yvec"], "r", "y0")
    code5, nt5 = a5.build(), a5.n_temps()

    tasks = [
        TaskSpec("explore", IQ_WORK, (), (
            OutSpec(CQ_RANGE, range_w, guarded=True),), code1, nt1),
        TaskSpec("expand", IQ_RANGE, p2, (
            OutSpec(CQ_CAND, cand_w * chunk_limit),), code2, nt2),
        TaskSpec("apply", IQ_CAND, p3, (OutSpec(CQ_PROD, prod_w),),
                 code3, nt3),
        TaskSpec("drain", IQ_BLOCK, p4, (
            OutSpec(IQ_WORK, 1, guarded=True), OutSpec(IQ_BLOCK, 1)),
            code4, nt4),
        TaskSpec("accumulate", IQ_PROD, p5, (), code5, nt5),
    ]
    meta = {"kernel": "spmv", "barrier": barrier, "float_mode": float_mode}
    if barrier:
        epoch_fields = (("ep", WORD),)
        queues.append(QueueSpec("epochs", IQ, 2, epoch_fields))
        spaces.append(SpaceSpec("front2", pr.BITMAP))
        code6, nt6, p6 = _epoch_promote_body(IQ_BLOCK, sp["front"],
                                             len(spaces) - 1, flen)
        tasks.append(TaskSpec("epoch", IQ_EPOCH, p6,
                              (OutSpec(IQ_BLOCK, flen),), code6, nt6))
        meta["epoch_task"] = "epoch"

    prog = Program("spmv", queues, tasks, spaces, start_queue=IQ_WORK,
                   meta=meta)
    pr.validate_program(prog, flit_width)
    return prog


# ---------------------------------------------------------------------------
# System builder: program + dataset + world
# ---------------------------------------------------------------------------


def _vertex_globals(policy: gd.PlacementPolicy, num_vertices: int,
                    npc: int) -> np.ndarray:
    """[tiles, npc] array of the global id each local slot stands for."""
    t = policy.num_tiles
    locs = np.arange(npc, dtype=np.int64)
    if policy.kind == gd.CONTIGUOUS:
        chunk = policy.chunk(num_vertices)
        return np.arange(t, dtype=np.int64)[:, None] * chunk + locs[None, :]
    return locs[None, :] * t + np.arange(t, dtype=np.int64)[:, None]


def _frontier_masks(local_counts: np.ndarray, flen: int) -> np.ndarray:
    """[tiles, flen] bitmap with one bit per real local vertex."""
    t = local_counts.shape[0]
    out = np.zeros((t, flen), dtype=np.int64)
    for tile in range(t):
        c = int(local_counts[tile])
        for w in range(flen):
            bits = min(32, c - 32 * w)
            if bits <= 0:
                break
            out[tile, w] = (1 << bits) - 1
    return out


def default_x_vector(num_vertices: int, float_mode: bool) -> np.ndarray:
    """Deterministic dense vector for the matrix kernel."""
    x = (np.arange(num_vertices, dtype=np.int64) * 37) % 101 + 1
    return x.astype(np.float64) / 8.0 if float_mode else x


@dataclass
class System:
    """A runnable kernel instance: program, packed world, and the pieces
    needed to extract and check its answer."""

    kernel: str
    prog: Program
    cfg: object
    world: object
    dataset: gd.PartitionedDataset
    csr: gd.Csr
    topo: noc.Topology
    flit_width: int
    barrier: bool
    root: int = 0
    damping: float = 0.85
    epsilon: float = 1e-4
    max_epochs: int = 20
    float_mode: bool = False
    x: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)

    def run(self, cycle_limit: int = 10**9,
            timeline_every: int = 0) -> RunResult:
        return run(self.cfg, self.world, cycle_limit=cycle_limit,
                   timeline_every=timeline_every)

    def _gather(self, space: str) -> np.ndarray:
        view = space_view(self.cfg, self.world, self.prog, space)
        return self.dataset.gather_vertex_array(np.asarray(view))

    def result(self) -> np.ndarray:
        """The kernel's output in global vertex order."""
        if self.kernel in ("bfs", "sssp"):
            return self._gather("dist").view(np.uint64)
        if self.kernel == "wcc":
            return self._gather("label")
        if self.kernel == "pagerank":
            return self._gather("rank").view(np.float64)
        if self.kernel == "spmv":
            y = self._gather("yvec")
            return y.view(np.float64) if self.float_mode else y
        raise ValueError(self.kernel)

    def oracle(self):
        """Reference answer computed independently of the simulator."""
        unreached = oracles.sentinel(self.flit_width)
        if self.kernel == "bfs":
            return np.array(oracles.bfs_levels(self.csr, self.root,
                                               unreached), dtype=np.uint64)
        if self.kernel == "sssp":
            return np.array(oracles.sssp_distances(self.csr, self.root,
                                                   unreached),
                            dtype=np.uint64)
        if self.kernel == "wcc":
            return np.array(oracles.wcc_labels(self.csr), dtype=np.int64)
        if self.kernel == "pagerank":
            ranks, epochs = oracles.pagerank_ranks(
                self.csr, self.damping, self.epsilon, self.max_epochs)
            return np.array(ranks, dtype=np.float64), epochs
        if self.kernel == "spmv":
            vals = self.csr.edge_values
            evals = (vals.astype(np.float64) if self.float_mode else vals)
            ref_csr = gd.Csr(self.csr.ptr, self.csr.edge_idx, evals,
                             self.csr.num_vertices, self.csr.num_edges,
                             self.csr.weighted)
            y = oracles.spmv_product(ref_csr, self.x.tolist())
            return np.array(y, dtype=np.float64 if self.float_mode
                            else np.int64)
        raise ValueError(self.kernel)

    def verify(self) -> tuple[bool, str]:
        """Compare simulator output with the oracle at pinned tolerances."""
        got = self.result()
        if self.kernel == "pagerank":
            want, want_epochs = self.oracle()
            from .tile import C_EPOCHS
            got_epochs = int(self.world.counters[C_EPOCHS])
            err = float(np.max(np.abs(got - want))) if len(want) else 0.0
            ok = err <= 1e-6 and got_epochs == want_epochs
            return ok, (f"rank L-inf error {err:.3e} (tol 1e-6), epochs "
                        f"sim={got_epochs} ref={want_epochs}")
        want = self.oracle()
        if self.kernel == "spmv" and self.float_mode:
            denom = np.maximum(np.abs(want), 1e-300)
            err = float(np.max(np.abs(got - want) / denom)) if len(want) \
                else 0.0
            return err <= 1e-9, f"relative error {err:.3e} (tol 1e-9)"
        bad = int(np.count_nonzero(got != want))
        return bad == 0, f"{bad} of {len(want)} elements differ"


def build_system(kernel: str, csr: gd.Csr, topo: noc.Topology, *,
                 placement: Optional[gd.PlacementPolicy] = None,
                 barrier: Optional[bool] = None,
                 flit_width: int = 32,
                 root: int = 0,
                 damping: float = 0.85,
                 epsilon: float = 1e-4,
                 max_epochs: int = 20,
                 x: Optional[np.ndarray] = None,
                 float_mode: bool = False,
                 chunk_limit: int = DEFAULT_CHUNK_LIMIT,
                 pool: int = 8,
                 idle_lat: Optional[int] = None,
                 livelock: Optional[int] = None) -> System:
    """Build a ready-to-run kernel instance over a partitioned CSR."""
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r} (choose from "
                         f"{', '.join(KERNELS)})")
    if placement is None:
        placement = gd.PlacementPolicy(gd.CONTIGUOUS, topo.num_tiles)
    if placement.num_tiles != topo.num_tiles:
        raise ValueError("placement tile count does not match the grid")
    if barrier is None:
        barrier = kernel == "pagerank"
    if kernel == "pagerank" and not barrier:
        raise ValueError("the rank kernel requires per-epoch "
                         "synchronization (barrier mode)")
    if kernel == "sssp" and not csr.weighted:
        raise ValueError("sssp needs a weighted dataset")
    nv = csr.num_vertices
    if not 0 <= root < nv:
        raise ValueError(f"root {root} outside [0, {nv})")

    sim_csr = csr
    if kernel == "spmv" and float_mode:
        sim_csr = gd.Csr(csr.ptr, csr.edge_idx,
                         csr.edge_values.astype(np.float64).view(np.int64),
                         nv, csr.num_edges, csr.weighted)
    dataset = gd.partition(sim_csr, placement)
    npc, epc = dataset.nodes_per_chunk, dataset.edges_per_chunk
    flen = frontier_words(npc)

    if kernel == "bfs":
        prog = bfs_program(epc, flen, flit_width, barrier, chunk_limit)
    elif kernel == "sssp":
        prog = sssp_program(epc, flen, flit_width, barrier, chunk_limit)
    elif kernel == "wcc":
        prog = wcc_program(epc, flen, flit_width, barrier, chunk_limit)
    elif kernel == "pagerank":
        prog = pagerank_program(epc, flen, nv, damping, flit_width,
                                chunk_limit)
    else:
        prog = spmv_program(epc, flen, flit_width, barrier, float_mode,
                            chunk_limit)

    sentinel_bits = _to_int64_bits(oracles.sentinel(flit_width))
    init_spaces: dict = {}
    seeds: range | list
    if kernel in ("bfs", "sssp"):
        init_spaces["dist"] = sentinel_bits
        seeds = [root]
    elif kernel == "wcc":
        labels = np.arange(nv, dtype=np.int64)
        init_spaces["label"] = dataset.scatter_vertex_array(
            labels, pad=sentinel_bits)
        seeds = range(nv)
    elif kernel == "pagerank":
        init_spaces["rank"] = 1.0 / nv
        init_spaces["nloc"] = dataset.local_vertex_count.reshape(-1, 1)
        init_spaces["fmask"] = _frontier_masks(dataset.local_vertex_count,
                                               flen)
        seeds = range(nv)
    else:  # spmv
        if x is None:
            x = default_x_vector(nv, float_mode)
        if len(x) != nv:
            raise ValueError("x length does not match the matrix")
        x = np.asarray(x, dtype=np.float64 if float_mode else np.int64)
        xbits = x.view(np.int64) if float_mode else x
        init_spaces["xvec"] = dataset.scatter_vertex_array(xbits)
        init_spaces["gid"] = _vertex_globals(placement, nv, npc)
        seeds = range(nv)

    cfg, world = build_world(
        prog, topo, dataset=dataset, flit_width=flit_width, pool=pool,
        mode=MODE_EPOCH if barrier else MODE_BARRIERLESS,
        idle_lat=idle_lat, seeds=seeds, seed_space="front",
        seed_queue="blocks", init_spaces=init_spaces,
        kernel_kind=KERNEL_PAGERANK if kernel == "pagerank"
        else KERNEL_GENERIC,
        eps=epsilon, damp=damping,
        max_epochs=max_epochs if kernel == "pagerank" else 10**9,
        slot_dangling=SLOT_DANGLING, slot_delta=SLOT_DELTA,
        req_empty={"epoch": "cands"} if barrier else None,
        livelock=livelock)

    if kernel in ("bfs", "sssp"):
        tile, local = dataset.vertex_owner(root)
        space_view(cfg, world, prog, "dist")[tile, local] = 0

    return System(kernel=kernel, prog=prog, cfg=cfg, world=world,
                  dataset=dataset, csr=csr, topo=topo,
                  flit_width=flit_width, barrier=barrier, root=root,
                  damping=damping, epsilon=epsilon, max_epochs=max_epochs,
                  float_mode=float_mode, x=x)

"""Cycle engine: a jitted interpreter for the packed tile world.

Each simulated cycle advances in a fixed, deterministic order:

  1. snapshot router buffer occupancy, reservations, and channel-queue
     visibility (words staged before this cycle)
  2. per tile: task scheduling (dispatch preloads params in the same
     cycle; the first op executes next cycle) and one micro-op of
     processing
  3. per tile: router arbitration and flit movement, judged against the
     snapshots so tile order cannot leak into outcomes
  4. per tile: at most one complete message delivered into an input queue
  5. global bookkeeping: quiescence and idle detection, epoch broadcast
     control, livelock detection

Single-threaded on purpose: identical configs and datasets produce
identical cycle counts and statistics, bit for bit. Set
``NUMBA_DISABLE_JIT=1`` to run the same code uncompiled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .noc import (P_LOCAL, P_RN, needs_bubble, port_class, route_next)
from .program import (F_DRAIN, F_EDGE, F_IMPROVE, F_WIDE, OP_ADD, OP_ADDI,
                      OP_AND, OP_ANDI, OP_BCLR, OP_BEQZ, OP_BNEZ, OP_BSET,
                      OP_CMPEQ, OP_CMPEQI, OP_CMPLT, OP_CMPLTI, OP_DIV,
                      OP_FABS, OP_FADD, OP_FCMPLT, OP_FDIV, OP_FMUL, OP_FSUB,
                      OP_I2F, OP_JMP, OP_LD, OP_LDI, OP_LDIF, OP_MIN, OP_MOD,
                      OP_MOV, OP_MSB, OP_MUL, OP_OR, OP_ORI, OP_QDROP,
                      OP_QPEEK, OP_QPOP, OP_QPUSH, OP_QPUSHI, OP_QPUSHL,
                      OP_QPUSHLA, OP_QROOM, OP_SHL, OP_SHLI, OP_SHR, OP_SHRI,
                      OP_ST, OP_SUB, OP_XOR, PARAM_BASE)
from .tile import (C_ACT_CQ, C_ACT_FLITS, C_ACT_IQ, C_ACT_PU, C_CYCLE,
                   C_DELIV, C_DELIV_FLITS, C_DONE, C_DRAIN_TOT, C_DRAIN_WIN,
                   C_EDGES, C_EPOCHS, C_IMPROVE, C_INJ_FLITS, C_LAST_EVENT,
                   C_MOVES, C_OPS, C_PR_DELTA, C_QUIET_SINCE, C_SENT,
                   C_WIRE_RUCHE, C_WIRE_UNIT,
                   KERNEL_PAGERANK, MODE_BARRIERLESS, OPP, ST_BUDGET,
                   ST_BUF_OVERFLOW, ST_DONE, ST_EPOCH_RACE, ST_FAULT,
                   ST_LIVELOCK, ST_OVERFLOW, ST_PARTIAL_MSG, ST_UNDERFLOW,
                   STATUS_NAMES, Cfg, World)

_MASK32 = 0xFFFFFFFF


@njit(cache=True)
def _op_cost(fw, flags):
    # validation restricts the wide flag to two-part queue ops
    if fw == 32 and (flags & F_WIDE):
        return 2
    return 1


@njit(cache=True)
def _q_push(w, t, q, val):
    cap = w.q_cap[q]
    cnt = w.q_count[t, q]
    if cnt >= cap:
        return False
    w.q_data[t, w.q_off[q] + (w.q_head[t, q] + cnt) % cap] = val
    w.q_count[t, q] = cnt + 1
    w.qw_push[q] += 1
    w.stat_wr[t] += 1
    if w.q_kind[q] == 0:
        w.iq_tot[t] += 1
        w.counters[C_ACT_IQ] += 1
    else:
        w.counters[C_ACT_CQ] += 1
        w.pushed_cur[t, q] += 1
    if cnt + 1 > w.stat_iqmax[t, q]:
        w.stat_iqmax[t, q] = cnt + 1
    w.counters[C_LAST_EVENT] = w.counters[C_CYCLE]
    return True


@njit(cache=True)
def _q_pop(w, t, q):
    cnt = w.q_count[t, q]
    if cnt == 0:
        return False, 0
    cap = w.q_cap[q]
    val = w.q_data[t, w.q_off[q] + w.q_head[t, q]]
    w.q_head[t, q] = (w.q_head[t, q] + 1) % cap
    w.q_count[t, q] = cnt - 1
    w.qw_pop[q] += 1
    w.stat_rd[t] += 1
    if w.q_kind[q] == 0:
        w.iq_tot[t] -= 1
        w.counters[C_ACT_IQ] -= 1
    else:
        w.counters[C_ACT_CQ] -= 1
        w.cq_vis[t, q] -= 1
    w.counters[C_LAST_EVENT] = w.counters[C_CYCLE]
    return True, val


@njit(cache=True)
def _q_drop(w, t, q, n):
    # head-pointer advance only; the words were already inspected
    cnt = w.q_count[t, q]
    if cnt < n:
        return False
    w.q_head[t, q] = (w.q_head[t, q] + n) % w.q_cap[q]
    w.q_count[t, q] = cnt - n
    w.qw_pop[q] += n
    if w.q_kind[q] == 0:
        w.iq_tot[t] -= n
        w.counters[C_ACT_IQ] -= n
    else:
        w.counters[C_ACT_CQ] -= n
        w.cq_vis[t, q] -= n
    w.counters[C_LAST_EVENT] = w.counters[C_CYCLE]
    return True


# -- task scheduling -----------------------------------------------------------


@njit(cache=True)
def _pick_task(cfg, w, t):
    """Highest-priority eligible task, or -1.

    Eligible: a full message waits on the task's input queue and every
    declared output queue has room for the declared worst case (guarded
    outputs only need room for a single message). Priority: input nearly
    full > all outputs nearly empty > rest. Ties prefer the larger input
    queue, then the lower task id.
    """
    best = -1
    best_pri = -1
    best_cap = -1
    for k in range(cfg.nt):
        iq = w.t_iq[k]
        if w.q_count[t, iq] < w.t_msg[k]:
            continue
        ok = True
        for q in range(cfg.nq):
            worst = w.t_worst[k, q]
            if worst == 0:
                continue
            need = w.q_msg[q] if w.t_guard[k, q] == 1 else worst
            if w.q_cap[q] - w.q_count[t, q] < need:
                ok = False
                break
        if not ok:
            continue
        if w.q_count[t, iq] >= w.q_hi[iq]:
            pri = 2
        else:
            pri = 1
            for q in range(cfg.nq):
                if w.t_worst[k, q] > 0 and w.q_count[t, q] > w.q_lo[q]:
                    pri = 0
                    break
        cap = w.t_iqcap[k]
        if pri > best_pri or (pri == best_pri and cap > best_cap):
            best = k
            best_pri = pri
            best_cap = cap
    return best


@njit(cache=True)
def _dispatch(cfg, w, t, k):
    iq = w.t_iq[k]
    for i in range(w.t_np[k]):
        if w.t_pwide[k, i] == 1 and cfg.fw == 32:
            _, lo = _q_pop(w, t, iq)
            _, hi = _q_pop(w, t, iq)
            w.scratch[t, PARAM_BASE + i] = (hi << 32) | (lo & _MASK32)
        else:
            _, v = _q_pop(w, t, iq)
            w.scratch[t, PARAM_BASE + i] = v
    w.pu_task[t] = k
    w.pu_pc[t] = w.t_begin[k]
    w.pu_stall[t] = _op_cost(cfg.fw, w.code[w.t_begin[k], 5])
    w.counters[C_ACT_PU] += 1
    w.stat_inv[t, k] += 1
    for q in range(w.pushed_cur.shape[1]):
        w.pushed_cur[t, q] = 0


# -- micro-op execution --------------------------------------------------------


@njit(cache=True)
def _exec_op(cfg, w, t, task, cyc, err):
    pc = w.pu_pc[t]
    op = w.code[pc, 0]
    dst = w.code[pc, 1]
    a = w.code[pc, 2]
    b = w.code[pc, 3]
    imm = w.code[pc, 4]
    fl = w.code[pc, 5]
    s = w.scratch
    nxt = pc + 1

    if op == OP_LD:
        addr = s[t, a] + imm
        if addr < 0 or addr >= w.space_len[b]:
            err[0] = t
            err[1] = op
            err[2] = addr
            err[3] = cyc
            return ST_FAULT
        s[t, dst] = w.mem[t, w.space_off[b] + addr]
        w.stat_rd[t] += 1
    elif op == OP_ST:
        addr = s[t, a] + imm
        if addr < 0 or addr >= w.space_len[b]:
            err[0] = t
            err[1] = op
            err[2] = addr
            err[3] = cyc
            return ST_FAULT
        w.mem[t, w.space_off[b] + addr] = s[t, dst]
        w.stat_wr[t] += 1
    elif op == OP_ADDI:
        s[t, dst] = s[t, a] + imm
    elif op == OP_ADD:
        s[t, dst] = s[t, a] + s[t, b]
    elif op == OP_CMPLT:
        s[t, dst] = 1 if s[t, a] < s[t, b] else 0
    elif op == OP_CMPLTI:
        s[t, dst] = 1 if s[t, a] < imm else 0
    elif op == OP_CMPEQ:
        s[t, dst] = 1 if s[t, a] == s[t, b] else 0
    elif op == OP_CMPEQI:
        s[t, dst] = 1 if s[t, a] == imm else 0
    elif op == OP_BEQZ:
        if s[t, a] == 0:
            nxt = w.t_begin[task] + imm
    elif op == OP_BNEZ:
        if s[t, a] != 0:
            nxt = w.t_begin[task] + imm
    elif op == OP_JMP:
        nxt = w.t_begin[task] + imm
    elif op == OP_LDI or op == OP_LDIF:
        s[t, dst] = imm
    elif op == OP_MOV:
        s[t, dst] = s[t, a]
    elif op == OP_SUB:
        s[t, dst] = s[t, a] - s[t, b]
    elif op == OP_MUL:
        s[t, dst] = s[t, a] * s[t, b]
    elif op == OP_DIV or op == OP_MOD:
        if s[t, b] == 0:
            err[0] = t
            err[1] = op
            err[2] = 0
            err[3] = cyc
            return ST_FAULT
        if op == OP_DIV:
            s[t, dst] = s[t, a] // s[t, b]
        else:
            s[t, dst] = s[t, a] % s[t, b]
    elif op == OP_AND:
        s[t, dst] = s[t, a] & s[t, b]
    elif op == OP_ANDI:
        s[t, dst] = s[t, a] & imm
    elif op == OP_OR:
        s[t, dst] = s[t, a] | s[t, b]
    elif op == OP_ORI:
        s[t, dst] = s[t, a] | imm
    elif op == OP_XOR:
        s[t, dst] = s[t, a] ^ s[t, b]
    elif op == OP_SHL:
        s[t, dst] = s[t, a] << (s[t, b] & 63)
    elif op == OP_SHLI:
        s[t, dst] = s[t, a] << (imm & 63)
    elif op == OP_SHR:
        s[t, dst] = np.int64(np.uint64(s[t, a]) >> np.uint64(s[t, b] & 63))
    elif op == OP_SHRI:
        s[t, dst] = np.int64(np.uint64(s[t, a]) >> np.uint64(imm & 63))
    elif op == OP_MIN:
        s[t, dst] = min(s[t, a], s[t, b])
    elif op == OP_FADD or op == OP_FSUB or op == OP_FMUL or op == OP_FDIV:
        sf = w.scratch.view(np.float64)
        x = sf[t, a]
        y = sf[t, b]
        if op == OP_FADD:
            sf[t, dst] = x + y
        elif op == OP_FSUB:
            sf[t, dst] = x - y
        elif op == OP_FMUL:
            sf[t, dst] = x * y
        else:
            sf[t, dst] = x / y
    elif op == OP_FABS:
        sf = w.scratch.view(np.float64)
        sf[t, dst] = abs(sf[t, a])
    elif op == OP_I2F:
        sf = w.scratch.view(np.float64)
        sf[t, dst] = np.float64(s[t, a])
    elif op == OP_FCMPLT:
        sf = w.scratch.view(np.float64)
        s[t, dst] = 1 if sf[t, a] < sf[t, b] else 0
    elif op == OP_MSB:
        v = s[t, a]
        if v == 0:
            err[0] = t
            err[1] = op
            err[2] = 0
            err[3] = cyc
            return ST_FAULT
        bit = 63
        while (v >> bit) & 1 == 0:
            bit -= 1
        s[t, dst] = bit
    elif op == OP_BSET:
        s[t, dst] = s[t, a] | (np.int64(1) << (s[t, b] & 63))
    elif op == OP_BCLR:
        s[t, dst] = s[t, a] & ~(np.int64(1) << (s[t, b] & 63))
    elif op == OP_QPUSH or op == OP_QPUSHI:
        val = imm if op == OP_QPUSHI else s[t, a]
        if (fl & F_WIDE) and cfg.fw == 32:
            ok = _q_push(w, t, dst, val & _MASK32)
            ok = ok and _q_push(w, t, dst, (val >> 32) & _MASK32)
        else:
            ok = _q_push(w, t, dst, val)
        if not ok:
            err[0] = t
            err[1] = dst
            err[2] = op
            err[3] = cyc
            return ST_OVERFLOW
    elif op == OP_QPUSHL or op == OP_QPUSHLA:
        if op == OP_QPUSHL:
            addr = s[t, a] + imm
        else:
            addr = s[t, a]
        if addr < 0 or addr >= w.space_len[b]:
            err[0] = t
            err[1] = op
            err[2] = addr
            err[3] = cyc
            return ST_FAULT
        val = w.mem[t, w.space_off[b] + addr]
        w.stat_rd[t] += 1
        if op == OP_QPUSHLA:
            val = val + s[t, imm]
        if (fl & F_WIDE) and cfg.fw == 32:
            ok = _q_push(w, t, dst, val & _MASK32)
            ok = ok and _q_push(w, t, dst, (val >> 32) & _MASK32)
        else:
            ok = _q_push(w, t, dst, val)
        if not ok:
            err[0] = t
            err[1] = dst
            err[2] = op
            err[3] = cyc
            return ST_OVERFLOW
    elif op == OP_QPOP:
        if (fl & F_WIDE) and cfg.fw == 32:
            ok, lo = _q_pop(w, t, a)
            ok2, hi = _q_pop(w, t, a)
            s[t, dst] = (hi << 32) | (lo & _MASK32)
            ok = ok and ok2
        else:
            ok, v = _q_pop(w, t, a)
            s[t, dst] = v
        if not ok:
            err[0] = t
            err[1] = a
            err[2] = op
            err[3] = cyc
            return ST_UNDERFLOW
    elif op == OP_QPEEK:
        if imm >= w.q_count[t, a]:
            err[0] = t
            err[1] = a
            err[2] = op
            err[3] = cyc
            return ST_UNDERFLOW
        cap = w.q_cap[a]
        s[t, dst] = w.q_data[t, w.q_off[a] + (w.q_head[t, a] + imm) % cap]
        w.stat_rd[t] += 1
    elif op == OP_QROOM:
        s[t, dst] = w.q_cap[a] - w.q_count[t, a]
    elif op == OP_QDROP:
        if not _q_drop(w, t, dst, imm):
            err[0] = t
            err[1] = dst
            err[2] = op
            err[3] = cyc
            return ST_UNDERFLOW
    else:
        err[0] = t
        err[1] = op
        err[2] = pc
        err[3] = cyc
        return ST_FAULT

    if fl & F_EDGE:
        w.counters[C_EDGES] += 1
    if fl & F_IMPROVE:
        w.counters[C_IMPROVE] += 1
    if fl & F_DRAIN:
        w.counters[C_DRAIN_TOT] += 1
        w.counters[C_DRAIN_WIN] += 1
    w.counters[C_OPS] += 1
    w.pu_pc[t] = nxt
    return 0


@njit(cache=True)
def _pu_tick(cfg, w, t, cyc, err):
    task = w.pu_task[t]
    if task < 0:
        k = _pick_task(cfg, w, t)
        if k < 0:
            if w.iq_tot[t] == 0:
                w.stat_gated[t] += 1
            else:
                w.stat_idle[t] += 1
            return 0
        rq = w.t_req_empty[k]
        if rq >= 0 and w.q_count[t, rq] != 0:
            err[0] = t
            err[1] = k
            err[2] = rq
            err[3] = cyc
            return ST_EPOCH_RACE
        _dispatch(cfg, w, t, k)
        w.stat_busy[t] += 1
        return 0
    w.stat_busy[t] += 1
    if w.pu_stall[t] > 1:
        w.pu_stall[t] -= 1
        return 0
    st = _exec_op(cfg, w, t, task, cyc, err)
    if st != 0:
        return st
    if w.pu_pc[t] >= w.t_end[task]:
        # a task may not end with a fraction of a message staged
        for q in range(cfg.nq):
            if w.t_worst[task, q] > 0 and w.q_kind[q] == 1:
                if w.pushed_cur[t, q] % w.q_msg[q] != 0:
                    err[0] = t
                    err[1] = task
                    err[2] = q
                    err[3] = cyc
                    return ST_PARTIAL_MSG
        w.pu_task[t] = -1
        w.counters[C_ACT_PU] -= 1
    else:
        w.pu_stall[t] = _op_cost(cfg.fw, w.code[w.pu_pc[t], 5])
    return 0


# -- router --------------------------------------------------------------------


@njit(cache=True)
def _owner(cfg, w, cq, word):
    """(dest_tile, local_index) for a head word on a routed queue."""
    if w.q_route[cq] == 0:
        if cfg.pol_kind == 1:
            return word % cfg.tiles, word // cfg.tiles
        return word // cfg.v_chunk, word % cfg.v_chunk
    return word // cfg.e_chunk, word % cfg.e_chunk


@njit(cache=True)
def _append_flit(cfg, w, t, o, c, payload, dest, rem, consumed_resv, cyc,
                 err):
    cnt = w.buf_count[t, o, c]
    if cnt >= cfg.slots:
        err[0] = t
        err[1] = o
        err[2] = c
        err[3] = cyc
        return ST_BUF_OVERFLOW
    idx = (w.buf_head[t, o, c] + cnt) % cfg.slots
    w.buf_data[t, o, c, idx] = payload
    w.buf_dest[t, o, c, idx] = dest
    w.buf_rem[t, o, c, idx] = rem
    w.buf_count[t, o, c] = cnt + 1
    if consumed_resv == 1:
        w.buf_resv[t, o, c] -= 1
    w.stat_flits[t, o] += 1
    if cnt + 1 > w.stat_bufmax[t, o]:
        w.stat_bufmax[t, o] = cnt + 1
    w.counters[C_LAST_EVENT] = cyc
    return 0


@njit(cache=True)
def _noc_tick(cfg, w, t, cyc, err):
    ncand = 0
    # injection: one flit per cycle per outbound channel
    for c in range(cfg.nc):
        cq = w.chan_cq[c]
        if cq < 0:
            continue
        mlen = w.chan_msg[c]
        if w.inj_open[t, c] >= 0:
            o = w.inj_open[t, c]
            if w.inj_resv[t, c] == 1:
                ok = True
            else:
                ok = cfg.slots - w.occ0[t, o, c] - w.resv0[t, o, c] >= 1
            if ok:
                w.cnd_link[ncand] = 0
                w.cnd_chan[ncand] = c
                w.cnd_out[ncand] = o
                w.cnd_cont[ncand] = 1
                w.cnd_bub[ncand] = 0
                w.cnd_src[ncand] = -1
                ncand += 1
            else:
                w.stat_stall[t] += 1
        elif w.cq_vis[t, cq] >= mlen:
            word = w.q_data[t, w.q_off[cq] + w.q_head[t, cq]]
            ln = cfg.v_len if w.q_route[cq] == 0 else cfg.e_len
            if word < 0 or word >= ln:
                err[0] = t
                err[1] = cq
                err[2] = word
                err[3] = cyc
                return ST_FAULT
            dt, _ = _owner(cfg, w, cq, word)
            if dt == t:
                o = P_LOCAL
            else:
                o = route_next(cfg.kind, cfg.width, cfg.height, cfg.ruche,
                               t, dt)
            ok = w.out_owner[t, o, c] == -1
            bub = 0
            if ok:
                free0 = cfg.slots - w.occ0[t, o, c] - w.resv0[t, o, c]
                if needs_bubble(cfg.kind, -1, o):
                    bub = 1
                    ok = free0 >= mlen + 1
                else:
                    ok = free0 >= 1
            if ok:
                w.cnd_link[ncand] = 0
                w.cnd_chan[ncand] = c
                w.cnd_out[ncand] = o
                w.cnd_cont[ncand] = 0
                w.cnd_bub[ncand] = bub
                w.cnd_src[ncand] = dt
                ncand += 1
            else:
                w.stat_stall[t] += 1

    # neighbor in-links: one candidate per link, continuations first
    for link in range(1, 9):
        u = w.up_tile[t, link]
        if u < 0:
            continue
        ou = OPP[link]
        start = w.rr_link[t, link - 1]
        chosen = -1
        ch_out = 0
        ch_cont = 0
        ch_bub = 0
        any_flit = False
        for j in range(cfg.nc):
            c = (start + j) % cfg.nc
            if w.occ0[u, ou, c] <= 0:
                continue
            any_flit = True
            if w.open_out[t, link - 1, c] < 0:
                continue
            o = w.open_out[t, link - 1, c]
            if w.open_resv[t, link - 1, c] == 1:
                ok = True
            else:
                ok = cfg.slots - w.occ0[t, o, c] - w.resv0[t, o, c] >= 1
            if ok:
                chosen = c
                ch_out = o
                ch_cont = 1
                break
        if chosen < 0:
            for j in range(cfg.nc):
                c = (start + j) % cfg.nc
                if w.occ0[u, ou, c] <= 0:
                    continue
                if w.open_out[t, link - 1, c] >= 0:
                    continue
                mlen = w.chan_msg[c]
                bh = w.buf_head[u, ou, c]
                if w.buf_rem[u, ou, c, bh] != mlen:
                    continue
                dest = w.buf_dest[u, ou, c, bh]
                if dest == t:
                    o = P_LOCAL
                else:
                    o = route_next(cfg.kind, cfg.width, cfg.height,
                                   cfg.ruche, t, dest)
                if w.out_owner[t, o, c] != -1:
                    continue
                free0 = cfg.slots - w.occ0[t, o, c] - w.resv0[t, o, c]
                if needs_bubble(cfg.kind, port_class(link), o):
                    if free0 >= mlen + 1:
                        chosen = c
                        ch_out = o
                        ch_cont = 0
                        ch_bub = 1
                        break
                else:
                    if free0 >= 1:
                        chosen = c
                        ch_out = o
                        ch_cont = 0
                        ch_bub = 0
                        break
        if chosen >= 0:
            w.cnd_link[ncand] = link
            w.cnd_chan[ncand] = chosen
            w.cnd_out[ncand] = ch_out
            w.cnd_cont[ncand] = ch_cont
            w.cnd_bub[ncand] = ch_bub
            w.cnd_src[ncand] = u
            ncand += 1
        elif any_flit:
            w.stat_stall[t] += 1

    # grant one winner per (out port, channel); continuations never lose
    for i in range(ncand):
        w.cnd_win[i] = 0
    for i in range(ncand):
        if w.cnd_win[i] != 0:
            continue
        o = w.cnd_out[i]
        c = w.cnd_chan[i]
        win = -1
        for j in range(i, ncand):
            if (w.cnd_out[j] == o and w.cnd_chan[j] == c
                    and w.cnd_cont[j] == 1):
                win = j
                break
        if win < 0:
            ptr = w.rr_grant[t, o, c]
            bestd = 99
            for j in range(i, ncand):
                if w.cnd_out[j] == o and w.cnd_chan[j] == c:
                    d = (w.cnd_link[j] - ptr) % 9
                    if d < bestd:
                        bestd = d
                        win = j
            w.rr_grant[t, o, c] = (w.cnd_link[win] + 1) % 9
        for j in range(i, ncand):
            if w.cnd_out[j] == o and w.cnd_chan[j] == c:
                w.cnd_win[j] = 1 if j == win else -1
                if j != win:
                    w.stat_stall[t] += 1

    # commit granted moves
    for i in range(ncand):
        if w.cnd_win[i] != 1:
            continue
        link = w.cnd_link[i]
        c = w.cnd_chan[i]
        o = w.cnd_out[i]
        cont = w.cnd_cont[i]
        bub = w.cnd_bub[i]
        mlen = w.chan_msg[c]
        if link == 0:
            cq = w.chan_cq[c]
            _, word = _q_pop(w, t, cq)
            if cont == 0:
                dest = w.cnd_src[i]
                _, local = _owner(cfg, w, cq, word)
                payload = local
                rem = mlen
                w.counters[C_SENT] += 1
                w.ch_sent[c] += 1
                if bub == 1:
                    w.buf_resv[t, o, c] += mlen
                if mlen > 1:
                    w.inj_open[t, c] = o
                    w.inj_rem[t, c] = mlen - 1
                    w.inj_resv[t, c] = bub
                    w.inj_dest[t, c] = dest
                    w.out_owner[t, o, c] = 0
                consumed = bub
            else:
                if cfg.fw == 32 and (word >> 32) != 0:
                    err[0] = t
                    err[1] = cq
                    err[2] = word
                    err[3] = cyc
                    return ST_FAULT
                payload = word
                dest = w.inj_dest[t, c]
                rem = w.inj_rem[t, c]
                consumed = w.inj_resv[t, c]
                w.inj_rem[t, c] -= 1
                if w.inj_rem[t, c] == 0:
                    w.inj_open[t, c] = -1
                    w.inj_resv[t, c] = 0
                    w.out_owner[t, o, c] = -1
            w.counters[C_INJ_FLITS] += 1
            w.counters[C_ACT_FLITS] += 1
        else:
            u = w.cnd_src[i]
            ou = OPP[link]
            bh = w.buf_head[u, ou, c]
            payload = w.buf_data[u, ou, c, bh]
            dest = w.buf_dest[u, ou, c, bh]
            rem = w.buf_rem[u, ou, c, bh]
            w.buf_head[u, ou, c] = (bh + 1) % cfg.slots
            w.buf_count[u, ou, c] -= 1
            if ou >= P_RN:
                w.counters[C_WIRE_RUCHE] += 1
            else:
                w.counters[C_WIRE_UNIT] += 1
            if cont == 0:
                if bub == 1:
                    w.buf_resv[t, o, c] += mlen
                if rem > 1:
                    w.open_out[t, link - 1, c] = o
                    w.open_rem[t, link - 1, c] = rem - 1
                    w.open_resv[t, link - 1, c] = bub
                    w.out_owner[t, o, c] = link
                consumed = bub
            else:
                consumed = w.open_resv[t, link - 1, c]
                w.open_rem[t, link - 1, c] -= 1
                if w.open_rem[t, link - 1, c] == 0:
                    w.open_out[t, link - 1, c] = -1
                    w.open_resv[t, link - 1, c] = 0
                    w.out_owner[t, o, c] = -1
            w.rr_link[t, link - 1] = (c + 1) % cfg.nc
            w.counters[C_MOVES] += 1
        st = _append_flit(cfg, w, t, o, c, payload, dest, rem, consumed,
                          cyc, err)
        if st != 0:
            return st
    return 0


@njit(cache=True)
def _deliver_tick(cfg, w, t, cyc):
    # at most one message per tile per cycle leaves the local buffer
    start = w.rr_deliver[t]
    for j in range(cfg.nc):
        c = (start + j) % cfg.nc
        mlen = w.chan_msg[c]
        if w.buf_count[t, P_LOCAL, c] < mlen:
            continue
        iq = w.chan_iq[c]
        if w.q_cap[iq] - w.q_count[t, iq] < mlen:
            continue
        bh = w.buf_head[t, P_LOCAL, c]
        for k in range(mlen):
            _q_push(w, t, iq, w.buf_data[t, P_LOCAL, c, (bh + k) % cfg.slots])
        w.buf_head[t, P_LOCAL, c] = (bh + mlen) % cfg.slots
        w.buf_count[t, P_LOCAL, c] -= mlen
        w.counters[C_ACT_FLITS] -= mlen
        w.counters[C_DELIV] += 1
        w.counters[C_DELIV_FLITS] += mlen
        w.ch_deliv[c] += 1
        w.counters[C_LAST_EVENT] = cyc
        w.rr_deliver[t] = (c + 1) % cfg.nc
        return


# -- quiescence, epochs, livelock ------------------------------------------------


@njit(cache=True)
def _quiesce_tick(cfg, w, now, err):
    cs = w.counters
    act = (cs[C_ACT_IQ] + cs[C_ACT_CQ] + cs[C_ACT_FLITS] + cs[C_ACT_PU])
    if act > 0:
        cs[C_QUIET_SINCE] = -1
        if cs[C_ACT_PU] == 0 and now - cs[C_LAST_EVENT] > cfg.livelock:
            err[0] = cs[C_LAST_EVENT]
            err[1] = act
            err[2] = 0
            err[3] = now
            return ST_LIVELOCK
        return 0
    if cs[C_QUIET_SINCE] < 0:
        cs[C_QUIET_SINCE] = now
    if now - cs[C_QUIET_SINCE] < cfg.idle_lat:
        return 0
    if cfg.mode == MODE_BARRIERLESS:
        cs[C_DONE] = 1
        return ST_DONE
    # epoch boundary: decide termination, else broadcast the next epoch
    pay = 0
    if cfg.kernel_kind == KERNEL_PAGERANK:
        sf = w.scratch.view(np.float64)
        delta = 0.0
        dang = 0.0
        for t in range(cfg.tiles):
            delta += sf[t, cfg.slot_delta]
            dang += sf[t, cfg.slot_dangling]
        w.aux_f[2] = delta
        ai = w.aux_f.view(np.int64)
        cs[C_PR_DELTA] = ai[2]
        if cs[C_EPOCHS] >= 1 and (delta < w.aux_f[0]
                                  or cs[C_EPOCHS] >= cfg.max_epochs):
            cs[C_DONE] = 1
            return ST_DONE
        w.aux_f[2] = dang
        pay = ai[2]
    else:
        if cs[C_DRAIN_WIN] == 0:
            cs[C_DONE] = 1
            return ST_DONE
    ep = cs[C_EPOCHS] + 1
    c = cfg.bc_chan
    mlen = w.chan_msg[c]
    for t in range(cfg.tiles):
        bh = w.buf_head[t, P_LOCAL, c]
        cnt = w.buf_count[t, P_LOCAL, c]
        for k in range(mlen):
            if k == 0:
                v = ep
            elif cfg.fw == 32:
                v = pay & _MASK32 if k == 1 else (pay >> 32) & _MASK32
            else:
                v = pay
            idx = (bh + cnt + k) % cfg.slots
            w.buf_data[t, P_LOCAL, c, idx] = v
            w.buf_dest[t, P_LOCAL, c, idx] = t
            w.buf_rem[t, P_LOCAL, c, idx] = mlen - k
        w.buf_count[t, P_LOCAL, c] = cnt + mlen
        w.stat_flits[t, P_LOCAL] += mlen
        if cnt + mlen > w.stat_bufmax[t, P_LOCAL]:
            w.stat_bufmax[t, P_LOCAL] = cnt + mlen
        w.ch_sent[c] += 1
    cs[C_SENT] += cfg.tiles
    cs[C_INJ_FLITS] += mlen * cfg.tiles
    cs[C_ACT_FLITS] += mlen * cfg.tiles
    cs[C_EPOCHS] = ep
    cs[C_DRAIN_WIN] = 0
    cs[C_QUIET_SINCE] = -1
    cs[C_LAST_EVENT] = now
    return 0


@njit(cache=True)
def step_n(cfg, w, budget, err):
    for _ in range(budget):
        cyc = w.counters[C_CYCLE]
        w.occ0[:, :, :] = w.buf_count
        w.resv0[:, :, :] = w.buf_resv
        w.cq_vis[:, :] = w.q_count
        for t in range(cfg.tiles):
            st = _pu_tick(cfg, w, t, cyc, err)
            if st != 0:
                return st
        for t in range(cfg.tiles):
            st = _noc_tick(cfg, w, t, cyc, err)
            if st != 0:
                return st
        for t in range(cfg.tiles):
            _deliver_tick(cfg, w, t, cyc)
        w.counters[C_CYCLE] = cyc + 1
        st = _quiesce_tick(cfg, w, cyc + 1, err)
        if st != 0:
            return st
    return ST_BUDGET


# -- python-side controller ------------------------------------------------------


class SimFault(RuntimeError):
    def __init__(self, status: int, err: tuple, cycles: int):
        self.status = status
        self.err = err
        self.cycles = cycles
        super().__init__(format_status(status, err, cycles))


def format_status(status: int, err: tuple, cycles: int) -> str:
    name = STATUS_NAMES.get(status, f"status {status}")
    if status == ST_LIVELOCK:
        return (f"{name} at cycle {cycles}: no event since cycle {err[0]} "
                f"with {err[1]} words/flits in flight")
    if status == ST_BUDGET:
        return f"cycle limit reached at cycle {cycles}"
    return (f"{name} at cycle {err[3]}: tile {err[0]}, context "
            f"({err[1]}, {err[2]})")


TIMELINE_FIELDS = ("cycle", "busy_pus", "iq_words", "cq_words",
                   "buf_flits", "msgs_sent", "msgs_delivered", "edges",
                   "improvements", "drained", "epochs")


@dataclass
class RunResult:
    status: int
    cycles: int
    err: tuple
    timeline: np.ndarray = field(
        default_factory=lambda: np.zeros((0, len(TIMELINE_FIELDS)),
                                         dtype=np.int64))

    @property
    def ok(self) -> bool:
        return self.status == ST_DONE

    def raise_ok(self) -> "RunResult":
        if self.status != ST_DONE:
            raise SimFault(self.status, self.err, self.cycles)
        return self


def _sample(w: World) -> list[int]:
    cs = w.counters
    return [int(cs[i]) for i in
            (C_CYCLE, C_ACT_PU, C_ACT_IQ, C_ACT_CQ, C_ACT_FLITS, C_SENT,
             C_DELIV, C_EDGES, C_IMPROVE, C_DRAIN_TOT, C_EPOCHS)]


def run(cfg: Cfg, world: World, *, cycle_limit: int = 10**9,
        timeline_every: int = 0) -> RunResult:
    """Advance the world to completion, a fault, or the cycle limit."""
    err = np.zeros(4, dtype=np.int64)
    rows = []
    chunk = timeline_every if timeline_every > 0 else (1 << 20)
    status = ST_BUDGET
    while True:
        done = int(world.counters[C_CYCLE])
        budget = min(chunk, cycle_limit - done)
        if budget <= 0:
            break
        status = int(step_n(cfg, world, budget, err))
        if timeline_every > 0:
            rows.append(_sample(world))
        if status != ST_BUDGET:
            break
    timeline = (np.array(rows, dtype=np.int64) if rows
                else np.zeros((0, len(TIMELINE_FIELDS)), dtype=np.int64))
    return RunResult(status=status, cycles=int(world.counters[C_CYCLE]),
                     err=tuple(int(x) for x in err), timeline=timeline)

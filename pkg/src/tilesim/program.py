"""Task programs: a tiny register ISA, an assembler, and static validation.

A kernel is expressed as a handful of tasks. Each task consumes one kind of
message from one input queue, runs a short body against the tile scratchpad,
and pushes messages into output queues. Bodies are written in a small
register ISA and assembled into flat int64 tables that the engine interprets
one op per cycle.

Op encoding: each op is a row ``[opcode, dst, a, b, imm, flags]``. Register
operands index the 32-slot scratchpad; slots 0..15 persist across
invocations (tile-global state), slots 16..31 are invocation-local
(auto-popped parameters first, then temporaries). Branch targets are stored
body-relative in ``imm`` and rebased when programs are packed for the
engine. Float immediates travel as raw bit patterns.

Queue op operand conventions (documented here because the row layout is
shared by all ops):

* ``QPUSH   dst=queue, a=src_reg``
* ``QPUSHI  dst=queue, imm=value``
* ``QPUSHL  dst=queue, b=space, a=idx_reg, imm=offset`` (load+push, 1 cycle)
* ``QPUSHLA dst=queue, b=space, a=idx_reg, imm=addend_reg`` (load+add+push)
* ``QPOP    dst=reg,   a=queue``
* ``QPEEK   dst=reg,   a=queue, imm=word_offset``
* ``QROOM   dst=reg,   a=queue`` (free words)
* ``QDROP   dst=queue, imm=word_count``
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

# scratchpad register file layout
N_SCRATCH = 32
PARAM_BASE = 16

# op flags
F_EDGE = 1  # executing this op counts one processed edge
F_IMPROVE = 2  # executing this op counts one value improvement
F_DRAIN = 4  # executing this op counts one vertex drained to the work queue
F_WIDE = 8  # queue op moves a 64-bit value (two flits at 32-bit width)

OP_LDI = 0
OP_LDIF = 1
OP_MOV = 2
OP_LD = 3
OP_ST = 4
OP_ADD = 5
OP_ADDI = 6
OP_SUB = 7
OP_MUL = 8
OP_DIV = 9
OP_AND = 10
OP_ANDI = 11
OP_OR = 12
OP_ORI = 13
OP_XOR = 14
OP_SHL = 15
OP_SHLI = 16
OP_SHR = 17
OP_SHRI = 18
OP_MIN = 19
OP_CMPLT = 20
OP_CMPLTI = 21
OP_CMPEQ = 22
OP_CMPEQI = 23
OP_FADD = 24
OP_FSUB = 25
OP_FMUL = 26
OP_FDIV = 27
OP_FABS = 28
OP_I2F = 29
OP_FCMPLT = 30
OP_BEQZ = 31
OP_BNEZ = 32
OP_JMP = 33
OP_MSB = 34
OP_BSET = 35
OP_BCLR = 36
OP_QPUSH = 37
OP_QPUSHI = 38
OP_QPUSHL = 39
OP_QPUSHLA = 40
OP_QPOP = 41
OP_QPEEK = 42
OP_QROOM = 43
OP_QDROP = 44
OP_MOD = 45

OP_NAMES = {
    v: k[3:] for k, v in list(globals().items()) if k.startswith("OP_")
}

_BRANCH_OPS = (OP_BEQZ, OP_BNEZ, OP_JMP)
_PUSH_OPS = (OP_QPUSH, OP_QPUSHI, OP_QPUSHL, OP_QPUSHLA)
_QUEUE_OPS = _PUSH_OPS + (OP_QPOP, OP_QPEEK, OP_QROOM, OP_QDROP)
_WIDEABLE = (OP_QPUSH, OP_QPUSHL, OP_QPUSHLA, OP_QPOP, OP_QPEEK)


def float_bits(x: float) -> int:
    """Raw int64 bit pattern of a float64, for LDIF immediates."""
    return struct.unpack("<q", struct.pack("<d", x))[0]


def bits_float(b: int) -> float:
    return struct.unpack("<d", struct.pack("<q", b))[0]


def op_cost(opcode: int, flags: int, flit_width: int) -> int:
    """Cycles charged to the processing unit for one op."""
    if opcode in _WIDEABLE and (flags & F_WIDE) and flit_width == 32:
        return 2
    return 1


# -- message and queue shapes ------------------------------------------------

WORD = "word"
HEAD = "head"  # routing key: a global index, rewritten to local at injection
WIDE = "wide"  # 64-bit payload: two flits at 32-bit width


def field_words(kind: str, flit_width: int) -> int:
    if kind == WIDE:
        return 2 if flit_width == 32 else 1
    return 1


def msg_words(fields: tuple, flit_width: int) -> int:
    return sum(field_words(kind, flit_width) for _, kind in fields)


IQ = "iq"
CQ = "cq"

ROUTE_VERTEX = "vertex"
ROUTE_EDGE = "edge"


@dataclass(frozen=True)
class QueueSpec:
    """One named queue. IQs live on the consuming tile; CQs are network
    channels whose messages are routed by their head flit and delivered
    into ``delivers_to`` on the owner tile."""

    name: str
    kind: str
    capacity_words: int
    fields: tuple
    route_space: str | None = None
    delivers_to: int | None = None
    channel: int = 0


@dataclass(frozen=True)
class OutSpec:
    """Output-queue claim for task eligibility.

    Unguarded: the scheduler requires ``worst_words`` free before dispatch.
    Guarded: the scheduler only requires room for one message; the body must
    re-check room (QROOM) before every additional message it emits.
    """

    queue: int
    worst_words: int
    guarded: bool = False


@dataclass(frozen=True)
class TaskSpec:
    name: str
    iq: int
    params: tuple  # per-param wide flags; popped into scratch[16..]
    outs: tuple
    code: np.ndarray
    n_temps: int = 0


PER_VERTEX = "per_vertex"
PER_EDGE = "per_edge"
BITMAP = "bitmap"
SCALAR = "scalar"


@dataclass(frozen=True)
class SpaceSpec:
    """One per-tile memory region addressable by LD/ST/QPUSHL."""

    name: str
    kind: str
    scalar_len: int = 0


@dataclass
class Program:
    name: str
    queues: list
    tasks: list
    spaces: list
    start_queue: int
    meta: dict = field(default_factory=dict)

    def queue_index(self, name: str) -> int:
        for i, q in enumerate(self.queues):
            if q.name == name:
                return i
        raise KeyError(name)

    def task_index(self, name: str) -> int:
        for i, t in enumerate(self.tasks):
            if t.name == name:
                return i
        raise KeyError(name)

    def space_index(self, name: str) -> int:
        for i, s in enumerate(self.spaces):
            if s.name == name:
                return i
        raise KeyError(name)


# -- assembler ---------------------------------------------------------------


class Asm:
    """Builds one task body.

    Registers are referred to by name. ``glob`` binds a name to a persistent
    slot (0..15), parameters passed to the constructor land in slots 16..,
    and ``temp`` allocates the next free invocation-local slot. Labels are
    plain strings; forward references are patched at ``build`` time.
    """

    def __init__(self, params: tuple = ()):
        self._rows: list[list[int]] = []
        self._labels: dict[str, int] = {}
        self._fixups: list[tuple[int, str]] = []
        self._regs: dict[str, int] = {}
        self._next_temp = PARAM_BASE + len(params)
        self.param_wide = tuple(bool(w) for _, w in params)
        for i, (name, _) in enumerate(params):
            self._regs[name] = PARAM_BASE + i

    def glob(self, name: str, slot: int) -> str:
        assert 0 <= slot < PARAM_BASE
        self._regs[name] = slot
        return name

    def temp(self, name: str) -> str:
        if name in self._regs:
            raise ValueError(f"register {name!r} already defined")
        if self._next_temp >= N_SCRATCH:
            raise ValueError("out of scratch registers")
        self._regs[name] = self._next_temp
        self._next_temp += 1
        return name

    def n_temps(self) -> int:
        return self._next_temp - PARAM_BASE - len(self.param_wide)

    def _r(self, name) -> int:
        if isinstance(name, int):
            assert 0 <= name < N_SCRATCH
            return name
        return self._regs[name]

    def label(self, name: str):
        if name in self._labels:
            raise ValueError(f"label {name!r} already placed")
        self._labels[name] = len(self._rows)

    def _emit(self, op, dst=0, a=0, b=0, imm=0, flags=0):
        self._rows.append([op, dst, a, b, int(imm), flags])

    def _branch(self, op, a, target: str):
        self._fixups.append((len(self._rows), target))
        self._emit(op, a=a, imm=-1)

    # data movement
    def ldi(self, dst, imm):
        self._emit(OP_LDI, dst=self._r(dst), imm=imm)

    def ldif(self, dst, value: float):
        self._emit(OP_LDIF, dst=self._r(dst), imm=float_bits(value))

    def mov(self, dst, a):
        self._emit(OP_MOV, dst=self._r(dst), a=self._r(a))

    def ld(self, dst, space: int, idx, off=0):
        self._emit(OP_LD, dst=self._r(dst), a=self._r(idx), b=space, imm=off)

    def st(self, space: int, idx, val, off=0, flags=0):
        self._emit(OP_ST, dst=self._r(val), a=self._r(idx), b=space, imm=off,
                   flags=flags)

    # integer arithmetic
    def _rrr(self, op, dst, a, b, flags=0):
        self._emit(op, dst=self._r(dst), a=self._r(a), b=self._r(b),
                   flags=flags)

    def _rri(self, op, dst, a, imm, flags=0):
        self._emit(op, dst=self._r(dst), a=self._r(a), imm=imm, flags=flags)

    def add(self, d, a, b):
        self._rrr(OP_ADD, d, a, b)

    def addi(self, d, a, imm, flags=0):
        self._rri(OP_ADDI, d, a, imm, flags)

    def sub(self, d, a, b):
        self._rrr(OP_SUB, d, a, b)

    def mul(self, d, a, b):
        self._rrr(OP_MUL, d, a, b)

    def div(self, d, a, b):
        self._rrr(OP_DIV, d, a, b)

    def mod(self, d, a, b):
        self._rrr(OP_MOD, d, a, b)

    def and_(self, d, a, b):
        self._rrr(OP_AND, d, a, b)

    def andi(self, d, a, imm):
        self._rri(OP_ANDI, d, a, imm)

    def or_(self, d, a, b):
        self._rrr(OP_OR, d, a, b)

    def ori(self, d, a, imm):
        self._rri(OP_ORI, d, a, imm)

    def xor(self, d, a, b):
        self._rrr(OP_XOR, d, a, b)

    def shl(self, d, a, b):
        self._rrr(OP_SHL, d, a, b)

    def shli(self, d, a, imm):
        self._rri(OP_SHLI, d, a, imm)

    def shr(self, d, a, b):
        self._rrr(OP_SHR, d, a, b)

    def shri(self, d, a, imm):
        self._rri(OP_SHRI, d, a, imm)

    def min_(self, d, a, b):
        self._rrr(OP_MIN, d, a, b)

    def cmplt(self, d, a, b):
        self._rrr(OP_CMPLT, d, a, b)

    def cmplti(self, d, a, imm):
        self._rri(OP_CMPLTI, d, a, imm)

    def cmpeq(self, d, a, b):
        self._rrr(OP_CMPEQ, d, a, b)

    def cmpeqi(self, d, a, imm):
        self._rri(OP_CMPEQI, d, a, imm)

    # float arithmetic (operands are bit patterns in the same registers)
    def fadd(self, d, a, b):
        self._rrr(OP_FADD, d, a, b)

    def fsub(self, d, a, b):
        self._rrr(OP_FSUB, d, a, b)

    def fmul(self, d, a, b):
        self._rrr(OP_FMUL, d, a, b)

    def fdiv(self, d, a, b):
        self._rrr(OP_FDIV, d, a, b)

    def fabs_(self, d, a):
        self._emit(OP_FABS, dst=self._r(d), a=self._r(a))

    def i2f(self, d, a):
        self._emit(OP_I2F, dst=self._r(d), a=self._r(a))

    def fcmplt(self, d, a, b):
        self._rrr(OP_FCMPLT, d, a, b)

    # control
    def beqz(self, a, target: str):
        self._branch(OP_BEQZ, self._r(a), target)

    def bnez(self, a, target: str):
        self._branch(OP_BNEZ, self._r(a), target)

    def jmp(self, target: str):
        self._fixups.append((len(self._rows), target))
        self._emit(OP_JMP, imm=-1)

    # bit manipulation
    def msb(self, d, a):
        self._emit(OP_MSB, dst=self._r(d), a=self._r(a))

    def bset(self, d, a, b):
        self._rrr(OP_BSET, d, a, b)

    def bclr(self, d, a, b):
        self._rrr(OP_BCLR, d, a, b)

    # queues
    def qpush(self, q: int, a, flags=0):
        self._emit(OP_QPUSH, dst=q, a=self._r(a), flags=flags)

    def qpushi(self, q: int, imm, flags=0):
        self._emit(OP_QPUSHI, dst=q, imm=imm, flags=flags)

    def qpushl(self, q: int, space: int, idx, off=0, flags=0):
        self._emit(OP_QPUSHL, dst=q, a=self._r(idx), b=space, imm=off,
                   flags=flags)

    def qpushla(self, q: int, space: int, idx, addend, flags=0):
        self._emit(OP_QPUSHLA, dst=q, a=self._r(idx), b=space,
                   imm=self._r(addend), flags=flags)

    def qpop(self, dst, q: int, flags=0):
        self._emit(OP_QPOP, dst=self._r(dst), a=q, flags=flags)

    def qpeek(self, dst, q: int, off=0, flags=0):
        self._emit(OP_QPEEK, dst=self._r(dst), a=q, imm=off, flags=flags)

    def qroom(self, dst, q: int):
        self._emit(OP_QROOM, dst=self._r(dst), a=q)

    def qdrop(self, q: int, n=1):
        self._emit(OP_QDROP, dst=q, imm=n)

    def build(self) -> np.ndarray:
        end = len(self._rows)
        for row_idx, target in self._fixups:
            if target == "end":
                pc = self._labels.get("end", end)
            else:
                if target not in self._labels:
                    raise ValueError(f"undefined label {target!r}")
                pc = self._labels[target]
            self._rows[row_idx][4] = pc
        return np.array(self._rows, dtype=np.int64).reshape(-1, 6)


def disassemble(code: np.ndarray) -> list[str]:
    out = []
    for pc in range(code.shape[0]):
        op, dst, a, b, imm, flags = (int(x) for x in code[pc])
        name = OP_NAMES.get(op, f"?{op}")
        extra = f" flags={flags}" if flags else ""
        out.append(f"{pc:3d}: {name} dst={dst} a={a} b={b} imm={imm}{extra}")
    return out


# -- validation ---------------------------------------------------------------

CODE_BYTES_PER_OP = 8
DEFAULT_CODE_BUDGET = 32 * 1024


def validate_program(prog: Program, flit_width: int,
                     code_budget: int = DEFAULT_CODE_BUDGET) -> None:
    """Static checks; raises ValueError listing every problem found."""
    errs: list[str] = []
    if flit_width not in (32, 64):
        errs.append(f"flit width must be 32 or 64, got {flit_width}")

    names = [q.name for q in prog.queues]
    if len(set(names)) != len(names):
        errs.append("duplicate queue names")
    names = [t.name for t in prog.tasks]
    if len(set(names)) != len(names):
        errs.append("duplicate task names")
    names = [s.name for s in prog.spaces]
    if len(set(names)) != len(names):
        errs.append("duplicate space names")

    nq = len(prog.queues)
    for qi, q in enumerate(prog.queues):
        w = msg_words(q.fields, flit_width) if q.fields else 0
        if q.capacity_words < max(w, 1):
            errs.append(f"queue {q.name}: capacity {q.capacity_words} "
                        f"cannot hold one {w}-word message")
        if q.kind == CQ:
            if not q.fields or q.fields[0][1] != HEAD:
                errs.append(f"queue {q.name}: channel messages must lead "
                            f"with a head field")
            if q.delivers_to is None or not (0 <= q.delivers_to < nq) or \
                    prog.queues[q.delivers_to].kind != IQ:
                errs.append(f"queue {q.name}: delivers_to must name an "
                            f"input queue")
            elif prog.queues[q.delivers_to].fields != q.fields:
                errs.append(f"queue {q.name}: field shape differs from its "
                            f"delivery queue")
            if q.route_space not in (ROUTE_VERTEX, ROUTE_EDGE):
                errs.append(f"queue {q.name}: bad route space "
                            f"{q.route_space!r}")
        elif q.kind == IQ:
            if q.delivers_to is not None:
                errs.append(f"queue {q.name}: input queues do not deliver")
        else:
            errs.append(f"queue {q.name}: unknown kind {q.kind!r}")

    if not (0 <= prog.start_queue < nq) or \
            prog.queues[prog.start_queue].kind != IQ:
        errs.append("start queue must be an input queue")

    total_ops = 0
    for t in prog.tasks:
        total_ops += t.code.shape[0]
        if not (0 <= t.iq < nq and prog.queues[t.iq].kind == IQ):
            errs.append(f"task {t.name}: iq must reference an input queue")
        n_params = len(t.params)
        if PARAM_BASE + n_params + t.n_temps > N_SCRATCH:
            errs.append(f"task {t.name}: {n_params} params + {t.n_temps} "
                        f"temps exceed the scratch register file")
        allowed = {o.queue for o in t.outs} | {t.iq}
        for o in t.outs:
            if not (0 <= o.queue < nq):
                errs.append(f"task {t.name}: out references queue {o.queue}")
                continue
            cap = prog.queues[o.queue].capacity_words
            if o.worst_words < 1:
                errs.append(f"task {t.name}: out {prog.queues[o.queue].name} "
                            f"declares no usage")
            if not o.guarded and o.worst_words > cap:
                errs.append(f"task {t.name}: worst case {o.worst_words} "
                            f"exceeds {prog.queues[o.queue].name} capacity "
                            f"{cap}")
        n_ops = t.code.shape[0]
        for pc in range(n_ops):
            op, dst, a, b, imm, flags = (int(x) for x in t.code[pc])
            if op not in OP_NAMES:
                errs.append(f"task {t.name} pc {pc}: unknown opcode {op}")
                continue
            if op in _BRANCH_OPS:
                if not (0 <= imm <= n_ops):
                    errs.append(f"task {t.name} pc {pc}: branch target "
                                f"{imm} outside body")
            if op in _QUEUE_OPS:
                qref = dst if op in _PUSH_OPS or op == OP_QDROP else a
                if qref not in allowed:
                    errs.append(f"task {t.name} pc {pc}: touches queue "
                                f"{qref} not declared by the task")
            if op in (OP_LD, OP_ST, OP_QPUSHL, OP_QPUSHLA):
                if not (0 <= b < len(prog.spaces)):
                    errs.append(f"task {t.name} pc {pc}: bad space {b}")
            if (flags & F_WIDE) and op not in _WIDEABLE:
                errs.append(f"task {t.name} pc {pc}: wide flag on a "
                            f"non-queue op")

    if total_ops * CODE_BYTES_PER_OP > code_budget:
        errs.append(f"program code {total_ops * CODE_BYTES_PER_OP} bytes "
                    f"exceeds the {code_budget}-byte budget")

    if errs:
        raise ValueError("invalid program:\n  " + "\n  ".join(errs))

import numpy as np
import pytest

from tilesim import program as pr


def test_float_bits_round_trip():
    for x in (0.0, 1.0, -2.5, 0.85, 1e-300, float("inf")):
        assert pr.bits_float(pr.float_bits(x)) == x


def test_msg_words_depends_on_flit_width():
    fields = (("dst", pr.HEAD), ("end", pr.WORD), ("val", pr.WIDE))
    assert pr.msg_words(fields, 32) == 4
    assert pr.msg_words(fields, 64) == 3


def test_op_cost_wide_push():
    assert pr.op_cost(pr.OP_QPUSH, pr.F_WIDE, 32) == 2
    assert pr.op_cost(pr.OP_QPUSH, pr.F_WIDE, 64) == 1
    assert pr.op_cost(pr.OP_QPUSH, 0, 32) == 1
    assert pr.op_cost(pr.OP_ADD, 0, 32) == 1


def test_asm_labels_and_encoding():
    a = pr.Asm(params=(("idx", False), ("val", True)))
    a.temp("i")
    a.ldi("i", 0)
    a.label("loop")
    a.addi("i", "i", 1)
    a.cmplt("i", "i", "idx")  # silly but well formed
    a.bnez("i", "loop")
    a.jmp("end")
    code = a.build()
    assert code.shape == (5, 6)
    assert code[0, 0] == pr.OP_LDI
    # bnez targets the label, jmp end falls off the body
    assert code[3, 4] == 1
    assert code[4, 4] == 5
    assert a.param_wide == (False, True)
    # params occupy 16.., temps follow
    assert code[0, 1] == pr.PARAM_BASE + 2


def test_asm_rejects_undefined_label():
    a = pr.Asm()
    a.jmp("nowhere")
    with pytest.raises(ValueError, match="nowhere"):
        a.build()


def test_asm_rejects_duplicate_label_and_register_exhaustion():
    a = pr.Asm()
    a.label("x")
    with pytest.raises(ValueError):
        a.label("x")
    b = pr.Asm()
    for i in range(pr.N_SCRATCH - pr.PARAM_BASE):
        b.temp(f"t{i}")
    with pytest.raises(ValueError, match="scratch"):
        b.temp("one_too_many")


def test_disassemble_names_ops():
    a = pr.Asm()
    a.temp("x")
    a.ldi("x", 7)
    a.qpush(0, "x", flags=pr.F_WIDE)
    text = pr.disassemble(a.build())
    assert "LDI" in text[0]
    assert "QPUSH" in text[1] and "flags=8" in text[1]


def make_program():
    # minimal two-task pipeline: work queue -> t_fan -> channel -> t_sink
    work = pr.QueueSpec("work", pr.IQ, 32, (("v", pr.WORD),))
    inbox = pr.QueueSpec("inbox", pr.IQ, 64,
                         (("dst", pr.HEAD), ("val", pr.WORD)))
    chan = pr.QueueSpec("chan", pr.CQ, 16,
                        (("dst", pr.HEAD), ("val", pr.WORD)),
                        route_space=pr.ROUTE_VERTEX, delivers_to=1)
    a = pr.Asm()
    a.temp("v")
    a.qpop("v", 0)
    a.qpush(2, "v")
    a.qpushi(2, 9)
    t_fan = pr.TaskSpec("t_fan", iq=0, params=(), code=a.build(),
                        outs=(pr.OutSpec(2, worst_words=2),), n_temps=1)
    b = pr.Asm(params=(("dst", False), ("val", False)))
    b.temp("x")
    b.ld("x", 0, "dst")
    b.add("x", "x", "val")
    b.st(0, "dst", "x")
    t_sink = pr.TaskSpec("t_sink", iq=1, params=((("dst"), False),
                                                 (("val"), False)),
                         code=b.build(), outs=(), n_temps=1)
    spaces = [pr.SpaceSpec("val", pr.PER_VERTEX)]
    return pr.Program("toy", [work, inbox, chan], [t_fan, t_sink],
                      spaces, start_queue=0)


def test_validate_accepts_good_program():
    pr.validate_program(make_program(), 32)
    pr.validate_program(make_program(), 64)


def test_validate_rejects_bad_flit_width():
    with pytest.raises(ValueError, match="flit width"):
        pr.validate_program(make_program(), 48)


def test_validate_rejects_undersized_queue():
    p = make_program()
    p.queues[2] = pr.QueueSpec("chan", pr.CQ, 1,
                               (("dst", pr.HEAD), ("val", pr.WORD)),
                               route_space=pr.ROUTE_VERTEX, delivers_to=1)
    with pytest.raises(ValueError, match="cannot hold"):
        pr.validate_program(p, 32)


def test_validate_rejects_channel_without_head():
    p = make_program()
    fields = (("a", pr.WORD), ("b", pr.WORD))
    p.queues[1] = pr.QueueSpec("inbox", pr.IQ, 64, fields)
    p.queues[2] = pr.QueueSpec("chan", pr.CQ, 16, fields,
                               route_space=pr.ROUTE_VERTEX, delivers_to=1)
    with pytest.raises(ValueError, match="head"):
        pr.validate_program(p, 32)


def test_validate_rejects_field_shape_mismatch():
    p = make_program()
    p.queues[1] = pr.QueueSpec("inbox", pr.IQ, 64,
                               (("dst", pr.HEAD), ("val", pr.WIDE)))
    with pytest.raises(ValueError, match="field shape"):
        pr.validate_program(p, 32)


def test_validate_rejects_worst_case_exceeding_capacity():
    p = make_program()
    t = p.tasks[0]
    p.tasks[0] = pr.TaskSpec(t.name, t.iq, t.params,
                             (pr.OutSpec(2, worst_words=99),), t.code,
                             t.n_temps)
    with pytest.raises(ValueError, match="worst case"):
        pr.validate_program(p, 32)


def test_validate_rejects_branch_outside_body():
    p = make_program()
    code = np.array([[pr.OP_JMP, 0, 0, 0, 40, 0]], dtype=np.int64)
    t = p.tasks[1]
    p.tasks[1] = pr.TaskSpec(t.name, t.iq, t.params, t.outs, code, 0)
    with pytest.raises(ValueError, match="branch target"):
        pr.validate_program(p, 32)


def test_validate_rejects_undeclared_queue_touch():
    p = make_program()
    a = pr.Asm()
    a.temp("v")
    a.qpop("v", 0)
    a.qpush(1, "v")  # pushes straight into the other task's queue
    t = p.tasks[0]
    p.tasks[0] = pr.TaskSpec(t.name, t.iq, t.params, t.outs, a.build(), 1)
    with pytest.raises(ValueError, match="not declared"):
        pr.validate_program(p, 32)


def test_validate_rejects_bad_space_and_wide_misuse():
    p = make_program()
    a = pr.Asm(params=(("dst", False), ("val", False)))
    a.temp("x")
    a.ld("x", 5, "dst")
    a._emit(pr.OP_ADD, dst=17, a=17, b=17, flags=pr.F_WIDE)
    t = p.tasks[1]
    p.tasks[1] = pr.TaskSpec(t.name, t.iq, t.params, t.outs, a.build(), 1)
    with pytest.raises(ValueError) as e:
        pr.validate_program(p, 32)
    assert "bad space" in str(e.value)
    assert "wide flag" in str(e.value)


def test_validate_enforces_code_budget():
    p = make_program()
    with pytest.raises(ValueError, match="budget"):
        pr.validate_program(p, 32, code_budget=8)


def test_validate_rejects_start_queue_on_channel():
    p = make_program()
    p.start_queue = 2
    with pytest.raises(ValueError, match="start queue"):
        pr.validate_program(p, 32)


def test_program_lookups():
    p = make_program()
    assert p.queue_index("chan") == 2
    assert p.task_index("t_sink") == 1
    assert p.space_index("val") == 0
    with pytest.raises(KeyError):
        p.queue_index("nope")

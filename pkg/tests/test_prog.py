import dataclasses

import pytest
from hypothesis import given, settings, strategies as st

from porthos import prog
from porthos.cli import bundled_programs, read_program


def memory_count(p):
    return sum(prog.is_memory(n) for t in p.threads for n in prog.iter_instrs(t.body))


def node_count(p, kind):
    return sum(isinstance(n, kind) for t in p.threads for n in prog.iter_instrs(t.body))


def test_iriw_shape():
    p = read_program("iriw")
    assert len(p.threads) == 4
    assert memory_count(p) == 6


def test_skip_program():
    p = prog.parse_program("program p\nthread t0\n skip")
    assert len(p.threads) == 1
    assert isinstance(p.threads[0].body, prog.Skip)


def test_constant_store_desugars():
    p = prog.parse_program("program sb\nthread t0\n x := 1;\n r0 <- y\nthread t1\n y := 1;\n r1 <- x")
    assert len(p.threads) == 2
    assert memory_count(p) == 4
    assert node_count(p, prog.Local) == 2
    for t in p.threads:
        local, store = prog.flatten_seq(t.body)[:2]
        assert isinstance(local, prog.Local) and isinstance(store, prog.Store)
        assert store.reg == local.reg and local.expr == prog.Const(1)


def test_if_without_else_gains_skip():
    p = prog.parse_program("program p\nthread t0\n r <- x;\n if (r = 1) { y := r }")
    node = prog.flatten_seq(p.threads[0].body)[1]
    assert isinstance(node, prog.If) and isinstance(node.orelse, prog.Skip)


def test_iids_unique_and_textual():
    p = read_program("wrc")
    iids = [n.iid for t in p.threads for n in prog.iter_instrs(t.body)]
    assert iids == sorted(iids) and len(set(iids)) == len(iids)


def test_syntax_error_position():
    with pytest.raises(prog.ProgramSyntaxError) as exc:
        prog.parse_program("program p\nthread t0\n r <- ;")
    assert "3" in str(exc.value)


def test_duplicate_thread_rejected():
    with pytest.raises(prog.ProgramSyntaxError, match="t0"):
        prog.parse_program("program p\nthread t0\n skip\nthread t0\n skip")


def test_undefined_register_warns(caplog):
    prog.parse_program("program p\nthread t0\n x := r9")
    assert any("r9" in r.message for r in caplog.records)


LOOP = "program w\nthread t0\n r <- x;\n while (r = 0) { r <- x }"


def test_unroll_depth_one():
    p = prog.unroll(prog.parse_program(LOOP), 1)
    loop = prog.flatten_seq(p.threads[0].body)[1]
    assert prog.shape(loop) == prog.shape(prog.If(prog.parse_pred("r = 0"), prog.Load("r", "x"), prog.Skip()))


def test_unroll_depth_two():
    p = prog.unroll(prog.parse_program(LOOP), 2)
    loop = prog.flatten_seq(p.threads[0].body)[1]
    b = prog.parse_pred("r = 0")
    body = prog.Load("r", "x")
    expect = prog.If(b, prog.Seq(body, prog.If(b, body, prog.Skip())), prog.Skip())
    assert prog.shape(loop) == prog.shape(expect)
    assert not prog.has_loops(p)
    assert prog.validate(p, require_acyclic=True) == []


def test_unroll_idempotent_on_acyclic():
    p = read_program("sb")
    assert prog.unroll(p, 3) == p


def test_unroll_rejects_zero():
    with pytest.raises(ValueError):
        prog.unroll(read_program("sb"), 0)


def test_peterson_unrolls_acyclic():
    p = prog.unroll(read_program("peterson"), 1)
    assert prog.validate(p, require_acyclic=True) == []


def test_validate_sb_clean():
    assert prog.validate(read_program("sb")) == []


def test_validate_duplicate_tid():
    p = read_program("sb")
    bad = prog.Program(p.name, (p.threads[0], dataclasses.replace(p.threads[1], tid="t0")))
    bad = prog.renumber(bad)
    diags = prog.validate(bad)
    assert len(diags) == 1 and "t0" in str(diags[0])


def test_validate_loop_when_acyclic_required():
    assert prog.validate(prog.parse_program(LOOP), require_acyclic=True)


def test_insert_fences():
    p = prog.insert_fences(read_program("sb"), "sync")
    assert node_count(p, prog.Fence) == 4  # 3 statements per thread after desugaring
    assert prog.validate(p) == []


@pytest.mark.parametrize("name", bundled_programs())
def test_format_roundtrip_bundled(name):
    p = read_program(name)
    assert prog.shape(prog.parse_program(prog.format_program(p))) == prog.shape(p)


# random straight-line / branching programs


regs = st.sampled_from(["r0", "r1", "r2"])
locs = st.sampled_from(["x", "y", "z"])
consts = st.integers(min_value=-3, max_value=5)
exprs = st.recursive(
    st.one_of(consts.map(prog.Const), regs.map(prog.Reg)),
    lambda sub: st.builds(prog.BinOp, st.sampled_from(["+", "-", "*"]), sub, sub),
    max_leaves=4,
)
preds = st.recursive(
    st.builds(prog.Cmp, st.sampled_from(["=", "!=", "<", "<="]), exprs, exprs),
    lambda sub: st.one_of(st.builds(prog.And, sub, sub), st.builds(prog.Or, sub, sub), st.builds(prog.Not, sub)),
    max_leaves=3,
)
atoms = st.one_of(
    st.builds(prog.Local, regs, exprs),
    st.builds(prog.Load, regs, locs),
    st.builds(prog.Store, locs, regs),
    st.builds(prog.Fence, st.sampled_from(prog.FENCE_KINDS)),
)


def _instr(children):
    return st.one_of(
        # right-nested, as the parser builds sequences
        st.lists(children, min_size=2, max_size=3).map(
            lambda xs: prog.seq_of([y for x in xs for y in prog.flatten_seq(x)])),
        st.builds(prog.If, preds, children, children),
        st.builds(prog.While, preds, children),
    )


instrs = st.recursive(atoms, _instr, max_leaves=6)


@settings(max_examples=150, deadline=None)
@given(st.lists(instrs, min_size=1, max_size=3))
def test_format_parse_roundtrip(bodies):
    p = prog.renumber(prog.Program("h", tuple(prog.Thread(f"t{i}", b) for i, b in enumerate(bodies))))
    q = prog.parse_program(prog.format_program(p))
    assert prog.shape(q) == prog.shape(p)


@settings(max_examples=100, deadline=None)
@given(st.lists(instrs, min_size=1, max_size=2), st.integers(min_value=1, max_value=3))
def test_unroll_removes_loops(bodies, k):
    p = prog.renumber(prog.Program("h", tuple(prog.Thread(f"t{i}", b) for i, b in enumerate(bodies))))
    q = prog.unroll(p, k)
    assert not prog.has_loops(q)
    assert prog.validate(q, require_acyclic=True) == []

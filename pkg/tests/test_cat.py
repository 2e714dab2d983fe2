import random

import pytest
from hypothesis import given, settings, strategies as st

from porthos import _relkernel_py, cat, kernel, oracle, witness
from porthos.kernel import BitRel
from conftest import model, program

try:
    from porthos import _relkernel
except ImportError:
    _relkernel = None

KERNELS = [_relkernel_py] + ([_relkernel] if _relkernel else [])


def floyd_warshall(n, pairs):
    reach = [[(i, j) in pairs for j in range(n)] for i in range(n)]
    for k in range(n):
        for i in range(n):
            if reach[i][k]:
                for j in range(n):
                    reach[i][j] = reach[i][j] or reach[k][j]
    return {(i, j) for i in range(n) for j in range(n) if reach[i][j]}


def has_cycle(n, pairs):
    return any((i, i) in floyd_warshall(n, pairs) for i in range(n))


pair_sets = st.integers(min_value=1, max_value=12).flatmap(
    lambda n: st.tuples(st.just(n), st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=30)))


@pytest.mark.parametrize("mod", KERNELS, ids=lambda m: m.IMPLEMENTATION)
@settings(max_examples=200, deadline=None)
@given(pair_sets, pair_sets)
def test_kernel_ops_match_sets(mod, a, b):
    n = max(a[0], b[0])
    pa, pb = a[1], b[1]
    ra, rb = mod.BitRel.from_pairs(n, pa), mod.BitRel.from_pairs(n, pb)
    assert ra.union(rb).pairs() == pa | pb
    assert ra.inter(rb).pairs() == pa & pb
    assert ra.diff(rb).pairs() == pa - pb
    assert ra.inverse().pairs() == {(j, i) for i, j in pa}
    assert ra.compose(rb).pairs() == {(i, k) for i, j in pa for j2, k in pb if j == j2}
    assert ra.closure().pairs() == floyd_warshall(n, pa)
    assert ra.acyclic() == (not has_cycle(n, pa))
    assert ra.has_diag() == any(i == j for i, j in pa)


def test_kernels_agree_on_random_relations():
    if _relkernel is None:
        pytest.skip("compiled kernel not built")
    rng = random.Random(3)
    for _ in range(50):
        n = rng.randint(1, 64)
        pairs = {(rng.randrange(n), rng.randrange(n)) for _ in range(rng.randint(0, 3 * n))}
        a, b = _relkernel.BitRel.from_pairs(n, pairs), _relkernel_py.BitRel.from_pairs(n, pairs)
        assert a.closure().pairs() == b.closure().pairs()
        assert a.acyclic() == b.acyclic()


def test_kernel_size_limit():
    with pytest.raises(ValueError):
        BitRel(kernel.MAX_EVENTS + 1)


def test_parse_tso():
    m = model("tso")
    assert len(m.axioms) == 2
    assert m.definitions["fr"] == cat.parse_term("rf^-1;co")
    assert [a.label for a in m.axioms] == ["uniproc", "tso"]
    assert m.axiom("tso").term == cat.parse_term("rfe | co | fr | (po \\ W*R) | mfence")


def test_parse_power_plan():
    m = model("power")
    assert len(m.axioms) == 4
    plan = cat.recursion_plan(m)
    rec = [scc for scc in plan.sccs if plan.recursive[scc[0]]]
    assert [set(s) for s in rec] == [{"ii", "ci", "ic", "cc"}]


def test_empty_model():
    m = cat.parse_cat("model empty")
    assert m.axioms == []
    for w in oracle.enumerate_executions(program("sb")):
        assert cat.eval_model(m, w).consistent


def test_tso_plan_nonrecursive():
    assert not any(cat.recursion_plan(model("tso")).recursive.values())


def test_toy_recursion_plan():
    m = cat.parse_cat("model toy\nr3 := po\nr4 := rf\nr1 := r2 | r3\nr2 := r1 | r4")
    plan = cat.recursion_plan(m)
    assert set(plan.scc_of("r1")) == {"r1", "r2"}
    assert plan.recursive["r1"] and plan.recursive["r2"] and not plan.recursive["r3"]
    order = plan.order
    assert order.index("r3") < order.index("r1") and order.index("r4") < order.index("r2")


def test_plan_order_is_elaboration_order():
    m = model("power")
    plan = cat.recursion_plan(m)
    done: set = set()
    for scc in plan.sccs:
        for name in scc:
            assert cat.term_names(m.definitions[name]) <= done | set(scc)
        done |= set(scc)


@pytest.mark.parametrize("text, err", [
    ("model m\nacyclic foo as a", "undefined"),
    ("model m\na := po\na := rf", "duplicate"),
    ("model m\nacyclic po as a\nacyclic rf as a", "duplicate"),
    ("model m\nacyclic (po as a", "line"),
])
def test_cat_errors(text, err):
    with pytest.raises(cat.CatError, match=err):
        cat.parse_cat(text)


def test_unknown_builtin():
    with pytest.raises(cat.CatError):
        cat.builtin_model("arm9")


@pytest.mark.parametrize("name", cat.BUILTIN_MODELS)
def test_builtins_parse_and_print(name):
    m = model(name)
    again = cat.parse_cat(cat.format_model(m))
    assert again.definitions == m.definitions and again.axioms == m.axioms


def test_sc_and_tso_agree_on_iriw():
    for w in oracle.enumerate_executions(program("iriw")):
        assert cat.consistent(model("sc"), w) == cat.consistent(model("tso"), w)


def iriw_red():
    """IRIW execution where both readers disagree on the order of the two writes."""
    for w in oracle.enumerate_executions(program("iriw")):
        regs = witness.final_registers(w)
        if (regs["t2:r1"], regs["t2:r2"], regs["t3:r3"], regs["t3:r4"]) == (1, 0, 1, 0):
            return w
    raise AssertionError("red execution missing")


def test_power_ppo_empty_on_iriw():
    res = cat.eval_model(model("power"), iriw_red())
    for name in ("ppo", "ii", "ic", "ci", "cc"):
        assert res.relations[name].is_empty(), name
    assert res.consistent


def test_tso_rejects_iriw_red():
    res = cat.eval_model(model("tso"), iriw_red())
    assert res.axioms == {"uniproc": True, "tso": False}


def test_star_on_single_event():
    p = program("sb")
    w = next(iter(oracle.enumerate_executions(p)))
    ctx = w.rel_context()
    one = cat.RelContext(ctx.n, 1, ctx.writes, ctx.reads, {k: BitRel(ctx.n) for k in ctx.base})
    assert cat.eval_term(cat.parse_term("po^*"), one).pairs() == {(0, 0)}


def test_fixpoint_resubstitution():
    m = model("power")
    for w in oracle.consistent_set(program("mp"), model("power")):
        res = cat.eval_model(m, w)
        ctx = w.rel_context()
        for name in ("ii", "ic", "ci", "cc"):
            # evaluating a body against the fixpoint reproduces it
            body = m.definitions[name]
            sub = cat.parse_cat("model s\n" + "\n".join(
                f"{n} := {cat.format_term(m.definitions[n])}" for n in m.user_names))
            assert cat.eval_term(body, ctx, sub) == res.relations[name]


def test_plus_matches_floyd_warshall_on_executions():
    for w in oracle.enumerate_executions(program("wrc"))[:40]:
        ctx = w.rel_context()
        base = cat.eval_term(cat.parse_term("po | rf | co"), ctx)
        plus = cat.eval_term(cat.parse_term("(po | rf | co)^+"), ctx)
        assert plus.pairs() == floyd_warshall(ctx.n, base.pairs())


def test_pure_python_fallback_selected_by_env():
    import os
    import subprocess
    import sys

    code = ("from porthos import cat, kernel, oracle; from porthos.cli import read_program\n"
            "v = oracle.portable_bruteforce(read_program('iriw'), cat.builtin_model('tso'), cat.builtin_model('power'))\n"
            "print(kernel.IMPLEMENTATION, v.verdict)")
    env = dict(os.environ, PORTHOS_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, check=True).stdout
    assert out.split() == ["python", "NotPortable"]

import pytest

from porthos import cat, oracle, prog
from porthos.events import NonAcyclicProgram, compile_program
from conftest import CLASSIC, graph, model, program


def g_of(text):
    return compile_program(prog.parse_program(text))


def by_label(g):
    return {e.label(): e.eid for e in g.events}


def test_iriw_events():
    g = graph("iriw")
    inits = [e for e in g.events if e.is_init]
    assert len(inits) == 2 and len(g.events) == 8
    assert [e.eid for e in inits] == [0, 1]  # init writes come first
    assert g.dd == set() and g.cd == set()
    reads = {e.tid: [] for e in g.reads}
    for e in g.reads:
        reads[e.tid].append(e.eid)
    assert {p for p in g.po if g.events[p[0]].is_read} == {tuple(v) for v in reads.values()}


def test_dependencies_single_thread():
    g = g_of("program d\nthread t0\n r <- x;\n if (r = 1) { y := r }")
    rx = next(e.eid for e in g.reads)
    wy = next(e.eid for e in g.writes if not e.is_init)
    assert g.cd == {(rx, wy)}
    assert g.dd == {(rx, wy)}


def test_dd_through_locals_and_redefinition():
    g = g_of("program d\nthread t0\n r <- x;\n rs = r + 1;\n y := rs;\n rs = 2;\n z := rs")
    rx = g.reads[0].eid
    labels = {g.events[e].loc: e for e in range(g.n) if g.events[e].is_write and not g.events[e].is_init}
    assert g.dd == {(rx, labels["y"])}


def test_mfence_relation():
    g = g_of("program f\nthread t0\n x := 1;\n mfence;\n r <- y")
    wx = next(e.eid for e in g.writes if not e.is_init)
    ry = g.reads[0].eid
    assert g.fences["mfence"] == {(wx, ry)}
    assert g.fences["sync"] == set()


def test_init_values_and_isolation():
    g = g_of("program i\ninit x = 3\nthread t0\n r <- x")
    ix = g.events[g.init_of_loc["x"]]
    assert ix.init_value == 3
    assert not any(ix.eid in p for p in g.po)


def test_loop_rejected():
    with pytest.raises(NonAcyclicProgram):
        compile_program(prog.parse_program("program w\nthread t0\n r <- x;\n while (r = 0) { r <- x }"))


def test_may_rf_sb():
    g = graph("sb")
    for r in g.reads:
        cands = {w for (w, r2) in g.rf_may if r2 == r.eid}
        assert len(cands) == 2
        assert all(g.events[w].loc == r.loc for w in cands)
        assert g.init_of_loc[r.loc] in cands
    assert g.may(cat.parse_term("rf")) == g.rf_may


def test_may_po_minus_wr_on_iriw():
    g = graph("iriw")
    assert g.may(cat.parse_term("po \\ W*R")) == g.po


def test_may_empty():
    assert graph("sb").may(cat.parse_term("0")) == set()


def test_co_may_irreflexive_same_location():
    g = graph("2+2w")
    assert all(a != b and g.events[a].loc == g.events[b].loc for a, b in g.co_may)


def test_po_total_per_thread():
    g = graph("wrc")
    for tid in {e.tid for e in g.events if e.tid}:
        evs = [e.eid for e in g.events if e.tid == tid]
        for i, a in enumerate(evs):
            for b in evs[i + 1:]:
                assert ((a, b) in g.po) != ((b, a) in g.po)
    assert g.po <= g.sthd


@pytest.mark.parametrize("name", CLASSIC)
@pytest.mark.parametrize("mname", ["tso", "power"])
def test_eval_within_may(name, mname):
    m = model(mname)
    g = graph(name)
    may = {n: g.may(cat.Name(n), m) for n in m.user_names}
    for w in oracle.enumerate_executions(g):
        res = cat.eval_model(m, w)
        for n in m.user_names:
            assert res.relations[n].pairs() <= may[n], (name, n)

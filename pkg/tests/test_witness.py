import dataclasses
import json

import pytest

from porthos import cat, oracle, witness
from conftest import check, graph, model, needs_solver, program


@pytest.fixture(scope="module")
def iriw_witness():
    if needs_solver.args[0]:
        pytest.skip("no SMT solver available")
    status, w, _ = check("iriw", "tso", "power")
    w.verdict = "NotPortable"
    return w


def test_decoded_witness_valid(iriw_witness):
    rep = witness.validate_witness(iriw_witness, model("tso"), model("power"))
    assert rep.ok, rep.problems
    assert iriw_witness.violated == ["tso"]
    assert iriw_witness.derived


def test_cycle_is_a_cycle(iriw_witness):
    cyc = iriw_witness.cycle
    assert cyc
    heads = sorted(a for a, _ in cyc)
    tails = sorted(b for _, b in cyc)
    assert heads == tails  # every node has one edge in and one out
    ctx = iriw_witness.rel_context()
    rel = cat.eval_model(model("tso"), ctx).axiom_relations["tso"].pairs()
    assert set(cyc) <= rel


def test_drop_rf_breaks_totality(iriw_witness):
    w = dataclasses.replace(iriw_witness, rf=frozenset(sorted(iriw_witness.rf)[1:]))
    assert any("sources" in p for p in witness.check_execution_axioms(w))


def test_co_cycle_detected(iriw_witness):
    ws = [e.eid for e in iriw_witness.graph.writes if e.loc == "x"]
    co = set(iriw_witness.co) | {(b, a) for a, b in iriw_witness.co if a in ws}
    w = dataclasses.replace(iriw_witness, co=frozenset(co))
    assert witness.check_execution_axioms(w)


def test_wrong_value_detected(iriw_witness):
    r = iriw_witness.graph.reads[0].eid
    values = dict(iriw_witness.values)
    values[r] += 7
    w = dataclasses.replace(iriw_witness, values=values)
    assert any("values" in p for p in witness.check_execution_axioms(w))


def test_tampered_derived_detected(iriw_witness):
    derived = {k: set(v) for k, v in iriw_witness.derived.items()}
    key = next(k for k in derived if k[0] == "tgt" and k[1] == "ppo")
    e = sorted(iriw_witness.executed)
    derived[key].add((e[-2], e[-1]))
    w = dataclasses.replace(iriw_witness, derived=derived)
    assert not witness.validate_witness(w, model("tso"), model("power")).ok


def test_json_roundtrip(iriw_witness):
    text = witness.to_json(iriw_witness)
    data = json.loads(text)
    assert list(data) == ["program", "sourceModel", "targetModel", "verdict", "executed", "rf", "co",
                          "values", "state", "violated", "cycle"]
    assert data["verdict"] == "NotPortable" and data["sourceModel"] == "tso"
    back = witness.from_json(text, iriw_witness.graph)
    for f in ("executed", "executed_iids", "rf", "co", "values", "violated", "cycle"):
        assert getattr(back, f) == getattr(iriw_witness, f), f
    assert witness.validate_witness(back, model("tso"), model("power")).ok


def test_dot_output(iriw_witness):
    dot = witness.to_dot(iriw_witness)
    assert dot.startswith('digraph "iriw"') and dot.rstrip().endswith("}")
    assert "rfe" in dot and "fr" in dot and "red" in dot
    assert dot.count('subgraph "cluster_t') == 4


def test_reach_state_sb():
    states = {tuple(sorted(witness.reach_state(w).items())) for w in oracle.consistent_set(program("sb"), model("tso"))}
    assert (("t0:r0", 0), ("t1:r1", 0), ("x", 1), ("y", 1)) in states
    assert len(states) == 4
    sc = {tuple(sorted(witness.reach_state(w).items())) for w in oracle.consistent_set(program("sb"), model("sc"))}
    assert len(sc) == 3 and sc < states


def test_final_location_follows_co():
    for w in oracle.enumerate_executions(program("2+2w")):
        locs = witness.final_locations(w)
        for loc, v in locs.items():
            ws = [e.eid for e in w.graph.writes if e.loc == loc]
            last = [a for a in ws if not any((a, b) in w.co for b in ws)]
            assert w.values[last[0]] == v


def test_registers_exclude_constant_staging():
    w = oracle.enumerate_executions(program("sb"))[0]
    assert all(not k.split(":")[1].startswith("r__") for k in witness.final_registers(w))


def test_find_cycle():
    assert witness.find_cycle({(0, 1), (1, 2)}) == []
    assert sorted(witness.find_cycle({(0, 1), (1, 2), (2, 0), (2, 3)})) == [(0, 1), (1, 2), (2, 0)]
    assert witness.find_cycle({(4, 4)}) == [(4, 4)]


def test_thin_air_values():
    from porthos import prog
    from porthos.events import compile_program

    g = compile_program(prog.parse_program(
        "program oota\nthread t0\n r0 <- x;\n y := r0\nthread t1\n r1 <- y;\n x := r1"))
    w = oracle.enumerate_executions(g)[0]
    # each read sees the other thread's write: values would come out of thin air
    cyc_rf = frozenset((w2.eid, r.eid) for r in g.reads for w2 in g.writes
                       if not w2.is_init and w2.loc == r.loc)
    with pytest.raises(witness.ValueCycle):
        witness.compute_values(g, w.executed_iids, cyc_rf)
    values, _, ok = witness.compute_values(g, w.executed_iids, cyc_rf, thin_air="zero")
    assert ok and all(values[e.eid] == 0 for e in g.events if not e.is_init)

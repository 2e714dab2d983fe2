"""Brute-force reference semantics for small acyclic programs.

Every candidate execution is built explicitly: a control path per thread, a
write for every executed read and a linear coherence order per location.  Data
flow is then replayed by the thread interpreter and candidates whose branch
predicates disagree with the chosen path are dropped.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator

from . import cat, prog
from .events import EventGraph, compile_program
from .kernel import BitRel
from .witness import ExecutionWitness, compute_values, reach_state

DEFAULT_LIMIT = 12

PORTABLE, NOT_PORTABLE = "Portable", "NotPortable"
STATE_PORTABLE, NOT_STATE_PORTABLE = "StatePortable", "NotStatePortable"


class LimitExceeded(ValueError):
    pass


@dataclass
class OracleVerdict:
    verdict: str
    counterexample: ExecutionWitness | None = None
    new_state: dict | None = None
    checked: int = 0


def _graph(p, limit: int | None) -> EventGraph:
    g = p if isinstance(p, EventGraph) else compile_program(p)
    memory = sum(1 for e in g.events if not e.is_init)
    if limit is not None and memory > limit:
        raise LimitExceeded(f"{g.program.name}: {memory} memory events exceed the oracle limit {limit}")
    return g


def thread_paths(body: prog.Instr) -> list[frozenset[int]]:
    """All control paths through ``body`` as sets of executed iids; then-arm first."""

    def walk(node) -> list[frozenset[int]]:
        me = frozenset((node.iid,))
        if isinstance(node, prog.Seq):
            return [me | a | b for a in walk(node.first) for b in walk(node.second)]
        if isinstance(node, prog.If):
            return [me | a for a in walk(node.then)] + [me | b for b in walk(node.orelse)]
        if isinstance(node, prog.While):
            raise ValueError("unroll loops before enumerating executions")
        return [me]

    return walk(body)


def _rf_candidates(g: EventGraph, r: int, writes: list[int], prune: bool) -> list[int]:
    e = g.events[r]
    out = []
    for w in writes:
        if g.events[w].loc != e.loc:
            continue
        if prune:
            if (r, w) in g.po:
                continue  # reading from the own future
            # a same-thread write between w and r (or any, when w is the init) shadows w
            if any((w2, r) in g.po and w2 != w and g.events[w2].loc == e.loc
                   and (g.events[w].is_init or (w, w2) in g.po) for w2 in writes):
                continue
        out.append(w)
    return out


def _co_orders(g: EventGraph, loc_writes: list[int], prune: bool) -> list[list[tuple[int, int]]]:
    """Every strict total order on one location's writes, init first, as pair lists."""
    init, rest = loc_writes[0], loc_writes[1:]
    out = []
    for perm in itertools.permutations(rest):
        if prune and any((b, a) in g.po for i, a in enumerate(perm) for b in perm[i + 1:]):
            continue
        order = (init, *perm)
        out.append([(order[i], order[j]) for i in range(len(order)) for j in range(i + 1, len(order))])
    return out


def _coherent_with_rf(g: EventGraph, rf, co: set) -> bool:
    """Cheap uniproc filter: a read never sees a write co-before one of its own po-earlier writes."""
    for (w, r) in rf:
        for w2 in g.writes:
            if w2.eid != w and w2.loc == g.events[r].loc and (w2.eid, r) in g.po and (w, w2.eid) in co:
                return False
    return True


def _candidates(g: EventGraph, prune: bool) -> Iterator[tuple[ExecutionWitness, cat.RelContext]]:
    per_thread = [thread_paths(t.body) for t in g.program.threads]
    for combo in itertools.product(*per_thread):
        iids = frozenset().union(*combo)
        executed = frozenset(e.eid for e in g.events if e.is_init or e.iid in iids)
        reads = [e.eid for e in g.reads if e.eid in executed]
        writes = [e.eid for e in g.writes if e.eid in executed]
        static = g.exec_context(set(executed), set(iids), (), ())
        rf_choices = [[(w, r) for w in _rf_candidates(g, r, writes, prune)] for r in reads]
        by_loc = {}
        for w in writes:
            by_loc.setdefault(g.events[w].loc, []).append(w)
        co_choices = [_co_orders(g, ws, prune) for _, ws in sorted(by_loc.items())]
        for rf in itertools.product(*rf_choices):
            rf = frozenset(rf)
            values, _, ok = compute_values(g, iids, rf, thin_air="zero")
            if not ok:
                continue
            values = {k: v for k, v in values.items() if k in executed}
            rf_rel = BitRel.from_pairs(g.n, rf)
            for parts in itertools.product(*co_choices):
                co = frozenset(p for part in parts for p in part)
                if prune and not _coherent_with_rf(g, rf, co):
                    continue
                base = dict(static.base)
                base["rf"] = rf_rel
                base["co"] = BitRel.from_pairs(g.n, co)
                ctx = cat.RelContext(static.n, static.executed, static.writes, static.reads, base)
                yield ExecutionWitness(g, executed, iids, rf, co, values), ctx


def enumerate_executions(p, limit: int | None = DEFAULT_LIMIT) -> list[ExecutionWitness]:
    """Every candidate execution of an acyclic program, in a fixed lexicographic order."""
    g = _graph(p, limit)
    return [w for w, _ in _candidates(g, prune=False)]


def consistent_set(p, m: cat.MemoryModel, limit: int | None = DEFAULT_LIMIT) -> list[ExecutionWitness]:
    g = _graph(p, limit)
    return [w for w, ctx in _candidates(g, prune=m.has_uniproc()) if cat.consistent(m, ctx)]


def portable_bruteforce(p, m_src: cat.MemoryModel, m_tgt: cat.MemoryModel,
                        limit: int | None = DEFAULT_LIMIT) -> OracleVerdict:
    """NotPortable with the first target-consistent, source-inconsistent execution, if any."""
    g = _graph(p, limit)
    checked = 0
    for w, ctx in _candidates(g, prune=m_tgt.has_uniproc()):
        checked += 1
        if not cat.consistent(m_tgt, ctx):
            continue
        res = cat.eval_model(m_src, ctx)
        if not res.consistent:
            w.violated = res.failed
            w.source, w.target, w.verdict = m_src.name, m_tgt.name, NOT_PORTABLE
            return OracleVerdict(NOT_PORTABLE, w, checked=checked)
    return OracleVerdict(PORTABLE, checked=checked)


def _freeze(state: dict) -> tuple:
    return tuple(sorted(state.items()))


def reachable_states(p, m: cat.MemoryModel, limit: int | None = DEFAULT_LIMIT,
                     registers: bool = True) -> set[tuple]:
    """Final states (as sorted item tuples) of all ``m``-consistent executions."""
    return {_freeze(reach_state(w, registers)) for w in consistent_set(p, m, limit)}


def state_portable_bruteforce(p, m_src: cat.MemoryModel, m_tgt: cat.MemoryModel,
                              limit: int | None = DEFAULT_LIMIT, registers: bool = True) -> OracleVerdict:
    g = _graph(p, limit)
    src = reachable_states(g, m_src, limit, registers)
    for w in consistent_set(g, m_tgt, limit):
        st = reach_state(w, registers)
        if _freeze(st) not in src:
            w.source, w.target, w.verdict = m_src.name, m_tgt.name, NOT_STATE_PORTABLE
            return OracleVerdict(NOT_STATE_PORTABLE, w, new_state=st)
    return OracleVerdict(STATE_PORTABLE)

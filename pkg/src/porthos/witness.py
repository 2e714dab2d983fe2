"""Concrete executions: decoding from solver models, validation, states, DOT/JSON export."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import cat, prog
from .events import EventGraph
from .solve import SAT, SolverResult


class MissingVariable(KeyError):
    pass


@dataclass
class ExecutionWitness:
    graph: EventGraph
    executed: frozenset[int]
    executed_iids: frozenset[int]
    rf: frozenset[tuple[int, int]]
    co: frozenset[tuple[int, int]]
    values: dict[int, int]
    derived: dict[tuple[str, str], set] = field(default_factory=dict)
    violated: list[str] = field(default_factory=list)
    cycle: list[tuple[int, int]] = field(default_factory=list)
    source: str | None = None
    target: str | None = None
    verdict: str | None = None

    def rel_context(self) -> cat.RelContext:
        return self.graph.exec_context(set(self.executed), set(self.executed_iids), self.rf, self.co)

    def value_label(self, eid: int) -> str:
        e = self.graph.events[eid]
        v = self.values.get(eid, "?")
        return f"{'R' if e.is_read else 'W'}{e.loc}{v}"


# ---------------------------------------------------------------------------
# Interpretation of one thread along a resolved control path


@dataclass
class ThreadRun:
    env: dict[str, int | None]
    store_values: dict[int, int | None]
    consistent: bool | None  # None: some branch predicate still unknown


def _eval_opt(e, env):
    """Evaluate with None for unknown registers."""
    if isinstance(e, prog.Const):
        return e.value
    if isinstance(e, prog.Reg):
        return env.get(e.name, 0)
    a, b = _eval_opt(e.left, env), _eval_opt(e.right, env)
    if a is None or b is None:
        return None
    return a + b if e.op == "+" else a - b if e.op == "-" else a * b


def _pred_opt(p, env):
    if isinstance(p, prog.BoolConst):
        return p.value
    if isinstance(p, prog.Cmp):
        a, b = _eval_opt(p.left, env), _eval_opt(p.right, env)
        if a is None or b is None:
            return None
        return {"=": a == b, "!=": a != b, "<": a < b, "<=": a <= b}[p.op]
    if isinstance(p, prog.Not):
        v = _pred_opt(p.arg, env)
        return None if v is None else not v
    a, b = _pred_opt(p.left, env), _pred_opt(p.right, env)
    if isinstance(p, prog.And):
        if a is False or b is False:
            return False
        return None if a is None or b is None else True
    if a is True or b is True:
        return True
    return None if a is None or b is None else False


def run_thread(g: EventGraph, body: prog.Instr, executed_iids, read_value) -> ThreadRun:
    env: dict[str, int | None] = {}
    stores: dict[int, int | None] = {}
    ok: bool | None = True
    stack = [body]
    while stack:
        node = stack.pop()
        if isinstance(node, prog.Seq):
            stack += [node.second, node.first]
        elif isinstance(node, prog.Local):
            env[node.reg] = _eval_opt(node.expr, env)
        elif isinstance(node, prog.Load):
            env[node.reg] = read_value(g.ev_of_iid[node.iid])
        elif isinstance(node, prog.Store):
            stores[g.ev_of_iid[node.iid]] = env.get(node.reg, 0)
        elif isinstance(node, prog.If):
            taken = node.then.iid in executed_iids
            b = _pred_opt(node.pred, env)
            if b is None:
                ok = None if ok else ok
            elif b != taken:
                return ThreadRun(env, stores, False)
            stack.append(node.then if taken else node.orelse)
    return ThreadRun(env, stores, ok)


def run_values(runs: dict[str, ThreadRun]):
    for run in runs.values():
        yield from run.store_values.values()


class ValueCycle(RuntimeError):
    """Read values depend on themselves through rf and data flow."""


def compute_values(g: EventGraph, executed_iids, rf, thin_air: str = "raise"
                   ) -> tuple[dict[int, int], dict[str, dict], bool]:
    """Values of all executed events given a path and rf; also final registers.

    Returns (values, registers per thread, path_consistent).  When rf closes a
    data-flow cycle the values on it are unconstrained; ``thin_air="zero"``
    resolves them by letting stalled reads return 0, ``"raise"`` raises
    :class:`ValueCycle`.
    """
    src = {r: w for (w, r) in rf}
    values: dict[int, int | None] = {}
    for e in g.events:
        if e.is_init:
            values[e.eid] = e.init_value
    runs: dict[str, ThreadRun] = {}
    default = None
    while True:
        changed = False
        for t in g.program.threads:
            def read(r, _src=src):
                v = values.get(_src.get(r))
                return default if v is None else v
            run = run_thread(g, t.body, executed_iids, read)
            if run.consistent is False:
                return {}, {}, False
            runs[t.tid] = run
            for eid, v in run.store_values.items():
                if values.get(eid) != v:
                    values[eid] = v
                    changed = True
        stalled = any(v is None for v in run_values(runs)) or any(r.consistent is None for r in runs.values())
        if changed:
            continue
        if not stalled or default is not None:
            break
        if thin_air != "zero":
            raise ValueCycle("read values form a dependency cycle through rf")
        default = 0
    for (w, r) in rf:
        values[r] = values.get(w)
    if any(v is None for v in values.values()) or any(r.consistent is None for r in runs.values()):
        raise ValueCycle("read values form a dependency cycle through rf")
    regs = {tid: dict(run.env) for tid, run in runs.items()}
    return values, regs, True


def resolve_path(g: EventGraph, executed_iids) -> set[int]:
    """Executed memory events on a path."""
    return {e.eid for e in g.events if e.is_init or e.iid in executed_iids}


# ---------------------------------------------------------------------------
# Decoding


def _lit(res_assign: dict, lit) -> bool:
    if isinstance(lit, bool):
        return lit
    if lit not in res_assign:
        raise MissingVariable(lit)
    return bool(res_assign[lit])


def decode(res: SolverResult, f) -> ExecutionWitness:
    """Decode a satisfying assignment of a formula built by :mod:`porthos.encode`."""
    if res.status != SAT:
        raise ValueError("decode needs a satisfiable result")
    enc = f.meta["encoder"]
    g = enc.g
    a = res.assignment
    executed_iids = frozenset(
        node.iid for t in g.program.threads for node in prog.iter_instrs(t.body)
        if _lit(a, enc.n(f"cf_{node.iid}"))
    )
    executed = frozenset(e.eid for e in g.events if _lit(a, enc.ex(e.eid)))
    rf = frozenset(p for p, v in enc.rf_lits().items() if _lit(a, v))
    co = frozenset(p for p, v in enc.co_lits().items() if _lit(a, v))
    values = {}
    for e in g.events:
        if e.eid not in executed:
            continue
        val = enc.ev_val(e.eid)
        values[e.eid] = val if isinstance(val, int) else a[val]
    derived = {}
    if enc.exact:
        for key, lits in enc.relations.items():
            derived[key] = {p for p, v in lits.items() if _lit(a, v)}
    violated = sorted(label.split(".", 1)[1] for sel, label in enc.selectors.items() if a.get(sel))
    cycle: list[tuple[int, int]] = []
    for sel, label in sorted(enc.selectors.items()):
        if a.get(sel) and label in enc.cycles:
            cycle = sorted(p for p, v in enc.cycles[label]["edges"].items() if a.get(v))
            break
    return ExecutionWitness(g, executed, executed_iids, rf, co, values, derived, violated, cycle,
                            f.meta.get("source"), f.meta.get("target"))


# ---------------------------------------------------------------------------
# Validation


@dataclass
class ValidationReport:
    problems: list[str] = field(default_factory=list)
    source: cat.ModelResult | None = None
    target: cat.ModelResult | None = None

    @property
    def ok(self) -> bool:
        return not self.problems


def check_execution_axioms(w: ExecutionWitness) -> list[str]:
    g = w.graph
    out: list[str] = []
    # path consistency
    for t in g.program.threads:
        if t.body.iid not in w.executed_iids:
            out.append(f"thread {t.tid}: root instruction not executed")
        for node in prog.iter_instrs(t.body):
            on = node.iid in w.executed_iids
            if isinstance(node, prog.Seq):
                for child in (node.first, node.second):
                    if (child.iid in w.executed_iids) != on:
                        out.append(f"path: child {child.iid} of sequence {node.iid} disagrees")
            elif isinstance(node, prog.If):
                arms = (node.then.iid in w.executed_iids) + (node.orelse.iid in w.executed_iids)
                if arms != (1 if on else 0):
                    out.append(f"path: conditional {node.iid} has {arms} executed arms")
    expected = resolve_path(g, w.executed_iids)
    if expected != set(w.executed):
        out.append(f"path: executed events {sorted(w.executed)} differ from path events {sorted(expected)}")
    # rf functional and total
    srcs: dict[int, list[int]] = {}
    for (a, b) in w.rf:
        ea, eb = g.events[a], g.events[b]
        if not (ea.is_write and eb.is_read and ea.loc == eb.loc):
            out.append(f"rf: ({a},{b}) is not a same-location write-read pair")
        if a not in w.executed or b not in w.executed:
            out.append(f"rf: ({a},{b}) relates a non-executed event")
        srcs.setdefault(b, []).append(a)
    for e in g.reads:
        if e.eid in w.executed and len(srcs.get(e.eid, [])) != 1:
            out.append(f"rf: read {e.eid} has {len(srcs.get(e.eid, []))} sources")
    # co: strict total order per location, init first
    for loc in g.program.locations():
        ws = [e.eid for e in g.writes if e.loc == loc and e.eid in w.executed]
        for a in ws:
            if (a, a) in w.co:
                out.append(f"co: reflexive edge on {a}")
            for b in ws:
                if a < b and ((a, b) in w.co) == ((b, a) in w.co):
                    out.append(f"co: writes {a} and {b} on {loc} not totally ordered")
                for c in ws:
                    if (a, b) in w.co and (b, c) in w.co and (a, c) not in w.co:
                        out.append(f"co: not transitive on {a},{b},{c}")
        init = g.init_of_loc[loc]
        for (a, b) in w.co:
            if b == init:
                out.append(f"co: initial write of {loc} is not co-minimal")
    for (a, b) in w.co:
        if a not in w.executed or b not in w.executed or g.events[a].loc != g.events[b].loc:
            out.append(f"co: ({a},{b}) invalid")
    # values agree with data flow
    try:
        values, _, consistent = compute_values(g, w.executed_iids, w.rf)
        if not consistent:
            out.append("values: a branch predicate disagrees with the executed path")
        else:
            for eid in w.executed:
                if eid in w.values and values.get(eid) != w.values[eid]:
                    out.append(f"values: event {eid} has {w.values[eid]}, data flow gives {values.get(eid)}")
    except ValueCycle:
        pass
    return out


def validate_witness(w: ExecutionWitness, m_src: cat.MemoryModel | None, m_tgt: cat.MemoryModel | None,
                     check_derived: bool = True) -> ValidationReport:
    rep = ValidationReport(check_execution_axioms(w))
    if rep.problems:
        return rep
    for side, m in (("tgt", m_tgt), ("src", m_src)):
        if m is None:
            continue
        res = cat.eval_model(m, w)
        if side == "tgt":
            rep.target = res
            if not res.consistent:
                rep.problems.append(f"target model {m.name}: axioms {res.failed} fail")
        else:
            rep.source = res
            if res.consistent:
                rep.problems.append(f"source model {m.name}: every axiom holds")
        if check_derived:
            for (dside, name), pairs in w.derived.items():
                if dside != side or name not in res.relations:
                    continue
                exact = res.relations[name].pairs()
                got = {p for p in pairs if p[0] in w.executed and p[1] in w.executed}
                if got != exact:
                    rep.problems.append(
                        f"{side} relation {name}: decoded {sorted(got - exact)} extra, {sorted(exact - got)} missing"
                    )
    return rep


# ---------------------------------------------------------------------------
# States


def final_registers(w: ExecutionWitness) -> dict[str, int]:
    g = w.graph
    _, regs, _ = compute_values(g, w.executed_iids, w.rf)
    out = {}
    for tid, reg in g.program.registers():
        if reg.startswith("r__"):
            continue
        v = regs.get(tid, {}).get(reg, 0)
        out[f"{tid}:{reg}"] = 0 if v is None else v
    return out


def final_locations(w: ExecutionWitness) -> dict[str, int]:
    g = w.graph
    out = {}
    for loc in g.program.locations():
        ws = [e.eid for e in g.writes if e.loc == loc and e.eid in w.executed]
        last = [a for a in ws if not any((a, b) in w.co for b in ws)]
        out[loc] = w.values[last[0]] if last else g.events[g.init_of_loc[loc]].init_value
    return out


def reach_state(w: ExecutionWitness, registers: bool = True) -> dict[str, int]:
    state = final_locations(w)
    if registers:
        state.update(final_registers(w))
    return state


# ---------------------------------------------------------------------------
# Export


def find_cycle(pairs) -> list[tuple[int, int]]:
    """Some directed cycle in a finite relation, as a list of edges, or []."""
    succ: dict[int, list[int]] = {}
    for a, b in sorted(pairs):
        succ.setdefault(a, []).append(b)
    color: dict[int, int] = {}
    parent: dict[int, int] = {}

    for root in sorted(succ):
        if color.get(root):
            continue
        stack = [(root, iter(succ.get(root, ())))]
        color[root] = 1
        while stack:
            v, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[v] = 2
                stack.pop()
                continue
            if color.get(nxt) == 1:
                cyc = [(v, nxt)]
                x = v
                while x != nxt:
                    cyc.append((parent[x], x))
                    x = parent[x]
                return sorted(cyc)
            if not color.get(nxt):
                color[nxt] = 1
                parent[nxt] = v
                stack.append((nxt, iter(succ.get(nxt, ()))))
    return []


def to_json(w: ExecutionWitness, program: str | None = None) -> str:
    data = {
        "program": program or w.graph.program.name,
        "sourceModel": w.source,
        "targetModel": w.target,
        "verdict": w.verdict,
        "executed": sorted(w.executed),
        "rf": [list(p) for p in sorted(w.rf)],
        "co": [list(p) for p in sorted(w.co)],
        "values": {str(k): v for k, v in sorted(w.values.items())},
        "state": reach_state(w),
        "violated": list(w.violated),
        "cycle": [list(p) for p in w.cycle],
    }
    return json.dumps(data, indent=2, sort_keys=False)


def from_json(text: str, g: EventGraph) -> ExecutionWitness:
    d = json.loads(text)
    executed = frozenset(d["executed"])
    rf = frozenset(tuple(p) for p in d["rf"])
    # recover the path from executed events plus branch outcomes implied by values
    iids = _path_from_events(g, executed, rf)
    return ExecutionWitness(
        g, executed, iids, rf, frozenset(tuple(p) for p in d["co"]),
        {int(k): v for k, v in d["values"].items()}, {}, list(d["violated"]),
        [tuple(p) for p in d["cycle"]], d.get("sourceModel"), d.get("targetModel"), d.get("verdict"),
    )


def _path_from_events(g: EventGraph, executed, rf) -> frozenset[int]:
    """Re-run each thread, taking branches by predicate value given rf."""
    src = {r: w for (w, r) in rf}
    values: dict[int, int] = {e.eid: e.init_value for e in g.events if e.is_init}
    iids: set[int] = set()
    for _ in range(len(g.events) + 1):
        iids = set()
        for t in g.program.threads:
            env: dict[str, int] = {}
            stack = [t.body]
            while stack:
                node = stack.pop()
                iids.add(node.iid)
                if isinstance(node, prog.Seq):
                    stack += [node.second, node.first]
                elif isinstance(node, prog.Local):
                    env[node.reg] = prog.eval_expr(node.expr, env)
                elif isinstance(node, prog.Load):
                    env[node.reg] = values.get(src.get(g.ev_of_iid[node.iid]), 0)
                elif isinstance(node, prog.Store):
                    values[g.ev_of_iid[node.iid]] = env.get(node.reg, 0)
                elif isinstance(node, prog.If):
                    stack.append(node.then if prog.eval_pred(node.pred, env) else node.orelse)
    return frozenset(iids)


def to_dot(w: ExecutionWitness, title: str | None = None) -> str:
    g = w.graph
    lines = [f'digraph "{title or g.program.name}" {{', "  rankdir=TB;", "  node [shape=box, fontname=monospace];"]
    cyc = set(w.cycle)
    by_tid: dict[str | None, list[int]] = {}
    for eid in sorted(w.executed):
        by_tid.setdefault(g.events[eid].tid, []).append(eid)
    for tid, eids in by_tid.items():
        name = "init" if tid is None else tid
        lines.append(f'  subgraph "cluster_{name}" {{ label="{name}";')
        for eid in eids:
            lines.append(f'    e{eid} [label="{w.value_label(eid)}"];')
        lines.append("  }")

    def edge(a, b, label, color):
        style = ', penwidth=2, color=red' if (a, b) in cyc else f', color={color}'
        lines.append(f'  e{a} -> e{b} [label="{label}"{style}];')

    ex = w.executed
    po_imm = {(a, b) for (a, b) in g.po if a in ex and b in ex
              and not any((a, c) in g.po and (c, b) in g.po and c in ex for c in ex)}
    for a, b in sorted(po_imm):
        edge(a, b, "po", "black")
    for a, b in sorted(w.rf):
        same = g.events[a].tid == g.events[b].tid
        edge(a, b, "rfi" if same else "rfe", "darkgreen")
    co_imm = {(a, b) for (a, b) in w.co if not any((a, c) in w.co and (c, b) in w.co for c in ex)}
    for a, b in sorted(co_imm):
        edge(a, b, "co", "blue")
    fr = {(r, w2) for (w1, r) in w.rf for (w3, w2) in w.co if w3 == w1}
    for a, b in sorted(fr):
        edge(a, b, "fr", "orange")
    lines.append("}")
    return "\n".join(lines) + "\n"

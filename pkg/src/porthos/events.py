"""Event graphs: memory events of an acyclic program, induced relations and may sets.

Event ids are dense indices: InitWrites first (one per location, sorted by
name), then each thread's Load/Store events in textual order.  Both arms of a
conditional contribute events; which ones execute is decided per execution.

Registers are put in SSA form here, once, so that the encoder and the
dependency analysis agree on names.  An SSA name is ``<tid>.<reg>.<idx>``;
index 0 is the initial value 0.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from . import cat, prog
from .kernel import BitRel, MAX_EVENTS

INIT, WRITE, READ = "InitWrite", "Write", "Read"


class NonAcyclicProgram(ValueError):
    pass


@dataclass(frozen=True)
class Event:
    eid: int
    tid: str | None
    kind: str
    loc: str
    iid: int | None = None
    ssa: str | None = None  # register SSA name read into / stored from
    init_value: int = 0

    @property
    def is_write(self) -> bool:
        return self.kind != READ

    @property
    def is_read(self) -> bool:
        return self.kind == READ

    @property
    def is_init(self) -> bool:
        return self.kind == INIT

    def label(self) -> str:
        k = "R" if self.is_read else "W"
        if self.is_init:
            return f"I{self.loc}"
        return f"{k}{self.loc}#{self.eid}"


@dataclass
class SSAInfo:
    locals: dict[int, tuple[str, prog.Expr]] = field(default_factory=dict)  # iid -> (dst, expr)
    loads: dict[int, str] = field(default_factory=dict)  # iid -> dst
    stores: dict[int, str] = field(default_factory=dict)  # iid -> src
    preds: dict[int, prog.Pred] = field(default_factory=dict)  # If iid -> pred
    padding: dict[int, list[tuple[str, str]]] = field(default_factory=dict)  # branch iid -> [(dst, src)]
    final: dict[tuple[str, str], str] = field(default_factory=dict)  # (tid, reg) -> last name
    initial: set[str] = field(default_factory=set)  # index-0 names (value 0)
    names: set[str] = field(default_factory=set)


def ssa_name(tid: str, reg: str, idx: int) -> str:
    return f"{tid}.{reg}.{idx}"


def _rename(e, env: dict[str, str]):
    if isinstance(e, prog.Reg):
        return prog.Reg(env[e.name])
    if isinstance(e, (prog.Const, prog.BoolConst)):
        return e
    if isinstance(e, prog.Not):
        return prog.Not(_rename(e.arg, env))
    return dataclasses.replace(e, left=_rename(e.left, env), right=_rename(e.right, env))


@dataclass
class EventGraph:
    program: prog.Program
    events: list[Event]
    ssa: SSAInfo
    po: set[tuple[int, int]]
    sthd: set[tuple[int, int]]
    sloc: set[tuple[int, int]]
    ad: set[tuple[int, int]]
    dd: set[tuple[int, int]]
    cd: set[tuple[int, int]]
    fences: dict[str, set[tuple[int, int]]]
    fence_guards: dict[tuple[str, int, int], list[int]]  # (kind, e1, e2) -> fence iids between
    rf_may: set[tuple[int, int]]
    co_may: set[tuple[int, int]]
    ev_of_iid: dict[int, int]
    tid_of_iid: dict[int, str]
    init_of_loc: dict[str, int]

    @property
    def n(self) -> int:
        return len(self.events)

    @property
    def reads(self) -> list[Event]:
        return [e for e in self.events if e.is_read]

    @property
    def writes(self) -> list[Event]:
        return [e for e in self.events if e.is_write]

    def mask(self, events) -> int:
        m = 0
        for e in events:
            m |= 1 << (e.eid if isinstance(e, Event) else e)
        return m

    def static_base(self) -> dict[str, set[tuple[int, int]]]:
        base = {
            "po": self.po, "int": self.sthd, "loc": self.sloc, "ad": self.ad, "dd": self.dd,
            "cd": self.cd, "rf": self.rf_may, "co": self.co_may,
        }
        base.update(self.fences)
        return base

    def may_context(self) -> cat.RelContext:
        n = self.n
        base = {k: BitRel.from_pairs(n, v) for k, v in self.static_base().items()}
        return cat.RelContext(n, (1 << n) - 1, self.mask(self.writes), self.mask(self.reads), base)

    def exec_context(self, executed: set[int], executed_iids: set[int], rf, co) -> cat.RelContext:
        """Base relations of a concrete execution, restricted to executed events."""
        n = self.n
        emask = self.mask(executed)
        base = {}
        for k, v in self.static_base().items():
            if k in ("rf", "co"):
                continue
            if k in self.fences:
                v = {p for p in v if any(f in executed_iids for f in self.fence_guards[(k, p[0], p[1])])}
            base[k] = BitRel.from_pairs(n, v).restrict(emask)
        base["rf"] = BitRel.from_pairs(n, rf).restrict(emask)
        base["co"] = BitRel.from_pairs(n, co).restrict(emask)
        return cat.RelContext(n, emask, self.mask(self.writes), self.mask(self.reads), base)

    def may(self, t: cat.RelTerm, m: cat.MemoryModel | None = None) -> set[tuple[int, int]]:
        m = m or cat.parse_cat("model none")
        return m.compiled.eval_extra(t, self.may_context(), may=True).pairs()

    def event_of_iid(self, iid: int) -> Event:
        return self.events[self.ev_of_iid[iid]]


def _positions(body: prog.Instr) -> list[prog.Instr]:
    return [n for n in prog.iter_instrs(body) if isinstance(n, (prog.Load, prog.Store, prog.Fence))]


def compile_program(p: prog.Program) -> EventGraph:
    if prog.has_loops(p):
        raise NonAcyclicProgram("program contains loops; unroll it first")
    diags = prog.validate(p)
    if diags:
        raise ValueError("; ".join(str(d) for d in diags))

    locs = p.locations()
    events: list[Event] = []
    init_of_loc = {}
    for loc in locs:
        init_of_loc[loc] = len(events)
        events.append(Event(len(events), None, INIT, loc, init_value=p.init_value(loc)))

    ssa = SSAInfo()
    ev_of_iid: dict[int, int] = {}
    tid_of_iid: dict[int, str] = {}
    deps: dict[str, set[int]] = {}  # SSA name -> loads it may depend on
    dd: set[tuple[int, int]] = set()
    cd: set[tuple[int, int]] = set()

    for t in p.threads:
        tid = t.tid
        for node in prog.iter_instrs(t.body):
            tid_of_iid[node.iid] = tid
            if isinstance(node, (prog.Load, prog.Store)):
                ev_of_iid[node.iid] = len(events)
                kind = READ if isinstance(node, prog.Load) else WRITE
                events.append(Event(len(events), tid, kind, node.loc, node.iid))

        counter: dict[str, int] = {}
        env: dict[str, str] = {}

        def cur(reg: str) -> str:
            if reg not in env:
                name = ssa_name(tid, reg, 0)
                env[reg] = name
                counter.setdefault(reg, 0)
                ssa.initial.add(name)
                ssa.names.add(name)
                deps.setdefault(name, set())
            return env[reg]

        def fresh(reg: str) -> str:
            cur(reg)
            counter[reg] += 1
            name = ssa_name(tid, reg, counter[reg])
            env[reg] = name
            ssa.names.add(name)
            deps.setdefault(name, set())
            return name

        def walk(node: prog.Instr, guards: set[int]):
            nonlocal env
            if isinstance(node, prog.Seq):
                walk(node.first, guards)
                walk(node.second, guards)
            elif isinstance(node, prog.Local):
                expr = _rename(node.expr, {r: cur(r) for r in prog.expr_registers(node.expr)})
                src_deps = set().union(*(deps[n] for n in prog.expr_registers(expr))) if prog.expr_registers(expr) else set()
                dst = fresh(node.reg)
                deps[dst] |= src_deps
                ssa.locals[node.iid] = (dst, expr)
            elif isinstance(node, prog.Load):
                dst = fresh(node.reg)
                eid = ev_of_iid[node.iid]
                deps[dst].add(eid)
                ssa.loads[node.iid] = dst
                events[eid] = dataclasses.replace(events[eid], ssa=dst)
                for g in guards:
                    cd.add((g, eid))
            elif isinstance(node, prog.Store):
                src = cur(node.reg)
                eid = ev_of_iid[node.iid]
                ssa.stores[node.iid] = src
                events[eid] = dataclasses.replace(events[eid], ssa=src)
                for r in deps[src]:
                    dd.add((r, eid))
                for g in guards:
                    cd.add((g, eid))
            elif isinstance(node, prog.If):
                pred = _rename(node.pred, {r: cur(r) for r in prog.expr_registers(node.pred)})
                ssa.preds[node.iid] = pred
                inner = set(guards)
                for n in prog.expr_registers(pred):
                    inner |= deps[n]
                start_env, start_counter = dict(env), dict(counter)
                walk(node.then, inner)
                then_env, then_counter = env, dict(counter)
                env = dict(start_env)
                # the else arm reuses the then arm's indices; only one arm runs
                counter.clear()
                counter.update(start_counter)
                for r in then_counter:
                    counter.setdefault(r, 0)
                walk(node.orelse, inner)
                else_env, else_counter = env, dict(counter)
                joined: dict[str, str] = {}
                for r in set(then_env) | set(else_env):
                    if r not in then_env or r not in else_env:
                        # defined only in one arm: the other arm keeps index 0
                        base_name = ssa_name(tid, r, 0)
                        ssa.initial.add(base_name)
                        ssa.names.add(base_name)
                        deps.setdefault(base_name, set())
                        then_env.setdefault(r, base_name)
                        else_env.setdefault(r, base_name)
                    if then_env[r] == else_env[r]:
                        joined[r] = then_env[r]
                        continue
                    idx = max(then_counter.get(r, 0), else_counter.get(r, 0))
                    top = ssa_name(tid, r, idx)
                    counter[r] = idx
                    for arm, arm_env in ((node.then, then_env), (node.orelse, else_env)):
                        if arm_env[r] != top:
                            ssa.padding.setdefault(arm.iid, []).append((top, arm_env[r]))
                            deps.setdefault(top, set())
                            deps[top] |= deps[arm_env[r]]
                    ssa.names.add(top)
                    joined[r] = top
                for r in then_counter:
                    counter[r] = max(counter.get(r, 0), then_counter[r], else_counter.get(r, 0))
                env = joined
            # Fence and Skip carry no data

        walk(t.body, set())
        for reg, name in env.items():
            ssa.final[(tid, reg)] = name

    n = len(events)
    if n > MAX_EVENTS:
        raise ValueError(f"{n} events exceed the supported maximum of {MAX_EVENTS}")

    po: set[tuple[int, int]] = set()
    sthd: set[tuple[int, int]] = {(e.eid, e.eid) for e in events if e.is_init}
    fences: dict[str, set[tuple[int, int]]] = {k: set() for k in prog.FENCE_KINDS}
    fence_guards: dict[tuple[str, int, int], list[int]] = {}
    for t in p.threads:
        seq = _positions(t.body)
        mem = [(i, ev_of_iid[node.iid]) for i, node in enumerate(seq) if not isinstance(node, prog.Fence)]
        for a, (i, e1) in enumerate(mem):
            sthd.add((e1, e1))
            for j, e2 in mem[a + 1:]:
                po.add((e1, e2))
                sthd.add((e1, e2))
                sthd.add((e2, e1))
                for node in seq[i + 1:j]:
                    if isinstance(node, prog.Fence):
                        fences[node.kind].add((e1, e2))
                        fence_guards.setdefault((node.kind, e1, e2), []).append(node.iid)

    sloc = {(a.eid, b.eid) for a in events for b in events if a.loc == b.loc}
    rf_may = {(w.eid, r.eid) for w in events if w.is_write for r in events if r.is_read and r.loc == w.loc}
    co_may = {
        (a.eid, b.eid)
        for a in events if a.is_write
        for b in events if b.is_write and not b.is_init and a.eid != b.eid and a.loc == b.loc
    }
    return EventGraph(
        program=p, events=events, ssa=ssa, po=po, sthd=sthd, sloc=sloc, ad=set(), dd=dd, cd=cd,
        fences=fences, fence_guards=fence_guards, rf_may=rf_may, co_may=co_may,
        ev_of_iid=ev_of_iid, tid_of_iid=tid_of_iid, init_of_loc=init_of_loc,
    )


compile = compile_program


def may(t: cat.RelTerm, g: EventGraph, m: cat.MemoryModel | None = None) -> set[tuple[int, int]]:
    return g.may(t, m)

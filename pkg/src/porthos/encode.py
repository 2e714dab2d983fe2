"""SMT encoding of bounded portability, reachability and related queries.

An :class:`Encoder` owns one event graph and a :class:`Formula`.  Relation
terms are elaborated into *literal maps* ``{(e1, e2): lit}`` where ``lit`` is a
Boolean variable name or ``True``; pairs missing from a map are constant
false.  Equal subterms are hash-consed, so a subterm shared by the source and
target model (say ``fr``) is encoded once.

Variable names:

=====================================  ==========================================
``cf_<iid>``                           instruction executed
``ex_<eid>``                           event executed
``val_<tid>.<reg>.<idx>``              SSA register value
``clk_<eid>``                          coherence clock of a write
``final_<loc>``                        final value of a location
``rel_<tag>_<e1>_<e2>``                pair in a relation
``phi_<name>_<e1>_<e2>``               iteration certificate (recursive names)
``psi_<side>.<label>_<eid>``           acyclicity rank
``C_<side>.<label>_<eid>``             event on the guessed cycle
``Cedge_<side>.<label>_<e1>_<e2>``     edge on the guessed cycle
``viol_<side>.<label>``                source axiom chosen as violated
=====================================  ==========================================
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

from . import cat, prog
from .events import EventGraph, compile_program
from .formula import And, Eq, Formula, Iff, Implies, Le, Lt, Not, Or

Lit = object  # str variable or True
LitMap = dict  # (e1, e2) -> Lit


@dataclass
class EncodeOptions:
    dead: bool = False
    dead_strict: bool = False
    state_registers: bool = True
    blocked_states: list = field(default_factory=list)
    # False: emit each relation definition only in the direction its use needs.
    # Same verdicts, smaller formulas; decoded derived relations may then be
    # supersets (target side) or subsets (source side) of the exact ones.
    exact: bool = True


def expr_term(e: prog.Expr, val):
    if isinstance(e, prog.Const):
        return e.value
    if isinstance(e, prog.Reg):
        return val(e.name)
    return (e.op, expr_term(e.left, val), expr_term(e.right, val))


def pred_term(p: prog.Pred, val):
    if isinstance(p, prog.BoolConst):
        return p.value
    if isinstance(p, prog.Cmp):
        a, b = expr_term(p.left, val), expr_term(p.right, val)
        if p.op == "=":
            return Eq(a, b)
        if p.op == "!=":
            return Not(Eq(a, b))
        return Lt(a, b) if p.op == "<" else Le(a, b)
    if isinstance(p, prog.Not):
        return Not(pred_term(p.arg, val))
    if isinstance(p, prog.And):
        return And(pred_term(p.left, val), pred_term(p.right, val))
    return Or(pred_term(p.left, val), pred_term(p.right, val))


def _is_nonlinear(e) -> bool:
    if isinstance(e, prog.BinOp):
        if e.op == "*" and not isinstance(e.left, prog.Const) and not isinstance(e.right, prog.Const):
            return True
        return _is_nonlinear(e.left) or _is_nonlinear(e.right)
    if isinstance(e, (prog.Not,)):
        return _is_nonlinear(e.arg)
    if isinstance(e, (prog.Cmp, prog.And, prog.Or)):
        return _is_nonlinear(e.left) or _is_nonlinear(e.right)
    return False


def program_logic(p: prog.Program) -> str:
    """QF_IDL for pure data movement, QF_LIA once data arithmetic appears."""
    logic = "QF_IDL"
    for t in p.threads:
        for n in prog.iter_instrs(t.body):
            e = n.expr if isinstance(n, prog.Local) else n.pred if isinstance(n, (prog.If, prog.While)) else None
            if e is None:
                continue
            if _is_nonlinear(e):
                return "QF_NIA"
            if prog.expr_has_arithmetic(e):
                logic = "QF_LIA"
    return logic


class Encoder:
    def __init__(self, g: EventGraph, f: Formula | None = None, prefix: str = "", exact: bool = True):
        self.g = g
        self.exact = exact
        # definitions are emitted per polarity: +1 asserts body => lit, -1 asserts lit => body
        self.defs: dict[tuple, list] = {}
        self.rec_defs: dict[tuple, list] = {}
        self.kids: dict[tuple, set] = {}
        self.pols: dict[tuple, set] = {}
        self.unit_of: dict[tuple, tuple] = {}
        self.f = f if f is not None else Formula()
        self.prefix = prefix
        self.nodes: dict[tuple, LitMap] = {}
        self.tags: dict[tuple, str] = {}
        self.used_tags: set[str] = set()
        self.model_may: dict[int, list] = {}
        self.relations: dict[tuple[str, str], LitMap] = {}  # (side, name) -> lits
        self.axiom_lits: dict[str, LitMap] = {}  # side.label -> lits
        self.cycles: dict[str, dict] = {}
        self.selectors: dict[str, str] = {}  # selector var -> side.label
        self._cf_done = self._df_done = self._base_done = self._final_done = False
        f_logic = program_logic(g.program)
        if ["QF_IDL", "QF_LIA", "QF_NIA"].index(f_logic) > ["QF_IDL", "QF_LIA", "QF_NIA"].index(self.f.logic):
            self.f.logic = f_logic

    # -- names
    def n(self, s: str) -> str:
        return self.prefix + s

    def ex(self, eid: int):
        e = self.g.events[eid]
        if e.is_init:
            return True
        return self.f.bool(self.n(f"ex_{eid}"))

    def cf(self, iid: int) -> str:
        return self.f.bool(self.n(f"cf_{iid}"))

    def val(self, ssa: str) -> str:
        return self.f.int(self.n(f"val_{ssa}"))

    def ev_val(self, eid: int):
        e = self.g.events[eid]
        if e.is_init:
            return e.init_value
        return self.val(e.ssa)

    def clk(self, eid: int):
        if self.g.events[eid].is_init:
            return 0
        return self.f.int(self.n(f"clk_{eid}"))

    def final(self, loc: str) -> str:
        return self.f.int(self.n(f"final_{loc}"))

    def _tag(self, key: tuple, hint: str | None) -> str:
        if key in self.tags:
            return self.tags[key]
        base = hint or f"t{len(self.tags)}"
        tag, k = base, 1
        while tag in self.used_tags:
            k += 1
            tag = f"{base}.{k}"
        self.used_tags.add(tag)
        self.tags[key] = tag
        return tag

    def define(self, tag: str, pair: tuple[int, int], expr, key: tuple | None = None) -> Lit:
        """Literal for ``expr``; introduces ``rel_<tag>_<a>_<b>`` unless it is already atomic.

        Without ``key`` the definition is a biconditional.  With ``key`` it is
        recorded for the node and emitted in the directions later requested
        through :meth:`ensure`.
        """
        if expr is True or expr is False or isinstance(expr, str):
            return expr
        v = self.f.bool(self.n(f"rel_{tag}_{pair[0]}_{pair[1]}"))
        if key is None:
            self.f.add(Iff(v, expr))
        else:
            self.defs.setdefault(key, []).append((v, expr))
            for pol in self.pols.get(key, ()):
                self._emit(v, expr, expr, pol)
        return v

    def _emit(self, v, body, guarded, pol: int) -> None:
        if pol > 0:
            self.f.add(Implies(body, v))
        else:
            self.f.add(Implies(v, guarded))

    def ensure(self, key: tuple, pol: int) -> None:
        """Emit the definitions of node ``key`` (and its operands) for polarity ``pol``.

        ``+1``: the literals must over-approximate the relation (it is only
        constrained from above, e.g. by an acyclicity axiom); ``-1``: they must
        under-approximate it (used as evidence of a violation).  Exact encoders
        always emit both.
        """
        key = self.unit_of.get(key, key)
        todo = [(key, p) for p in ((1, -1) if self.exact else (pol,))]
        while todo:
            k, p = todo.pop()
            k = self.unit_of.get(k, k)
            done = self.pols.setdefault(k, set())
            if p in done:
                continue
            done.add(p)
            for v, expr in self.defs.get(k, ()):
                self._emit(v, expr, expr, p)
            for v, plain, guarded in self.rec_defs.get(k, ()):
                self._emit(v, plain, guarded, p)
            for kid, flip in sorted(self.kids.get(k, ()), key=repr):
                todo.append((kid, -p if flip else p))

    # -- program structure
    def encode_control_flow(self) -> None:
        if self._cf_done:
            return
        self._cf_done = True
        f, g = self.f, self.g
        ssa = g.ssa
        for t in g.program.threads:
            f.add(self.cf(t.body.iid))
            stack = [t.body]
            while stack:
                node = stack.pop()
                c = self.cf(node.iid)
                if isinstance(node, prog.Seq):
                    f.add(Iff(self.cf(node.first.iid), c))
                    f.add(Iff(self.cf(node.second.iid), c))
                    stack += [node.second, node.first]
                elif isinstance(node, prog.If):
                    b = pred_term(ssa.preds[node.iid], self.val)
                    f.add(Iff(self.cf(node.then.iid), And(c, b)))
                    f.add(Iff(self.cf(node.orelse.iid), And(c, Not(b))))
                    stack += [node.orelse, node.then]
                elif isinstance(node, (prog.Load, prog.Store)):
                    f.add(Iff(self.ex(g.ev_of_iid[node.iid]), c))

    def encode_data_flow(self) -> None:
        if self._df_done:
            return
        self._df_done = True
        f, g = self.f, self.g
        ssa = g.ssa
        for name in sorted(ssa.initial):
            f.add(Eq(self.val(name), 0))
        for iid in sorted(ssa.locals):
            dst, expr = ssa.locals[iid]
            f.add(Implies(self.cf(iid), Eq(self.val(dst), expr_term(expr, self.val))))
        for iid in sorted(ssa.padding):
            for dst, src in ssa.padding[iid]:
                f.add(Implies(self.cf(iid), Eq(self.val(dst), self.val(src))))
        for w, r in sorted(g.rf_may):
            f.add(Implies(self.rf_lits()[(w, r)], Eq(self.ev_val(w), self.ev_val(r))))

    def rf_lits(self) -> LitMap:
        key = ("base", "rf")
        if key not in self.nodes:
            self.tags[key] = "rf"
            self.used_tags.add("rf")
            self.nodes[key] = {p: self.f.bool(self.n(f"rel_rf_{p[0]}_{p[1]}")) for p in sorted(self.g.rf_may)}
        return self.nodes[key]

    def co_lits(self) -> LitMap:
        key = ("base", "co")
        if key not in self.nodes:
            self.tags[key] = "co"
            self.used_tags.add("co")
            self.nodes[key] = {p: self.f.bool(self.n(f"rel_co_{p[0]}_{p[1]}")) for p in sorted(self.g.co_may)}
        return self.nodes[key]

    def encode_base_axioms(self) -> None:
        if self._base_done:
            return
        self._base_done = True
        f, g = self.f, self.g
        rf = self.rf_lits()
        by_read: dict[int, list] = {}
        for (w, r), v in rf.items():
            by_read.setdefault(r, []).append(v)
            f.add(Implies(v, And(self.ex(w), self.ex(r))))
        for r in sorted(by_read):
            srcs = by_read[r]
            f.add(Implies(self.ex(r), Or(*srcs)))
            for i in range(len(srcs)):
                for j in range(i + 1, len(srcs)):
                    f.add(Or(Not(srcs[i]), Not(srcs[j])))
        co = self.co_lits()
        for w in g.writes:
            if not w.is_init:
                f.add(Le(1, self.clk(w.eid)))
        for (a, b), v in co.items():
            f.add(Iff(v, And(self.ex(a), self.ex(b), Lt(self.clk(a), self.clk(b)))))
            if a < b and not g.events[a].is_init:
                f.add(Implies(And(self.ex(a), self.ex(b)), Not(Eq(self.clk(a), self.clk(b)))))

    def encode_final_state(self) -> None:
        if self._final_done:
            return
        self._final_done = True
        g = self.g
        co = self.co_lits()
        succ: dict[int, list] = {}
        for (a, b), v in co.items():
            succ.setdefault(a, []).append(v)
        for w in g.writes:
            last = And(self.ex(w.eid), *[Not(v) for v in succ.get(w.eid, [])])
            self.f.add(Implies(last, Eq(self.final(w.loc), self.ev_val(w.eid))))

    def program_constraints(self) -> None:
        self.encode_control_flow()
        self.encode_data_flow()
        self.encode_base_axioms()

    # -- relation elaboration
    def _base(self, name: str) -> LitMap:
        if name == "rf":
            return self.rf_lits()
        if name == "co":
            return self.co_lits()
        key = ("base", name)
        if key in self.nodes:
            return self.nodes[key]
        g = self.g
        tag = self._tag(key, name)
        out: LitMap = {}
        static = g.static_base()[name]
        for a, b in sorted(static):
            guard = True
            if name in g.fences:
                guard = Or(*[self.cf(i) for i in g.fence_guards[(name, a, b)]])
            lit = self.define(tag, (a, b), And(self.ex(a), self.ex(b), guard))
            if lit is not False:
                out[(a, b)] = lit
        self.nodes[key] = out
        return out

    def _may_vals(self, m: cat.MemoryModel) -> list:
        if id(m) not in self.model_may:
            self.model_may[id(m)] = m.compiled.run(self.g.may_context(), may=True)
        return self.model_may[id(m)]

    def elab(self, t: cat.RelTerm, m: cat.MemoryModel, side: str = "", hint: str | None = None):
        """Return (key, literal map) for term ``t`` in model ``m``."""
        if isinstance(t, cat.Base):
            self._base(t.name)
            return ("base", t.name), self.nodes[("base", t.name)]
        if isinstance(t, cat.Name):
            if m.plan.recursive[t.name]:
                key = ("rec", id(m), t.name)
                if key not in self.nodes:
                    scc = m.plan.scc_of(t.name)
                    self._elab_scc(m, scc, side)
                    # every member is encoded with the SCC, so every member is decodable
                    for n in scc:
                        self.relations.setdefault((side, n), self.nodes[("rec", id(m), n)])
                return key, self.nodes[key]
            key, lits = self.elab(m.definitions[t.name], m, side, hint=t.name)
            self.relations.setdefault((side, t.name), lits)
            return key, lits
        g = self.g
        if isinstance(t, cat.Empty):
            key = ("empty",)
            self.nodes.setdefault(key, {})
            return key, self.nodes[key]
        if isinstance(t, cat.Id):
            key = ("id", t.set)
            if key not in self.nodes:
                self.nodes[key] = {(e.eid, e.eid): self.ex(e.eid) for e in self._set(t.set)}
            return key, self.nodes[key]
        if isinstance(t, cat.Cart):
            key = ("cart", t.left, t.right)
            if key not in self.nodes:
                tag = self._tag(key, hint or f"{t.left}x{t.right}")
                self.nodes[key] = {
                    (a.eid, b.eid): self.define(tag, (a.eid, b.eid), And(self.ex(a.eid), self.ex(b.eid)))
                    for a in self._set(t.left) for b in self._set(t.right)
                }
            return key, self.nodes[key]
        if isinstance(t, cat.BINARY):
            lk, L = self.elab(t.left, m, side)
            rk, R = self.elab(t.right, m, side)
            key = (type(t).__name__, lk, rk)
            if key in self.nodes:
                return key, self.nodes[key]
            tag = self._tag(key, hint)
            self.kids[key] = {(lk, False), (rk, isinstance(t, cat.Diff))}
            out: LitMap = {}
            if isinstance(t, cat.Union_):
                for p in sorted(set(L) | set(R)):
                    out[p] = self.define(tag, p, Or(L.get(p, False), R.get(p, False)), key)
            elif isinstance(t, cat.Inter):
                for p in sorted(set(L) & set(R)):
                    out[p] = self.define(tag, p, And(L[p], R[p]), key)
            elif isinstance(t, cat.Diff):
                for p in sorted(L):
                    out[p] = self.define(tag, p, And(L[p], Not(R.get(p, False))), key)
            else:
                out = self._compose(L, R, tag, key)
            self.nodes[key] = {p: v for p, v in out.items() if v is not False}
            return key, self.nodes[key]
        ak, A = self.elab(t.arg, m, side)
        key = (type(t).__name__, ak)
        if key in self.nodes:
            return key, self.nodes[key]
        self.kids[key] = {(ak, False)}
        if isinstance(t, cat.Inverse):
            self.nodes[key] = {(b, a): v for (a, b), v in sorted(A.items())}
            return key, self.nodes[key]
        tag = self._tag(key, hint)
        if isinstance(t, cat.Opt):
            out = dict(A)
            for e in g.events:
                out[(e.eid, e.eid)] = self.ex(e.eid)
        else:
            out = self._closure(A, tag, key)
            if isinstance(t, cat.Star):
                for e in g.events:
                    out[(e.eid, e.eid)] = self.ex(e.eid)
        self.nodes[key] = {p: out[p] for p in sorted(out)}
        return key, self.nodes[key]

    def _set(self, s: str):
        if s == "W":
            return self.g.writes
        if s == "R":
            return self.g.reads
        return self.g.events

    def _compose(self, L: LitMap, R: LitMap, tag: str, key: tuple | None = None) -> LitMap:
        by_first: dict[int, list] = {}
        for (b, c), v in sorted(R.items()):
            by_first.setdefault(b, []).append((c, v))
        acc: dict[tuple[int, int], list] = {}
        for (a, b), v in sorted(L.items()):
            for c, w in by_first.get(b, ()):
                acc.setdefault((a, c), []).append(And(v, w))
        return {p: self.define(tag, p, Or(*acc[p]), key) for p in sorted(acc)}

    def _closure(self, A: LitMap, tag: str, key: tuple | None = None) -> LitMap:
        nodes = {x for p in A for x in p}
        levels = math.ceil(math.log2(len(nodes))) if len(nodes) > 1 else 0
        cur = dict(A)
        for i in range(levels):
            step = self._compose(cur, cur, f"{tag}.sq{i}", key)
            lvl_tag = tag if i == levels - 1 else f"{tag}.tc{i + 1}"
            nxt = {}
            for p in sorted(set(cur) | set(step)):
                nxt[p] = self.define(lvl_tag, p, Or(cur.get(p, False), step.get(p, False)), key)
            cur = {p: v for p, v in nxt.items() if v is not False}
        return cur

    # -- recursive definitions
    def _elab_scc(self, m: cat.MemoryModel, scc: tuple[str, ...], side: str) -> None:
        defs = {n: m.definitions[n] for n in scc}
        recset = set(scc)
        aux: dict[str, cat.RelTerm] = {}

        def rewrite(t):
            if isinstance(t, (cat.Plus, cat.Star)) and _touches(t.arg, recset | set(aux)):
                arg = rewrite(t.arg)
                name = f"{scc[0]}.cl{len(aux) + 1}"
                aux[name] = cat.Union_(arg, cat.Seq(cat.Name(name), arg))
                recset.add(name)
                return cat.Name(name) if isinstance(t, cat.Plus) else cat.Union_(cat.Name(name), cat.Id("EV"))
            if isinstance(t, cat.BINARY):
                return type(t)(rewrite(t.left), rewrite(t.right))
            if isinstance(t, cat.UNARY):
                return type(t)(rewrite(t.arg))
            return t

        defs = {n: rewrite(t) for n, t in defs.items()}
        defs.update(aux)
        vals = self._may_vals(m)
        may: dict[str, set] = {n: vals[m.compiled.name_slot[n]].pairs() for n in scc}
        for name, body in aux.items():
            may[name] = _closure_pairs(self._may_pairs(body.left, m, side, may, recset))

        lits: dict[str, LitMap] = {}
        phis: dict[str, dict] = {}
        for name in defs:
            mname = f"{side}.{name}" if side else name
            lits[name] = {p: self.f.bool(self.n(f"rel_{mname}_{p[0]}_{p[1]}")) for p in sorted(may[name])}
            phis[name] = {p: self.f.int(self.n(f"phi_{mname}_{p[0]}_{p[1]}")) for p in sorted(may[name])}
            self.used_tags.add(name if not side else f"{side}.{name}")
        unit = ("scc", id(m), scc)
        for name in scc:
            self.nodes[("rec", id(m), name)] = lits[name]
            self.unit_of[("rec", id(m), name)] = unit
        kids: set = set()
        env = (lits, phis, may, recset, kids)
        rec = self.rec_defs.setdefault(unit, [])
        for name, body in defs.items():
            for p, v in lits[name].items():
                plain = self._pair_expr(body, p[0], p[1], m, side, env, None)
                guarded = self._pair_expr(body, p[0], p[1], m, side, env, phis[name][p])
                rec.append((v, plain, guarded))
        self.kids[unit] = kids

    def _may_pairs(self, t, m, side, may, recset) -> set:
        if isinstance(t, cat.Name) and t.name in recset:
            return may[t.name]
        if not _touches(t, recset):
            return set(self.elab(t, m, side)[1])
        if isinstance(t, cat.Union_):
            return self._may_pairs(t.left, m, side, may, recset) | self._may_pairs(t.right, m, side, may, recset)
        if isinstance(t, cat.Inter):
            return self._may_pairs(t.left, m, side, may, recset) & self._may_pairs(t.right, m, side, may, recset)
        if isinstance(t, cat.Diff):
            return self._may_pairs(t.left, m, side, may, recset)
        if isinstance(t, cat.Seq):
            L = self._may_pairs(t.left, m, side, may, recset)
            R = self._may_pairs(t.right, m, side, may, recset)
            return {(a, c) for (a, b) in L for (b2, c) in R if b == b2}
        if isinstance(t, cat.Inverse):
            return {(b, a) for a, b in self._may_pairs(t.arg, m, side, may, recset)}
        if isinstance(t, cat.Opt):
            return self._may_pairs(t.arg, m, side, may, recset) | {(e.eid, e.eid) for e in self.g.events}
        raise AssertionError(t)

    def _pair_expr(self, t, a: int, b: int, m, side, env, guard, flip: bool = False):
        lits, phis, may, recset, kids = env
        if isinstance(t, cat.Name) and t.name in recset:
            v = lits[t.name].get((a, b), False)
            if v is False or guard is None:
                return v
            return And(v, Lt(phis[t.name][(a, b)], guard))
        if not _touches(t, recset):
            key, lm = self.elab(t, m, side)
            kids.add((key, flip))
            return lm.get((a, b), False)
        if isinstance(t, cat.Union_):
            return Or(self._pair_expr(t.left, a, b, m, side, env, guard, flip),
                      self._pair_expr(t.right, a, b, m, side, env, guard, flip))
        if isinstance(t, cat.Inter):
            return And(self._pair_expr(t.left, a, b, m, side, env, guard, flip),
                       self._pair_expr(t.right, a, b, m, side, env, guard, flip))
        if isinstance(t, cat.Diff):
            return And(self._pair_expr(t.left, a, b, m, side, env, guard, flip),
                       Not(self._pair_expr(t.right, a, b, m, side, env, None, not flip)))
        if isinstance(t, cat.Seq):
            L = self._may_pairs(t.left, m, side, may, recset)
            R = self._may_pairs(t.right, m, side, may, recset)
            mids = sorted({c for (x, c) in L if x == a} & {c for (c, y) in R if y == b})
            return Or(*[
                And(self._pair_expr(t.left, a, c, m, side, env, guard, flip),
                    self._pair_expr(t.right, c, b, m, side, env, guard, flip))
                for c in mids
            ])
        if isinstance(t, cat.Inverse):
            return self._pair_expr(t.arg, b, a, m, side, env, guard, flip)
        if isinstance(t, cat.Opt):
            refl = self.ex(a) if a == b else False
            return Or(self._pair_expr(t.arg, a, b, m, side, env, guard, flip), refl)
        raise AssertionError(t)

    def elaborate_model(self, m: cat.MemoryModel, side: str, pol: int = 0) -> dict[str, LitMap]:
        """Elaborate every axiom term (and the names it reaches) of ``m``.

        ``pol`` is the polarity the axiom relations are used with; 0 means both.
        """
        out = {}
        for ax in m.axioms:
            key, out[ax.label] = self.elab(ax.term, m, side)
            for p in ((1, -1) if pol == 0 else (pol,)):
                self.ensure(key, p)
            self.axiom_lits[f"{side}.{ax.label}"] = out[ax.label]
        return out

    def elaborate_all_names(self, m: cat.MemoryModel, side: str) -> None:
        for name in m.plan.order:
            key, _ = self.elab(cat.Name(name), m, side)
            self.ensure(key, 1)
            self.ensure(key, -1)

    # -- axioms
    def encode_acyclic(self, lits: LitMap, label: str) -> None:
        for (a, b), v in sorted(lits.items()):
            if a == b:
                self.f.add(Not(v))
            else:
                psi_a = self.f.int(self.n(f"psi_{label}_{a}"))
                psi_b = self.f.int(self.n(f"psi_{label}_{b}"))
                self.f.add(Implies(v, Lt(psi_a, psi_b)))

    def encode_irreflexive(self, lits: LitMap, label: str) -> None:
        for (a, b), v in sorted(lits.items()):
            if a == b:
                self.f.add(Not(v))

    def not_irreflexive(self, lits: LitMap, label: str):
        return Or(*[v for (a, b), v in sorted(lits.items()) if a == b])

    def encode_cyclic(self, lits: LitMap, label: str):
        """Cycle-guessing gadget; returns the disjunction "some node is on the cycle"."""
        f = self.f
        nodes = sorted({x for p in lits for x in p})
        C = {e: f.bool(self.n(f"C_{label}_{e}")) for e in nodes}
        E = {p: f.bool(self.n(f"Cedge_{label}_{p[0]}_{p[1]}")) for p in sorted(lits)}
        outs: dict[int, list] = {}
        ins: dict[int, list] = {}
        for (a, b), ev in E.items():
            f.add(Implies(ev, And(lits[(a, b)], C[a], C[b])))
            outs.setdefault(a, []).append(ev)
            ins.setdefault(b, []).append(ev)
        for e in nodes:
            f.add(Implies(C[e], And(Or(*outs.get(e, [])), Or(*ins.get(e, [])))))
        self.cycles[label] = {"nodes": C, "edges": E}
        return Or(*C.values())

    def encode_axioms(self, m: cat.MemoryModel, side: str) -> None:
        lits = self.elaborate_model(m, side, 1)
        for ax in m.axioms:
            label = f"{side}.{ax.label}"
            if ax.kind == "acyclic":
                self.encode_acyclic(lits[ax.label], label)
            else:
                self.encode_irreflexive(lits[ax.label], label)

    def encode_violation(self, m: cat.MemoryModel, side: str) -> None:
        lits = self.elaborate_model(m, side, -1)
        sels = []
        for ax in m.axioms:
            label = f"{side}.{ax.label}"
            sel = self.f.bool(self.n(f"viol_{label}"))
            self.selectors[sel] = label
            if ax.kind == "acyclic":
                gadget = self.encode_cyclic(lits[ax.label], label)
            else:
                gadget = self.not_irreflexive(lits[ax.label], label)
            self.f.add(Implies(sel, gadget))
            sels.append(sel)
        self.f.add(Or(*sels))

    # -- deadness
    def encode_deadness(self, strict: bool = False) -> None:
        g = self.g
        m = cat.parse_cat("model dead")
        cd = self.elab(cat.Base("cd"), m, "dead")[1]
        rf = self.rf_lits()
        for (r, e), v in sorted(cd.items()):
            srcs = [lit for (w, r2), lit in sorted(rf.items()) if r2 == r and not (strict and g.events[w].is_init)]
            self.f.add(Implies(v, Or(*srcs)))
        co = cat.Base("co")

        def imm(t):
            return cat.Diff(t, cat.Seq(t, cat.Plus(t)))

        lhs = cat.Seq(cat.Seq(imm(co), imm(co)), imm(cat.Inverse(co)))
        rf_t = cat.Base("rf")
        rhs = cat.Seq(cat.Opt(rf_t), cat.Opt(cat.Seq(cat.Base("po"), cat.Opt(cat.Inverse(rf_t)))))
        lk, L = self.elab(lhs, m, "dead", hint="deadlhs")
        rk, R = self.elab(rhs, m, "dead", hint="deadrhs")
        self.ensure(lk, 1)
        self.ensure(rk, -1)
        for p, v in sorted(L.items()):
            self.f.add(Implies(v, R.get(p, False)))

    # -- states
    def register_final(self, tid: str, reg: str):
        name = self.g.ssa.final.get((tid, reg))
        return self.val(name) if name else 0

    def state_equals(self, state: dict, registers: bool = True):
        self.encode_final_state()
        conj = []
        locs = set(self.g.program.locations())
        for key, v in sorted(state.items()):
            if ":" in key:
                if registers:
                    tid, reg = key.split(":", 1)
                    conj.append(Eq(self.register_final(tid, reg), v))
            elif key in locs:
                conj.append(Eq(self.final(key), v))
            else:
                raise KeyError(f"unknown location {key!r}")
        return And(*conj)

    def state_pred(self, pred: prog.Pred):
        """Predicate over final location values and (unambiguous) register names."""
        self.encode_final_state()
        locs = set(self.g.program.locations())
        regs: dict[str, list[tuple[str, str]]] = {}
        for tid, reg in self.g.program.registers():
            regs.setdefault(reg, []).append((tid, reg))

        def lookup(name: str):
            if name in locs:
                return self.final(name)
            if ":" in name:
                tid, reg = name.split(":", 1)
                return self.register_final(tid, reg)
            owners = regs.get(name, [])
            if len(owners) > 1:
                raise KeyError(f"register {name!r} is ambiguous; write <tid>:{name}")
            if not owners:
                raise KeyError(f"unknown location or register {name!r}")
            return self.register_final(*owners[0])

        return pred_term(pred, lookup)


def _touches(t, names: set) -> bool:
    return bool(cat.term_names(t) & names)


def _closure_pairs(pairs: set) -> set:
    out = set(pairs)
    while True:
        new = {(a, d) for (a, b) in out for (c, d) in out if b == c} - out
        if not new:
            return out
        out |= new


# ---------------------------------------------------------------------------
# Top-level formulas


def _graph(p) -> EventGraph:
    return p if isinstance(p, EventGraph) else compile_program(p)


def encode_control_flow(g) -> Formula:
    enc = Encoder(_graph(g))
    enc.encode_control_flow()
    return enc.f


def encode_data_flow(g) -> Formula:
    enc = Encoder(_graph(g))
    enc.encode_control_flow()
    enc.encode_data_flow()
    return enc.f


def encode_base_axioms(g) -> Formula:
    enc = Encoder(_graph(g))
    enc.encode_base_axioms()
    return enc.f


def elaborate_relations(m: cat.MemoryModel, g, plan=None) -> Formula:
    enc = Encoder(_graph(g))
    enc.elaborate_all_names(m, "m")
    enc.elaborate_model(m, "m")
    return enc.f


def _meta(enc: Encoder, kind: str, **extra) -> None:
    f = enc.f
    f.meta.update(kind=kind, graph=enc.g, encoder=enc, **extra)


def encode_portability(p, m_src: cat.MemoryModel, m_tgt: cat.MemoryModel,
                       opts: EncodeOptions | None = None) -> Formula:
    """Satisfiable iff some execution is target-consistent but not source-consistent."""
    opts = opts or EncodeOptions()
    g = _graph(p)
    enc = Encoder(g, exact=opts.exact)
    enc.program_constraints()
    enc.encode_axioms(m_tgt, "tgt")
    enc.encode_violation(m_src, "src")
    if opts.dead or opts.dead_strict:
        enc.encode_deadness(strict=opts.dead_strict)
    for state in opts.blocked_states:
        enc.f.add(Not(enc.state_equals(state, opts.state_registers)))
    if opts.blocked_states:
        enc.encode_final_state()
    _meta(enc, "portability", source=m_src.name, target=m_tgt.name)
    return enc.f


def encode_state_equals(g, state: dict, registers: bool = True) -> Formula:
    enc = Encoder(_graph(g))
    enc.program_constraints()
    enc.f.add(enc.state_equals(state, registers))
    return enc.f


def encode_reachability(p, m: cat.MemoryModel, target, registers: bool = True, exact: bool = True) -> Formula:
    """Satisfiable iff some ``m``-consistent execution ends in ``target``.

    ``target`` is a State mapping or a predicate over final values.
    """
    g = _graph(p)
    enc = Encoder(g, exact=exact)
    enc.program_constraints()
    enc.encode_axioms(m, "tgt")
    if isinstance(target, dict):
        enc.f.add(enc.state_equals(target, registers))
    else:
        enc.f.add(enc.state_pred(target))
    enc.encode_final_state()
    _meta(enc, "reachability", source=None, target=m.name)
    return enc.f


# ---------------------------------------------------------------------------
# High-level portability


def _hl_map(p: prog.Program) -> dict[int, str]:
    """iid of each memory instruction -> high-level instruction id."""
    out = {}
    ordinal = 0
    for t in p.threads:
        for node in prog.iter_instrs(t.body):
            if isinstance(node, (prog.Load, prog.Store)):
                ordinal += 1
                out[node.iid] = str(node.hl if node.hl is not None else ordinal)
    return out


class HighLevelError(ValueError):
    pass


def encode_highlevel_portability(p_h: prog.Program, p_s: prog.Program, p_t: prog.Program,
                                 m_src: cat.MemoryModel, m_tgt: cat.MemoryModel) -> Formula:
    """Both compiled programs must project onto one shared high-level execution."""
    h_ids = _hl_map(p_h)
    h_instr: dict[str, tuple[str, str]] = {}  # id -> (kind, loc)
    for t in p_h.threads:
        for node in prog.iter_instrs(t.body):
            if isinstance(node, (prog.Load, prog.Store)):
                h_instr[h_ids[node.iid]] = ("R" if isinstance(node, prog.Load) else "W", node.loc)
    locs = sorted(set(p_h.locations()) | set(p_s.locations()) | set(p_t.locations()))
    for loc in locs:
        h_instr[f"init.{loc}"] = ("I", loc)

    f = Formula()
    exec_h = {i: f.bool(f"exech_{i}") for i in sorted(h_instr)}
    for loc in locs:
        f.add(exec_h[f"init.{loc}"])
    rf_h = {}
    co_h = {}
    for i1, (k1, l1) in sorted(h_instr.items()):
        for i2, (k2, l2) in sorted(h_instr.items()):
            if l1 != l2:
                continue
            if k1 in "IW" and k2 == "R":
                rf_h[(i1, i2)] = f.bool(f"rfh_{i1}_{i2}")
            if k1 in "IW" and k2 == "W":
                co_h[(i1, i2)] = f.bool(f"coh_{i1}_{i2}")
    for (i1, i2), v in list(rf_h.items()) + list(co_h.items()):
        f.add(Implies(v, And(exec_h[i1], exec_h[i2])))

    encs = []
    for prefix, p, side in (("S.", p_s, "src"), ("T.", p_t, "tgt")):
        # share location names across all three programs so init pseudo-instructions line up
        p = prog.Program(p.name, p.threads, {loc: p.init_value(loc) for loc in locs})
        g = compile_program(p)
        low = _hl_map(p)
        hmap = {}
        for e in g.events:
            if e.is_init:
                hmap[e.eid] = f"init.{e.loc}"
            else:
                if g.program.thread(e.tid) and e.iid not in low:
                    raise HighLevelError(f"{p.name}: memory instruction {e.iid} has no high-level label")
                hid = low[e.iid]
                if hid not in h_instr:
                    raise HighLevelError(f"{p.name}: label {hid} names no high-level memory instruction")
                hmap[e.eid] = hid
        enc = Encoder(g, f, prefix)
        enc.program_constraints()
        if side == "src":
            enc.encode_violation(m_src, "src")
        else:
            enc.encode_axioms(m_tgt, "tgt")
        # executed low-level events come from executed high-level instructions
        for e in g.events:
            f.add(Implies(enc.ex(e.eid), exec_h[hmap[e.eid]]))
        # low-level rf/co edges project onto high-level ones and every high-level edge is realised
        for low_lits, high in ((enc.rf_lits(), rf_h), (enc.co_lits(), co_h)):
            realised: dict[tuple[str, str], list] = {}
            for (a, b), v in sorted(low_lits.items()):
                hp = (hmap[a], hmap[b])
                if hp not in high:
                    f.add(Not(v))
                    continue
                f.add(Implies(v, high[hp]))
                realised.setdefault(hp, []).append(v)
            for hp, hv in sorted(high.items()):
                f.add(Implies(hv, Or(*realised.get(hp, []))))
        encs.append(enc)
    f.meta.update(kind="highlevel", graph=encs[1].g, encoder=encs[1], source_encoder=encs[0],
                  source=m_src.name, target=m_tgt.name)
    return f


# ---------------------------------------------------------------------------
# State portability by refinement

STATE_REACHABLE, NEW_STATE, UNDECIDED = "StateReachable", "NewState", "statePortabilityUndecided"


@dataclass
class StateRefinement:
    """Outcome of :func:`check_state_refinement`.

    ``verdict`` is the plain portability answer (Portable, NotPortable or
    Unknown); ``state`` says whether every state of a non-portable execution
    is also source-reachable (StateReachable), a new state was found
    (NewState), or the budget ran out.
    """

    verdict: str
    state: str | None = None
    witness: object = None
    new_state: dict | None = None
    blocked: list = field(default_factory=list)
    queries: int = 0


def check_state_refinement(p, m_src: cat.MemoryModel, m_tgt: cat.MemoryModel, solver: str | None = None,
                           timeout: float | None = None, budget: int = 16, registers: bool = True,
                           opts: EncodeOptions | None = None) -> StateRefinement:
    """Portability query, then reachability queries on the states it reaches.

    Each target-only state found is checked against the source model; states
    the source can also reach are blocked and the portability query is
    repeated.  ``queries`` counts reachability queries.
    """
    from . import solve as _solve
    from .witness import decode, reach_state

    g = _graph(p)
    base = opts or EncodeOptions()
    blocked: list[dict] = []
    first = None
    queries = 0
    while True:
        o = dataclasses.replace(base, state_registers=registers, blocked_states=list(blocked))
        f = encode_portability(g, m_src, m_tgt, o)
        res = _solve.solve(f, solver, timeout)
        if res.status == _solve.UNKNOWN:
            return StateRefinement("Unknown" if first is None else "NotPortable", UNDECIDED, first,
                                   blocked=blocked, queries=queries)
        if res.status == _solve.UNSAT:
            if first is None:
                return StateRefinement("Portable", None, queries=queries)
            return StateRefinement("NotPortable", STATE_REACHABLE, first, blocked=blocked, queries=queries)
        w = decode(res, f)
        first = first or w
        if queries >= budget:
            return StateRefinement("NotPortable", UNDECIDED, first, blocked=blocked, queries=queries)
        sigma = reach_state(w, registers)
        queries += 1
        rq = _solve.solve(encode_reachability(g, m_src, sigma, registers, base.exact), solver, timeout)
        if rq.status == _solve.UNKNOWN:
            return StateRefinement("NotPortable", UNDECIDED, first, blocked=blocked, queries=queries)
        if rq.status == _solve.UNSAT:
            return StateRefinement("NotPortable", NEW_STATE, w, new_state=sigma, blocked=blocked, queries=queries)
        blocked.append(sigma)

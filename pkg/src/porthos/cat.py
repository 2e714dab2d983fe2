"""CAT-core memory models: terms, parser, recursion analysis and a Kleene evaluator.

The evaluator compiles a model into a flat instruction list with structural
sharing and runs it on bit-row relations from :mod:`porthos.kernel`.  Mutually
recursive definitions are solved by Kleene iteration from the empty relation.
"""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Union

from .kernel import BitRel

BASE_NAMES = ("po", "rf", "co", "ad", "dd", "cd", "int", "loc", "mfence", "sync", "lwsync", "isync")
BASE_ALIASES = {"sthd": "int", "sloc": "loc"}
EVENT_SETS = ("EV", "W", "R")
BUILTIN_MODELS = ("sc", "tso", "power", "pso", "rmo", "alpha")

PRELUDE = """
fr := rf^-1;co
rfe := rf \\ int
rfi := rf & int
coe := co \\ int
coi := co & int
fre := fr \\ int
fri := fr & int
com := rf | co | fr
poloc := po & loc
"""


class CatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class Base:
    name: str


@dataclass(frozen=True)
class Name:
    name: str


@dataclass(frozen=True)
class Empty:
    pass


@dataclass(frozen=True)
class Id:
    set: str


@dataclass(frozen=True)
class Cart:
    left: str
    right: str


@dataclass(frozen=True)
class Union_:
    left: "RelTerm"
    right: "RelTerm"


@dataclass(frozen=True)
class Inter:
    left: "RelTerm"
    right: "RelTerm"


@dataclass(frozen=True)
class Diff:
    left: "RelTerm"
    right: "RelTerm"


@dataclass(frozen=True)
class Seq:
    left: "RelTerm"
    right: "RelTerm"


@dataclass(frozen=True)
class Inverse:
    arg: "RelTerm"


@dataclass(frozen=True)
class Plus:
    arg: "RelTerm"


@dataclass(frozen=True)
class Star:
    arg: "RelTerm"


@dataclass(frozen=True)
class Opt:
    arg: "RelTerm"


RelTerm = Union[Base, Name, Empty, Id, Cart, Union_, Inter, Diff, Seq, Inverse, Plus, Star, Opt]
BINARY = (Union_, Inter, Diff, Seq)
UNARY = (Inverse, Plus, Star, Opt)


def term_names(t: RelTerm) -> set[str]:
    """Defined names referenced by ``t``."""
    if isinstance(t, Name):
        return {t.name}
    if isinstance(t, BINARY):
        return term_names(t.left) | term_names(t.right)
    if isinstance(t, UNARY):
        return term_names(t.arg)
    return set()


_BIN_SYM = {Union_: "|", Inter: "&", Diff: "\\", Seq: ";"}
_BIN_PREC = {Union_: 1, Inter: 2, Diff: 3, Seq: 4}
_POSTFIX = {Inverse: "^-1", Plus: "^+", Star: "^*", Opt: "^?"}


def format_term(t: RelTerm, prec: int = 0) -> str:
    if isinstance(t, (Base, Name)):
        return t.name
    if isinstance(t, Empty):
        return "0"
    if isinstance(t, Id):
        return f"id({t.set})"
    if isinstance(t, Cart):
        return f"{t.left}*{t.right}"
    if isinstance(t, UNARY):
        return format_term(t.arg, 5) + _POSTFIX[type(t)]
    p = _BIN_PREC[type(t)]
    # left-associative: the right operand needs parentheses at equal precedence
    text = f"{format_term(t.left, p)} {_BIN_SYM[type(t)]} {format_term(t.right, p + 1)}"
    if type(t) is Seq:
        text = f"{format_term(t.left, p)};{format_term(t.right, p + 1)}"
    return f"({text})" if p < prec else text


@dataclass(frozen=True)
class Axiom:
    kind: str  # "acyclic" or "irreflexive"
    term: RelTerm
    label: str


@dataclass
class MemoryModel:
    name: str
    definitions: dict[str, RelTerm]
    axioms: list[Axiom]
    text: str = ""
    user_names: tuple[str, ...] = ()

    @functools.cached_property
    def plan(self) -> "RecursionPlan":
        return recursion_plan(self)

    @functools.cached_property
    def compiled(self) -> "CompiledModel":
        return CompiledModel(self)

    def axiom(self, label: str) -> Axiom:
        for ax in self.axioms:
            if ax.label == label:
                return ax
        raise KeyError(label)

    def has_uniproc(self) -> bool:
        """True when some axiom is exactly acyclic(po&loc | rf | fr | co) up to union order."""
        if self.definitions.get("fr") != _PRELUDE_DEFS["fr"]:
            return False
        target = {Inter(Base("po"), Base("loc")), Base("rf"), Name("fr"), Base("co")}
        for ax in self.axioms:
            if ax.kind != "acyclic":
                continue
            parts: set = set()
            todo = _union_parts(ax.term)
            while todo:
                p = todo.pop()
                if isinstance(p, Name) and p.name in ("poloc", "com") and (
                    self.definitions.get(p.name) == _PRELUDE_DEFS[p.name]
                ):
                    todo.extend(_union_parts(self.definitions[p.name]))
                else:
                    parts.add(p)
            if parts == target:
                return True
        return False

    def __hash__(self):
        return id(self)


def _union_parts(t: RelTerm) -> list[RelTerm]:
    if isinstance(t, Union_):
        return _union_parts(t.left) + _union_parts(t.right)
    return [t]


# ---------------------------------------------------------------------------
# Parser

_CAT_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\#[^\n]*|//[^\n]*|\(\*.*?\*\))
  | (?P<postfix>\^-1|\^\+|\^\*|\^\?)
  | (?P<define>:=)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:-[A-Za-z_][A-Za-z0-9_]*)*)
  | (?P<num>\d+)
  | (?P<op>[|&\\;()*=])
    """,
    re.VERBOSE | re.DOTALL,
)


def _cat_tokens(text: str) -> list[tuple[str, str, int]]:
    out = []
    pos, line = 0, 1
    while pos < len(text):
        m = _CAT_TOKEN.match(text, pos)
        if not m:
            raise CatError(f"line {line}: unexpected character {text[pos]!r}")
        if m.lastgroup not in ("ws", "comment"):
            out.append((m.lastgroup, m.group(), line))
        line += m.group().count("\n")
        pos = m.end()
    out.append(("eof", "", line))
    return out


class _CatParser:
    def __init__(self, text: str):
        self.toks = _cat_tokens(text)
        self.pos = 0

    @property
    def tok(self):
        return self.toks[self.pos]

    def error(self, msg: str):
        raise CatError(f"line {self.tok[2]}: {msg}")

    def at(self, text: str) -> bool:
        return self.tok[1] == text and self.tok[0] != "eof"

    def take(self, text: str):
        if not self.at(text):
            self.error(f"expected {text!r}, found {self.tok[1] or 'end of input'!r}")
        self.pos += 1

    def ident(self) -> str:
        if self.tok[0] != "ident":
            self.error(f"expected identifier, found {self.tok[1] or 'end of input'!r}")
        self.pos += 1
        return self.toks[self.pos - 1][1]

    def term(self) -> RelTerm:
        return self._binary(0)

    _LEVELS = (("|", Union_), ("&", Inter), ("\\", Diff), (";", Seq))

    def _binary(self, level: int) -> RelTerm:
        if level == len(self._LEVELS):
            return self._postfix()
        sym, cls = self._LEVELS[level]
        t = self._binary(level + 1)
        while self.at(sym):
            self.pos += 1
            t = cls(t, self._binary(level + 1))
        return t

    def _postfix(self) -> RelTerm:
        t = self._atom()
        while self.tok[0] == "postfix":
            op = self.tok[1]
            self.pos += 1
            t = {"^-1": Inverse, "^+": Plus, "^*": Star, "^?": Opt}[op](t)
        return t

    def _atom(self) -> RelTerm:
        kind, text, _ = self.tok
        if self.at("("):
            self.pos += 1
            t = self.term()
            self.take(")")
            return t
        if kind == "num":
            if text != "0":
                self.error(f"only the empty relation 0 is a numeric literal, found {text}")
            self.pos += 1
            return Empty()
        name = self.ident()
        if name == "id" and self.at("("):
            self.pos += 1
            s = self.ident()
            if s not in EVENT_SETS:
                self.error(f"unknown event set {s!r}")
            self.take(")")
            return Id(s)
        if name in EVENT_SETS:
            self.take("*")
            right = self.ident()
            if right not in EVENT_SETS:
                self.error(f"unknown event set {right!r}")
            return Cart(name, right)
        if name in BASE_ALIASES:
            return Base(BASE_ALIASES[name])
        if name in BASE_NAMES:
            return Base(name)
        return Name(name)

    def statements(self):
        """Yield ('model', name) / ('def', name, term) / ('axiom', kind, term, label)."""
        auto = 0
        while self.tok[0] != "eof":
            kind, text, line = self.tok
            if text == "model" and kind == "ident":
                self.pos += 1
                yield ("model", self.ident())
            elif text in ("acyclic", "irreflexive") and kind == "ident":
                self.pos += 1
                t = self.term()
                if self.at("as"):
                    self.pos += 1
                    label = self.ident()
                else:
                    auto += 1
                    label = f"ax{auto}"
                yield ("axiom", text, t, label)
            elif text == "let" and kind == "ident":
                self.pos += 1
                name = self.ident()
                self.take("=")
                yield ("def", name, self.term(), line)
            elif kind == "ident":
                name = self.ident()
                self.take(":=")
                yield ("def", name, self.term(), line)
            else:
                self.error(f"unexpected {text!r}")


def _parse_defs(text: str) -> dict[str, RelTerm]:
    return {s[1]: s[2] for s in _CatParser(text).statements() if s[0] == "def"}


_PRELUDE_DEFS = _parse_defs(PRELUDE)


def parse_cat(text: str) -> MemoryModel:
    name = "anonymous"
    user: dict[str, RelTerm] = {}
    axioms: list[Axiom] = []
    for stmt in _CatParser(text).statements():
        if stmt[0] == "model":
            name = stmt[1]
        elif stmt[0] == "def":
            _, dname, t, line = stmt
            if dname in user:
                raise CatError(f"line {line}: duplicate definition of {dname!r}")
            if dname in BASE_NAMES or dname in BASE_ALIASES or dname in EVENT_SETS:
                raise CatError(f"line {line}: cannot redefine built-in {dname!r}")
            user[dname] = t
        else:
            _, kind, t, label = stmt
            if any(a.label == label for a in axioms):
                raise CatError(f"duplicate axiom label {label!r}")
            axioms.append(Axiom(kind, t, label))
    defs = {k: v for k, v in _PRELUDE_DEFS.items() if k not in user}
    defs.update(user)
    for dname, t in defs.items():
        for ref in term_names(t):
            if ref not in defs:
                raise CatError(f"undefined name {ref!r} in definition of {dname!r}")
    for ax in axioms:
        for ref in term_names(ax.term):
            if ref not in defs:
                raise CatError(f"undefined name {ref!r} in axiom {ax.label!r}")
    return MemoryModel(name, defs, axioms, text, tuple(user))


def model_text(model_id: str) -> str:
    if model_id not in BUILTIN_MODELS:
        raise CatError(f"unknown model {model_id!r} (builtins: {', '.join(BUILTIN_MODELS)})")
    return resources.files("porthos.models").joinpath(f"{model_id}.cat").read_text()


@functools.lru_cache(maxsize=None)
def builtin_model(model_id: str) -> MemoryModel:
    return parse_cat(model_text(model_id))


def load_model(spec: str) -> MemoryModel:
    """A builtin id or a path to a ``.cat`` file."""
    if spec in BUILTIN_MODELS:
        return builtin_model(spec)
    with open(spec, encoding="utf-8") as fh:
        return parse_cat(fh.read())


# ---------------------------------------------------------------------------
# Recursion structure


@dataclass(frozen=True)
class RecursionPlan:
    sccs: tuple[tuple[str, ...], ...]  # dependencies first
    recursive: dict[str, bool] = field(default_factory=dict)

    def scc_of(self, name: str) -> tuple[str, ...]:
        for scc in self.sccs:
            if name in scc:
                return scc
        raise KeyError(name)

    @property
    def order(self) -> list[str]:
        return [n for scc in self.sccs for n in scc]


def tarjan(graph: dict[str, list[str]]) -> list[list[str]]:
    """Strongly connected components, each emitted after every component it reaches."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    stack: list[str] = []
    on_stack: set[str] = set()
    out: list[list[str]] = []

    def visit(v: str):
        index[v] = low[v] = len(index)
        stack.append(v)
        on_stack.add(v)
        for w in graph.get(v, ()):
            if w not in index:
                visit(w)
                low[v] = min(low[v], low[w])
            elif w in on_stack:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = []
            while True:
                w = stack.pop()
                on_stack.discard(w)
                comp.append(w)
                if w == v:
                    break
            out.append(comp)

    for v in graph:
        if v not in index:
            visit(v)
    return out


def recursion_plan(m: MemoryModel) -> RecursionPlan:
    graph = {n: sorted(term_names(t)) for n, t in m.definitions.items()}
    sccs = []
    recursive = {}
    order = list(m.definitions)
    for comp in tarjan(graph):
        comp = sorted(comp, key=order.index)
        rec = len(comp) > 1 or comp[0] in graph[comp[0]]
        for n in comp:
            recursive[n] = rec
        sccs.append(tuple(comp))
    return RecursionPlan(tuple(sccs), recursive)


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class RelContext:
    """A concrete execution seen as indexed events and base relations.

    Masks and relations use event indices ``0..n-1``; every base relation must
    already be restricted to executed events.
    """

    n: int
    executed: int
    writes: int
    reads: int
    base: dict[str, BitRel]

    def set_mask(self, s: str) -> int:
        if s == "W":
            return self.writes & self.executed
        if s == "R":
            return self.reads & self.executed
        return self.executed


@dataclass
class _Fix:
    vars: list[int]
    bodies: list[int]
    steps: list


class CompiledModel:
    """Flat instruction list for a model; slots are shared between equal subterms."""

    def __init__(self, m: MemoryModel):
        self.model = m
        self.instrs: list[tuple] = []
        self.keys: dict[tuple, int] = {}
        self.steps: list = []
        self.name_slot: dict[str, int] = {}
        plan = m.plan
        for scc in plan.sccs:
            if not plan.recursive[scc[0]]:
                self.name_slot[scc[0]] = self._compile(m.definitions[scc[0]], self.steps)
                continue
            fix = _Fix([], [], [])
            for n in scc:
                slot = len(self.instrs)
                self.instrs.append(("var", n, None))
                self.name_slot[n] = slot
                fix.vars.append(slot)
            for n in scc:
                fix.bodies.append(self._compile(m.definitions[n], fix.steps))
            self.steps.append(fix)
        self.axiom_slots = [(ax, self._compile(ax.term, self.steps)) for ax in m.axioms]

    def _compile(self, t: RelTerm, steps: list) -> int:
        if isinstance(t, Name):
            return self.name_slot[t.name]
        if isinstance(t, Base):
            key = ("base", t.name, None)
        elif isinstance(t, Empty):
            key = ("empty", None, None)
        elif isinstance(t, Id):
            key = ("id", t.set, None)
        elif isinstance(t, Cart):
            key = ("cart", t.left, t.right)
        elif isinstance(t, BINARY):
            key = (type(t).__name__, self._compile(t.left, steps), self._compile(t.right, steps))
        else:
            key = (type(t).__name__, self._compile(t.arg, steps), None)
        slot = self.keys.get(key)
        if slot is None:
            slot = len(self.instrs)
            self.instrs.append(key)
            self.keys[key] = slot
            steps.append(slot)
        return slot

    def _exec(self, slot: int, vals: list, ctx: RelContext, may: bool):
        op, a, b = self.instrs[slot]
        n = ctx.n
        if op == "base":
            v = ctx.base[a]
        elif op == "empty":
            v = BitRel(n)
        elif op == "id":
            v = BitRel.identity(n, ctx.set_mask(a))
        elif op == "cart":
            v = BitRel.cart(n, ctx.set_mask(a), ctx.set_mask(b))
        elif op == "Union_":
            v = vals[a].union(vals[b])
        elif op == "Inter":
            v = vals[a].inter(vals[b])
        elif op == "Diff":
            v = vals[a] if may else vals[a].diff(vals[b])
        elif op == "Seq":
            v = vals[a].compose(vals[b])
        elif op == "Inverse":
            v = vals[a].inverse()
        elif op == "Plus":
            v = vals[a].closure()
        elif op == "Star":
            v = vals[a].closure().with_identity(ctx.executed)
        elif op == "Opt":
            v = vals[a].with_identity(ctx.executed)
        else:
            raise AssertionError(op)
        vals[slot] = v

    def _run(self, steps: list, vals: list, ctx: RelContext, may: bool):
        for step in steps:
            if isinstance(step, _Fix):
                empty = BitRel(ctx.n)
                for v in step.vars:
                    vals[v] = empty
                while True:
                    self._run(step.steps, vals, ctx, may)
                    changed = False
                    for v, body in zip(step.vars, step.bodies):
                        if vals[body] != vals[v]:
                            changed = True
                    if not changed:
                        break
                    for v, body in zip(step.vars, step.bodies):
                        vals[v] = vals[body]
            else:
                self._exec(step, vals, ctx, may)

    def run(self, ctx: RelContext, may: bool = False) -> list:
        vals: list = [None] * len(self.instrs)
        self._run(self.steps, vals, ctx, may)
        return vals

    def eval_extra(self, t: RelTerm, ctx: RelContext, vals: list | None = None, may: bool = False) -> BitRel:
        """Evaluate an extra term against this model's definitions."""
        if vals is None:
            vals = self.run(ctx, may)
        steps: list = []
        slot = self._compile(t, steps)
        vals.extend([None] * (len(self.instrs) - len(vals)))
        self._run(steps, vals, ctx, may)
        return vals[slot]


@dataclass
class ModelResult:
    relations: dict[str, BitRel]
    axioms: dict[str, bool]
    axiom_relations: dict[str, BitRel]

    @property
    def consistent(self) -> bool:
        return all(self.axioms.values())

    @property
    def failed(self) -> list[str]:
        return [label for label, ok in self.axioms.items() if not ok]


def _context(w) -> RelContext:
    return w if isinstance(w, RelContext) else w.rel_context()


def check_axiom(kind: str, rel: BitRel) -> bool:
    return rel.acyclic() if kind == "acyclic" else not rel.has_diag()


def eval_model(m: MemoryModel, w) -> ModelResult:
    """Least fixpoint of every definition plus per-axiom pass/fail on execution ``w``."""
    ctx = _context(w)
    cm = m.compiled
    vals = cm.run(ctx)
    rels = {n: vals[s] for n, s in cm.name_slot.items()}
    axioms = {}
    axrels = {}
    for ax, slot in cm.axiom_slots:
        axrels[ax.label] = vals[slot]
        axioms[ax.label] = check_axiom(ax.kind, vals[slot])
    return ModelResult(rels, axioms, axrels)


def consistent(m: MemoryModel, w) -> bool:
    """Fast path: stop at the first failing axiom."""
    ctx = _context(w)
    cm = m.compiled
    vals = cm.run(ctx)
    return all(check_axiom(ax.kind, vals[slot]) for ax, slot in cm.axiom_slots)


def eval_term(t: RelTerm, w, m: MemoryModel | None = None) -> BitRel:
    m = m or parse_cat("model none")
    return m.compiled.eval_extra(t, _context(w))


def parse_term(text: str) -> RelTerm:
    p = _CatParser(text)
    t = p.term()
    if p.tok[0] != "eof":
        p.error(f"unexpected {p.tok[1]!r}")
    return t


def format_model(m: MemoryModel) -> str:
    lines = [f"model {m.name}"]
    lines += [f"{n} := {format_term(m.definitions[n])}" for n in m.user_names]
    lines += [f"{ax.kind} {format_term(ax.term)} as {ax.label}" for ax in m.axioms]
    return "\n".join(lines) + "\n"

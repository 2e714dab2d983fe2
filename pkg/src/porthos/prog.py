"""Programs: AST, the ``.lit`` parser and printer, loop unrolling, validation.

A program is a fixed set of threads written in a small while-language that
moves values between registers and shared locations.  Every AST node carries
an instruction id (``iid``) that is unique across the program, and memory
instructions may carry a high-level origin label (``hl``) used when relating
two compiled versions of the same source program.
"""

from __future__ import annotations

import dataclasses
import logging
import re
from dataclasses import dataclass, field
from typing import Iterator, Union

log = logging.getLogger(__name__)

FENCE_KINDS = ("mfence", "sync", "lwsync", "isync")
REGISTER_RE = re.compile(r"r[A-Za-z0-9_]*\Z")
KEYWORDS = frozenset(
    {"program", "init", "thread", "if", "else", "while", "skip", "true", "false",
     "and", "or", "not", *FENCE_KINDS}
)


class ProgramSyntaxError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}" if line else message)
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# Expressions and predicates


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Reg:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - *
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Reg, BinOp]


@dataclass(frozen=True)
class BoolConst:
    value: bool


@dataclass(frozen=True)
class Cmp:
    op: str  # one of = != < <=
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Not:
    arg: "Pred"


@dataclass(frozen=True)
class And:
    left: "Pred"
    right: "Pred"


@dataclass(frozen=True)
class Or:
    left: "Pred"
    right: "Pred"


Pred = Union[BoolConst, Cmp, Not, And, Or]


def eval_expr(e: Expr, env: dict[str, int]) -> int:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Reg):
        return env.get(e.name, 0)
    a, b = eval_expr(e.left, env), eval_expr(e.right, env)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    return a * b


def eval_pred(p: Pred, env: dict[str, int]) -> bool:
    if isinstance(p, BoolConst):
        return p.value
    if isinstance(p, Cmp):
        a, b = eval_expr(p.left, env), eval_expr(p.right, env)
        return {"=": a == b, "!=": a != b, "<": a < b, "<=": a <= b}[p.op]
    if isinstance(p, Not):
        return not eval_pred(p.arg, env)
    if isinstance(p, And):
        return eval_pred(p.left, env) and eval_pred(p.right, env)
    return eval_pred(p.left, env) or eval_pred(p.right, env)


def expr_registers(e: Expr | Pred) -> set[str]:
    """Registers read by an expression or predicate."""
    if isinstance(e, Reg):
        return {e.name}
    if isinstance(e, (Const, BoolConst)):
        return set()
    if isinstance(e, Not):
        return expr_registers(e.arg)
    return expr_registers(e.left) | expr_registers(e.right)


def expr_has_arithmetic(e: Expr | Pred) -> bool:
    if isinstance(e, BinOp):
        return True
    if isinstance(e, (Const, Reg, BoolConst)):
        return False
    if isinstance(e, Not):
        return expr_has_arithmetic(e.arg)
    return expr_has_arithmetic(e.left) or expr_has_arithmetic(e.right)


# ---------------------------------------------------------------------------
# Instructions


@dataclass(frozen=True)
class Local:
    reg: str
    expr: Expr
    iid: int = -1
    hl: int | None = None


@dataclass(frozen=True)
class Load:
    reg: str
    loc: str
    iid: int = -1
    hl: int | None = None


@dataclass(frozen=True)
class Store:
    loc: str
    reg: str
    iid: int = -1
    hl: int | None = None


@dataclass(frozen=True)
class Fence:
    kind: str
    iid: int = -1
    hl: int | None = None


@dataclass(frozen=True)
class Seq:
    first: "Instr"
    second: "Instr"
    iid: int = -1
    hl: int | None = None


@dataclass(frozen=True)
class If:
    pred: Pred
    then: "Instr"
    orelse: "Instr"
    iid: int = -1
    hl: int | None = None


@dataclass(frozen=True)
class While:
    pred: Pred
    body: "Instr"
    iid: int = -1
    hl: int | None = None


@dataclass(frozen=True)
class Skip:
    iid: int = -1
    hl: int | None = None


Instr = Union[Local, Load, Store, Fence, Seq, If, While, Skip]


@dataclass(frozen=True)
class Thread:
    tid: str
    body: Instr


@dataclass(frozen=True)
class Program:
    name: str
    threads: tuple[Thread, ...]
    init: dict[str, int] = field(default_factory=dict)

    def locations(self) -> list[str]:
        locs = set(self.init)
        for t in self.threads:
            for node in iter_instrs(t.body):
                if isinstance(node, (Load, Store)):
                    locs.add(node.loc)
        return sorted(locs)

    def init_value(self, loc: str) -> int:
        return self.init.get(loc, 0)

    def registers(self) -> list[tuple[str, str]]:
        """All (tid, register) pairs that are assigned somewhere."""
        out = []
        for t in self.threads:
            regs = sorted({n.reg for n in iter_instrs(t.body) if isinstance(n, (Local, Load))})
            out.extend((t.tid, r) for r in regs)
        return out

    def thread(self, tid: str) -> Thread:
        for t in self.threads:
            if t.tid == tid:
                return t
        raise KeyError(tid)


def children(node: Instr) -> tuple[Instr, ...]:
    if isinstance(node, Seq):
        return (node.first, node.second)
    if isinstance(node, If):
        return (node.then, node.orelse)
    if isinstance(node, While):
        return (node.body,)
    return ()


def iter_instrs(node: Instr) -> Iterator[Instr]:
    """Pre-order traversal (textual order)."""
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(children(n)))


def is_memory(node: Instr) -> bool:
    return isinstance(node, (Load, Store))


def seq_of(items: list[Instr]) -> Instr:
    """Right-nested sequence of ``items``; Skip when empty."""
    items = [i for i in items if not isinstance(i, Skip)] or items[:1]
    if not items:
        return Skip()
    out = items[-1]
    for item in reversed(items[:-1]):
        out = Seq(item, out)
    return out


def flatten_seq(node: Instr) -> list[Instr]:
    if isinstance(node, Seq):
        return flatten_seq(node.first) + flatten_seq(node.second)
    return [node]


def renumber(p: Program, start: int = 0) -> Program:
    """Assign fresh iids in textual (pre-order) order."""
    counter = iter(range(start, 1 << 62))

    def walk(n: Instr) -> Instr:
        iid = next(counter)
        if isinstance(n, Seq):
            first = walk(n.first)
            return dataclasses.replace(n, first=first, second=walk(n.second), iid=iid)
        if isinstance(n, If):
            then = walk(n.then)
            return dataclasses.replace(n, then=then, orelse=walk(n.orelse), iid=iid)
        if isinstance(n, While):
            return dataclasses.replace(n, body=walk(n.body), iid=iid)
        return dataclasses.replace(n, iid=iid)

    threads = tuple(Thread(t.tid, walk(t.body)) for t in p.threads)
    return Program(p.name, threads, dict(p.init))


def shape(x):
    """Structure of an AST with iids erased, for comparisons modulo iids."""
    if isinstance(x, Program):
        return (x.name, tuple((t.tid, shape(t.body)) for t in x.threads), tuple(sorted(x.init.items())))
    if dataclasses.is_dataclass(x):
        return (type(x).__name__,) + tuple(
            shape(getattr(x, f.name)) for f in dataclasses.fields(x) if f.name != "iid"
        )
    return x


# ---------------------------------------------------------------------------
# Tokenizer and parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<hl>@hl\s*=)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|<-|<=|>=|==|!=|&&|\|\||/\\|\\/|[=<>(){};+\-*!~])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ProgramSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


_AND_TOKS = {"&&", "/\\", "and"}
_OR_TOKS = {"||", "\\/", "or"}
_NOT_TOKS = {"!", "~", "not"}
_CMP_TOKS = {"=", "==", "!=", "<", "<=", ">", ">="}


class _Parser:
    def __init__(self, text: str, any_names: bool = False):
        self.toks = _tokenize(text)
        self.pos = 0
        self.any_names = any_names
        self.fresh = 0

    # -- helpers
    @property
    def tok(self) -> _Tok:
        return self.toks[self.pos]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.tok
        raise ProgramSyntaxError(msg, tok.line, tok.col)

    def at(self, *texts: str) -> bool:
        return self.tok.kind != "eof" and self.tok.text in texts

    def take(self, *texts: str) -> _Tok:
        if not self.at(*texts):
            self.error(f"expected {' or '.join(repr(t) for t in texts)}, found {self.tok.text or 'end of input'!r}")
        tok = self.tok
        self.pos += 1
        return tok

    def ident(self, what: str) -> str:
        tok = self.tok
        if tok.kind != "ident" or tok.text in KEYWORDS:
            self.error(f"expected {what}, found {tok.text or 'end of input'!r}")
        self.pos += 1
        return tok.text

    def register(self) -> str:
        tok = self.tok
        name = self.ident("register")
        if not self.any_names and not REGISTER_RE.match(name):
            self.error(f"{name!r} is not a register name (registers match r[A-Za-z0-9_]*)", tok)
        return name

    def integer(self) -> int:
        neg = False
        if self.at("-"):
            self.pos += 1
            neg = True
        tok = self.tok
        if tok.kind != "int":
            self.error(f"expected integer, found {tok.text or 'end of input'!r}")
        self.pos += 1
        return -int(tok.text) if neg else int(tok.text)

    # -- program structure
    def program(self) -> Program:
        self.take("program")
        name = self.ident("program name")
        init: dict[str, int] = {}
        while self.at("init"):
            self.pos += 1
            loc = self.ident("location")
            self.take("=")
            init[loc] = self.integer()
        threads: list[Thread] = []
        seen: set[str] = set()
        while self.at("thread"):
            self.pos += 1
            tok = self.tok
            tid = self.ident("thread id")
            if tid in seen:
                self.error(f"duplicate thread id {tid!r}", tok)
            seen.add(tid)
            threads.append(Thread(tid, self.block(("thread",))))
        if self.tok.kind != "eof":
            self.error(f"expected 'thread', found {self.tok.text!r}")
        if not threads:
            self.error("program has no threads")
        return Program(name, tuple(threads), init)

    def block(self, terminators: tuple[str, ...]) -> Instr:
        items: list[Instr] = []
        prev_block = True
        while True:
            while self.at(";"):
                self.pos += 1
                prev_block = True
            if self.tok.kind == "eof" or self.at(*terminators):
                break
            if not prev_block:
                self.error(f"expected ';', found {self.tok.text!r}")
            stmt, prev_block = self.stmt()
            items.extend(flatten_seq(stmt))
        return seq_of(items)

    def braced(self) -> Instr:
        self.take("{")
        body = self.block(("}",))
        self.take("}")
        return body

    def stmt(self) -> tuple[Instr, bool]:
        """Parse one statement; the flag says whether it ended with a brace."""
        if self.at("if"):
            self.pos += 1
            self.take("(")
            pred = self.pred()
            self.take(")")
            then = self.braced()
            orelse: Instr = Skip()
            if self.at("else"):
                self.pos += 1
                orelse = self.braced()
            return If(pred, then, orelse), True
        if self.at("while"):
            self.pos += 1
            self.take("(")
            pred = self.pred()
            self.take(")")
            return While(pred, self.braced()), True
        if self.at("skip"):
            self.pos += 1
            return Skip(), False
        node = self.atom()
        if self.tok.kind == "hl":
            self.pos += 1
            label = self.integer()
            if isinstance(node, Seq):  # desugared constant store: label the store
                node = Seq(node.first, dataclasses.replace(node.second, hl=label))
            else:
                node = dataclasses.replace(node, hl=label)
        return node, False

    def atom(self) -> Instr:
        if self.at(*FENCE_KINDS):
            return Fence(self.take(*FENCE_KINDS).text)
        start = self.tok
        name = self.ident("statement")
        if self.at("="):
            self.pos += 1
            self._check_reg(name, start)
            return Local(name, self.expr())
        if self.at("<-"):
            self.pos += 1
            self._check_reg(name, start)
            return Load(name, self.ident("location"))
        if self.at(":="):
            self.pos += 1
            if self.tok.kind == "int" or self.at("-"):
                value = self.integer()
                self.fresh += 1
                reg = f"r__k{self.fresh}"
                return Seq(Local(reg, Const(value)), Store(name, reg))
            return Store(name, self.register())
        self.error(f"expected '=', '<-' or ':=' after {name!r}")

    def _check_reg(self, name: str, tok: _Tok):
        if not REGISTER_RE.match(name):
            self.error(f"{name!r} is not a register name (registers match r[A-Za-z0-9_]*)", tok)

    # -- expressions
    def expr(self) -> Expr:
        e = self.term()
        while self.at("+", "-"):
            op = self.take("+", "-").text
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.at("*"):
            self.pos += 1
            e = BinOp("*", e, self.factor())
        return e

    def factor(self) -> Expr:
        if self.tok.kind == "int":
            return Const(self.integer())
        if self.at("-"):
            self.pos += 1
            f = self.factor()
            return Const(-f.value) if isinstance(f, Const) else BinOp("-", Const(0), f)
        if self.at("("):
            self.pos += 1
            e = self.expr()
            self.take(")")
            return e
        return Reg(self.register())

    def pred(self) -> Pred:
        p = self.conj()
        while self.at(*_OR_TOKS):
            self.pos += 1
            p = Or(p, self.conj())
        return p

    def conj(self) -> Pred:
        p = self.neg()
        while self.at(*_AND_TOKS):
            self.pos += 1
            p = And(p, self.neg())
        return p

    def neg(self) -> Pred:
        if self.at(*_NOT_TOKS):
            self.pos += 1
            return Not(self.neg())
        if self.at("true", "false"):
            return BoolConst(self.take("true", "false").text == "true")
        if self.at("("):
            save = self.pos
            try:
                return self.comparison()
            except ProgramSyntaxError:
                self.pos = save
            self.pos += 1
            p = self.pred()
            self.take(")")
            return p
        return self.comparison()

    def comparison(self) -> Pred:
        left = self.expr()
        if not self.at(*_CMP_TOKS):
            self.error(f"expected comparison operator, found {self.tok.text or 'end of input'!r}")
        op = self.take(*_CMP_TOKS).text
        right = self.expr()
        if op == "==":
            op = "="
        if op == ">":
            return Cmp("<", right, left)
        if op == ">=":
            return Cmp("<=", right, left)
        return Cmp(op, left, right)


def _warn_undefined_registers(p: Program) -> None:
    for t in p.threads:
        defined: set[str] = set()
        for node in iter_instrs(t.body):
            used: set[str] = set()
            if isinstance(node, Local):
                used = expr_registers(node.expr)
            elif isinstance(node, Store):
                used = {node.reg}
            elif isinstance(node, (If, While)):
                used = expr_registers(node.pred)
            for r in sorted(used - defined):
                log.warning("thread %s: register %s read before any definition (reads 0)", t.tid, r)
                defined.add(r)
            if isinstance(node, (Local, Load)):
                defined.add(node.reg)


def parse_program(text: str) -> Program:
    """Parse ``.lit`` source text into a Program with fresh iids."""
    p = renumber(_Parser(text).program())
    _warn_undefined_registers(p)
    return p


def parse_pred(text: str, any_names: bool = False) -> Pred:
    """Parse a stand-alone predicate; ``any_names`` admits location names as variables."""
    parser = _Parser(text, any_names=any_names)
    p = parser.pred()
    if parser.tok.kind != "eof":
        parser.error(f"unexpected {parser.tok.text!r}")
    return p


# ---------------------------------------------------------------------------
# Printer


def format_expr(e: Expr) -> str:
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, Reg):
        return e.name
    return f"({format_expr(e.left)} {e.op} {format_expr(e.right)})"


def format_pred(p: Pred) -> str:
    if isinstance(p, BoolConst):
        return "true" if p.value else "false"
    if isinstance(p, Cmp):
        return f"{format_expr(p.left)} {p.op} {format_expr(p.right)}"
    if isinstance(p, Not):
        return f"!({format_pred(p.arg)})"
    op = "&&" if isinstance(p, And) else "||"
    return f"({format_pred(p.left)} {op} {format_pred(p.right)})"


def _format_instr(node: Instr, indent: int) -> list[str]:
    pad = "  " * indent
    if isinstance(node, Seq):
        lines: list[str] = []
        items = flatten_seq(node)
        for i, item in enumerate(items):
            sub = _format_instr(item, indent)
            if i < len(items) - 1:
                sub[-1] += ";"
            lines.extend(sub)
        return lines
    if isinstance(node, If):
        lines = [f"{pad}if ({format_pred(node.pred)}) {{"]
        lines += _format_instr(node.then, indent + 1)
        lines.append(f"{pad}}} else {{")
        lines += _format_instr(node.orelse, indent + 1)
        lines.append(f"{pad}}}")
        return lines
    if isinstance(node, While):
        return [f"{pad}while ({format_pred(node.pred)}) {{", *_format_instr(node.body, indent + 1), f"{pad}}}"]
    if isinstance(node, Skip):
        return [f"{pad}skip"]
    if isinstance(node, Local):
        text = f"{node.reg} = {format_expr(node.expr)}"
    elif isinstance(node, Load):
        text = f"{node.reg} <- {node.loc}"
    elif isinstance(node, Store):
        text = f"{node.loc} := {node.reg}"
    else:
        text = node.kind
    if node.hl is not None:
        text += f" @hl={node.hl}"
    return [pad + text]


def format_program(p: Program) -> str:
    lines = [f"program {p.name}"]
    lines += [f"init {loc} = {v}" for loc, v in sorted(p.init.items())]
    for t in p.threads:
        lines.append(f"thread {t.tid}")
        lines += _format_instr(t.body, 1)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Unrolling and validation


def has_loops(p: Program) -> bool:
    return any(isinstance(n, While) for t in p.threads for n in iter_instrs(t.body))


def unroll(p: Program, k: int) -> Program:
    """Replace every loop by ``k`` nested conditional copies of its body."""
    if k < 1:
        raise ValueError("unroll bound must be >= 1")
    if not has_loops(p):
        return p

    def walk(n: Instr) -> Instr:
        if isinstance(n, Seq):
            return Seq(walk(n.first), walk(n.second), n.iid, n.hl)
        if isinstance(n, If):
            return If(n.pred, walk(n.then), walk(n.orelse), n.iid, n.hl)
        if isinstance(n, While):
            body = walk(n.body)
            out: Instr = If(n.pred, body, Skip())
            for _ in range(k - 1):
                out = If(n.pred, Seq(body, out), Skip())
            return out
        return n

    # renumbering gives every copy its own iids
    return renumber(Program(p.name, tuple(Thread(t.tid, walk(t.body)) for t in p.threads), dict(p.init)))


def insert_fences(p: Program, kind: str = "sync") -> Program:
    """Put a fence of ``kind`` between every two consecutive statements, in every block."""
    if kind not in FENCE_KINDS:
        raise ValueError(f"unknown fence {kind!r}")

    def walk(n: Instr) -> Instr:
        if isinstance(n, Seq):
            items = [walk(i) for i in flatten_seq(n)]
            out: list[Instr] = []
            for i, item in enumerate(items):
                if i:
                    out.append(Fence(kind))
                out.append(item)
            return seq_of(out)
        if isinstance(n, If):
            return If(n.pred, walk(n.then), walk(n.orelse))
        if isinstance(n, While):
            return While(n.pred, walk(n.body))
        return n

    threads = tuple(Thread(t.tid, walk(t.body)) for t in p.threads)
    return renumber(Program(f"{p.name}_{kind}", threads, dict(p.init)))


@dataclass(frozen=True)
class Diagnostic:
    message: str
    tid: str | None = None
    iid: int | None = None

    def __str__(self) -> str:
        where = []
        if self.tid is not None:
            where.append(f"thread {self.tid}")
        if self.iid is not None:
            where.append(f"iid {self.iid}")
        return f"{', '.join(where)}: {self.message}" if where else self.message


def validate(p: Program, require_acyclic: bool = False) -> list[Diagnostic]:
    """Well-formedness diagnostics; empty when ``p`` is fine."""
    out: list[Diagnostic] = []
    if not p.threads:
        out.append(Diagnostic("program has no threads"))
    seen_tids: set[str] = set()
    seen_iids: dict[int, str] = {}
    for t in p.threads:
        if t.tid in seen_tids:
            out.append(Diagnostic(f"duplicate thread id {t.tid!r}", tid=t.tid))
        seen_tids.add(t.tid)
        for node in iter_instrs(t.body):
            if node.iid < 0:
                out.append(Diagnostic("instruction without iid", tid=t.tid))
            elif node.iid in seen_iids:
                out.append(Diagnostic(f"duplicate iid {node.iid}", tid=t.tid, iid=node.iid))
            else:
                seen_iids[node.iid] = t.tid
            if require_acyclic and isinstance(node, While):
                out.append(Diagnostic("loop present in a program required to be acyclic", tid=t.tid, iid=node.iid))
            if isinstance(node, Fence) and node.kind not in FENCE_KINDS:
                out.append(Diagnostic(f"unknown fence {node.kind!r}", tid=t.tid, iid=node.iid))
            if isinstance(node, (Local, Load)) and not REGISTER_RE.match(node.reg):
                out.append(Diagnostic(f"bad register name {node.reg!r}", tid=t.tid, iid=node.iid))
    return out

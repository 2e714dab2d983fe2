"""Reduction programs used as test fixtures.

``gen_forall(psi, p_np)`` is portable exactly when ``psi`` holds for every
assignment: a guessing prefix evaluates ``psi`` on an assignment chosen by the
coherence order and only runs the non-portable seed ``p_np`` when ``psi`` is
false.  ``gen_state`` builds the analogous program for state portability of
``forall xs exists ys psi``.

Boolean formulas use variables (identifiers not starting with ``r``),
``true``/``false``, ``!``, ``&``, ``|``, ``->``, ``<->`` (also ``=``) and
parentheses; ``&&``, ``||``, ``/\\``, ``\\/``, ``~`` are accepted too.
"""

from __future__ import annotations

import dataclasses
import itertools
import re
from dataclasses import dataclass

from . import prog
from .prog import (And, BoolConst, Cmp, Const, If, Load, Local, Not, Or, Program, Reg, Seq, Skip, Store,
                   Thread)


class FormulaSyntaxError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Boolean formulas

@dataclass(frozen=True)
class BVar:
    name: str


BoolFormula = object  # BVar | BoolConst | Not | And | Or over BVar leaves

_FTOK = re.compile(r"\s*(<->|->|&&|\|\||/\\|\\/|[()!~&|=]|[A-Za-z_][A-Za-z0-9_']*)")


def _ftokens(text: str) -> list[str]:
    out, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _FTOK.match(text, pos)
        if not m:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r} at column {pos + 1}")
        out.append(m.group(1))
        pos = m.end()
    return out


def parse_formula(text: str):
    """Parse a Boolean formula; ``<->`` binds loosest, then ``->``, ``|``, ``&``, ``!``."""
    toks = _ftokens(text)
    pos = 0

    def peek():
        return toks[pos] if pos < len(toks) else None

    def take(*want):
        nonlocal pos
        t = peek()
        if t is None or (want and t not in want):
            raise FormulaSyntaxError(f"expected {' or '.join(want) or 'a term'}, found {t or 'end of input'!r}")
        pos += 1
        return t

    def iff():
        a = imp()
        while peek() in ("<->", "="):
            take()
            b = imp()
            a = Or(And(a, b), And(Not(a), Not(b)))
        return a

    def imp():
        a = disj()
        if peek() == "->":
            take()
            return Or(Not(a), imp())
        return a

    def disj():
        a = conj()
        while peek() in ("|", "||", "\\/"):
            take()
            a = Or(a, conj())
        return a

    def conj():
        a = neg()
        while peek() in ("&", "&&", "/\\"):
            take()
            a = And(a, neg())
        return a

    def neg():
        t = peek()
        if t in ("!", "~"):
            take()
            return Not(neg())
        if t == "(":
            take()
            a = iff()
            take(")")
            return a
        if t in ("true", "false"):
            take()
            return BoolConst(t == "true")
        if t is None or not re.match(r"[A-Za-z_]", t):
            raise FormulaSyntaxError(f"expected a variable, found {t or 'end of input'!r}")
        take()
        return BVar(t)

    f = iff()
    if peek() is not None:
        raise FormulaSyntaxError(f"unexpected {peek()!r}")
    return f


def formula_vars(f) -> list[str]:
    out: set[str] = set()
    stack = [f]
    while stack:
        x = stack.pop()
        if isinstance(x, BVar):
            out.add(x.name)
        elif isinstance(x, Not):
            stack.append(x.arg)
        elif isinstance(x, (And, Or)):
            stack += [x.left, x.right]
    return sorted(out, key=_natural)


def _natural(s: str):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", s)]


def eval_formula(f, env: dict[str, bool]) -> bool:
    if isinstance(f, BVar):
        return env[f.name]
    if isinstance(f, BoolConst):
        return f.value
    if isinstance(f, Not):
        return not eval_formula(f.arg, env)
    if isinstance(f, And):
        return eval_formula(f.left, env) and eval_formula(f.right, env)
    return eval_formula(f.left, env) or eval_formula(f.right, env)


def truth_table(f, variables: list[str]) -> tuple[bool, ...]:
    """Rows in binary counting order, first variable most significant."""
    return tuple(eval_formula(f, dict(zip(variables, bits)))
                 for bits in itertools.product((False, True), repeat=len(variables)))


def formula_from_table(table: tuple[bool, ...], variables: list[str]):
    """Disjunctive normal form with one minterm per true row (``false`` when none)."""
    out = None
    for bits, val in zip(itertools.product((False, True), repeat=len(variables)), table):
        if not val:
            continue
        term = None
        for v, b in zip(variables, bits):
            lit = BVar(v) if b else Not(BVar(v))
            term = lit if term is None else And(term, lit)
        term = BoolConst(True) if term is None else term
        out = term if out is None else Or(out, term)
    return BoolConst(False) if out is None else out


def format_formula(f) -> str:
    if isinstance(f, BVar):
        return f.name
    if isinstance(f, BoolConst):
        return "true" if f.value else "false"
    if isinstance(f, Not):
        return f"!{format_formula(f.arg)}"
    op = "&" if isinstance(f, And) else "|"
    return f"({format_formula(f.left)} {op} {format_formula(f.right)})"


def _as_pred(f, reg_of: dict[str, str]) -> prog.Pred:
    """Variable v true iff its register holds 1."""
    if isinstance(f, BVar):
        return Cmp("=", Reg(reg_of[f.name]), Const(1))
    if isinstance(f, BoolConst):
        return f
    if isinstance(f, Not):
        return Not(_as_pred(f.arg, reg_of))
    return type(f)(_as_pred(f.left, reg_of), _as_pred(f.right, reg_of))


# ---------------------------------------------------------------------------
# Program building


def _seq(*items: prog.Instr) -> prog.Instr:
    flat: list[prog.Instr] = []
    for i in items:
        flat.extend(prog.flatten_seq(i))
    return prog.seq_of(flat)


def _rename(node, locs: dict[str, str], regs: dict[str, str]):
    """Rename locations and registers throughout an instruction or predicate."""
    if isinstance(node, Reg):
        return Reg(regs.get(node.name, node.name))
    if not dataclasses.is_dataclass(node):
        return node
    changes = {}
    for fld in dataclasses.fields(node):
        v = getattr(node, fld.name)
        if fld.name == "loc":
            changes[fld.name] = locs.get(v, v)
        elif fld.name == "reg":
            changes[fld.name] = regs.get(v, v)
        elif dataclasses.is_dataclass(v):
            changes[fld.name] = _rename(v, locs, regs)
    return dataclasses.replace(node, **changes)


def _thread_names(t: Thread) -> tuple[set[str], set[str]]:
    locs, regs = set(), set()
    for node in prog.iter_instrs(t.body):
        if isinstance(node, (Load, Store)):
            locs.add(node.loc)
        if isinstance(node, (Local, Load, Store)):
            regs.add(node.reg)
        if isinstance(node, Local):
            regs |= prog.expr_registers(node.expr)
        if isinstance(node, If):
            regs |= prog.expr_registers(node.pred)
    return locs, regs


def _disjoint(p_np: Program, taken_locs: set[str], taken_regs: set[str], keep: set[str] = frozenset()
              ) -> Program:
    """Rename p_np's locations/registers that clash with generated names."""
    locs, regs = set(p_np.init), set()
    for t in p_np.threads:
        a, b = _thread_names(t)
        locs |= a
        regs |= b

    def fresh(name, taken, used):
        k, cand = 1, f"{name}_np"
        while cand in taken or cand in used:
            k += 1
            cand = f"{name}_np{k}"
        return cand

    lmap = {l: fresh(l, taken_locs, locs) for l in sorted(locs & taken_locs) if l not in keep}
    rmap = {r: fresh(r, taken_regs, regs) for r in sorted(regs & taken_regs)}
    threads = tuple(Thread(t.tid, _rename(t.body, lmap, rmap)) for t in p_np.threads)
    init = {lmap.get(l, l): v for l, v in p_np.init.items()}
    return Program(p_np.name, threads, init)


def _check_vars(vs: list[str]) -> None:
    for v in vs:
        if v.startswith("r") or not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", v) or v in prog.KEYWORDS:
            raise FormulaSyntaxError(f"formula variable {v!r} cannot be used as a location name")


def _tids(p_np: Program, k: int) -> list[str]:
    tids = [t.tid for t in p_np.threads]
    n = 0
    while len(tids) < k:
        cand = f"t{n}"
        if cand not in tids:
            tids.append(cand)
        n += 1
    return tids


def gen_forall(psi, p_np: Program, variables: list[str] | None = None, name: str | None = None) -> Program:
    """Portable between the seed's models iff ``psi`` is valid (seed assumed non-portable)."""
    f = parse_formula(psi) if isinstance(psi, str) else psi
    xs = list(variables) if variables is not None else formula_vars(f)
    _check_vars(xs)
    missing = set(formula_vars(f)) - set(xs)
    if missing:
        raise FormulaSyntaxError(f"formula mentions undeclared variables {sorted(missing)}")
    if "y" in xs:
        raise FormulaSyntaxError("variable name 'y' is reserved for the result location")
    reg_of = {x: f"r_{x}" for x in xs}
    gen_locs = set(xs) | {"y"}
    gen_regs = {"rc0", "rc1", "rc2", "ry"} | set(reg_of.values())
    p_np = _disjoint(p_np, gen_locs, gen_regs)

    t1 = _seq(
        Local("rc0", Const(0)), Local("rc1", Const(1)), Local("rc2", Const(2)),
        *[Store(x, "rc0") for x in xs],
        *[Load(reg_of[x], x) for x in xs],
        If(_as_pred(f, reg_of), Store("y", "rc2"), Store("y", "rc1")),
    )
    t2 = _seq(Local("rc1", Const(1)), *[Store(x, "rc1") for x in xs])
    k = max(2, len(p_np.threads))
    seeds = [t.body for t in p_np.threads] + [Skip()] * (k - len(p_np.threads))
    pre = [t1, t2] + [Skip()] * (k - 2)
    threads = []
    for tid, t_i, t_np in zip(_tids(p_np, k), pre, seeds):
        body = _seq(t_i, Load("ry", "y"), If(Cmp("=", Reg("ry"), Const(1)), t_np, Skip()))
        threads.append(Thread(tid, body))
    init = dict(p_np.init)
    return prog.renumber(Program(name or f"forall_{p_np.name}", tuple(threads), init))


# Non-portable seed for gen_state with source SC and target TSO: store buffering
# whose relaxed outcome (both reads see the initial 3) is reported through z;
# every location ends at 3.  t1 restores c before b, so a read of the restored
# b can no longer be followed by a read of c = 1.
SB_STATE_SEED = """\
program sbz
init a = 3
init b = 3
init c = 3
init z = 3
thread t0
  a := 1;
  rp <- b;
  ru <- c;
  if (rp = 3 && ru = 1) {
    z := 1
  };
  a := 3
thread t1
  b := 1;
  rq <- a;
  if (rq = 3) {
    c := 1
  };
  c := 3;
  b := 3
"""


def state_seed() -> Program:
    return prog.parse_program(SB_STATE_SEED)


def gen_state(psi, universal: list[str], existential: list[str], p_np: Program | None = None,
              z: str = "z", name: str | None = None) -> Program:
    """State-portable from the seed's source to its target iff ``forall universal exists existential psi``.

    ``p_np`` must end every source-consistent execution in its initial state
    and can reach ``z = 1`` (its only write of ``z``, in its first thread)
    under the target.  All generated locations start at 3.
    """
    f = parse_formula(psi) if isinstance(psi, str) else psi
    xs = list(universal) + list(existential)
    _check_vars(xs)
    missing = set(formula_vars(f)) - set(xs)
    if missing:
        raise FormulaSyntaxError(f"formula mentions unquantified variables {sorted(missing)}")
    p_np = p_np or state_seed()
    sync = {x: f"{x}_s" for x in xs}
    reg_of = {x: f"r_{x}" for x in xs}
    rsync = {x: f"rs_{x}" for x in xs}
    gen_locs = set(xs) | set(sync.values()) | {"y"}
    if "y" in xs or gen_locs & {z}:
        raise FormulaSyntaxError("variable names 'y' and the seed's z location are reserved")
    gen_regs = {"rc0", "rc1", "rc2", "rc3", "ry", "rz"} | set(reg_of.values()) | set(rsync.values())
    p_np = _disjoint(p_np, gen_locs, gen_regs, keep={z})
    if not p_np.threads or z not in _thread_names(p_np.threads[0])[0]:
        raise ValueError(f"seed program must write {z!r} in its first thread")

    agree = None
    for x in xs:
        c = Cmp("=", Reg(reg_of[x]), Reg(rsync[x]))
        agree = c if agree is None else And(agree, c)
    agree = agree or BoolConst(True)
    t1 = _seq(
        Local("rc0", Const(0)), Local("rc1", Const(1)), Local("rc2", Const(2)),
        *[Store(x, "rc0") for x in xs],
        *[Load(rsync[x], sync[x]) for x in xs],
        *[Load(reg_of[x], x) for x in xs],
        If(Not(agree), Store("y", "rc2"),
           If(_as_pred(f, reg_of), Store("y", "rc1"), Store("y", "rc0"))),
    )
    t2 = _seq(
        Local("rc1", Const(1)), Local("rc3", Const(3)),
        *[Store(x, "rc1") for x in xs],
        *[Load(reg_of[x], x) for x in xs],
        *[Store(sync[x], reg_of[x]) for x in xs],
        *[Store(sync[x], "rc3") for x in xs],
    )
    k = max(2, len(p_np.threads))
    seeds = [t.body for t in p_np.threads] + [Skip()] * (k - len(p_np.threads))
    tids = _tids(p_np, k)
    first = _seq(
        t1, Load("ry", "y"),
        If(Cmp("=", Reg("ry"), Const(0)),
           _seq(seeds[0], Load("rz", z),
                If(Cmp("=", Reg("rz"), Const(1)), _seq(Local("rc3", Const(3)), Store(z, "rc3"), Store("y", "rc1")),
                   Skip())),
           Skip()),
        *[Store(y, "rc1") for y in existential],
    )
    threads = [Thread(tids[0], first)]
    pre = [t2] + [Skip()] * (k - 2)
    for tid, t_i, t_np in zip(tids[1:], pre, seeds[1:]):
        body = _seq(t_i, Load("ry", "y"), If(Cmp("=", Reg("ry"), Const(0)), t_np, Skip()))
        threads.append(Thread(tid, body))
    init = {loc: 3 for loc in sorted(gen_locs)}
    init.update(p_np.init)
    init.setdefault(z, 3)
    return prog.renumber(Program(name or f"state_{p_np.name}", tuple(threads), init))

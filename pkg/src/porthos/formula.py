"""Solver-agnostic constraint IR.

Terms are plain Python values: a ``str`` is a variable, an ``int`` an integer
constant, a ``bool`` a Boolean constant, and a tuple ``(op, *args)`` an
application.  Boolean ops: and, or, not, =>, <=>.  Integer atoms: <, <=, =.
Integer functions: +, -, *.  The helpers below fold constants as they build.
"""

from __future__ import annotations

from dataclasses import dataclass, field


def And(*args):
    out = []
    for a in args:
        if a is True:
            continue
        if a is False:
            return False
        if isinstance(a, tuple) and a[0] == "and":
            out.extend(a[1:])
        else:
            out.append(a)
    if not out:
        return True
    if len(out) == 1:
        return out[0]
    return ("and", *out)


def Or(*args):
    out = []
    for a in args:
        if a is False:
            continue
        if a is True:
            return True
        if isinstance(a, tuple) and a[0] == "or":
            out.extend(a[1:])
        else:
            out.append(a)
    if not out:
        return False
    if len(out) == 1:
        return out[0]
    return ("or", *out)


def Not(a):
    if isinstance(a, bool):
        return not a
    if isinstance(a, tuple) and a[0] == "not":
        return a[1]
    return ("not", a)


def Implies(a, b):
    if a is False or b is True:
        return True
    if a is True:
        return b
    if b is False:
        return Not(a)
    return ("=>", a, b)


def Iff(a, b):
    if a is True:
        return b
    if b is True:
        return a
    if a is False:
        return Not(b)
    if b is False:
        return Not(a)
    if a == b:
        return True
    return ("<=>", a, b)


def Lt(a, b):
    if isinstance(a, int) and isinstance(b, int) and not isinstance(a, bool):
        return a < b
    return ("<", a, b)


def Le(a, b):
    if isinstance(a, int) and isinstance(b, int):
        return a <= b
    return ("<=", a, b)


def Eq(a, b):
    if isinstance(a, int) and isinstance(b, int):
        return a == b
    if a == b:
        return True
    return ("=", a, b)


def Add(a, b):
    return ("+", a, b)


def Sub(a, b):
    return ("-", a, b)


def Mul(a, b):
    return ("*", a, b)


def variables(t, out: set | None = None) -> set:
    out = set() if out is None else out
    stack = [t]
    while stack:
        x = stack.pop()
        if isinstance(x, str):
            out.add(x)
        elif isinstance(x, tuple):
            stack.extend(x[1:])
    return out


@dataclass
class Formula:
    """Declarations plus a list of top-level assertions.

    ``meta`` carries decoding information (event ids behind relation
    variables, axiom labels behind selectors) for :mod:`porthos.witness`.
    """

    bools: set[str] = field(default_factory=set)
    ints: set[str] = field(default_factory=set)
    assertions: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    logic: str = "QF_IDL"

    def bool(self, name: str) -> str:
        self.bools.add(name)
        return name

    def int(self, name: str) -> str:
        self.ints.add(name)
        return name

    def add(self, t) -> None:
        if t is True:
            return
        if isinstance(t, tuple) and t[0] == "and":
            for a in t[1:]:
                self.add(a)
            return
        self.assertions.append(t)

    def extend(self, other: "Formula") -> None:
        self.bools |= other.bools
        self.ints |= other.ints
        self.assertions.extend(other.assertions)

    def copy(self) -> "Formula":
        return Formula(set(self.bools), set(self.ints), list(self.assertions), dict(self.meta), self.logic)

    def check_declared(self) -> list[str]:
        seen: set[str] = set()
        for a in self.assertions:
            variables(a, seen)
        return sorted(seen - self.bools - self.ints)

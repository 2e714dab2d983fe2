from __future__ import annotations

import functools
import shutil

import pytest

from porthos import cat, encode, prog, solve, witness
from porthos.cli import read_program
from porthos.events import compile_program

CLASSIC = ["sb", "mp", "lb", "iriw", "wrc", "2+2w", "r", "s", "corr", "coww", "iriw0"]
MODELS = ["sc", "tso", "power"]

def _have_solver() -> bool:
    if shutil.which("z3"):
        return True
    try:
        import cvc5  # noqa: F401
    except ImportError:
        return False
    return True


needs_solver = pytest.mark.skipif(not _have_solver(), reason="no SMT solver available")


@functools.lru_cache(maxsize=None)
def model(name: str) -> cat.MemoryModel:
    return cat.builtin_model(name)


@functools.lru_cache(maxsize=None)
def program(name: str, k: int = 1) -> prog.Program:
    return prog.unroll(read_program(name), k)


def graph(name: str, k: int = 1):
    return compile_program(program(name, k))


def check(p, src: str, tgt: str, **opts):
    """Solve a portability query; returns (status, witness or None, formula)."""
    g = p if not isinstance(p, (str, prog.Program)) else compile_program(program(p) if isinstance(p, str) else p)
    f = encode.encode_portability(g, model(src), model(tgt), encode.EncodeOptions(**opts))
    res = solve.solve(f)
    w = witness.decode(res, f) if res.status == solve.SAT else None
    return res.status, w, f


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def report(criterion: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

"""SMT-LIB 2 emission and an external solver driver."""

from __future__ import annotations

import os
import re
import shlex
import shutil
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field

from .formula import Formula

SAT, UNSAT, UNKNOWN = "sat", "unsat", "unknown"

_SIMPLE_SYMBOL = re.compile(r"[A-Za-z~!@$%^&*_+=<>.?/\-][A-Za-z0-9~!@$%^&*_+=<>.?/\-]*\Z")
_OPS = {"and": "and", "or": "or", "not": "not", "=>": "=>", "<=>": "=", "<": "<", "<=": "<=",
        "=": "=", "+": "+", "-": "-", "*": "*"}


class SolverSpawnError(RuntimeError):
    pass


class SolverOutputParseError(RuntimeError):
    pass


def symbol(name: str) -> str:
    return name if _SIMPLE_SYMBOL.match(name) else f"|{name}|"


def term_to_smt(t) -> str:
    if t is True:
        return "true"
    if t is False:
        return "false"
    if isinstance(t, str):
        return symbol(t)
    if isinstance(t, int):
        return str(t) if t >= 0 else f"(- {-t})"
    op = _OPS[t[0]]
    return f"({op} {' '.join(term_to_smt(a) for a in t[1:])})"


def decode_set(f: Formula) -> list[str]:
    """Variables reported back by the solver: everything except rank/certificate integers."""
    skip = ("phi_", "psi_")
    names = [v for v in f.bools | f.ints if not v.split(".", 1)[-1].startswith(skip) and not v.startswith(skip)]
    return sorted(names)


def emit_smt(f: Formula, get_values: bool = True) -> str:
    lines = [f"(set-logic {f.logic})", "(set-option :produce-models true)"]
    for v in sorted(f.bools):
        lines.append(f"(declare-fun {symbol(v)} () Bool)")
    for v in sorted(f.ints):
        lines.append(f"(declare-fun {symbol(v)} () Int)")
    for a in f.assertions:
        lines.append(f"(assert {term_to_smt(a)})")
    lines.append("(check-sat)")
    names = decode_set(f) if get_values else []
    if names:
        lines.append(f"(get-value ({' '.join(symbol(v) for v in names)}))")
    return "\n".join(lines) + "\n"


@dataclass
class SolverResult:
    status: str
    assignment: dict = field(default_factory=dict)
    time: float = 0.0
    output: str = ""


def default_solver() -> str:
    env = os.environ.get("PORTHOS_SOLVER")
    if env:
        return env
    if shutil.which("z3"):
        return "z3 {file}"
    return f"{shlex.quote(sys.executable)} -m porthos._cvc5_driver {{file}}"


# ---------------------------------------------------------------------------
# S-expressions


def _sexp_tokens(text: str):
    return re.findall(r'\(|\)|\|[^|]*\||"(?:[^"]|"")*"|[^\s()]+', text)


def parse_sexps(text: str) -> list:
    out: list = []
    stack: list[list] = [out]
    for tok in _sexp_tokens(text):
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if len(stack) == 1:
                raise SolverOutputParseError(f"unbalanced ')' in solver output: {text[:200]!r}")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok[1:-1] if tok.startswith("|") else tok)
    if len(stack) != 1:
        raise SolverOutputParseError(f"unbalanced '(' in solver output: {text[:200]!r}")
    return out


def _value(v):
    if v == "true":
        return True
    if v == "false":
        return False
    if isinstance(v, str):
        return int(v)
    if isinstance(v, list) and len(v) == 2 and v[0] == "-":
        return -_value(v[1])
    raise SolverOutputParseError(f"unsupported value {v!r}")


def parse_output(text: str) -> tuple[str, dict]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    status = None
    rest_start = 0
    for i, ln in enumerate(lines):
        s = ln.strip()
        if s in (SAT, UNSAT, UNKNOWN):
            status = s
            rest_start = i + 1
            break
        if s.startswith("(error") or s.startswith("success"):
            continue
        raise SolverOutputParseError(f"unexpected solver output line: {ln!r}")
    if status is None:
        raise SolverOutputParseError(f"no verdict in solver output: {text[:300]!r}")
    assignment: dict = {}
    if status == SAT:
        rest = "\n".join(lines[rest_start:])
        for sexp in parse_sexps(rest):
            if sexp and sexp[0] == "error":
                raise SolverOutputParseError(f"solver error: {sexp}")
            for pair in sexp:
                if not isinstance(pair, list) or len(pair) != 2:
                    raise SolverOutputParseError(f"malformed model entry {pair!r}")
                assignment[pair[0]] = _value(pair[1])
    return status, assignment


def run_solver(text: str, cmd: str | None = None, timeout: float | None = None) -> SolverResult:
    cmd = cmd or default_solver()
    with tempfile.TemporaryDirectory(prefix="porthos-") as tmp:
        path = os.path.join(tmp, "query.smt2")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        argv = [a.replace("{file}", path) for a in shlex.split(cmd)]
        if not any(path in a for a in argv):
            argv.append(path)
        start = time.monotonic()
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
        except FileNotFoundError as exc:
            raise SolverSpawnError(f"cannot start solver {argv[0]!r}: {exc}") from exc
        except subprocess.TimeoutExpired:
            return SolverResult(UNKNOWN, {}, time.monotonic() - start, "timeout")
        elapsed = time.monotonic() - start
    out = proc.stdout
    if not out.strip():
        raise SolverOutputParseError(f"solver produced no output (exit {proc.returncode}): {proc.stderr.strip()[:300]}")
    status, assignment = parse_output(out)
    return SolverResult(status, assignment, elapsed, out)


def solve(f: Formula, cmd: str | None = None, timeout: float | None = None) -> SolverResult:
    return run_solver(emit_smt(f), cmd, timeout)

"""Command-line interface.

Exit codes: 0 Portable (or reachable for ``reach``), 1 NotPortable (or
unreachable), 2 usage/input error or oracle disagreement, 3 Unknown.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from importlib import resources

from . import __version__, cat, encode, gen, oracle, prog, solve, witness
from .events import NonAcyclicProgram, compile_program

EXIT_PORTABLE, EXIT_NOT_PORTABLE, EXIT_ERROR, EXIT_UNKNOWN = 0, 1, 2, 3

log = logging.getLogger("porthos")


class CliError(Exception):
    pass


def read_program(spec: str) -> prog.Program:
    """A ``.lit`` path, or the name of a bundled litmus program (``sb``, ``iriw.lit`` ...)."""
    if os.path.exists(spec):
        with open(spec, encoding="utf-8") as fh:
            return prog.parse_program(fh.read())
    name = os.path.basename(spec)
    if not name.endswith(".lit"):
        name += ".lit"
    res = resources.files("porthos.litmus").joinpath(name)
    if res.is_file():
        return prog.parse_program(res.read_text(encoding="utf-8"))
    raise CliError(f"no such program file or bundled litmus test: {spec}")


def bundled_programs() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("porthos.litmus").iterdir() if p.name.endswith(".lit"))


def _load_model(spec: str) -> cat.MemoryModel:
    try:
        return cat.load_model(spec)
    except FileNotFoundError:
        raise CliError(f"unknown model {spec!r} (builtin: {', '.join(cat.BUILTIN_MODELS)})") from None


def _prepared(args) -> prog.Program:
    p = read_program(args.program)
    problems = prog.validate(p)
    if problems:
        raise CliError("; ".join(str(d) for d in problems))
    return prog.unroll(p, args.unroll)


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _solver(args) -> str:
    return args.solver or solve.default_solver()


def _describe(w: witness.ExecutionWitness) -> list[str]:
    g = w.graph
    name = {e.eid: f"e{e.eid}:{w.value_label(e.eid)}" for e in g.events}
    lines = [
        "  rf: " + ", ".join(f"{name[a]}->{name[b]}" for a, b in sorted(w.rf)),
        "  co: " + ", ".join(f"{name[a]}->{name[b]}" for a, b in sorted(w.co)
                             if not any((a, c) in w.co and (c, b) in w.co for c in w.executed)),
        "  state: " + ", ".join(f"{k}={v}" for k, v in witness.reach_state(w).items()),
    ]
    if w.violated:
        lines.append("  violated source axioms: " + ", ".join(w.violated))
    if w.cycle:
        lines.append("  cycle: " + ", ".join(f"{name[a]}->{name[b]}" for a, b in w.cycle))
    return lines


# ---------------------------------------------------------------------------
# check


def cmd_check(args) -> int:
    p = _prepared(args)
    m_src, m_tgt = _load_model(args.source), _load_model(args.target)
    g = compile_program(p)
    opts = encode.EncodeOptions(dead=args.dead, dead_strict=args.dead_strict, exact=not args.lean)
    f = encode.encode_portability(g, m_src, m_tgt, opts)
    if args.emit_smt:
        _write(args.emit_smt, solve.emit_smt(f))
    start = time.monotonic()
    res = solve.solve(f, _solver(args), args.timeout)
    elapsed = time.monotonic() - start
    w = None
    if res.status == solve.UNSAT:
        verdict, code = oracle.PORTABLE, EXIT_PORTABLE
    elif res.status == solve.SAT:
        verdict, code = oracle.NOT_PORTABLE, EXIT_NOT_PORTABLE
        w = witness.decode(res, f)
        w.verdict = verdict
        report = witness.validate_witness(w, m_src, m_tgt)
        if not report.ok:
            for problem in report.problems:
                print(f"witness validation: {problem}", file=sys.stderr)
            return EXIT_ERROR
    else:
        verdict, code = "Unknown", EXIT_UNKNOWN
    print(f"{p.name}: {m_src.name} -> {m_tgt.name}: {verdict} "
          f"({len(g.events)} events, {len(f.bools) + len(f.ints)} variables, {elapsed:.2f}s)")
    if w is not None:
        for line in _describe(w):
            print(line)
        if args.dot:
            _write(args.dot, witness.to_dot(w))
        if args.json:
            _write(args.json, witness.to_json(w))

    if args.state and res.status != solve.UNKNOWN:
        st = encode.check_state_refinement(g, m_src, m_tgt, _solver(args), args.timeout, budget=args.budget,
                                           registers=not args.locations_only, opts=opts)
        extra = f" new state {st.new_state}" if st.new_state else ""
        print(f"state portability: {st.verdict} {st.state or ''} after {st.queries} reachability "
              f"quer{'y' if st.queries == 1 else 'ies'}{extra}".rstrip())
        if st.state == encode.UNDECIDED:
            code = EXIT_UNKNOWN

    if args.oracle:
        try:
            o = oracle.portable_bruteforce(g, m_src, m_tgt, args.oracle_limit)
        except oracle.LimitExceeded as exc:
            print(f"oracle: skipped ({exc})", file=sys.stderr)
            return EXIT_ERROR
        agree = code == EXIT_UNKNOWN or o.verdict == verdict
        print(f"oracle: {o.verdict} ({o.checked} candidate executions){'' if agree else ' DISAGREES'}")
        if not agree:
            return EXIT_ERROR
    return code


# ---------------------------------------------------------------------------
# reach


def cmd_reach(args) -> int:
    p = _prepared(args)
    m = _load_model(args.model)
    try:
        pred = prog.parse_pred(args.assertion, any_names=True)
    except prog.ProgramSyntaxError as exc:
        raise CliError(f"--assert: {exc}") from None
    try:
        f = encode.encode_reachability(p, m, pred)
    except KeyError as exc:
        raise CliError(f"--assert: {exc.args[0]}") from None
    if args.emit_smt:
        _write(args.emit_smt, solve.emit_smt(f))
    res = solve.solve(f, _solver(args), args.timeout)
    if res.status == solve.SAT:
        w = witness.decode(res, f)
        print(f"{p.name} under {m.name}: reachable")
        print("  state: " + ", ".join(f"{k}={v}" for k, v in witness.reach_state(w).items()))
        if args.json:
            _write(args.json, witness.to_json(w))
        return EXIT_PORTABLE
    if res.status == solve.UNSAT:
        print(f"{p.name} under {m.name}: unreachable")
        return EXIT_NOT_PORTABLE
    print(f"{p.name} under {m.name}: unknown")
    return EXIT_UNKNOWN


# ---------------------------------------------------------------------------
# oracle


def cmd_oracle(args) -> int:
    p = _prepared(args)
    g = compile_program(p)
    limit = args.limit
    if args.source or args.target:
        if not (args.source and args.target):
            raise CliError("portability needs both -s and -t")
        m_src, m_tgt = _load_model(args.source), _load_model(args.target)
        if args.states:
            o = oracle.state_portable_bruteforce(g, m_src, m_tgt, limit)
            print(f"{p.name}: {m_src.name} -> {m_tgt.name}: {o.verdict}")
            if o.new_state:
                print("  target-only state: " + ", ".join(f"{k}={v}" for k, v in o.new_state.items()))
            return EXIT_PORTABLE if o.verdict == oracle.STATE_PORTABLE else EXIT_NOT_PORTABLE
        o = oracle.portable_bruteforce(g, m_src, m_tgt, limit)
        print(f"{p.name}: {m_src.name} -> {m_tgt.name}: {o.verdict} ({o.checked} candidates)")
        if o.counterexample is not None:
            for line in _describe(o.counterexample):
                print(line)
        return EXIT_PORTABLE if o.verdict == oracle.PORTABLE else EXIT_NOT_PORTABLE
    if args.model:
        execs = oracle.consistent_set(g, _load_model(args.model), limit)
        label = f"{args.model}-consistent"
    else:
        execs = oracle.enumerate_executions(g, limit)
        label = "candidate"
    print(f"{p.name}: {len(execs)} {label} executions")
    if args.states:
        states = sorted({tuple(sorted(witness.reach_state(w).items())) for w in execs})
        print(f"{len(states)} distinct final states")
        for st in states:
            print("  " + ", ".join(f"{k}={v}" for k, v in st))
    else:
        for i, w in enumerate(execs):
            rf = " ".join(f"{a}->{b}" for a, b in sorted(w.rf))
            print(f"  #{i}: rf {rf}")
    return EXIT_PORTABLE


# ---------------------------------------------------------------------------
# gen


def cmd_gen(args) -> int:
    try:
        if args.kind == "forall":
            np = read_program(args.np)
            variables = args.vars.split(",") if args.vars else None
            p = gen.gen_forall(args.psi, np, variables)
        else:
            np = read_program(args.np) if args.np else None
            universal = [v for v in (args.forall or "").split(",") if v]
            existential = [v for v in (args.exists or "").split(",") if v]
            p = gen.gen_state(args.psi, universal, existential, np)
    except gen.FormulaSyntaxError as exc:
        raise CliError(f"--psi: {exc}") from None
    _write(args.output, prog.format_program(p))
    return EXIT_PORTABLE


# ---------------------------------------------------------------------------
# models


def cmd_models(args) -> int:
    if args.action == "list":
        for m in cat.BUILTIN_MODELS:
            print(m)
        return EXIT_PORTABLE
    if not args.name:
        raise CliError("models print needs a model name")
    if args.name in cat.BUILTIN_MODELS:
        sys.stdout.write(cat.model_text(args.name))
    else:
        sys.stdout.write(cat.format_model(_load_model(args.name)))
    return EXIT_PORTABLE


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="porthos", description="Bounded portability checking between memory models.")
    ap.add_argument("--version", action="version", version=f"porthos {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def program_args(sp):
        sp.add_argument("-p", "--program", required=True, help=".lit file or bundled litmus name")
        sp.add_argument("-k", "--unroll", type=int, default=1, help="loop unroll bound (default 1)")

    def solver_args(sp):
        sp.add_argument("--solver", help='solver command template, e.g. "z3 {file}" (default: $PORTHOS_SOLVER)')
        sp.add_argument("--timeout", type=float, help="solver timeout in seconds")
        sp.add_argument("--emit-smt", metavar="F", help="write the SMT-LIB query to F ('-' for stdout)")

    c = sub.add_parser("check", help="portability from a source to a target model")
    program_args(c)
    c.add_argument("-s", "--source", required=True)
    c.add_argument("-t", "--target", required=True)
    c.add_argument("--dead", action="store_true", help="only report executions that are not dead")
    c.add_argument("--dead-strict", action="store_true", help="as --dead, init writes excluded from rf sources")
    c.add_argument("--state", action="store_true", help="also decide state portability by refinement")
    c.add_argument("--budget", type=int, default=16, help="refinement queries for --state")
    c.add_argument("--locations-only", action="store_true", help="--state compares locations, not registers")
    c.add_argument("--lean", action="store_true", help="one-directional relation encoding (faster)")
    c.add_argument("--dot", metavar="F")
    c.add_argument("--json", metavar="F")
    c.add_argument("--oracle", action="store_true", help="cross-check with brute-force enumeration")
    c.add_argument("--oracle-limit", type=int, default=oracle.DEFAULT_LIMIT)
    solver_args(c)
    c.set_defaults(func=cmd_check)

    r = sub.add_parser("reach", help="can some consistent execution end in a state")
    program_args(r)
    r.add_argument("-m", "--model", required=True)
    r.add_argument("--assert", dest="assertion", required=True, help='e.g. "x=1 /\\ r0=0"')
    r.add_argument("--json", metavar="F")
    solver_args(r)
    r.set_defaults(func=cmd_reach)

    o = sub.add_parser("oracle", help="enumerate executions by brute force")
    program_args(o)
    o.add_argument("-m", "--model")
    o.add_argument("-s", "--source")
    o.add_argument("-t", "--target")
    o.add_argument("--states", action="store_true")
    o.add_argument("--limit", type=int, default=oracle.DEFAULT_LIMIT)
    o.set_defaults(func=cmd_oracle)

    g = sub.add_parser("gen", help="emit a reduction program")
    g.add_argument("kind", choices=("forall", "state"))
    g.add_argument("--psi", required=True, help="Boolean formula, e.g. \"x1 | !x2\"")
    g.add_argument("--np", help="non-portable seed program (forall: required; state: default built in)")
    g.add_argument("--vars", help="forall: comma-separated variable order")
    g.add_argument("--forall", help="state: universally quantified variables")
    g.add_argument("--exists", help="state: existentially quantified variables")
    g.add_argument("-o", "--output", default="-")
    g.set_defaults(func=cmd_gen)

    m = sub.add_parser("models", help="list or print builtin models")
    m.add_argument("action", choices=("list", "print"))
    m.add_argument("name", nargs="?")
    m.set_defaults(func=cmd_models)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.command == "gen" and args.kind == "forall" and not args.np:
        ap.error("gen forall needs --np")
    try:
        return args.func(args)
    except (CliError, prog.ProgramSyntaxError, cat.CatError, NonAcyclicProgram, oracle.LimitExceeded,
            encode.HighLevelError, solve.SolverSpawnError, solve.SolverOutputParseError, OSError) as exc:
        print(f"porthos: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

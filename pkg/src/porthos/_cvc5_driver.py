"""Run an SMT-LIB 2 file through the cvc5 Python bindings and print the responses.

Usage: python3 -m porthos._cvc5_driver FILE
"""

import sys


def main(argv=None) -> int:
    import cvc5

    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: python3 -m porthos._cvc5_driver FILE", file=sys.stderr)
        return 2
    solver = cvc5.Solver()
    symbols = cvc5.SymbolManager(solver)
    parser = cvc5.InputParser(solver, symbols)
    parser.setFileInput(cvc5.InputLanguage.SMT_LIB_2_6, argv[0])
    unsat = False
    while True:
        cmd = parser.nextCommand()
        if cmd.isNull():
            break
        if unsat and "get-value" in str(cmd):
            continue
        out = cmd.invoke(solver, symbols)
        if out.strip():
            sys.stdout.write(out if out.endswith("\n") else out + "\n")
            if out.strip() == "unsat":
                unsat = True
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Compare the compiled relation kernel with the pure-Python fallback.

Run with ``python benchmarks/bench_kernel.py``.  Each timing is the best of a
few repetitions, in milliseconds.
"""

from __future__ import annotations

import argparse
import random
import timeit

from porthos import _relkernel_py, cat, oracle
from porthos.cli import read_program

try:
    from porthos import _relkernel
except ImportError:  # extension not built
    _relkernel = None


def random_rel(mod, n: int, density: float, rng: random.Random):
    pairs = [(i, j) for i in range(n) for j in range(n) if rng.random() < density]
    return mod.BitRel.from_pairs(n, pairs)


def bench_ops(mod, n: int, reps: int) -> dict[str, float]:
    rng = random.Random(7)
    a, b = random_rel(mod, n, 0.08, rng), random_rel(mod, n, 0.08, rng)
    ops = {
        "compose": lambda: a.compose(b),
        "closure": lambda: a.closure(),
        "acyclic": lambda: a.acyclic(),
        "inverse": lambda: a.inverse(),
    }
    return {k: 1000 * min(timeit.repeat(f, number=reps, repeat=3)) / reps for k, f in ops.items()}


def bench_oracle(kernel_name: str) -> float:
    """Time a full Power-vs-TSO enumeration of IRIW with the chosen kernel swapped in."""
    import porthos.events as events
    import porthos.oracle as orc

    mod = _relkernel if kernel_name == "cython" else _relkernel_py
    saved = (cat.BitRel, events.BitRel, orc.BitRel)
    cat.BitRel = events.BitRel = orc.BitRel = mod.BitRel
    try:
        p = read_program("iriw")
        src, tgt = cat.builtin_model("tso"), cat.builtin_model("power")
        for m in (src, tgt):
            m.__dict__.pop("compiled", None)
        return 1000 * min(timeit.repeat(lambda: oracle.portable_bruteforce(p, src, tgt), number=1, repeat=3))
    finally:
        cat.BitRel, events.BitRel, orc.BitRel = saved
        for m in (src, tgt):
            m.__dict__.pop("compiled", None)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-n", type=int, default=48, help="events per relation")
    ap.add_argument("--reps", type=int, default=200)
    args = ap.parse_args()
    kernels = [("python", _relkernel_py)] + ([("cython", _relkernel)] if _relkernel else [])
    results = {name: bench_ops(mod, args.n, args.reps) for name, mod in kernels}
    print(f"{'op':<10}" + "".join(f"{name:>12}" for name, _ in kernels) + ("     speedup" if _relkernel else ""))
    for op in results["python"]:
        row = f"{op:<10}" + "".join(f"{results[name][op]:>10.4f}ms" for name, _ in kernels)
        if _relkernel:
            row += f"{results['python'][op] / max(results['cython'][op], 1e-9):>11.1f}x"
        print(row)
    for name, _ in kernels:
        print(f"oracle iriw tso->power [{name}]: {bench_oracle(name):.1f} ms")


if __name__ == "__main__":
    main()

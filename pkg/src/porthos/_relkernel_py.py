"""Pure-Python relation kernel: binary relations over at most 64 events as bit rows."""

from __future__ import annotations

MAX_EVENTS = 64
IMPLEMENTATION = "python"


def _bits(x: int):
    while x:
        low = x & -x
        yield low.bit_length() - 1
        x ^= low


class BitRel:
    __slots__ = ("n", "rows")

    def __init__(self, n: int, rows=None):
        if n > MAX_EVENTS:
            raise ValueError(f"relation kernel supports at most {MAX_EVENTS} events")
        self.n = n
        self.rows = list(rows) if rows is not None else [0] * n

    @staticmethod
    def from_pairs(n: int, pairs) -> "BitRel":
        r = BitRel(n)
        for a, b in pairs:
            r.rows[a] |= 1 << b
        return r

    @staticmethod
    def identity(n: int, mask: int) -> "BitRel":
        r = BitRel(n)
        for i in _bits(mask):
            r.rows[i] = 1 << i
        return r

    @staticmethod
    def cart(n: int, left: int, right: int) -> "BitRel":
        r = BitRel(n)
        for i in _bits(left):
            r.rows[i] = right
        return r

    def copy(self) -> "BitRel":
        return BitRel(self.n, self.rows)

    def pairs(self) -> set[tuple[int, int]]:
        return {(i, j) for i, row in enumerate(self.rows) for j in _bits(row)}

    def count(self) -> int:
        return sum(bin(row).count("1") for row in self.rows)

    def is_empty(self) -> bool:
        return not any(self.rows)

    def union(self, o: "BitRel") -> "BitRel":
        return BitRel(self.n, [a | b for a, b in zip(self.rows, o.rows)])

    def inter(self, o: "BitRel") -> "BitRel":
        return BitRel(self.n, [a & b for a, b in zip(self.rows, o.rows)])

    def diff(self, o: "BitRel") -> "BitRel":
        return BitRel(self.n, [a & ~b for a, b in zip(self.rows, o.rows)])

    def compose(self, o: "BitRel") -> "BitRel":
        orows = o.rows
        out = [0] * self.n
        for i, row in enumerate(self.rows):
            acc = 0
            for j in _bits(row):
                acc |= orows[j]
            out[i] = acc
        return BitRel(self.n, out)

    def inverse(self) -> "BitRel":
        out = [0] * self.n
        for i, row in enumerate(self.rows):
            for j in _bits(row):
                out[j] |= 1 << i
        return BitRel(self.n, out)

    def closure(self) -> "BitRel":
        rows = list(self.rows)
        for k in range(self.n):
            bk = 1 << k
            rk = rows[k]
            if not rk:
                continue
            for i in range(self.n):
                if rows[i] & bk:
                    rows[i] |= rk
        return BitRel(self.n, rows)

    def with_identity(self, mask: int) -> "BitRel":
        out = list(self.rows)
        for i in _bits(mask):
            out[i] |= 1 << i
        return BitRel(self.n, out)

    def restrict(self, mask: int) -> "BitRel":
        return BitRel(self.n, [(row & mask) if (mask >> i) & 1 else 0 for i, row in enumerate(self.rows)])

    def has_diag(self) -> bool:
        return any((row >> i) & 1 for i, row in enumerate(self.rows))

    def diag(self) -> list[int]:
        return [i for i, row in enumerate(self.rows) if (row >> i) & 1]

    def acyclic(self) -> bool:
        return not self.closure().has_diag()

    def __eq__(self, o) -> bool:
        return isinstance(o, BitRel) and self.n == o.n and list(self.rows) == list(o.rows)

    def __hash__(self):
        return hash((self.n, tuple(self.rows)))

    def __repr__(self) -> str:
        return f"BitRel({self.n}, {sorted(self.pairs())})"

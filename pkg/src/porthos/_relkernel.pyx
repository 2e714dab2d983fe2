# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled relation kernel: binary relations over at most 64 events as uint64 bit rows."""

from libc.stdint cimport uint64_t
from libc.string cimport memset, memcpy, memcmp

MAX_EVENTS = 64
IMPLEMENTATION = "cython"

cdef inline int _popcount(uint64_t x):
    cdef int c = 0
    while x:
        x &= x - 1
        c += 1
    return c

cdef inline int _ctz(uint64_t x):
    cdef int i = 0
    while not (x & 1):
        x >>= 1
        i += 1
    return i


cdef class BitRel:
    cdef public int n
    cdef uint64_t r[64]

    def __cinit__(self, int n, rows=None):
        if n > 64 or n < 0:
            raise ValueError("relation kernel supports at most 64 events")
        self.n = n
        memset(self.r, 0, sizeof(self.r))
        if rows is not None:
            for i, v in enumerate(rows):
                self.r[i] = <uint64_t>v

    cdef BitRel _new(self):
        return BitRel.__new__(BitRel, self.n)

    @property
    def rows(self):
        return [self.r[i] for i in range(self.n)]

    @staticmethod
    def from_pairs(int n, pairs):
        cdef BitRel out = BitRel.__new__(BitRel, n)
        for a, b in pairs:
            out.r[<int>a] |= (<uint64_t>1) << <int>b
        return out

    @staticmethod
    def identity(int n, mask):
        cdef BitRel out = BitRel.__new__(BitRel, n)
        cdef uint64_t m = <uint64_t>mask
        cdef int i
        for i in range(n):
            if (m >> i) & 1:
                out.r[i] = (<uint64_t>1) << i
        return out

    @staticmethod
    def cart(int n, left, right):
        cdef BitRel out = BitRel.__new__(BitRel, n)
        cdef uint64_t lm = <uint64_t>left, rm = <uint64_t>right
        cdef int i
        for i in range(n):
            if (lm >> i) & 1:
                out.r[i] = rm
        return out

    def copy(self):
        cdef BitRel out = self._new()
        memcpy(out.r, self.r, sizeof(self.r))
        return out

    def pairs(self):
        cdef set out = set()
        cdef int i, j
        cdef uint64_t row
        for i in range(self.n):
            row = self.r[i]
            while row:
                j = _ctz(row)
                out.add((i, j))
                row &= row - 1
        return out

    def count(self):
        cdef int i, c = 0
        for i in range(self.n):
            c += _popcount(self.r[i])
        return c

    def is_empty(self):
        cdef int i
        for i in range(self.n):
            if self.r[i]:
                return False
        return True

    def union(self, BitRel o):
        cdef BitRel out = self._new()
        cdef int i
        for i in range(self.n):
            out.r[i] = self.r[i] | o.r[i]
        return out

    def inter(self, BitRel o):
        cdef BitRel out = self._new()
        cdef int i
        for i in range(self.n):
            out.r[i] = self.r[i] & o.r[i]
        return out

    def diff(self, BitRel o):
        cdef BitRel out = self._new()
        cdef int i
        for i in range(self.n):
            out.r[i] = self.r[i] & ~o.r[i]
        return out

    def compose(self, BitRel o):
        cdef BitRel out = self._new()
        cdef int i, j
        cdef uint64_t row, acc
        for i in range(self.n):
            row = self.r[i]
            acc = 0
            while row:
                j = _ctz(row)
                acc |= o.r[j]
                row &= row - 1
            out.r[i] = acc
        return out

    def inverse(self):
        cdef BitRel out = self._new()
        cdef int i, j
        cdef uint64_t row
        for i in range(self.n):
            row = self.r[i]
            while row:
                j = _ctz(row)
                out.r[j] |= (<uint64_t>1) << i
                row &= row - 1
        return out

    def closure(self):
        cdef BitRel out = self._new()
        cdef int i, k
        cdef uint64_t bk
        memcpy(out.r, self.r, sizeof(self.r))
        for k in range(self.n):
            if not out.r[k]:
                continue
            bk = (<uint64_t>1) << k
            for i in range(self.n):
                if out.r[i] & bk:
                    out.r[i] |= out.r[k]
        return out

    def with_identity(self, mask):
        cdef BitRel out = self._new()
        cdef uint64_t m = <uint64_t>mask
        cdef int i
        memcpy(out.r, self.r, sizeof(self.r))
        for i in range(self.n):
            if (m >> i) & 1:
                out.r[i] |= (<uint64_t>1) << i
        return out

    def restrict(self, mask):
        cdef BitRel out = self._new()
        cdef uint64_t m = <uint64_t>mask
        cdef int i
        for i in range(self.n):
            if (m >> i) & 1:
                out.r[i] = self.r[i] & m
        return out

    def has_diag(self):
        cdef int i
        for i in range(self.n):
            if (self.r[i] >> i) & 1:
                return True
        return False

    def diag(self):
        return [i for i in range(self.n) if (self.r[i] >> i) & 1]

    def acyclic(self):
        return not self.closure().has_diag()

    def __eq__(self, other):
        if not isinstance(other, BitRel):
            return False
        cdef BitRel o = <BitRel>other
        return self.n == o.n and memcmp(self.r, o.r, sizeof(self.r)) == 0

    def __hash__(self):
        return hash((self.n, tuple(self.rows)))

    def __repr__(self):
        return f"BitRel({self.n}, {sorted(self.pairs())})"

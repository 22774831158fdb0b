"""Definition-level reference implementations used only by the tests.

Everything here works on tuples and nested loops, without the package's
index encoding, so agreement with the library is a genuine cross-check.
"""

from __future__ import annotations

import itertools
from collections import Counter

import numpy as np


def all_vectors(p: int, n: int) -> list[tuple[int, ...]]:
    return [tuple(reversed(t)) for t in itertools.product(range(p), repeat=n)]


def span_set(vectors, p: int, n: int) -> set[tuple[int, ...]]:
    vecs = [tuple(int(c) for c in v) for v in vectors]
    out = {tuple([0] * n)}
    for coeffs in itertools.product(range(p), repeat=len(vecs)):
        out.add(tuple(sum(c * v[i] for c, v in zip(coeffs, vecs)) % p for i in range(n)))
    return out


def perp_set(points: set, p: int, n: int) -> set[tuple[int, ...]]:
    return {x for x in all_vectors(p, n) if all(sum(a * b for a, b in zip(x, s)) % p == 0 for s in points)}


def rank_bruteforce(M, p: int) -> int:
    """``log_p`` of the size of the column span."""
    M = np.asarray(M) % p
    cols = {tuple(int(c) for c in (M @ np.array(x)) % p) for x in all_vectors(p, M.shape[1])}
    return round(np.log(len(cols)) / np.log(p))


def quad_counts(A: list[tuple], p: int, n: int) -> Counter:
    """``#{a1 + a2 - a3 - a4 = y}`` by the quadruple loop."""
    out: Counter = Counter()
    for a, b, c, d in itertools.product(A, repeat=4):
        out[tuple((a[i] + b[i] - c[i] - d[i]) % p for i in range(n))] += 1
    return out


def energy(G1: list[tuple], G2: list[tuple], p: int) -> int:
    total = 0
    for a, b, c, d in itertools.product(G1, G2, G1, G2):
        if all((a[i] - b[i] - c[i] + d[i]) % p == 0 for i in range(len(a))):
            total += 1
    return total


def char_sum(A: list[tuple], xi: tuple, p: int, n: int) -> complex:
    """``E_x 1_A(x) exp(2 pi i xi.x / p)``."""
    s = sum(np.exp(2j * np.pi * (sum(a * b for a, b in zip(xi, x)) % p) / p) for x in A)
    return s / p**n


def phi_support(points: set, word: str, p: int) -> set:
    """Apply the fiber-difference operators to a set of ``(x, y)`` tuples, last letter first."""
    cur = set(points)
    for letter in reversed(word):
        nxt = set()
        for x1, y1 in cur:
            for x2, y2 in cur:
                if letter == "h" and y1 == y2:
                    nxt.add((tuple((a - b) % p for a, b in zip(x1, x2)), y1))
                elif letter == "v" and x1 == x2:
                    nxt.add((x1, tuple((a - b) % p for a, b in zip(y1, y2))))
        cur = nxt
    return cur


def grid_tuples(A) -> set:
    dx = [tuple(v) for v in all_vectors(A.p, A.m)]
    dy = [tuple(v) for v in all_vectors(A.p, A.n)]
    return {(dx[x], dy[y]) for x, y in zip(*np.nonzero(A.mask))}

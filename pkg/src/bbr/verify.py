"""Independent re-check of ``B`` inside ``phi_w(A)`` or ``phi_w^eps(A)``.

Nothing here touches the index-based engines: points are tuples of residues,
tables are dictionaries of Python integers, and each step is a pair loop
over the fibers.  Agreement with the pipeline's certificate is therefore a
cross-check between two implementations.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction

from .formats import DIGITS
from .parallel import ordered_map


@dataclass
class VerifyResult:
    passed: bool
    checked: int
    min_normalized: Fraction | None
    witness: tuple | None
    normalizer: int

    def to_dict(self) -> dict:
        from .pipeline import decimal_floor

        return {
            "pass": self.passed,
            "checked": self.checked,
            "min_normalized_count": decimal_floor(self.min_normalized),
            "witness": None if self.witness is None else [digit_string(v) for v in self.witness],
        }


def digit_string(v) -> str:
    return "".join(DIGITS[c] for c in v)


def _sub(a: tuple, b: tuple, p: int) -> tuple:
    return tuple((u - v) % p for u, v in zip(a, b))


def _step(table: dict, letter: str, p: int) -> dict:
    """One counting step: pair up points sharing the fixed coordinate."""
    groups: dict = defaultdict(list)
    for (x, y), c in table.items():
        groups[y if letter == "h" else x].append(((x if letter == "h" else y), c))

    def fiber(item):
        key, members = item
        acc: dict = defaultdict(int)
        for a, ca in members:
            for b, cb in members:
                acc[_sub(a, b, p)] += ca * cb
        return key, acc

    out: dict = {}
    for key, acc in ordered_map(fiber, sorted(groups.items())):
        for v, c in acc.items():
            out[(v, key) if letter == "h" else (key, v)] = c
    return out


def word_counts(points, word: str, p: int) -> dict:
    """``{(x, y): count}`` of realizations under ``word`` (last letter first)."""
    table = {pt: 1 for pt in points}
    for letter in reversed(word):
        table = _step(table, letter, p)
    return table


def word_normalizer(word: str, p: int, m: int, n: int) -> int:
    total = 1
    for letter in reversed(word):
        total = (p**m if letter == "h" else p**n) * total * total
    return total


def _span(basis, p: int):
    dim, size = len(basis), len(basis[0])
    out = []
    for coeffs in itertools.product(range(p), repeat=dim):
        out.append(tuple(sum(c * v[i] for c, v in zip(coeffs, basis)) % p for i in range(size)))
    return out


def variety_points(B) -> list[tuple]:
    """Members of ``B`` by enumerating ``V x W`` and testing the forms."""
    p = B.p
    V = [tuple(int(c) for c in v) for v in B.V.basis]
    W = [tuple(int(c) for c in v) for v in B.W.basis]
    xs = _span(V, p) if V else [tuple([0] * B.m)]
    ys = _span(W, p) if W else [tuple([0] * B.n)]
    mats = [[[int(c) for c in row] for row in b.matrix] for b in B.forms]
    out = []
    for y in ys:
        for x in xs:
            if all(sum(x[i] * M[i][j] * y[j] for i in range(B.m) for j in range(B.n)) % p == 0 for M in mats):
                out.append((x, y))
    return sorted(set(out))


def verify(B, A, word: str, eps=None) -> VerifyResult:
    """Recount ``phi_word(A)`` from scratch and test every point of ``B``."""
    p, m, n = A.p, A.m, A.n
    if (B.p, B.m, B.n) != (p, m, n):
        raise ValueError("variety and set live in different ambients")
    dx = [tuple(int(c) for c in row) for row in _all_points(p, m)]
    dy = [tuple(int(c) for c in row) for row in _all_points(p, n)]
    xs, ys = A.mask.nonzero()
    points = [(dx[x], dy[y]) for x, y in zip(xs.tolist(), ys.tolist())]
    counts = word_counts(points, word, p)
    N = word_normalizer(word, p, m, n)
    need = None if eps is None else Fraction(eps) * N
    worst = None
    witness = None
    members = variety_points(B)
    for pt in members:
        c = counts.get(pt, 0)
        worst = c if worst is None else min(worst, c)
        bad = c == 0 if need is None else c < need
        if bad and witness is None:
            witness = pt
    return VerifyResult(
        passed=witness is None,
        checked=len(members),
        min_normalized=None if worst is None else Fraction(worst, N),
        witness=witness,
        normalizer=N,
    )


def _all_points(p: int, n: int):
    # little-endian order so position i is the point with index i
    return [tuple(reversed(t)) for t in itertools.product(range(p), repeat=n)]

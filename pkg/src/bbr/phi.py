"""Horizontal/vertical fiber-difference operators and their counted versions.

A grid set lives in ``F_p^m x F_p^n`` (x-side first) and is stored as a
boolean table ``mask[x_index, y_index]``.  ``phi_h`` subtracts inside
horizontal fibers (fixed y), ``phi_v`` inside vertical fibers (fixed x).

A word is applied last letter first: ``phi_w = phi_{w_1} o ... o phi_{w_k}``.

Counting.  One step of ``h`` sends a count table ``c`` to
``c'(x, y) = sum_{x2} c(x + x2, y) c(x2, y)`` (``v`` symmetrically), starting
from the indicator of the set.  On the full grid every point then has the
same count ``N``, obeying ``N' = s * N^2`` where ``s`` is the size of the side
being acted on; ``N`` is the normalizer of the word, equal to
``p^(n(2^k - 1))`` when both sides are ``F_p^n``.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .gf import FieldParams, Subspace, addition_table, add_indices, point_digits, to_index
from .setlab import INT64_SAFE, DenseSet, group_transform

MAX_WORD = 12
BRUTEFORCE_BUDGET = 1 << 26
DIRECT_FLOAT_SIDE = 256


class BudgetExceeded(RuntimeError):
    """An enumeration oracle was asked to do more work than its budget allows."""


@dataclass(frozen=True, eq=False)
class GridSet:
    """Subset of ``F_p^m x F_p^n`` with membership table indexed ``[x, y]``."""

    p: int
    m: int
    n: int
    mask: np.ndarray

    def __post_init__(self):
        FieldParams(self.p, self.m)
        FieldParams(self.p, self.n)
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != (self.p**self.m, self.p**self.n):
            raise ValueError(f"grid table has shape {mask.shape}")
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    # constructors ---------------------------------------------------------

    @classmethod
    def full(cls, p: int, m: int, n: int) -> "GridSet":
        return cls(p, m, n, np.ones((p**m, p**n), dtype=bool))

    @classmethod
    def empty(cls, p: int, m: int, n: int) -> "GridSet":
        return cls(p, m, n, np.zeros((p**m, p**n), dtype=bool))

    @classmethod
    def random(cls, p: int, m: int, n: int, density: float, rng: np.random.Generator) -> "GridSet":
        """Exactly ``round(density * p^(m+n))`` points drawn without replacement."""
        size = p ** (m + n)
        mask = np.zeros(size, dtype=bool)
        mask[rng.choice(size, size=int(round(density * size)), replace=False)] = True
        return cls(p, m, n, mask.reshape(p**m, p**n))

    @classmethod
    def from_index_pairs(cls, pairs, p: int, m: int, n: int) -> "GridSet":
        mask = np.zeros((p**m, p**n), dtype=bool)
        pairs = list(pairs)
        if pairs:
            xs, ys = zip(*pairs)
            mask[list(xs), list(ys)] = True
        return cls(p, m, n, mask)

    @classmethod
    def from_points(cls, points, p: int, m: int, n: int) -> "GridSet":
        """``points`` is an iterable of ``(x_vector, y_vector)`` pairs."""
        return cls.from_index_pairs(
            [(to_index(np.asarray(x).reshape(m), p), to_index(np.asarray(y).reshape(n), p)) for x, y in points],
            p,
            m,
            n,
        )

    @classmethod
    def product(cls, X: DenseSet | Subspace, Y: DenseSet | Subspace) -> "GridSet":
        xm = X.mask() if isinstance(X, Subspace) else X.mask
        ym = Y.mask() if isinstance(Y, Subspace) else Y.mask
        return cls(X.p, X.n, Y.n, np.outer(xm, ym))

    @classmethod
    def from_fibers(cls, fibers: dict, p: int, m: int, n: int) -> "GridSet":
        """Union of ``fiber[y] x {y}`` for horizontal fibers given by y-index."""
        mask = np.zeros((p**m, p**n), dtype=bool)
        for y, fib in fibers.items():
            mask[:, y] = fib.mask() if isinstance(fib, Subspace) else np.asarray(getattr(fib, "mask", fib))
        return cls(p, m, n, mask)

    # queries --------------------------------------------------------------

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    def density(self) -> Fraction:
        return Fraction(self.size, self.mask.size)

    def fiber(self, y: int) -> DenseSet:
        """Horizontal fiber ``A_y = {x : (x, y) in A}``."""
        return DenseSet(self.p, self.m, self.mask[:, y])

    def column(self, x: int) -> DenseSet:
        """Vertical fiber ``{y : (x, y) in A}``."""
        return DenseSet(self.p, self.n, self.mask[x, :])

    def y_projection(self) -> DenseSet:
        return DenseSet(self.p, self.n, self.mask.any(axis=0))

    def x_projection(self) -> DenseSet:
        return DenseSet(self.p, self.m, self.mask.any(axis=1))

    def index_pairs(self) -> list[tuple[int, int]]:
        xs, ys = np.nonzero(self.mask)
        return list(zip(xs.tolist(), ys.tolist()))

    def contains(self, x, y) -> bool:
        xi = x if isinstance(x, (int, np.integer)) else to_index(x, self.p)
        yi = y if isinstance(y, (int, np.integer)) else to_index(y, self.p)
        return bool(self.mask[int(xi), int(yi)])

    def issubset(self, other: "GridSet") -> bool:
        self._same(other)
        return not (self.mask & ~other.mask).any()

    def _same(self, other: "GridSet"):
        if (self.p, self.m, self.n) != (other.p, other.m, other.n):
            raise ValueError("grid sets over different ambients")

    def __eq__(self, other):
        if not isinstance(other, GridSet):
            return NotImplemented
        return (self.p, self.m, self.n) == (other.p, other.m, other.n) and np.array_equal(self.mask, other.mask)

    def __hash__(self):
        return hash((self.p, self.m, self.n, self.mask.tobytes()))


@dataclass(frozen=True)
class Word:
    """A word over ``{h, v}``; ``letters[0]`` is applied last."""

    letters: str

    def __post_init__(self):
        if set(self.letters) - {"h", "v"}:
            raise ValueError(f"word {self.letters!r} has letters outside {{h, v}}")
        if len(self.letters) > MAX_WORD:
            raise ValueError(f"words longer than {MAX_WORD} letters are not supported")

    @classmethod
    def parse(cls, text: "str | Word") -> "Word":
        if isinstance(text, Word):
            return text
        text = text.strip()
        return cls("" if text in ("", "-", "e") else text)

    def __len__(self) -> int:
        return len(self.letters)

    def __str__(self) -> str:
        return self.letters

    def application_order(self) -> str:
        return self.letters[::-1]


DEFAULT_WORD = Word("hvvhvvvhh")


def step_sizes(word: Word, p: int, m: int, n: int) -> list[int]:
    """Acted-side group size for each step, in application order."""
    return [p**m if c == "h" else p**n for c in word.application_order()]


def normalizer(word: Word | str, p: int, m: int, n: int) -> int:
    """Number of realizations of any point under ``phi_w`` on the full grid."""
    N = 1
    for s in step_sizes(Word.parse(word), p, m, n):
        N = s * N * N
    return N


# ---------------------------------------------------------------------------
# support operators


def phi_step(A: GridSet, letter: str) -> GridSet:
    counts = _step_exact(A.mask.astype(np.int64), letter, A.p, A.m, A.n)
    return GridSet(A.p, A.m, A.n, counts > 0)


def phi_word(A: GridSet, w: Word | str) -> GridSet:
    w = Word.parse(w)
    out = A
    for letter in w.application_order():
        out = phi_step(out, letter)
    return out


# ---------------------------------------------------------------------------
# counting


@dataclass(frozen=True, eq=False)
class CountTable:
    """Realization counts of every grid point under a word.

    ``exact`` tables hold integers (int64 or Python ints); ``normalized``
    tables hold ``count / normalizer`` as float64.
    """

    p: int
    m: int
    n: int
    word: Word
    mode: str
    values: np.ndarray
    normalizer: int

    def support(self) -> GridSet:
        return GridSet(self.p, self.m, self.n, self.values > 0)

    def count(self, x: int, y: int) -> int:
        if self.mode != "exact":
            raise ValueError("raw counts only exist in exact mode")
        return int(self.values[x, y])

    def normalized(self, x: int, y: int) -> Fraction | float:
        v = self.values[x, y]
        return Fraction(int(v), self.normalizer) if self.mode == "exact" else float(v)

    def normalized_array(self) -> np.ndarray:
        if self.mode == "exact":
            return np.array([float(Fraction(int(v), self.normalizer)) for v in self.values.ravel()]).reshape(
                self.values.shape
            )
        return self.values

    def min_normalized(self, mask: np.ndarray) -> Fraction | float | None:
        """Smallest normalized value over the points selected by ``mask``."""
        vals = self.values[np.asarray(mask, dtype=bool)]
        if vals.size == 0:
            return None
        if self.mode == "exact":
            return Fraction(int(min(vals.tolist())), self.normalizer)
        return float(vals.min())

    def at_least(self, eps) -> np.ndarray:
        """Boolean table of points whose normalized count is ``>= eps``."""
        if self.mode == "exact":
            e = Fraction(eps)
            thresh = e * self.normalizer
            return np.vectorize(lambda v: int(v) * thresh.denominator >= thresh.numerator, otypes=[bool])(
                self.values
            )
        return self.values >= float(eps) * (1 - 1e-12)


def _step_exact(C: np.ndarray, letter: str, p: int, m: int, n: int) -> np.ndarray:
    """One exact counting step via per-fiber correlation (gather engine)."""
    if letter == "v":
        return _step_exact(C.T, "h", p, n, m).T
    side = p**m
    out = np.zeros_like(C)
    if side <= 4096:
        table = addition_table(p, m)
    idx = np.arange(side, dtype=np.int64)
    other = C.shape[1]
    chunk = max(1, (1 << 22) // max(side * other, 1))
    for start in range(0, side, chunk):
        xs = idx[start : start + chunk]
        shifted = table[xs] if side <= 4096 else add_indices(xs[:, None], idx[None, :], p, m)
        # shifted[i, x2] = x_i + x2 ; gather C[x_i + x2, y] * C[x2, y]
        out[start : start + chunk] = (C[shifted] * C[None, :, :]).sum(axis=1)
    return out


def _step_float_direct(C: np.ndarray, letter: str, p: int, m: int, n: int) -> np.ndarray:
    side = p**m if letter == "h" else p**n
    return _step_exact(C, letter, p, m, n) / side


def _step_float_transform(C: np.ndarray, letter: str, p: int, m: int, n: int) -> np.ndarray:
    axis, dim = (0, m) if letter == "h" else (1, n)
    side = p**dim
    F = group_transform(C, p, dim, axis=axis)
    power = F * np.conj(F) if np.iscomplexobj(F) else F * F
    out = group_transform(power, p, dim, inverse=True, axis=axis) / side / side
    out = np.real(out) if np.iscomplexobj(out) else out
    return np.clip(out, 0.0, None)


def count_table(A: GridSet, w: Word | str, mode: str = "exact", engine: str = "auto") -> CountTable:
    """Counts of every point of ``phi_w(A)``.

    ``mode='exact'`` returns integer counts (Python integers once the
    normalizer outgrows int64).  ``mode='normalized'`` returns
    ``count / normalizer`` in float64, via a direct per-fiber sum for small
    sides or a group transform (``engine='transform'``) for large ones.
    """
    w = Word.parse(w)
    p, m, n = A.p, A.m, A.n
    N = normalizer(w, p, m, n)
    if mode == "exact":
        big = False
        running = 1
        for s in step_sizes(w, p, m, n):
            running = s * running * running
            big = big or running >= INT64_SAFE
        C = A.mask.astype(object) if big else A.mask.astype(np.int64)
        if big:
            C = np.vectorize(int, otypes=[object])(C)
        for letter in w.application_order():
            C = _step_exact(C, letter, p, m, n)
        return CountTable(p, m, n, w, "exact", C, N)
    if mode not in ("normalized", "float"):
        raise ValueError(f"unknown count mode {mode!r}")
    if engine == "auto":
        engine = "direct" if max(p**m, p**n) <= DIRECT_FLOAT_SIDE else "transform"
    step = {"direct": _step_float_direct, "transform": _step_float_transform}[engine]
    C = A.mask.astype(np.float64)
    for letter in w.application_order():
        C = step(C, letter, p, m, n)
    return CountTable(p, m, n, w, "normalized", C, N)


def phi_robust(A: GridSet, w: Word | str, eps, mode: str = "exact") -> GridSet:
    """Points reachable under ``phi_w`` in at least ``eps * normalizer`` ways."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    table = count_table(A, w, mode)
    return GridSet(A.p, A.m, A.n, table.at_least(eps))


def _difference_table(p: int, n: int) -> list[list[int]]:
    """``table[a][b]`` = index of ``a - b``, from the digit expansions."""
    digits = point_digits(p, n).tolist()
    weights = [p**i for i in range(n)]
    return [
        [sum(((u - v) % p) * t for u, v, t in zip(digits[a], digits[b], weights)) for b in range(p**n)]
        for a in range(p**n)
    ]


def phi_bruteforce(A: GridSet, w: Word | str, budget: int = BRUTEFORCE_BUDGET) -> CountTable:
    """Definitional counts: enumerate every realization tree of every point.

    Each level keeps one entry per realization (no merging), so the list at
    the end has exactly ``sum of counts`` entries.
    """
    w = Word.parse(w)
    p, m, n = A.p, A.m, A.n
    k = len(w)
    if p ** ((m + n) * (k + 1)) > budget:
        raise BudgetExceeded(f"p^((m+n)(k+1)) = {p}^{(m + n) * (k + 1)} exceeds budget {budget}")
    subx, suby = _difference_table(p, m), _difference_table(p, n)
    realizations = [(int(x), int(y)) for x, y in zip(*np.nonzero(A.mask))]
    for letter in w.application_order():
        groups: dict[int, list[int]] = defaultdict(list)
        for x, y in realizations:
            if letter == "h":
                groups[y].append(x)
            else:
                groups[x].append(y)
        nxt: list[tuple[int, int]] = []
        for key, members in groups.items():
            if letter == "h":
                nxt.extend((subx[a][b], key) for a in members for b in members)
            else:
                nxt.extend((key, suby[a][b]) for a in members for b in members)
            if len(nxt) > budget:
                raise BudgetExceeded("realization enumeration exceeded its budget")
        realizations = nxt
    tally = Counter(realizations)
    values = np.zeros((p**m, p**n), dtype=object)
    values[...] = 0
    for (x, y), c in tally.items():
        values[x, y] = c
    return CountTable(p, m, n, w, "exact", values, normalizer(w, p, m, n))

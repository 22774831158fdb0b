"""Dense subsets of F_p^n: densities, exact convolutions, Fourier side, energy.

Two arithmetic modes run through this module.  ``exact`` uses direct
convolution with int64 (promoted to Python integers when a bound says int64
could overflow); ``float`` uses normalized float64 values and transforms
(Walsh-Hadamard for p = 2, a per-coordinate DFT otherwise).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .gf import FieldParams, Subspace, add_indices, negation_table, point_digits, to_index

INT64_SAFE = 1 << 62
EXACT_DIRECT_LIMIT = 1 << 26


@dataclass(frozen=True, eq=False)
class DenseSet:
    """Subset of F_p^n given by its membership table (index order)."""

    p: int
    n: int
    mask: np.ndarray

    def __post_init__(self):
        FieldParams(self.p, self.n)
        mask = np.asarray(self.mask, dtype=bool).reshape(-1)
        if mask.shape != (self.p**self.n,):
            raise ValueError("membership table has the wrong length")
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_indices(cls, indices, p: int, n: int) -> "DenseSet":
        mask = np.zeros(p**n, dtype=bool)
        mask[np.asarray(list(indices), dtype=np.int64)] = True
        return cls(p, n, mask)

    @classmethod
    def from_points(cls, points, p: int, n: int) -> "DenseSet":
        pts = np.asarray(points, dtype=np.int64).reshape(-1, n)
        return cls.from_indices(to_index(pts, p) if len(pts) else [], p, n)

    @classmethod
    def from_subspace(cls, S: Subspace) -> "DenseSet":
        return cls(S.p, S.n, S.mask())

    @classmethod
    def full(cls, p: int, n: int) -> "DenseSet":
        return cls(p, n, np.ones(p**n, dtype=bool))

    @classmethod
    def empty(cls, p: int, n: int) -> "DenseSet":
        return cls(p, n, np.zeros(p**n, dtype=bool))

    @classmethod
    def random(cls, p: int, n: int, density: float, rng: np.random.Generator) -> "DenseSet":
        """Exactly ``round(density * p^n)`` points drawn without replacement."""
        size = p**n
        k = int(round(density * size))
        return cls.from_indices(rng.choice(size, size=k, replace=False), p, n)

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    def __len__(self) -> int:
        return self.size

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def points(self) -> np.ndarray:
        return point_digits(self.p, self.n)[self.indices()]

    def contains(self, v) -> bool:
        idx = v if isinstance(v, (int, np.integer)) else to_index(v, self.p)
        return bool(self.mask[int(idx)])

    def negate(self) -> "DenseSet":
        return DenseSet(self.p, self.n, self.mask[negation_table(self.p, self.n)])

    def _same(self, other: "DenseSet"):
        if (self.p, self.n) != (other.p, other.n):
            raise ValueError("sets live in different ambients")

    def __or__(self, other: "DenseSet") -> "DenseSet":
        self._same(other)
        return DenseSet(self.p, self.n, self.mask | other.mask)

    def __and__(self, other: "DenseSet") -> "DenseSet":
        self._same(other)
        return DenseSet(self.p, self.n, self.mask & other.mask)

    def complement(self) -> "DenseSet":
        return DenseSet(self.p, self.n, ~self.mask)

    def __eq__(self, other):
        if not isinstance(other, DenseSet):
            return NotImplemented
        return (self.p, self.n) == (other.p, other.n) and np.array_equal(self.mask, other.mask)

    def __hash__(self):
        return hash((self.p, self.n, self.mask.tobytes()))

    def indicator(self) -> np.ndarray:
        return self.mask.astype(np.int64)


def density(A: DenseSet) -> Fraction:
    return Fraction(A.size, A.p**A.n)


# ---------------------------------------------------------------------------
# representation tables and convolution


@dataclass(frozen=True, eq=False)
class RepTable:
    """Non-negative counts on F_p^n (exact) or normalized floats (float mode)."""

    p: int
    n: int
    counts: np.ndarray

    @property
    def exact(self) -> bool:
        return self.counts.dtype != np.float64

    def total(self):
        return sum(int(c) for c in self.counts) if self.exact else float(self.counts.sum())

    def support(self) -> DenseSet:
        return DenseSet(self.p, self.n, self.counts > 0)

    def __getitem__(self, idx):
        c = self.counts[idx]
        return int(c) if self.exact and np.ndim(c) == 0 else c

    @classmethod
    def indicator(cls, A: DenseSet) -> "RepTable":
        return cls(A.p, A.n, A.indicator())

    @classmethod
    def delta(cls, p: int, n: int) -> "RepTable":
        c = np.zeros(p**n, dtype=np.int64)
        c[0] = 1
        return cls(p, n, c)


def reflect(f: RepTable) -> RepTable:
    """``x -> f(-x)``."""
    return RepTable(f.p, f.n, f.counts[negation_table(f.p, f.n)])


def _int_bound(values: np.ndarray) -> int:
    if values.size == 0:
        return 0
    return int(max(values.max(), 0)) if values.dtype != object else max(int(v) for v in values)


def convolve_counts(f: RepTable, g: RepTable, mode: str = "exact") -> RepTable:
    """``out(x) = sum_t f(t) g(x - t)``.

    ``exact`` is a direct sum over the support of ``f``; ``float`` goes through
    the group transform and returns float64 values.
    """
    if (f.p, f.n) != (g.p, g.n):
        raise ValueError("convolution of tables over different ambients")
    if mode == "float":
        return RepTable(f.p, f.n, _convolve_transform(f.counts.astype(float), g.counts.astype(float), f.p, f.n))
    if mode != "exact":
        raise ValueError(f"unknown arithmetic mode {mode!r}")
    p, n = f.p, f.n
    size = p**n
    support = np.flatnonzero(f.counts)
    fvals = f.counts[support]
    bound = _int_bound(f.counts) * _int_bound(g.counts) * max(len(support), 1)
    use_object = bound >= INT64_SAFE or f.counts.dtype == object or g.counts.dtype == object
    if len(support) * size > EXACT_DIRECT_LIMIT * 4:
        raise OverflowError("exact direct convolution beyond the size budget; use mode='float'")
    gvals = g.counts.astype(object) if use_object else g.counts.astype(np.int64)
    fvals = fvals.astype(object) if use_object else fvals.astype(np.int64)
    out = np.zeros(size, dtype=object if use_object else np.int64)
    if len(support) == 0:
        return RepTable(p, n, out)
    chunk = max(1, EXACT_DIRECT_LIMIT // (max(len(support), 1) * max(n, 1) * 8))
    xs = np.arange(size, dtype=np.int64)
    for start in range(0, size, chunk):
        x = xs[start : start + chunk]
        diff = add_indices(x[:, None], support[None, :], p, n, sign=-1)
        out[start : start + chunk] = (gvals[diff] * fvals[None, :]).sum(axis=1)
    return RepTable(p, n, out)


def group_transform(values: np.ndarray, p: int, n: int, inverse: bool = False, axis: int = 0) -> np.ndarray:
    """Unnormalized character transform along ``axis`` (length p^n).

    Forward: ``F(xi) = sum_x f(x) e^{-2 pi i xi.x / p}``; for p = 2 this is the
    Walsh-Hadamard transform and stays real (integer-valued for integer input).
    """
    a = np.moveaxis(np.asarray(values), axis, 0)
    rest = a.shape[1:]
    if p == 2:
        out = np.array(a, dtype=np.float64 if a.dtype.kind == "f" else a.dtype, order="C")
        out = out.reshape((2**n, -1))
        h = 1
        while h < 2**n:
            view = out.reshape((-1, 2, h, out.shape[-1]))
            top = view[:, 0].copy()
            view[:, 0] += view[:, 1]
            view[:, 1] = top - view[:, 1]
            h *= 2
        out = out.reshape((2**n,) + rest)
    else:
        shaped = a.reshape((p,) * n + rest, order="F") if n else a.reshape(rest)
        axes = tuple(range(n))
        if n == 0:
            out = shaped.astype(complex)
        elif inverse:
            out = np.fft.ifftn(shaped, axes=axes) * p**n
        else:
            out = np.fft.fftn(shaped, axes=axes)
        out = out.reshape((p**n,) + rest, order="F")
    return np.moveaxis(out, 0, axis)


def _convolve_transform(f: np.ndarray, g: np.ndarray, p: int, n: int) -> np.ndarray:
    size = p**n
    F = group_transform(f, p, n)
    G = group_transform(g, p, n)
    out = group_transform(F * G, p, n, inverse=True) / size
    out = np.real(out) if np.iscomplexobj(out) else out
    return np.where(np.abs(out) < 1e-9 * max(1.0, float(np.abs(out).max(initial=0.0))), 0.0, out)


def diff_rep_counts(A: DenseSet, mode: str = "exact") -> RepTable:
    """``counts(y) = #{(a1,a2,a3,a4) in A^4 : a1 + a2 - a3 - a4 = y}``."""
    one = RepTable.indicator(A)
    pair_sums = convolve_counts(one, one, mode)
    if mode == "float":
        return convolve_counts(pair_sums, reflect(pair_sums), "float")
    return convolve_counts(pair_sums, reflect(pair_sums), "exact")


# ---------------------------------------------------------------------------
# Fourier side


@dataclass(frozen=True, eq=False)
class FreqTable:
    """Fourier coefficients ``f_hat(xi) = E_x 1_A(x) chi_xi(x)``.

    For p = 2 the exact integer sums ``sums = 2^n f_hat`` are kept alongside.
    """

    p: int
    n: int
    values: np.ndarray
    sums: np.ndarray | None = None

    def magnitude_squared(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def exact_value(self, xi: int) -> Fraction:
        if self.sums is None:
            raise ValueError("exact coefficients are only kept for p = 2")
        return Fraction(int(self.sums[xi]), self.p**self.n)

    def parseval_sum(self):
        """``sum_xi |f_hat(xi)|^2``, exact for p = 2."""
        if self.sums is not None:
            return Fraction(int((self.sums.astype(object) ** 2).sum()), self.p ** (2 * self.n))
        return float(self.magnitude_squared().sum())


def fourier(A: DenseSet) -> FreqTable:
    p, n = A.p, A.n
    size = p**n
    if p == 2:
        sums = group_transform(A.indicator(), 2, n)
        return FreqTable(p, n, sums / size, sums)
    # chi_xi(x) = exp(2 pi i xi.x/p): the inverse transform carries that sign
    vals = group_transform(A.indicator().astype(float), p, n, inverse=True) / size
    return FreqTable(p, n, vals)


def _as_fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def spectrum(A: DenseSet, rho=None, *, rho_squared=None, table: FreqTable | None = None) -> np.ndarray:
    """Indices of nonzero characters with ``|f_hat(xi)| >= rho * alpha``.

    ``rho_squared`` may be given instead of ``rho`` so that irrational
    thresholds such as ``rho = sqrt(alpha/2)`` stay exact.
    """
    if (rho is None) == (rho_squared is None):
        raise ValueError("give exactly one of rho, rho_squared")
    r2 = _as_fraction(rho) ** 2 if rho is not None else _as_fraction(rho_squared)
    if (rho is not None and rho <= 0) or r2 <= 0:
        raise ValueError("rho must be positive")
    size_a = A.size
    if size_a == 0:
        raise ValueError("spectrum of the empty set")
    ft = table if table is not None else fourier(A)
    if ft.sums is not None:
        s2 = ft.sums.astype(object) ** 2
        keep = np.array([v * r2.denominator >= r2.numerator * size_a**2 for v in s2], dtype=bool)
    else:
        # |sum_x 1_A chi|^2 >= rho^2 |A|^2, with a relative margin that only enlarges the set
        s2 = ft.magnitude_squared() * (A.p**A.n) ** 2
        keep = s2 >= float(r2) * size_a**2 * (1 - 1e-9)
    keep[0] = False
    peaks = np.flatnonzero(keep)
    # Parseval: |peaks| rho^2 alpha <= 1
    assert len(peaks) * r2 * size_a <= A.p**A.n, "spectrum exceeds the Parseval bound"
    return peaks


def additive_energy(G1: DenseSet, G2: DenseSet) -> int:
    """``#{(a,b,c,d) : a - b = c - d, a,c in G1, b,d in G2}``."""
    G1._same(G2)
    diffs = convolve_counts(RepTable.indicator(G1), reflect(RepTable.indicator(G2)))
    energy = sum(int(c) ** 2 for c in diffs.counts)
    return energy


def energy_cauchy_schwarz_holds(G1: DenseSet, G2: DenseSet) -> bool:
    """``E(G1,G2)^2 <= E(G1,G1) E(G2,G2)``."""
    return additive_energy(G1, G2) ** 2 <= additive_energy(G1, G1) * additive_energy(G2, G2)

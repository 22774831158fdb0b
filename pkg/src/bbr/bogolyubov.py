"""Subspaces inside ``2A - 2A`` with representation-count certificates.

The subspace is the annihilator of the large spectrum of ``A``.  With
``rho^2 = alpha/2`` every ``y`` in it has

    #{a1 + a2 - a3 - a4 = y} / p^(3n) = sum_xi |f_hat(xi)|^4 chi_xi(y)
                                      > alpha^4 - rho^2 alpha^3 = alpha^4 / 2,

since characters in the spectrum contribute at least ``alpha^4`` (the trivial
one alone does) and the rest at most ``max |f_hat|^2 * alpha``.  The
codimension is at most the spectrum size, at most ``2 / alpha^2`` by
Parseval.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .gf import Subspace, add_indices, point_digits, to_index
from .setlab import DenseSet, RepTable, density, diff_rep_counts, fourier, spectrum

ORACLE_NAME = "spectral-bogolyubov"
EXHAUSTIVE_PAIRS = 1 << 20


class RepresentationNotFound(LookupError):
    pass


@dataclass(frozen=True)
class BogolyubovCertificate:
    """Evidence that ``V`` sits inside ``2A - 2A`` with many representations.

    ``counts`` lists the exact number of representations of every element of
    ``V`` (in ``V.indices()`` order).
    """

    oracle: str
    alpha: Fraction
    rho_squared: Fraction
    spectrum_size: int
    codim: int
    codim_bound: Fraction
    counts: tuple[int, ...]
    min_count: int
    min_normalized: Fraction
    guaranteed_floor: Fraction
    passed: bool

    def to_dict(self) -> dict:
        return {
            "oracle": self.oracle,
            "alpha": str(self.alpha),
            "rho_squared": str(self.rho_squared),
            "spectrum_size": self.spectrum_size,
            "codim": self.codim,
            "codim_bound": str(self.codim_bound),
            "min_count": self.min_count,
            "min_normalized": str(self.min_normalized),
            "guaranteed_floor": str(self.guaranteed_floor),
            "pass": self.passed,
        }


def bogolyubov_subspace(A: DenseSet, rho=None, counts: RepTable | None = None) -> tuple[Subspace, BogolyubovCertificate]:
    """Annihilator of ``Spec_rho(A)``, default ``rho = sqrt(alpha/2)``.

    The certificate is checked exactly against ``diff_rep_counts(A)``; with
    the default threshold it asserts ``count(y) >= (alpha^4/2) p^(3n)`` on all
    of ``V``.
    """
    if A.size == 0:
        raise ValueError("bogolyubov_subspace needs a nonempty set")
    p, n = A.p, A.n
    alpha = density(A)
    rho_sq = alpha / 2 if rho is None else Fraction(rho) ** 2
    peaks = spectrum(A, rho_squared=rho_sq, table=fourier(A))
    chars = point_digits(p, n)[peaks]
    V = Subspace.span(chars, p, n).annihilator() if len(peaks) else Subspace.full(p, n)
    if counts is None:
        counts = diff_rep_counts(A)
    members = V.indices()
    vals = tuple(int(counts.counts[i]) for i in members)
    min_count = min(vals)
    scale = p ** (3 * n)
    floor = alpha**3 * (alpha - rho_sq)
    min_norm = Fraction(min_count, scale)
    passed = min_count > 0 and (floor <= 0 or min_norm >= floor)
    cert = BogolyubovCertificate(
        oracle=ORACLE_NAME,
        alpha=alpha,
        rho_squared=rho_sq,
        spectrum_size=len(peaks),
        codim=V.codim,
        codim_bound=1 / (rho_sq * alpha),
        counts=vals,
        min_count=min_count,
        min_normalized=min_norm,
        guaranteed_floor=max(floor, Fraction(0)),
        passed=passed,
    )
    assert passed, "spectral certificate failed: V is not inside 2A-2A with the promised counts"
    assert V.codim <= cert.codim_bound
    return V, cert


def robust_certificate(A: DenseSet, V: Subspace, counts: RepTable | None = None) -> Fraction:
    """``min_{y in V} #{a1 + a2 - a3 - a4 = y} / p^(3n)``."""
    if counts is None:
        counts = diff_rep_counts(A)
    members = V.indices()
    vals = [int(counts.counts[i]) for i in members]
    worst = min(vals)
    if worst == 0:
        bad = int(members[vals.index(0)])
        raise ValueError(f"point with index {bad} of V has no representation; V is not inside 2A-2A")
    return Fraction(worst, A.p ** (3 * A.n))


def max_subspace_bruteforce(D: DenseSet, budget: int = 256) -> Subspace:
    """A largest subspace contained in ``D``; ties go to the smallest echelon basis."""
    p, n = D.p, D.n
    if p**n > budget:
        raise ValueError(f"p^n = {p**n} exceeds the brute-force budget {budget}")
    if not D.mask[0]:
        raise ValueError("D does not contain 0, so it contains no subspace")
    digits = point_digits(p, n)
    mask = D.mask
    seen: set[bytes] = set()
    best: list[Subspace] = [Subspace.zero(p, n)]

    def close(members: np.ndarray, v: int) -> np.ndarray | None:
        # members: bool table of a subspace; returns the table of its span with v, if inside D
        cur = np.flatnonzero(members)
        new = members.copy()
        for c in range(1, p):
            shifted = add_indices(cur, np.full_like(cur, to_index((c * digits[v]) % p, p)), p, n)
            if not mask[shifted].all():
                return None
            new[shifted] = True
        return new

    def search(members: np.ndarray, dim: int, start: int):
        key = members.tobytes()
        if key in seen:
            return
        seen.add(key)
        if dim > best[0].dim:
            best[0] = Subspace.span(digits[np.flatnonzero(members)], p, n)
        elif dim == best[0].dim:
            cand = Subspace.span(digits[np.flatnonzero(members)], p, n)
            if _basis_key(cand) < _basis_key(best[0]):
                best[0] = cand
        for v in range(start, p**n):
            if mask[v] and not members[v]:
                grown = close(members, v)
                if grown is not None:
                    search(grown, dim + 1, v + 1)

    start = np.zeros(p**n, dtype=bool)
    start[0] = True
    search(start, 0, 1)
    return best[0]


def _basis_key(S: Subspace) -> tuple:
    return tuple(S.basis.reshape(-1).tolist())


def find_representation(y, S: DenseSet, seed: int = 0, budget: int | None = None) -> tuple[int, int, int, int]:
    """Indices ``(y1, y2, y3, y4)`` of elements of ``S`` with ``y = y1 + y2 - y3 - y4``.

    Seeded sampling of ``(y1, y2, y3)`` first (``64 / alpha^3`` draws by
    default), then an exhaustive pass when ``p^(2n) <= 2^20``.
    """
    p, n = S.p, S.n
    yi = int(y) if isinstance(y, (int, np.integer)) else to_index(y, p)
    members = S.indices()
    if len(members) == 0:
        raise RepresentationNotFound("S is empty")
    if yi == 0:
        s = int(members[0])
        return (s, s, s, s)
    alpha = density(S)
    draws = int(64 / alpha**3) if budget is None else budget
    rng = np.random.default_rng(seed)
    batch = 4096
    done = 0
    while done < draws:
        size = min(batch, draws - done)
        t = members[rng.integers(0, len(members), size=(size, 3))]
        y4 = add_indices(add_indices(t[:, 0], t[:, 1], p, n), add_indices(t[:, 2], np.full(size, yi), p, n), p, n, -1)
        ok = np.flatnonzero(S.mask[y4])
        if ok.size:
            j = int(ok[0])
            return (int(t[j, 0]), int(t[j, 1]), int(t[j, 2]), int(y4[j]))
        done += size
    if p ** (2 * n) > EXHAUSTIVE_PAIRS:
        raise RepresentationNotFound(f"no representation of {yi} found in {draws} draws")
    # y1 + y2 - y = y3 + y4: scan y1, y2 in S and look for a split of the target
    for a in members:
        targets = add_indices(add_indices(np.full(len(members), a), members, p, n), np.full(len(members), yi), p, n, -1)
        for b, tgt in zip(members, targets):
            y4s = add_indices(np.full(len(members), tgt), members, p, n, -1)
            hit = np.flatnonzero(S.mask[y4s])
            if hit.size:
                c = int(members[hit[0]])
                return (int(a), int(b), c, int(y4s[hit[0]]))
    raise RepresentationNotFound(f"{yi} is not in 2S - 2S")

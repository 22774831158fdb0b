"""Affine fits to noisy functions and the affine-map discovery loop.

``affine_fit_exhaustive`` is the optimal-agreement oracle for tiny shapes;
``affine_fit_heuristic`` is the majority-vote workhorse.  ``intersect_search``
grows a family of affine maps ``L`` with ``L(x) in U_x`` at new points.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .gf import AffineMap, Subspace, add_indices, point_digits, rank

EXHAUSTIVE_BUDGET = 1 << 22
DEFAULT_TRIALS = 8
DEFAULT_RETRIES = 32
PADDING_DIGITS = 8


class BudgetExceeded(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FunctionTable:
    """``f: F_p^n -> F_p^m`` as a ``(p^n, m)`` digit table, optionally restricted to ``Z``."""

    p: int
    n: int
    m: int
    values: np.ndarray
    Z: np.ndarray | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.int64).reshape(self.p**self.n, self.m) % self.p
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.Z is not None:
            z = np.asarray(self.Z, dtype=bool).reshape(self.p**self.n).copy()
            z.setflags(write=False)
            object.__setattr__(self, "Z", z)

    @classmethod
    def from_map(cls, L: AffineMap) -> "FunctionTable":
        return cls(L.p, L.n, L.m, L.apply(point_digits(L.p, L.n)))

    @property
    def domain(self) -> np.ndarray:
        """Indices of the points where agreement is measured."""
        if self.Z is None:
            return np.arange(self.p**self.n)
        return np.flatnonzero(self.Z)

    def restrict(self, Z) -> "FunctionTable":
        return FunctionTable(self.p, self.n, self.m, self.values, Z)

    def agreement(self, L: AffineMap) -> Fraction:
        dom = self.domain
        if dom.size == 0:
            return Fraction(0)
        pred = L.apply(point_digits(self.p, self.n)[dom])
        hits = int((pred == self.values[dom]).all(axis=1).sum())
        return Fraction(hits, dom.size)


class FiberedSubspaces:
    """A subspace ``U_x`` of F^m for every point ``x`` of F^n."""

    def __init__(self, spaces, p: int, n: int, m: int):
        spaces = tuple(spaces)
        if len(spaces) != p**n:
            raise ValueError(f"need {p**n} fibers, got {len(spaces)}")
        for U in spaces:
            if (U.p, U.n) != (p, m):
                raise ValueError("fiber subspaces must live in F_p^m")
        self.spaces = spaces
        self.p, self.n, self.m = p, n, m
        self._crossings: dict[tuple[int, int, int], Subspace] = {}

    @classmethod
    def constant(cls, U: Subspace, n: int) -> "FiberedSubspaces":
        return cls([U] * U.p**n, U.p, n, U.n)

    @classmethod
    def image_of(cls, L: AffineMap) -> "FiberedSubspaces":
        """``U_x = span{L(x)}``."""
        pts = L.apply(point_digits(L.p, L.n))
        return cls([Subspace.span(v[None], L.p, L.m) for v in pts], L.p, L.n, L.m)

    def __getitem__(self, x: int) -> Subspace:
        return self.spaces[x]

    def __len__(self) -> int:
        return len(self.spaces)

    @property
    def d(self) -> int:
        return max(U.dim for U in self.spaces)

    def crossing(self, y: int, z: int, w: int) -> Subspace:
        """``(U_z + U_{y+z}) & (U_w + U_{y+w})``, cached per triple."""
        key = (y, z, w)
        hit = self._crossings.get(key)
        if hit is None:
            yz = int(add_indices(y, z, self.p, self.n))
            yw = int(add_indices(y, w, self.p, self.n))
            hit = (self.spaces[z] + self.spaces[yz]) & (self.spaces[w] + self.spaces[yw])
            self._crossings[key] = hit
        return hit


class FamilyState:
    """Discovered maps plus, per point, the maps that contributed a new value there.

    Map ``i`` is a member at ``x`` when ``L_i(x)`` lies in ``U_x`` but not in
    the span of the earlier members' values at ``x``; so members at ``x`` are
    independent and at most ``dim U_x`` of them exist.
    """

    def __init__(self, U: FiberedSubspaces):
        self.U = U
        self.maps: list[AffineMap] = []
        self.members: list[list[int]] = [[] for _ in range(len(U))]
        self.spans: list[Subspace] = [Subspace.zero(U.p, U.m) for _ in range(len(U))]
        self.log: list[dict] = []

    @property
    def t(self) -> int:
        return len(self.maps)

    def fresh_mask(self, L: AffineMap) -> np.ndarray:
        """Points where ``L(x) in U_x`` and ``L(x)`` is outside the current span."""
        vals = L.apply(point_digits(self.U.p, self.U.n))
        return np.array(
            [self.U[x].contains(v) and not self.spans[x].contains(v) for x, v in enumerate(vals)], dtype=bool
        )

    def add(self, L: AffineMap) -> int:
        """Record ``L`` and return the number of points whose span grew."""
        fresh = self.fresh_mask(L)
        i = len(self.maps)
        self.maps.append(L)
        vals = L.apply(point_digits(self.U.p, self.U.n))
        for x in np.flatnonzero(fresh):
            self.members[x].append(i)
            self.spans[x] = self.spans[x].add_vectors(vals[x])
        return int(fresh.sum())

    def covered(self, x: int) -> bool:
        return self.spans[x] == self.U[x]


# ---------------------------------------------------------------------------
# affine fits


def _row_table(p: int, n: int) -> np.ndarray:
    """``vals[r, z]`` = value at point ``z`` of the row functional with index ``r``.

    Row ``r`` has digits ``(a_1..a_n, b)`` and computes ``a.z + b``.
    """
    rows = point_digits(p, n + 1)
    pts = point_digits(p, n)
    return (rows[:, :n] @ pts.T + rows[:, n : n + 1]) % p


def _row_to_map_parts(r: int, p: int, n: int) -> tuple[np.ndarray, int]:
    dig = point_digits(p, n + 1)[r]
    return dig[:n], int(dig[n])


def affine_fit_exhaustive(f: FunctionTable, budget: int = EXHAUSTIVE_BUDGET) -> tuple[AffineMap, Fraction]:
    """Affine map with the most agreements on ``Z``.

    Branch and bound over output coordinates; ties go to the
    lexicographically smallest tuple of row indices.
    """
    p, n, m = f.p, f.n, f.m
    if p ** (m * (n + 1)) > budget:
        raise BudgetExceeded(f"p^(m(n+1)) = {p ** (m * (n + 1))} exceeds {budget}")
    dom = f.domain
    if dom.size == 0:
        return AffineMap(np.zeros((m, n), dtype=np.int64), p), Fraction(0)
    vals = _row_table(p, n)[:, dom]
    # hits[i][r, j]: row r reproduces coordinate i of f at the j-th domain point
    hits = [vals == f.values[dom, i][None, :] for i in range(m)]
    best = [-1, None]
    chosen = [0] * m

    def search(i: int, alive: np.ndarray):
        if i == m:
            score = int(alive.sum())
            if score > best[0]:
                best[0], best[1] = score, tuple(chosen)
            return
        scores = (hits[i] & alive[None, :]).sum(axis=1)
        for r in np.flatnonzero(scores > best[0]):
            # scores only shrink, so a row that cannot beat the incumbent is skipped
            if scores[r] <= best[0]:
                continue
            chosen[i] = int(r)
            search(i + 1, alive & hits[i][r])

    search(0, np.ones(dom.size, dtype=bool))
    if best[1] is None:
        # every completion scores 0: fall back to the zero map
        best[1] = (0,) * m
        best[0] = 0
    rows = [_row_to_map_parts(r, p, n) for r in best[1]]
    M = np.array([a for a, _ in rows], dtype=np.int64).reshape(m, n)
    b = np.array([c for _, c in rows], dtype=np.int64)
    return AffineMap(M, p, b), Fraction(best[0], dom.size)


def _plurality(rows: np.ndarray) -> np.ndarray:
    """Most common row; ties go to the lexicographically smallest."""
    uniq, counts = np.unique(rows, axis=0, return_counts=True)
    return uniq[int(np.argmax(counts))]


def _random_invertible(p: int, n: int, rng: np.random.Generator) -> np.ndarray:
    while True:
        B = rng.integers(0, p, size=(n, n))
        if rank(B, p) == n:
            return B


def _inverse_mod(B: np.ndarray, p: int) -> np.ndarray:
    n = B.shape[0]
    aug = np.concatenate([B % p, np.eye(n, dtype=np.int64)], axis=1)
    for col in range(n):
        piv = col + int(np.flatnonzero(aug[col:, col] % p)[0])
        aug[[col, piv]] = aug[[piv, col]]
        aug[col] = (aug[col] * pow(int(aug[col, col]), -1, p)) % p
        for r in range(n):
            if r != col and aug[r, col]:
                aug[r] = (aug[r] - aug[r, col] * aug[col]) % p
    return aug[:, n:]


def _vote_map(f: FunctionTable, B: np.ndarray) -> AffineMap:
    """Matrix columns by plurality over ``f(z + b_j) - f(z)`` for ``z, z + b_j`` in ``Z``, then the offset."""
    p, n, m = f.p, f.n, f.m
    pts = point_digits(p, n)
    place = p ** np.arange(n, dtype=np.int64)
    inZ = np.ones(p**n, dtype=bool) if f.Z is None else f.Z
    dom = np.flatnonzero(inZ)
    cols = []
    for j in range(n):
        shifted = ((pts[dom] + B[:, j]) % p) @ place
        ok = inZ[shifted]
        if ok.any():
            diffs = (f.values[shifted[ok]] - f.values[dom[ok]]) % p
            cols.append(_plurality(diffs))
        else:
            cols.append(np.zeros(m, dtype=np.int64))
    MB = np.array(cols, dtype=np.int64).T.reshape(m, n)
    M = (MB @ _inverse_mod(B, p)) % p
    if dom.size == 0:
        return AffineMap(M, p)
    offsets = (f.values[dom] - pts[dom] @ M.T) % p
    return AffineMap(M, p, _plurality(offsets))


def affine_fit_heuristic(f: FunctionTable, seed: int = 0, trials: int = DEFAULT_TRIALS) -> tuple[AffineMap, Fraction]:
    """Majority-vote affine fit.

    Trial 0 votes along the standard basis, later trials along random bases.
    Returns the best map found and its measured agreement on ``Z``.
    """
    p, n = f.p, f.n
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x4A]))
    best: tuple[AffineMap, Fraction] | None = None
    for t in range(max(1, trials)):
        B = np.eye(n, dtype=np.int64) if t == 0 else _random_invertible(p, n, rng)
        L = _vote_map(f, B)
        agr = f.agreement(L)
        if best is None or agr > best[1]:
            best = (L, agr)
        if agr == 1:
            break
    return best


def choose_backend(f: FunctionTable, budget: int = EXHAUSTIVE_BUDGET) -> str:
    return "exhaustive" if f.p ** (f.m * (f.n + 1)) <= budget else "heuristic"


def fr_on_restriction(
    f: FunctionTable, seed: int = 0, backend: str = "auto", trials: int = DEFAULT_TRIALS
) -> tuple[AffineMap, Fraction]:
    """Affine fit of ``f`` on its restriction set ``Z``; agreement is measured on ``Z``.

    The heuristic backend extends the codomain by ``PADDING_DIGITS`` extra
    coordinates: zero on ``Z``, fresh random values off ``Z``, and ``f`` itself
    is replaced by random values off ``Z``.  Votes involving points off ``Z``
    then scatter and the plurality follows ``Z``.  The exhaustive backend
    maximizes agreement over ``Z`` directly.
    """
    if f.Z is not None and not f.Z.any():
        raise ValueError("restriction set Z is empty")
    if backend == "auto":
        backend = choose_backend(f)
    if backend == "exhaustive":
        return affine_fit_exhaustive(f)
    if backend != "heuristic":
        raise ValueError(f"unknown backend {backend!r}")
    if f.Z is None or f.Z.all():
        return affine_fit_heuristic(f.restrict(None), seed, trials)
    p, n, m = f.p, f.n, f.m
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5A]))
    size = p**n
    pad = np.zeros((size, PADDING_DIGITS), dtype=np.int64)
    off = ~f.Z
    pad[off] = rng.integers(0, p, size=(int(off.sum()), PADDING_DIGITS))
    vals = f.values.copy()
    vals[off] = rng.integers(0, p, size=(int(off.sum()), m))
    wide = FunctionTable(p, n, m + PADDING_DIGITS, np.concatenate([vals, pad], axis=1))
    Lw, _ = affine_fit_heuristic(wide, seed, trials)
    L = AffineMap(Lw.matrix[:m], p, Lw.offset[:m])
    return L, f.agreement(L)


# ---------------------------------------------------------------------------
# discovery


def containment_holds(state: FamilyState, y: int, z: int, w: int) -> bool:
    """``(U_z + U_{y+z}) & (U_w + U_{y+w})`` inside the selected spans at the four points."""
    U, p, n = state.U, state.U.p, state.U.n
    yz = int(add_indices(y, z, p, n))
    yw = int(add_indices(y, w, p, n))
    lhs = U.crossing(y, z, w)
    if lhs.dim == 0:
        return True
    rhs = state.spans[z] + state.spans[yz] + state.spans[w] + state.spans[yw]
    return lhs.issubset(rhs)


def failure_rate(state: FamilyState, triples: np.ndarray) -> Fraction:
    fails = sum(not containment_holds(state, int(y), int(z), int(w)) for y, z, w in triples)
    return Fraction(fails, max(len(triples), 1))


@dataclass
class SearchResult:
    map: AffineMap
    fresh_density: Fraction
    agreement: Fraction
    attempts: int
    branch: int
    branch_counts: tuple[int, int, int, int]
    backend: str


def _sample_selection(U: FiberedSubspaces, rng: np.random.Generator) -> np.ndarray:
    """``f(x)`` uniform in ``U_x`` for every ``x``."""
    out = np.zeros((len(U), U.m), dtype=np.int64)
    for x, Ux in enumerate(U.spaces):
        if Ux.dim:
            out[x] = (rng.integers(0, U.p, size=Ux.dim) @ Ux.basis) % U.p
    return out


def intersect_search(
    U: FiberedSubspaces,
    state: FamilyState,
    seed: int = 0,
    triples: np.ndarray | None = None,
    sample_size: int = 512,
    retries: int = DEFAULT_RETRIES,
    backend: str = "auto",
) -> SearchResult | None:
    """Look for an affine ``L`` with ``L(x) in U_x`` outside the current span at some ``x``.

    Each attempt samples a selection ``f``, marks where ``f`` is new, and
    tallies which of the four points ``(y+z, z, y+w, w)`` of the failing
    triples carry a new value.  The most frequent position defines ``Z``; the
    fit on ``Z`` is accepted when its fresh-value density is positive.
    """
    p, n = U.p, U.n
    size = p**n
    if triples is None:
        trng = np.random.default_rng(np.random.SeedSequence([seed, 0x71]))
        triples = trng.integers(0, size, size=(sample_size, 3))
    failing = np.array(
        [(y, z, w) for y, z, w in triples if not containment_holds(state, int(y), int(z), int(w))], dtype=np.int64
    ).reshape(-1, 3)
    if failing.shape[0] == 0:
        return None
    y, z, w = failing[:, 0], failing[:, 1], failing[:, 2]
    positions = np.stack([add_indices(y, z, p, n), z, add_indices(y, w, p, n), w], axis=1)
    for attempt in range(retries):
        rng = np.random.default_rng(np.random.SeedSequence([seed, attempt]))
        f = _sample_selection(U, rng)
        new = np.array([not state.spans[x].contains(f[x]) for x in range(size)], dtype=bool)
        flags = new[positions]
        counts = tuple(int(c) for c in flags.sum(axis=0))
        branch = int(np.argmax(counts))
        if counts[branch] == 0:
            continue
        Z = np.zeros(size, dtype=bool)
        Z[positions[flags[:, branch], branch]] = True
        table = FunctionTable(p, n, U.m, f, Z)
        used = choose_backend(table) if backend == "auto" else backend
        L, agr = fr_on_restriction(table, seed=seed * 1009 + attempt, backend=used)
        fresh = state.fresh_mask(L)
        if fresh.any():
            return SearchResult(L, Fraction(int(fresh.sum()), size), agr, attempt + 1, branch, counts, used)
    return None

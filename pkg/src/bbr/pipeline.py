"""Six-step construction of a bilinear variety inside ``phi_w(A)``.

Steps follow the application order of the default word ``hvvhvvvhh``:
``hh`` (step 1), ``vv`` (step 2), ``v`` and ``h`` (steps 3-4), ``vv``
(step 5) and ``h`` (step 6).  Every random choice is seeded from one root
seed, every set that feeds the next step is computed exactly, and the final
variety is checked against exact counts of ``phi_w(A)``.
"""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field
from decimal import MAX_EMAX, MIN_EMIN, ROUND_FLOOR, Context, Decimal
from fractions import Fraction

import numpy as np

from .approx_hom import FamilyState, FiberedSubspaces, containment_holds, intersect_search
from .bogolyubov import ORACLE_NAME, BogolyubovCertificate, bogolyubov_subspace, find_representation, robust_certificate
from .gf import (
    DEFAULT_ENUMERATION_CAP,
    AffineMap,
    BilinearForm,
    MapFamily,
    Subspace,
    add_indices,
    canonical_basis,
    min_rank_element,
    point_digits,
    project_along,
    to_index,
)
from .parallel import ordered_map
from .phi import DEFAULT_WORD, GridSet, Word, count_table, phi_word
from .setlab import DenseSet, RepTable, convolve_counts, diff_rep_counts, reflect

ROBUST_EXACT_TRIPLES = 1 << 15
FLOAT_SLACK = Fraction(1, 10**6)
SEED_NAMES = ("step2", "step34", "step5", "step6", "verify")


@dataclass
class PipelineConfig:
    word: str = str(DEFAULT_WORD)
    seed: int = 0
    samples: int = 512
    t_max: int = 64
    retries: int = 32
    candidates: int = 16
    arithmetic: str = "exact"
    enumeration_cap: int = 1 << 20
    verify_samples: int = 4096
    timings: bool = False

    def __post_init__(self):
        Word.parse(self.word)
        if self.arithmetic not in ("exact", "float"):
            raise ValueError(f"arithmetic must be 'exact' or 'float', got {self.arithmetic!r}")
        for name in ("samples", "t_max", "retries", "candidates", "enumeration_cap", "verify_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


# ---------------------------------------------------------------------------
# output types


class BilinearVariety:
    """``{(x, y) : x in V, y in W, x^T M_i y = 0 for all i}`` inside F^m x F^n."""

    def __init__(self, V: Subspace, W: Subspace, forms):
        self.V, self.W = V, W
        self.forms = tuple(forms)
        self.p, self.m, self.n = V.p, V.n, W.n
        for b in self.forms:
            if b.matrix.shape != (self.m, self.n):
                raise ValueError("form shape does not match the ambients")

    @property
    def r1(self) -> int:
        return self.V.codim

    @property
    def r2(self) -> int:
        return self.W.codim

    @property
    def r3(self) -> int:
        return len(self.forms)

    @property
    def r(self) -> int:
        return self.r1 + self.r2 + self.r3

    def contains(self, x, y) -> bool:
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        if not (self.V.contains(x) and self.W.contains(y)):
            return False
        return all(b.evaluate(x, y) == 0 for b in self.forms)

    def slice(self, y) -> Subspace:
        """``{x : (x, y) in B}`` for ``y`` in ``W``."""
        y = np.asarray(y, dtype=np.int64)
        if not self.forms:
            return self.V
        cuts = Subspace.span(np.stack([b.matrix @ y for b in self.forms]) % self.p, self.p, self.m)
        return self.V & cuts.annihilator()

    def mask(self) -> np.ndarray:
        out = np.zeros((self.p**self.m, self.p**self.n), dtype=bool)
        digits = point_digits(self.p, self.n)
        for y in self.W.indices():
            out[self.slice(digits[y]).indices(), y] = True
        return out

    def grid(self) -> GridSet:
        return GridSet(self.p, self.m, self.n, self.mask())

    @property
    def size(self) -> int:
        digits = point_digits(self.p, self.n)
        return sum(self.slice(digits[y]).size for y in self.W.indices())

    def sample(self, count: int, rng: np.random.Generator) -> list[tuple[int, int]]:
        """``count`` random members as index pairs: random ``y`` in ``W``, then random ``x`` in the slice."""
        out = []
        for _ in range(count):
            y = (rng.integers(0, self.p, size=self.W.dim) @ self.W.basis) % self.p if self.W.dim else np.zeros(
                self.n, dtype=np.int64
            )
            sl = self.slice(y)
            x = (rng.integers(0, self.p, size=sl.dim) @ sl.basis) % self.p if sl.dim else np.zeros(
                self.m, dtype=np.int64
            )
            out.append((to_index(x, self.p), to_index(y, self.p)))
        return out

    def __eq__(self, other):
        return (
            isinstance(other, BilinearVariety)
            and self.V == other.V
            and self.W == other.W
            and self.forms == other.forms
        )

    def __repr__(self):
        return f"BilinearVariety(p={self.p}, m={self.m}, n={self.n}, r=({self.r1},{self.r2},{self.r3}))"


@dataclass
class Certificate:
    word: str
    mode: str
    epsilon: Fraction | None
    checked: int
    exhaustive: bool
    min_normalized: Fraction | None
    passed: bool
    witness: tuple[int, int] | None = None

    def to_dict(self) -> dict:
        return {
            "checked": self.checked,
            "exhaustive": self.exhaustive,
            "min_normalized_count": decimal_floor(self.min_normalized),
            "pass": self.passed,
        }


def decimal_floor(q: Fraction | None, digits: int = 15) -> str | None:
    """``q`` rounded down to ``digits`` significant digits, as a decimal string."""
    if q is None:
        return None
    q = Fraction(q)
    if q == 0:
        return "0"
    ctx = Context(prec=digits, rounding=ROUND_FLOOR, Emin=MIN_EMIN, Emax=MAX_EMAX)
    return str(ctx.divide(Decimal(q.numerator), Decimal(q.denominator)))


@dataclass
class PipelineState:
    A: GridSet
    config: PipelineConfig
    seeds: dict
    alpha: Fraction
    S: DenseSet | None = None
    V1: dict = field(default_factory=dict)
    certs1: dict = field(default_factory=dict)
    d1: int = 0
    W_prime: Subspace | None = None
    cert_W_prime: BogolyubovCertificate | None = None
    y_orig: np.ndarray | None = None
    reps: list = field(default_factory=list)
    V2: list = field(default_factory=list)
    d2: int = 0
    U: FiberedSubspaces | None = None
    family: FamilyState | None = None
    holding_rate: Fraction | None = None
    chosen: tuple = ()
    forms: list = field(default_factory=list)
    offsets: Subspace | None = None
    R: Subspace | None = None
    T: DenseSet | None = None
    T_counts: np.ndarray | None = None
    pair_total: int = 0
    zw: tuple | None = None
    W: Subspace | None = None
    cert_T: BogolyubovCertificate | None = None
    delta: Fraction | None = None
    delta_exact: bool = True
    sampler: "TripleSampler | None" = None
    Z: Subspace | None = None
    V: Subspace | None = None
    variety: BilinearVariety | None = None
    flags: list = field(default_factory=list)
    trace: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return self.A.p

    @property
    def m(self) -> int:
        return self.A.m

    @property
    def n(self) -> int:
        return self.A.n

    @property
    def n_reindexed(self) -> int:
        return self.W_prime.dim

    def B1(self) -> GridSet:
        """``union of V'_y x {y}`` over ``y`` in ``S``, original coordinates."""
        return GridSet.from_fibers(self.V1, self.p, self.m, self.n)

    def B2(self) -> GridSet:
        """``union of V_y x {y}`` over ``y`` in ``W'``, original coordinates."""
        return GridSet.from_fibers({int(y): V for y, V in zip(self.y_orig, self.V2)}, self.p, self.m, self.n)


def derive_seeds(seed: int) -> dict:
    kids = np.random.SeedSequence(seed).spawn(len(SEED_NAMES))
    out = {"root": int(seed)}
    out.update({name: int(k.generate_state(1, dtype=np.uint32)[0]) for name, k in zip(SEED_NAMES, kids)})
    return out


def _subseed(base: int, *keys: int) -> int:
    return int(np.random.SeedSequence([base, *keys]).generate_state(1, dtype=np.uint32)[0])


class _Clock:
    def __init__(self, state: PipelineState, name: str):
        self.state, self.name = state, name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        if self.state.config.timings:
            self.state.timings[self.name] = round((time.perf_counter() - self.t0) * 1000)


# ---------------------------------------------------------------------------
# steps


def step1(A: GridSet, config: PipelineConfig | None = None) -> PipelineState:
    """Popular fibers ``S`` and a Bogolyubov subspace ``V'_y`` for each of them."""
    config = config or PipelineConfig()
    if A.size == 0:
        raise ValueError("the pipeline needs a nonempty set")
    p, n = A.p, A.n
    state = PipelineState(A=A, config=config, seeds=derive_seeds(config.seed), alpha=A.density())
    with _Clock(state, "step1"):
        sizes = A.mask.sum(axis=0)
        total = int(sizes.sum())
        # alpha_y >= alpha / 2  <=>  2 |A_y| p^n >= |A|
        S_idx = [y for y in range(p**n) if 2 * int(sizes[y]) * p**n >= total]
        state.S = DenseSet.from_indices(S_idx, p, n)
        results = ordered_map(lambda y: bogolyubov_subspace(A.fiber(y)), S_idx)
        for y, (V, cert) in zip(S_idx, results):
            state.V1[y] = V
            state.certs1[y] = cert
        state.d1 = max(V.codim for V in state.V1.values())
        assert 2 * state.S.size >= p**n * state.alpha or state.alpha == 0
        state.trace["step1"] = {
            "S_size": state.S.size,
            "d": state.d1,
            "min_fiber_certificate": str(min(c.min_normalized for c in state.certs1.values())),
        }
    return state


def step2(state: PipelineState) -> PipelineState:
    """``W' = Bogolyubov(S)`` and ``V_y`` as the intersection over a representation of ``y``."""
    p, n = state.p, state.n
    with _Clock(state, "step2"):
        Wp, cert = bogolyubov_subspace(state.S)
        state.W_prime, state.cert_W_prime = Wp, cert
        n2 = Wp.dim
        coords = point_digits(p, n2)
        orig = (coords @ Wp.basis) % p if n2 else np.zeros((1, n), dtype=np.int64)
        state.y_orig = np.asarray(to_index(orig, p), dtype=np.int64).reshape(-1)
        seed = state.seeds["step2"]

        def fiber(u: int):
            y = int(state.y_orig[u])
            q = find_representation(y, state.S, seed=_subseed(seed, u))
            V = state.V1[q[0]] & state.V1[q[1]] & state.V1[q[2]] & state.V1[q[3]]
            return q, V

        results = ordered_map(fiber, range(len(state.y_orig)))
        state.reps = [q for q, _ in results]
        state.V2 = [V for _, V in results]
        state.d2 = max(V.codim for V in state.V2)
        assert state.d2 <= 4 * state.d1
        state.trace["step2"] = {"W_prime_codim": Wp.codim, "n_reindexed": n2, "d": state.d2}
    return state


def _linear_spans(maps: list[AffineMap], p: int, m: int, n2: int) -> list[Subspace]:
    """``span{M u : M in maps}`` for every point ``u`` of F^{n2}."""
    digits = point_digits(p, n2)
    if not maps:
        return [Subspace.zero(p, m)] * len(digits)
    stack = np.stack([L.matrix for L in maps])
    vals = np.einsum("kij,uj->uki", stack, digits) % p
    return [canonical_basis(v, p, m) for v in vals]


def _discover(state: PipelineState) -> list[tuple[int, int, int]]:
    cfg = state.config
    U, size = state.U, len(state.U)
    rng = np.random.default_rng(state.seeds["step34"])
    triples = rng.integers(0, size, size=(cfg.samples, 3))
    fam = FamilyState(U)
    state.family = fam

    def holds() -> np.ndarray:
        return np.array([containment_holds(fam, int(y), int(z), int(w)) for y, z, w in triples], dtype=bool)

    ok = holds()
    rounds = []
    while 2 * int(ok.sum()) < len(ok) and fam.t < cfg.t_max:
        res = intersect_search(
            U, fam, seed=_subseed(state.seeds["step34"], fam.t), triples=triples, retries=cfg.retries
        )
        if res is None:
            state.flags.append("DEGRADED: discovery search exhausted its retry budget")
            break
        grown = fam.add(res.map)
        ok = holds()
        rounds.append(
            {
                "fresh_density": str(res.fresh_density),
                "agreement": str(res.agreement),
                "attempts": res.attempts,
                "branch": res.branch,
                "branch_counts": list(res.branch_counts),
                "backend": res.backend,
                "grown_points": grown,
                "holding_rate": str(Fraction(int(ok.sum()), len(ok))),
            }
        )
    state.holding_rate = Fraction(int(ok.sum()), len(ok))
    if 2 * int(ok.sum()) < len(ok) and fam.t >= cfg.t_max:
        state.flags.append("DEGRADED: discovery reached t_max with the containment event below 1/2")
    state.trace["discovery"] = rounds
    return [tuple(int(v) for v in t) for t, good in zip(triples, ok) if good] or [
        tuple(int(v) for v in t) for t in triples
    ]


def step34(state: PipelineState, robust: bool = False) -> PipelineState:
    """Discover affine maps for ``U_y = V_y^perp``, pick a popular subfamily, and cut out ``T``."""
    p, m = state.p, state.m
    n2 = state.n_reindexed
    size = p**n2
    with _Clock(state, "step34"):
        state.U = FiberedSubspaces([V.annihilator() for V in state.V2], p, n2, m)
        if state.U.d == 0:
            state.forms, state.chosen = [], ()
            state.offsets = state.R = Subspace.zero(p, m)
            state.T = DenseSet.full(p, n2)
            state.T_counts = np.ones(size, dtype=np.int64)
            state.pair_total = 1
            state.holding_rate = Fraction(1)
            state.trace["step34"] = {"maps_discovered": 0, "family": [], "forms": 0, "R_dim": 0, "T_size": size}
            return state
        pool = _discover(state)
        fam = state.family
        keys = Counter()
        for y, z, w in pool:
            yz, yw = int(add_indices(y, z, p, n2)), int(add_indices(y, w, p, n2))
            keys[tuple(tuple(fam.members[x]) for x in (yz, z, yw, w))] += 1
        key, popularity = keys.most_common(1)[0]
        chosen = tuple(sorted(set().union(*key)))
        maps = [fam.maps[i] for i in chosen]
        state.chosen = chosen
        lin = MapFamily([L.linear_part() for L in maps], p, m, n2) if maps else None
        state.forms = lin.basis_maps() if lin is not None else []
        state.offsets = Subspace.span(np.stack([L.offset for L in maps]), p, m) if maps else Subspace.zero(p, m)
        spans = _linear_spans(state.forms, p, m, n2)
        if robust:
            _robust_T(state, spans)
        else:
            _plain_T(state, spans, pool, key)
        state.trace["step34"] = {
            "maps_discovered": fam.t,
            "holding_rate": str(state.holding_rate),
            "family": list(chosen),
            "quadruple_popularity": popularity,
            "forms": len(state.forms),
            "offsets_dim": state.offsets.dim,
            "R_dim": state.R.dim,
            "T_size": state.T.size,
            "zw": list(state.zw) if state.zw is not None else None,
        }
    return state


def _plain_T(state: PipelineState, spans: list[Subspace], pool, key) -> None:
    """Best ``(z, w)`` by exact ``|T|``, ``T = {y : X(y,z,w) in L(y) + R}``."""
    p, n2 = state.p, state.n_reindexed
    U, fam = state.U, state.family
    size = p**n2
    cands = []
    for y, z, w in pool:
        yz, yw = int(add_indices(y, z, p, n2)), int(add_indices(y, w, p, n2))
        if tuple(tuple(fam.members[x]) for x in (yz, z, yw, w)) == key and (z, w) not in cands:
            cands.append((z, w))
        if len(cands) >= state.config.candidates:
            break

    def T_for(z: int, w: int, R: Subspace) -> np.ndarray:
        return np.array([U.crossing(u, z, w).issubset(spans[u] + R) for u in range(size)], dtype=bool)

    best = None
    for z, w in cands:
        R = state.offsets + spans[z] + spans[w]
        T = T_for(z, w, R)
        if best is None or T.sum() > best[2].sum():
            best = (z, w, T, R)
    z, w, T, R = best
    if not T.any():
        # slack: with U_z & U_w inside R the point y = 0 always qualifies
        R = R + (U[z] & U[w])
        T = T_for(z, w, R)
        state.flags.append("slack subspace U_z & U_w added to R")
    assert T[0] or T.any()
    state.zw, state.R = (z, w), R
    state.T = DenseSet(p, n2, T)


def _robust_T(state: PipelineState, spans: list[Subspace]) -> None:
    """``T`` = points where the containment event holds for many ``(z, w)``."""
    p, n2 = state.p, state.n_reindexed
    U = state.U
    size = p**n2
    if size**3 <= ROBUST_EXACT_TRIPLES:
        zz, ww = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
        pairs = np.stack([zz.ravel(), ww.ravel()], axis=1)
        state.delta_exact = True
    else:
        rng = np.random.default_rng(_subseed(state.seeds["step34"], 0xB0B))
        pairs = rng.integers(0, size, size=(state.config.samples, 2))
        state.delta_exact = False

    def counts_for(R: Subspace) -> np.ndarray:
        base = {}
        out = np.zeros(size, dtype=np.int64)
        for u in range(size):
            for z, w in pairs:
                z, w = int(z), int(w)
                if (z, w) not in base:
                    base[(z, w)] = R + spans[z] + spans[w]
                out[u] += U.crossing(u, z, w).issubset(spans[u] + base[(z, w)])
        return out

    R = state.offsets
    counts = counts_for(R)
    if counts.sum() == 0:
        for Ux in U.spaces:
            R = R + Ux
        counts = counts_for(R)
        state.flags.append("slack subspace sum of all U_x added to R")
    total = int(counts.sum())
    # tau = average / 2:  count(y) >= total / (2 p^n')
    T = 2 * size * counts >= total
    T &= counts > 0
    state.R, state.zw = R, None
    state.T = DenseSet(p, n2, T)
    state.T_counts = counts
    state.pair_total = len(pairs)


class TripleSampler:
    """Uniform triples ``(y1, y2, y3)`` with ``y1, y2, y3, y1 + y2 - y3 - y`` all in ``T``."""

    def __init__(self, T: DenseSet, seed: int):
        self.T, self.seed = T, seed

    def sample(self, y: int, draws: int, key: int = 0) -> tuple[np.ndarray, Fraction]:
        p, n = self.T.p, self.T.n
        rng = np.random.default_rng(_subseed(self.seed, y, key))
        t = rng.integers(0, p**n, size=(draws, 3))
        y4 = add_indices(add_indices(t[:, 0], t[:, 1], p, n), add_indices(t[:, 2], np.full(draws, y), p, n), p, n, -1)
        ok = self.T.mask[t].all(axis=1) & self.T.mask[y4]
        return t[ok], Fraction(int(ok.sum()), draws)


def step5(state: PipelineState, robust: bool = False) -> PipelineState:
    """``W = Bogolyubov(T)`` and the density ``delta`` of the representation sets ``S_y``."""
    p, n2 = state.p, state.n_reindexed
    with _Clock(state, "step5"):
        if state.T.size == 0:
            raise ValueError("step 5 needs a nonempty T")
        if n2 == 0:
            state.W = Subspace.full(p, 0)
            state.delta = Fraction(1)
        else:
            reps = diff_rep_counts(state.T)
            state.W, state.cert_T = bogolyubov_subspace(state.T, counts=reps)
            if robust:
                G = RepTable(p, n2, state.T_counts * state.T.mask)
                GG = convolve_counts(G, G)
                conv = convolve_counts(GG, reflect(GG))
                worst = min(int(conv.counts[y]) for y in state.W.indices())
                state.delta = Fraction(worst, p ** (3 * n2) * state.pair_total**4)
            else:
                state.delta = robust_certificate(state.T, state.W, reps)
        assert state.delta > 0
        state.sampler = TripleSampler(state.T, state.seeds["step5"])
        rates = [state.sampler.sample(int(y), 256)[1] for y in state.W.indices()]
        state.trace["step5"] = {
            "W_codim": state.W.codim,
            "delta": str(state.delta),
            "delta_exact": state.delta_exact,
            "min_measured_acceptance": str(min(rates)),
        }
    return state


# ---------------------------------------------------------------------------
# the map-subspace recursion


def _power_exceeds(exponent: int, p: int, delta: Fraction) -> bool:
    """``p^exponent > 1/delta``."""
    if exponent < 0:
        return False
    return p**exponent * delta > 1


def mapsubspace_bound_holds(dim: int, k: int, p: int, delta: Fraction) -> bool:
    """``dim <= k (2k + log_p(1/delta) + 3)``, decided exactly."""
    if k == 0:
        return dim == 0
    e = dim - k * (2 * k + 3)
    if e <= 0:
        return True
    # p^e <= delta^{-k}
    return p**e * Fraction(delta) ** k <= 1


def mapsubspace(
    F: MapFamily, delta, cap: int = DEFAULT_ENUMERATION_CAP, seed: int = 0, levels: list | None = None
) -> Subspace:
    """Subspace ``Z`` of the codomain for a linear family ``F`` and density ``delta``.

    While the span is nonzero: if its minimum rank exceeds
    ``4k + log_p(1/delta) + 1`` stop, otherwise add the image of a minimum
    rank element to ``Z`` and project the family along it.  A minimum found
    by sampling (span too large to enumerate) never triggers the stop, so
    ``Z`` only grows in that case.
    """
    delta = Fraction(delta)
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    if not F.is_linear:
        raise ValueError("mapsubspace needs linear maps")
    p, m = F.p, F.m
    k0 = F.k
    Z = Subspace.zero(p, m)
    fam = F
    while fam.k > 0:
        k = fam.k
        mr = min_rank_element(fam, cap, seed)
        high = _power_exceeds(mr.rank - 4 * k - 1, p, delta)
        if levels is not None:
            levels.append({"k": k, "min_rank": mr.rank, "exhaustive": mr.exhaustive, "stop": high and mr.exhaustive})
        if high and mr.exhaustive:
            break
        image = mr.map.image()
        Z = Z + image
        P = project_along(image).matrix
        fam = MapFamily([AffineMap(P @ L.matrix, p) for L in fam.basis_maps()], p, m, F.n)
    assert mapsubspace_bound_holds(Z.dim, k0, p, delta), "mapsubspace dimension bound violated"
    return Z


def lifted_family(forms: list[AffineMap], copies: int, p: int, m: int, n2: int) -> MapFamily:
    """Maps ``(y_1, ..., y_copies) -> M y_i`` for each ``M`` and each slot ``i``."""
    maps = []
    for L in forms:
        for i in range(copies):
            block = np.zeros((m, copies * n2), dtype=np.int64)
            block[:, i * n2 : (i + 1) * n2] = L.matrix
            maps.append(AffineMap(block, p))
    return MapFamily(maps, p, m, copies * n2)


def pair_containment_rate(F: MapFamily, Z: Subspace, S: DenseSet, y, pairs: int, rng: np.random.Generator) -> Fraction:
    """Fraction of sampled ``s, s'`` in ``S`` with ``(F(s)+F(y)) & (F(s')+F(y))`` inside ``Z + F(y)``.

    ``F(v)`` is the span of ``{L v : L in span F}``.
    """
    members = S.indices()
    if len(members) == 0:
        raise ValueError("S is empty")
    digits = point_digits(S.p, S.n)
    basis = F.basis_maps()
    zero = Subspace.zero(F.p, F.m)

    def at(v) -> Subspace:
        return canonical_basis([L.matrix @ v for L in basis], F.p, F.m) if basis else zero

    Fy = at(np.asarray(y))
    target = Z + Fy
    picks = members[rng.integers(0, len(members), size=(pairs, 2))]
    good = 0
    for a, b in picks:
        lhs = (at(digits[a]) + Fy) & (at(digits[b]) + Fy)
        good += lhs.issubset(target)
    return Fraction(good, pairs)


def step6(state: PipelineState, robust: bool = False) -> tuple[BilinearVariety, PipelineState]:
    """Lift, run ``mapsubspace`` modulo ``R`` and assemble the variety in original coordinates."""
    p, m, n = state.p, state.m, state.n
    n2 = state.n_reindexed
    with _Clock(state, "step6"):
        copies = 11 if robust else 3
        lifted = lifted_family(state.forms, copies, p, m, n2)
        P = project_along(state.R).matrix
        projected = MapFamily([AffineMap(P @ L.matrix, p) for L in lifted.maps], p, m, copies * n2)
        levels: list = []
        state.Z = mapsubspace(projected, state.delta, seed=state.seeds["step6"], levels=levels)
        state.V = (state.Z + state.R).annihilator()
        Wp = state.W_prime
        if state.W.dim:
            W_orig = Subspace.span((state.W.basis @ Wp.basis) % p, p, n)
        else:
            W_orig = Subspace.zero(p, n)
        # reindexed coordinate u of y in W' is y[pivots(W')] = C y
        C = np.zeros((n2, n), dtype=np.int64)
        C[np.arange(n2), list(Wp.pivots)] = 1
        forms = [BilinearForm(L.matrix @ C, p) for L in state.forms]
        B = BilinearVariety(state.V, W_orig, forms)
        state.variety = B
        state.trace["step6"] = {
            "lift": copies,
            "lifted_k": projected.k,
            "Z_dim": state.Z.dim,
            "levels": levels,
            "bound": f"{projected.k}(2*{projected.k} + log_p(1/delta) + 3)",
        }
    return B, state


# ---------------------------------------------------------------------------
# certification


def _check_mask(B: BilinearVariety, config: PipelineConfig, seed: int) -> tuple[np.ndarray, bool]:
    full = B.mask()
    total = int(full.sum())
    if total <= config.enumeration_cap:
        return full, True
    rng = np.random.default_rng(seed)
    chosen = np.zeros_like(full)
    chosen[0, 0] = True
    for v in B.V.basis:
        chosen[to_index(v, B.p), 0] = True
    for v in B.W.basis:
        chosen[0, to_index(v, B.p)] = True
    for x, y in B.sample(config.verify_samples, rng):
        chosen[x, y] = True
    return chosen & full, False


def _min_over(table, mask: np.ndarray) -> Fraction | None:
    got = table.min_normalized(mask)
    if got is None:
        return None
    return Fraction(got)


def certify(
    A: GridSet, B: BilinearVariety, word, eps: Fraction | None = None, config: PipelineConfig | None = None
) -> Certificate:
    """Check ``B`` inside ``phi_w(A)`` (``eps=None``) or inside ``phi_w^eps(A)``.

    Support is decided with exact arithmetic in both modes; the ``eps`` test
    uses exact counts, or in float mode a relative slack of ``1e-6``.
    """
    config = config or PipelineConfig()
    w = Word.parse(word)
    check, exhaustive = _check_mask(B, config, derive_seeds(config.seed)["verify"])
    mode = "exact" if config.arithmetic == "exact" else "normalized"
    table = count_table(A, w, mode)
    if eps is None:
        ok = phi_word(A, w).mask
    elif mode == "exact":
        ok = table.at_least(eps)
    else:
        floor = Fraction(eps) * (1 - FLOAT_SLACK)
        ok = np.zeros_like(check)
        for x, y in zip(*np.nonzero(check)):
            ok[x, y] = Fraction(float(table.values[x, y])) >= floor
    bad = check & ~ok
    witness = None
    if bad.any():
        xs, ys = np.nonzero(bad)
        witness = (int(xs[0]), int(ys[0]))
    return Certificate(
        word=str(w),
        mode="plain" if eps is None else "robust",
        epsilon=None if eps is None else Fraction(eps),
        checked=int(check.sum()),
        exhaustive=exhaustive,
        min_normalized=_min_over(table, check),
        passed=witness is None,
        witness=witness,
    )


def robust_epsilon(state: PipelineState, B: BilinearVariety) -> tuple[Fraction, dict]:
    """``eps1^(2^(k-2)) * eps2^(2^(k-4)) * eps6`` for a word ending in ``vvhh``.

    ``eps1`` is the least normalized ``hh``-count of ``A`` on ``B^1``,
    ``eps2`` the least ``vv``-count of ``B^1`` on ``B^2`` and ``eps6`` the
    least count of ``B^2`` under the remaining letters on ``B``.  Counts are
    monotone and each step squares the previous table, which gives the
    exponents.
    """
    word = str(Word.parse(state.config.word))
    if not word.endswith("vvhh"):
        raise ValueError("the robust path needs a word whose first applied letters are hh then vv")
    rest = word[:-4]
    mode = "exact" if state.config.arithmetic == "exact" else "normalized"
    B1, B2 = state.B1(), state.B2()
    e1 = _min_over(count_table(state.A, "hh", mode), B1.mask)
    e2 = _min_over(count_table(B1, "vv", mode), B2.mask)
    e6 = _min_over(count_table(B2, rest, mode), B.mask())
    k = len(word)
    eps = e1 ** (2 ** (k - 2)) * e2 ** (2 ** (k - 4)) * e6
    factors = {
        "eps1": decimal_floor(e1),
        "eps2": decimal_floor(e2),
        "eps6": decimal_floor(e6),
        "exponents": [2 ** (k - 2), 2 ** (k - 4), 1],
    }
    return eps, factors


# ---------------------------------------------------------------------------
# drivers


def _oracle_block(state: PipelineState) -> dict:
    calls = [
        {
            "role": "fibers",
            "count": len(state.certs1),
            "max_codim": state.d1,
            "min_normalized": str(min(c.min_normalized for c in state.certs1.values())),
        },
        {
            "role": "W_prime",
            "codim": state.cert_W_prime.codim,
            "codim_bound": str(state.cert_W_prime.codim_bound),
            "min_normalized": str(state.cert_W_prime.min_normalized),
        },
    ]
    if state.cert_T is not None:
        calls.append(
            {
                "role": "W",
                "codim": state.cert_T.codim,
                "codim_bound": str(state.cert_T.codim_bound),
                "min_normalized": str(state.cert_T.min_normalized),
            }
        )
    return {"name": ORACLE_NAME, "rho": "sqrt(alpha/2)", "codim_bound": "2/alpha^2", "calls": calls}


def build_report(state: PipelineState, B: BilinearVariety, cert: Certificate, mode: str, extra: dict | None = None) -> dict:
    trace = dict(state.trace)
    if extra:
        trace.update(extra)
    return {
        "p": state.p,
        "m": state.m,
        "n": state.n,
        "alpha": float(state.alpha),
        "word": state.config.word,
        "mode": mode,
        "r1": B.r1,
        "r2": B.r2,
        "r3": B.r3,
        "r": B.r,
        "epsilon": decimal_floor(cert.epsilon),
        "certificate": cert.to_dict(),
        "seeds": state.seeds,
        "oracle": _oracle_block(state),
        "timings_ms": dict(state.timings),
        "degraded_flags": list(state.flags),
        "arithmetic": state.config.arithmetic,
        "trace": trace,
    }


def _run(A: GridSet, config: PipelineConfig | None, robust: bool):
    config = config or PipelineConfig()
    state = step1(A, config)
    step2(state)
    step34(state, robust=robust)
    step5(state, robust=robust)
    B, _ = step6(state, robust=robust)
    assert B.contains(np.zeros(B.m, dtype=np.int64), np.zeros(B.n, dtype=np.int64))
    return state, B


def run_pipeline(A: GridSet, config: PipelineConfig | None = None) -> tuple[BilinearVariety, dict]:
    """Plain construction; the report's certificate checks ``B`` inside ``phi_w(A)``."""
    state, B = _run(A, config, robust=False)
    with _Clock(state, "certify"):
        cert = certify(A, B, state.config.word, None, state.config)
    return B, build_report(state, B, cert, "plain")


def run_pipeline_robust(A: GridSet, config: PipelineConfig | None = None) -> tuple[BilinearVariety, dict]:
    """Robust construction; the certificate checks normalized counts ``>= eps`` on ``B``."""
    state, B = _run(A, config, robust=True)
    with _Clock(state, "certify"):
        eps, factors = robust_epsilon(state, B)
        cert = certify(A, B, state.config.word, eps, state.config)
    return B, build_report(state, B, cert, "robust", {"epsilon_factors": factors})


def subspace_diff_eta(P: Subspace, Q: Subspace) -> tuple[DenseSet, Fraction]:
    """``P - Q`` as a set together with ``eta = |P & Q| / p^n``.

    Every element of ``P - Q`` has exactly ``|P & Q|`` representations
    ``a - b``, so ``P - Q`` equals its ``eta``-popular part.
    """
    if (P.p, P.n) != (Q.p, Q.n):
        raise ValueError("subspaces live in different ambients")
    diff = DenseSet(P.p, P.n, (P + Q).mask())
    return diff, Fraction((P & Q).size, P.p**P.n)

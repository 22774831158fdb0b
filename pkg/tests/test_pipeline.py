from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest

from bbr.gf import AffineMap, BilinearForm, MapFamily, Subspace, point_digits, random_subspace, to_index
from bbr.phi import GridSet, count_table, phi_word
from bbr.pipeline import (
    BilinearVariety,
    PipelineConfig,
    TripleSampler,
    decimal_floor,
    derive_seeds,
    lifted_family,
    mapsubspace,
    mapsubspace_bound_holds,
    pair_containment_rate,
    run_pipeline,
    run_pipeline_robust,
    step1,
    step2,
    step34,
    step5,
    step6,
    subspace_diff_eta,
)
from bbr.setlab import DenseSet
from bbr.verify import variety_points


def random_grid(p, m, n, density, seed) -> GridSet:
    return GridSet.random(p, m, n, density, np.random.default_rng(seed))


# configuration and helpers -------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(arithmetic="fuzzy")
    with pytest.raises(ValueError):
        PipelineConfig(samples=0)
    with pytest.raises(ValueError):
        PipelineConfig(word="hq")


def test_seed_derivation_is_stable():
    a, b = derive_seeds(5), derive_seeds(5)
    assert a == b and a["root"] == 5
    assert len(set(v for k, v in a.items() if k != "root")) == 5
    assert derive_seeds(6) != a


def test_decimal_floor():
    assert decimal_floor(None) is None
    assert decimal_floor(Fraction(0)) == "0"
    assert decimal_floor(Fraction(1, 3)) == "0.333333333333333"
    assert decimal_floor(Fraction(2, 3)) == "0.666666666666666"
    tiny = Fraction(1, 2**2000)
    assert decimal_floor(tiny).endswith("E-603")


# varieties -----------------------------------------------------------------------


def test_variety_with_one_rank_one_form():
    b = BilinearForm([[1, 0], [0, 0]], 2)
    B = BilinearVariety(Subspace.full(2, 2), Subspace.full(2, 2), [b])
    expect = {(x, y) for x in itertools.product(range(2), repeat=2) for y in itertools.product(range(2), repeat=2)}
    expect = {(x, y) for x, y in expect if (x[0] * y[0]) % 2 == 0}
    assert set(variety_points(B)) == expect
    assert B.size == 12 and B.r == 1


@pytest.mark.parametrize("seed", range(4))
def test_variety_membership_views_agree(seed):
    rng = np.random.default_rng(seed)
    p, m, n = (2, 3, 3) if seed % 2 == 0 else (3, 2, 2)
    V = random_subspace(p, m, int(rng.integers(0, 2)), rng)
    W = random_subspace(p, n, int(rng.integers(0, 2)), rng)
    forms = [BilinearForm(rng.integers(0, p, size=(m, n)), p) for _ in range(2)]
    B = BilinearVariety(V, W, forms)
    mask = B.mask()
    dx, dy = point_digits(p, m), point_digits(p, n)
    listed = {(to_index(x, p), to_index(y, p)) for x, y in variety_points(B)}
    for xi, yi in itertools.product(range(p**m), range(p**n)):
        inside = B.contains(dx[xi], dy[yi])
        assert inside == bool(mask[xi, yi]) == ((xi, yi) in listed)
    assert B.size == int(mask.sum())
    for xi, yi in B.sample(20, rng):
        assert mask[xi, yi]


def test_variety_shape_check():
    with pytest.raises(ValueError):
        BilinearVariety(Subspace.full(2, 2), Subspace.full(2, 3), [BilinearForm(np.eye(2, dtype=int), 2)])


# subspace differences ----------------------------------------------------------


def test_eta_examples():
    H = Subspace.span([(1, 0, 0)], 2, 3).annihilator()
    D, eta = subspace_diff_eta(H, H)
    assert eta == Fraction(1, 2) and D == DenseSet.from_subspace(H)
    P = Subspace.span([(1, 0, 0)], 2, 3)
    Q = Subspace.span([(0, 1, 0)], 2, 3)
    assert subspace_diff_eta(P, Q)[1] == Fraction(1, 8)


def test_eta_by_representation_counting():
    rng = np.random.default_rng(4)
    for _ in range(5):
        P, Q = random_subspace(2, 6, 2, rng), random_subspace(2, 6, 2, rng)
        D, eta = subspace_diff_eta(P, Q)
        assert eta == Fraction(2 ** (P & Q).dim, 64)
        reps: dict[int, int] = {}
        for a in P.indices():
            for b in Q.indices():
                reps[int(a) ^ int(b)] = reps.get(int(a) ^ int(b), 0) + 1
        assert set(reps) == set(D.indices().tolist())
        assert all(Fraction(c, 64) == eta for c in reps.values())


# mapsubspace -------------------------------------------------------------------


def test_mapsubspace_empty_family():
    F = MapFamily([], 2, 3, 3)
    assert mapsubspace(F, Fraction(1, 2)).dim == 0


def test_mapsubspace_rank_one():
    L = AffineMap(np.array([[1, 0], [1, 0], [0, 0]]), 2)
    Z = mapsubspace(MapFamily([L], 2), Fraction(1, 2))
    assert Z == L.image() and Z.dim == 1


def test_mapsubspace_full_rank_stops():
    L = AffineMap(np.eye(8, dtype=int), 2)
    levels: list = []
    assert mapsubspace(MapFamily([L], 2), Fraction(1, 2), levels=levels).dim == 0
    assert levels[0]["stop"]


def test_mapsubspace_rejects_bad_input():
    L = AffineMap(np.eye(2, dtype=int), 2)
    with pytest.raises(ValueError):
        mapsubspace(MapFamily([L], 2), 0)
    with pytest.raises(ValueError):
        mapsubspace(MapFamily([AffineMap(np.eye(2, dtype=int), 2, [1, 0])], 2), Fraction(1, 2))


def test_bound_helper():
    assert mapsubspace_bound_holds(0, 0, 2, Fraction(1, 2))
    assert not mapsubspace_bound_holds(1, 0, 2, Fraction(1, 2))
    # k = 1, delta = 1/8: bound is 1 * (2 + 3 + 3) = 8
    assert mapsubspace_bound_holds(8, 1, 2, Fraction(1, 8))
    assert not mapsubspace_bound_holds(9, 1, 2, Fraction(1, 8))


def test_lifted_family_blocks():
    L = AffineMap(np.array([[1, 1], [0, 1]]), 2)
    F = lifted_family([L], 3, 2, 2, 2)
    assert F.n == 6 and F.k == 3
    v = np.array([1, 0, 0, 1, 1, 1])
    images = sorted(tuple(int(c) for c in M.apply(v)) for M in F.maps)
    assert images == sorted([(1, 0), (1, 1), (0, 1)])


def test_pair_rate_is_one_when_z_is_everything():
    rng = np.random.default_rng(0)
    F = MapFamily([AffineMap(rng.integers(0, 2, size=(3, 3)), 2)], 2)
    S = DenseSet.random(2, 3, 0.5, rng)
    assert pair_containment_rate(F, Subspace.full(2, 3), S, np.zeros(3, dtype=int), 50, rng) == 1


# steps ---------------------------------------------------------------------------


def test_step1_full_grid():
    st = step1(GridSet.full(2, 3, 3))
    assert st.S.size == 8 and st.d1 == 0
    assert all(V == Subspace.full(2, 3) for V in st.V1.values())


def test_step1_and_step2_on_product():
    rng = np.random.default_rng(1)
    V, W = random_subspace(2, 4, 1, rng), random_subspace(2, 4, 2, rng)
    st = step1(GridSet.product(V, W))
    assert st.S == DenseSet.from_subspace(W)
    assert all(Vy == V for Vy in st.V1.values())
    step2(st)
    assert st.W_prime == W
    assert all(Vy == V for Vy in st.V2)


def test_step1_popular_fibers_random():
    st = step1(random_grid(2, 5, 5, 0.4, 2))
    assert st.S.size >= 0.2 * 32
    for y, cert in st.certs1.items():
        assert cert.passed


def test_step2_full_popular_set():
    st = step2(step1(GridSet.full(2, 2, 3)))
    assert st.W_prime == Subspace.full(2, 3)
    assert st.y_orig.tolist() == list(range(8))


@pytest.mark.parametrize("seed", range(3))
def test_step2_fibers_inside_double_vertical_difference(seed):
    st = step2(step1(random_grid(2, 4, 4, 0.45, seed)))
    target = phi_word(st.B1(), "vv")
    assert st.B2().issubset(target)
    # representation really sums to y
    for u, (a, b, c, d) in enumerate(st.reps):
        assert a ^ b ^ c ^ d == int(st.y_orig[u])


def test_step34_noop_when_fibers_are_full():
    st = step34(step2(step1(GridSet.full(2, 2, 2))))
    assert st.U.d == 0 and st.forms == [] and st.T.size == 4


def test_step34_constant_fibers():
    rng = np.random.default_rng(3)
    V, W = random_subspace(2, 4, 2, rng), random_subspace(2, 4, 1, rng)
    st = step34(step2(step1(GridSet.product(V, W))))
    assert st.T.size == 2**st.n_reindexed
    U0 = V.annihilator()
    pts = point_digits(2, st.n_reindexed)
    for i in st.chosen:
        assert U0.contains_all(st.family.maps[i].apply(pts)).all()
    assert st.holding_rate >= Fraction(1, 2)


def test_step5_full_and_subspace_T():
    st = step5(step34(step2(step1(GridSet.full(2, 2, 2)))))
    assert st.W.dim == st.n_reindexed and st.delta == 1
    sample, rate = st.sampler.sample(0, 64)
    assert rate == 1 and len(sample) == 64


def test_triple_sampler_subspace_acceptance():
    U = random_subspace(2, 5, 1, np.random.default_rng(4))
    T = DenseSet.from_subspace(U)
    sampler = TripleSampler(T, 0)
    trips, rate = sampler.sample(int(U.indices()[1]), 4000)
    # y1, y2, y3 in T: probability 1/8, and then y4 is forced into T
    assert abs(float(rate) - 1 / 8) < 0.03
    for t in trips[:20]:
        assert T.mask[t].all()


def test_step6_full_grid():
    B, st = step6(step5(step34(step2(step1(GridSet.full(2, 3, 2))))))
    assert B.r == 0 and B.size == 32


# drivers -------------------------------------------------------------------------


def test_full_grid_report():
    B, rep = run_pipeline(GridSet.full(2, 3, 3))
    assert rep["r"] == 0 and rep["certificate"]["pass"]
    assert rep["certificate"]["exhaustive"]
    assert rep["timings_ms"] == {}


def test_report_keys():
    _, rep = run_pipeline(random_grid(2, 4, 4, 0.4, 5), PipelineConfig(seed=1, timings=True))
    for key in ("p", "m", "n", "alpha", "word", "r1", "r2", "r3", "r", "epsilon", "certificate", "seeds", "oracle"):
        assert key in rep
    assert rep["r"] == rep["r1"] + rep["r2"] + rep["r3"]
    assert rep["epsilon"] is None and rep["mode"] == "plain"
    assert set(rep["timings_ms"]) >= {"step1", "step2", "step34", "step5", "step6", "certify"}


@pytest.mark.parametrize("seed", range(3))
def test_plain_variety_inside_support(seed):
    A = random_grid(2, 4, 4, 0.4, 10 + seed)
    B, rep = run_pipeline(A, PipelineConfig(seed=seed))
    assert rep["certificate"]["pass"]
    assert B.grid().issubset(phi_word(A, rep["word"]))


def test_graph_slices_inside_difference_set():
    rng = np.random.default_rng(6)
    A0 = DenseSet.random(2, 4, 0.3, rng)
    A = GridSet(2, 4, 4, np.outer(np.ones(16, dtype=bool), A0.mask))
    B, rep = run_pipeline(A)
    pts = A0.indices().tolist()
    D = {a ^ b ^ c ^ d for a in pts for b in pts for c in pts for d in pts}
    mask = B.mask()
    for x in range(16):
        assert set(np.flatnonzero(mask[x]).tolist()) <= D


def test_robust_on_product():
    rng = np.random.default_rng(7)
    V, W = random_subspace(2, 4, 1, rng), random_subspace(2, 4, 1, rng)
    A = GridSet.product(V, W)
    B, rep = run_pipeline_robust(A)
    assert rep["certificate"]["pass"] and rep["mode"] == "robust"
    table = count_table(A, rep["word"])
    vals = table.values[B.mask()]
    assert (vals == vals[0]).all()
    # each step multiplies by the acted-side density 1/2 and squares: 2^-(2^9 - 1) for nine letters
    assert Fraction(int(vals[0]), table.normalizer) == Fraction(1, 2**511)
    assert rep["epsilon"] == decimal_floor(Fraction(1, 2**511))


def test_robust_epsilon_below_measured_minimum():
    A = random_grid(2, 4, 4, 0.4, 8)
    B, rep = run_pipeline_robust(A)
    assert rep["certificate"]["pass"]
    table = count_table(A, rep["word"])
    true_min = table.min_normalized(B.mask())
    assert Fraction(rep["epsilon"]) <= true_min
    assert decimal_floor(true_min) == rep["certificate"]["min_normalized_count"]


def test_robust_requires_compatible_word():
    with pytest.raises(ValueError):
        run_pipeline_robust(GridSet.full(2, 2, 2), PipelineConfig(word="hvh"))


def test_pipeline_is_deterministic():
    A = random_grid(2, 4, 4, 0.4, 9)
    assert run_pipeline(A, PipelineConfig(seed=3))[1] == run_pipeline(A, PipelineConfig(seed=3))[1]


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        run_pipeline(GridSet.empty(2, 2, 2))

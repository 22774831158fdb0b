from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest

from bbr.approx_hom import (
    BudgetExceeded,
    FamilyState,
    FiberedSubspaces,
    FunctionTable,
    affine_fit_exhaustive,
    affine_fit_heuristic,
    choose_backend,
    containment_holds,
    failure_rate,
    fr_on_restriction,
    intersect_search,
)
from bbr.gf import AffineMap, Subspace, point_digits


def random_affine(p, n, m, rng) -> AffineMap:
    return AffineMap(rng.integers(0, p, size=(m, n)), p, rng.integers(0, p, size=m))


def corrupt(L: AffineMap, fraction: float, rng) -> FunctionTable:
    f = FunctionTable.from_map(L)
    vals = f.values.copy()
    size = vals.shape[0]
    bad = rng.choice(size, size=int(round(fraction * size)), replace=False)
    for x in bad:
        new = vals[x]
        while np.array_equal(new, vals[x]):
            new = rng.integers(0, L.p, size=L.m)
        vals[x] = new
    return FunctionTable(L.p, L.n, L.m, vals)


def best_agreement_by_definition(f: FunctionTable) -> Fraction:
    """Maximum agreement over every affine map ``F_p^n -> F_p^m``."""
    p, n, m = f.p, f.n, f.m
    best = Fraction(0)
    for entries in itertools.product(range(p), repeat=m * (n + 1)):
        arr = np.array(entries).reshape(m, n + 1)
        best = max(best, f.agreement(AffineMap(arr[:, :n], p, arr[:, n])))
    return best


# fits --------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_affine_function_is_recovered_by_both_backends(seed):
    rng = np.random.default_rng(seed)
    L = random_affine(2, 3, 2, rng)
    f = FunctionTable.from_map(L)
    for fit in (affine_fit_exhaustive(f), affine_fit_heuristic(f, seed)):
        assert fit[0] == L and fit[1] == 1


def test_constant_function():
    f = FunctionTable(3, 2, 2, np.tile([1, 2], (9, 1)))
    L, agr = affine_fit_exhaustive(f)
    assert agr == 1 and not L.matrix.any() and L.offset.tolist() == [1, 2]


def test_planted_half_is_matched_or_beaten():
    rng = np.random.default_rng(7)
    L0 = random_affine(2, 3, 2, rng)
    f = FunctionTable.from_map(L0)
    vals = f.values.copy()
    vals[4:] = rng.integers(0, 2, size=(4, 2))
    g = FunctionTable(2, 3, 2, vals)
    L, agr = affine_fit_exhaustive(g)
    assert agr >= Fraction(1, 2)
    assert agr >= g.agreement(L0)


@pytest.mark.parametrize("seed", range(12))
def test_exhaustive_is_optimal(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(1, 4)), int(rng.integers(1, 3))
    f = FunctionTable(2, n, m, rng.integers(0, 2, size=(2**n, m)))
    L, agr = affine_fit_exhaustive(f)
    assert agr == f.agreement(L) == best_agreement_by_definition(f)


def test_exhaustive_respects_restriction():
    rng = np.random.default_rng(3)
    L0 = random_affine(2, 3, 2, rng)
    vals = FunctionTable.from_map(L0).values.copy()
    Z = np.zeros(8, dtype=bool)
    Z[:4] = True
    vals[~Z] = rng.integers(0, 2, size=(4, 2))
    f = FunctionTable(2, 3, 2, vals, Z)
    L, agr = affine_fit_exhaustive(f)
    assert agr == 1
    assert affine_fit_exhaustive(f.restrict(np.ones(8, dtype=bool)))[1] == affine_fit_exhaustive(f.restrict(None))[1]


def test_exhaustive_budget():
    f = FunctionTable(2, 6, 6, np.zeros((64, 6), dtype=int))
    with pytest.raises(BudgetExceeded):
        affine_fit_exhaustive(f)
    assert choose_backend(f) == "heuristic"


def test_heuristic_recovers_noisy_map():
    ok = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        L0 = random_affine(2, 6, 6, rng)
        L, agr = affine_fit_heuristic(corrupt(L0, 0.1, rng), seed)
        ok += agr >= Fraction(9, 10)
    assert ok >= 19


def test_heuristic_on_random_function_is_poor():
    rng = np.random.default_rng(0)
    f = FunctionTable(2, 6, 6, rng.integers(0, 2, size=(64, 6)))
    assert affine_fit_heuristic(f, 0)[1] < Fraction(1, 4)


def test_heuristic_restriction_planted():
    rng = np.random.default_rng(11)
    L0 = random_affine(2, 6, 4, rng)
    vals = FunctionTable.from_map(L0).values.copy()
    Z = rng.random(64) < 0.5
    vals[~Z] = rng.integers(0, 2, size=(int((~Z).sum()), 4))
    L, agr = fr_on_restriction(FunctionTable(2, 6, 4, vals, Z), seed=1, backend="heuristic")
    assert agr == 1


def test_fr_rejects_empty_restriction_and_unknown_backend():
    f = FunctionTable(2, 2, 1, np.zeros((4, 1), dtype=int))
    with pytest.raises(ValueError):
        fr_on_restriction(f.restrict(np.zeros(4, dtype=bool)))
    with pytest.raises(ValueError):
        fr_on_restriction(f, backend="magic")


# fibered subspaces and discovery -----------------------------------------------


def all_triples(size: int) -> np.ndarray:
    return np.array(list(itertools.product(range(size), repeat=3)), dtype=np.int64)


def test_family_state_membership():
    U0 = Subspace.span([(1, 0, 1)], 2, 3)
    U = FiberedSubspaces.constant(U0, 2)
    st = FamilyState(U)
    L = AffineMap(np.zeros((3, 2), dtype=int), 2, [1, 0, 1])
    assert st.add(L) == 4
    assert all(st.covered(x) for x in range(4))
    assert st.add(L) == 0
    assert st.members[0] == [0]


def test_constant_fibers_single_round():
    U0 = Subspace.span([(1, 1, 0)], 2, 3)
    U = FiberedSubspaces.constant(U0, 3)
    st = FamilyState(U)
    res = intersect_search(U, st, seed=0)
    assert res is not None
    assert not res.map.matrix.any()
    assert U0.contains(res.map.offset)
    st.add(res.map)
    assert failure_rate(st, all_triples(8)) == 0
    assert intersect_search(U, st, seed=1) is None


def test_planted_single_map_family():
    L0 = AffineMap(np.eye(3, dtype=int), 2)
    U = FiberedSubspaces.image_of(L0)
    assert U.d == 1
    st = FamilyState(U)
    for round_ in range(8):
        res = intersect_search(U, st, seed=round_, triples=all_triples(8))
        if res is None:
            break
        st.add(res.map)
    assert failure_rate(st, all_triples(8)) == 0
    pts = point_digits(2, 3)
    vals = L0.apply(pts)
    # each nonzero L0(x) is reproduced by some discovered map
    for x in range(1, 8):
        assert any(np.array_equal(M.apply(pts[x]), vals[x]) for M in st.maps)


def test_zero_dimensional_fibers_never_fail():
    U = FiberedSubspaces.constant(Subspace.zero(2, 2), 2)
    st = FamilyState(U)
    assert all(containment_holds(st, *map(int, t)) for t in all_triples(4))
    assert intersect_search(U, st) is None


def test_fibered_subspaces_validation():
    with pytest.raises(ValueError):
        FiberedSubspaces([Subspace.zero(2, 2)] * 3, 2, 2, 2)
    with pytest.raises(ValueError):
        FiberedSubspaces([Subspace.zero(2, 3)] * 4, 2, 2, 2)

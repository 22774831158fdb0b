from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from bbr.bogolyubov import (
    ORACLE_NAME,
    RepresentationNotFound,
    bogolyubov_subspace,
    find_representation,
    max_subspace_bruteforce,
    robust_certificate,
)
from bbr.gf import Subspace, add_indices, random_subspace
from bbr.setlab import DenseSet, density, diff_rep_counts


def sumset_2a_2a(A: DenseSet) -> set[int]:
    """``A + A - A - A`` over F_2^n by XOR of indices."""
    pts = A.indices().tolist()
    two = {a ^ b for a in pts for b in pts}
    return {s ^ t for s in two for t in two}


def test_subspace_is_recovered():
    rng = np.random.default_rng(0)
    for codim in range(1, 6):
        U = random_subspace(2, 6, codim, rng)
        V, cert = bogolyubov_subspace(DenseSet.from_subspace(U))
        assert V == U
        assert cert.spectrum_size == 2**codim - 1
        assert cert.oracle == ORACLE_NAME


def test_coset_gives_same_subspace():
    U = Subspace.span([(1, 0, 0, 0), (0, 1, 0, 0)], 3, 4)
    shift = np.array([0, 0, 1, 2])
    coset = DenseSet.from_points((U.elements() + shift) % 3, 3, 4)
    assert bogolyubov_subspace(coset)[0] == U


@pytest.mark.parametrize("seed", range(5))
def test_random_set_inside_2a_minus_2a(seed):
    rng = np.random.default_rng(seed)
    A = DenseSet.random(2, 10, 0.3, rng)
    V, cert = bogolyubov_subspace(A)
    alpha = density(A)
    D = sumset_2a_2a(A)
    assert set(V.indices().tolist()) <= D
    assert V.codim <= math.ceil(2 / alpha**2)
    assert cert.min_normalized >= alpha**4 / 2
    assert cert.passed


def test_explicit_rho():
    rng = np.random.default_rng(9)
    A = DenseSet.random(3, 4, 0.4, rng)
    V, cert = bogolyubov_subspace(A, Fraction(1, 2))
    assert cert.rho_squared == Fraction(1, 4)
    assert set(V.indices().tolist()) <= set(np.flatnonzero(diff_rep_counts(A).counts).tolist())


def test_empty_set_rejected():
    with pytest.raises(ValueError):
        bogolyubov_subspace(DenseSet.empty(2, 3))


# robust certificate -----------------------------------------------------------


def test_robust_certificate_examples():
    rng = np.random.default_rng(1)
    U = random_subspace(2, 6, 3, rng)
    A = DenseSet.from_subspace(U)
    assert robust_certificate(A, U) == density(A) ** 3
    assert robust_certificate(DenseSet.full(2, 4), Subspace.full(2, 4)) == 1


@pytest.mark.parametrize("seed", range(10))
def test_robust_certificate_meets_floor(seed):
    rng = np.random.default_rng(100 + seed)
    A = DenseSet.random(2, 7, float(rng.uniform(0.1, 0.5)), rng)
    V, _ = bogolyubov_subspace(A)
    assert robust_certificate(A, V) >= density(A) ** 4 / 2


def test_robust_certificate_rejects_outside_points():
    A = DenseSet.from_subspace(Subspace.span([(1, 0, 0)], 2, 3))
    with pytest.raises(ValueError):
        robust_certificate(A, Subspace.full(2, 3))


# brute-force maximal subspace -------------------------------------------------


def test_max_subspace_examples():
    H = Subspace.span([(1, 0, 0, 0)], 2, 4).annihilator()
    D = DenseSet.from_indices(sorted(sumset_2a_2a(DenseSet.from_subspace(H))), 2, 4)
    assert max_subspace_bruteforce(D) == H
    assert max_subspace_bruteforce(DenseSet.from_indices([0], 2, 4)).dim == 0


def test_max_subspace_is_maximal_in_small_case():
    # D = {0, e1, e2, e1+e2, e3}: the plane is the unique largest subspace
    D = DenseSet.from_indices([0, 1, 2, 3, 4], 2, 3)
    S = max_subspace_bruteforce(D)
    assert S == Subspace.span([(1, 0, 0), (0, 1, 0)], 2, 3)


def test_max_subspace_dominates_spectral_answer():
    rng = np.random.default_rng(2)
    for _ in range(50):
        A = DenseSet.random(2, 5, float(rng.uniform(0.1, 0.5)), rng)
        if A.size == 0:
            continue
        D = DenseSet.from_indices(sorted(sumset_2a_2a(A)), 2, 5)
        S = max_subspace_bruteforce(D)
        assert set(S.indices().tolist()) <= set(D.indices().tolist())
        assert S.dim >= bogolyubov_subspace(A)[0].dim


def test_max_subspace_guards():
    with pytest.raises(ValueError):
        max_subspace_bruteforce(DenseSet.full(2, 9))
    with pytest.raises(ValueError):
        max_subspace_bruteforce(DenseSet.from_indices([1], 2, 3))


# representations ----------------------------------------------------------------


def check_rep(rep, y, S: DenseSet):
    y1, y2, y3, y4 = rep
    assert all(S.mask[i] for i in rep)
    p, n = S.p, S.n
    total = add_indices(add_indices(y1, y2, p, n), add_indices(y3, y4, p, n), p, n, -1)
    assert int(total) == int(y)


def test_zero_has_trivial_representation():
    S = DenseSet.from_indices([5, 9], 2, 4)
    assert find_representation(0, S) == (5, 5, 5, 5)


def test_subspace_representations():
    rng = np.random.default_rng(3)
    U = random_subspace(3, 3, 2, rng)
    S = DenseSet.from_subspace(U)
    for y in U.indices():
        check_rep(find_representation(int(y), S, budget=8), int(y), S)


def test_random_set_representations():
    rng = np.random.default_rng(4)
    S = DenseSet.random(2, 6, 0.4, rng)
    for y in sorted(sumset_2a_2a(S))[:20]:
        check_rep(find_representation(y, S, seed=y), y, S)


def test_missing_representation_raises():
    S = DenseSet.from_subspace(Subspace.span([(1, 0, 0)], 2, 3))
    with pytest.raises(RepresentationNotFound):
        find_representation(2, S)

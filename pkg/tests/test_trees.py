import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpgkdv.lattice import Box, WaveVector
from qpgkdv.oracle import single_mode_first_correction
from qpgkdv.picard import TimeGrid, free_evolution, picard_step
from qpgkdv.qpfield import CoefficientField, DecayProfile, sample_initial_data
from qpgkdv.trees import (CapExceeded, bound_check, combinatorics_rows, compositions_H,
                          enumerate_branches, factorial_sum, index_set_B, index_set_R,
                          j_star, phi, phi_properties, stats, tree_count, tree_evaluate_ck,
                          weighted_tree_sum)


def test_branch_counts():
    assert len(enumerate_branches(1, 5)) == 2
    assert len(enumerate_branches(2, 3)) == 9
    assert len(enumerate_branches(3, 2)) == 26
    for k, p in [(1, 2), (2, 2), (3, 2), (4, 2), (1, 3), (2, 3), (3, 3)]:
        br = enumerate_branches(k, p)
        assert len(br) == tree_count(k, p) == len(set(br))
    with pytest.raises(CapExceeded):
        enumerate_branches(4, 3)
    with pytest.raises(ValueError):
        enumerate_branches(0, 2)


def test_stats_examples():
    s0 = stats(0, 3)
    assert (s0.ell, s0.sigma(3), s0.dfac) == (0, Fraction(1, 2), 1)
    s = stats((1, 1, 1), 3)
    assert (s.ell, s.sigma_num, s.dfac) == (4, 9, 4)
    s = stats((1, 0), 2)
    assert (s.ell, s.sigma(2), s.dfac) == (2, 3, 2)


@pytest.mark.parametrize("k,p", [(3, 2), (2, 3), (3, 3), (2, 4)])
def test_sigma_identity(k, p):
    for g in enumerate_branches(k, p):
        s = stats(g, p)
        assert s.sigma_num == (p - 1) * s.ell + 1 and s.dfac >= 1


def test_index_set_R_examples():
    assert index_set_R(3, 0, 3) == {(0,)}
    assert index_set_R(1, 1, 3) == {(1, 0, 0), (0, 1, 0), (0, 0, 1)}
    R = index_set_R(2, (1, 1, 1), 3)
    assert all(len(a) == 9 and sum(a) == 4 for a in R)
    assert len(R) <= 3**3 * 9


@pytest.mark.parametrize("k,p", [(2, 2), (3, 2), (2, 3)])
def test_R_weight_identity(k, p):
    for g in enumerate_branches(k, p):
        for a in index_set_R(k, g, p):
            assert sum(a) == stats(g, p).ell and len(a) == stats(g, p).sigma_num


def test_index_set_B():
    assert index_set_B(1, 3) == {(1, 0, 0), (0, 1, 0), (0, 0, 1)}
    assert index_set_B(1, 2) == {(1, 0), (0, 1)}
    B2 = index_set_B(2, 2)
    assert (1, 1, 0) in B2 and all(len(a) == 3 and sum(a) == 2 for a in B2)
    for k, p in [(3, 2), (4, 3)]:
        assert all(len(a) == (p - 1) * k + 1 and sum(a) == k for a in index_set_B(k, p))


def test_weighted_tree_sum():
    assert weighted_tree_sum(1, 3, Fraction(1, 16), exact=True) == Fraction(19, 16)
    assert weighted_tree_sum(1, 3, 1 / 16) == 1.1875
    assert weighted_tree_sum(2, 2, 1 / 8) <= 2
    assert weighted_tree_sum(3, 2, 0) == 1
    with pytest.raises(CapExceeded):
        weighted_tree_sum(3, 3, Fraction(1, 16))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.fractions(0, Fraction(1, 8)))
def test_weighted_tree_sum_bound_p2(k, t):
    assert weighted_tree_sum(k, 2, t, exact=True) <= 2


def test_compositions():
    assert compositions_H(3, 1) == [(0, 0, 1), (0, 1, 0), (1, 0, 0)]
    assert set(compositions_H(2, 2)) == {(2, 0), (1, 1), (0, 2)}
    assert len(compositions_H(4, 3)) == 20
    for N in range(1, 6):
        for d in range(0, 5):
            assert len(compositions_H(N, d)) == math.comb(N + d - 1, d)


def test_phi_examples():
    assert phi((1, 0)) == (0, 0) and j_star((1, 0)) == 0
    assert phi((2, 1, 0)) == (2, 0, 0) and j_star((2, 1, 0)) == 1
    assert phi((2, 2, 0)) == (1, 2, 0) and j_star((2, 2, 0)) == 0
    with pytest.raises(ValueError):
        phi((0, 0))


@pytest.mark.parametrize("N", range(1, 7))
@pytest.mark.parametrize("d", range(1, 7))
def test_phi_properties(N, d):
    props = phi_properties(N, d)
    assert all(props[k] for k in ("maps_into", "strict_min", "agree_off_jstar",
                                  "same_jstar_injective", "injective_on_big_min", "preimage_le_N"))


def test_factorial_sums():
    assert factorial_sum(3, 1) == 3
    assert factorial_sum(2, 2) == 5
    assert factorial_sum(6, 6) < 12**6
    assert all(bound_check(N, d) for N in range(1, 7) for d in range(1, N + 1))
    with pytest.raises(ValueError):
        bound_check(2, 3)


def test_combinatorics_report():
    rows = combinatorics_rows(3, [2, 3])
    assert all(r[-1] is not False for r in rows)
    skipped = {(r[0], r[1], r[2]) for r in rows if r[-1] is None}
    assert skipped <= {("weighted_tree_sum", 3, 3), ("R_weight", 3, 3)}
    faulty = combinatorics_rows(1, [2], fault=True)
    assert any(r[-1] is False for r in faulty)


def test_tree_trivial_and_closed_form():
    w = WaveVector((1.0,))
    const = CoefficientField.from_mapping(Box((1,)), {0: 0.7})
    assert tree_evaluate_ck(const, w, 2, 1, 0.3, (0,)) == pytest.approx(0.7)
    single = CoefficientField.from_mapping(Box((2,)), {1: 1.0})
    exact = single_mode_first_correction(1.0, 1.0, 2, 0.3)
    e1 = abs(tree_evaluate_ck(single, w, 2, 1, 0.3, (2,), quad_M=64) - exact)
    e2 = abs(tree_evaluate_ck(single, w, 2, 1, 0.3, (2,), quad_M=128) - exact)
    assert e1 < 1e-4 and 3.5 <= e1 / e2 <= 4.5


@pytest.mark.parametrize("p", [2, 3])
def test_tree_matches_picard_nu2(p):
    w = WaveVector((1.0, math.sqrt(2)))
    c0 = sample_initial_data(DecayProfile(0.5, 1.0, p, 2), Box((1, 0)), 4)
    grid = TimeGrid(0.02, 8)
    c2 = picard_step(picard_step(free_evolution(c0, w, grid), w, p, c0), w, p, c0)
    for n in [(-1, 0), (1, 0)]:
        tree = tree_evaluate_ck(c0, w, p, 2, grid.t_end, n, quad_M=8)
        assert tree == pytest.approx(c2.field(8)[n], abs=1e-12)


def test_tree_unclipped_differs_from_truncation():
    w = WaveVector((1.0,))
    c0 = sample_initial_data(DecayProfile(0.5, 1.0, 2, 1), Box((1,)), 2)
    clipped = tree_evaluate_ck(c0, w, 2, 2, 0.05, (1,), quad_M=8)
    full = tree_evaluate_ck(c0, w, 2, 2, 0.05, (1,), quad_M=8, clip=False)
    assert clipped != full
    assert abs(clipped - full) < 1e-3

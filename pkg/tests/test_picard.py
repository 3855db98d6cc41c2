import math
from fractions import Fraction

import numpy as np
import pytest

from qpgkdv.lattice import Box, DimensionError, WaveVector
from qpgkdv.oracle import single_mode_first_correction
from qpgkdv.picard import (ExistenceConstants, TimeGrid, Trajectory, contraction_certificate,
                           decay_certificate, exact_box_constant, exact_t0_decay,
                           existence_constants, free_evolution, iterate, load_trajectory,
                           phase_angle, picard_step, save_trajectory, uniqueness_window)
from qpgkdv.qpfield import CoefficientField, DecayProfile, sample_initial_data

W1 = WaveVector((1.0,))


def test_time_grid():
    g = TimeGrid(2.0, 4)
    assert g.dt == 0.5 and g.nodes[0] == 0 and g.nodes[-1] == 2.0
    with pytest.raises(ValueError):
        TimeGrid(1.0, 1)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 4)


def test_free_evolution_examples():
    c = CoefficientField.from_mapping(Box((1,)), {1: 1.0, 0: 0.5})
    grid = TimeGrid(math.pi, 4)
    tr = free_evolution(c, W1, grid)
    assert tr.field(4)[1] == pytest.approx(-1.0, abs=1e-15)
    assert np.all(tr.values[:, 1] == 0.5)
    assert np.array_equal(tr.values[0], c.values)


def test_free_evolution_norm_preserved():
    c = sample_initial_data(DecayProfile(1.0, 0.5, 2, 2), Box((4, 3)), 9)
    tr = free_evolution(c, WaveVector((1.0, math.sqrt(2))), TimeGrid(3.7, 16))
    assert np.max(np.abs(np.abs(tr.values) - np.abs(c.values)[None])) <= 1e-14


def test_phase_angle_reduction():
    rate, tau = 3.0e12 + 0.3, 7.0e4 + 0.1
    theta = float(phase_angle(rate, tau))
    exact = Fraction(rate) * Fraction(tau)
    two_pi = Fraction(6.283185307179586) + Fraction(2.4492935982947064e-16)
    reduced = exact - round(exact / two_pi) * two_pi
    assert abs(theta - float(reduced)) < 1e-9
    assert float(phase_angle(2.0, 3.0)) == 6.0
    small = phase_angle(np.array([1.0, 2.0]), 0.5)
    assert np.array_equal(small, [0.5, 1.0])


def test_picard_step_zero_and_initial_node():
    box, grid = Box((2,)), TimeGrid(0.5, 8)
    zero = CoefficientField(box)
    nxt = picard_step(free_evolution(zero, W1, grid), W1, 2, zero)
    assert np.all(nxt.values == 0)
    c = sample_initial_data(DecayProfile(1.0, 1.0, 2, 1), box, 3)
    nxt = picard_step(free_evolution(c, W1, grid), W1, 2, c)
    assert np.array_equal(nxt.values[0], c.values)
    with pytest.raises(ValueError):
        picard_step(nxt, W1, 1, c)
    with pytest.raises(DimensionError):
        picard_step(nxt, W1, 2, c.restrict(Box((1,))))


def _single_mode_error(M, t=0.1, A=1.0):
    c = CoefficientField.from_mapping(Box((2,)), {1: A})
    grid = TimeGrid(t, M)
    c1 = picard_step(free_evolution(c, W1, grid), W1, 2, c)
    return abs(c1.field(M)[2] - single_mode_first_correction(A, 1.0, 2, t))


def test_single_mode_quadrature_and_richardson():
    closed = single_mode_first_correction(1.0, 1.0, 2, 0.1)
    assert closed == pytest.approx(-(1 / 6) * np.exp(0.8j) * (1 - np.exp(-0.6j)), abs=1e-16)
    errs = [_single_mode_error(M) for M in (8, 16, 32, 64)]
    for M, e in zip((8, 16, 32, 64), errs):
        assert e <= 5 * (0.1 / M) ** 2 * 36
    for a, b in zip(errs, errs[1:]):
        assert 3.5 <= a / b <= 4.5


def test_iterate_zero_and_mode0():
    box, grid = Box((3,)), TimeGrid(1e-4, 8)
    res = iterate(CoefficientField(box), W1, 2, grid)
    assert res.converged and res.diffs == [0.0]
    c = sample_initial_data(DecayProfile(0.5, 1.0, 3, 1), box, 2)
    traj, diffs, conv = iterate(c, W1, 3, grid)
    assert conv
    assert np.all(traj.values[:, 3] == c.values[3])


def test_fixed_point_property():
    c = sample_initial_data(DecayProfile(0.5, 1.0, 2, 1), Box((4,)), 5)
    grid = TimeGrid(5e-5, 16)
    tol = 1e-12
    res = iterate(c, W1, 2, grid, tol=tol)
    again = picard_step(res.final, W1, 2, c)
    assert again.sup_gap(res.final) <= 2 * tol


def test_iterate_reports_divergence():
    c = sample_initial_data(DecayProfile(50.0, 0.2, 3, 1), Box((4,)), 1, realness=False)
    res = iterate(c, W1, 3, TimeGrid(1.0, 16), k_max=6)
    assert not res.converged and len(res.diffs) <= 6


def test_constants_examples():
    c2 = existence_constants(DecayProfile(1.0, 1.0, 2, 1), W1)
    assert c2.box_const == 12.0
    assert exact_box_constant(1, 1, 2, 1) == 12
    c3 = existence_constants(DecayProfile(1.0, 1.0, 3, 1), W1)
    assert c3.box_const == 12.0
    assert exact_t0_decay(1, 1, 3, 1, 1) == Fraction(1, 3456)
    assert c3.t0_decay == pytest.approx(1 / 3456, rel=1e-15)
    double = existence_constants(DecayProfile(1.0, 1.0, 3, 1), 2.0)
    assert double.t0 == c3.t0 / 2
    assert c3.theta == 12 * c3.box_const
    with pytest.raises(ValueError):
        existence_constants(DecayProfile(1.0, 1.0, 3, 1), 0.0)
    with pytest.raises(ValueError):
        exact_box_constant(2, 1, 2 + 1, 1)  # sqrt(2) is irrational


def test_decay_certificate_cases():
    prof = DecayProfile(1.0, 1.0, 2, 1)
    consts = existence_constants(prof, W1)
    box, grid = Box((2,)), TimeGrid(1.0, 4)
    zero = Trajectory(grid, box, np.zeros((5, 5)))
    rep = decay_certificate(zero, consts, prof)
    assert rep.certified and rep.worst_margin == -consts.box_const
    planted = np.zeros((5, 5), complex)
    planted[2, 2] = 2 * consts.box_const
    rep = decay_certificate(Trajectory(grid, box, planted), consts, prof)
    assert not rep.certified and rep.worst_margin == consts.box_const
    assert rep.worst_node == 2 and rep.worst_n == (0,)


def test_contraction_certificate_cases():
    consts = existence_constants(DecayProfile(1.0, 1.0, 2, 1), W1)
    t_half = 0.5 / consts.contraction_coeff
    assert contraction_certificate([0.0, 0.0, 0.0], consts, t_half).passed
    synth = ExistenceConstants(1, 1, 1.0, 1.0, 1, 1, 2, 1, 1.0, 1.0)
    rep = contraction_certificate([1.0] * 4, synth, 0.5)
    assert not rep.passed
    # Theta e^{1/(p-1)} = e lets k=1 pass; the bound 0.5^k e then drops below 1
    assert [r[-1] for r in rep.rows] == [True, False, False, False]


def test_uniqueness_window():
    prof = DecayProfile(1.0, 1.0, 3, 1)
    consts = existence_constants(prof, W1)
    assert uniqueness_window(consts, 0.5, 1e-30, 1.0) == 1e-30
    third = uniqueness_window(consts, 0.5, 1.0, 1.0)
    assert third == pytest.approx(1 / (2 * 2 * math.e * 144 * 24**3), rel=1e-14)
    assert uniqueness_window(consts, 0.5, 1, 1, box_exponent=2) == third
    doubled = ExistenceConstants(**{**consts.__dict__, "box_const": 2 * consts.box_const})
    assert uniqueness_window(doubled, 0.5, 1, 1) == pytest.approx(third / 4, rel=1e-14)
    with pytest.raises(ValueError):
        uniqueness_window(consts, 1.5, 1, 1)


def test_trajectory_roundtrip(tmp_path):
    c = sample_initial_data(DecayProfile(0.5, 1.0, 2, 2), Box((2, 1)), 8)
    res = iterate(c, WaveVector((1.0, math.sqrt(3))), 2, TimeGrid(1e-4, 4))
    save_trajectory(res.final, tmp_path / "t", p=2, seed=8)
    lines = (tmp_path / "t" / "manifest.txt").read_text().splitlines()
    assert [ln.split("=")[0] for ln in lines] == ["nu", "p", "M", "t_end", "radius", "seed", "k"]
    back = load_trajectory(tmp_path / "t")
    assert np.array_equal(back.values, res.final.values)
    assert back.k == res.final.k and back.grid == res.final.grid

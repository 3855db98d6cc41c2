import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpgkdv.convolution import (convolve_arrays, convolve_pair, convolve_power,
                                power_arrays, truncation_tail_estimate)
from qpgkdv.lattice import Box, DimensionError, WaveVector
from qpgkdv.qpfield import CoefficientField, DecayProfile, evaluate_u, sample_initial_data


def _field(box, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return CoefficientField(box, scale * (rng.normal(size=box.shape) + 1j * rng.normal(size=box.shape)))


def test_pair_examples():
    b = _field(Box((2,)), 0)
    one = CoefficientField.from_mapping(Box((0,)), {0: 1.0})
    assert np.array_equal(convolve_pair(one, b, Box((2,))).values, b.values)
    ab = CoefficientField.from_mapping(Box((1,)), {-1: 1.0, 1: 1.0})
    assert convolve_pair(ab, ab, Box((2,))).to_dict() == {(-2,): 1, (0,): 2, (2,): 1}
    x = CoefficientField.from_mapping(Box((1,)), {1: 2j})
    y = CoefficientField.from_mapping(Box((1,)), {1: 3.0})
    assert convolve_pair(x, y, Box((2,))).to_dict() == {(2,): 6j}
    with pytest.raises(DimensionError):
        convolve_pair(x, _field(Box((1, 1)), 1), Box((2,)))


def test_power_examples():
    assert convolve_power(CoefficientField.from_mapping(Box((0,)), {0: 2.0}), 3, Box((0,))).to_dict() == {(0,): 8}
    ab = CoefficientField.from_mapping(Box((1,)), {-1: 1.0, 1: 1.0})
    assert convolve_power(ab, 3, Box((3,))).to_dict() == {(-3,): 1, (-1,): 3, (1,): 3, (3,): 1}
    c = _field(Box((3,)), 2)
    assert np.array_equal(convolve_power(c, 1, Box((2,))).values, c.restrict(Box((2,))).values)
    with pytest.raises(ValueError):
        convolve_power(c, 0, Box((2,)))


def test_power_matches_brute_force():
    c = _field(Box((2, 1)), 3)
    out = convolve_power(c, 3, Box((2, 2)))
    pts = c.box.points()
    expect = {}
    for a in pts:
        for b in pts:
            for d in pts:
                n = tuple(x + y + z for x, y, z in zip(a, b, d))
                expect[n] = expect.get(n, 0) + c[a] * c[b] * c[d]
    for n in out.box.points():
        assert out[n] == pytest.approx(expect.get(n, 0), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 2))
def test_commutative_and_associative(seed, nu):
    a, b, c = (_field(Box((2,) * nu), seed + i) for i in range(3))
    wide = Box((6,) * nu)
    assert np.allclose(convolve_pair(a, b, wide).values, convolve_pair(b, a, wide).values, atol=1e-12)
    left = convolve_pair(convolve_pair(a, b, Box((4,) * nu)), c, wide)
    right = convolve_pair(a, convolve_pair(b, c, Box((4,) * nu)), wide)
    assert np.allclose(left.values, right.values, atol=1e-11)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 4))
def test_evaluation_homomorphism_and_mass(seed, p):
    c = _field(Box((2,)), seed, scale=0.3)
    full = convolve_power(c, p, Box((2 * p,)))
    omega = WaveVector((1.3,))
    for x in (0.0, 0.4, -2.1):
        lhs = evaluate_u(full, omega, x=x)
        rhs = evaluate_u(c, omega, x=x) ** p
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs))
    assert np.sum(full.values) == pytest.approx(np.sum(c.values) ** p, rel=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3))
def test_fft_matches_direct(seed, nu):
    a = _field(Box((3,) * nu), seed)
    b = _field(Box((2,) * nu), seed + 1)
    out = (5,) * nu
    d = convolve_arrays(a.values, b.values, nu, out, method="direct")
    f = convolve_arrays(a.values, b.values, nu, out, method="fft")
    assert np.max(np.abs(d - f)) <= 1e-12


def test_batch_axes_and_compensated():
    rng = np.random.default_rng(7)
    batch = rng.normal(size=(4, 5)) + 1j * rng.normal(size=(4, 5))
    stacked = power_arrays(batch, 2, 1, (2,))
    for j in range(4):
        assert np.allclose(stacked[j], power_arrays(batch[j], 2, 1, (2,)), atol=1e-14)
    comp = power_arrays(batch, 3, 1, (2,), method="direct", compensated=True)
    assert np.allclose(comp, power_arrays(batch, 3, 1, (2,)), atol=1e-13)
    with pytest.raises(ValueError):
        convolve_arrays(batch[0], batch[0], 1, (2,), method="bogus")


@pytest.mark.parametrize("kappa", [0.25, 0.5, 1.0])
@pytest.mark.parametrize("p", [2, 3])
def test_decay_closure(kappa, p):
    nu, C = 1, 1.0
    prof = DecayProfile(C ** (p - 1), kappa, p, nu)
    for seed in range(3):
        c = sample_initial_data(prof, Box((8,)), seed)
        c.values[:] = C * np.exp(-kappa * c.box.l1_grid()) * np.exp(1j * np.angle(c.values))
        out = convolve_power(c, p, Box((8 * p,)))
        bound = C**p * (6 * 2 / kappa) ** ((p - 1) * nu) * np.exp(-kappa / 2 * out.box.l1_grid())
        assert np.all(np.abs(out.values) <= bound)


def test_tail_estimate():
    assert truncation_tail_estimate(1.0, 1.0, Box((40,))) < 1e-16
    q = math.exp(-1.0)
    full = (1 + q) / (1 - q)
    assert truncation_tail_estimate(1.0, 1.0, Box((0,))) == pytest.approx(full - 1)

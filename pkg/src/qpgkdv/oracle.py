"""Independent references for the Picard solver and the analytic estimates.

* `rk4_truncated` integrates the truncated coefficient ODE directly.
* `single_mode_first_correction` is the closed form of the first Picard
  correction for one-mode data.
* `appendix_checks` evaluates the lattice sums behind the decay estimates by
  truncated summation with rigorous tail bounds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .convolution import convolve_arrays, power_arrays
from .lattice import Box, DimensionError, WaveVector, frequency_grid
from .picard import TimeGrid, Trajectory
from .qpfield import CoefficientField


def rk4_truncated(c0_field: CoefficientField, omega: WaveVector, p: int, box: Box,
                  t_end: float, steps: int, M: int | None = None,
                  nonlinear: bool = True) -> Trajectory:
    """Classical RK4 on ``dc/dt = i(n.w)^3 c - (i n.w/p) c^{*p}`` over `box`.

    The state is sampled every ``steps // M`` steps, giving a trajectory on
    the same node layout as ``TimeGrid(t_end, M)`` (default ``M = steps``).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    M = steps if M is None else M
    if steps % M:
        raise ValueError(f"steps={steps} is not a multiple of M={M}")
    if c0_field.box.nu != omega.nu:
        raise DimensionError("initial data and omega differ in dimension")
    freqs = frequency_grid(box, omega)
    lin = 1j * freqs**3
    nl = 1j * freqs / p

    def rhs(c):
        out = lin * c
        if nonlinear:
            out -= nl * power_arrays(c, p, box.nu, box.radius)
        return out

    h = t_end / steps
    c = c0_field.restrict(box).values.copy()
    every = steps // M
    samples = [c.copy()]
    for s in range(1, steps + 1):
        k1 = rhs(c)
        k2 = rhs(c + 0.5 * h * k1)
        k3 = rhs(c + 0.5 * h * k2)
        k4 = rhs(c + h * k3)
        c = c + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if s % every == 0:
            samples.append(c.copy())
    return Trajectory(TimeGrid(t_end, M), box, np.stack(samples))


def single_mode_first_correction(A: complex, omega: float, p: int, t: float) -> complex:
    """``c_1(t, p e_1)`` for initial data ``c = A`` at ``n = e_1`` and zero elsewhere.

    Uses the limit ``-i w A^p t e^{i(pw)^3 t}`` when the phase mismatch
    ``(pw)^3 - p w^3`` vanishes.
    """
    big = (p * omega) ** 3
    delta = big - p * omega**3
    lead = -1j * omega * np.exp(1j * big * t) * A**p
    if abs(delta) < 1e-9:
        return complex(lead * t)
    return complex(lead * (1 - np.exp(-1j * delta * t)) / (1j * delta))


# -- lattice sums -----------------------------------------------------------

def l1_sphere_count(s: int, nu: int) -> int:
    """Number of points of Z^nu with l1 norm exactly `s`."""
    if s == 0:
        return 1
    return sum(2**k * math.comb(nu, k) * math.comb(s - 1, k - 1) for k in range(1, min(nu, s) + 1))


def weighted_lattice_sum(alpha: int, kappa: float, nu: int, S: int):
    """``sum_{m in Z^nu} |m|^alpha e^{-kappa |m|}`` split at ``|m| = S``.

    Returns ``(partial, tail_bound)``: the exact sum over ``|m|_1 <= S`` and a
    rigorous upper bound for the rest.  The tail bound dominates the terms by
    ``g(s) = s^alpha 2^nu C(s+nu-1, nu-1) e^{-kappa s}``, whose successive
    ratios decrease in s, and sums the resulting geometric series.
    """
    partial = math.fsum(float(s) ** alpha * l1_sphere_count(s, nu) * math.exp(-kappa * s)
                        for s in range(S + 1))

    def g(s):
        return float(s) ** alpha * 2**nu * math.comb(s + nu - 1, nu - 1) * math.exp(-kappa * s)

    s0 = S + 1
    ratio = ((s0 + 1) / s0) ** alpha * (s0 + nu) / (s0 + 1) * math.exp(-kappa)
    if ratio >= 1:
        raise ValueError(f"truncation S={S} too small for a geometric tail bound")
    return partial, g(s0) / (1 - ratio)


@dataclass
class AppendixReport:
    kappa: float
    nu: int
    r: int
    alpha: tuple
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(row[-1] for row in self.rows)


def tail_radius(alphas, kappa: float, nu: int, start: int) -> int:
    """Smallest ``S >= start`` whose tail ratio is at most ``(1 + e^{-kappa})/2``."""
    target = 0.5 * (1 + math.exp(-kappa))
    S = max(start, 1)
    while True:
        s0 = S + 1
        worst = max(((s0 + 1) / s0) ** a * (s0 + nu) / (s0 + 1) for a in alphas)
        if worst * math.exp(-kappa) <= target:
            return S
        S += 1


def _convolution_sum(alpha, kappa, nu, n, S):
    """Constrained sum over ``m_1 + ... + m_r = n`` plus an upper tail bound."""
    box = Box((S,) * nu)
    l1 = box.l1_grid()
    acc = None
    for a in alpha:
        f = l1.astype(float) ** a * np.exp(-kappa * l1)
        if acc is None:
            acc = f
        else:
            rad = tuple((s - 1) // 2 for s in acc.shape)
            acc = convolve_arrays(acc, f, nu, tuple(x + S for x in rad)).real
    rad = tuple((s - 1) // 2 for s in acc.shape)
    value = float(acc[tuple(int(v) + q for v, q in zip(n, rad))])
    # split e^{-kappa|m|} into two halves; one half is bounded by e^{-kappa/2 |n|}.
    # Dropped tuples have some |m_j|_inf > S, hence |m_j|_1 > S.
    halves = [weighted_lattice_sum(a, kappa / 2, nu, S) for a in alpha]
    full = [sum(h) for h in halves]
    r = len(alpha)
    tail = sum(halves[j][1] * math.prod(full[i] for i in range(r) if i != j) for j in range(r))
    return value, tail * math.exp(-kappa / 2 * sum(abs(v) for v in n))


def appendix_checks(kappa: float, nu: int, r: int, alpha: Sequence[int] | None = None,
                    M_truncation: int = 60, z_max: float = 200.0, z_points: int = 20001,
                    n_targets: Sequence | None = None) -> AppendixReport:
    """Numerically confirm the four lattice-sum inequalities.

    Rows are ``(check, params, lhs_upper, rhs, ok)``; every left side is an
    upper bound (truncated sum plus tail bound), so a pass is one-sided
    rigorous up to rounding.
    """
    if not 0 < kappa <= 1:
        raise ValueError(f"kappa must lie in (0, 1], got {kappa}")
    alpha = tuple([1] * r if alpha is None else alpha)
    if len(alpha) != r:
        raise ValueError("alpha must have r entries")
    rep = AppendixReport(kappa, nu, r, alpha)

    # 1-d exponential sum
    q = math.exp(-kappa)
    part = 1 + 2 * math.fsum(q**m for m in range(1, M_truncation + 1))
    tail = 2 * math.exp(-kappa * (M_truncation + 1)) / (1 - q)
    rep.rows.append(("exp_sum_1d", f"kappa={kappa}", part + tail, 3 / kappa, part + tail <= 3 / kappa))

    # power vs exponential: z^a <= a! (2/kappa)^a e^{kappa z/2}
    for a in sorted(set(alpha) | {0}):
        z = np.linspace(0.0, max(z_max, 8 * (a + 1) / kappa), z_points)
        with np.errstate(over="ignore"):
            ratio = z**a / (math.factorial(a) * (2 / kappa) ** a * np.exp(kappa * z / 2))
        worst = float(np.max(ratio))
        rep.rows.append(("power_exp", f"alpha={a}", worst, 1.0, worst <= 1.0))

    fact = math.prod(math.factorial(a) for a in alpha)
    weight = sum(alpha) + nu * r

    # unconstrained product sum factorizes across the r factors
    S = tail_radius(alpha, kappa, nu, M_truncation)
    lhs = 1.0
    for a in alpha:
        lhs *= sum(weighted_lattice_sum(a, kappa, nu, S))
    rhs = (6 / kappa) ** weight * fact
    rep.rows.append(("product_sum", f"nu={nu},r={r},alpha={alpha}", lhs, rhs, lhs <= rhs))

    # constrained sum with e^{-kappa/2 |n|} decay, checked with constant 12/kappa
    S = tail_radius(alpha, kappa / 2, nu, 8)
    targets = n_targets if n_targets is not None else [(0,) * nu, (1,) + (0,) * (nu - 1),
                                                       (3,) * nu]
    for n in targets:
        val, tl = _convolution_sum(alpha, kappa, nu, tuple(n), S)
        rhs4 = (12 / kappa) ** weight * fact * math.exp(-kappa / 2 * sum(abs(v) for v in n))
        rep.rows.append(("convolution_sum", f"n={tuple(n)}", val + tl, rhs4, val + tl <= rhs4))
    return rep

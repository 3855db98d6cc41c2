"""Quasi-periodic functions represented by their Fourier coefficients.

A function ``u(x) = sum_n c(n) exp(i (n . omega) x)`` is stored as a
`CoefficientField`: a truncation `Box` plus a dense complex array aligned to
it.  Points of the box that carry no value are exactly zero.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .lattice import Box, DimensionError, WaveVector, frequency_grid, l1_norm


@dataclass(frozen=True)
class DecayProfile:
    """Decay hypothesis ``|c(n)| <= A^{1/(p-1)} exp(-kappa |n|)``."""

    A: float
    kappa: float
    p: int
    nu: int

    def __post_init__(self):
        if not self.A > 0 or not math.isfinite(self.A):
            raise ValueError(f"A must be positive and finite, got {self.A}")
        if not 0 < self.kappa <= 1:
            raise ValueError(f"kappa must lie in (0, 1], got {self.kappa}")
        if int(self.p) != self.p or self.p < 2:
            raise ValueError(f"p must be an integer >= 2, got {self.p}")
        if int(self.nu) != self.nu or self.nu < 1:
            raise ValueError(f"nu must be an integer >= 1, got {self.nu}")

    @property
    def amplitude(self) -> float:
        """Pointwise bound at n = 0, ``A^{1/(p-1)}``."""
        return self.A ** (1.0 / (self.p - 1))

    @property
    def box_constant(self) -> float:
        return 2.0 * (6.0 / self.kappa) ** self.nu * self.amplitude

    def bound(self, n: Sequence[int]) -> float:
        return self.amplitude * math.exp(-self.kappa * l1_norm(n))


class CoefficientField:
    """Finite map from lattice points of a box to complex coefficients."""

    def __init__(self, box: Box, values=None):
        self.box = box
        if values is None:
            values = np.zeros(box.shape, dtype=np.complex128)
        values = np.asarray(values, dtype=np.complex128)
        if values.shape != box.shape:
            raise ValueError(f"values of shape {values.shape} do not fit box {box.shape}")
        self.values = values

    @classmethod
    def from_mapping(cls, box: Box, mapping: Mapping) -> "CoefficientField":
        field = cls(box)
        for n, v in mapping.items():
            n = (n,) if isinstance(n, (int, np.integer)) else tuple(n)
            if n not in box:
                raise KeyError(f"{n} lies outside the box {box.radius}")
            field.values[box.index(n)] = v
        return field

    @classmethod
    def zeros(cls, box: Box) -> "CoefficientField":
        return cls(box)

    def __getitem__(self, n) -> complex:
        n = (n,) if isinstance(n, (int, np.integer)) else tuple(n)
        if n not in self.box:
            return 0j
        return complex(self.values[self.box.index(n)])

    def items(self) -> list:
        """Nonzero entries as ``(n, value)`` pairs in lexicographic order."""
        r = self.box.radius
        return [
            (tuple(int(i) - ri for i, ri in zip(idx, r)), complex(self.values[idx]))
            for idx in zip(*np.nonzero(self.values))
        ]

    def to_dict(self) -> dict:
        return dict(self.items())

    def nnz(self) -> int:
        return int(np.count_nonzero(self.values))

    def restrict(self, box: Box) -> "CoefficientField":
        """Same coefficients on another box; modes outside it are dropped."""
        from .convolution import crop_or_pad

        if box.nu != self.box.nu:
            raise DimensionError("cannot move a field to a box of another dimension")
        return CoefficientField(box, crop_or_pad(self.values, self.box.radius, box.radius))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def copy(self) -> "CoefficientField":
        return CoefficientField(self.box, self.values.copy())

    def _aligned(self, other):
        if other.box != self.box:
            big = self.box.union(other.box)
            return self.restrict(big).values, other.restrict(big).values, big
        return self.values, other.values, self.box

    def __add__(self, other):
        a, b, box = self._aligned(other)
        return CoefficientField(box, a + b)

    def __sub__(self, other):
        a, b, box = self._aligned(other)
        return CoefficientField(box, a - b)

    def __mul__(self, scalar):
        return CoefficientField(self.box, self.values * scalar)

    __rmul__ = __mul__

    def __repr__(self):
        return f"CoefficientField(radius={self.box.radius}, nnz={self.nnz()})"

    # -- CSV ---------------------------------------------------------------
    def to_csv(self, path) -> None:
        """Write nonzero coefficients as ``n_1,...,n_nu,re,im`` rows."""
        header = [f"n_{i + 1}" for i in range(self.box.nu)] + ["re", "im"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for n, v in self.items():
                w.writerow([*n, f"{v.real:.17g}", f"{v.imag:.17g}"])

    @classmethod
    def from_csv(cls, path, box: Optional[Box] = None) -> "CoefficientField":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        nu = len(rows[0]) - 2
        entries = {tuple(int(v) for v in row[:nu]): complex(float(row[nu]), float(row[nu + 1]))
                   for row in rows[1:] if row}
        if box is None:
            radius = [0] * nu
            for n in entries:
                radius = [max(r, abs(v)) for r, v in zip(radius, n)]
            box = Box(tuple(radius))
        return cls.from_mapping(box, entries)


# -- initial data ---------------------------------------------------------

def sample_initial_data(profile: DecayProfile, box: Box, seed: int,
                        realness: bool = True) -> CoefficientField:
    """Random coefficients obeying the decay hypothesis of `profile`.

    Each mode gets a uniform phase and a magnitude uniform in ``[0, bound]``,
    drawn from a Philox (counter-based) stream.  With `realness`,
    ``c(-n) = conj(c(n))`` and ``c(0)`` is real, so u_0 is real-valued.
    """
    if box.nu != profile.nu:
        raise DimensionError(f"box dimension {box.nu} != profile nu {profile.nu}")
    rng = np.random.Generator(np.random.Philox(seed))
    bound = profile.amplitude * np.exp(-profile.kappa * box.l1_grid())
    mag = rng.uniform(0.0, 1.0, size=box.shape) * bound
    phase = rng.uniform(0.0, 2 * np.pi, size=box.shape)
    values = mag * np.exp(1j * phase)
    if realness:
        flipped = np.conj(values[(slice(None, None, -1),) * box.nu])
        # keep the lexicographically later half, mirror it onto the earlier half
        flat = values.reshape(-1)
        mirror = flipped.reshape(-1)
        half = flat.size // 2
        flat[:half] = mirror[:half]
        flat[half] = np.copysign(abs(flat[half]), flat[half].real)
        values = flat.reshape(box.shape)
    return CoefficientField(box, values)


def decay_bound_check(field: CoefficientField, C: float, rate: float):
    """Test ``|c(n)| <= C exp(-rate |n|_1)`` on the whole box.

    Returns ``(holds, worst_margin, worst_n)`` where the margin of a mode is
    ``|c(n)| exp(rate |n|_1) - C``.
    """
    scaled = np.abs(field.values) * np.exp(rate * field.box.l1_grid())
    idx = np.unravel_index(int(np.argmax(scaled)), scaled.shape)
    worst = float(scaled[idx]) - C
    worst_n = tuple(int(i) - r for i, r in zip(idx, field.box.radius))
    return worst <= 0.0, worst, worst_n


def fit_decay(field: CoefficientField):
    """Least-squares fit ``log|c(n)| ~ log A - kappa |n|_1`` over nonzero modes."""
    mask = field.values != 0
    shells = field.box.l1_grid()[mask].astype(float)
    if shells.size < 2 or np.unique(shells).size < 2:
        raise ValueError("decay fit needs nonzero coefficients on at least two |n| shells")
    logs = np.log(np.abs(field.values[mask]))
    slope, intercept = np.polyfit(shells, logs, 1)
    return float(np.exp(intercept)), float(-slope)


# -- physical space -------------------------------------------------------

def _field_at(fields, t_index):
    if isinstance(fields, CoefficientField):
        return fields
    return fields.field(t_index)


def evaluate_u(fields, omega: WaveVector, t_index: Optional[int] = None, x=0.0):
    """Truncated Fourier sum ``sum_n c(n) exp(i (n . omega) x)``.

    `fields` is a `CoefficientField` or a trajectory (then `t_index` picks the
    node).  `x` may be a scalar or an array; the result has its shape.
    """
    field = _field_at(fields, t_index)
    return _evaluate_values(field.values, frequency_grid(field.box, omega), x)


def _evaluate_values(values, freqs, x):
    x = np.asarray(x, dtype=float)
    phase = np.exp(1j * np.multiply.outer(x, freqs.reshape(-1)))
    out = phase @ values.reshape(-1)
    return complex(out) if out.ndim == 0 else out


def pde_residual(trajectory, omega: WaveVector, p: int, sample_ts: Iterable[int],
                 sample_xs, nonlinear: str = "pointwise") -> float:
    """Max ``|u_t + u_xxx + u^{p-1} u_x|`` over sampled nodes and points.

    ``u_t`` is a second-order finite difference over the trajectory nodes
    (central inside, one-sided at the ends); x-derivatives are spectral.
    With ``nonlinear="pointwise"`` the nonlinear term is the product of the
    evaluated series, which includes the modes the truncation cannot hold.
    ``nonlinear="galerkin"`` instead uses ``(i n.omega / p) c^{*p}`` clipped
    to the box, the residual of the truncated system itself.
    """
    from .convolution import power_arrays

    vals = trajectory.values
    m_nodes = vals.shape[0]
    if m_nodes < 3:
        raise ValueError("residual needs at least 3 time nodes")
    if nonlinear not in ("pointwise", "galerkin"):
        raise ValueError(f"unknown nonlinear mode {nonlinear!r}")
    box = trajectory.box
    dt = trajectory.grid.dt
    freqs = frequency_grid(box, omega)
    xs = np.asarray(sample_xs, dtype=float)
    worst = 0.0
    for j in sample_ts:
        if j == 0:
            dc = (-3 * vals[0] + 4 * vals[1] - vals[2]) / (2 * dt)
        elif j == m_nodes - 1:
            dc = (3 * vals[j] - 4 * vals[j - 1] + vals[j - 2]) / (2 * dt)
        else:
            dc = (vals[j + 1] - vals[j - 1]) / (2 * dt)
        c = vals[j]
        linear = dc + (1j * freqs) ** 3 * c
        if nonlinear == "galerkin":
            cp = power_arrays(c, p, box.nu, box.radius)
            res = _evaluate_values(linear + (1j * freqs / p) * cp, freqs, xs)
        else:
            u = _evaluate_values(c, freqs, xs)
            ux = _evaluate_values(1j * freqs * c, freqs, xs)
            res = _evaluate_values(linear, freqs, xs) + u ** (p - 1) * ux
        worst = max(worst, float(np.max(np.abs(res))))
    return worst

"""Frequency lattice Z^nu: truncation boxes, norms, and the map n -> n.omega.

Lattice points are plain tuples of ints.  The size ``|n|`` used everywhere
in the package is the l1 norm and the size of a wave vector is its l-infinity
norm, so that ``|n . omega| <= |n| |omega|`` holds literally.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

MultiIndex = tuple


class DimensionError(ValueError):
    """Raised when objects living in different lattice dimensions meet."""


def as_multi_index(n: Iterable[int]) -> MultiIndex:
    return tuple(int(v) for v in n)


@dataclass(frozen=True)
class Box:
    """Per-dimension l-infinity truncation box ``|n_i| <= radius[i]``."""

    radius: tuple

    def __post_init__(self):
        radius = tuple(int(r) for r in np.atleast_1d(self.radius))
        if len(radius) < 1:
            raise ValueError("box needs at least one dimension")
        if any(r < 0 for r in radius):
            raise ValueError(f"box radii must be nonnegative, got {radius}")
        object.__setattr__(self, "radius", radius)

    @classmethod
    def cube(cls, nu: int, radius: int) -> "Box":
        return cls((radius,) * nu)

    @property
    def nu(self) -> int:
        return len(self.radius)

    @property
    def shape(self) -> tuple:
        return tuple(2 * r + 1 for r in self.radius)

    @property
    def cardinality(self) -> int:
        return math.prod(self.shape)

    def __contains__(self, n) -> bool:
        return len(n) == self.nu and all(abs(v) <= r for v, r in zip(n, self.radius))

    def index(self, n: Sequence[int]) -> tuple:
        """Array index of lattice point `n` in a box-aligned array."""
        return tuple(int(v) + r for v, r in zip(n, self.radius))

    def points(self) -> list:
        return enumerate_box(self)

    def coordinates(self) -> np.ndarray:
        """Integer coordinates, shape ``(nu, *shape)``."""
        axes = [np.arange(-r, r + 1) for r in self.radius]
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def l1_grid(self) -> np.ndarray:
        return np.abs(self.coordinates()).sum(axis=0)

    def scaled(self, factor: int) -> "Box":
        return Box(tuple(factor * r for r in self.radius))

    def union(self, other: "Box") -> "Box":
        _check_dims(self.nu, other.nu)
        return Box(tuple(max(a, b) for a, b in zip(self.radius, other.radius)))

    def minkowski(self, other: "Box") -> "Box":
        _check_dims(self.nu, other.nu)
        return Box(tuple(a + b for a, b in zip(self.radius, other.radius)))


@dataclass(frozen=True)
class WaveVector:
    """Spatial frequencies omega, optionally with an exact rational form."""

    omega: tuple
    rational: Optional[tuple] = None

    def __post_init__(self):
        omega = tuple(float(w) for w in np.atleast_1d(self.omega))
        if len(omega) < 1:
            raise ValueError("wave vector needs at least one component")
        if all(w == 0.0 for w in omega):
            raise ValueError("wave vector must be nonzero")
        object.__setattr__(self, "omega", omega)
        if self.rational is not None:
            rational = tuple(Fraction(q) for q in self.rational)
            if len(rational) != len(omega):
                raise DimensionError("rational form has wrong dimension")
            object.__setattr__(self, "rational", rational)

    @classmethod
    def from_rationals(cls, values: Sequence) -> "WaveVector":
        rational = tuple(Fraction(v) for v in values)
        return cls(tuple(float(q) for q in rational), rational)

    @property
    def nu(self) -> int:
        return len(self.omega)

    @property
    def norm(self) -> float:
        return max(abs(w) for w in self.omega)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.omega, dtype=float)


def _check_dims(a: int, b: int) -> None:
    if a != b:
        raise DimensionError(f"dimension mismatch: {a} != {b}")


def enumerate_box(box: Box) -> list:
    """All lattice points of `box` in lexicographic order."""
    return list(itertools.product(*(range(-r, r + 1) for r in box.radius)))


def l1_norm(n: Sequence[int]) -> int:
    return sum(abs(int(v)) for v in n)


def frequency(n: Sequence[int], omega: WaveVector) -> float:
    _check_dims(len(n), omega.nu)
    return float(np.dot(np.asarray(n, dtype=float), omega.as_array()))


def frequency_grid(box: Box, omega: WaveVector) -> np.ndarray:
    """``n . omega`` for every point of `box`, as a box-shaped array."""
    _check_dims(box.nu, omega.nu)
    coords = box.coordinates().astype(float)
    return np.tensordot(omega.as_array(), coords, axes=1)


def resonance_scan(omega: WaveVector, box: Box) -> list:
    """Nonzero ``n`` in `box` with ``n . omega == 0`` exactly.

    Uses integer arithmetic on the rational form of `omega`; an empty list
    certifies non-resonance inside the box.
    """
    if omega.rational is None:
        raise ValueError("resonance scan needs the rational form of omega")
    _check_dims(box.nu, omega.nu)
    denom = math.lcm(*(q.denominator for q in omega.rational))
    weights = [int(q * denom) for q in omega.rational]
    hits = []
    for n in enumerate_box(box):
        if any(n) and sum(a * w for a, w in zip(n, weights)) == 0:
            hits.append(n)
    return hits

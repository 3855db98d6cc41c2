"""Picard iteration for the Fourier coefficients of gKdV.

The coefficients solve

    c(t, n) = e^{i(n.w)^3 t} c(n)
              - (i n.w / p) int_0^t e^{i(n.w)^3 (t - s)} c^{*p}(s, n) ds

and the iteration replaces ``c`` on the right by the previous iterate.  Time
integrals are composite trapezoid sums on a uniform grid; since the kernel
factors as ``e^{iOt} e^{-iOs}``, one cumulative sum per step serves every
target node.  The module also evaluates the explicit local-existence
constants and checks computed iterates against the decay and contraction
bounds they are supposed to satisfy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from .convolution import power_arrays
from .lattice import Box, DimensionError, WaveVector, frequency_grid
from .qpfield import CoefficientField, DecayProfile, decay_bound_check


@dataclass(frozen=True)
class TimeGrid:
    t_end: float
    M: int

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"M must be an integer >= 2, got {self.M}")

    @property
    def dt(self) -> float:
        return self.t_end / self.M

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.M + 1) * self.dt


class Trajectory:
    """One Picard iterate ``c_k(tau_j, .)`` at every node of a time grid.

    `values` has shape ``(M + 1, *box.shape)``.
    """

    def __init__(self, grid: TimeGrid, box: Box, values, k: int = 0):
        values = np.asarray(values, dtype=np.complex128)
        if values.shape != (grid.M + 1,) + box.shape:
            raise ValueError(f"trajectory values of shape {values.shape} do not match grid/box")
        self.grid = grid
        self.box = box
        self.values = values
        self.k = k

    def field(self, j: int) -> CoefficientField:
        return CoefficientField(self.box, self.values[j])

    @property
    def fields(self) -> list:
        return [self.field(j) for j in range(self.grid.M + 1)]

    def sup_gap(self, other: "Trajectory") -> float:
        return float(np.max(np.abs(self.values - other.values)))

    def __repr__(self):
        return f"Trajectory(k={self.k}, M={self.grid.M}, t_end={self.grid.t_end:g}, radius={self.box.radius})"


# -- oscillatory phases ---------------------------------------------------

_SPLIT = 134217729.0  # 2**27 + 1
_TWO_PI_HI = 6.283185307179586
_TWO_PI_LO = 2.4492935982947064e-16
_CLIFF = 2.0**46


def _two_prod(a, b):
    p = a * b
    a_hi = _SPLIT * a - (_SPLIT * a - a)
    a_lo = a - a_hi
    b_hi = _SPLIT * b - (_SPLIT * b - b)
    b_lo = b - b_hi
    err = ((a_hi * b_hi - p) + a_hi * b_lo + a_lo * b_hi) + a_lo * b_lo
    return p, err


def phase_angle(rate, tau):
    """``rate * tau`` reduced modulo 2 pi.

    Beyond ``|rate * tau| > 2**46`` the product is formed in double-double
    arithmetic before reduction; accuracy is then limited by `rate` itself.
    """
    rate, tau = np.broadcast_arrays(np.asarray(rate, float), np.asarray(tau, float))
    theta = np.array(rate * tau)
    big = np.abs(theta) > _CLIFF
    if np.any(big):
        hi, lo = _two_prod(rate[big], tau[big])
        turns = np.round(hi / _TWO_PI_HI)
        ph, pl = _two_prod(turns, np.full_like(turns, _TWO_PI_HI))
        rem = (((hi - ph) - pl) - turns * _TWO_PI_LO) + lo
        # turns is only accurate to a few units here; a second pass finishes the reduction
        theta[big] = rem - np.round(rem / _TWO_PI_HI) * _TWO_PI_HI
    return theta


def _phases(box: Box, omega: WaveVector, grid: TimeGrid):
    freqs = frequency_grid(box, omega)
    rate = freqs**3
    taus = grid.nodes.reshape((-1,) + (1,) * box.nu)
    theta = phase_angle(rate[None, ...], taus)
    return freqs, np.exp(1j * theta)


# -- iteration ------------------------------------------------------------

def _check(field_: CoefficientField, omega: WaveVector):
    if field_.box.nu != omega.nu:
        raise DimensionError(f"field dimension {field_.box.nu} != omega dimension {omega.nu}")


def free_evolution(c0_field: CoefficientField, omega: WaveVector, grid: TimeGrid) -> Trajectory:
    _check(c0_field, omega)
    _, fwd = _phases(c0_field.box, omega, grid)
    return Trajectory(grid, c0_field.box, fwd * c0_field.values[None, ...], k=0)


def picard_step(prev: Trajectory, omega: WaveVector, p: int,
                c0_field: CoefficientField, method: str = "auto") -> Trajectory:
    """One application of the Picard map to `prev`.

    The convolution power of every node is computed once; trapezoid prefix
    sums of ``e^{-iO s} c^{*p}(s)`` then give all target nodes.  The n = 0
    mode is pinned to ``c(0)``.
    """
    _check(c0_field, omega)
    if c0_field.box != prev.box:
        raise DimensionError("initial data and trajectory use different boxes")
    if int(p) != p or p < 2:
        raise ValueError(f"degree p must be an integer >= 2, got {p}")
    box, grid = prev.box, prev.grid
    freqs, fwd = _phases(box, omega, grid)
    conv = power_arrays(prev.values, p, box.nu, box.radius, method=method)
    g = np.conj(fwd) * conv
    Q = np.zeros_like(g)
    Q[1:] = np.cumsum(0.5 * grid.dt * (g[:-1] + g[1:]), axis=0)
    c0 = fwd * c0_field.values[None, ...]
    values = c0 - (1j * freqs / p)[None, ...] * fwd * Q
    values[(slice(None),) + tuple(box.radius)] = c0_field.values[tuple(box.radius)]
    return Trajectory(grid, box, values, k=prev.k + 1)


@dataclass
class IterationResult:
    final: Trajectory
    diffs: list
    converged: bool

    def __iter__(self):
        return iter((self.final, self.diffs, self.converged))


def iterate(c0_field: CoefficientField, omega: WaveVector, p: int, grid: TimeGrid,
            tol: float = 1e-10, k_max: int = 50, method: str = "auto") -> IterationResult:
    """Run Picard steps until the sup-norm gap between iterates drops to `tol`.

    Growth is never treated as an error: when `k_max` is reached the result
    simply reports ``converged=False``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    traj = free_evolution(c0_field, omega, grid)
    diffs = []
    for _ in range(k_max):
        with np.errstate(over="ignore", invalid="ignore"):
            nxt = picard_step(traj, omega, p, c0_field, method=method)
            gap = nxt.sup_gap(traj)
        diffs.append(gap)
        traj = nxt
        if gap <= tol:
            return IterationResult(traj, diffs, True)
        if not math.isfinite(gap):
            break
    return IterationResult(traj, diffs, False)


# -- explicit constants ---------------------------------------------------

@dataclass(frozen=True)
class ExistenceConstants:
    t0: float
    box_const: float
    theta: float
    contraction_coeff: float
    t0_decay: float
    t0_contraction: float
    p: int
    nu: int
    kappa: float
    omega_norm: float


def existence_constants(profile: DecayProfile, omega) -> ExistenceConstants:
    """Local existence time t0 and the constants of the Cauchy estimates.

    `omega` is a `WaveVector` or directly its size ``|omega|``.
    """
    w = omega.norm if isinstance(omega, WaveVector) else float(omega)
    if not w > 0:
        raise ValueError("wave vector must be nonzero")
    p, nu, kappa, A = profile.p, profile.nu, profile.kappa, profile.A
    e = (p - 1) * nu + 1
    box_const = profile.box_constant
    theta = (12.0 / kappa) ** nu * box_const
    coeff = 2 * (p - 1) * math.e * box_const ** (p - 1) * (12.0 / kappa) ** e * w
    t0_decay = kappa**e / (2 ** (p + 1) * 6.0**e * A * w)
    t0_contraction = kappa**e / (2 * (p - 1) * math.e * box_const ** (p - 1) * 12.0**e * w)
    return ExistenceConstants(
        t0=min(t0_decay, t0_contraction), box_const=box_const, theta=theta,
        contraction_coeff=coeff, t0_decay=t0_decay, t0_contraction=t0_contraction,
        p=p, nu=nu, kappa=kappa, omega_norm=w,
    )


def _exact_root(x: Fraction, q: int) -> Optional[Fraction]:
    num, den = round(x.numerator ** (1 / q)), round(x.denominator ** (1 / q))
    for a in (num - 1, num, num + 1):
        for b in (den - 1, den, den + 1):
            if a > 0 and b > 0 and Fraction(a, b) ** q == x:
                return Fraction(a, b)
    return None


def exact_box_constant(A, kappa, p: int, nu: int) -> Fraction:
    """``2 (6/kappa)^nu A^{1/(p-1)}`` as a rational; needs a rational root of A."""
    A, kappa = Fraction(A), Fraction(kappa)
    root = _exact_root(A, p - 1)
    if root is None:
        raise ValueError(f"A^(1/(p-1)) = {A}^(1/{p - 1}) is not rational")
    return 2 * (6 / kappa) ** nu * root


def exact_t0_decay(A, kappa, p: int, nu: int, omega_norm) -> Fraction:
    """The decay branch of t0 in rational arithmetic."""
    A, kappa, w = Fraction(A), Fraction(kappa), Fraction(omega_norm)
    e = (p - 1) * nu + 1
    return kappa**e / (2 ** (p + 1) * Fraction(6) ** e * A * w)


# -- certificates ---------------------------------------------------------

@dataclass
class DecayReport:
    certified: bool
    worst_margin: float
    worst_node: int
    worst_n: tuple
    node_margins: list
    certified_quarter_rate: bool

    def rows(self):
        return [("node", j, m) for j, m in enumerate(self.node_margins)]


def decay_certificate(traj: Trajectory, consts: ExistenceConstants,
                      profile: DecayProfile) -> DecayReport:
    """Check ``|c(tau_j, n)| <= box_const e^{-kappa/2 |n|}`` at every node.

    The weaker rate kappa/4 used inside the Cauchy estimates is checked too.
    """
    margins, worst = [], (-math.inf, 0, ())
    quarter = True
    for j in range(traj.grid.M + 1):
        f = traj.field(j)
        _, margin, n = decay_bound_check(f, consts.box_const, profile.kappa / 2)
        margins.append(margin)
        if margin > worst[0]:
            worst = (margin, j, n)
        quarter &= decay_bound_check(f, consts.box_const, profile.kappa / 4)[0]
    return DecayReport(worst[0] <= 0, worst[0], worst[1], worst[2], margins, quarter)


@dataclass
class ContractionReport:
    passed: bool
    q: float
    rows: list = field(default_factory=list)


def contraction_certificate(diffs, consts: ExistenceConstants, t_end: float) -> ContractionReport:
    """Compare iterate gaps with ``Theta e^{1/(p-1)} (coeff t_end)^k``.

    Each row is ``(k, diff_k, bound_k, ratio_k, ok)``; the ratio
    ``diff_k / diff_{k-1}`` must also stay below ``coeff * t_end``.
    """
    q = consts.contraction_coeff * t_end
    pref = consts.theta * math.exp(1.0 / (consts.p - 1))
    rows, ok_all = [], True
    for k, d in enumerate(diffs, start=1):
        bound = pref * q**k
        ratio = None
        ok = d <= bound
        if k > 1:
            prev = diffs[k - 2]
            ratio = d / prev if prev > 0 else 0.0
            ok &= ratio <= q
        rows.append((k, d, bound, ratio, bool(ok)))
        ok_all &= bool(ok)
    return ContractionReport(ok_all, q, rows)


def uniqueness_window(consts: ExistenceConstants, rho: float, t1: float, t2: float,
                      box_exponent: Optional[int] = None) -> float:
    """``min{t1, t2, 1/(2(p-1) e B^{p-1} (12/rho)^{(p-1)nu+1} |omega|)}``.

    `box_exponent` overrides the power of the box constant B (default p-1).
    """
    if not 0 < rho <= 1:
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    p, nu = consts.p, consts.nu
    k = p - 1 if box_exponent is None else box_exponent
    third = 1.0 / (2 * (p - 1) * math.e * consts.box_const**k
                   * (12.0 / rho) ** ((p - 1) * nu + 1) * consts.omega_norm)
    return min(t1, t2, third)


# -- serialization --------------------------------------------------------

def save_trajectory(traj: Trajectory, directory, **meta) -> Path:
    """One CSV per node plus ``manifest.txt`` (key=value lines)."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    width = len(str(traj.grid.M))
    for j in range(traj.grid.M + 1):
        traj.field(j).to_csv(out / f"node_{j:0{width}d}.csv")
    manifest = {"nu": traj.box.nu, "M": traj.grid.M, "t_end": repr(traj.grid.t_end),
                "radius": ",".join(map(str, traj.box.radius)), "k": traj.k}
    manifest.update(meta)
    with open(out / "manifest.txt", "w", encoding="utf-8") as fh:
        for key in ("nu", "p", "M", "t_end", "radius", "seed", "k"):
            if key in manifest:
                fh.write(f"{key}={manifest.pop(key)}\n")
        for key, val in manifest.items():
            fh.write(f"{key}={val}\n")
    return out


def load_trajectory(directory) -> Trajectory:
    src = Path(directory)
    meta = {}
    for line in (src / "manifest.txt").read_text(encoding="utf-8").splitlines():
        if "=" in line:
            key, val = line.split("=", 1)
            meta[key.strip()] = val.strip()
    grid = TimeGrid(float(meta["t_end"]), int(meta["M"]))
    box = Box(tuple(int(r) for r in meta["radius"].split(",")))
    width = len(str(grid.M))
    values = np.stack([
        CoefficientField.from_csv(src / f"node_{j:0{width}d}.csv", box).values
        for j in range(grid.M + 1)
    ])
    return Trajectory(grid, box, values, k=int(meta.get("k", 0)))

"""Combinatorial trees labelling the terms of the Picard iterates.

A branch of level k is ``0`` (free evolution), ``1`` (only at level 1: one
nonlinear interaction of free waves) or a tuple of p branches of level k-1.
Each branch carries three integers:

* ``ell``  -- number of time integrations,
* ``sigma_num = (p-1) * sigma`` -- number of leaf coefficients, stored as an
  integer numerator so that ``sigma_num == (p-1) * ell + 1`` is exact,
* ``dfac`` -- the denominator produced by the nested time integrals.

The index sets of multi-indices used by the decay and Cauchy estimates, the
weak compositions ``H(N; d)``, the decrement map ``phi`` and the factorial
sums are built exactly with Python integers so that every inequality can be
checked without rounding.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .lattice import Box, WaveVector, enumerate_box, frequency

DEFAULT_CAP = 10**7
INDEX_CAP = 10**6


class CapExceeded(RuntimeError):
    """An enumeration would exceed its configured size cap."""


# -- branches -------------------------------------------------------------

def tree_count(k: int, p: int) -> int:
    """``N_k`` with ``N_0 = 1`` and ``N_k = 1 + N_{k-1}^p``."""
    n = 1
    for _ in range(k):
        n = 1 + n**p
    return n


def enumerate_branches(k: int, p: int, cap: int = DEFAULT_CAP) -> list:
    if k < 1 or p < 2:
        raise ValueError(f"need k >= 1 and p >= 2, got k={k}, p={p}")
    if tree_count(k, p) > cap:
        raise CapExceeded(f"|T^({k})| = {tree_count(k, p)} exceeds cap {cap}")
    level = [0, 1]
    for _ in range(2, k + 1):
        level = [0] + list(itertools.product(level, repeat=p))
    return level


@dataclass(frozen=True)
class BranchStats:
    ell: int
    sigma_num: int
    dfac: int

    def sigma(self, p: int) -> Fraction:
        return Fraction(self.sigma_num, p - 1)


@lru_cache(maxsize=None)
def stats(gamma, p: int) -> BranchStats:
    if gamma == 0:
        return BranchStats(0, 1, 1)
    if gamma == 1:
        return BranchStats(1, p, 1)
    kids = [stats(g, p) for g in gamma]
    ell = sum(s.ell for s in kids) + 1
    return BranchStats(ell, sum(s.sigma_num for s in kids), ell * math.prod(s.dfac for s in kids))


def leaf_count(gamma, p: int) -> int:
    return stats(gamma, p).sigma_num


# -- index sets -----------------------------------------------------------

def unit_vectors(length: int) -> list:
    return [tuple(int(i == j) for i in range(length)) for j in range(length)]


def _minkowski_units(vectors, length: int, cap: int) -> frozenset:
    if len(vectors) * length > cap:
        raise CapExceeded(f"{len(vectors) * length} candidate index vectors exceed cap {cap}")
    out = set()
    for v in vectors:
        for j in range(length):
            out.add(v[:j] + (v[j] + 1,) + v[j + 1:])
    return frozenset(out)


@lru_cache(maxsize=None)
def candidate_bound(gamma, p: int) -> int:
    """Upper bound on the vectors built for the weight set of `gamma` (before dedup)."""
    if gamma == 0:
        return 1
    if gamma == 1:
        return p
    return math.prod(candidate_bound(g, p) for g in gamma) * leaf_count(gamma, p)


def index_set_R(k: int, gamma, p: int, cap: int = INDEX_CAP) -> frozenset:
    """The weight set of a branch: children's sets concatenated, plus a unit vector."""
    if candidate_bound(gamma, p) > cap:
        raise CapExceeded(f"weight set of {gamma} needs up to {candidate_bound(gamma, p)} "
                          f"vectors, cap {cap}")
    return _index_set_R(gamma, p, cap)


@lru_cache(maxsize=None)
def _index_set_R(gamma, p, cap):
    if gamma == 0:
        return frozenset({(0,)})
    if gamma == 1:
        return frozenset(unit_vectors(p))
    parts = [_index_set_R(g, p, cap) for g in gamma]
    total = math.prod(len(s) for s in parts)
    length = leaf_count(gamma, p)
    if total * length > cap:
        raise CapExceeded(f"{total * length} candidate index vectors exceed cap {cap}")
    concat = [sum(combo, ()) for combo in itertools.product(*(sorted(s) for s in parts))]
    return _minkowski_units(concat, length, cap)


def index_set_B(k: int, p: int, cap: int = INDEX_CAP) -> frozenset:
    """Weight set of the k-th Cauchy difference: previous set padded by p-1 zeros, plus a unit vector."""
    if k < 1:
        raise ValueError("k must be >= 1")
    current = frozenset(unit_vectors(p))
    for j in range(2, k + 1):
        length = (p - 1) * j + 1
        padded = [v + (0,) * (p - 1) for v in sorted(current)]
        current = _minkowski_units(padded, length, cap)
    return current


def factorial_weight(alpha) -> int:
    return math.prod(math.factorial(a) for a in alpha)


def weighted_tree_sum(k: int, p: int, t, cap: int = INDEX_CAP, exact: bool = False):
    """``sum_gamma t^ell / D(gamma) * sum_{alpha in R} prod alpha_j!`` over level k.

    Evaluated in exact rationals (floats `t` are converted exactly), then
    rounded once unless `exact`.  Every weight set is size-checked before
    any is built.
    """
    t = Fraction(t)
    total = Fraction(0)
    branches = enumerate_branches(k, p)
    worst = max(candidate_bound(g, p) for g in branches)
    if worst > cap:
        raise CapExceeded(f"level-{k} weight sets need up to {worst} vectors, cap {cap}")
    for gamma in branches:
        s = stats(gamma, p)
        inner = sum(factorial_weight(a) for a in index_set_R(k, gamma, p, cap))
        total += t**s.ell / s.dfac * inner
    return total if exact else float(total)


# -- weak compositions and phi --------------------------------------------

def compositions_H(N: int, d: int, cap: int = DEFAULT_CAP) -> list:
    """All ``alpha in Z^N`` with nonnegative entries summing to `d`, in lexicographic order."""
    if N < 1 or d < 0:
        raise ValueError(f"need N >= 1 and d >= 0, got N={N}, d={d}")
    if math.comb(N + d - 1, d) > cap:
        raise CapExceeded(f"|H({N};{d})| = {math.comb(N + d - 1, d)} exceeds cap {cap}")
    out = []
    for bars in itertools.combinations(range(N + d - 1), N - 1):
        edges = (-1,) + bars + (N + d - 1,)
        out.append(tuple(edges[i + 1] - edges[i] - 1 for i in range(N)))
    return sorted(out)


def j_star(alpha) -> int:
    """First position (0-based) holding the smallest positive entry."""
    positive = [a for a in alpha if a > 0]
    if not positive:
        raise ValueError("j_star is undefined for the zero vector")
    smallest = min(positive)
    return next(i for i, a in enumerate(alpha) if a == smallest)


def phi(alpha) -> tuple:
    """Decrement the first occurrence of the smallest positive entry."""
    j = j_star(alpha)
    return alpha[:j] + (alpha[j] - 1,) + alpha[j + 1:]


def factorial_sum(N: int, d: int, cap: int = DEFAULT_CAP) -> int:
    return sum(factorial_weight(a) for a in compositions_H(N, d, cap))


def bound_check(N: int, d: int, cap: int = DEFAULT_CAP) -> bool:
    """Single-step bound ``S(N,d) <= (d+N) S(N,d-1)`` and ``S(N,d) < (2N)^d``, for 1 <= d <= N."""
    if d > N:
        raise ValueError(f"d={d} > N={N} lies outside the factorial-sum bound")
    if d < 1:
        raise ValueError("the bound is stated for d >= 1")
    s = factorial_sum(N, d, cap)
    return s <= (d + N) * factorial_sum(N, d - 1, cap) and s < (2 * N) ** d


def phi_properties(N: int, d: int) -> dict:
    """Exhaustively test the five properties of phi on ``H(N; d)``, plus preimage sizes."""
    H = compositions_H(N, d)
    lower = set(compositions_H(N, d - 1))
    image = {a: phi(a) for a in H}
    js = {a: j_star(a) for a in H}
    res = {}
    res["maps_into"] = all(b in lower for b in image.values())
    ok2 = True
    for a, b in image.items():
        j = js[a]
        others = [b[i] for i in range(N) if i != j and b[i] > 0]
        ok2 &= (not others) or b[j] < min(others)
    res["strict_min"] = ok2
    fibres = {}
    for a, b in image.items():
        fibres.setdefault(b, []).append(a)
    ok3 = ok4 = ok5 = True
    for group in fibres.values():
        for a, a2 in itertools.combinations(group, 2):
            skip = {js[a], js[a2]}
            ok3 &= all(a[i] == a2[i] for i in range(N) if i not in skip)
            if js[a] == js[a2]:
                ok4 &= a == a2
            if a[js[a]] > 1 and a2[js[a2]] > 1:
                ok5 &= a == a2
        # pairs (a, a) trivially satisfy 3 to 5; distinct pairs were checked above
    res["agree_off_jstar"] = ok3
    res["same_jstar_injective"] = ok4
    res["injective_on_big_min"] = ok5
    res["max_preimage"] = max((len(g) for g in fibres.values()), default=0)
    res["preimage_le_N"] = res["max_preimage"] <= N
    return res


# -- tree form of c_k ----------------------------------------------------

def _leaf_assignments(gamma, p, box: Box):
    """Leaf tuples (one lattice point per leaf coordinate) as an int array ``(count, L, nu)``."""
    L = leaf_count(gamma, p)
    pts = np.array(enumerate_box(box), dtype=np.int64)
    idx = np.array(list(itertools.product(range(len(pts)), repeat=L)), dtype=np.int64)
    return pts[idx]


def _node_sums(gamma, p, leaves):
    """Vectorised subtree sums.

    Returns ``(root_sum, internal)`` where ``internal`` lists the sums of every
    non-root internal node and every ``1``-leaf, each of shape ``(count, nu)``.
    """
    if gamma == 0:
        return leaves[:, 0], []
    if gamma == 1:
        return leaves[:, :p].sum(axis=1), []
    pos, mus, internal = 0, [], []
    for g in gamma:
        size = leaf_count(g, p)
        mu, sub = _node_sums(g, p, leaves[:, pos:pos + size])
        mus.append(mu)
        internal.extend(sub)
        if g != 0:
            internal.append(mu)
        pos += size
    return sum(mus), internal


def _branch_integral(gamma, p, leaves, omega_arr, grid):
    """Values of the nested time integral of a branch on all nodes of `grid`.

    Shape ``(count, len(grid))``.  Each level is a cumulative trapezoid sum of
    ``e^{-iO s} prod(children)`` scaled back by ``e^{iO t}``.
    """
    if gamma == 0:
        rate = (leaves[:, 0] @ omega_arr) ** 3
        return np.exp(1j * np.multiply.outer(rate, grid))
    if gamma == 1:
        children = [np.exp(1j * np.multiply.outer((leaves[:, j] @ omega_arr) ** 3, grid))
                    for j in range(p)]
    else:
        children, pos = [], 0
        for g in gamma:
            size = leaf_count(g, p)
            children.append(_branch_integral(g, p, leaves[:, pos:pos + size], omega_arr, grid))
            pos += size
    prod = math.prod(children)
    rate = (leaves.sum(axis=1) @ omega_arr) ** 3
    fwd = np.exp(1j * np.multiply.outer(rate, grid))
    g_vals = np.conj(fwd) * prod
    dt = np.diff(grid)
    cum = np.zeros_like(g_vals)
    cum[:, 1:] = np.cumsum(0.5 * dt * (g_vals[:, :-1] + g_vals[:, 1:]), axis=1)
    return fwd * cum


def _branch_prefactor(gamma, p, leaves, omega_arr):
    """Product of ``-i mu.omega / p`` over the root, internal nodes and 1-leaves."""
    root, internal = _node_sums(gamma, p, leaves)
    out = -1j * (root @ omega_arr) / p
    for mu in internal:
        out = out * (-1j * (mu @ omega_arr) / p)
    return out


def tree_evaluate_ck(c0_field, omega: WaveVector, p: int, k: int, t: float, n,
                     quad_M: int = 64, clip: bool = True, cap: int = 2 * 10**6) -> complex:
    """Evaluate ``c_k(t, n)`` as a sum over branches and leaf assignments.

    Leaves range over the box of `c0_field`.  With `clip` every subtree sum
    must also lie in the box, which reproduces the truncated Picard
    iteration exactly; without it the sum is the untruncated tree series
    for box-supported data.  Time integrals use a uniform trapezoid grid of
    `quad_M` intervals on ``[0, t]``.
    """
    box = c0_field.box
    n = tuple(n) if not isinstance(n, (int, np.integer)) else (int(n),)
    omega_arr = omega.as_array()
    grid = np.linspace(0.0, t, quad_M + 1)
    pts = len(enumerate_box(box))
    r = np.array(box.radius)
    total = 0j
    for gamma in enumerate_branches(k, p):
        L = leaf_count(gamma, p)
        if pts**L > cap:
            raise CapExceeded(f"{pts ** L} leaf assignments exceed cap {cap}")
        if gamma == 0:
            total += c0_field[n] * np.exp(1j * frequency(n, omega) ** 3 * t)
            continue
        leaves = _leaf_assignments(gamma, p, box)
        root, internal = _node_sums(gamma, p, leaves)
        keep = np.all(root == np.array(n), axis=1)
        if clip:
            for mu in internal:
                keep &= np.all(np.abs(mu) <= r, axis=1)
        leaves = leaves[keep]
        if not len(leaves):
            continue
        c_prod = np.ones(len(leaves), dtype=complex)
        for j in range(L):
            c_prod *= c0_field.values[tuple((leaves[:, j] + r).T)]
        live = c_prod != 0
        leaves, c_prod = leaves[live], c_prod[live]
        if not len(leaves):
            continue
        pref = _branch_prefactor(gamma, p, leaves, omega_arr)
        integ = _branch_integral(gamma, p, leaves, omega_arr, grid)[:, -1]
        total += complex(np.sum(pref * integ * c_prod))
    return total


# -- verification report --------------------------------------------------

def combinatorics_rows(k_max: int, p_list, cap: int = DEFAULT_CAP, index_cap: int = INDEX_CAP,
                       fault: bool = False, nd_max: int = 6):
    """Run every exact check and return rows ``(lemma, k, p, params, lhs, rhs, passed)``.

    Checks whose enumeration exceeds `cap` are reported as skipped rows with
    ``passed=None``.  With `fault` one factorial term of the largest
    composition sum is inflated to exercise the failure path.
    """
    rows = []
    for p in p_list:
        for k in range(1, k_max + 1):
            try:
                branches = enumerate_branches(k, p, cap)
            except CapExceeded:
                rows.append(("tree_count", k, p, "", "", "", None))
                continue
            rows.append(("tree_count", k, p, "", len(branches), tree_count(k, p),
                         len(branches) == tree_count(k, p)))
            sig_ok = all(stats(g, p).sigma_num == (p - 1) * stats(g, p).ell + 1 for g in branches)
            rows.append(("sigma_ell_identity", k, p, "", int(sig_ok), 1, sig_ok))
            try:
                t = Fraction(1, 2 ** (p + 1))
                val = weighted_tree_sum(k, p, t, index_cap, exact=True)
                r_ok = all(sum(a) == stats(g, p).ell and len(a) == leaf_count(g, p)
                           for g in branches for a in index_set_R(k, g, p, index_cap))
                rows.append(("R_weight", k, p, "", int(r_ok), 1, r_ok))
                rows.append(("weighted_tree_sum", k, p, f"t={t}", float(val), 2, val <= 2))
            except CapExceeded:
                rows.append(("R_weight", k, p, "", "", "", None))
                rows.append(("weighted_tree_sum", k, p, "", "", "", None))
            B = index_set_B(k, p, index_cap)
            L = (p - 1) * k + 1
            b_ok = all(len(a) == L and sum(a) == k for a in B)
            rows.append(("B_weight", k, p, f"len={L}", int(b_ok), 1, b_ok))
            fsum = sum(factorial_weight(a) for a in B)
            rows.append(("B_factorial_sum", k, p, f"N={L}", fsum, (2 * L) ** k, fsum <= (2 * L) ** k))
    for N in range(1, nd_max + 1):
        for d in range(1, N + 1):
            s = factorial_sum(N, d)
            if fault and (N, d) == (nd_max, nd_max):
                s += (2 * N) ** d
            step = (d + N) * factorial_sum(N, d - 1)
            rows.append(("factorial_step", "", "", f"N={N},d={d}", s, step, s <= step))
            rows.append(("factorial_bound", "", "", f"N={N},d={d}", s, (2 * N) ** d, s < (2 * N) ** d))
    for N in range(1, nd_max + 1):
        for d in range(1, nd_max + 1):
            props = phi_properties(N, d)
            for name in ("maps_into", "strict_min", "agree_off_jstar",
                         "same_jstar_injective", "injective_on_big_min"):
                rows.append((f"phi_{name}", "", "", f"N={N},d={d}", int(props[name]), 1, props[name]))
            rows.append(("phi_preimage", "", "", f"N={N},d={d}", props["max_preimage"], N,
                         props["preimage_le_N"]))
    return rows

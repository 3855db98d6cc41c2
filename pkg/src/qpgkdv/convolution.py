"""p-fold discrete convolution (Cauchy product) of truncated coefficient fields.

Arrays are box-aligned: an array of trailing shape ``(2r_1+1, ..., 2r_nu+1)``
holds the coefficient of lattice point ``n`` at index ``n + r``.  All array
routines accept arbitrary leading batch axes, which the Picard solver uses to
convolve every node of a time grid at once.

Two paths compute the same exact truncated sum:

* ``direct`` walks the union support of the left operand in lexicographic
  order and shift-adds scaled copies of the right operand;
* ``fft`` zero-pads both operands to the full linear-convolution extent (so the
  cyclic product never wraps) and multiplies spectra.

``auto`` picks ``fft`` once ``|box a| * |box b|`` exceeds `FFT_THRESHOLD`.
"""
from __future__ import annotations

import numpy as np
import scipy.fft

from .lattice import Box, DimensionError
from .qpfield import CoefficientField

FFT_THRESHOLD = 10**6


def _radius_of(arr: np.ndarray, nu: int) -> tuple:
    return tuple((s - 1) // 2 for s in arr.shape[arr.ndim - nu:])


def crop_or_pad(arr: np.ndarray, radius: tuple, new_radius: tuple) -> np.ndarray:
    """Re-center a box-aligned array on a box of radius `new_radius`."""
    nu = len(radius)
    lead = arr.shape[: arr.ndim - nu]
    out = np.zeros(lead + tuple(2 * r + 1 for r in new_radius), dtype=arr.dtype)
    src, dst = [slice(None)] * len(lead), [slice(None)] * len(lead)
    for r, q in zip(radius, new_radius):
        m = min(r, q)
        src.append(slice(r - m, r + m + 1))
        dst.append(slice(q - m, q + m + 1))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def _neumaier_add(acc: np.ndarray, comp: np.ndarray, term: np.ndarray) -> None:
    # in-place compensated accumulation of real arrays
    t = acc + term
    comp += np.where(np.abs(acc) >= np.abs(term), (acc - t) + term, (term - t) + acc)
    acc[...] = t


def _direct(a, b, nu, compensated):
    ra, rb = _radius_of(a, nu), _radius_of(b, nu)
    lead = np.broadcast_shapes(a.shape[: a.ndim - nu], b.shape[: b.ndim - nu])
    full_shape = lead + tuple(2 * (x + y) + 1 for x, y in zip(ra, rb))
    support = np.any(a != 0, axis=tuple(range(a.ndim - nu)))
    sb = b.shape[b.ndim - nu:]
    head = (slice(None),) * len(lead)
    if compensated:
        re, im = np.zeros(full_shape), np.zeros(full_shape)
        re_c, im_c = np.zeros(full_shape), np.zeros(full_shape)
    else:
        out = np.zeros(full_shape, dtype=np.complex128)
    for pos in zip(*np.nonzero(support)):  # lexicographic order
        coef = a[(Ellipsis,) + pos]
        coef = np.reshape(coef, np.shape(coef) + (1,) * nu)
        target = head + tuple(slice(i, i + s) for i, s in zip(pos, sb))
        term = coef * b
        if compensated:
            term = np.broadcast_to(term, re[target].shape)
            _neumaier_add(re[target], re_c[target], term.real)
            _neumaier_add(im[target], im_c[target], term.imag)
        else:
            out[target] += term
    if compensated:
        return (re + re_c) + 1j * (im + im_c)
    return out


def _fft(a, b, nu):
    ra, rb = _radius_of(a, nu), _radius_of(b, nu)
    full_shape = tuple(2 * (x + y) + 1 for x, y in zip(ra, rb))
    fast = [scipy.fft.next_fast_len(s) for s in full_shape]
    axes = tuple(range(-nu, 0))
    fa = scipy.fft.fftn(a, s=fast, axes=axes)
    fb = scipy.fft.fftn(b, s=fast, axes=axes)
    out = scipy.fft.ifftn(fa * fb, axes=axes)
    return out[(Ellipsis,) + tuple(slice(0, s) for s in full_shape)]


def convolve_arrays(a, b, nu, out_radius, method="auto", compensated=False):
    """Exact truncated convolution of box-aligned arrays.

    The full product is computed over the supports of `a` and `b` and only
    then restricted to the box of radius `out_radius`.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    ra, rb = _radius_of(a, nu), _radius_of(b, nu)
    if method == "auto":
        size = np.prod([2 * r + 1 for r in ra]) * np.prod([2 * r + 1 for r in rb])
        method = "fft" if size > FFT_THRESHOLD else "direct"
    if method == "direct":
        full = _direct(a, b, nu, compensated)
    elif method == "fft":
        full = _fft(a, b, nu)
    else:
        raise ValueError(f"unknown convolution method {method!r}")
    full_radius = tuple(x + y for x, y in zip(ra, rb))
    return crop_or_pad(full, full_radius, tuple(out_radius))


def power_arrays(c, p, nu, out_radius, method="auto", compensated=False):
    """``c^{*p}`` restricted to `out_radius`, by a left fold of pair products.

    Intermediate results keep every mode that can still reach the output box,
    so nothing inside `out_radius` is lost.
    """
    if p < 1:
        raise ValueError(f"convolution power needs p >= 1, got {p}")
    r = _radius_of(np.asarray(c), nu)
    acc = np.asarray(c)
    for j in range(2, p + 1):
        keep = tuple(min(j * ri, ro + (p - j) * ri) for ri, ro in zip(r, out_radius))
        acc = convolve_arrays(acc, c, nu, keep, method=method, compensated=compensated)
    return crop_or_pad(acc, _radius_of(acc, nu), tuple(out_radius))


def convolve_pair(a: CoefficientField, b: CoefficientField, out_box: Box,
                  method: str = "auto", compensated: bool = False) -> CoefficientField:
    if a.box.nu != b.box.nu or a.box.nu != out_box.nu:
        raise DimensionError("convolution operands live in different dimensions")
    vals = convolve_arrays(a.values, b.values, a.box.nu, out_box.radius,
                           method=method, compensated=compensated)
    return CoefficientField(out_box, vals)


def convolve_power(c: CoefficientField, p: int, out_box: Box,
                   method: str = "auto", compensated: bool = False) -> CoefficientField:
    if c.box.nu != out_box.nu:
        raise DimensionError("output box has the wrong dimension")
    vals = power_arrays(c.values, p, c.box.nu, out_box.radius,
                        method=method, compensated=compensated)
    return CoefficientField(out_box, vals)


def truncation_tail_estimate(bound_const: float, rate: float, box: Box) -> float:
    """Heuristic size of the data dropped by truncating to `box`.

    Sums ``C e^{-rate |n|_1}`` over all ``n`` outside the box, using the
    product structure ``sum_{Z^nu} - sum_{box}``.
    """
    q = np.exp(-rate)
    full = ((1 + q) / (1 - q)) ** box.nu
    inside = 1.0
    for r in box.radius:
        inside *= 1 + 2 * q * (1 - q**r) / (1 - q)
    return bound_const * max(full - inside, 0.0)

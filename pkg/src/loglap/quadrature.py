"""Quadrature for the improper integrals over (0, inf) used throughout the package.

Every integral is split at t = 1.  The inner piece (0, 1] is covered by
geometrically graded panels down to a floor, the outer piece [1, T] by
geometrically growing panels, and each panel is refined by adaptive bisection
with a fixed-order Gauss-Legendre rule.  Integrands are vector valued: a
callable mapping an array of q times to an array of shape (q, ...).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

Integrand = Callable[[np.ndarray], np.ndarray]


class QuadratureError(RuntimeError):
    """Raised when an estimated quadrature error exceeds its configured bound."""


@lru_cache(maxsize=None)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@dataclass(frozen=True)
class QuadratureResult:
    value: np.ndarray
    error: np.ndarray
    evaluations: int


@dataclass(frozen=True)
class QuadratureScheme:
    """Parameters of the split quadrature.

    Attributes:
        order: Gauss-Legendre points per panel.
        t_floor: below this time the integrand is replaced by its t -> 0 limit.
        T: outer truncation; the tail beyond T is bounded, not integrated.
        ratio: geometric growth factor of the initial panels.
        rtol: per-panel tolerance relative to the integral of |f| on the panel.
        atol: absolute per-panel tolerance.
        max_depth: bisection limit per initial panel.
        max_error: bound on the reported error (relative to the natural scale
            of each problem); exceeding it raises QuadratureError.
    """

    order: int = 16
    t_floor: float = 1e-6
    T: float = 40.0
    ratio: float = 2.0
    rtol: float = 1e-12
    atol: float = 1e-300
    max_depth: int = 16
    max_error: float = 1e-6

    def __post_init__(self):
        if self.order < 2:
            raise ValueError("order must be at least 2")
        if not 0.0 < self.t_floor < 1.0:
            raise ValueError("t_floor must lie in (0, 1)")
        if self.T < 30.0:
            raise ValueError("T must be at least 30")
        if self.ratio <= 1.0:
            raise ValueError("ratio must exceed 1")

    @classmethod
    def from_dict(cls, params: dict | None) -> "QuadratureScheme":
        return cls(**(params or {}))

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "t_floor": self.t_floor,
            "T": self.T,
            "ratio": self.ratio,
            "rtol": self.rtol,
            "atol": self.atol,
            "max_depth": self.max_depth,
            "max_error": self.max_error,
        }

    def inner_breakpoints(self, start: float | None = None) -> np.ndarray:
        """Geometric breakpoints from ``start`` (default t_floor) up to 1."""
        lo = self.t_floor if start is None else start
        n = max(1, math.ceil(math.log(1.0 / lo) / math.log(self.ratio)))
        pts = self.ratio ** -np.arange(n, -1, -1, dtype=float)
        pts[0] = lo
        return pts

    def outer_breakpoints(self, stop: float | None = None) -> np.ndarray:
        """Geometric breakpoints from 1 up to ``stop`` (default T)."""
        hi = self.T if stop is None else stop
        pts = [1.0]
        while pts[-1] * self.ratio < hi:
            pts.append(pts[-1] * self.ratio)
        pts.append(hi)
        return np.asarray(pts)

    def tail_bound(self) -> float:
        """Bound on int_T^inf e^{-t}/t dt, the tail size of every e^{-t}-damped integrand."""
        return math.exp(-self.T) / self.T

    def integrate(self, f: Integrand, breakpoints: np.ndarray, paired: bool = False) -> QuadratureResult:
        """Integrate ``f`` over consecutive panels given by ``breakpoints``."""
        return integrate_panels(
            f,
            breakpoints,
            order=self.order,
            rtol=self.rtol,
            atol=self.atol,
            max_depth=self.max_depth,
            paired=paired,
        )


def _panel(f, a, b, x, w):
    half = 0.5 * (b - a)
    t = a + half * (x + 1.0)
    vals = np.asarray(f(t))
    wt = (half * w).reshape((-1,) + (1,) * (vals.ndim - 1))
    return (wt * vals).sum(axis=0), (wt * np.abs(vals)).sum(axis=0)


def integrate_panels(
    f: Integrand,
    breakpoints,
    *,
    order: int = 16,
    rtol: float = 1e-12,
    atol: float = 1e-300,
    max_depth: int = 40,
    paired: bool = False,
    noise: float = 64.0 * np.finfo(float).eps,
) -> QuadratureResult:
    """Adaptive Gauss-Legendre quadrature of a vector-valued integrand.

    Each panel is accepted when the whole-panel rule and the two half-panel
    rules agree within ``rtol * int|f| + atol`` componentwise; otherwise both
    halves are refined.  Panels are processed left to right so the summation
    order is fixed.  The returned error sums |whole - halves| over accepted
    panels, which bounds the error of the coarser rule and so overestimates
    the error of the returned (finer) value.

    With ``paired`` the last axis of f holds values followed by an equal
    number of nonnegative magnitude channels bounding their rounding scale;
    only the value channels are tested, with ``noise`` times the magnitude
    integral added to the tolerance so rounding noise cannot force refinement.
    """
    x, w = gauss_legendre(order)
    bp = np.asarray(breakpoints, dtype=float)
    total = None
    err = None
    evals = 0

    def accumulate(v, e):
        nonlocal total, err
        if total is None:
            total, err = v, e
        else:
            total = total + v
            err = err + e

    for a, b in zip(bp[:-1], bp[1:]):
        whole, whole_abs = _panel(f, a, b, x, w)
        evals += order
        stack = [(a, b, whole, whole_abs, 0)]
        while stack:
            lo, hi, q, qa, depth = stack.pop()
            mid = 0.5 * (lo + hi)
            ql, qla = _panel(f, lo, mid, x, w)
            qr, qra = _panel(f, mid, hi, x, w)
            evals += 2 * order
            halves = ql + qr
            diff = np.abs(q - halves)
            tol = rtol * (qla + qra) + atol
            if paired:
                n = diff.shape[-1] // 2
                diff = diff[..., :n]
                tol = tol[..., :n] + noise * halves[..., n:]
            if depth >= max_depth or np.all(diff <= tol):
                if paired:
                    diff = np.concatenate([diff, np.zeros_like(diff)], axis=-1)
                accumulate(halves, diff)
            else:
                # right pushed first so the left half is summed first
                stack.append((mid, hi, qr, qra, depth + 1))
                stack.append((lo, mid, ql, qla, depth + 1))
    return QuadratureResult(np.asarray(total), np.asarray(err), evals)


def phi_function(z: np.ndarray, order: int) -> np.ndarray:
    """Entire functions phi_l(z) = sum_i z^i / (i + l)!, evaluated for real z <= 0.

    phi_l(z) = (e^z - sum_{i<l} z^i/i!) / z^l, so t^l (-mu)^l phi_l(-mu t) is
    the Taylor remainder of e^{-mu t} after l terms.  Small |z| uses the power
    series (no cancellation), large |z| the closed form.
    """
    z = np.asarray(z, dtype=float)
    if order == 0:
        return np.exp(z)
    out = np.empty_like(z)
    cut = 2.0 * order + 5.0
    small = np.abs(z) <= cut
    if np.any(small):
        zs = z[small]
        # Horner on sum_{i<n} z^i/(i+l)!
        n_terms = 120
        acc = np.zeros_like(zs)
        for i in range(n_terms - 1, -1, -1):
            acc = acc * zs + 1.0 / math.factorial(i + order)
        out[small] = acc
    if np.any(~small):
        zl = z[~small]
        poly = np.zeros_like(zl)
        term = np.ones_like(zl)
        for i in range(order):
            poly += term
            term = term * zl / (i + 1)
        out[~small] = (np.exp(zl) - poly) / zl**order
    return out


def gamma_negative(s: float) -> float:
    """Gamma(-s) for s in (0, 1), as Gamma(1 - s) / (-s)."""
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0, 1)")
    return math.gamma(1.0 - s) / (-s)

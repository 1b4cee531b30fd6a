"""Heat kernels, semigroup actions and the integral representations of ln A and A^s.

The quadrature routines integrate per eigenmode: the integrand of
``int_0^inf (e^{-t} I - e^{-tA}) v dt / t`` is diagonal in the eigenbasis, so the
field-valued integral is one vector-valued integral over the distinct rates
mu_k = lambda_k + m, followed by resynthesis.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .calculus import DENSE_LIMIT, OperatorSpec, apply, bootstrap_apply
from .manifold import Field, SpectralManifold
from .quadrature import QuadratureError, QuadratureScheme, gamma_negative

DEFAULT_SCHEME = QuadratureScheme()


def _check_m(m: float) -> None:
    if not m > 1.0:
        raise ValueError("m > 1 required")


# -- heat kernel -------------------------------------------------------------


def heat_kernel(manifold: SpectralManifold, m: float, t: float) -> np.ndarray:
    """K_A(t, x, y) = sum_k e^{-t(lambda_k + m)} phi_k(x) phi_k(y)."""
    _check_m(m)
    if t <= 0:
        raise ValueError("heat kernel needs t > 0")
    phi = manifold.eigenfunctions
    K = (phi * np.exp(-t * (manifold.eigenvalues + m))) @ phi.T
    return 0.5 * (K + K.T)


def laplace_heat_kernel(manifold: SpectralManifold, t: float) -> np.ndarray:
    """Heat kernel of -Delta alone (no mass shift)."""
    if t <= 0:
        raise ValueError("heat kernel needs t > 0")
    phi = manifold.eigenfunctions
    K = (phi * np.exp(-t * manifold.eigenvalues)) @ phi.T
    return 0.5 * (K + K.T)


@dataclass(frozen=True)
class HeatKernel:
    manifold_id: int
    times: np.ndarray
    kernels: np.ndarray  # (len(times), N, N)

    def at(self, i: int) -> np.ndarray:
        return self.kernels[i]


def heat_kernels(manifold: SpectralManifold, m: float, times) -> HeatKernel:
    times = np.asarray(times, dtype=float)
    ks = np.stack([heat_kernel(manifold, m, t) for t in times])
    return HeatKernel(manifold.uid, times, ks)


def semigroup_residual(manifold: SpectralManifold, m: float, t: float, s: float) -> float:
    """max |K(t+s) - K(t) M K(s)|."""
    lhs = heat_kernel(manifold, m, t + s)
    rhs = heat_kernel(manifold, m, t) @ (manifold.mass[:, None] * heat_kernel(manifold, m, s))
    return float(np.max(np.abs(lhs - rhs)))


def export_kernel_csv(path, kernel: np.ndarray) -> None:
    """Write a kernel matrix as CSV with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(kernel):
            w.writerow([format(float(x), ".17g") for x in row])


def semigroup_apply(manifold: SpectralManifold, m: float, t: float, v: Field) -> Field:
    """e^{-tA} v as the kernel integral int_M K(t, x, y) v(y) dV(y)."""
    _check_m(m)
    if t < 0:
        raise ValueError("semigroup needs t >= 0")
    if t == 0:
        return manifold.field(v.values.copy())
    if manifold.node_count <= DENSE_LIMIT:
        return manifold.field(heat_kernel(manifold, m, t) @ (manifold.mass * v.values))
    return apply(manifold, OperatorSpec.heat(t, m), v)


def decay_constant(manifold: SpectralManifold, m: float, v: Field, t_grid) -> float:
    """Smallest C with sup_x |e^{-tA} v(x)| <= C e^{-t} ||v|| on the grid."""
    nv = v.norm()
    if nv == 0:
        return 0.0
    best = 0.0
    for t in t_grid:
        w = semigroup_apply(manifold, m, t, v)
        best = max(best, float(np.max(np.abs(w.values))) * math.exp(t) / nv)
    return best


# -- quadrature representations --------------------------------------------------


@dataclass(frozen=True)
class ModalQuadrature:
    """Per-rate quadrature values and error estimates."""

    value: np.ndarray
    error: np.ndarray
    evaluations: int


@dataclass(frozen=True)
class FieldQuadrature:
    """A field obtained by quadrature, with its estimated mass-norm error."""

    field: Field
    error: float
    relative_error: float
    evaluations: int


def _unique_rates(mu):
    mu = np.asarray(mu, dtype=float)
    uniq, inverse = np.unique(mu, return_inverse=True)
    return uniq, inverse


def _log_integrand(t, mu):
    # e^{-t} - e^{-t mu} = -e^{-t} expm1(-t (mu - 1)), free of cancellation
    return -np.exp(-t) * np.expm1(-t * (mu - 1.0)) / t


def _head_series(coeff, tf, max_terms=80):
    """sum_{j>=1} coeff(j) over the Taylor expansion of an integrand on (0, t_floor].

    Returns (value, size of the last retained term).
    """
    total = 0.0
    last = 0.0
    for j in range(1, max_terms + 1):
        term = coeff(j)
        total = total + term
        last = np.abs(term)
        if np.all(last <= 1e-18 * np.maximum(np.abs(total), 1e-300)):
            break
    return total, last


def _check_floor(uniq, tf):
    if tf * float(np.max(uniq)) > 10.0:
        raise ValueError("t_floor too coarse for the largest rate (t_floor * mu > 10)")


def log_quadrature(mu, scheme: QuadratureScheme = DEFAULT_SCHEME) -> ModalQuadrature:
    """int_0^inf (e^{-t} - e^{-t mu}) / t dt for each mu > 0, which equals ln mu."""
    uniq, inv = _unique_rates(mu)
    if np.any(uniq <= 0):
        raise ValueError("rates must be positive")

    def f(t):
        t = t[:, None]
        return _log_integrand(t, uniq)

    inner = scheme.integrate(f, scheme.inner_breakpoints())
    outer = scheme.integrate(f, scheme.outer_breakpoints())
    tf = scheme.t_floor
    _check_floor(uniq, tf)
    # (0, t_floor]: term-by-term integral of the Taylor series, whose first term is the limit mu - 1
    head, head_err = _head_series(
        lambda j: ((-1.0) ** j - (-uniq) ** j) * tf**j / (j * math.factorial(j)), tf
    )
    value = head + inner.value + outer.value
    error = head_err + inner.error + outer.error + scheme.tail_bound()
    return ModalQuadrature(value[inv], error[inv], inner.evaluations + outer.evaluations)


def log_laplacian_quadrature(mu, scheme: QuadratureScheme = DEFAULT_SCHEME) -> ModalQuadrature:
    """int_0^inf (e^{-t} - e^{-t mu}) mu / t dt, i.e. the composition A ln A per mode."""
    uniq, inv = _unique_rates(mu)

    def f(t):
        t = t[:, None]
        return uniq * _log_integrand(t, uniq)

    inner = scheme.integrate(f, scheme.inner_breakpoints())
    outer = scheme.integrate(f, scheme.outer_breakpoints())
    tf = scheme.t_floor
    _check_floor(uniq, tf)
    head, head_err = _head_series(
        lambda j: uniq * ((-1.0) ** j - (-uniq) ** j) * tf**j / (j * math.factorial(j)), tf
    )
    value = head + inner.value + outer.value
    error = head_err + inner.error + outer.error + uniq * scheme.tail_bound()
    return ModalQuadrature(value[inv], error[inv], inner.evaluations + outer.evaluations)


def frac_power_quadrature(mu, s: float, scheme: QuadratureScheme = DEFAULT_SCHEME) -> ModalQuadrature:
    """(1/Gamma(-s)) int_0^inf (e^{-t mu} - 1) / t^{1+s} dt for each mu >= 0, which equals mu^s."""
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0, 1)")
    uniq, inv = _unique_rates(mu)
    if np.any(uniq < 0):
        raise ValueError("rates must be nonnegative")

    def f(t):
        t = t[:, None]
        return np.expm1(-t * uniq) / t ** (1.0 + s)

    inner = scheme.integrate(f, scheme.inner_breakpoints())
    outer = scheme.integrate(f, scheme.outer_breakpoints())
    tf, T = scheme.t_floor, scheme.T
    _check_floor(uniq, tf)
    # (0, t_floor]: series of expm1(-t mu) t^{-1-s}; beyond T: the exact -1 part of the tail
    head, head_err = _head_series(
        lambda j: (-uniq) ** j * tf ** (j - s) / (math.factorial(j) * (j - s)), tf
    )
    tail = -(T**-s) / s
    tail_err = np.exp(-T * uniq) * T ** (-1.0 - s) / np.maximum(uniq, 1e-300)
    tail_err = np.where(uniq > 0, tail_err, 0.0)
    g = gamma_negative(s)
    value = (head + inner.value + outer.value + tail) / g
    error = (head_err + inner.error + outer.error + tail_err) / abs(g)
    return ModalQuadrature(value[inv], error[inv], inner.evaluations + outer.evaluations)


def scalar_log_quadrature(lam: float, scheme: QuadratureScheme = DEFAULT_SCHEME) -> tuple[float, float]:
    """Quadrature value of int_0^inf (e^{-t} - e^{-t lam}) / t dt and its error estimate."""
    r = log_quadrature(np.array([lam]), scheme)
    return float(r.value[0]), float(r.error[0])


def scalar_frac_power_quadrature(
    lam: float, s: float, scheme: QuadratureScheme = DEFAULT_SCHEME
) -> tuple[float, float]:
    r = frac_power_quadrature(np.array([lam]), s, scheme)
    return float(r.value[0]), float(r.error[0])


def _field_result(manifold, v, modal: ModalQuadrature, scheme, what) -> FieldQuadrature:
    c = manifold.coefficients(v)
    out = manifold.synthesize(modal.value * c)
    err = float(np.sqrt(np.sum((modal.error * c) ** 2)))
    nv = float(np.sqrt(np.sum(c**2)))
    rel = err / nv if nv > 0 else 0.0
    if rel > scheme.max_error:
        raise QuadratureError(
            f"{what}: estimated relative error {rel:.3g} exceeds bound {scheme.max_error:.3g}"
        )
    return FieldQuadrature(out, err, rel, modal.evaluations)


def log_via_quadrature(
    manifold: SpectralManifold, m: float, v: Field, scheme: QuadratureScheme = DEFAULT_SCHEME
) -> FieldQuadrature:
    """ln A v from the semigroup integral int_0^inf (e^{-t} I - e^{-tA}) v dt / t."""
    _check_m(m)
    modal = log_quadrature(manifold.eigenvalues + m, scheme)
    return _field_result(manifold, v, modal, scheme, "log quadrature")


def log_laplacian_via_quadrature(
    manifold: SpectralManifold, m: float, v: Field, scheme: QuadratureScheme = DEFAULT_SCHEME
) -> FieldQuadrature:
    """A ln A v as int_0^inf (e^{-t} I - e^{-tA}) A v dt / t."""
    _check_m(m)
    modal = log_laplacian_quadrature(manifold.eigenvalues + m, scheme)
    return _field_result(manifold, v, modal, scheme, "log-Laplacian quadrature")


def frac_power_via_quadrature(
    manifold: SpectralManifold,
    m: float,
    s: float,
    v: Field,
    scheme: QuadratureScheme = DEFAULT_SCHEME,
) -> FieldQuadrature:
    """A^s v from (1/Gamma(-s)) int_0^inf (e^{-tA} - I) v dt / t^{1+s}."""
    _check_m(m)
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0, 1)")
    modal = frac_power_quadrature(manifold.eigenvalues + m, s, scheme)
    return _field_result(manifold, v, modal, scheme, "fractional power quadrature")


# -- derivative at s = 0 ---------------------------------------------------------

DEFAULT_S_STEPS = tuple(0.05 * 2.0**-j for j in range(6))


@dataclass(frozen=True)
class DerivativeResult:
    field: Field
    error: float
    observed_order: float
    quotients: list = field(repr=False, default_factory=list)


def neville_at_zero(steps, values) -> tuple[np.ndarray, float]:
    """Polynomial extrapolation of values(s) to s = 0; returns (limit, error estimate)."""
    s = np.asarray(steps, dtype=float)
    P = [np.asarray(v, dtype=float) for v in values]
    n = len(P)
    prev = P[-1]
    for j in range(1, n):
        prev = P[-1]
        for i in range(n - 1, j - 1, -1):
            P[i] = (s[i] * P[i - 1] - s[i - j] * P[i]) / (s[i] - s[i - j])
    err = float(np.max(np.abs(P[-1] - prev))) if n > 1 else float("inf")
    return P[-1], err


def log_via_derivative(
    manifold: SpectralManifold,
    m: float,
    v: Field,
    s_steps=DEFAULT_S_STEPS,
    power: str = "spectral",
    scheme: QuadratureScheme = DEFAULT_SCHEME,
) -> DerivativeResult:
    """ln A v as the s -> 0 limit of (A^s v - v) / s.

    A^s comes from the spectral multiplier (``power="spectral"``) or from the
    semigroup quadrature (``power="quadrature"``).  The difference quotients
    are extrapolated to s = 0; the observed order is estimated from the raw
    quotients and should be close to 1.
    """
    _check_m(m)
    s_steps = [float(s) for s in s_steps]
    if len(s_steps) < 2:
        raise ValueError("need at least two steps")
    if any(not 0.0 < s < 0.5 for s in s_steps):
        raise ValueError("steps must lie in (0, 1/2)")
    if any(b >= a for a, b in zip(s_steps, s_steps[1:])):
        raise ValueError("steps must be strictly decreasing")
    c = manifold.coefficients(v)
    mu = manifold.eigenvalues + m
    quotients = []
    for s in s_steps:
        if power == "spectral":
            ps = mu**s
        elif power == "quadrature":
            ps = frac_power_quadrature(mu, s, scheme).value
        else:
            raise ValueError(f"unknown power source {power!r}")
        quotients.append((ps - 1.0) / s * c)
    limit, err = neville_at_zero(s_steps, quotients)
    diffs = [np.linalg.norm(a - b) for a, b in zip(quotients, quotients[1:])]
    orders = [
        math.log(d0 / d1) / math.log(s_steps[i] / s_steps[i + 1])
        for i, (d0, d1) in enumerate(zip(diffs, diffs[1:]))
        if d0 > 0 and d1 > 0
    ]
    order = float(orders[-1]) if orders else float("nan")
    return DerivativeResult(
        manifold.synthesize(limit), err, order, [manifold.synthesize(q) for q in quotients]
    )


# -- estimates --------------------------------------------------------------------


def relative_distance(a: Field, b: Field) -> float:
    nb = b.norm()
    d = (a - b).norm()
    return d / nb if nb > 0 else d


def log_bound_ratio(manifold: SpectralManifold, m: float, v: Field) -> float:
    """||ln A v|| / (||v|| + ||A v||)."""
    lv = apply(manifold, OperatorSpec.log(m), v)
    av = apply(manifold, OperatorSpec.shift(m), v)
    den = v.norm() + av.norm()
    return lv.norm() / den if den > 0 else 0.0


@dataclass(frozen=True)
class DerivativeCheck:
    order: int
    steps: np.ndarray
    errors: np.ndarray
    orders: np.ndarray


def semigroup_derivative_check(
    manifold: SpectralManifold,
    m: float,
    u: Field,
    order: int,
    t0: float = 1.0,
    steps=(0.1, 0.05, 0.025, 0.0125),
) -> DerivativeCheck:
    """Central differences of t -> e^{-tA} u against (-1)^j e^{-tA} A^j u.

    Observed orders are log(err(h) / err(h/2)) / log 2 for consecutive steps.
    """
    if order not in (1, 2):
        raise ValueError("only first and second derivatives are supported")
    exact = semigroup_apply(manifold, m, t0, bootstrap_apply(manifold, u, order, m)) * (
        (-1.0) ** order
    )
    errs = []
    for h in steps:
        up = semigroup_apply(manifold, m, t0 + h, u)
        dn = semigroup_apply(manifold, m, t0 - h, u)
        if order == 1:
            fd = (up - dn) * (1.0 / (2.0 * h))
        else:
            mid = semigroup_apply(manifold, m, t0, u)
            fd = (up - mid * 2.0 + dn) * (1.0 / h**2)
        errs.append((fd - exact).norm())
    steps = np.asarray(steps, dtype=float)
    errs = np.asarray(errs)
    orders = np.log(errs[:-1] / errs[1:]) / np.log(steps[:-1] / steps[1:])
    return DerivativeCheck(order, steps, errs, orders)


# -- Gaussian upper bound ----------------------------------------------------------

GAUSSIAN_C_SMALL = 0.125


@dataclass(frozen=True)
class GaussianBoundReport:
    C: float
    c: float
    dimension: int
    t_grid: np.ndarray
    violations: int
    worst_ratio: float
    argmax: tuple
    passed: np.ndarray | None = None


def _log_ratio(manifold, m, t_grid, c):
    n = manifold.dimension
    d2 = manifold.distances**2
    out = np.empty((len(t_grid),) + d2.shape)
    for i, t in enumerate(t_grid):
        K = np.abs(heat_kernel(manifold, m, t))
        with np.errstate(divide="ignore"):
            out[i] = np.log(K) + 0.5 * n * math.log(t) + t * m + c * d2 / t
    return out


def check_gaussian_bound(
    manifold: SpectralManifold,
    m: float,
    t_grid,
    C: float | None = None,
    c: float = GAUSSIAN_C_SMALL,
) -> GaussianBoundReport:
    """Test |K_A(t,x,y)| <= C t^{-n/2} e^{-mt} e^{-c d(x,y)^2 / t} on a (t, x, y) grid.

    With ``C=None`` (fit mode) the smallest admissible C for the given c is
    returned; otherwise the report flags each grid point.  Comparisons are
    made in logarithms to avoid overflow of e^{c d^2 / t}.
    """
    _check_m(m)
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0):
        raise ValueError("times must be positive")
    lr = _log_ratio(manifold, m, t_grid, c)
    idx = np.unravel_index(int(np.argmax(lr)), lr.shape)
    worst = float(np.exp(lr[idx]))
    if C is None:
        C = worst
        passed = None
        violations = 0
    else:
        if C <= 0:
            raise ValueError("C must be positive")
        passed = lr <= math.log(C) + 1e-12
        violations = int(np.count_nonzero(~passed))
    return GaussianBoundReport(
        float(C),
        c,
        manifold.dimension,
        t_grid,
        violations,
        worst,
        (float(t_grid[idx[0]]), int(idx[1]), int(idx[2])),
        passed,
    )


def resolved_time_floor(manifold: SpectralManifold, c: float = GAUSSIAN_C_SMALL, digits: float = 12.0) -> float:
    """Smallest t at which spectral truncation is negligible against the Gaussian factor.

    A spectrum cut at lambda_max misrepresents the kernel by about
    e^{-t lambda_max}; requiring this to sit ``digits`` decades below
    e^{-c diam^2 / t} gives t lambda_max - c diam^2 / t >= digits ln 10.
    """
    lam_max = float(manifold.eigenvalues[-1])
    diam2 = float(np.max(manifold.distances)) ** 2
    D = digits * math.log(10.0)
    return (D + math.sqrt(D * D + 4.0 * lam_max * c * diam2)) / (2.0 * lam_max)

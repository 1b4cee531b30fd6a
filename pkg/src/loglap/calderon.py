"""Numerical walk through the uniqueness argument for the log-Laplacian Calderon problem.

Two manifolds share an observation set O through an explicit node
correspondence.  Sources supported in O give solutions u_1, u_2; the
difference of their heat evolutions observed on O,

    phi(t, x) = (e^{-tA_1} u_1)(x) - (e^{-tA_2} u_2)(x'),

is an exponential sum in t.  Its Taylor coefficients at t = 0 are the
extended Cauchy data differences, and its moments
int_0^inf phi(t, x) t^{-1-k} dt are evaluated on (0, 1] through the exact
Taylor remainder, which keeps rounding noise from being amplified by the
t^{-1-k} weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from .calculus import OperatorSpec, apply, bootstrap_apply, check_support, spectral_multiplier
from .manifold import Field, SpectralManifold
from .quadrature import QuadratureScheme, phi_function
from .semigroup import heat_kernel, laplace_heat_kernel, log_laplacian_quadrature

EPS = np.finfo(float).eps
DEFAULT_T_MIN = 1e-4
DEFAULT_K_MAX = 8
DEFAULT_VANISH_TOL = 1e-8
HARDY_CONSTANT = 4.0  # (p / (p - 1))^p at p = 2


@dataclass(frozen=True)
class ObservationSet:
    """Nonempty proper subset O of the nodes of one manifold."""

    nodes: np.ndarray
    node_count: int
    manifold_id: int | None = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=int)
        if nodes.ndim != 1 or nodes.size == 0:
            raise ValueError("observation set must be nonempty")
        if np.unique(nodes).size != nodes.size:
            raise ValueError("observation nodes must be distinct")
        if nodes.min() < 0 or nodes.max() >= self.node_count:
            raise ValueError("observation node out of range")
        if nodes.size >= self.node_count:
            raise ValueError("observation set must be a proper subset (complement nonempty)")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def on(cls, manifold: SpectralManifold, nodes) -> "ObservationSet":
        return cls(np.asarray(nodes, dtype=int), manifold.node_count, manifold.uid)

    def __len__(self):
        return self.nodes.size

    def mask(self) -> np.ndarray:
        out = np.zeros(self.node_count, dtype=bool)
        out[self.nodes] = True
        return out


@dataclass(frozen=True)
class ManifoldPair:
    """Two manifolds with O identified by ``nodes1[i] <-> nodes2[i]``."""

    first: SpectralManifold
    second: SpectralManifold
    nodes1: np.ndarray
    nodes2: np.ndarray

    def __post_init__(self):
        n1 = np.asarray(self.nodes1, dtype=int)
        n2 = np.asarray(self.nodes2, dtype=int)
        if n1.shape != n2.shape:
            raise ValueError("correspondence sizes differ")
        object.__setattr__(self, "nodes1", n1)
        object.__setattr__(self, "nodes2", n2)
        # validates both sides
        self.observation(0)
        self.observation(1)

    @classmethod
    def identical(cls, manifold: SpectralManifold, nodes) -> "ManifoldPair":
        return cls(manifold, manifold, nodes, nodes)

    @classmethod
    def relabeled(cls, manifold: SpectralManifold, nodes, perm) -> "ManifoldPair":
        """Pair (M, M relabeled by perm); node o of M sits at index perm^{-1}[o] of the copy."""
        copy = manifold.relabel(perm)
        inv = np.argsort(np.asarray(perm))
        nodes = np.asarray(nodes, dtype=int)
        return cls(manifold, copy, nodes, inv[nodes])

    @property
    def manifolds(self) -> tuple[SpectralManifold, SpectralManifold]:
        return self.first, self.second

    def nodes(self, i: int) -> np.ndarray:
        return self.nodes1 if i == 0 else self.nodes2

    def observation(self, i: int) -> ObservationSet:
        return ObservationSet.on(self.manifolds[i], self.nodes(i))

    def transport(self, values_on_o) -> tuple[Field, Field]:
        """Fields on both manifolds carrying the same values on O and zero elsewhere."""
        vals = np.asarray(values_on_o, dtype=float)
        if vals.shape != self.nodes1.shape:
            raise ValueError("need one value per observation node")
        out = []
        for man, nodes in zip(self.manifolds, (self.nodes1, self.nodes2)):
            v = np.zeros(man.node_count)
            v[nodes] = vals
            out.append(man.field(v))
        return out[0], out[1]


@dataclass(frozen=True)
class CauchyData:
    """Source, solution and the traces on O of u and L u, plus the bootstrap traces.

    ``extended[k-1]`` holds (A^{k-1} u)|_O and ``extended_image[k-1]`` holds
    (L A^{k-1} u)|_O for k = 1..k_max.
    """

    source: Field
    solution: Field
    coefficients: np.ndarray
    observation: ObservationSet
    m: float
    u_trace: np.ndarray
    Lu_trace: np.ndarray
    extended: np.ndarray
    extended_image: np.ndarray


def make_cauchy_data(
    manifold: SpectralManifold,
    m: float,
    f: Field,
    O: ObservationSet,
    k_max: int = DEFAULT_K_MAX,
    nodes=None,
) -> CauchyData:
    """Solve L u = f for f supported in O and record traces on O.

    ``nodes`` optionally orders the traces (for a pair, the correspondence
    order); it defaults to the observation set's own order.
    """
    check_support(f, O.nodes)
    nodes = O.nodes if nodes is None else np.asarray(nodes, dtype=int)
    lam = manifold.eigenvalues
    coeffs = manifold.coefficients(f) * spectral_multiplier(OperatorSpec.inv_log_laplacian(m), lam)
    u = manifold.synthesize(coeffs)
    Lspec = OperatorSpec.log_laplacian(m)
    ext, ext_img = [], []
    w = u
    for k in range(1, k_max + 1):
        if k > 1:
            w = bootstrap_apply(manifold, w, 1, m)
        ext.append(w.values[nodes])
        ext_img.append(apply(manifold, Lspec, w).values[nodes])
    Lu = apply(manifold, Lspec, u)
    return CauchyData(
        f,
        u,
        coeffs,
        O,
        m,
        u.values[nodes],
        Lu.values[nodes],
        np.asarray(ext).reshape(k_max, nodes.size),
        np.asarray(ext_img).reshape(k_max, nodes.size),
    )


def pair_cauchy_data(pair: ManifoldPair, m: float, values_on_o, k_max: int = DEFAULT_K_MAX):
    """Cauchy data of both manifolds for the same source values on O."""
    f1, f2 = pair.transport(values_on_o)
    d1 = make_cauchy_data(pair.first, m, f1, pair.observation(0), k_max, pair.nodes1)
    d2 = make_cauchy_data(pair.second, m, f2, pair.observation(1), k_max, pair.nodes2)
    return d1, d2


# -- exponential sums --------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """phi(t, x) = sum_i a1[x, i] e^{-mu1_i t} - sum_i a2[x, i] e^{-mu2_i t} for x in O.

    The two sides are kept apart so that identical sides cancel exactly.
    """

    rates1: np.ndarray
    amps1: np.ndarray
    rates2: np.ndarray
    amps2: np.ndarray

    @classmethod
    def from_cauchy_data(cls, pair: ManifoldPair, m: float, data) -> "Trajectory":
        d1, d2 = data
        a1 = pair.first.eigenfunctions[pair.nodes1, :] * d1.coefficients
        a2 = pair.second.eigenfunctions[pair.nodes2, :] * d2.coefficients
        return cls(pair.first.eigenvalues + m, a1, pair.second.eigenvalues + m, a2)

    @classmethod
    def single(cls, rates, amps) -> "Trajectory":
        """A one-sided sum (second side empty), used for synthetic tests."""
        amps = np.atleast_2d(np.asarray(amps, dtype=float))
        return cls(np.asarray(rates, dtype=float), amps, np.zeros(1), np.zeros((amps.shape[0], 1)))

    @property
    def size(self) -> int:
        return self.amps1.shape[0]

    def scaled(self, power: int) -> "Trajectory":
        """The trajectory of A^power applied before the semigroup: amplitudes a mu^power."""
        return Trajectory(
            self.rates1,
            self.amps1 * self.rates1**power,
            self.rates2,
            self.amps2 * self.rates2**power,
        )

    def _side(self, t, rates, amps, fn):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return fn(t[:, None] * rates[None, :], rates) @ amps.T

    def values(self, t) -> np.ndarray:
        """phi at times t, shape (len(t), |O|)."""
        e = lambda z, r: np.exp(-z)
        return self._side(t, self.rates1, self.amps1, e) - self._side(t, self.rates2, self.amps2, e)

    def magnitude(self, t) -> np.ndarray:
        """sum |a| e^{-mu t} over both sides: the scale of rounding in ``values``."""
        e = lambda z, r: np.exp(-z)
        return self._side(t, self.rates1, np.abs(self.amps1), e) + self._side(
            t, self.rates2, np.abs(self.amps2), e
        )

    def derivative(self, order: int, t) -> np.ndarray:
        """Exact d^order phi / dt^order."""
        return self.scaled(order).values(t) * (-1.0) ** order

    def taylor(self, j: int) -> np.ndarray:
        """d^j phi / dt^j at t = 0, the j-th extended Cauchy data difference up to sign."""
        s1 = self.amps1 @ (-self.rates1) ** j
        s2 = self.amps2 @ (-self.rates2) ** j
        return s1 - s2

    def taylor_scale(self, j: int) -> np.ndarray:
        return np.abs(self.amps1) @ self.rates1**j + np.abs(self.amps2) @ self.rates2**j

    def remainder(self, order: int, t) -> np.ndarray:
        """R(t) with phi(t) = sum_{j<order} taylor(j) t^j / j! + t^order R(t)."""
        def rem(z, r):
            return (-r) ** order * phi_function(-z, order)

        return self._side(t, self.rates1, self.amps1, rem) - self._side(
            t, self.rates2, self.amps2, rem
        )

    def remainder_magnitude(self, order: int, t) -> np.ndarray:
        def rem(z, r):
            return r**order * np.abs(phi_function(-z, order))

        return self._side(t, self.rates1, np.abs(self.amps1), rem) + self._side(
            t, self.rates2, np.abs(self.amps2), rem
        )

    def min_rate(self) -> float:
        rates = [r for r, a in ((self.rates1, self.amps1), (self.rates2, self.amps2)) if np.any(a)]
        return float(min(np.min(r) for r in rates)) if rates else math.inf


def difference_trajectory(pair: ManifoldPair, m: float, data, t) -> np.ndarray:
    """phi(t, .) on O for scalar or array t; shape (|O|,) or (len(t), |O|)."""
    traj = Trajectory.from_cauchy_data(pair, m, data)
    out = traj.values(t)
    return out[0] if np.ndim(t) == 0 else out


# -- moment integrals ------------------------------------------------------------


def _integrate_with_rounding(scheme, f, fmag, breakpoints):
    """Integrate f together with its rounding scale fmag; returns (value, error)."""
    def g(t):
        return np.concatenate([f(t), fmag(t)], axis=-1)

    r = scheme.integrate(g, breakpoints, paired=True)
    n = r.value.shape[-1] // 2
    val, mag = r.value[..., :n], r.value[..., n:]
    return val, r.error[..., :n] + 64.0 * EPS * np.abs(mag)


def _fd_weights(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Second-order forward finite-difference stencil for the given derivative.

    Forward, so that no sample falls at negative time where e^{-mu t} blows up.
    """
    offsets = np.arange(order + 2, dtype=float)
    V = np.vander(offsets, increasing=True).T
    rhs = np.zeros(offsets.size)
    rhs[order] = math.factorial(order)
    return offsets, np.linalg.solve(V, rhs)


def _fd_derivative(traj: Trajectory, order: int, t: np.ndarray, h: float, magnitude: bool = False):
    """Forward-difference d^order phi / dt^order, or its rounding scale with ``magnitude``."""
    offsets, w = _fd_weights(order)
    tt = (t[:, None] + h * offsets[None, :]).ravel()
    if magnitude:
        vals, w = traj.magnitude(tt), np.abs(w)
    else:
        vals = traj.values(tt)
    vals = vals.reshape(t.size, offsets.size, -1)
    return np.einsum("j,tjx->tx", w, vals) / h**order


@dataclass
class MomentReport:
    """Moments M_k(x) = int_0^inf phi(t, x) t^{-1-k} dt for x in O, k = 1..k_max.

    Arrays are indexed [x, k-1].  ``form_idn`` and ``form_deriv`` are the
    first-derivative and k-th-derivative forms normalized to the same scale
    as the moments ((-1)^k / k! and 1 / k! respectively).  ``vanishing[x, k-1]``
    records whether the Taylor coefficients of phi up to order k vanished;
    where they do not, the moment diverges and the reported value is the
    integral truncated at t_min.
    """

    nodes: np.ndarray
    k_max: int
    t_min: float
    T: float
    moments: np.ndarray
    errors: np.ndarray
    form_idn: np.ndarray
    form_idn_errors: np.ndarray
    form_deriv: np.ndarray
    form_deriv_errors: np.ndarray
    vanishing: np.ndarray
    endpoint_small: np.ndarray
    endpoint_large: np.ndarray
    psi_norm: np.ndarray
    hardy_lhs: np.ndarray
    hardy_rhs: np.ndarray
    hardy_ratio: np.ndarray
    diagnostics: list = field(default_factory=list)

    def forms_agree(self, factor: float = 10.0) -> np.ndarray:
        """Pairwise agreement of the three forms within ``factor`` times their combined errors."""
        ok = np.ones_like(self.moments, dtype=bool)
        vals = (self.moments, self.form_idn, self.form_deriv)
        errs = (self.errors, self.form_idn_errors, self.form_deriv_errors)
        for i in range(3):
            for j in range(i + 1, 3):
                ok &= np.abs(vals[i] - vals[j]) <= factor * (errs[i] + errs[j])
        return ok

    def max_abs_moment(self, k: int | None = None) -> float:
        block = self.moments if k is None else self.moments[:, :k]
        return float(np.max(np.abs(block)))

    def rows(self):
        """Flat table rows (node, k, moment, error, idn, idn_err, deriv, deriv_err, vanishing)."""
        for xi, x in enumerate(self.nodes):
            for k in range(1, self.k_max + 1):
                j = k - 1
                yield (
                    int(x),
                    k,
                    self.moments[xi, j],
                    self.errors[xi, j],
                    self.form_idn[xi, j],
                    self.form_idn_errors[xi, j],
                    self.form_deriv[xi, j],
                    self.form_deriv_errors[xi, j],
                    bool(self.vanishing[xi, j]),
                )


def vanishing_mask(traj: Trajectory, order: int, tol: float = DEFAULT_VANISH_TOL) -> np.ndarray:
    """True where the Taylor coefficients of phi of orders 0..order vanish relative to their scale."""
    ok = np.ones(traj.size, dtype=bool)
    for j in range(order + 1):
        ok &= np.abs(traj.taylor(j)) <= tol * traj.taylor_scale(j)
    return ok


def moment_integrals(
    pair: ManifoldPair | None,
    m: float,
    data,
    k_max: int = DEFAULT_K_MAX,
    scheme: QuadratureScheme | None = None,
    t_min: float = DEFAULT_T_MIN,
    vanish_tol: float = DEFAULT_VANISH_TOL,
    fd_step: float = 0.02,
    trajectory: Trajectory | None = None,
) -> MomentReport:
    """All three moment forms for every x in O and k = 1..k_max.

    Pass either (pair, data) or a ready ``trajectory``.  Where the Taylor
    coefficients of phi vanish through order k, the moment splits as
    int_0^1 R_{k+1}(t) dt + int_1^T phi t^{-1-k} dt, R_{k+1} being the Taylor
    remainder; the first-derivative form is split the same way, and the
    k-th-derivative form is evaluated by central differences on [t_min, T].
    Where they do not vanish, every form is truncated at t_min and a
    diagnostic is recorded.
    """
    scheme = QuadratureScheme() if scheme is None else scheme
    traj = trajectory if trajectory is not None else Trajectory.from_cauchy_data(pair, m, data)
    nodes = pair.nodes1 if pair is not None else np.arange(traj.size)
    nx = traj.size
    T = scheme.T
    shape = (nx, k_max)
    M, Me = np.zeros(shape), np.zeros(shape)
    F1, F1e = np.zeros(shape), np.zeros(shape)
    F2, F2e = np.zeros(shape), np.zeros(shape)
    van = np.zeros(shape, dtype=bool)
    end_lo, end_hi = np.zeros(shape), np.zeros(shape)
    diagnostics = []

    inner = np.concatenate([[0.0], scheme.inner_breakpoints()])
    outer = scheme.outer_breakpoints()
    trunc_inner = scheme.inner_breakpoints(start=t_min)
    mu_min = traj.min_rate()
    mag0 = traj.taylor_scale(0)

    for k in range(1, k_max + 1):
        j = k - 1
        ok = vanishing_mask(traj, k, vanish_tol)
        van[:, j] = ok
        fact = math.factorial(k)
        tail = mag0 * math.exp(-mu_min * T) / (mu_min * T ** (1 + k)) if math.isfinite(mu_min) else 0.0

        # outer piece [1, T], shared by the direct and first-derivative forms
        o3, o3e = _integrate_with_rounding(
            scheme,
            lambda t: traj.values(t) / t[:, None] ** (1 + k),
            lambda t: traj.magnitude(t) / t[:, None] ** (1 + k),
            outer,
        )
        tk = traj.scaled(k)
        o1, o1e = _integrate_with_rounding(
            scheme,
            lambda t: tk.values(t) / t[:, None],
            lambda t: tk.magnitude(t) / t[:, None],
            outer,
        )
        # inner piece: Taylor remainder where the data vanish, truncation otherwise
        i3, i3e = _integrate_with_rounding(
            scheme,
            lambda t: traj.remainder(k + 1, t),
            lambda t: traj.remainder_magnitude(k + 1, t),
            inner,
        )
        i1, i1e = _integrate_with_rounding(
            scheme,
            lambda t: tk.remainder(1, t),
            lambda t: tk.remainder_magnitude(1, t),
            inner,
        )
        if not np.all(ok):
            t3, t3e = _integrate_with_rounding(
                scheme,
                lambda t: traj.values(t) / t[:, None] ** (1 + k),
                lambda t: traj.magnitude(t) / t[:, None] ** (1 + k),
                trunc_inner,
            )
            t1, t1e = _integrate_with_rounding(
                scheme,
                lambda t: tk.values(t) / t[:, None],
                lambda t: tk.magnitude(t) / t[:, None],
                trunc_inner,
            )
            i3 = np.where(ok, i3, t3)
            i3e = np.where(ok, i3e, t3e)
            i1 = np.where(ok, i1, t1)
            i1e = np.where(ok, i1e, t1e)
            bad = [int(x) for x in nodes[~ok]]
            diagnostics.append(
                f"k={k}: Taylor coefficients of phi up to order {k} do not vanish at nodes "
                f"{bad[:8]}{'...' if len(bad) > 8 else ''}; moment diverges, reporting the "
                f"integral truncated at t_min={t_min:g}"
            )
        M[:, j] = i3 + o3
        Me[:, j] = i3e + o3e + tail
        F1[:, j] = (-1.0) ** k * (i1 + o1) / fact
        F1e[:, j] = (i1e + o1e + tail * fact) / fact

        # k-th derivative by central differences with one Richardson step
        def fd_form(h):
            return _integrate_with_rounding(
                scheme,
                lambda t: _fd_derivative(traj, k, t, h) / t[:, None],
                lambda t: _fd_derivative(traj, k, t, h, magnitude=True) / t[:, None],
                np.concatenate([trunc_inner, outer[1:]]),
            )

        a, ae = fd_form(fd_step)
        b, be = fd_form(0.5 * fd_step)
        d2 = (4.0 * b - a) / 3.0
        # int_0^t_min of d^k phi / t is about taylor(k+1) t_min when taylor(k) vanishes
        head = np.where(ok, traj.taylor(k + 1) * t_min, 0.0)
        head_err = np.abs(traj.taylor(k + 2)) * t_min**2 / 4.0
        F2[:, j] = (d2 + head) / fact
        F2e[:, j] = (np.abs(b - a) / 3.0 + ae + be + head_err + tail * fact) / fact

        # endpoint terms phi^{(k-i)}(t) t^{-i}, i = 1..k, of the repeated integration by parts
        lo = np.zeros(nx)
        hi = np.zeros(nx)
        for i in range(1, k + 1):
            d = k - i
            if np.any(ok):
                # phi^{(d)}(t) = t^{k+1-d} R(t) when the data vanish, so the term is t R(t)
                r = traj.scaled(d).remainder(k + 1 - d, np.array([t_min]))[0] * t_min
                lo = np.maximum(lo, np.where(ok, np.abs(r), np.inf))
            hi = np.maximum(hi, np.abs(traj.derivative(d, np.array([T]))[0]) / T**i)
        end_lo[:, j] = np.where(ok, lo, np.inf)
        end_hi[:, j] = hi

    lhs, rhs = _hardy_terms(traj, scheme)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    return MomentReport(
        nodes=np.asarray(nodes),
        k_max=k_max,
        t_min=t_min,
        T=T,
        moments=M + 0.0,
        errors=Me,
        form_idn=F1 + 0.0,
        form_idn_errors=F1e,
        form_deriv=F2 + 0.0,
        form_deriv_errors=F2e,
        vanishing=van,
        endpoint_small=end_lo,
        endpoint_large=end_hi,
        psi_norm=np.sqrt(lhs),
        hardy_lhs=lhs,
        hardy_rhs=rhs,
        hardy_ratio=ratio,
        diagnostics=diagnostics,
    )


def _hardy_terms(traj: Trajectory, scheme: QuadratureScheme):
    """int phi^2 / t^2 and 4 int phi'^2 over (0, T], per node; lhs is inf when phi(0) != 0."""
    ok0 = vanishing_mask(traj, 0)
    inner = np.concatenate([[0.0], scheme.inner_breakpoints()])
    outer = scheme.outer_breakpoints()
    def sq(f, fmag):
        # square of a noisy quantity: rounding scale 2 |f| fmag
        return (lambda t: f(t) ** 2, lambda t: 2.0 * np.abs(f(t)) * fmag(t))

    r_in, _ = _integrate_with_rounding(
        scheme, *sq(lambda t: traj.remainder(1, t), lambda t: traj.remainder_magnitude(1, t)), inner
    )
    r_out, _ = _integrate_with_rounding(
        scheme,
        *sq(lambda t: traj.values(t) / t[:, None], lambda t: traj.magnitude(t) / t[:, None]),
        outer,
    )
    lhs = np.where(ok0, r_in + r_out, np.inf)
    d = traj.scaled(1)
    g = sq(d.values, d.magnitude)
    e_in, _ = _integrate_with_rounding(scheme, *g, inner)
    e_out, _ = _integrate_with_rounding(scheme, *g, outer)
    rhs = HARDY_CONSTANT * (e_in + e_out)
    return lhs, rhs


# -- Hardy inequality and moment decay on sampled phi -------------------------------


@dataclass(frozen=True)
class HardyResult:
    lhs: float
    rhs: float
    derivative_energy: float
    ratio: float
    holds: bool


def hardy_check(t, phi, tol: float = 1e-10, vanish_tol: float = 1e-8) -> HardyResult:
    """Sampled check of int |phi|^2 / t^2 <= 4 int |phi'|^2.

    ``rhs`` includes the constant 4, so the inequality reads lhs <= rhs.
    phi' comes from a cubic spline through the samples; the derivative energy
    is recomputed on every other sample and a disagreement above 10% means
    the grid is too coarse.
    """
    t = np.asarray(t, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if t.ndim != 1 or t.shape != phi.shape or t.size < 8:
        raise ValueError("need matching 1-D arrays of at least 8 samples")
    if np.any(np.diff(t) <= 0) or t[0] < 0:
        raise ValueError("t must be increasing and nonnegative")
    scale = max(float(np.max(np.abs(phi))), 1e-300)
    if abs(phi[0]) > vanish_tol * scale and np.any(phi):
        raise ValueError("phi must vanish at the start of the grid")
    if not np.any(phi):
        return HardyResult(0.0, 0.0, 0.0, 0.0, True)

    def terms(ts, ps):
        sp = CubicSpline(ts, ps)
        dp = sp(ts, 1)
        energy = simpson(dp**2, x=ts)
        q = np.empty_like(ps)
        pos = ts > 0
        q[pos] = ps[pos] / ts[pos]
        q[~pos] = dp[~pos]
        lhs = simpson(q**2, x=ts)
        if ts[0] > 0:
            # phi ~ phi'(t0) t on (0, t0]
            lhs += dp[0] ** 2 * ts[0]
            energy += dp[0] ** 2 * ts[0]
        return lhs, energy

    lhs, energy = terms(t, phi)
    _, coarse = terms(t[::2], phi[::2])
    if energy > 0 and abs(coarse - energy) > 0.1 * energy:
        raise ValueError("grid too coarse to estimate phi' (step-halving disagreement > 10%)")
    rhs = HARDY_CONSTANT * energy
    ratio = lhs / rhs if rhs > 0 else (math.inf if lhs > 0 else 0.0)
    return HardyResult(float(lhs), float(rhs), float(energy), float(ratio), bool(lhs <= rhs + tol))


@dataclass(frozen=True)
class MomentDecayReport:
    psi_norm: np.ndarray
    moments: np.ndarray
    series_bound: np.ndarray
    phi_sup: np.ndarray
    vanishing_order: np.ndarray


def _vanishing_order(t, phi):
    pos = t > 0
    tp, pp = t[pos], np.abs(phi[pos])
    if not np.any(pp):
        return math.inf
    sel = tp <= 10.0 * tp[0]
    if sel.sum() < 2 or np.any(pp[sel] == 0):
        return 0.0
    slope = np.polyfit(np.log(tp[sel]), np.log(pp[sel]), 1)[0]
    return float(slope)


def moment_decay_report(t, phi, k_max: int, moments=None) -> MomentDecayReport:
    """Quantities behind the power-series argument for sampled phi.

    For each column of ``phi`` (shape (len(t),) or (len(t), n)): the norm of
    psi(t) = phi(1/t), i.e. sqrt(int phi^2 / t^2); the moments M_1..M_k_max
    (taken from ``moments`` when given, otherwise integrated from the samples,
    NaN where phi does not vanish to high enough order for convergence); the
    truncated series sum |M_k| / (k-1)! at radius 1; and sup |phi| on the grid.
    """
    t = np.asarray(t, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 1:
        phi = phi[:, None]
    n = phi.shape[1]
    pos = t > 0
    tp = t[pos]
    orders = np.array([_vanishing_order(t, phi[:, i]) for i in range(n)])
    if moments is None:
        mom = np.full((n, k_max), np.nan)
        for i in range(n):
            p = orders[i]
            if math.isinf(p):
                mom[i] = 0.0
                continue
            for k in range(1, k_max + 1):
                if p - k < 0.5:
                    break
                g = phi[pos, i] / tp ** (1 + k)
                val = CubicSpline(tp, g).integrate(tp[0], tp[-1])
                val += g[0] * tp[0] / (p - k)
                mom[i, k - 1] = val
    else:
        mom = np.atleast_2d(np.asarray(moments, dtype=float))
    psi = np.empty(n)
    for i in range(n):
        p = orders[i]
        if math.isinf(p):
            psi[i] = 0.0
        elif p < 0.5:
            psi[i] = math.inf
        else:
            q = (phi[pos, i] / tp) ** 2
            val = CubicSpline(tp, q).integrate(tp[0], tp[-1]) + q[0] * tp[0] / (2 * p - 1)
            psi[i] = math.sqrt(max(val, 0.0))
    fact = np.array([math.factorial(k - 1) for k in range(1, mom.shape[1] + 1)], dtype=float)
    series = np.nansum(np.abs(mom) / fact, axis=1)
    return MomentDecayReport(psi, mom, series, np.max(np.abs(phi), axis=0), orders)


# -- heat-kernel recovery -----------------------------------------------------------


@dataclass
class KernelRecoveryReport:
    """Per time: reconstructed-kernel discrepancy on O x O and supporting checks.

    ``discrepancy[i]`` is max |K_1 - K_2| over O x O at t_grid[i], from
    kernels reconstructed out of semigroup actions on the source basis.
    ``composition[i]`` is the size of the split-integral combination
    L_1(e^{-t A_1} u_1) - L_2(e^{-t A_2} u_2) on O, ``composition_residual[i]``
    its distance to e^{-t A_1} f - e^{-t A_2} f, ``reconstruction_error[i]``
    the distance of the reconstructed kernels to the directly assembled ones,
    ``shift_residual[i]`` max |K_A - e^{-mt} K_Delta| and
    ``laplace_discrepancy[i]`` the discrepancy of the unshifted kernels.
    """

    t_grid: np.ndarray
    rank: int
    discrepancy: np.ndarray
    composition: np.ndarray
    composition_residual: np.ndarray
    reconstruction_error: np.ndarray
    shift_residual: np.ndarray
    laplace_discrepancy: np.ndarray

    @property
    def max_discrepancy(self) -> float:
        return float(np.max(self.discrepancy))

    def rows(self):
        for i, t in enumerate(self.t_grid):
            yield (
                float(t),
                self.discrepancy[i],
                self.composition[i],
                self.composition_residual[i],
                self.reconstruction_error[i],
                self.shift_residual[i],
                self.laplace_discrepancy[i],
            )


def recover_heat_kernel_equality(
    pair: ManifoldPair,
    m: float,
    t_grid,
    f_basis=None,
    scheme: QuadratureScheme | None = None,
) -> KernelRecoveryReport:
    """Reconstruct K(t, x, y) on O x O for both manifolds from sources supported in O.

    ``f_basis`` is a (|O|, r) matrix whose columns are source values on O in
    correspondence order; the default is one indicator per node divided by
    the first manifold's mass there.  It must have rank |O|.
    """
    scheme = QuadratureScheme() if scheme is None else scheme
    n_o = pair.nodes1.size
    if f_basis is None:
        f_basis = np.diag(1.0 / pair.first.mass[pair.nodes1])
    B = np.asarray(f_basis, dtype=float)
    if B.shape[0] != n_o:
        raise ValueError("basis rows must match the observation set")
    rank = int(np.linalg.matrix_rank(B))
    if rank < n_o:
        raise ValueError(f"source basis does not span fields on O (rank {rank} < {n_o})")

    sides = []
    for man, nodes in zip(pair.manifolds, (pair.nodes1, pair.nodes2)):
        F = np.zeros((man.node_count, B.shape[1]))
        F[nodes, :] = B
        mu = man.eigenvalues + m
        cf = man.eigenfunctions.T @ (man.mass[:, None] * F)
        cu = cf / (mu * np.log(mu))[:, None]
        Lq = log_laplacian_quadrature(mu, scheme).value
        sides.append((man, nodes, mu, cf, cu, Lq))

    disc, comp, comp_res, rec_err, shift_res, lap_disc = ([] for _ in range(6))
    for t in np.asarray(t_grid, dtype=float):
        recs, comps, semis, lapk = [], [], [], []
        worst_rec = worst_shift = 0.0
        for man, nodes, mu, cf, cu, Lq in sides:
            phi_o = man.eigenfunctions[nodes, :]
            decay = np.exp(-t * mu)[:, None]
            G = phi_o @ (decay * cf)  # (e^{-tA} F)|_O
            Kr = np.linalg.solve((man.mass[nodes][:, None] * B).T, G.T).T
            K = heat_kernel(man, m, t)[np.ix_(nodes, nodes)]
            KL = laplace_heat_kernel(man, t)[np.ix_(nodes, nodes)]
            worst_rec = max(worst_rec, float(np.max(np.abs(Kr - K))))
            worst_shift = max(worst_shift, float(np.max(np.abs(K - math.exp(-m * t) * KL))))
            recs.append(Kr)
            lapk.append(KL)
            semis.append(G)
            comps.append(phi_o @ (Lq[:, None] * decay * cu))
        disc.append(float(np.max(np.abs(recs[0] - recs[1]))))
        D = comps[0] - comps[1]
        comp.append(float(np.max(np.abs(D))))
        comp_res.append(float(np.max(np.abs(D - (semis[0] - semis[1])))))
        rec_err.append(worst_rec)
        shift_res.append(worst_shift)
        lap_disc.append(float(np.max(np.abs(lapk[0] - lapk[1]))))
    return KernelRecoveryReport(
        np.asarray(t_grid, dtype=float),
        rank,
        np.asarray(disc),
        np.asarray(comp),
        np.asarray(comp_res),
        np.asarray(rec_err),
        np.asarray(shift_res),
        np.asarray(lap_disc),
    )


# -- regularity proxy -------------------------------------------------------------------


def coefficient_decay_slope(manifold: SpectralManifold, m: float, f: Field, floor: float = 1e3 * EPS) -> float:
    """Log-log slope of the coefficient envelope of u = L^{-1} f against lambda + m.

    Each eigenspace contributes one amplitude (so the basis choice inside it
    does not matter).  The fit uses the decreasing envelope, max over higher
    modes, which removes isolated near-zeros, and drops the ground mode and
    amplitudes below ``floor`` times the largest, where rounding takes over.
    For smooth f the slope keeps steepening as the resolution grows.
    """
    mu = manifold.eigenvalues + m
    c = manifold.coefficients(f) / (mu * np.log(mu))
    amp = np.array([math.sqrt(float(np.sum(c[a:b] ** 2))) for a, b in manifold.groups])
    lam = np.array([mu[a] for a, _ in manifold.groups])
    env = np.maximum.accumulate(amp[::-1])[::-1]
    keep = env > floor * env[0]
    keep[0] = False
    if keep.sum() < 2:
        raise ValueError("too few resolved modes to fit a decay slope")
    return float(np.polyfit(np.log(lam[keep]), np.log(env[keep]), 1)[0])


def smooth_bump(manifold: SpectralManifold, center: int, width: float, support=None) -> Field:
    """exp(1 - 1 / (1 - (d / width)^2)) inside the geodesic ball, zero outside; peak value 1."""
    d = manifold.distances[center]
    r = d / width
    v = np.zeros(manifold.node_count)
    inside = r < 1.0
    v[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    if support is not None:
        mask = np.zeros(manifold.node_count, dtype=bool)
        mask[np.asarray(support, dtype=int)] = True
        v[~mask] = 0.0
    return manifold.field(v)

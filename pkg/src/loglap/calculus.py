"""Spectral functions of the shifted operator A = -Delta + m I.

Every operator here acts through the eigenbasis: expand in phi_k, scale each
eigenspace by a scalar multiplier of lambda_k, and resynthesize.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .manifold import Field, SpectralManifold, _values

DEFAULT_M = 2.0
DENSE_LIMIT = 512


class Kind(str, enum.Enum):
    SHIFT = "shift"
    LOG = "log"
    LOG_LAPLACIAN = "log_laplacian"
    FRAC_POWER = "frac_power"
    HEAT_EXP = "heat_exp"
    INV_LOG_LAPLACIAN = "inv_log_laplacian"
    INV_SHIFT = "inv_shift"


@dataclass(frozen=True)
class OperatorSpec:
    """Which scalar function of A to apply.

    ``s`` is the exponent for FRAC_POWER and ``t`` the time for HEAT_EXP.
    """

    kind: Kind
    m: float = DEFAULT_M
    s: float | None = None
    t: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if not self.m > 1.0:
            raise ValueError("m > 1 required")
        if self.kind is Kind.FRAC_POWER:
            if self.s is None or not 0.0 < self.s < 1.0:
                raise ValueError("fractional power exponent must lie in (0, 1)")
        if self.kind is Kind.HEAT_EXP:
            if self.t is None or self.t < 0.0:
                raise ValueError("heat time must be nonnegative")

    @classmethod
    def shift(cls, m=DEFAULT_M):
        return cls(Kind.SHIFT, m)

    @classmethod
    def log(cls, m=DEFAULT_M):
        return cls(Kind.LOG, m)

    @classmethod
    def log_laplacian(cls, m=DEFAULT_M):
        return cls(Kind.LOG_LAPLACIAN, m)

    @classmethod
    def frac_power(cls, s, m=DEFAULT_M):
        return cls(Kind.FRAC_POWER, m, s=s)

    @classmethod
    def heat(cls, t, m=DEFAULT_M):
        return cls(Kind.HEAT_EXP, m, t=t)

    @classmethod
    def inv_log_laplacian(cls, m=DEFAULT_M):
        return cls(Kind.INV_LOG_LAPLACIAN, m)

    @classmethod
    def inv_shift(cls, m=DEFAULT_M):
        return cls(Kind.INV_SHIFT, m)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "m": self.m}
        if self.s is not None:
            d["s"] = self.s
        if self.t is not None:
            d["t"] = self.t
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OperatorSpec":
        return cls(Kind(d["kind"]), float(d.get("m", DEFAULT_M)), d.get("s"), d.get("t"))


def spectral_multiplier(spec: OperatorSpec, lam):
    """Scalar multiplier of ``spec`` at Laplace eigenvalue(s) ``lam`` >= 0."""
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr < 0):
        raise ValueError("eigenvalues must be nonnegative")
    mu = lam_arr + spec.m
    k = spec.kind
    if k is Kind.SHIFT:
        out = mu
    elif k is Kind.LOG:
        out = np.log(mu)
    elif k is Kind.LOG_LAPLACIAN:
        out = mu * np.log(mu)
    elif k is Kind.FRAC_POWER:
        out = mu**spec.s
    elif k is Kind.HEAT_EXP:
        out = np.exp(-spec.t * mu)
    elif k is Kind.INV_LOG_LAPLACIAN:
        out = 1.0 / (mu * np.log(mu))
    else:
        out = 1.0 / mu
    return float(out) if np.ndim(lam) == 0 else out


def project(manifold: SpectralManifold, u: Field, k: int) -> Field:
    """Mass-orthogonal projection of u onto the k-th eigenspace (k indexes groups)."""
    groups = manifold.groups
    if not 0 <= k < len(groups):
        raise IndexError(f"eigenspace index {k} out of range (0..{len(groups) - 1})")
    a, b = groups[k]
    c = manifold.coefficients(u)
    kept = np.zeros_like(c)
    kept[a:b] = c[a:b]
    return manifold.synthesize(kept)


def projector(manifold: SpectralManifold, k: int) -> np.ndarray:
    """Node-basis matrix of the k-th spectral projector."""
    a, b = manifold.groups[k]
    phi = manifold.eigenfunctions[:, a:b]
    return phi @ (phi.T * manifold.mass)


def apply(manifold: SpectralManifold, spec: OperatorSpec, u: Field) -> Field:
    """sum_k multiplier(spec, lambda_k) pi_k(u)."""
    c = manifold.coefficients(u)
    return manifold.synthesize(spectral_multiplier(spec, manifold.eigenvalues) * c)


def kernel_matrix(manifold: SpectralManifold, spec: OperatorSpec) -> np.ndarray:
    """Symmetric kernel Phi diag(w) Phi^T; the operator acts as u -> K (mass * u)."""
    if manifold.node_count > DENSE_LIMIT:
        raise ValueError(f"dense assembly limited to N <= {DENSE_LIMIT}")
    phi = manifold.eigenfunctions
    w = spectral_multiplier(spec, manifold.eigenvalues)
    K = (phi * w) @ phi.T
    return 0.5 * (K + K.T)


def operator_matrix(manifold: SpectralManifold, spec: OperatorSpec) -> np.ndarray:
    """Node-basis matrix of the operator (mass-self-adjoint, not symmetric)."""
    return kernel_matrix(manifold, spec) * manifold.mass[None, :]


def operator_eigenvalues(manifold: SpectralManifold, spec: OperatorSpec) -> np.ndarray:
    """Eigenvalues of the assembled operator, via the symmetric form M^1/2 K M^1/2."""
    r = np.sqrt(manifold.mass)
    S = r[:, None] * kernel_matrix(manifold, spec) * r[None, :]
    return np.linalg.eigvalsh(0.5 * (S + S.T))


def check_support(f: Field, support) -> None:
    mask = np.ones(f.manifold.node_count, dtype=bool)
    mask[np.asarray(list(support), dtype=int)] = False
    if np.any(f.values[mask] != 0.0):
        raise ValueError("source is not supported in the observation set")


def solve_direct(manifold: SpectralManifold, f: Field, support=None, m: float = DEFAULT_M) -> Field:
    """Unique solution u of L u = f, where L = A ln A.

    Args:
        manifold: where f lives.
        f: source; must vanish outside ``support`` when one is given.
        support: node indices of the observation set O.
        m: mass shift, m > 1.
    """
    _values(f, manifold)
    if support is not None:
        check_support(f, support)
    return apply(manifold, OperatorSpec.inv_log_laplacian(m), f)


def residual(manifold: SpectralManifold, u: Field, f: Field, m: float = DEFAULT_M) -> float:
    """||L u - f|| / ||f|| in the mass norm (0 when f = 0 and u = 0)."""
    r = apply(manifold, OperatorSpec.log_laplacian(m), u) - f
    fn = f.norm()
    return r.norm() / fn if fn > 0 else r.norm()


def bootstrap_apply(manifold: SpectralManifold, u: Field, k: int, m: float = DEFAULT_M) -> Field:
    """A^k u by k repeated applications of the shift."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    spec = OperatorSpec.shift(m)
    for _ in range(k):
        u = apply(manifold, spec, u)
    return u


def rayleigh_lower_bound(m: float) -> float:
    """min over lambda >= 0 of (lambda + m) ln(lambda + m); attained at lambda = 0 for m > 1."""
    return m * math.log(m)

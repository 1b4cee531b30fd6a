"""Discretized closed manifolds with a mass inner product and a full eigensystem."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components, shortest_path

ORTHONORMALITY_TOL = 1e-10
CONNECTIVITY_TOL = 1e-12
GROUPING_TOL = 1e-8

_ids = itertools.count()


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpectralManifold:
    """A closed manifold sampled at N nodes.

    ``eigenfunctions[:, k]`` is the k-th eigenfunction, orthonormal in the mass
    inner product; ``eigenvalues`` are the Laplace-Beltrami eigenvalues in
    ascending order with ``eigenvalues[0] == 0``.  Instances are immutable.
    """

    mass: np.ndarray
    distances: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    dimension: int
    label: str = ""
    uid: int = field(default_factory=lambda: next(_ids))

    def __post_init__(self):
        for name in ("mass", "distances", "eigenvalues", "eigenfunctions"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        n = self.mass.shape[0]
        if self.distances.shape != (n, n) or self.eigenfunctions.shape != (n, n):
            raise ValueError("inconsistent array shapes")
        if self.eigenvalues.shape != (n,):
            raise ValueError("need one eigenvalue per node")
        if np.any(self.mass <= 0):
            raise ValueError("mass weights must be positive")
        if self.dimension < 1:
            raise ValueError("dimension must be at least 1")

    @property
    def node_count(self) -> int:
        return self.mass.shape[0]

    @cached_property
    def groups(self) -> list[tuple[int, int]]:
        """Index ranges [start, stop) of maximal runs of equal eigenvalues."""
        lam = self.eigenvalues
        out = []
        start = 0
        for i in range(1, lam.size + 1):
            if i == lam.size or lam[i] - lam[start] > GROUPING_TOL * (1.0 + lam[start]):
                out.append((start, i))
                start = i
        return out

    @property
    def multiplicities(self) -> list[int]:
        return [b - a for a, b in self.groups]

    def field(self, values) -> "Field":
        return Field(np.asarray(values, dtype=float), self)

    def constant(self, value: float = 1.0) -> "Field":
        return self.field(np.full(self.node_count, float(value)))

    def eigenfunction(self, k: int) -> "Field":
        return self.field(self.eigenfunctions[:, k])

    def coefficients(self, u: "Field | np.ndarray") -> np.ndarray:
        """Expansion coefficients <u, phi_k> of a field in the eigenbasis."""
        v = _values(u, self)
        return self.eigenfunctions.T @ (self.mass * v)

    def synthesize(self, coeffs) -> "Field":
        return self.field(self.eigenfunctions @ np.asarray(coeffs, dtype=float))

    def gram(self) -> np.ndarray:
        phi = self.eigenfunctions
        return phi.T @ (self.mass[:, None] * phi)

    def orthonormality_residual(self) -> float:
        return float(np.max(np.abs(self.gram() - np.eye(self.node_count))))

    def laplacian(self) -> np.ndarray:
        """-Delta as a node-basis matrix, Phi diag(lambda) Phi^T M."""
        phi = self.eigenfunctions
        return (phi * self.eigenvalues) @ (phi.T * self.mass)

    def relabel(self, perm, label: str | None = None) -> "SpectralManifold":
        """Isometric copy whose node i is node ``perm[i]`` of this manifold."""
        perm = np.asarray(perm, dtype=int)
        if sorted(perm.tolist()) != list(range(self.node_count)):
            raise ValueError("perm must be a permutation of the node indices")
        return SpectralManifold(
            mass=self.mass[perm],
            distances=self.distances[np.ix_(perm, perm)],
            eigenvalues=self.eigenvalues,
            eigenfunctions=self.eigenfunctions[perm, :],
            dimension=self.dimension,
            label=label if label is not None else f"{self.label}-relabeled",
        )


@dataclass(frozen=True, eq=False)
class Field:
    """Real values on the nodes of a manifold."""

    values: np.ndarray
    manifold: SpectralManifold

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.manifold.node_count,):
            raise ValueError(
                f"field has {v.size} values, manifold has {self.manifold.node_count} nodes"
            )
        object.__setattr__(self, "values", v)

    @property
    def manifold_id(self) -> int:
        return self.manifold.uid

    def _other(self, other):
        if isinstance(other, Field):
            check_same_manifold(self, other)
            return other.values
        return other

    def __add__(self, other):
        return Field(self.values + self._other(other), self.manifold)

    def __sub__(self, other):
        return Field(self.values - self._other(other), self.manifold)

    def __mul__(self, scalar):
        return Field(self.values * scalar, self.manifold)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(-self.values, self.manifold)

    def norm(self) -> float:
        return float(np.sqrt(inner_product(self, self)))


def check_same_manifold(u: Field, v: Field) -> None:
    if u.manifold is not v.manifold:
        raise ValueError(
            f"fields live on different manifolds ({u.manifold.label!r}, {v.manifold.label!r})"
        )


def _values(u, manifold: SpectralManifold) -> np.ndarray:
    if isinstance(u, Field):
        if u.manifold is not manifold:
            raise ValueError("field lives on a different manifold")
        return u.values
    v = np.asarray(u, dtype=float)
    if v.shape != (manifold.node_count,):
        raise ValueError("array length does not match node count")
    return v


def inner_product(u: Field, v: Field) -> float:
    """Mass-weighted L2 pairing sum_x mass(x) u(x) v(x)."""
    check_same_manifold(u, v)
    return float(np.dot(u.manifold.mass * u.values, v.values))


def _orthonormalize(vectors: list[np.ndarray], mass: np.ndarray) -> np.ndarray:
    cols = [v / np.sqrt(np.dot(mass * v, v)) for v in vectors]
    return np.column_stack(cols)


def _trig_modes(n: int, length: float):
    """Real Fourier modes on n equispaced points of a loop of given length.

    Returns (wavenumbers, vectors) ordered 0, 1, 1, 2, 2, ... with cosine
    before sine; the Nyquist sine vanishes on the grid and is omitted.
    """
    x = 2.0 * np.pi * np.arange(n) / n
    freqs = [0]
    vecs = [np.ones(n)]
    for k in range(1, n // 2 + 1):
        freqs.append(k)
        vecs.append(np.cos(k * x))
        if 2 * k != n:
            freqs.append(k)
            vecs.append(np.sin(k * x))
    wav = 2.0 * np.pi * np.asarray(freqs[:n], dtype=float) / length
    return wav, vecs[:n]


def _finish(mass, distances, lam, phi, dimension, label) -> SpectralManifold:
    m = SpectralManifold(mass, distances, lam, phi, dimension, label)
    res = m.orthonormality_residual()
    if res > ORTHONORMALITY_TOL:
        raise RuntimeError(f"eigenfunctions not mass-orthonormal (residual {res:.3g})")
    return m


def build_circle(N: int, radius: float = 1.0) -> SpectralManifold:
    """Circle of given radius sampled at N equispaced nodes.

    Eigenpairs are the continuum ones (k^2 / radius^2 with cos and sin modes)
    sampled at the nodes, not those of a difference stencil.
    """
    if N < 4:
        raise ValueError("a circle needs at least 4 nodes")
    if radius <= 0:
        raise ValueError("radius must be positive")
    length = 2.0 * np.pi * radius
    mass = np.full(N, length / N)
    wav, vecs = _trig_modes(N, length)
    theta = 2.0 * np.pi * np.arange(N) / N
    gap = np.abs(theta[:, None] - theta[None, :])
    distances = radius * np.minimum(gap, 2.0 * np.pi - gap)
    return _finish(
        mass, distances, wav**2, _orthonormalize(vecs, mass), 1, f"circle(N={N}, r={radius:g})"
    )


def build_flat_torus(N1: int, N2: int, L1: float, L2: float) -> SpectralManifold:
    """Flat torus [0, L1) x [0, L2) on an N1 x N2 grid, node index i * N2 + j."""
    if N1 < 4 or N2 < 4:
        raise ValueError("a torus needs at least 4 nodes per side")
    if L1 <= 0 or L2 <= 0:
        raise ValueError("side lengths must be positive")
    w1, v1 = _trig_modes(N1, L1)
    w2, v2 = _trig_modes(N2, L2)
    lam = (w1[:, None] ** 2 + w2[None, :] ** 2).ravel()
    vecs = [np.outer(a, b).ravel() for a in v1 for b in v2]
    order = np.argsort(lam, kind="stable")
    mass = np.full(N1 * N2, (L1 / N1) * (L2 / N2))
    phi = _orthonormalize([vecs[i] for i in order], mass)

    x = (np.arange(N1) * L1 / N1).repeat(N2)
    y = np.tile(np.arange(N2) * L2 / N2, N1)
    dx = np.abs(x[:, None] - x[None, :])
    dy = np.abs(y[:, None] - y[None, :])
    dx = np.minimum(dx, L1 - dx)
    dy = np.minimum(dy, L2 - dy)
    distances = np.sqrt(dx**2 + dy**2)
    return _finish(
        mass, distances, lam[order], phi, 2, f"torus({N1}x{N2}, {L1:g}x{L2:g})"
    )


def build_weighted_graph(
    adjacency,
    mass=None,
    distances=None,
    dimension: int = 1,
    label: str = "graph",
) -> SpectralManifold:
    """Mass-weighted graph Laplacian, solved as (D - W) phi = lambda M phi.

    Without explicit distances, shortest weighted paths are used with edge
    length 1 / sqrt(w), the spacing h for which a weight w ~ 1/h^2 is the
    usual second-difference coefficient.
    """
    W = np.asarray(adjacency, dtype=float)
    n = W.shape[0]
    if W.shape != (n, n):
        raise ValueError("adjacency must be square")
    if not np.allclose(W, W.T, rtol=0.0, atol=1e-14 * max(1.0, np.abs(W).max())):
        raise ValueError("adjacency must be symmetric")
    if np.any(W < 0):
        raise ValueError("adjacency weights must be nonnegative")
    W = 0.5 * (W + W.T)
    np.fill_diagonal(W, 0.0)
    mass = np.ones(n) if mass is None else np.asarray(mass, dtype=float)
    if mass.shape != (n,) or np.any(mass <= 0):
        raise ValueError("mass must be a positive vector with one entry per node")

    L = np.diag(W.sum(axis=1)) - W
    lam, phi = scipy.linalg.eigh(L, np.diag(mass))
    if n > 1 and lam[1] < CONNECTIVITY_TOL:
        raise ValueError(f"graph is disconnected (lambda_1 = {lam[1]:.3g})")
    lam[0] = 0.0
    phi[:, 0] = 1.0 / np.sqrt(mass.sum())

    if distances is None:
        lengths = np.zeros_like(W)
        nz = W > 0
        lengths[nz] = 1.0 / np.sqrt(W[nz])
        distances = shortest_path(lengths, method="D", directed=False)
    else:
        distances = np.asarray(distances, dtype=float)
    ncomp, _ = connected_components(W > 0, directed=False)
    if ncomp > 1:
        raise ValueError("graph is disconnected")
    return _finish(mass, distances, lam, phi, dimension, label)


def random_relabeling(n: int, fixed, rng: np.random.Generator) -> np.ndarray:
    """Random permutation of range(n) that fixes every index in ``fixed``."""
    fixed = set(int(i) for i in fixed)
    free = np.array([i for i in range(n) if i not in fixed], dtype=int)
    perm = np.arange(n)
    perm[free] = rng.permutation(free)
    return perm


def check_distances(manifold: SpectralManifold, samples: int = 2000, rng=None) -> float:
    """Worst violation of symmetry or the triangle inequality on sampled triples."""
    d = manifold.distances
    rng = np.random.default_rng(0) if rng is None else rng
    worst = float(np.max(np.abs(d - d.T)))
    worst = max(worst, float(np.max(np.abs(np.diag(d)))))
    n = manifold.node_count
    i, j, k = rng.integers(0, n, size=(3, samples))
    worst = max(worst, float(np.max(d[i, k] - d[i, j] - d[j, k])))
    return worst


def manifold_from_dict(desc: dict) -> SpectralManifold:
    """Build a manifold from a JSON-style description.

    Recognized kinds: ``circle`` (N, radius), ``torus`` (N1, N2, L1, L2) and
    ``graph`` (adjacency, optional mass, distances, dimension).  An optional
    ``permutation`` list relabels the result.
    """
    kind = desc.get("kind")
    if kind == "circle":
        m = build_circle(int(desc["N"]), float(desc.get("radius", 1.0)))
    elif kind == "torus":
        m = build_flat_torus(
            int(desc["N1"]), int(desc["N2"]), float(desc["L1"]), float(desc["L2"])
        )
    elif kind == "graph":
        m = build_weighted_graph(
            desc["adjacency"],
            desc.get("mass"),
            desc.get("distances"),
            int(desc.get("dimension", 1)),
            desc.get("label", "graph"),
        )
    else:
        raise ValueError(f"unknown manifold kind {kind!r}")
    if desc.get("permutation") is not None:
        m = m.relabel(desc["permutation"])
    return m


def load_manifold(path) -> SpectralManifold:
    with open(Path(path)) as fh:
        return manifold_from_dict(json.load(fh))

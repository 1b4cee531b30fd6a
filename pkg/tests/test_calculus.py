import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loglap.calculus import (
    Kind,
    OperatorSpec,
    apply,
    bootstrap_apply,
    kernel_matrix,
    operator_eigenvalues,
    project,
    rayleigh_lower_bound,
    residual,
    solve_direct,
    spectral_multiplier,
)
from loglap.manifold import build_circle, inner_product


def test_multiplier_examples():
    assert spectral_multiplier(OperatorSpec.log_laplacian(2.0), 0.0) == pytest.approx(1.3862944, abs=1e-7)
    assert spectral_multiplier(OperatorSpec.log_laplacian(2.0), 1.0) == pytest.approx(3.2958369, abs=1e-7)
    assert spectral_multiplier(OperatorSpec.inv_log_laplacian(2.0), 0.0) == pytest.approx(0.7213475, abs=1e-7)


@pytest.mark.parametrize(
    "spec,f",
    [
        (OperatorSpec.shift(3.0), lambda mu: mu),
        (OperatorSpec.log(3.0), math.log),
        (OperatorSpec.frac_power(0.25, 3.0), lambda mu: mu**0.25),
        (OperatorSpec.heat(0.7, 3.0), lambda mu: math.exp(-0.7 * mu)),
        (OperatorSpec.inv_shift(3.0), lambda mu: 1 / mu),
    ],
)
def test_multiplier_kinds(spec, f):
    assert spectral_multiplier(spec, 2.0) == pytest.approx(f(5.0), rel=1e-15)


@pytest.mark.parametrize("m", [1.0, 0.5, -2.0])
def test_m_must_exceed_one(m):
    with pytest.raises(ValueError, match="m > 1 required"):
        OperatorSpec.log(m)


def test_spec_validation_and_round_trip():
    with pytest.raises(ValueError):
        OperatorSpec.frac_power(1.0)
    with pytest.raises(ValueError):
        OperatorSpec.heat(-1.0)
    spec = OperatorSpec.frac_power(0.3, 2.5)
    assert OperatorSpec.from_dict(spec.to_dict()) == spec
    assert OperatorSpec("log").kind is Kind.LOG


def test_projection_examples(circle8):
    phi0 = circle8.eigenfunction(0)
    assert np.allclose(project(circle8, phi0, 0).values, phi0.values)
    assert np.allclose(project(circle8, phi0, 1).values, 0.0)
    x = 2 * np.pi * np.arange(8) / 8
    u = circle8.field(np.cos(x) + np.sin(2 * x))
    assert np.allclose(project(circle8, u, 1).values, np.cos(x), atol=1e-14)
    with pytest.raises(IndexError):
        project(circle8, u, 5)


@given(st.integers(min_value=0, max_value=10**6))
def test_resolution_of_identity_and_idempotence(seed):
    m = build_circle(16)
    u = m.field(np.random.default_rng(seed).standard_normal(16))
    parts = [project(m, u, k) for k in range(len(m.groups))]
    assert np.allclose(sum(p.values for p in parts), u.values, atol=1e-10)
    p1 = parts[1]
    assert np.allclose(project(m, p1, 1).values, p1.values, atol=1e-12)


def test_apply_examples(circle64):
    phi1 = circle64.eigenfunction(1)
    out = apply(circle64, OperatorSpec.log_laplacian(2.0), phi1)
    assert np.allclose(out.values, 3 * math.log(3) * phi1.values, rtol=0, atol=1e-10)


@given(st.integers(min_value=0, max_value=10**6), st.floats(min_value=1.1, max_value=8.0))
def test_commutation_and_self_adjointness(seed, m):
    man = build_circle(32)
    rng = np.random.default_rng(seed)
    u, v = (man.field(rng.standard_normal(32)) for _ in range(2))
    a = apply(man, OperatorSpec.shift(m), apply(man, OperatorSpec.log(m), u))
    b = apply(man, OperatorSpec.log(m), apply(man, OperatorSpec.shift(m), u))
    assert np.max(np.abs(a.values - b.values)) <= 1e-12 * max(1.0, np.max(np.abs(a.values)))
    L = OperatorSpec.log_laplacian(m)
    lhs = inner_product(apply(man, L, u), v)
    rhs = inner_product(u, apply(man, L, v))
    assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(lhs))


@given(st.integers(min_value=0, max_value=10**6))
def test_rayleigh_lower_bound(seed):
    m = 2.0
    man = build_circle(32)
    v = man.field(np.random.default_rng(seed).standard_normal(32))
    v = v * (1.0 / v.norm())
    assert inner_product(v, apply(man, OperatorSpec.log_laplacian(m), v)) >= rayleigh_lower_bound(m) - 1e-9


def test_spectral_mapping(torus8):
    spec = OperatorSpec.log_laplacian(2.0)
    got = np.sort(operator_eigenvalues(torus8, spec))
    want = np.sort(spectral_multiplier(spec, torus8.eigenvalues))
    assert np.allclose(got, want, atol=1e-9 * want.max())
    K = kernel_matrix(torus8, spec)
    assert np.array_equal(K, K.T)


def test_solve_direct_examples(circle64):
    zero = circle64.field(np.zeros(64))
    assert np.all(solve_direct(circle64, zero, support=range(16)).values == 0)
    f = np.zeros(64)
    f[0] = 1.0 / circle64.mass[0]
    f = circle64.field(f)
    u = solve_direct(circle64, f, support=[0])
    one = circle64.constant()
    assert inner_product(u, one) == pytest.approx(inner_product(f, one) / (2 * math.log(2)), rel=1e-12)
    assert residual(circle64, u, f) < 1e-10


def test_solve_direct_support_violation(circle64):
    f = circle64.field(np.ones(64))
    with pytest.raises(ValueError):
        solve_direct(circle64, f, support=range(16))


def test_bootstrap_examples(circle64, rng):
    phi1 = circle64.eigenfunction(1)
    assert np.allclose(bootstrap_apply(circle64, phi1, 1).values, 3 * phi1.values)
    phi0 = circle64.eigenfunction(0)
    assert np.allclose(bootstrap_apply(circle64, phi0, 3).values, 8 * phi0.values)
    f = circle64.field(rng.standard_normal(64))
    u = solve_direct(circle64, f)
    L = OperatorSpec.log_laplacian(2.0)
    lhs = apply(circle64, L, bootstrap_apply(circle64, u, 1))
    rhs = bootstrap_apply(circle64, f, 1)
    assert (lhs - rhs).norm() / rhs.norm() < 1e-9
    with pytest.raises(ValueError):
        bootstrap_apply(circle64, u, -1)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import Polynomial

from maxreg._numerics import fd_derivative
from maxreg.ellipticity import RootSplit, split_normal_roots
from maxreg.exceptions import ContourGeometryError, NumericalAccuracyError
from maxreg.lopatinskii import (
    HalfSpaceProblem,
    build_poisson_symbols,
    check_shapiro_lopatinskii,
    choose_contour,
    lopatinskii_degree,
    lopatinskii_matrix,
    one_sided_hilbert,
    reduce_mod_a_plus,
    single_mode_rhs,
    solve_halfspace_model,
    trace_corrector,
    volevich_corrector,
)
from maxreg.opalg import (
    BoundaryOperator,
    FrequencyPoint,
    dirichlet_conditions,
    laplacian,
    neumann_conditions,
    normal_symbol_polynomial,
    project_to_sphere,
)

from conftest import BVP_FIXTURES

SQRT2 = math.sqrt(2.0)


def tangential_condition():
    return [BoundaryOperator(2, 1, {(1, 0): 1.0})]


# ------------------------------------------------------------ reduction

def test_reduce_tau_mod_linear():
    np.testing.assert_allclose(reduce_mod_a_plus(Polynomial([0, 1]), Polynomial([-1j, 1])), [1j])


@pytest.mark.parametrize("a_plus", [Polynomial([-1j, 1]), Polynomial([-1, -1j * SQRT2, 1]), Polynomial([2, 0, 1j, 1])])
def test_reduce_constant(a_plus):
    out = reduce_mod_a_plus(Polynomial([1.0]), a_plus)
    expected = np.zeros(len(a_plus.coef) - 1)
    expected[0] = 1
    np.testing.assert_allclose(out, expected)


def test_reduce_square_mod_quadratic(rng):
    a_plus = Polynomial([-1, -1j * SQRT2, 1])
    b = Polynomial([0, 0, 1])
    rem = reduce_mod_a_plus(b, a_plus)
    np.testing.assert_allclose(rem, [1, 1j * SQRT2], atol=1e-14)
    quotient = (b - Polynomial(rem)) // a_plus
    tau = rng.normal(size=5) + 1j * rng.normal(size=5)
    np.testing.assert_allclose(b(tau) - quotient(tau) * a_plus(tau), Polynomial(rem)(tau), atol=1e-12)


# ------------------------------------------------------- Lopatinskii matrix

@pytest.mark.parametrize("pt", [FrequencyPoint((1.0,), 0.0), FrequencyPoint((0.3,), 0.2 + 0.9j)])
def test_dirichlet_matrix_is_identity(laplace_2d, pt):
    np.testing.assert_allclose(lopatinskii_matrix(laplace_2d, dirichlet_conditions(2, 1), pt), [[1.0]])


def test_neumann_matrix(laplace_2d):
    L = lopatinskii_matrix(laplace_2d, neumann_conditions(2, 1), FrequencyPoint((1.0,), 0.0))
    np.testing.assert_allclose(L, [[1j]], atol=1e-14)


def test_tangential_matrix_vanishes(laplace_2d):
    L = lopatinskii_matrix(laplace_2d, tangential_condition(), FrequencyPoint((0.0,), 1.0))
    np.testing.assert_allclose(L, [[0.0]])


@pytest.mark.parametrize("name", sorted(BVP_FIXTURES))
def test_fixture_verdicts(name):
    op, bops, expected = BVP_FIXTURES[name]
    rep = check_shapiro_lopatinskii(op, bops, np.pi / 2)
    assert rep.passed is expected
    assert rep.as_record()["status"] == "sampled, not certified"


def test_dirichlet_laplacian_min_det(laplace_2d):
    rep = check_shapiro_lopatinskii(laplace_2d, dirichlet_conditions(2, 1), np.pi / 2)
    assert rep.min_abs_det == pytest.approx(1.0, abs=1e-12)


def test_neumann_laplacian_min_det(laplace_2d):
    # det L = i (|xi'|^2 + lambda)^{1/2}; |xi'|^2 + lambda has smallest modulus
    # sqrt(1/2) at lambda = +-i/2, so |det L| bottoms out at 2^{-1/4}
    rep = check_shapiro_lopatinskii(laplace_2d, neumann_conditions(2, 1), np.pi / 2)
    assert rep.passed
    assert rep.min_abs_det == pytest.approx(2 ** -0.25, abs=1e-3)


def test_tangential_condition_fails_at_zero(laplace_2d):
    rep = check_shapiro_lopatinskii(laplace_2d, tangential_condition(), np.pi / 2)
    assert not rep.passed
    assert rep.worst_point.xi == (0.0,)
    assert rep.min_abs_det < 1e-12


def test_boundary_count_checked(laplace_2d):
    with pytest.raises(ValueError):
        lopatinskii_matrix(laplace_2d, dirichlet_conditions(2, 2), FrequencyPoint((1.0,), 0.0))


@pytest.mark.parametrize("name", sorted(BVP_FIXTURES))
@settings(max_examples=25, deadline=None)
@given(
    xi=st.floats(0.05, 2.0),
    r=st.floats(0.05, 2.0),
    theta=st.floats(-np.pi / 2, np.pi / 2),
    rho=st.sampled_from([0.5, 2.0, 10.0]),
)
def test_determinant_quasi_homogeneous(name, xi, r, theta, rho):
    op, bops, _ = BVP_FIXTURES[name]
    lam = r * np.exp(1j * theta)
    deg = lopatinskii_degree(op, bops)
    base = abs(np.linalg.det(lopatinskii_matrix(op, bops, FrequencyPoint((xi,), lam))))
    scaled = abs(np.linalg.det(lopatinskii_matrix(op, bops, FrequencyPoint((rho * xi,), rho**op.order_2m * lam))))
    assert scaled == pytest.approx(rho**deg * base, rel=1e-8)


# --------------------------------------------------------- Poisson symbols

@pytest.mark.parametrize("pt", [FrequencyPoint((1.0,), 0.0), FrequencyPoint((0.0,), 1.0)])
def test_dirichlet_poisson_symbol_is_exponential(laplace_2d, pt):
    (w,) = build_poisson_symbols(laplace_2d, dirichlet_conditions(2, 1), pt)
    x = np.linspace(0, 10, 41)
    np.testing.assert_allclose(w(x), np.exp(-x), atol=1e-12)
    assert w(np.array([0.0]))[0] == pytest.approx(1.0, abs=1e-12)
    assert w.decay_rate == pytest.approx(1.0, rel=1e-6)


def _random_points(rng, count, phi=np.pi / 2):
    xi = rng.normal(size=count)
    lam = rng.uniform(0.1, 2.0, count) * np.exp(1j * rng.uniform(-phi, phi, count))
    return [FrequencyPoint((float(a),), complex(b)) for a, b in zip(xi, lam)]


@pytest.mark.parametrize("name", sorted(BVP_FIXTURES))
def test_poisson_symbols_duality_and_decay(name, rng):
    op, bops, _ = BVP_FIXTURES[name]
    for pt in _random_points(rng, 5):
        symbols = build_poisson_symbols(op, bops, pt)
        bsyms = [b.principal_polynomial(np.array(pt.xi)) for b in bops]
        pair = np.array([[w.boundary_value(b) for w in symbols] for b in bsyms])
        np.testing.assert_allclose(pair, np.eye(op.m), atol=1e-8)
        assert all(w.decay_rate > 0 for w in symbols)


@pytest.mark.parametrize("name", sorted(BVP_FIXTURES))
def test_poisson_symbols_solve_normal_ode(name, rng):
    op, bops, _ = BVP_FIXTURES[name]
    for pt in _random_points(rng, 5):
        # the ODE residual is checked on the compact set; other points follow
        # by quasi-homogeneity
        pt = project_to_sphere(pt, op.order_2m)
        poly = normal_symbol_polynomial(op, pt.xi, pt.lam)
        # coarse grid, wide stencil: the quadrature noise in w (~1e-13) is
        # amplified by h^-2m in the highest derivative
        x = np.linspace(0.0, 12.0 / pt.bracket(op.order_2m), 151)
        h = x[1] - x[0]
        for w in build_poisson_symbols(op, bops, pt, fit_decay=False):
            vals = w(x)
            lhs = sum(
                c * (vals if j == 0 else (-1j) ** j * fd_derivative(vals, h, j, width=11))
                for j, c in enumerate(poly.coef)
            )
            assert np.max(np.abs(lhs)) < 1e-6 * np.max(np.abs(vals))


def test_derivative_under_integral_matches_closed_form(laplace_2d):
    (w,) = build_poisson_symbols(laplace_2d, dirichlet_conditions(2, 1), FrequencyPoint((1.0,), 0.0))
    x = np.linspace(0, 5, 11)
    # D_n e^{-x} = -i * (-e^{-x}) = i e^{-x}
    np.testing.assert_allclose(w.derivative(x, 1), 1j * np.exp(-x), atol=1e-12)


def test_contour_geometry_error():
    split = RootSplit(np.array([1e-8j]), np.array([-1e-8j]), Polynomial.fromroots([1e-8j]))
    with pytest.raises(ContourGeometryError):
        choose_contour(split)


def test_contour_encloses_only_stable_roots(bilaplace_2d):
    split = split_normal_roots(bilaplace_2d, FrequencyPoint((0.7,), 0.4 + 0.3j))
    c = choose_contour(split)
    assert np.all(np.abs(split.roots_plus - c.center) < c.radius)
    assert np.all(np.abs(split.roots_minus - c.center) > c.radius)


# ------------------------------------------------------ half-space solver

def _oracle(kind, x):
    # u'' - 2u = e^{-x}: particular -e^{-x}, homogeneous decaying e^{-sqrt2 x}
    if kind == "dirichlet":
        return -np.exp(-x) + np.exp(-SQRT2 * x)
    return -np.exp(-x) + np.exp(-SQRT2 * x) / SQRT2


def halfspace_problem(kind, K=8001, x_max=20.0):
    bops = dirichlet_conditions(2, 1) if kind == "dirichlet" else neumann_conditions(2, 1)
    rhs = single_mode_rhs(lambda x: np.exp(-x), (4,), (2 * np.pi,), (1,), x_max, K)
    return HalfSpaceProblem(laplacian(2), bops, 1.0, rhs, (2 * np.pi,), x_max)


@pytest.mark.parametrize("kind", ["dirichlet", "neumann"])
def test_halfspace_matches_ode_oracle(kind):
    prob = halfspace_problem(kind)
    sol = solve_halfspace_model(prob)
    exact = _oracle(kind, sol.x_normal)
    phase = np.exp(1j * np.arange(4) * 2 * np.pi / 4)
    err = np.max(np.abs(sol.u - phase[:, None] * exact[None, :])) / np.max(np.abs(exact))
    assert err < 1e-6
    assert sol.boundary_residual < 1e-10
    assert sol.modes == 1


def test_halfspace_zero_rhs():
    prob = halfspace_problem("dirichlet", K=201)
    prob.rhs = np.zeros_like(prob.rhs)
    sol = solve_halfspace_model(prob)
    assert np.all(sol.u == 0)
    assert sol.interior_residual == 0 and sol.boundary_residual == 0


def test_halfspace_rejects_lambda_zero():
    prob = halfspace_problem("dirichlet", K=201)
    prob.lam = 0j
    with pytest.raises(ValueError):
        solve_halfspace_model(prob)


def test_halfspace_under_resolved_grid():
    with pytest.raises(NumericalAccuracyError) as info:
        solve_halfspace_model(halfspace_problem("dirichlet", K=21), accuracy_threshold=1e-3)
    assert info.value.residual > 1e-3


@pytest.mark.parametrize("kind", ["dirichlet", "neumann"])
def test_halfspace_residual_order(kind):
    sizes = [501, 1001, 2001, 4001]
    res = [solve_halfspace_model(halfspace_problem(kind, K)).interior_residual for K in sizes]
    hs = [20.0 / (K - 1) for K in sizes]
    slope = np.polyfit(np.log(hs), np.log(res), 1)[0]
    assert slope >= 1.8


@pytest.mark.parametrize("name", sorted(BVP_FIXTURES))
def test_layer_form_agrees_with_trace_form(name):
    op, bops, _ = BVP_FIXTURES[name]
    pt = FrequencyPoint((0.8,), 0.5 + 0.5j)
    x_max, K = 20.0, 4001
    x = np.linspace(0, x_max, K)
    f = np.exp(-x) * np.cos(x)
    u_trace = trace_corrector(op, bops, pt, f, x_max)
    u_layer = volevich_corrector(op, bops, pt, f, x_max)
    assert np.max(np.abs(u_trace - u_layer)) < 1e-4 * np.max(np.abs(u_trace))


# ---------------------------------------------------- one-sided Hilbert

def test_hilbert_indicator():
    h = 1e-4
    n = int(1 / h)
    res = one_sided_hilbert(np.ones(n), h, x=[1.0])
    assert res.values[0] == pytest.approx(math.log(2), abs=1e-3)


def test_hilbert_zero():
    res = one_sided_hilbert(np.zeros(50), 0.1)
    assert np.all(res.values == 0)
    assert math.isnan(res.norm_ratio)


def test_hilbert_norm_ceiling(rng):
    ratios = [one_sided_hilbert(rng.normal(size=400), 0.05).norm_ratio for _ in range(100)]
    assert max(ratios) <= np.pi + 0.1

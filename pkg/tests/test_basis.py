import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.interpolate import BSpline

from lagflm.basis import (
    basis_at_nodes,
    eval_basis,
    gauss_legendre,
    make_bspline_basis,
    quadrature_integrate,
)
from lagflm.errors import InvalidIntervalError, NumericError, OutOfDomainError


def scipy_design(b, s):
    k = b.degree - 1
    return BSpline.design_matrix(np.asarray(s), b.knot_vector, k, extrapolate=False).toarray()


def test_default_basis_has_fourteen_functions():
    b = make_bspline_basis(4, 10, (0.1, 0.4))
    assert b.size == 14
    assert len(b.knot_vector) == 10 + 2 * 4
    assert np.all(b.knot_vector[:4] == 0.1) and np.all(b.knot_vector[-4:] == 0.4)
    np.testing.assert_allclose(np.diff(b.knot_vector[3:-3]), 0.3 / 11, rtol=1e-12)


def test_minimal_space_has_two_functions():
    b = make_bspline_basis(1, 1, (0.0, 1.0))
    assert b.size == 2
    np.testing.assert_array_equal(eval_basis(b, 0.25), [1.0, 0.0])
    np.testing.assert_array_equal(eval_basis(b, 0.75), [0.0, 1.0])


def test_reversed_interval_rejected():
    with pytest.raises(InvalidIntervalError):
        make_bspline_basis(4, 10, (0.4, 0.1))
    with pytest.raises(InvalidIntervalError):
        make_bspline_basis(4, 10, (0.3, 0.3))


def test_left_endpoint_selects_first_function():
    b = make_bspline_basis(4, 10, (0.1, 0.4))
    v = eval_basis(b, 0.1)
    assert v[0] == 1.0 and np.all(v[1:] == 0.0)
    w = eval_basis(b, 0.4)
    assert w[-1] == pytest.approx(1.0, abs=1e-15) and np.all(np.abs(w[:-1]) < 1e-15)


def test_outside_interval_raises():
    b = make_bspline_basis(4, 10, (0.1, 0.4))
    with pytest.raises(OutOfDomainError):
        eval_basis(b, 0.05)
    with pytest.raises(OutOfDomainError):
        eval_basis(b, [0.2, 0.41])


@pytest.mark.parametrize("degree,knots", [(1, 3), (2, 5), (3, 4), (4, 10), (5, 7)])
def test_matches_independent_bspline_implementation(degree, knots, rng):
    b = make_bspline_basis(degree, knots, (0.1, 0.4))
    s = np.sort(rng.uniform(0.1, 0.4, 200))
    np.testing.assert_allclose(eval_basis(b, s), scipy_design(b, s), atol=1e-13)


def test_partition_of_unity_and_local_support(rng):
    b = make_bspline_basis(4, 10, (0.1, 0.4))
    s = rng.uniform(0.1, 0.4, 1000)
    B = eval_basis(b, s)
    assert np.max(np.abs(B.sum(axis=1) - 1.0)) < 1e-12
    assert B.min() >= -1e-15
    t = b.knot_vector
    for k in range(b.size):
        outside = (s < t[k]) | (s > t[k + b.degree])
        assert np.all(np.abs(B[outside, k]) < 1e-14)


@given(
    degree=st.integers(1, 6),
    knots=st.integers(1, 15),
    lo=st.floats(0.0, 0.5),
    width=st.floats(0.05, 0.5),
    u=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=20),
)
def test_partition_of_unity_property(degree, knots, lo, width, u):
    b = make_bspline_basis(degree, knots, (lo, lo + width))
    s = lo + width * np.asarray(u)
    s = np.clip(s, lo, lo + width)
    B = eval_basis(b, s)
    assert B.shape == (len(u), knots + degree)
    assert np.all(B >= -1e-14)
    np.testing.assert_allclose(B.sum(axis=1), 1.0, atol=1e-12)


def test_scalar_and_vector_shapes():
    b = make_bspline_basis(4, 10, (0.1, 0.4))
    assert eval_basis(b, 0.2).shape == (14,)
    assert eval_basis(b, [0.2]).shape == (1, 14)
    np.testing.assert_array_equal(b(0.2), eval_basis(b, 0.2))


# quadrature


def test_constant_integrand():
    assert quadrature_integrate(lambda s: np.ones_like(s), (0.1, 0.4), 30) == pytest.approx(0.3, abs=1e-15)


def test_sine_integral_reference_value():
    v = quadrature_integrate(lambda s: np.sin(2 * np.pi * s), (0.1, 0.4), 30)
    exact = (np.cos(2 * np.pi * 0.1) - np.cos(2 * np.pi * 0.4)) / (2 * np.pi)
    assert abs(v - 0.2575181) < 1e-7
    assert abs(v - exact) < 1e-10


def test_two_nodes_exact_on_cubic():
    assert quadrature_integrate(lambda s: s**3, (0.0, 1.0), 2) == pytest.approx(0.25, abs=1e-15)


def test_nonfinite_integrand_reports_node():
    def f(s):
        out = np.ones_like(s)
        out[3] = np.nan
        return out

    with pytest.raises(NumericError) as info:
        quadrature_integrate(f, (0.1, 0.4), 10)
    assert info.value.location == pytest.approx(gauss_legendre((0.1, 0.4), 10).nodes[3])


def test_convergence_on_oscillating_integrand():
    exact = (np.cos(4 * np.pi * 0.1) - np.cos(4 * np.pi * 0.4)) / (4 * np.pi)
    errs = [
        abs(quadrature_integrate(lambda s: np.sin(4 * np.pi * s), (0.1, 0.4), n) - exact)
        for n in (4, 8, 16, 32, 64)
    ]
    assert all(a > b or b < 1e-14 for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-12


@given(n=st.integers(1, 25), lo=st.floats(-1, 1), width=st.floats(0.1, 2))
def test_weights_sum_to_length(n, lo, width):
    r = gauss_legendre((lo, lo + width), n)
    assert r.weights.min() > 0
    assert r.weights.sum() == pytest.approx(width, rel=1e-12)
    assert np.all((r.nodes > lo) & (r.nodes < lo + width))


@given(n=st.integers(1, 12), data=st.data())
def test_polynomial_exactness(n, data):
    deg = data.draw(st.integers(0, 2 * n - 1))
    coef = np.array(data.draw(st.lists(st.floats(-2, 2), min_size=deg + 1, max_size=deg + 1)))
    poly = np.polynomial.Polynomial(coef)
    exact = poly.integ()(0.4) - poly.integ()(0.1)
    got = quadrature_integrate(poly, (0.1, 0.4), max(n, 2))
    assert got == pytest.approx(exact, abs=1e-12)


def test_basis_integrals_against_adaptive_quadrature():
    b = make_bspline_basis(4, 10, (0.1, 0.4))
    rule, B = basis_at_nodes(b, 30)
    ours = rule.weights @ B
    ref = [
        integrate.quad(lambda s, k=k: eval_basis(b, s)[k], 0.1, 0.4, points=b.knot_vector[4:-4])[0]
        for k in range(b.size)
    ]
    # B-spline integral identity: (t[k+d] - t[k]) / d
    t = b.knot_vector
    exact = (t[4:] - t[:-4]) / 4
    np.testing.assert_allclose(ref, exact, atol=1e-12)
    # one Gauss rule over the whole window does not see the knots, so it is
    # only approximately exact on the piecewise cubics
    assert np.max(np.abs(ours - exact)) < 1e-5

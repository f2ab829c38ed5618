import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial.hermite import hermgauss
from scipy import special

from ratchet.spectral import (N_MAX_HARD, SolverConfig, TorusField, gamma_nm, gamma_table,
                              hermite_e, hermite_e_all, hermite_e_deriv_all, laguerre,
                              torus_convolve)


def overlap_quadrature(n, m, r, L, nodes=120):
    """int e_m(v) e_n(v - 2 pi i r/L) dv by Gauss-Hermite (weight e^{-v^2})."""
    v, w = hermgauss(nodes)
    shift = v - 2j * math.pi * r / L
    f = hermite_e_all(max(n, m), v)[m] * hermite_e_all(max(n, m), shift)[n]
    return np.sum(w * np.exp(v * v) * f)


def test_e0_at_zero():
    assert hermite_e(0, 0.0) == pytest.approx(math.pi ** -0.25, rel=1e-15)


def test_e1_odd():
    assert hermite_e(1, 0.0) == 0.0
    assert hermite_e(1, -0.7) == pytest.approx(-hermite_e(1, 0.7), abs=1e-16)


@pytest.mark.parametrize("n", [0, 1, 2, 5, 9])
@pytest.mark.parametrize("v", [-2.1, 0.3, 1.3])
def test_hermite_matches_scipy_definition(n, v):
    ref = special.eval_hermite(n, v) * math.exp(-v * v / 2) / math.sqrt(
        2.0 ** n * math.factorial(n) * math.sqrt(math.pi))
    assert hermite_e(n, v) == pytest.approx(ref, rel=1e-12, abs=1e-15)


def test_hermite_orthonormality_under_gauss_hermite():
    N = 48
    v, w = hermgauss(2 * N + 1)
    E = hermite_e_all(N, v) * np.sqrt(w * np.exp(v * v))
    assert np.max(np.abs(E @ E.T - np.eye(N + 1))) <= 1e-10


def test_hermite_large_order_is_finite():
    vals = hermite_e_all(400, np.linspace(-30, 30, 61))
    assert np.all(np.isfinite(vals))
    with pytest.raises(ValueError):
        hermite_e_all(N_MAX_HARD + 1, 0.0)


def test_ladder_identity():
    N = 30
    v = np.linspace(-6, 6, 301)
    e = hermite_e_all(N + 1, v)
    d = hermite_e_deriv_all(N, v)
    for n in range(N + 1):
        resid = d[n] - v * e[n] + math.sqrt(2) * math.sqrt(n + 1) * e[n + 1]
        assert np.max(np.abs(resid)) <= 1e-9


def test_derivative_against_finite_difference():
    v = np.linspace(-4, 4, 81)
    h = 1e-6
    fd = (hermite_e_all(8, v + h) - hermite_e_all(8, v - h)) / (2 * h)
    assert np.max(np.abs(fd - hermite_e_deriv_all(8, v))) < 1e-8


@pytest.mark.parametrize("m,s,x,expected", [(0, 3, -7.2, 1.0), (1, 0, 2.0, -1.0), (2, 1, -1.0, 6.5)])
def test_laguerre_examples(m, s, x, expected):
    assert laguerre(m, s, x) == pytest.approx(expected, abs=1e-14)


@given(st.integers(0, 12), st.integers(0, 6), st.floats(-20, 20))
def test_laguerre_matches_scipy(m, s, x):
    ref = special.eval_genlaguerre(m, s, x)
    assert laguerre(m, s, x) == pytest.approx(ref, rel=1e-10, abs=1e-10)


def test_laguerre_rejects_negative():
    with pytest.raises(ValueError):
        laguerre(-1, 0, 0.0)


@pytest.mark.parametrize("k", range(6))
def test_gamma_zero_shift_is_delta(k):
    for j in range(6):
        assert gamma_nm(k, j, 0, 3.0) == (1.0 if j == k else 0.0)


@pytest.mark.parametrize("r,L", [(1, 10.0), (-2, 7.0), (3, 12.0)])
def test_gamma_01_closed_form(r, L):
    a = math.pi * r / L
    expected = math.sqrt(2) * math.exp(a * a) * 1j * a
    assert gamma_nm(0, 1, r, L) == pytest.approx(expected, rel=1e-14)
    assert overlap_quadrature(0, 1, r, L) == pytest.approx(expected, abs=1e-10)


@pytest.mark.parametrize("r,L", [(1, 10.0), (2, 9.0), (-1, 4.0)])
def test_gamma_table_against_quadrature(r, L):
    G = gamma_table(6, 6, r, L)
    for n in range(7):
        for m in range(7):
            assert abs(G[n, m] - overlap_quadrature(n, m, r, L)) <= 1e-10
            assert abs(G[n, m] - np.conj(G[m, n])) <= 1e-12


def test_gamma_mpmath_oracle():
    # independent closed-form-free oracle at a large index
    n, m, r, L = 7, 3, 1, 6.0
    c = 2j * mpmath.pi * r / L

    def e(k, v):
        return mpmath.hermite(k, v) * mpmath.exp(-v * v / 2) / mpmath.sqrt(
            2 ** k * mpmath.factorial(k) * mpmath.sqrt(mpmath.pi))

    ref = mpmath.quad(lambda v: e(m, v) * e(n, v - c), [-mpmath.inf, mpmath.inf])
    assert gamma_nm(n, m, r, L) == pytest.approx(complex(ref), rel=1e-11)


# --- TorusField ------------------------------------------------------------

def random_field(rng, P, Q, T=1.0, L=1.0, real=True):
    c = rng.normal(size=(2 * P + 1, 2 * Q + 1)) + 1j * rng.normal(size=(2 * P + 1, 2 * Q + 1))
    if real:
        c = 0.5 * (c + np.conj(c[::-1, ::-1]))
    return TorusField(c, T, L)


def test_convolve_identity():
    rng = np.random.default_rng(0)
    b = random_field(rng, 2, 3)
    one = TorusField.constant(1.0)
    assert np.allclose(torus_convolve(one, b).coeffs, b.coeffs, atol=0)


def test_convolve_cosine_square():
    a = TorusField.from_modes({(1, 1): 0.5, (-1, -1): 0.5})
    prod = torus_convolve(a, a, 2, 2)
    nz = {(p, q): c for p, q, c in prod.modes(1e-15)}
    assert set(nz) == {(0, 0), (2, 2), (-2, -2)}
    assert nz[(0, 0)] == pytest.approx(0.5)
    assert nz[(2, 2)] == pytest.approx(0.25)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_convolve_matches_grid_product(seed):
    rng = np.random.default_rng(seed)
    a, b = random_field(rng, 2, 3, 1.5, 0.8), random_field(rng, 3, 2, 1.5, 0.8)
    prod = torus_convolve(a, b, 5, 5)
    t = rng.uniform(0, 1.5, 40)
    x = rng.uniform(0, 0.8, 40)
    assert np.max(np.abs(prod(t, x) - a(t, x) * b(t, x))) <= 1e-12


def test_convolve_period_mismatch():
    with pytest.raises(ValueError):
        torus_convolve(TorusField.constant(1.0, T=1.0), TorusField.constant(1.0, T=2.0))


def test_on_grid_matches_pointwise():
    rng = np.random.default_rng(4)
    f = random_field(rng, 2, 3, 2.0, 3.0)
    g = f.on_grid(8, 10)
    tt, xx = np.meshgrid(np.arange(8) * 2.0 / 8, np.arange(10) * 3.0 / 10, indexing="ij")
    assert np.max(np.abs(g - f(tt, xx).real)) < 1e-12


def test_hermitian_defect_and_resize():
    rng = np.random.default_rng(5)
    f = random_field(rng, 2, 2)
    assert f.is_real()
    g = f.resized(4, 1).resized(2, 2)
    assert g.coeff(1, 2) == 0 and g.coeff(1, 1) == f.coeff(1, 1)
    h = random_field(rng, 1, 1, real=False)
    assert not h.is_real()


def test_invalid_field():
    with pytest.raises(ValueError):
        TorusField(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        TorusField(np.zeros((1, 1)), T=-1.0)


def test_solver_config_validation():
    assert SolverConfig().replace(q_max=4).q_max == 4
    with pytest.raises(ValueError):
        SolverConfig(n_max=N_MAX_HARD + 1)
    with pytest.raises(ValueError):
        SolverConfig(p_max=-1)

import csv
import io
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from ratchet.drift import SpaceTimeDrift, standing_wave, static_wave, traveling_wave
from ratchet.kinetic.gamma import (J_integral, gamma_csv, gamma_params, gamma_pq, gamma_table,
                                   kramers_second_order, steepest_descent_J)
from ratchet.kinetic.kramers import stationary_velocity_kramers
from ratchet.spectral import SolverConfig

mp.mp.dps = 30


def J_oracle(alpha, beta):
    """u-form integral evaluated with tanh-sinh quadrature (handles the u = 1 endpoint)."""
    f = lambda u: mp.exp(alpha * u) * (1 - u) ** (alpha - 1 + 1j * beta) * u
    return complex(mp.quad(f, [0, 0.5, 0.9, 1]))


@pytest.mark.parametrize("alpha,beta", [(0.5, 1.0), (0.9, -2.0), (2 * math.pi ** 2, 2 * math.pi),
                                        (20.0, -3.0), (3.0, 0.0)])
def test_J_against_u_form(alpha, beta):
    assert abs(J_integral(alpha, beta) - J_oracle(alpha, beta)) <= 1e-10


def test_J_validation():
    with pytest.raises(ValueError):
        J_integral(0.0, 1.0)
    with pytest.raises(ValueError):
        steepest_descent_J(-1.0, 1.0)


@given(st.floats(0.05, 400.0), st.floats(0.1, 30.0))
def test_J_conjugation(alpha, beta):
    assert J_integral(alpha, 0.0).imag == 0.0
    Jp, Jm = J_integral(alpha, beta), J_integral(alpha, -beta)
    assert Jm == pytest.approx(Jp.conjugate(), abs=1e-13)


# --- Gamma ------------------------------------------------------------------------

@pytest.mark.parametrize("p,q,g,T,L", [(1, 1, 1.0, 1.0, 1.0), (2, -1, 0.8, 1.3, 0.9), (-3, 2, 1.7, 0.5, 2.0)])
def test_gamma_symmetries(p, q, g, T, L):
    a = gamma_pq(p, q, g, T, L).value
    b = gamma_pq(-p, -q, g, T, L).value
    assert b == pytest.approx(a.conjugate(), abs=1e-13)
    # symmetric part vanishes at p = 0
    assert abs(gamma_pq(0, q, g, T, L).symmetric_part) <= 1e-15


def test_gamma_u_form_value():
    """Symmetric part of Gamma_{1,1} at gamma = T = L = 1 from the u-integral with a sine."""
    a = 2 * mp.pi ** 2
    f = lambda u: mp.exp(a * u) * (1 - u) ** (a - 1) * mp.sin(2 * mp.pi * mp.log(1 - u)) * u
    expected = float(mp.quad(f, [0, 0.5, 0.9, 1]))
    assert gamma_pq(1, 1).symmetric_part == pytest.approx(expected, abs=1e-9)
    assert 0.5 * (gamma_pq(1, 1).value + gamma_pq(-1, -1).value).imag == pytest.approx(0, abs=1e-15)


def test_gamma_k_form_value():
    """Direct k-integral with mpmath at a mode where the endpoint is singular (alpha < 1)."""
    p, q, g, T, L = 1, 1, 2.0, 1.0, 2.5
    alpha, beta = gamma_params(p, q, g, T, L)
    assert alpha < 1
    ks = 2 * mp.pi * q / (g * L)
    f = lambda k: mp.exp(mp.pi * q * k / (g ** 2 * L)) * (1 - k / ks) ** (alpha - 1 + 1j * beta) * k
    expected = -1j / (4 * mp.pi ** 2 * q) * mp.quad(f, [0, ks / 2, ks])
    assert abs(gamma_pq(p, q, g, T, L).value - complex(expected)) <= 1e-10


def test_gamma_requires_nonzero_q():
    with pytest.raises(ValueError):
        gamma_pq(1, 0)
    with pytest.raises(ValueError):
        gamma_pq(1, 1, gamma=0.0)


# --- steepest descent -------------------------------------------------------------

def ratio(alpha, beta=2 * math.pi):
    J, asym = steepest_descent_J(alpha, beta)
    return J.imag / asym


def test_steepest_descent_returns_leading_term():
    J, asym = steepest_descent_J(100.0, 3.0)
    assert asym == pytest.approx(-3.0 * math.sqrt(math.pi / 2) * 100.0 ** -1.5, rel=1e-15)
    assert J == J_integral(100.0, 3.0)


def test_steepest_descent_bands():
    r50, r150, r450 = ratio(50.0), ratio(150.0), ratio(450.0)
    assert r50 < r150 < r450 < 1.0
    assert 0.85 <= r150 <= 1.15
    assert 0.90 <= r450 <= 1.10
    assert abs(ratio(2 * math.pi ** 2 * 16) - 1) <= 0.15


def test_steepest_descent_correction_shrinks():
    dev = [abs(1 - ratio(a)) for a in (50.0, 150.0, 450.0, 1600.0)]
    assert all(a > b for a, b in zip(dev, dev[1:]))
    assert dev[-1] <= 0.01


# --- second order -----------------------------------------------------------------

def test_second_order_vanishes_for_static_and_standing():
    assert kramers_second_order(static_wave(1.0)) == 0.0
    assert abs(kramers_second_order(standing_wave(1.0))) <= 1e-15


def test_second_order_warns_on_time_only_modes():
    G = SpaceTimeDrift.from_modes({(1, 0): 0.3, (1, 1): 0.5})
    with pytest.warns(UserWarning):
        v = kramers_second_order(G)
    assert v == pytest.approx(kramers_second_order(SpaceTimeDrift.from_modes({(1, 1): 0.5})), rel=1e-14)


def test_second_order_traveling_wave_value():
    assert kramers_second_order(traveling_wave(1.0)) == pytest.approx(-0.094252, abs=2e-6)


def test_second_order_matches_solver():
    eps = 0.05
    I = stationary_velocity_kramers(traveling_wave(eps), 1.0).value
    assert I / eps ** 2 == pytest.approx(kramers_second_order(traveling_wave(1.0)), rel=0.01)
    eps = 0.1
    I = stationary_velocity_kramers(traveling_wave(eps), 1.0).value
    assert I / eps ** 2 == pytest.approx(kramers_second_order(traveling_wave(1.0)), rel=0.10)


@pytest.mark.parametrize("g,T,L", [(0.8, 1.3, 0.9), (1.5, 0.7, 1.2)])
def test_second_order_matches_solver_even_part(g, T, L):
    G = SpaceTimeDrift.from_modes({(1, 1): 0.4 + 0.1j, (-1, 2): 0.2j, (2, 1): 0.3}, T, L)
    eps = 5e-3
    cfg = SolverConfig(n_max=48, p_max=4, q_max=6)
    even = 0.5 * (stationary_velocity_kramers(G * eps, g, cfg).value
                  + stationary_velocity_kramers(G * -eps, g, cfg).value)
    assert even / eps ** 2 == pytest.approx(kramers_second_order(G, g), rel=1e-4)


def test_gamma_csv():
    G = SpaceTimeDrift.from_modes({(1, 1): 0.5, (2, -1): 0.2})
    rows = list(csv.reader(io.StringIO(gamma_csv(G))))
    assert rows[0] == ["p", "q", "gamma_re", "gamma_im", "symmetric_part"]
    table = gamma_table(G)
    assert len(rows) - 1 == len(table) == 4
    for row, gv in zip(rows[1:], table):
        assert (int(row[0]), int(row[1])) == (gv.p, gv.q)
        assert complex(float(row[2]), float(row[3])) == gv.value

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ratchet.acceptance import random_space_pair
from ratchet.drift import DriftError, SpaceDrift, SpaceTimeDrift, TwoStateRates, cos2x_cosx, traveling_wave
from ratchet.kinetic.gamma import gamma_pq, kramers_second_order
from ratchet.kinetic.kramers import (Rescaling, appendix_rescale, kramers_series,
                                     kramers_two_state_series, solve_stationary_kramers,
                                     solve_stationary_kramers_two_state, stationary_velocity_kramers,
                                     stationary_velocity_kramers_two_state, velocity_kramers)
from ratchet.results import SolverError
from ratchet.spectral import SolverConfig

RATES = TwoStateRates(1.0, 2.0)


def random_force(seed, amp=0.2, T=1.0, L=1.0):
    rng = np.random.default_rng(seed)
    return SpaceTimeDrift.from_modes({(p, q): complex(*rng.normal(0, amp / 2, 2))
                                      for p in (-1, 0, 1) for q in (1, 2)}, T, L)


@pytest.mark.parametrize("gamma,L", [(1.0, 1.0), (0.6, 2.0)])
def test_zero_force_maxwellian(gamma, L):
    f = solve_stationary_kramers(SpaceTimeDrift.zero(1.0, L), gamma, SolverConfig(n_max=8, p_max=1, q_max=2))
    a = f.coeffs.copy()
    assert a[0, 1, 2] == pytest.approx((gamma / math.pi) ** 0.25 / L, rel=1e-14)
    a[0, 1, 2] = 0
    assert np.max(np.abs(a)) <= 1e-15
    v = np.linspace(-2, 2, 5)
    expected = math.sqrt(gamma / math.pi) * np.exp(-gamma * v ** 2) / L
    assert np.allclose(f.density(0.3, 0.2, v), expected, atol=1e-14)
    assert velocity_kramers(SpaceTimeDrift.zero(1.0, L), gamma, f).value == 0.0


def test_first_order_marginal_matches_gamma():
    g, T, L = 0.8, 1.3, 0.9
    G = SpaceTimeDrift.from_modes({(1, 1): 0.5 - 0.2j, (-1, 1): 0.3j, (2, 2): 0.25}, T, L)
    eps = 1e-3
    cfg = SolverConfig(n_max=48, p_max=4, q_max=4)
    rho_p = solve_stationary_kramers(G * eps, g, cfg).moments[0]
    rho_m = solve_stationary_kramers(G * -eps, g, cfg).moments[0]
    rho1 = 0.5 * (rho_p - rho_m) / eps
    for p, q, c in G.modes():
        expected = 2 * math.pi * c * gamma_pq(p, q, g, T, L).value
        assert rho1[p + 4, q + 4] == pytest.approx(expected, rel=1e-4)


def test_static_force_zero_velocity():
    F = SpaceTimeDrift.from_modes({(0, 1): 0.7, (0, 2): 0.3j}, 1.0, 1.4)
    assert abs(stationary_velocity_kramers(F, 1.3).value) <= 1e-9


@settings(max_examples=8)
@given(st.integers(0, 10_000), st.floats(0.9, 2.0))
def test_velocity_contractions_agree(seed, gamma):
    F = random_force(seed, L=2.0)
    f = solve_stationary_kramers(F, gamma, SolverConfig(n_max=48, p_max=6, q_max=8))
    est = velocity_kramers(F, gamma, f)
    assert abs(est.value - est.diagnostics["first_moment"]) <= 1e-8
    assert f.mass(0) == pytest.approx(1.0, abs=1e-8)
    assert f.mass(1) == pytest.approx(0.0, abs=1e-8)
    assert f.tail < 1e-6


def test_traveling_wave_second_order():
    eps = 0.1
    I = stationary_velocity_kramers(traveling_wave(eps), 1.0).value
    assert I == pytest.approx(eps ** 2 * kramers_second_order(traveling_wave(1.0)), rel=0.10)


def test_series_matches_gamma_kernel():
    G = random_force(5)
    I1, I2 = kramers_series(G, 1.2, SolverConfig(n_max=48, p_max=4, q_max=6), order=2)
    assert abs(I1) <= 1e-14
    assert I2 == pytest.approx(kramers_second_order(G, 1.2), rel=1e-7)


def test_tail_check_and_truncation_errors():
    with pytest.raises(SolverError):
        solve_stationary_kramers(traveling_wave(1.0), 1.0, SolverConfig(n_max=12))
    f = solve_stationary_kramers(traveling_wave(1.0), 1.0, SolverConfig(n_max=80))
    assert f.tail < 1e-6
    with pytest.raises(DriftError):
        solve_stationary_kramers(traveling_wave(0.1), 1.0, SolverConfig(p_max=0))
    with pytest.raises(ValueError):
        solve_stationary_kramers(traveling_wave(0.1), 0.0)


# --- rescaling --------------------------------------------------------------------

@given(st.floats(0.2, 5.0), st.floats(0.1, 3.0), st.floats(0.5, 20.0))
def test_rescaling_round_trip(gamma, nu, L):
    sc = Rescaling(gamma)
    r = TwoStateRates(nu, 2 * nu, 1.0, gamma)
    back = sc.original_rates(sc.rates(r))
    assert (back.nu1, back.nu2, back.gamma) == pytest.approx((r.nu1, r.nu2, r.gamma), rel=1e-14)
    F = SpaceDrift.from_modes({1: 0.3 + 0.1j, 2: -0.2}, L)
    G = sc.original_force(sc.force(F))
    assert G.L == pytest.approx(L, rel=1e-14)
    assert np.allclose(G.coeffs, F.coeffs, rtol=1e-14)
    assert sc.length(L) == pytest.approx(L * gamma ** 1.5)
    assert sc.rates(r).gamma == 1.0


@pytest.mark.parametrize("gamma", [0.7, 1.8])
def test_rescaled_solve_matches_direct(gamma):
    F1, F2 = cos2x_cosx(0.4, 3.0)
    rates = TwoStateRates(1.0, 2.0, 1.0, gamma)
    cfg = SolverConfig(n_max=48, q_max=12)
    a = stationary_velocity_kramers_two_state(F1, F2, rates, cfg, rescale=True).value
    b = stationary_velocity_kramers_two_state(F1, F2, rates, cfg, rescale=False).value
    assert a == pytest.approx(b, rel=1e-8)


# --- two states -------------------------------------------------------------------

def test_two_state_zero_force():
    z = SpaceDrift.zero(2 * math.pi)
    psi = solve_stationary_kramers_two_state(z, z, RATES)
    a = psi.coeffs.copy()
    Q = psi.q_max
    scale = 1 / (2 * math.pi * 3 * math.pi ** 0.25)
    assert a[0, 0, Q] == pytest.approx(2 * scale, rel=1e-14)
    assert a[1, 0, Q] == pytest.approx(1 * scale, rel=1e-14)
    a[:, 0, Q] = 0
    assert np.max(np.abs(a)) <= 1e-15
    assert psi.mass == pytest.approx(1.0, abs=1e-14)
    assert stationary_velocity_kramers_two_state(z, z, RATES).value == 0.0


def test_two_state_parity():
    F1, F2 = random_space_pair(np.random.default_rng(1), 2, 10.0)
    I1, I2, I3, I4 = kramers_two_state_series(F1, F2, RATES, order=4)
    assert abs(I1) <= 1e-14 and abs(I2) <= 1e-12
    eps = 0.02
    a = stationary_velocity_kramers_two_state(F1 * eps, F2 * eps, RATES).value
    b = stationary_velocity_kramers_two_state(F1 * -eps, F2 * -eps, RATES).value
    # even part starts at order four, odd part at order three
    assert abs(a + b) <= 3 * abs(I4) * eps ** 4
    assert 0.5 * (a - b) / eps ** 3 == pytest.approx(I3, rel=0.05)


def test_two_state_density_checks():
    F1, F2 = random_space_pair(np.random.default_rng(3), 2, 10.0)
    psi = solve_stationary_kramers_two_state(F1 * 0.5, F2 * 0.5, RATES)
    assert psi.mass == pytest.approx(1.0, abs=1e-8)
    assert psi.tail < 1e-6
    assert psi.min_value > 0
    est = stationary_velocity_kramers_two_state(F1 * 0.5, F2 * 0.5, RATES)
    assert abs(est.value - est.diagnostics["first_moment"]) <= 1e-8


def test_two_state_period_mismatch():
    with pytest.raises(ValueError):
        solve_stationary_kramers_two_state(SpaceDrift.cosine(1, 0.1, 1.0), SpaceDrift.cosine(1, 0.1, 2.0),
                                           RATES)

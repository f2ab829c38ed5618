"""Acceptance suite: ten end-to-end checks at fixed tolerances.

Each ``criterion_k`` returns a :class:`CriterionResult`; :func:`run_all`
prints one PASS/FAIL line per criterion. The suite is shared by
``ratchet selftest`` and ``tests/test_acceptance.py``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .drift import (SpaceDrift, SpaceTimeDrift, TwoStateRates, cos2x_cosx, gauge_eliminate,
                    static_wave, traveling_wave)


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    runtime: float

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:2d} [{verdict}] {self.name}: {self.detail} ({self.runtime:.1f} s)"


def random_space_pair(rng: np.random.Generator, order: int, L: float) -> tuple[SpaceDrift, SpaceDrift]:
    """Two real zero-mean Fourier polynomials with modes 1..order."""
    def one():
        modes = {q: complex(rng.normal(), rng.normal()) / 2 for q in range(1, order + 1)}
        return SpaceDrift.from_modes(modes, L)
    return one(), one()


GAUGE_DRIFTS = (
    ({(1, 0): 0.15, (1, 1): 0.3}, 1.0, 1.0),
    ({(1, 0): 0.1j, (1, -1): 0.25, (2, 1): 0.1}, 1.0, 1.0),
    ({(2, 0): 0.2, (1, 1): 0.4}, 2.0, 1.0),
    ({(1, 0): 0.3, (0, 1): 0.3, (1, 2): 0.2}, 1.0, 1.5),
    ({(1, 0): 0.2, (3, 0): 0.05, (1, 1): 0.3, (2, -1): 0.1}, 0.7, 1.0),
)


def _timed(fn):
    def run() -> CriterionResult:
        t0 = time.perf_counter()
        number, name, passed, detail = fn()
        return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - t0)
    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


@_timed
def criterion_1():
    """Overdamped second-order coefficient for the unit traveling wave."""
    from .overdamped import stationary_velocity, second_variation
    t0 = time.perf_counter()
    eps = 0.02
    B = traveling_wave(1.0)
    ratio = stationary_velocity(B * eps).value / eps ** 2
    elapsed = time.perf_counter() - t0
    target = 1.0 / (2.0 * (1.0 + math.pi ** 2))
    rel = abs(ratio - target) / target
    sv = second_variation(B)
    ok = rel <= 0.05 and elapsed < 10.0
    return 1, "overdamped second variation", ok, (
        f"I/eps^2 = {ratio:.6f}, target {target:.6f}, rel err {rel:.3g}; "
        f"second_variation = {sv:.6f}; solve {elapsed:.2f} s")


@_timed
def criterion_2():
    """Time-independent drift gives no transport."""
    from .overdamped import stationary_velocity
    from .montecarlo import SdeConfig, simulate_overdamped
    b = static_wave(1.0)
    spec = stationary_velocity(b).value
    mc = simulate_overdamped(b, SdeConfig(dt=0.01, horizon=20.0, burn_in=2.0, n_paths=10_000, seed=20))
    ok = abs(spec) <= 1e-10 and abs(mc.value) <= 3 * mc.std_error
    return 2, "static-drift null", ok, (
        f"spectral |I| = {abs(spec):.2e}; MC {mc.value:.3e} +- {mc.std_error:.2e}")


@_timed
def criterion_3():
    """Velocity is unchanged by removing the instantaneous space average."""
    from .overdamped import stationary_velocity
    worst = 0.0
    for modes, T, L in GAUGE_DRIFTS:
        b = SpaceTimeDrift.from_modes(modes, T, L, p_max=8, q_max=8)
        worst = max(worst, abs(stationary_velocity(b).value - stationary_velocity(gauge_eliminate(b)).value))
    return 3, "gauge invariance", worst <= 1e-8, f"max |I(b) - I(b~)| = {worst:.2e} over {len(GAUGE_DRIFTS)} drifts"


@_timed
def criterion_4():
    """Two-state: first two orders vanish, third order and cubic scaling."""
    from .twostate import perturbation_order, third_variation_closed_form, stationary_velocity_two_state
    from .runner import power_law_fit
    rng = np.random.default_rng(4)
    rates = TwoStateRates(1.0, 2.0)
    low = 0.0
    for _ in range(20):
        order = int(rng.integers(1, 4))
        b1, b2 = random_space_pair(rng, order, 2 * math.pi)
        r = TwoStateRates(*rng.uniform(0.3, 3.0, 2))
        low = max(low, abs(perturbation_order(b1, b2, r, 1)), abs(perturbation_order(b1, b2, r, 2)))
    b1, b2 = cos2x_cosx(1.0)
    I3 = perturbation_order(b1, b2, rates, 3)
    closed = third_variation_closed_form(1.0, 2.0)
    rel = abs(I3 - closed) / abs(closed)
    eps = [0.05, 0.1, 0.2]
    vals = [stationary_velocity_two_state(*cos2x_cosx(e), rates).value for e in eps]
    fit = power_law_fit(eps, vals)
    expo = fit["exponent"] if fit else float("nan")
    ok = low <= 1e-10 and rel <= 1e-6 and abs(expo - 3.0) <= 0.15
    return 4, "two-state cancellations", ok, (
        f"max |I1|,|I2| = {low:.1e}; I3 = {I3:.10f} vs closed form {closed:.10f} "
        f"(rel err {rel:.3g}, |I3| rel err {abs(abs(I3) - abs(closed)) / abs(closed):.1e}); "
        f"eps exponent {expo:.3f}")


@_timed
def criterion_5():
    """Monte Carlo against spectral for the traveling wave of amplitude 0.5."""
    from .overdamped import stationary_velocity
    from .montecarlo import SdeConfig, simulate_overdamped
    b = traveling_wave(0.5)
    spec = stationary_velocity(b).value
    t0 = time.perf_counter()
    mc = simulate_overdamped(b, SdeConfig(dt=0.02, horizon=200.0, burn_in=10.0, n_paths=100_000, seed=5))
    elapsed = time.perf_counter() - t0
    z = abs(mc.value - spec) / mc.std_error
    ok = z <= 3.0 and elapsed < 120.0
    return 5, "Monte Carlo vs spectral", ok, (
        f"MC {mc.value:.5f} +- {mc.std_error:.5f}, spectral {spec:.5f}, |z| = {z:.2f}; MC {elapsed:.1f} s")


@_timed
def criterion_6():
    """Kramers second-order identity and the symmetries of Gamma."""
    from .kinetic.gamma import gamma_pq, kramers_second_order
    from .kinetic.kramers import stationary_velocity_kramers
    G = traveling_wave(1.0)
    pert = kramers_second_order(G, 1.0)
    eps = np.array([0.01, 0.02, 0.04])
    ratios = np.array([stationary_velocity_kramers(G * e, 1.0).value / e ** 2 for e in eps])
    coef = np.polyfit(eps ** 2, ratios, 1)          # I/eps^2 = I_2 + I_4 eps^2
    full = coef[1]
    rel = abs(pert - full) / abs(full)
    sym0 = max(abs(gamma_pq(0, q).value + gamma_pq(0, -q).value) / 2 for q in (1, 2, 3))
    conj = max(abs(np.conj(gamma_pq(p, q, 0.8, 1.3, 0.9).value) - gamma_pq(-p, -q, 0.8, 1.3, 0.9).value)
               for p in (-2, 1, 3) for q in (1, -2))
    ok = rel <= 0.10 and sym0 <= 1e-12 and conj <= 1e-12
    return 6, "Kramers perturbative identity", ok, (
        f"series {pert:.6f} vs fit {full:.6f} (rel {rel:.2e}); p=0 symmetric part {sym0:.1e}; "
        f"conjugation defect {conj:.1e}")


@_timed
def criterion_7():
    """Steepest-descent asymptotics of Im J."""
    from .kinetic.gamma import J_integral

    def leading(alpha, beta):
        return -beta / ((2 * alpha) ** 1.5 * math.sqrt(math.pi))

    alpha0, beta = 2 * math.pi ** 2 * 16, 2 * math.pi
    r0 = J_integral(alpha0, beta).imag / leading(alpha0, beta)
    rs = [J_integral(a, beta).imag / leading(a, beta) for a in (50.0, 150.0, 450.0)]
    dev = [abs(r - 1) for r in rs]
    mono = dev[0] > dev[1] > dev[2]
    ok = abs(r0 - 1) <= 0.15 and mono
    return 7, "steepest descent", ok, (
        f"ratio at alpha={alpha0:.1f}: {r0:.4f}; ratios over alpha 50/150/450: "
        + "/".join(f"{r:.4f}" for r in rs) + f" (monotone improvement: {mono}); "
        f"ratio / (2 pi) = {r0 / (2 * math.pi):.4f}")


@_timed
def criterion_8():
    """Closed-form two-state Kramers sums against the Galerkin solver."""
    from .kinetic.appendix import appendix_I2, appendix_I3, R_even
    from .kinetic.kramers import stationary_velocity_kramers_two_state
    rng = np.random.default_rng(8)
    i2, rdef = 0.0, 0.0
    for _ in range(10):
        L = float(rng.uniform(4.0, 12.0))
        G1, G2 = random_space_pair(rng, int(rng.integers(1, 4)), L)
        n1, n2 = rng.uniform(0.3, 3.0, 2)
        i2 = max(i2, abs(appendix_I2(G1, G2, n1, n2)))
        for n in range(6):
            for p in range(1, 4):
                rdef = max(rdef, abs(R_even(G1, G2, n, p, n1, n2) - R_even(G1, G2, n, -p, n1, n2)))
    L, nu = 10.0, (1.0, 2.0)
    G1, G2 = random_space_pair(np.random.default_rng(1), 2, L)
    res = appendix_I3(G1, G2, *nu)
    rates = TwoStateRates(*nu)
    # the eps^4 term is large at this period, so fit the odd part of I(eps)
    odd = []
    for e in (0.02, 0.04):
        up = stationary_velocity_kramers_two_state(G1 * e, G2 * e, rates).value
        dn = stationary_velocity_kramers_two_state(G1 * -e, G2 * -e, rates).value
        odd.append((up - dn) / (2 * e ** 3))
    full = (4 * odd[0] - odd[1]) / 3               # removes the eps^2 correction of the odd part
    rel = abs(res.value - full) / abs(full)
    ok = i2 <= 1e-10 and rdef <= 1e-12 and abs(res.value) > 10 * res.tail and rel <= 0.10
    return 8, "closed-form I2/I3", ok, (
        f"max |I2| = {i2:.1e}, R parity defect {rdef:.1e}; I3 = {res.value:.6e} (tail {res.tail:.1e}) "
        f"vs solver {full:.6e}, rel {rel:.2e}")


@_timed
def criterion_9():
    """Positivity, normalization, mass conservation, and the Ornstein-Uhlenbeck variance."""
    from .overdamped import solve_stationary, evolve, EvolutionState
    from .twostate import solve_stationary_two_state
    from .kinetic.kramers import solve_stationary_kramers, solve_stationary_kramers_two_state
    from .montecarlo import SdeConfig, simulate_langevin
    mins, masses = [], []
    for b in (traveling_wave(1.0), traveling_wave(0.5, 2.0, 0.7),
              SpaceTimeDrift.from_modes(GAUGE_DRIFTS[1][0], 1.0, 1.0)):
        w = solve_stationary(b)
        mins.append(w.min_value)
        masses.append(max(abs(w.mass(p) - (1.0 if p == 0 else 0.0)) for p in range(-2, 3)))
    d = solve_stationary_two_state(*cos2x_cosx(2.0), TwoStateRates(1.0, 2.0))
    mins.append(d.min_value)
    masses.append(abs(d.mass - 1))
    k = solve_stationary_kramers(traveling_wave(0.5), 1.0)
    mins.append(k.min_value)
    masses.append(abs(k.mass() - 1))
    G1, G2 = random_space_pair(np.random.default_rng(1), 2, 10.0)
    k2 = solve_stationary_kramers_two_state(G1 * 0.1, G2 * 0.1, TwoStateRates(1.0, 2.0, gamma=0.8))
    mins.append(k2.min_value)
    masses.append(abs(k2.mass - 1))
    b = traveling_wave(1.0)
    horizon = 5.0
    ev = evolve(EvolutionState.uniform(1.0, 16), b, horizon)
    drift_rate = ev.mass_drift / horizon
    gamma = 0.7
    lv = simulate_langevin(SpaceTimeDrift.zero(), gamma,
                           SdeConfig(dt=0.002, horizon=100.0, burn_in=10.0, n_paths=1000, seed=9))
    var, se = lv.diagnostics["v2_mean"], lv.diagnostics["v2_std_error"]
    ok = (min(mins) > 0 and max(masses) <= 1e-8 and drift_rate <= 1e-10
          and abs(var - 1 / (2 * gamma)) <= 3 * se)
    return 9, "conservation and positivity", ok, (
        f"min density {min(mins):.3e}, max mass error {max(masses):.1e}; mass drift {drift_rate:.1e}/time; "
        f"<v^2> = {var:.4f} +- {se:.4f} vs {1 / (2 * gamma):.4f}")


@_timed
def criterion_10():
    """Bit-identical Monte Carlo output for any thread count."""
    from .montecarlo import SdeConfig, simulate_overdamped, simulate_two_state_switching
    cfg = SdeConfig(dt=0.01, horizon=5.0, burn_in=1.0, n_paths=1500, seed=10, block_size=256)
    b = traveling_wave(0.8)
    runs = [simulate_overdamped(b, cfg, threads=t) for t in (1, 2, 4)]
    same = all(r.value == runs[0].value and r.std_error == runs[0].std_error
               and np.array_equal(r.diagnostics["displacements"], runs[0].diagnostics["displacements"])
               for r in runs)
    sw = [simulate_two_state_switching(*cos2x_cosx(1.0), TwoStateRates(1.0, 2.0), cfg, threads=t)
          for t in (1, 3)]
    same = same and np.array_equal(sw[0].diagnostics["displacements"], sw[1].diagnostics["displacements"])
    return 10, "determinism", same, f"threads 1/2/4 (overdamped) and 1/3 (switching) identical: {same}"


CRITERIA: tuple[Callable[[], CriterionResult], ...] = (
    criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
    criterion_6, criterion_7, criterion_8, criterion_9, criterion_10,
)


def run_all(printer: Callable[[str], None] | None = print, only=None) -> list[CriterionResult]:
    results = []
    for k, crit in enumerate(CRITERIA, start=1):
        if only is not None and k not in only:
            continue
        res = crit()
        if printer is not None:
            printer(res.line())
        results.append(res)
    return results

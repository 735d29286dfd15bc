import math

import numpy as np
import pytest
from scipy.integrate import dblquad, simpson

from ensemble_ctl.bloch import E3, Constant, ControlSchedule, Dirac, EnsembleState, OmegaGrid, simulate
from ensemble_ctl.errors import ControlTooLarge, NoConvergence
from ensemble_ctl.linear import SampledControl
from ensemble_ctl.reach import (LIPSCHITZ_C, admissible_radius, cauchy_riemann_check,
                                complex_endpoint, cubic_transform, fixed_point_solve,
                                iteration_bound, phi_indicator, phi_table, phi_w, tangent_demo,
                                third_order_check)

from conftest import rk4_bloch


def random_control(rng, T, norm, n=257):
    s = rng.normal(size=n) + 1j * rng.normal(size=n)
    c = SampledControl(0.0, T, s)
    return c.scaled(norm / c.l2_norm())


# -- mild equation -----------------------------------------------------------

def test_zero_control_gives_zero():
    sol = fixed_point_solve(SampledControl.constant(0, 0, 1, 65), 1.0)
    assert sol.sup_norm() == 0.0


def test_matches_rk4_oracle():
    T = 1.0
    w = SampledControl.constant(0.1, 0, T, 1025)
    sol = fixed_point_solve(w, T, omega_window=40.0)
    assert sol.omega[0] == -40 and sol.omega[-1] == 40
    probes = sol.omega[::8]
    # w = -v + i u
    M = rk4_bloch(E3, probes, 0.0, -0.1, T, steps=2000)
    Z = M[:, 0] + 1j * M[:, 1]
    assert np.max(np.abs(sol.endpoint[::8] - Z)) < 1e-6


def test_a_priori_bounds(rng):
    T = 1.5
    for frac in (0.2, 0.6, 0.95):
        w = random_control(rng, T, frac * admissible_radius(T))
        sol = fixed_point_solve(w, T)
        norm = w.l2_norm()
        assert sol.sup_norm() <= math.sqrt(T) * norm + 1e-8
        assert np.all(sol.window_l2() <= 2 * math.sqrt(2 * math.pi) * norm + 1e-8)
        assert sol.sup_norm() <= 0.5


def test_contraction_rate(rng):
    T = 1.0
    w = random_control(rng, T, 0.4)
    sol = fixed_point_solve(w, T, n_omega=41)
    ratios = sol.contraction_ratios()
    bound = LIPSCHITZ_C * math.sqrt(T) * w.l2_norm() * 1.1
    assert np.all(ratios[:-1] <= bound)
    assert sol.iterations <= iteration_bound(w, T, 1e-12)


def test_lipschitz_in_control(rng):
    T = 1.0
    R = admissible_radius(T)
    for _ in range(20):
        a = random_control(rng, T, rng.uniform(0.1, 0.9) * R)
        b = random_control(rng, T, rng.uniform(0.1, 0.9) * R)
        za = fixed_point_solve(a, T, n_omega=21).Z
        zb = fixed_point_solve(b, T, n_omega=21).Z
        diff = SampledControl(0, T, a.samples - b.samples).l2_norm()
        assert np.max(np.abs(za - zb)) <= 2 * math.sqrt(T) * diff + 1e-10


def test_solver_errors():
    T = 1.0
    with pytest.raises(ControlTooLarge):
        fixed_point_solve(SampledControl.constant(0.6, 0, T), T)
    with pytest.raises(NoConvergence):
        fixed_point_solve(SampledControl.constant(0.4, 0, T, 65), T, max_iter=2)


# -- cubic correction --------------------------------------------------------

def test_indicator_values():
    one = lambda s: np.ones_like(s)
    assert phi_w(one, 1.5, 1.0) == pytest.approx(1 / 16, rel=1e-6)
    assert phi_w(one, 1.0, 1.0) == pytest.approx(0.25, rel=1e-6)
    assert phi_w(one, 2.5, 1.0) == 0
    assert phi_w(one, 0.0, 1.0) == 0 and phi_w(one, -0.3, 1.0) == 0 and phi_w(one, 2.0, 1.0) == 0


def test_indicator_closed_form():
    x = np.linspace(-0.5, 4.5, 51)
    T = 2.0
    vals = phi_table(lambda s: np.ones_like(s), T, x).phi
    np.testing.assert_allclose(vals, phi_indicator(x, T), atol=1e-12)


def _dblquad_phi(W, x, T):
    """Brute-force oracle with the support of every factor folded into the limits."""
    def part(k):
        def f(s, t):
            v = W(t) * W(s) * np.conj(W(t + s - x))
            return v.real if k == 0 else v.imag
        return dblquad(f, 0, T, lambda t: max(0.0, x - t), lambda t: max(max(0.0, x - t), min(t, x, x - t + T)),
                       epsabs=1e-12, epsrel=1e-12)[0]
    return part(0) + 1j * part(1)


@pytest.mark.parametrize("x", [0.3, 0.9, 1.0, 1.3, 1.75])
def test_smooth_weight_against_dblquad(x):
    T = 1.0
    W = lambda s: np.exp(2j * s) * (1 + s)
    assert phi_w(W, x, T) == pytest.approx(_dblquad_phi(W, x, T), abs=1e-10)


def test_sampled_weight_matches_callable():
    T = 1.0
    s = np.linspace(0, T, 2049)
    W = lambda t: np.cos(3 * t) + 0.5j
    assert phi_w(W(s), 1.2, T, pieces=2) == pytest.approx(phi_w(W, 1.2, T), abs=1e-6)


def test_fourier_identity():
    T = 1.0
    W = lambda s: np.exp(1j * s) * (1.5 - s)
    omega = np.linspace(-6, 6, 16)
    x = np.linspace(0, 2 * T, 801)
    phi = phi_table(W, T, x).phi
    lhs = simpson(phi[:, None] * np.exp(-1j * np.outer(x, omega)), x=x, axis=0)
    rhs = cubic_transform(W, T, omega)
    np.testing.assert_allclose(lhs, rhs, atol=1e-5)


def test_tangent_demo():
    rep = tangent_demo(1.0)
    assert rep.phi_at_three_halves == pytest.approx(1 / 16, rel=1e-6)
    assert rep.max_beyond_T >= 1 / 16 - 1e-12
    rep2 = tangent_demo(2.0)
    np.testing.assert_allclose(rep2.x, 2 * rep.x)
    np.testing.assert_allclose(rep2.phi, 4 * rep.phi, atol=1e-12)
    assert phi_w(lambda s: np.ones_like(s), -0.1, 1.0) == 0


def test_third_order_expansion():
    T = 1.0
    w = SampledControl.constant(1.0, 0, T, 1025)
    rep = third_order_check(w, T, [2.0])
    assert rep.relative_error < 0.05
    errs = [abs(r[0] - rep.z3[0]) for r in rep.ratios]
    assert errs[0] > errs[1] > errs[2]
    zero = third_order_check(SampledControl.constant(0, 0, T, 65), T, [1.0, 2.0])
    assert not np.any(zero.z3) and not np.any(zero.extrapolated)


# -- analyticity ---------------------------------------------------------------

def test_complex_endpoint_matches_real_on_axis():
    sched = ControlSchedule((Constant(0, 1, 1, 0.3), Dirac(1.5, 0.4, 0.0)), 2.0)
    w = np.linspace(-2, 2, 9)
    ref = simulate(EnsembleState.constant(OmegaGrid(w)), sched).m
    np.testing.assert_allclose(complex_endpoint(sched, w).real, ref, atol=1e-13)
    np.testing.assert_allclose(complex_endpoint(sched, w).imag, 0, atol=1e-13)


def test_cauchy_riemann():
    o1, o2 = np.linspace(0, 3, 7), np.linspace(-0.5, 0.5, 5)
    assert cauchy_riemann_check(ControlSchedule.empty(1.0), o1, o2).max_residual == 0
    sched = ControlSchedule((Constant(0, 1, 1, 0),), 1.0)
    r1 = cauchy_riemann_check(sched, o1, o2, 1e-3).max_residual
    r2 = cauchy_riemann_check(sched, o1, o2, 5e-4).max_residual
    assert r1 < 1e-4 and 3.5 <= r1 / r2 <= 4.5

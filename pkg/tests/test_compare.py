import numpy as np
import pytest
from scipy.integrate import quad

from ensemble_ctl.bloch import E3, OmegaGrid
from ensemble_ctl.compare import (HALF_PI, build_m0, build_matrix_A, impulse_schedule,
                                  newton_a_eps, orthogonality_residuals, strategy_comparison)
from ensemble_ctl.errors import DomainViolation, EpsTooLarge, PreconditionError

HALF = OmegaGrid.uniform(0.0, HALF_PI, 1025)


def test_matrix_small_cases():
    assert build_matrix_A(1).matrix[0, 0] == pytest.approx(1.0, abs=1e-12)
    rep = build_matrix_A(2)
    assert rep.determinant == pytest.approx(-4 / 3, abs=1e-10)
    assert rep.matrix[1, 1] == pytest.approx(-1 / 3, abs=1e-12)
    with pytest.raises(PreconditionError):
        build_matrix_A(0)


def test_matrix_first_column_and_invertibility():
    for N in range(1, 9):
        rep = build_matrix_A(N)
        np.testing.assert_allclose(rep.matrix[:, 0], 1.0, atol=1e-12)
        assert abs(rep.determinant) > 1e-10


def test_matrix_against_closed_form_entry():
    # int_0^{pi/2} 5 w^2 sin(5 w) dw by parts
    k = 5
    b = HALF_PI
    closed = k * ((-b * b * np.cos(k * b)) / k + 2 * (b * np.sin(k * b) / k ** 2 + (np.cos(k * b) - 1) / k ** 3))
    assert build_matrix_A(3).matrix[2, 2] == pytest.approx(closed, abs=1e-12)


def test_newton_eps_zero():
    c = newton_a_eps(3, 0.0)
    assert c.iterations == 0 and c.residual < 1e-12
    np.testing.assert_array_equal(c.a_eps, c.alpha)


def test_newton_converges_fast():
    c = newton_a_eps(4, 0.1, tol=1e-10)
    assert c.residual < 1e-10 and c.iterations <= 10
    h = c.residual_history
    assert all(a > b for a, b in zip(h, h[1:]))


def test_newton_residual_independent_quadrature():
    c = newton_a_eps(4, 0.1)
    for K in range(4):
        f = lambda w: c.dx(w) / np.sqrt(1 - (c.eps * c.x(w)) ** 2) * w ** K
        val = quad(f, 0, HALF_PI, epsabs=1e-12, epsrel=0.0, limit=200)[0]
        assert abs(val) < 1e-10
    np.testing.assert_allclose(orthogonality_residuals(c.a_eps, 4, 0.1, nodes=320), 0, atol=1e-11)


def test_zeroth_moment_is_an_arcsine_difference():
    c = newton_a_eps(3, 0.2)
    a = c.a_eps * 0.5
    r0 = orthogonality_residuals(a, 3, 0.2)[0]
    x = lambda w: np.cos(np.outer(w, [1, 3, 5])) @ a + np.cos(7 * w)
    exact = (np.arcsin(0.2 * x([HALF_PI])[0]) - np.arcsin(0.2 * x([0.0])[0])) / 0.2
    assert r0 == pytest.approx(exact, abs=1e-12)


def test_eps_too_large():
    with pytest.raises(EpsTooLarge):
        newton_a_eps(2, 10.0)
    with pytest.raises(PreconditionError):
        newton_a_eps(2, -0.1)


def test_build_m0():
    c0 = newton_a_eps(2, 0.0)
    st = build_m0(c0, HALF)
    np.testing.assert_array_equal(st.m, np.tile(E3, (len(HALF), 1)))
    c = newton_a_eps(4, 0.1)
    st = build_m0(c, HALF)
    assert np.max(np.abs(np.linalg.norm(st.m, axis=1) - 1)) < 1e-12
    bad = newton_a_eps(1, 0.0)
    object.__setattr__(bad, "eps", 0.9)
    with pytest.raises(DomainViolation):
        build_m0(bad, HALF)


def test_impulse_schedule_structure():
    for N in range(1, 5):
        c = newton_a_eps(N, 0.05)
        s = impulse_schedule(c)
        assert s.pulse_count == 2 * N + 2
        assert s.horizon == 6 * N + 3 and s.trip_count() == 2
        assert [e.time for e in s.events] == [2 * N + 1 + 2 * m for m in range(2 * N + 1)] + [6 * N + 3]


@pytest.mark.parametrize("N", [2, 4])
def test_strategy_costs(N):
    a, b = strategy_comparison(N, 0.05)
    assert a.model_time == 6 * N + 3 and a.trip_count == 2
    assert b.trip_count >= a.trip_count
    assert b.h1_after < b.h1_before


@pytest.mark.parametrize("N", [1, 2, 3, 4])
@pytest.mark.parametrize("eps", [0.02, 0.05])
def test_impulse_strategy_halves_pole_distance(N, eps):
    a, _ = strategy_comparison(N, eps)
    assert a.n_distance_after < 0.5 * a.n_distance_before + 1e-10

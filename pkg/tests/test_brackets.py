import numpy as np
import pytest
from numpy.polynomial import Polynomial

from ensemble_ctl.bloch import (E3, OMEGA_X, OMEGA_Y, ControlSchedule, Dirac,
                                EnsembleState, OmegaGrid, simulate, so3_exp)
from ensemble_ctl.brackets import (bracket_duration, bracket_schedule, default_grid,
                                   descent_functional, descent_step, endpoint_operator,
                                   find_descent_polys, h1_descent_loop, h1_seminorm,
                                   poly_schedule, rotate_to_pole, tilt_schedule)
from ensemble_ctl.errors import (AlreadyAtPole, DegenerateState, MaxIterExceeded,
                                 PreconditionError, TauTooLarge)

TAUS = [1e-2, 1e-3, 1e-4, 1e-5]
GEN = {"x": OMEGA_X, "y": OMEGA_Y}


def bracket_error(m, tau, sign, axis, omega):
    E = endpoint_operator(bracket_schedule(m, tau, sign, axis), omega)
    target = np.eye(3) + sign * tau * np.power.outer(np.atleast_1d(omega), m)[..., None, None] * GEN[axis]
    return np.max(np.linalg.norm(E - target.reshape(E.shape), axis=(-2, -1)))


def tilted_state(eps=0.1, grid=None):
    g = grid or default_grid()
    w = g.nodes
    return EnsembleState(g, np.column_stack([np.sin(eps * w), 0 * w, np.cos(eps * w)]))


def test_m0_is_single_pulse():
    s = bracket_schedule(0, 0.3, 1, "x")
    assert s.events == (Dirac(0.0, 0.3, 0.0),)
    np.testing.assert_allclose(endpoint_operator(s, 1.7), so3_exp((0.3, 0, 0)), atol=1e-15)


def test_m1_error_slope():
    err = [bracket_error(1, t, 1, "y", 1.0) for t in TAUS]
    slope = np.polyfit(np.log(TAUS), np.log(err), 1)[0]
    assert 1.4 <= slope <= 1.6


@pytest.mark.parametrize("m", [1, 2, 3])
@pytest.mark.parametrize("axis", ["x", "y"])
@pytest.mark.parametrize("sign", [1, -1])
def test_order_of_accuracy(m, axis, sign):
    omegas = np.array([0.25, 0.5, 1.0, 1.5, 2.0])
    rel = [bracket_error(m, t, sign, axis, omegas) / t for t in TAUS]
    assert all(a > b for a, b in zip(rel, rel[1:]))
    assert rel[-1] < 0.25 * rel[0]


def test_m2_negative_sign_example():
    for w in (0.5, 1.0, 2.0):
        rel = [bracket_error(2, t, -1, "x", w) / t for t in TAUS]
        assert rel[-1] < rel[0]


def test_durations():
    for m, factor in ((1, 2), (2, 6), (3, 14)):
        tau = 1e-4
        s = bracket_schedule(m, tau, 1, "x")
        assert s.horizon == pytest.approx(factor * tau ** (1 / (m + 1)), rel=1e-12)
        assert bracket_duration(m, tau) == pytest.approx(s.horizon, rel=1e-12)
    assert bracket_duration(0, 0.1) == 0.0


def test_bracket_errors():
    with pytest.raises(TauTooLarge):
        bracket_schedule(1, 4.0, 1, "x")
    with pytest.raises(PreconditionError):
        bracket_schedule(1, 1e-3, 1, "z")
    with pytest.raises(PreconditionError):
        bracket_schedule(1, 1e-3, 0, "x")
    with pytest.raises(PreconditionError):
        bracket_schedule(1, -1e-3, 1, "x")


def test_poly_schedule_examples():
    s = poly_schedule([1.0], [0.0], 1e-3)
    assert s.pulse_count == 1
    w = np.array([0.5, 1.0, 2.0])
    errs = []
    for tau in TAUS:
        E = endpoint_operator(poly_schedule([0, 0, 1.0], [0, 1.0], tau), w)
        target = np.eye(3) + tau * ((w ** 2)[:, None, None] * OMEGA_X + w[:, None, None] * OMEGA_Y)
        errs.append(np.max(np.linalg.norm(E - target, axis=(1, 2))) / tau)
    assert all(a > b for a, b in zip(errs, errs[1:]))
    errs = [bracket_error(1, t, 1, "y", 1.0) for t in TAUS]
    e2 = [np.linalg.norm(endpoint_operator(poly_schedule(None, [0, 1.0], t), 1.0)
                         - (np.eye(3) + t * OMEGA_Y)) for t in TAUS]
    np.testing.assert_allclose(e2, errs, rtol=1e-12)


def test_endpoint_operator_examples(rng):
    w = rng.uniform(-3, 3, 8)
    np.testing.assert_allclose(endpoint_operator(ControlSchedule.empty(1.3), w),
                               so3_exp(np.column_stack([0 * w, 0 * w, 1.3 * w])), atol=1e-15)
    efface = ControlSchedule((Dirac(0, np.pi, 0), Dirac(1.0, np.pi, 0)), 2.0)
    np.testing.assert_allclose(endpoint_operator(efface, w), np.broadcast_to(np.eye(3), (8, 3, 3)), atol=1e-14)
    E = endpoint_operator(bracket_schedule(3, 1e-3, 1, "y"), w)
    np.testing.assert_allclose(E @ np.transpose(E, (0, 2, 1)), np.broadcast_to(np.eye(3), (8, 3, 3)), atol=1e-13)
    np.testing.assert_allclose(np.linalg.det(E), 1.0, atol=1e-13)


def test_endpoint_operator_matches_simulate(rng):
    sched = ControlSchedule((Dirac(0.2, 0.3, -0.1), Dirac(1.0, 0.0, 2.0)), 1.5)
    g = OmegaGrid(np.array([0.3, 1.1]))
    st = EnsembleState.constant(g, [0.6, 0.0, 0.8])
    E = endpoint_operator(sched, g.nodes)
    np.testing.assert_allclose(np.einsum("nij,nj->ni", E, st.m), simulate(st, sched).m, atol=1e-14)


def test_descent_functional_examples():
    g = default_grid()
    const = EnsembleState.constant(g, [0.6, 0, 0.8])
    assert abs(descent_functional(const, [0, 1, 1], [0, 2])) < 1e-14
    eps = 0.1
    A = descent_functional(tilted_state(eps), None, [0, 1.0])
    assert A == pytest.approx(eps * 2.0, rel=0.02)


def test_descent_functional_linear(rng):
    st = tilted_state(0.3)
    p1, p2, q = rng.normal(size=3), rng.normal(size=3), rng.normal(size=3)
    a, b = 0.7, -1.3
    lhs = descent_functional(st, a * p1 + b * p2, q)
    rhs = a * descent_functional(st, p1, q) + b * descent_functional(st, p2, q) + (1 - a - b) * descent_functional(st, None, q)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_descent_functional_finite_difference(rng):
    g = OmegaGrid.uniform(0, 2, 401)
    w = g.nodes
    for _ in range(3):
        c = rng.normal(size=3) * 0.3
        v = np.column_stack([np.sin(c[0] * w), np.sin(c[1] * w) * 0.3, np.ones_like(w)])
        st = EnsembleState(g, v / np.linalg.norm(v, axis=1, keepdims=True))
        p, q = rng.normal(size=3), rng.normal(size=3)
        A = descent_functional(st, p, q)
        tau = 1e-6
        gen = Polynomial(p)(w)[:, None, None] * OMEGA_X + Polynomial(q)(w)[:, None, None] * OMEGA_Y
        moved = st.m + tau * np.einsum("nij,nj->ni", gen, st.m)
        d0 = np.gradient(st.m, w, axis=0, edge_order=2)
        d1 = np.gradient(moved, w, axis=0, edge_order=2)
        f0 = np.trapezoid(np.sum(d0 * d0, axis=1), w) / 2
        f1 = np.trapezoid(np.sum(d1 * d1, axis=1), w) / 2
        assert (f1 - f0) / tau == pytest.approx(A, abs=1e-4)


def test_find_descent_polys():
    st = tilted_state()
    p, q = find_descent_polys(st, 2)
    A = descent_functional(st, p, q)
    assert A < 0
    p4, q4 = find_descent_polys(st, 4)
    assert descent_functional(st, p4, q4) <= A + 1e-15
    with pytest.raises(DegenerateState):
        find_descent_polys(EnsembleState.constant(default_grid(), [0.6, 0, 0.8]), 2)
    with pytest.raises(PreconditionError):
        find_descent_polys(st, 0)


def test_descent_step_decreases_h1():
    st = tilted_state()
    out, sched, rep = descent_step(st)
    assert rep.h1_after < rep.h1_before == pytest.approx(h1_seminorm(st))
    assert h1_seminorm(out) == pytest.approx(rep.h1_after)
    assert rep.tau > 0 and rep.schedule_duration == sched.horizon


def test_descent_step_tilts_flat_states():
    g = default_grid()
    w = g.nodes
    st = EnsembleState(g, np.column_stack([np.cos(0.2 * w), np.sin(0.2 * w), 0 * w]))
    tilted = simulate(st, tilt_schedule())
    np.testing.assert_allclose(tilted.m, np.column_stack([st.x, 0 * w, st.y]), atol=1e-14)
    out, sched, rep = descent_step(st)
    assert rep.h1_after < rep.h1_before and sched.events[:2] == tilt_schedule().events


def test_descent_step_constant_state():
    with pytest.raises(DegenerateState):
        descent_step(EnsembleState.constant(default_grid(), [0.6, 0, 0.8]))


def test_rotate_to_pole_examples():
    v = np.array([0, 1, 1]) / np.sqrt(2)
    sched, res = rotate_to_pole(v, "x")
    np.testing.assert_allclose(res, E3, atol=1e-15)
    sched, res = rotate_to_pole([1.0, 0, 0])
    np.testing.assert_allclose(res, E3, atol=1e-15)
    assert sched.events[0].gamma == np.pi
    with pytest.raises(AlreadyAtPole):
        rotate_to_pole(E3)
    w = default_grid().nodes
    E = endpoint_operator(rotate_to_pole(v, "x")[0], w)
    assert np.max(np.linalg.norm(E - E[0], axis=(1, 2))) < 1e-12
    np.testing.assert_allclose(E[0] @ v, res * 0 + E3, atol=1e-12)


def test_rotate_to_pole_never_moves_away(rng):
    for _ in range(50):
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        for axis in ("x", "y"):
            _, res = rotate_to_pole(v, axis)
            assert np.linalg.norm(res - E3) <= np.linalg.norm(v - E3) + 1e-15
            E = endpoint_operator(rotate_to_pole(v, axis)[0], 0.7)
            np.testing.assert_allclose(E @ v, res, atol=1e-12)


def test_descent_loop():
    g = default_grid()
    out, reps, dist = h1_descent_loop(EnsembleState.constant(g, [0.6, 0, 0.8]))
    assert reps == [] and dist < 1e-12
    with pytest.raises(MaxIterExceeded):
        h1_descent_loop(tilted_state(), max_iter=0)


def test_descent_loop_monotone():
    out, reps, dist = h1_descent_loop(tilted_state(), tol_h1=1e-3)
    h1 = [r.h1_after for r in reps]
    assert all(a > b for a, b in zip(h1, h1[1:]))
    assert h1[-1] < 1e-3 and dist < 0.01

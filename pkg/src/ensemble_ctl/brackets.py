"""Impulse words that realise polynomial rotations, and H1 descent.

Group commutators of a small rotation about a transverse axis with the
drift produce rotations whose angle is a power of ``omega``:

    U1(tau)   = exp(-A) exp(-B) exp(A) exp(B)          ~ I + tau * omega * [OZ, OX]
    Uj+1(tau) = exp(-A) Uj(tau)^-1 exp(A) Uj(tau)      ~ I + tau**((j+2)/2) omega**(j+1) ...

with ``A = sqrt(tau) * omega * OMEGA_Z`` (a free flight of length
``sqrt(tau)``) and ``B = sqrt(tau) * OMEGA_X`` (an impulse).  Backward free
flights ``exp(-A)`` are realised by conjugating a forward flight with
pi-pulses, which costs two large impulses each.

Concatenating such words gives ``I + tau * (P(omega) OMEGA_X + Q(omega) OMEGA_Y)``
for real polynomials ``P`` and ``Q``, which is the building block of a
descent method for the H1 seminorm ``||dM/domega||``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .bloch import (ControlSchedule, Dirac, E3, EnsembleState, OmegaGrid, simulate, so3_exp)
from .errors import (AlreadyAtPole, BacktrackFailed, DegenerateState, MaxIterExceeded,
                     PreconditionError, TauTooLarge)

AXES = ("x", "y")
CSV_COLUMNS = ("iter", "a_value", "tau", "h1_before", "h1_after", "duration", "trips")


@dataclass(frozen=True)
class DescentReport:
    a_value: float
    tau: float
    h1_before: float
    h1_after: float
    schedule_duration: float
    trip_count: int


# ---------------------------------------------------------------------------
# commutator words
# ---------------------------------------------------------------------------

# a word is a list of ("pulse", +-1) and ("flight", +-1) in time order; the
# actual angle and flight length are both ``step`` = tau**(1/(m+1))

def _inverse(word: list) -> list:
    return [(kind, -sgn) for kind, sgn in reversed(word)]


def _word(level: int, sign: int) -> list:
    """Group commutator word of the given level.

    The negative word is the exact inverse of the positive one.  Using the
    mirrored commutator ``exp(B) exp(A) exp(-B) exp(-A)`` instead would leave
    a third-order term ``-tau * omega * OMEGA_Z`` at level two.
    """
    if level == 1:
        word = [("pulse", 1), ("flight", 1), ("pulse", -1), ("flight", -1)]
    else:
        inner = _word(level - 1, 1)
        word = inner + [("flight", 1)] + _inverse(inner) + [("flight", -1)]
    return word if sign > 0 else _inverse(word)


def _compile(word: list, step: float, axis: str) -> ControlSchedule:
    """Turn a word into impulses about ``axis``; coincident impulses are merged."""
    events = []
    t = 0.0
    pending = 0.0

    def flush():
        nonlocal pending
        if pending != 0.0:
            beta, gamma = (pending, 0.0) if axis == "x" else (0.0, pending)
            events.append(Dirac(t, beta, gamma))
        pending = 0.0

    for kind, sgn in word:
        if kind == "pulse":
            pending += sgn * step
        elif sgn > 0:
            flush()
            t += step
        else:
            # exp(-s w OZ) = exp(pi O) exp(s w OZ) exp(-pi O)
            pending -= np.pi
            flush()
            t += step
            pending = np.pi
    flush()
    return ControlSchedule(tuple(events), t)


def _ad_drift(vec: np.ndarray) -> np.ndarray:
    """Generator vector of ``[OMEGA_Z, hat(vec)]``, i.e. ``e3 x vec``."""
    return np.cross(E3, vec)


def bracket_direction(m: int, base: str) -> np.ndarray:
    """Axis vector of ``ad_{OMEGA_Z}^m(OMEGA_base)``."""
    v = np.array([1.0, 0.0, 0.0]) if base == "x" else np.array([0.0, 1.0, 0.0])
    for _ in range(m):
        v = _ad_drift(v)
    return v


def bracket_step(m: int, tau: float) -> float:
    """Impulse angle and flight length used by the order-``m`` word."""
    return tau ** (1.0 / (m + 1))


def bracket_schedule(m: int, tau: float, sign: int, axis: str) -> ControlSchedule:
    """Impulses whose endpoint is ``I + sign * tau * omega**m * OMEGA_axis + o(tau)``.

    Parameters
    ----------
    m : int
        Power of ``omega``; ``m = 0`` is a single impulse.
    tau : float
        Positive amplitude.
    sign : {+1, -1}
    axis : {"x", "y"}

    Returns
    -------
    ControlSchedule
        Duration ``(2**(m+1) - 2) * tau**(1/(m+1))``.

    Raises
    ------
    TauTooLarge
        If the impulse angle ``tau**(1/(m+1))`` is not below ``pi/2``.
    """
    if axis not in AXES:
        raise PreconditionError("axis must be 'x' or 'y'")
    if sign not in (1, -1):
        raise PreconditionError("sign must be +1 or -1")
    if m < 0 or int(m) != m:
        raise PreconditionError("m must be a non-negative integer")
    if not tau > 0:
        raise PreconditionError("tau must be positive")
    step = bracket_step(m, tau)
    if not step < np.pi / 2:
        raise TauTooLarge(f"impulse angle {step:.4g} for m={m}, tau={tau:.4g} is not below pi/2")
    if m == 0:
        beta, gamma = (sign * tau, 0.0) if axis == "x" else (0.0, sign * tau)
        return ControlSchedule((Dirac(0.0, beta, gamma),), 0.0)
    # odd powers rotate the base axis by a quarter turn
    base = axis if m % 2 == 0 else ("y" if axis == "x" else "x")
    target = 0 if axis == "x" else 1
    orient = int(np.sign(bracket_direction(m, base)[target]))
    return _compile(_word(m, sign * orient), step, base)


def bracket_duration(m: int, tau: float) -> float:
    return 0.0 if m == 0 else (2 ** (m + 1) - 2) * bracket_step(m, tau)


def poly_schedule(p_poly, q_poly, tau: float) -> ControlSchedule:
    """Concatenate words so the endpoint is ``I + tau*(P OMEGA_X + Q OMEGA_Y) + o(tau)``.

    Monomials are taken in ascending degree, all of ``P`` before ``Q``; the
    monomial ``c * omega**j`` uses amplitude ``|c| * tau``.
    """
    sched = ControlSchedule.empty()
    for poly, axis in ((p_poly, "x"), (q_poly, "y")):
        for j, c in enumerate(_coefs(poly)):
            if c != 0.0:
                piece = bracket_schedule(j, abs(c) * tau, 1 if c > 0 else -1, axis)
                sched = sched.then(piece)
    return sched


def _coefs(poly) -> np.ndarray:
    if poly is None:
        return np.zeros(0)
    if isinstance(poly, Polynomial):
        return np.asarray(poly.coef, dtype=float)
    return np.asarray(poly, dtype=float)


def endpoint_operator(schedule: ControlSchedule, omega) -> np.ndarray:
    """Propagator of ``schedule`` at frequency ``omega`` (matrix product).

    Accepts a scalar or an array of frequencies; returns ``(3, 3)`` or
    ``(n, 3, 3)``.
    """
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    out = np.broadcast_to(np.eye(3), (w.size, 3, 3)).copy()
    t = 0.0

    def flight(dt):
        return so3_exp(np.column_stack([np.zeros_like(w), np.zeros_like(w), w * dt]))

    for e in schedule.events:
        if e.start > t:
            out = flight(e.start - t) @ out
            t = e.start
        if isinstance(e, Dirac):
            out = so3_exp((e.beta, e.gamma, 0.0)) @ out
        else:
            axes = np.column_stack([np.full(w.size, e.u), np.full(w.size, e.v), w]) * (e.t1 - e.t0)
            out = so3_exp(axes) @ out
            t = e.t1
    if schedule.horizon > t:
        out = flight(schedule.horizon - t) @ out
    return out if np.ndim(omega) else out[0]


# ---------------------------------------------------------------------------
# descent
# ---------------------------------------------------------------------------

def _derivative(state: EnsembleState) -> np.ndarray:
    return np.gradient(state.m, state.omega, axis=0, edge_order=2)


def h1_seminorm(state: EnsembleState) -> float:
    """``||dM/domega||_{L2}`` with second-order differences and trapezoid weights."""
    d = _derivative(state)
    return math.sqrt(float(np.trapezoid(np.sum(d * d, axis=1), state.omega)))


def descent_functional(state: EnsembleState, p_poly, q_poly) -> float:
    """First variation of ``||M'||^2 / 2`` along ``(P OMEGA_X + Q OMEGA_Y) M``.

    ``A(P, Q) = int P' (y z' - z y') + Q' (z x' - x z') domega``.
    """
    w = state.omega
    dx, dy, dz = _derivative(state).T
    x, y, z = state.x, state.y, state.z
    dp = Polynomial(_coefs(p_poly) if _coefs(p_poly).size else [0.0]).deriv()(w)
    dq = Polynomial(_coefs(q_poly) if _coefs(q_poly).size else [0.0]).deriv()(w)
    integrand = dp * (y * dz - z * dy) + dq * (z * dx - x * dz)
    return float(np.trapezoid(integrand, w))


def find_descent_polys(state: EnsembleState, max_deg: int, degenerate_tol: float = 1e-12):
    """Steepest-descent pair ``(P, Q)`` among polynomials of degree ``<= max_deg``.

    The functional is linear in the coefficients; the returned pair is the
    negated gradient scaled to unit length, so ``A(P, Q) = -||gradient||``.

    Raises
    ------
    DegenerateState
        If every monomial gives ``|A| < degenerate_tol``.
    """
    if max_deg < 1:
        raise PreconditionError("max_deg must be at least 1")
    grad_p = np.zeros(max_deg + 1)
    grad_q = np.zeros(max_deg + 1)
    for j in range(1, max_deg + 1):
        mono = np.zeros(j + 1)
        mono[j] = 1.0
        grad_p[j] = descent_functional(state, mono, None)
        grad_q[j] = descent_functional(state, None, mono)
    size = math.sqrt(float(np.sum(grad_p ** 2) + np.sum(grad_q ** 2)))
    if max(np.max(np.abs(grad_p)), np.max(np.abs(grad_q))) < degenerate_tol:
        raise DegenerateState("no polynomial direction decreases the H1 seminorm")
    return Polynomial(-grad_p / size), Polynomial(-grad_q / size)


def _needs_tilt(state: EnsembleState) -> bool:
    return float(np.max(np.abs(state.z))) < 1e-12


def tilt_schedule() -> ControlSchedule:
    """Impulses ``3pi/2`` at 0 and ``pi`` at 1 over ``[0, 2]``.

    The two equal flights cancel, leaving ``exp(pi/2 OMEGA_X)``, which maps
    ``(x, y, 0)`` to ``(x, 0, y)`` at every frequency.
    """
    return ControlSchedule((Dirac(0.0, 1.5 * np.pi, 0.0), Dirac(1.0, np.pi, 0.0)), 2.0)


def descent_step(state: EnsembleState, max_deg: int = 2, tau0: float = 1e-2,
                 polys=None, max_halvings: int = 30):
    """One backtracking step of polynomial-rotation descent.

    Parameters
    ----------
    polys : (P, Q), optional
        Fixed direction; by default :func:`find_descent_polys` is used.

    Returns
    -------
    (EnsembleState, ControlSchedule, DescentReport)

    Raises
    ------
    BacktrackFailed
        If no ``tau0 / 2**j`` with ``j <= max_halvings`` lowers the seminorm.
    """
    h1_before = h1_seminorm(state)
    prefix = None
    work = state
    if _needs_tilt(state):
        prefix = tilt_schedule()
        work = simulate(state, prefix)
    if polys is None:
        p_poly, q_poly = find_descent_polys(work, max_deg)
    else:
        p_poly, q_poly = polys
    a_value = descent_functional(work, p_poly, q_poly)
    for j in range(max_halvings + 1):
        tau = tau0 / 2 ** j
        try:
            sched = poly_schedule(p_poly, q_poly, tau)
        except TauTooLarge:
            continue
        trial = simulate(work, sched)
        h1_after = h1_seminorm(trial)
        if h1_after < h1_before:
            full = prefix.then(sched) if prefix is not None else sched
            report = DescentReport(a_value, tau, h1_before, h1_after, full.horizon,
                                   full.trip_count())
            return trial, full, report
    raise BacktrackFailed(f"no step down from tau0={tau0:g} in {max_halvings} halvings")


def rotate_to_pole(m, axis: str | None = None):
    """Impulses ``pi`` at 1 and ``pi + theta`` at 2, net ``exp(theta OMEGA_axis)``.

    About x the vector ``(x, y, z)`` goes to ``(x, 0, sqrt(y^2 + z^2))``;
    about y it goes to ``(0, y, sqrt(x^2 + z^2))``.  With ``axis=None`` the x
    variant is used unless ``y`` vanishes.

    Returns
    -------
    (ControlSchedule, numpy.ndarray)
        The schedule and the rotated vector.

    Raises
    ------
    AlreadyAtPole
        If ``m`` already equals ``e3``.
    """
    v = np.asarray(m, dtype=float)
    v = v / np.linalg.norm(v)
    if np.allclose(v, E3, rtol=0.0, atol=1e-15):
        raise AlreadyAtPole("vector is already e3")
    if axis is None:
        axis = "x" if abs(v[1]) > 1e-15 else "y"
    if axis == "x":
        theta = math.atan2(v[1], v[2])
    elif axis == "y":
        theta = -math.atan2(v[0], v[2])
    else:
        raise PreconditionError("axis must be 'x', 'y' or None")
    theta %= 2 * np.pi
    pulse = (lambda a: (a, 0.0)) if axis == "x" else (lambda a: (0.0, a))
    sched = ControlSchedule((Dirac(1.0, *pulse(np.pi)), Dirac(2.0, *pulse(np.pi + theta))), 2.0)
    rotated = so3_exp((theta, 0.0, 0.0) if axis == "x" else (0.0, theta, 0.0)) @ v
    return sched, rotated


def h1_descent_loop(state: EnsembleState, tol_h1: float = 1e-3, max_iter: int = 100,
                    max_deg: int = 2, tau0: float = 1e-2):
    """Descend until ``h1 < tol_h1``, then rotate the averaged vector to ``e3``.

    Returns
    -------
    (EnsembleState, list of DescentReport, float)
        Final state, per-step reports and the sup distance to ``e3``.

    Raises
    ------
    MaxIterExceeded
        Carries the partial ``reports`` and ``state``.
    """
    reports = []
    while h1_seminorm(state) >= tol_h1:
        if len(reports) >= max_iter:
            raise MaxIterExceeded(f"h1 = {h1_seminorm(state):.3e} after {max_iter} steps",
                                  reports, state)
        state, _, rep = descent_step(state, max_deg, tau0)
        reports.append(rep)
    for _ in range(2):
        mean = np.mean(state.m, axis=0)
        try:
            sched, _ = rotate_to_pole(mean)
        except AlreadyAtPole:
            break
        state = simulate(state, sched)
    dist = float(np.max(np.linalg.norm(state.m - E3, axis=1)))
    return state, reports, dist


def default_grid(n: int = 1025) -> OmegaGrid:
    """Frequency window used by the descent experiments."""
    return OmegaGrid.uniform(0.0, 2.0, n)

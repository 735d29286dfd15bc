"""Nonlinear reachability near the north pole.

For a bounded control ``w = -v + i u`` the transverse component of an
ensemble started at ``e3`` solves the mild equation

    Z(t, w) = -exp(i w t) * int_0^t w(s) sqrt(1 - |Z(s, w)|^2) exp(-i w s) ds,

which is solved here by Picard iteration on a truncated frequency window.
The module also provides the cubic correction ``Phi_W`` of the endpoint
map, a third-order expansion check, a tangent-space witness and a
Cauchy-Riemann test of analyticity in a complex frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .bloch import OMEGA_X, OMEGA_Y, OMEGA_Z, E3, Constant, ControlSchedule, Dirac, so3_exp
from .errors import ControlTooLarge, InternalError, NoConvergence, PreconditionError
from .linear import SampledControl, lin_endpoint
from .quadrature import oscillatory_cumulative

# Lipschitz constant of sqrt(1 - |z|^2) on the disc |z| <= 1/2
LIPSCHITZ_C = 1.0 / math.sqrt(3.0)
CSV_COLUMNS = ("x", "re_phi", "im_phi")


def admissible_radius(T: float) -> float:
    """Largest control L2 norm (exclusive) for which the Picard map contracts."""
    return 1.0 / (2.0 * math.sqrt(T))


@dataclass(eq=False)
class MildSolution:
    """Picard solution ``Z[t_index, w_index]`` of the mild equation."""

    times: np.ndarray
    omega: np.ndarray
    Z: np.ndarray
    control: SampledControl
    diffs: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.diffs)

    @property
    def endpoint(self) -> np.ndarray:
        return self.Z[-1]

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.Z)))

    def window_l2(self) -> np.ndarray:
        """``(int_{-W}^{W} |Z(t, w)|^2 dw)^(1/2)`` at every time (truncated window)."""
        return np.sqrt(np.trapezoid(np.abs(self.Z) ** 2, self.omega, axis=1))

    def contraction_ratios(self) -> np.ndarray:
        d = np.asarray(self.diffs)
        return d[1:] / d[:-1] if d.size > 1 else np.empty(0)


def fixed_point_solve(w: SampledControl, T: float, omega_window: float | None = None,
                      tol: float = 1e-12, max_iter: int = 200, n_omega: int = 161,
                      omega=None) -> MildSolution:
    """Picard iteration for the mild equation.

    Parameters
    ----------
    w : SampledControl
        Control sampled on ``[0, T]``; its sample grid is the time grid.
    T : float
        Horizon.
    omega_window : float, optional
        Half-width of the frequency window, default ``40 / T``.
    tol : float
        Stop when successive iterates differ by less than this (sup norm).
    omega : array_like, optional
        Explicit frequency nodes; overrides the window.

    Raises
    ------
    ControlTooLarge
        If ``||w||_L2 >= 1 / (2 sqrt(T))``.
    NoConvergence
        If ``max_iter`` iterations were not enough.
    """
    if not T > 0:
        raise PreconditionError("T must be positive")
    if abs(w.t0) > 1e-12 or abs(w.t1 - T) > 1e-9 * max(1.0, T):
        raise PreconditionError("control must be sampled on [0, T]")
    norm = w.l2_norm()
    if not norm < admissible_radius(T):
        raise ControlTooLarge(f"||w||_L2 = {norm:.6g} is not below {admissible_radius(T):.6g}")
    if omega is None:
        window = 40.0 / T if omega_window is None else float(omega_window)
        omega = np.linspace(-window, window, n_omega)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    t = w.times
    samples = w.samples[:, None]
    Y = np.zeros((t.size, omega.size), dtype=complex)
    diffs = []
    for _ in range(max_iter):
        mod2 = np.abs(Y) ** 2
        if np.max(mod2) > 0.25 + 1e-12:
            raise InternalError("Picard iterate left the disc |Z| <= 1/2")
        Y_new = -oscillatory_cumulative(samples * np.sqrt(1.0 - mod2), t, omega)
        diff = float(np.max(np.abs(Y_new - Y)))
        diffs.append(diff)
        Y = Y_new
        if diff < tol:
            Z = Y * np.exp(1j * np.outer(t, omega))
            return MildSolution(t, omega, Z, w, diffs)
    raise NoConvergence(f"Picard iteration did not reach {tol:g} in {max_iter} steps")


def iteration_bound(w: SampledControl, T: float, tol: float, margin: int = 3) -> int:
    """Iterations predicted by the contraction factor ``c sqrt(T) ||w||``."""
    norm = w.l2_norm()
    q = LIPSCHITZ_C * math.sqrt(T) * norm
    if norm == 0.0:
        return 1 + margin
    first = math.sqrt(T) * norm
    return max(1, math.ceil(math.log(tol / first) / math.log(q))) + 1 + margin


# ---------------------------------------------------------------------------
# cubic correction
# ---------------------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


def _as_function(W, T: float):
    if callable(W):
        def f(s):
            s = np.asarray(s, dtype=float)
            return np.where((s >= 0) & (s <= T), np.asarray(W(s), dtype=complex), 0.0)
        return f
    samples = np.asarray(W, dtype=complex)
    grid = np.linspace(0.0, T, samples.size)

    def f(s):
        s = np.asarray(s, dtype=float)
        out = (np.interp(s, grid, samples.real, left=0.0, right=0.0)
               + 1j * np.interp(s, grid, samples.imag, left=0.0, right=0.0))
        return out
    return f


def _gauss(a: float, b: float):
    half = 0.5 * (b - a)
    return a + half * (_GL_X + 1.0), half * _GL_W


def phi_w(W, x: float, T: float = 1.0, pieces: int = 1) -> complex:
    """Cubic correction ``Phi_W(x)``.

    ``Phi_W(x) = int_0^T int W(t) W(s) conj(W(t + s - x)) ds dt`` with
    ``s`` running over ``[max(0, x - t), min(t, x)]``.  The ``t`` range is
    cut where the inner limits or the support of ``W`` change formula and
    each piece is integrated by tensor Gauss-Legendre (48 nodes each way,
    optionally repeated over ``pieces`` subintervals).

    Parameters
    ----------
    W : array_like or callable
        Samples on a uniform grid of ``[0, T]`` (linearly interpolated) or a
        function of time; zero outside ``[0, T]``.
    """
    if not (0.0 < x < 2.0 * T):
        return 0j
    f = _as_function(W, T)
    cuts = {0.0, T, x / 2.0, x, 0.5 * (x + T), x - T}
    cuts = sorted(c for c in cuts if 0.0 <= c <= T)
    total = 0j
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a <= 0:
            continue
        for j in range(pieces):
            lo = a + (b - a) * j / pieces
            hi = a + (b - a) * (j + 1) / pieces
            tn, tw = _gauss(lo, hi)
            for tau, wt in zip(tn, tw):
                s_lo = max(0.0, x - tau)
                s_hi = min(tau, x, T, x - tau + T)
                if s_hi <= s_lo:
                    continue
                sn, sw = _gauss(s_lo, s_hi)
                inner = np.sum(sw * f(sn) * np.conj(f(tau + sn - x)))
                total += wt * f(tau) * inner
    return complex(total)


def phi_indicator(x, T: float = 1.0):
    """Closed form of ``Phi`` for ``W = 1`` on ``[0, T]``."""
    x = np.asarray(x, dtype=float)
    left = x * T - 0.75 * x ** 2
    right = (T - 0.5 * x) ** 2
    out = np.where(x <= T, left, right)
    return np.where((x > 0) & (x < 2 * T), out, 0.0)


@dataclass
class CubicReport:
    x: np.ndarray
    phi: np.ndarray
    residuals: dict = field(default_factory=dict)

    def rows(self):
        for xv, pv in zip(self.x, self.phi):
            yield (float(xv), float(pv.real), float(pv.imag))


def phi_table(W, T: float, x) -> CubicReport:
    x = np.asarray(x, dtype=float)
    return CubicReport(x, np.array([phi_w(W, float(v), T) for v in x]))


def cubic_transform(W, T: float, omega) -> np.ndarray:
    """``int_0^T W(t) |Z1(t, w)|^2 exp(-i w t) dt`` with ``Z1 = int_0^t W exp(-i w s) ds``."""
    f = _as_function(W, T)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    t = np.linspace(0.0, T, 4097)
    wt = f(t)
    z1 = oscillatory_cumulative(wt, t, omega)
    return _column_integrals(wt[:, None] * np.abs(z1) ** 2, t, omega)


def _column_integrals(g, t, omega) -> np.ndarray:
    """``int g[:, j] exp(-i w_j s) ds`` for each column."""
    return oscillatory_cumulative(g, t, omega)[-1]


@dataclass
class ThirdOrderReport:
    omega: np.ndarray
    eps: list
    ratios: list
    extrapolated: np.ndarray
    z3: np.ndarray
    relative_error: float


def third_order_check(w: SampledControl, T: float, omega, eps_list=(0.1, 0.05, 0.025),
                      tol: float = 1e-15) -> ThirdOrderReport:
    """Compare ``(Z(T; eps W) - eps Z1(T)) / eps^3`` with the cubic term.

    With ``Y1(t) = -int_0^t W exp(-i w s) ds`` the cubic term is
    ``Z3(T) = (1/2) exp(i w T) int_0^T W |Y1|^2 exp(-i w t) dt``.  The last
    two ratios are Richardson-extrapolated (the remainder is ``O(eps^2)``).
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    t = w.times
    y1 = -oscillatory_cumulative(w.samples, t, omega)
    z3 = 0.5 * _column_integrals(w.samples[:, None] * np.abs(y1) ** 2, t, omega)
    z3 = z3 * np.exp(1j * omega * T)
    z1 = lin_endpoint(0.0, omega, w, T)
    ratios = []
    for eps in eps_list:
        sol = fixed_point_solve(w.scaled(eps), T, tol=tol, omega=omega, max_iter=500)
        ratios.append((sol.endpoint - eps * z1) / eps ** 3)
    if len(eps_list) >= 2:
        r = (eps_list[-2] / eps_list[-1]) ** 2
        extrap = (r * ratios[-1] - ratios[-2]) / (r - 1.0)
    else:
        extrap = ratios[-1]
    scale = np.max(np.abs(z3))
    rel = float(np.max(np.abs(extrap - z3)) / scale) if scale > 0 else float(np.max(np.abs(extrap)))
    return ThirdOrderReport(omega, list(eps_list), ratios, extrap, z3, rel)


@dataclass
class TangentReport:
    T: float
    x: np.ndarray
    phi: np.ndarray
    max_beyond_T: float
    phi_at_three_halves: float


def tangent_demo(T: float, n_x: int = 101) -> TangentReport:
    """Evaluate ``Phi_1`` on ``(T, 2T)``; nonzero values there witness that the
    cubic correction leaves the span of the first-order endpoints."""
    if not T > 0:
        raise PreconditionError("T must be positive")
    ones = lambda s: np.ones_like(s, dtype=complex)  # noqa: E731
    x = np.linspace(T, 2 * T, n_x)[1:-1]
    if n_x % 2 == 0:
        x = np.sort(np.append(x, 1.5 * T))
    phi = np.array([phi_w(ones, float(v), T) for v in x])
    mid = phi_w(ones, 1.5 * T, T)
    if abs(mid - T * T / 16) > 1e-6 * max(1.0, T * T):
        raise InternalError(f"Phi_1(3T/2) = {mid} differs from T^2/16")
    return TangentReport(T, x, phi, float(np.max(np.abs(phi))), float(mid.real))


# ---------------------------------------------------------------------------
# analyticity in a complex frequency
# ---------------------------------------------------------------------------

@dataclass
class CauchyRiemannReport:
    h: float
    omega1: np.ndarray
    omega2: np.ndarray
    residual: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual)) if self.residual.size else 0.0


def complex_endpoint(schedule: ControlSchedule, omega, m0=E3) -> np.ndarray:
    """Propagate the complexified Bloch system; returns ``M`` of shape ``(n, 3)``.

    Impulses act by the same real rotations; free evolution and constant
    segments use the complex matrix exponential of the generator.
    """
    w = np.atleast_1d(np.asarray(omega, dtype=complex))
    M = np.tile(np.asarray(m0, dtype=complex), (w.size, 1))
    t = 0.0

    def drift(M, dt):
        if dt <= 0:
            return M
        gen = (w * dt)[:, None, None] * OMEGA_Z[None]
        return np.einsum("nij,nj->ni", linalg.expm(gen), M)

    for ev in schedule.events:
        M = drift(M, ev.start - t)
        if isinstance(ev, Dirac):
            R = so3_exp(np.array([ev.beta, ev.gamma, 0.0]))
            M = M @ R.T
            t = ev.time
        elif isinstance(ev, Constant):
            dt = ev.t1 - ev.t0
            gen = (w * dt)[:, None, None] * OMEGA_Z[None] + dt * (ev.u * OMEGA_X + ev.v * OMEGA_Y)[None]
            M = np.einsum("nij,nj->ni", linalg.expm(gen), M)
            t = ev.t1
    return drift(M, schedule.horizon - t)


def cauchy_riemann_check(schedule: ControlSchedule, omega1, omega2, h: float = 1e-3,
                         m0=E3) -> CauchyRiemannReport:
    """``|dZ/dw2 - i dZ/dw1|`` by centred differences at each node ``w1 + i w2``.

    ``Z = M_x + i M_y`` is the complexified transverse component; for a
    holomorphic map the residual is ``O(h^2)``.
    """
    o1 = np.asarray(omega1, dtype=float)
    o2 = np.asarray(omega2, dtype=float)
    nodes = (o1[None, :] + 1j * o2[:, None]).ravel()
    probes = np.concatenate([nodes + h, nodes - h, nodes + 1j * h, nodes - 1j * h])
    M = complex_endpoint(schedule, probes, m0)
    Z = (M[:, 0] + 1j * M[:, 1]).reshape(4, -1)
    d1 = (Z[0] - Z[1]) / (2 * h)
    d2 = (Z[2] - Z[3]) / (2 * h)
    res = np.abs(d2 - 1j * d1).reshape(o2.size, o1.size)
    return CauchyRiemannReport(h, o1, o2, res)

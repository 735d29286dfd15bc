"""Cost of two steering strategies on an adversarial initial state.

The initial state is ``M0 = (eps x, 0, sqrt(1 - eps^2 x^2))`` with

    x(w) = sum_{k=1..N} a_k cos((2k - 1) w) + cos((2N + 1) w),

where the ``a_k`` make ``x' / sqrt(1 - eps^2 x^2)`` orthogonal to
``1, w, ..., w^(N-1)`` on ``(0, pi/2)``.  That orthogonality kills every
polynomial rotation direction of degree ``<= N``, so the H1 descent has to
generate high-order brackets, while the impulse-halving schedule only needs
the Fourier coefficients of ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate

from .bloch import ControlSchedule, Dirac, EnsembleState, OmegaGrid, simulate
from .brackets import descent_functional, descent_step, h1_seminorm
from .errors import DomainViolation, EpsTooLarge, NewtonDiverged, PreconditionError
from .fourier import pole_distance

HALF_PI = 0.5 * np.pi
CSV_COLUMNS = ("strategy", "N", "eps", "model_time", "pulses", "trips",
               "n_distance_before", "n_distance_after", "h1_before", "h1_after")


@dataclass(frozen=True)
class MatrixReport:
    matrix: np.ndarray
    determinant: float
    condition: float


def _moment(k: int, K: int) -> float:
    # sine-weighted rule (QAWO) handles the oscillation without roundoff warnings
    val, _ = integrate.quad(lambda w: w ** K, 0.0, HALF_PI, weight="sin", wvar=2 * k - 1,
                            epsabs=1e-14, epsrel=1e-13)
    return (2 * k - 1) * val


def build_matrix_A(N: int) -> MatrixReport:
    """``A[k-1, K] = int_0^{pi/2} (2k-1) sin((2k-1) w) w^K dw`` for ``k = 1..N``, ``K = 0..N-1``."""
    if N < 1:
        raise PreconditionError("N must be at least 1")
    A = np.array([[_moment(k, K) for K in range(N)] for k in range(1, N + 1)])
    det = float(np.linalg.det(A))
    if det == 0.0:
        raise PreconditionError("moment matrix is singular")
    return MatrixReport(A, det, float(np.linalg.cond(A)))


@dataclass(frozen=True)
class OrthoCoeffs:
    N: int
    eps: float
    alpha: np.ndarray
    a_eps: np.ndarray
    residual: float
    iterations: int
    residual_history: tuple = ()

    def x(self, w) -> np.ndarray:
        return profile(self.a_eps, self.N, w)

    def dx(self, w) -> np.ndarray:
        return profile_derivative(self.a_eps, self.N, w)


def profile(a, N: int, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    k = 2 * np.arange(1, N + 1) - 1
    return np.cos(np.multiply.outer(w, k)) @ np.asarray(a) + np.cos((2 * N + 1) * w)


def profile_derivative(a, N: int, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    k = 2 * np.arange(1, N + 1) - 1
    return -(np.sin(np.multiply.outer(w, k)) * k) @ np.asarray(a) - (2 * N + 1) * np.sin((2 * N + 1) * w)


def orthogonality_residuals(a, N: int, eps: float, nodes: int = 160) -> np.ndarray:
    """``int_0^{pi/2} x' / sqrt(1 - eps^2 x^2) w^K dw`` for ``K = 0..N-1`` (Gauss-Legendre)."""
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    w = HALF_PI * 0.5 * (gx + 1.0)
    wt = HALF_PI * 0.5 * gw
    x = profile(a, N, w)
    arg = 1.0 - (eps * x) ** 2
    if np.min(arg) <= 0.0:
        raise EpsTooLarge(f"eps * |x| reaches {eps * np.max(np.abs(x)):.4g} >= 1")
    g = profile_derivative(a, N, w) / np.sqrt(arg)
    powers = w[None, :] ** np.arange(N)[:, None]
    return powers @ (wt * g)


def _check_domain(a, N: int, eps: float) -> None:
    probe = np.linspace(0.0, HALF_PI, 2049)
    peak = eps * float(np.max(np.abs(profile(a, N, probe))))
    if peak >= 1.0:
        raise EpsTooLarge(f"eps * |x| reaches {peak:.4g} >= 1")


def newton_a_eps(N: int, eps: float, tol: float = 1e-12, max_iter: int = 50,
                 nodes: int = 160) -> OrthoCoeffs:
    """Coefficients ``a = alpha + b`` solving the orthogonality conditions at ``eps``.

    ``alpha`` solves the linearised problem ``A^T alpha = -B`` and ``b`` is
    found by damped Newton from zero with a forward-difference Jacobian;
    a step is halved (up to 20 times) until the residual decreases.

    Raises
    ------
    EpsTooLarge
        If ``eps |x| >= 1`` somewhere on ``[0, pi/2]``.
    NewtonDiverged
        If no damped step decreases the residual or ``max_iter`` is reached.
    """
    if eps < 0:
        raise PreconditionError("eps must be non-negative")
    A = build_matrix_A(N).matrix
    B = np.array([_moment(N + 1, K) for K in range(N)])
    alpha = np.linalg.solve(A.T, -B)
    _check_domain(alpha, N, eps)

    def F(b):
        return orthogonality_residuals(alpha + b, N, eps, nodes)

    b = np.zeros(N)
    f = F(b)
    res = float(np.max(np.abs(f)))
    history = [res]
    it = 0
    while res >= tol:
        if it >= max_iter:
            raise NewtonDiverged(f"residual {res:.3e} after {max_iter} Newton steps")
        J = np.empty((N, N))
        for j in range(N):
            h = 1e-6 * (1.0 + abs(b[j]))
            bp = b.copy()
            bp[j] += h
            J[:, j] = (F(bp) - f) / h
        step = np.linalg.solve(J, -f)
        lam = 1.0
        for _ in range(21):
            trial = b + lam * step
            try:
                _check_domain(alpha + trial, N, eps)
                f_trial = F(trial)
            except EpsTooLarge:
                f_trial = None
            if f_trial is not None and np.max(np.abs(f_trial)) < res:
                break
            lam *= 0.5
        else:
            raise NewtonDiverged(f"no damped step lowers the residual {res:.3e}")
        b, f = trial, f_trial
        res = float(np.max(np.abs(f)))
        history.append(res)
        it += 1
    return OrthoCoeffs(N, float(eps), alpha, alpha + b, res, it, tuple(history))


def romb_residuals(coeffs: OrthoCoeffs, grid: OmegaGrid) -> np.ndarray:
    """Orthogonality residuals on a uniform ``2**k + 1`` node grid by Romberg."""
    w = grid.nodes
    x = coeffs.x(w)
    g = coeffs.dx(w) / np.sqrt(1.0 - (coeffs.eps * x) ** 2)
    dx = w[1] - w[0]
    return np.array([integrate.romb(g * w ** K, dx) for K in range(coeffs.N)])


def build_m0(coeffs: OrthoCoeffs, grid: OmegaGrid, check_tol: float = 1e-8) -> EnsembleState:
    """``M0 = (eps x, 0, sqrt(1 - eps^2 x^2))`` on ``grid``.

    On a uniform ``2**k + 1`` grid spanning ``[0, pi/2]`` the orthogonality
    conditions are re-verified with Romberg integration.

    Raises
    ------
    DomainViolation
        If ``eps |x| >= 1`` on the grid or the re-verified residuals exceed
        ``check_tol``.
    """
    w = grid.nodes
    ex = coeffs.eps * coeffs.x(w)
    if np.max(np.abs(ex)) >= 1.0:
        raise DomainViolation("eps * |x| >= 1 on the grid")
    m = np.column_stack([ex, np.zeros_like(ex), np.sqrt(1.0 - ex ** 2)])
    n = len(grid)
    if (abs(w[0]) < 1e-12 and abs(w[-1] - HALF_PI) < 1e-12 and grid.is_uniform
            and n > 2 and (n - 1) & (n - 2) == 0):
        res = romb_residuals(coeffs, grid)
        if np.max(np.abs(res)) > check_tol:
            raise DomainViolation(f"orthogonality residual {np.max(np.abs(res)):.3e} on the grid")
    return EnsembleState(grid, m)


# ---------------------------------------------------------------------------
# strategies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonReport:
    strategy: str
    N: int
    eps: float
    model_time: float
    pulse_count: int
    trip_count: int
    n_distance_before: float
    n_distance_after: float
    h1_before: float
    h1_after: float

    def row(self) -> tuple:
        return (self.strategy, self.N, self.eps, self.model_time, self.pulse_count,
                self.trip_count, self.n_distance_before, self.n_distance_after,
                self.h1_before, self.h1_after)


def impulse_schedule(coeffs: OrthoCoeffs, start_pole: int = 1) -> ControlSchedule:
    """Two pi-pulses at ``2N+1`` and ``6N+3`` around ``2N`` coefficient impulses.

    Impulse ``m`` (at ``2N + 1 + 2m``) carries ``a_{N+1-m}`` for ``m <= N``
    and ``a_{m-N}`` above; amplitude ``start_pole * eps/2 * a`` about y.
    A state near the north pole is seen from the south after the first
    pi-pulse, which fixes the sign of the correction; ``start_pole = -1``
    gives the form for a state that starts near the south pole.
    """
    N, eps, a = coeffs.N, coeffs.eps, coeffs.a_eps
    k = 2 * N + 1
    events = [Dirac(float(k), np.pi, 0.0)]
    for m in range(1, 2 * N + 1):
        coef = a[N - m] if m <= N else a[m - N - 1]
        events.append(Dirac(float(k + 2 * m), 0.0, start_pole * eps / 2 * coef))
    events.append(Dirac(float(3 * k), np.pi, 0.0))
    return ControlSchedule(tuple(events), float(3 * k))


def full_period_state(coeffs: OrthoCoeffs, nodes: int = 1025) -> EnsembleState:
    """The same closed-form initial state on ``[-pi, pi]``."""
    grid = OmegaGrid.uniform(-np.pi, np.pi, nodes)
    ex = coeffs.eps * coeffs.x(grid.nodes)
    if np.max(np.abs(ex)) >= 1.0:
        raise DomainViolation("eps * |x| >= 1 on [-pi, pi]")
    return EnsembleState(grid, np.column_stack([ex, np.zeros_like(ex), np.sqrt(1.0 - ex ** 2)]))


def strategy_impulses(coeffs: OrthoCoeffs, nodes: int = 1025, n_max: int = 64) -> ComparisonReport:
    state = full_period_state(coeffs, nodes)
    sched = impulse_schedule(coeffs, start_pole=1)
    out = simulate(state, sched)
    before = pole_distance(state, 1, n_max).total
    after = pole_distance(out, 1, n_max).total
    half = build_m0(coeffs, OmegaGrid.uniform(0.0, HALF_PI, 1025))
    h_before = h1_seminorm(half)
    h_after = h1_seminorm(simulate(half, sched))
    return ComparisonReport("impulse", coeffs.N, coeffs.eps, sched.horizon, sched.pulse_count,
                            sched.trip_count(), before, after, h_before, h_after)


def strategy_brackets(coeffs: OrthoCoeffs, nodes: int = 1025, n_max: int = 64,
                      tau0: float = 1e-2) -> ComparisonReport:
    """One descent step along ``Q = -+ w^(N+1)``, the lowest degree the
    orthogonality conditions leave with a nonzero first variation."""
    N = coeffs.N
    half = build_m0(coeffs, OmegaGrid.uniform(0.0, HALF_PI, nodes))
    mono = Polynomial([0.0] * (N + 1) + [1.0])
    zero = Polynomial([0.0])
    slope = descent_functional(half, zero, mono)
    q = -mono if slope > 0 else mono
    out, sched, report = descent_step(half, polys=(zero, q), tau0=tau0)
    full = full_period_state(coeffs, 1025)
    before = pole_distance(full, 1, n_max).total
    after = pole_distance(simulate(full, sched), 1, n_max).total
    return ComparisonReport("brackets", N, coeffs.eps, sched.horizon, sched.pulse_count,
                            sched.trip_count(), before, after, report.h1_before, report.h1_after)


def strategy_comparison(N: int, eps: float, tol: float = 1e-12):
    """Run both strategies on the same initial state.

    Returns
    -------
    (ComparisonReport, ComparisonReport)
        Impulse halving first, bracket descent second.
    """
    coeffs = newton_a_eps(N, eps, tol)
    return strategy_impulses(coeffs), strategy_brackets(coeffs)

"""Invariant suite run by ``ensemble-ctl verify``.

Each check draws from its own generator spawned from one seed, so results
do not depend on the order or the number of threads used to run them.
Faults can be injected by name to confirm that a check is able to fail.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import bloch, brackets, compare, fourier, halving, linear, reach
from .bloch import (OMEGA_Y, ControlSchedule, Constant, Dirac,
                    EnsembleState, OmegaGrid, simulate, so3_exp)

FAULTS = ("drift_transpose", "pi_half")


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    seconds: float
    detail: str = ""


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator used for every random draw in the package."""
    return np.random.Generator(np.random.Philox(seed))


# ---------------------------------------------------------------------------
# checks: each returns (passed, measured, threshold, detail)
# ---------------------------------------------------------------------------

def _drift(omega, faults):
    R = so3_exp(np.multiply.outer(omega, bloch.E3))
    return np.swapaxes(R, -1, -2) if "drift_transpose" in faults else R


def check_drift_cancellation(rng, faults):
    w = rng.uniform(-10.0, 10.0, 200)
    angle = np.pi / 2 if "pi_half" in faults else np.pi
    worst = 0.0
    for axis in (bloch.E1, bloch.E2):
        P = so3_exp(angle * axis)
        lhs = P @ _drift(w, faults) @ P
        rhs = so3_exp(np.multiply.outer(-w, bloch.E3))
        worst = max(worst, float(np.max(np.linalg.norm(lhs - rhs, axis=(1, 2)))))
    return worst < 1e-12, worst, 1e-12, "200 frequencies, x and y axes"


def check_rotation_group(rng, faults):
    axes = rng.normal(size=(200, 3)) * rng.uniform(0, 10, (200, 1))
    R = so3_exp(axes)
    ortho = float(np.max(np.abs(R @ np.swapaxes(R, 1, 2) - np.eye(3))))
    det = float(np.max(np.abs(np.linalg.det(R) - 1)))
    m = max(ortho, det)
    return m < 1e-12, m, 1e-12, "orthogonality and unit determinant"


def _random_schedule(rng, n=6):
    t = 0.0
    events = []
    for _ in range(n):
        t += rng.uniform(0.1, 1.0)
        if rng.random() < 0.5:
            events.append(Dirac(t, rng.normal(), rng.normal()))
        else:
            t1 = t + rng.uniform(0.05, 0.5)
            events.append(Constant(t, t1, rng.normal(), rng.normal()))
            t = t1
    return ControlSchedule(tuple(events), t + rng.uniform(0, 1))


def check_norm_preservation(rng, faults):
    grid = OmegaGrid.uniform(0, np.pi, 257)
    out = simulate(EnsembleState.constant(grid, bloch.E3), _random_schedule(rng))
    dev = float(np.max(np.abs(np.linalg.norm(out.m, axis=1) - 1)))
    return dev < 1e-12, dev, 1e-12, "unit length after a random schedule"


def check_schedule_composition(rng, faults):
    grid = OmegaGrid.uniform(0, np.pi, 129)
    sched = _random_schedule(rng)
    s = rng.uniform(0, sched.horizon)
    first, second = sched.split(s)
    st = EnsembleState.constant(grid, bloch.E3)
    dev = float(np.max(np.abs(simulate(simulate(st, first), second).m - simulate(st, sched).m)))
    return dev < 1e-12, dev, 1e-12, f"split at t={s:.4f}"


def _trig_samples(rng, grid, modes=5):
    a = rng.normal(size=modes) + 1j * rng.normal(size=modes)
    return np.cos(np.outer(grid.nodes, np.arange(modes))) @ a


def check_norm_algebra(rng, faults):
    grid = OmegaGrid.uniform(0, np.pi, 1025)
    worst_sub = worst_sup = -np.inf
    for _ in range(20):
        f = _trig_samples(rng, grid)
        g = _trig_samples(rng, grid)
        nf = fourier.n_norm(fourier.even_extension_spectrum(f, grid, 32))
        ng = fourier.n_norm(fourier.even_extension_spectrum(g, grid, 32))
        nfg = fourier.n_norm(fourier.even_extension_spectrum(f * g, grid, 32))
        worst_sub = max(worst_sub, nfg - nf * ng)
        worst_sup = max(worst_sup, float(np.max(np.abs(f))) - nf)
    m = max(worst_sub, worst_sup)
    return m <= 1e-9, m, 1e-9, "N(fg) <= N(f)N(g) and sup|f| <= N(f)"


def check_halving(rng, faults):
    grid = OmegaGrid.uniform(0, np.pi, 1025)
    worst = 0.0
    for _ in range(3):
        Z = halving.random_even_transverse(rng, grid, 0.02 * rng.uniform(0.2, 0.99))
        st = EnsembleState.from_transverse(grid, Z, hemisphere=-1)
        for _ in range(3):
            st, rep = halving.halving_cycle(st)
            worst = max(worst, rep.ratio)
    return worst < 0.5, worst, 0.5, "3 states x 3 cycles, worst ratio"


def check_rectangle_limit(rng, faults):
    grid = OmegaGrid.uniform(0, np.pi, 513)
    st = EnsembleState.constant(grid, bloch.E3)
    sched = ControlSchedule((Dirac(0.0, np.pi, 0.0),), 1.0)
    exact = simulate(st, sched)
    eps = np.array([0.04, 0.02, 0.01])
    d = [fourier.n_distance(simulate(st, bloch.rectangularize(sched, e)), exact, 64) for e in eps]
    slope = float(np.polyfit(np.log(eps), np.log(d), 1)[0])
    ok = 0.8 <= slope <= 1.2 and d[0] > d[1] > d[2]
    return ok, slope, 1.0, "log-log slope of the N-distance"


def check_bracket_order(rng, faults):
    taus = np.array([1e-2, 1e-3, 1e-4, 1e-5])
    target = OMEGA_Y
    errs = []
    for tau in taus:
        U = brackets.endpoint_operator(brackets.bracket_schedule(1, tau, 1, "y"), np.array([1.0]))[0]
        errs.append(np.linalg.norm(U - np.eye(3) - tau * target))
    slope = float(np.polyfit(np.log(taus), np.log(errs), 1)[0])
    return 1.4 <= slope <= 1.6, slope, 1.5, "m=1 bracket error slope"


def check_descent(rng, faults):
    grid = brackets.default_grid()
    th = 0.1 * grid.nodes
    st = EnsembleState(grid, np.column_stack([np.sin(th), 0 * th, np.cos(th)]))
    _, _, rep = brackets.descent_step(st)
    return rep.h1_after < rep.h1_before, rep.h1_after - rep.h1_before, 0.0, "H1 change after one step"


def check_linear_endpoint(rng, faults):
    grid = OmegaGrid.uniform(0.01, np.pi, 257)
    c = complex(rng.normal(), rng.normal())
    T = rng.uniform(0.5, 3)
    w = grid.nodes
    exact = -c * (np.exp(1j * w * T) - 1) / (1j * w)
    got = linear.lin_endpoint(0.0, grid, linear.SampledControl.constant(c, 0, T, 65), T)
    err = float(np.max(np.abs(got - exact)))
    return err < 1e-12, err, 1e-12, "constant control against the closed form"


def _admissible_control(rng, T, n=257):
    t = np.linspace(0, T, n)
    modes = rng.normal(size=(3, 2))
    w = sum((a + 1j * b) * np.cos(k * np.pi * t / T) for k, (a, b) in enumerate(modes))
    ctl = linear.SampledControl(0, T, w)
    scale = rng.uniform(0.2, 0.9) * reach.admissible_radius(T) / ctl.l2_norm()
    return ctl.scaled(scale)


def check_mild_bounds(rng, faults):
    T = 1.0
    worst = -np.inf
    for _ in range(5):
        ctl = _admissible_control(rng, T)
        sol = reach.fixed_point_solve(ctl, T, n_omega=81)
        norm = ctl.l2_norm()
        worst = max(worst, sol.sup_norm() - math.sqrt(T) * norm,
                    float(np.max(sol.window_l2())) - 2 * math.sqrt(2 * np.pi) * norm)
        ratios = sol.contraction_ratios()
        if ratios.size > 2:
            worst = max(worst, float(np.max(ratios[:-1])) - reach.LIPSCHITZ_C * math.sqrt(T) * norm * 1.1)
    return worst <= 1e-8, worst, 1e-8, "sup, window L2 and contraction bounds"


def check_mild_lipschitz(rng, faults):
    T = 1.0
    worst = -np.inf
    omega = np.linspace(-40, 40, 41)
    for _ in range(20):
        a = _admissible_control(rng, T)
        b = _admissible_control(rng, T)
        za = reach.fixed_point_solve(a, T, omega=omega).Z
        zb = reach.fixed_point_solve(b, T, omega=omega).Z
        diff = linear.SampledControl(0, T, a.samples - b.samples).l2_norm()
        worst = max(worst, float(np.max(np.abs(za - zb))) - 2 * math.sqrt(T) * diff)
    return worst <= 1e-10, worst, 1e-10, "20 random control pairs"


def check_phi(rng, faults):
    T = rng.uniform(0.5, 2)
    ones = np.ones(2)
    outside = max(abs(reach.phi_w(ones, x, T)) for x in (-0.3, 0.0, 2 * T, 2.5 * T))
    err = abs(reach.phi_w(ones, 1.5 * T, T) - T * T / 16)
    m = max(outside, err)
    return m < 1e-12, m, 1e-12, "support and Phi(3T/2) = T^2/16"


def check_cauchy_riemann(rng, faults):
    sched = ControlSchedule((Constant(0, 1, 1, 0),), 1.0)
    o1, o2 = np.linspace(0, 3, 16), np.linspace(-0.5, 0.5, 5)
    r1 = reach.cauchy_riemann_check(sched, o1, o2, 1e-3).max_residual
    r2 = reach.cauchy_riemann_check(sched, o1, o2, 5e-4).max_residual
    ok = r1 < 1e-4 and 3.5 <= r1 / r2 <= 4.5
    return ok, r1, 1e-4, f"refinement ratio {r1 / r2:.3f}"


def check_moment_matrix(rng, faults):
    dets = [abs(compare.build_matrix_A(N).determinant) for N in range(1, 9)]
    return min(dets) > 1e-10, min(dets), 1e-10, "smallest |det A| for N <= 8"


def check_newton(rng, faults):
    N = int(rng.integers(1, 5))
    eps = float(rng.uniform(0.01, 0.1))
    c = compare.newton_a_eps(N, eps, 1e-12)
    again = float(np.max(np.abs(compare.orthogonality_residuals(c.a_eps, N, eps, 320))))
    hist = np.asarray(c.residual_history)
    monotone = bool(np.all(np.diff(hist) < 0))
    return again < 1e-10 and monotone, again, 1e-10, f"N={N}, eps={eps:.3f}"


CHECKS = {
    "drift_cancellation": check_drift_cancellation,
    "rotation_group": check_rotation_group,
    "norm_preservation": check_norm_preservation,
    "schedule_composition": check_schedule_composition,
    "norm_algebra": check_norm_algebra,
    "halving_contraction": check_halving,
    "rectangle_limit": check_rectangle_limit,
    "bracket_order": check_bracket_order,
    "descent_decrease": check_descent,
    "linear_endpoint": check_linear_endpoint,
    "mild_bounds": check_mild_bounds,
    "mild_lipschitz": check_mild_lipschitz,
    "phi_support": check_phi,
    "cauchy_riemann": check_cauchy_riemann,
    "moment_matrix": check_moment_matrix,
    "newton_residual": check_newton,
}


def _run_one(name, fn, seed_seq, faults) -> CheckResult:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    t0 = time.perf_counter()
    try:
        ok, measured, threshold, detail = fn(rng, faults)
    except Exception as exc:  # a crash is a failed check, not a crashed suite
        return CheckResult(name, False, float("nan"), float("nan"),
                           time.perf_counter() - t0, f"{type(exc).__name__}: {exc}")
    return CheckResult(name, bool(ok), float(measured), float(threshold),
                       time.perf_counter() - t0, detail)


def run_suite(seed: int = 0, faults=(), only=None, threads: int = 1) -> list:
    """Run the checks and return one :class:`CheckResult` per check.

    Parameters
    ----------
    faults : iterable of str
        Names from :data:`FAULTS`.
    only : iterable of str, optional
        Subset of :data:`CHECKS` to run.
    """
    faults = frozenset(faults)
    unknown = faults - set(FAULTS)
    if unknown:
        raise ValueError(f"unknown faults: {sorted(unknown)}")
    names = list(CHECKS) if only is None else [n for n in CHECKS if n in set(only)]
    seeds = np.random.SeedSequence(seed).spawn(len(CHECKS))
    by_name = dict(zip(CHECKS, seeds))
    jobs = [(n, CHECKS[n], by_name[n], faults) for n in names]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda j: _run_one(*j), jobs))
    return [_run_one(*j) for j in jobs]

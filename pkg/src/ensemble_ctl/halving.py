"""Impulse schedules that halve the distance to the south pole.

Near ``-e3`` on ``(0, pi)`` a cycle of ``2k + 1`` impulses over time ``3k``
cancels every Fourier mode of ``Z`` with ``|n| < k``:

* a pi-pulse about x at time ``k`` flips the ensemble to the north cap,
* impulses at ``k + p`` (``p = 1..2k-1``) remove ``conj(c_{p-k})``,
* a second pi-pulse at ``3k`` flips it back.

What survives is the tail ``|n| >= k`` plus a quadratic remainder, so a
``k`` whose tail carries less than a quarter of the norm roughly halves it.

The mode bookkeeping above relies on free evolution acting as a shift of
Fourier indices, which is true for an ensemble over the full period
``[-pi, pi]`` but not for the even extension of an ensemble over
``[0, pi]`` (there ``exp(i k |w|)`` has norm well above one).  States on a
``[0, pi]`` grid are therefore mirrored to ``[-pi, pi]`` first and the
cycles run on that lift; the physical half is recovered with
:func:`ensemble_ctl.bloch.restrict_nonnegative`.  At the start the two
norms coincide, and the lifted norm always bounds the sup norm of ``Z`` on
``[0, pi]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bloch import ControlSchedule, Dirac, EnsembleState, apply_dirac, lift_even, simulate
from .errors import (ContractionFailed, MaxCyclesExceeded, NoValidK,
                     PreconditionViolated, ZeroSpectrum)
from .fourier import (DEFAULT_N_MAX, Spectrum, even_extension_spectrum, full_spectrum,
                      is_full_period, n_norm)


@dataclass(frozen=True)
class HalvingConfig:
    delta: float = 0.02
    tail_fraction: float = 0.25
    n_max: int = DEFAULT_N_MAX
    z_guard: float = 0.5


@dataclass(frozen=True)
class CycleReport:
    k: int
    n_before: float
    n_after: float
    z_extreme_before: float
    z_extreme_after: float
    pulse_count: int
    elapsed_model_time: float

    @property
    def ratio(self) -> float:
        return self.n_after / self.n_before if self.n_before > 0 else 0.0


CSV_COLUMNS = ("cycle", "k", "n_before", "n_after", "z_min", "pulses", "model_time")


def choose_k(spectrum: Spectrum, config: HalvingConfig = HalvingConfig()) -> int:
    """Smallest ``k >= 1`` whose tail ``sum_{|n|>=k} |c_n|`` is below ``tail_fraction * N``.

    Raises
    ------
    ZeroSpectrum
        If every coefficient vanishes.
    NoValidK
        If no ``k <= n_max`` qualifies, or the truncation tail estimate is
        not below ``tail_fraction * N / 2``.
    """
    total = n_norm(spectrum)
    if total == 0.0:
        raise ZeroSpectrum("spectrum is identically zero")
    bound = config.tail_fraction * total
    if not spectrum.tail_estimate < bound / 2:
        raise NoValidK(f"truncation tail {spectrum.tail_estimate:.3e} is not below {bound / 2:.3e}; "
                       f"increase n_max")
    mags = np.abs(spectrum.coefficients)
    n_max = spectrum.n_max
    # tail[k] = sum_{|n| >= k} |c_n|, accumulated from the outside in
    pair = mags[n_max:] + mags[n_max::-1]
    pair[0] = mags[n_max]
    tail = np.cumsum(pair[::-1])[::-1]
    for k in range(1, n_max + 1):
        if tail[k] < bound:
            return k
    # k = n_max + 1 leaves nothing of the retained spectrum but exceeds the schedule bookkeeping
    raise NoValidK(f"no k <= {n_max} leaves a tail below {bound:.3e}")


def build_halving_schedule(spectrum: Spectrum, k: int) -> ControlSchedule:
    """Impulses for one cycle; ``2k + 1`` events on ``[0, 3k]``."""
    if k < 1:
        raise PreconditionViolated("k must be at least 1")
    events = [Dirac(float(k), np.pi, 0.0)]
    for p in range(1, 2 * k):
        c = spectrum[p - k]
        events.append(Dirac(float(k + p), -c.imag, -c.real))
    events.append(Dirac(float(3 * k), np.pi, 0.0))
    return ControlSchedule(tuple(events), float(3 * k))


def lifted(state: EnsembleState) -> EnsembleState:
    """Return the state on a ``[-pi, pi]`` grid, mirroring a ``[0, pi]`` one."""
    if is_full_period(state.grid):
        return state
    w = state.omega
    if abs(w[0]) > 1e-12 or abs(w[-1] - np.pi) > 1e-12:
        raise PreconditionViolated("halving needs a grid on [0, pi] or [-pi, pi]")
    return lift_even(state)


def transverse_norm(state: EnsembleState, n_max: int = DEFAULT_N_MAX) -> float:
    """``N(Z)`` of the (lifted) state."""
    st = lifted(state)
    return n_norm(full_spectrum(st.transverse, st.grid, n_max))


def halving_cycle(state: EnsembleState, config: HalvingConfig = HalvingConfig()):
    """Run one cycle and check that it delivered.

    Parameters
    ----------
    state : EnsembleState
        On ``[0, pi]`` (mirrored before use) or on ``[-pi, pi]``.

    Returns
    -------
    (EnsembleState, CycleReport)
        The state is returned on the ``[-pi, pi]`` grid.

    Raises
    ------
    PreconditionViolated
        If ``z >= -z_guard`` somewhere or ``N(Z) >= delta``.
    ContractionFailed
        If the cycle did not halve ``N(Z)`` or left the southern cap.
    """
    state = lifted(state)
    z_top = float(np.max(state.z))
    if not z_top < -config.z_guard:
        raise PreconditionViolated(f"max z = {z_top:.6g} is not below {-config.z_guard:g}")
    spec = full_spectrum(state.transverse, state.grid, config.n_max)
    n0 = n_norm(spec)
    if not n0 < config.delta:
        raise PreconditionViolated(f"N(Z) = {n0:.6g} is not below delta = {config.delta:g}")
    if n0 == 0.0:
        return state, CycleReport(0, 0.0, 0.0, z_top, z_top, 0, 0.0)
    k = choose_k(spec, config)
    sched = build_halving_schedule(spec, k)
    out = simulate(state, sched)
    n1 = n_norm(full_spectrum(out.transverse, out.grid, config.n_max))
    z_after = float(np.max(out.z))
    report = CycleReport(k, n0, n1, z_top, z_after, sched.pulse_count, sched.horizon)
    if not (n1 < 0.5 * n0 and z_after < -config.z_guard):
        raise ContractionFailed(f"cycle with k={k} gave N {n0:.3e} -> {n1:.3e}, max z {z_after:.4f}")
    return out, report


def drive_to_pole(state: EnsembleState, config: HalvingConfig = HalvingConfig(),
                  tol: float = 1e-8, max_cycles: int = 40):
    """Repeat :func:`halving_cycle` until ``N(Z) < tol``.

    Returns
    -------
    (EnsembleState, list of CycleReport)
        The final state lives on the ``[-pi, pi]`` grid.

    Raises
    ------
    MaxCyclesExceeded
        Carries the partial ``reports`` and the last ``state``.
    """
    reports = []
    state = lifted(state)
    while True:
        n = n_norm(full_spectrum(state.transverse, state.grid, config.n_max))
        if n < tol:
            return state, reports
        if len(reports) >= max_cycles:
            raise MaxCyclesExceeded(f"N(Z) = {n:.3e} after {max_cycles} cycles", reports, state)
        state, rep = halving_cycle(state, config)
        reports.append(rep)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

@dataclass
class JumpConstants:
    """Measured constants of the single-impulse estimate near the north pole.

    ``c_linear`` bounds ``N(Z+ - Z0 + d0) / (|d0| * max(|d0|, N(Z0)))`` and
    ``c_floor`` bounds ``(z0 - z+) / (|d0| * max(|d0|, N(Z0)))``.
    """

    c_linear: float
    c_floor: float
    samples: int
    ratios: list = field(default_factory=list, repr=False)


def random_even_transverse(rng: np.random.Generator, grid, norm: float, modes: int = 6) -> np.ndarray:
    """Random ``Z = sum_j a_j cos(j w)`` with absolute-sum norm ``norm``."""
    a = rng.normal(size=modes + 1) + 1j * rng.normal(size=modes + 1)
    a *= rng.random(modes + 1) < 0.7
    if not np.any(a):
        a[0] = 1.0
    a *= norm / np.sum(np.abs(a))
    return np.cos(np.outer(grid.nodes, np.arange(modes + 1))) @ a


def measure_jump_constants(rng: np.random.Generator, grid, samples: int = 100,
                           bound: float = 0.05, n_max: int = DEFAULT_N_MAX) -> JumpConstants:
    """Sample impulses ``d0`` and states near ``+e3`` and record the worst ratios."""
    worst_lin = worst_floor = 0.0
    ratios = []
    for _ in range(samples):
        nz = bound * rng.random()
        z0 = random_even_transverse(rng, grid, max(nz, 1e-6), modes=int(rng.integers(0, 6)))
        d0 = bound * rng.random() * np.exp(2j * np.pi * rng.random())
        state = EnsembleState.from_transverse(grid, z0, hemisphere=1)
        n0 = n_norm(even_extension_spectrum(z0, grid, n_max))
        after = apply_dirac(state, d0.imag, -d0.real)
        scale = abs(d0) * max(abs(d0), n0)
        resid = n_norm(even_extension_spectrum(after.transverse - z0 + d0, grid, n_max))
        lin = resid / scale
        floor = float(np.max(state.z - after.z)) / scale
        ratios.append((lin, floor))
        worst_lin = max(worst_lin, lin)
        worst_floor = max(worst_floor, floor)
    return JumpConstants(worst_lin, worst_floor, samples, ratios)

import numpy as np
import pytest

from ensemble_ctl.bloch import Dirac, EnsembleState, OmegaGrid, apply_dirac, free_evolve, lift_even
from ensemble_ctl.errors import (MaxCyclesExceeded, NoValidK, PreconditionViolated, ZeroSpectrum)
from ensemble_ctl.fourier import Spectrum
from ensemble_ctl.halving import (HalvingConfig, build_halving_schedule, choose_k, drive_to_pole,
                                  halving_cycle, measure_jump_constants, random_even_transverse,
                                  transverse_norm)

GRID = OmegaGrid.uniform(0.0, np.pi, 1025)


def south_state(Z, grid=GRID):
    return EnsembleState.from_transverse(grid, Z, hemisphere=-1)


def test_choose_k_examples():
    assert choose_k(Spectrum.from_dict({0: 0.008, 1: 0.001, -1: 0.001}, 8)) == 1
    assert choose_k(Spectrum.from_dict({1: 0.005, -1: 0.005}, 8)) == 2
    with pytest.raises(ZeroSpectrum):
        choose_k(Spectrum(np.zeros(9)))


def test_choose_k_needs_certified_tail():
    s = Spectrum(np.ones(9), tail_estimate=10.0)
    with pytest.raises(NoValidK):
        choose_k(s)
    with pytest.raises(NoValidK):
        choose_k(Spectrum(np.ones(3)))
    assert choose_k(Spectrum(np.ones(9))) == 4


def test_schedule_unrolling():
    s = build_halving_schedule(Spectrum.from_dict({0: 0.3 + 0.4j}), 1)
    assert s.events == (Dirac(1, np.pi, 0), Dirac(2, -0.4, -0.3), Dirac(3, np.pi, 0))
    s = build_halving_schedule(Spectrum.from_dict({1: 0.005, -1: 0.005}), 2)
    assert [e.time for e in s.events] == [2, 3, 4, 5, 6]
    assert s.events[1].gamma == -0.005 and s.events[2] == Dirac(4, 0.0, -0.0)
    assert s.horizon == 6 and s.pulse_count == 5
    with pytest.raises(PreconditionViolated):
        build_halving_schedule(s, 0)


def test_schedule_structure_for_any_k(rng):
    for k in range(1, 7):
        spec = Spectrum(rng.normal(size=2 * k + 1) * 1e-3)
        s = build_halving_schedule(spec, k)
        assert s.pulse_count == 2 * k + 1
        assert [e.time for e in s.events] == list(range(k, 3 * k + 1))


def test_cosine_example():
    Z = 0.01 * np.cos(GRID.nodes)
    out, rep = halving_cycle(south_state(Z))
    assert rep.k == 2 and rep.n_before == pytest.approx(0.01, rel=1e-6)
    assert rep.n_after < 0.005 and rep.z_extreme_after < -0.5
    assert rep.elapsed_model_time == 3 * rep.k and len(out.grid) == 2 * len(GRID) - 1


def test_single_coefficient_example():
    out, rep = halving_cycle(south_state(np.full(len(GRID), 0.01j)))
    assert rep.k == 1 and rep.n_after < 0.005


def test_zero_state_is_fixed_point():
    st0 = EnsembleState.constant(GRID, [0, 0, -1])
    out, rep = halving_cycle(st0)
    assert rep.n_before == rep.n_after == 0 and np.array_equal(out.z, lift_even(st0).z)


def test_preconditions():
    with pytest.raises(PreconditionViolated, match="max z"):
        halving_cycle(EnsembleState.from_transverse(GRID, 0.01, hemisphere=1))
    with pytest.raises(PreconditionViolated, match="delta"):
        halving_cycle(south_state(np.full(len(GRID), 0.1)))
    with pytest.raises(PreconditionViolated):
        halving_cycle(EnsembleState.constant(OmegaGrid.uniform(0, 1, 5), [0, 0, -1]))


def test_pi_pulse_conjugation():
    st0 = lift_even(south_state(0.01 * np.exp(1j * GRID.nodes) * np.cos(GRID.nodes)))
    before = free_evolve(st0, 2.0)
    after = apply_dirac(before, np.pi, 0.0)
    np.testing.assert_allclose(after.transverse, np.conj(before.transverse), atol=1e-15)
    np.testing.assert_allclose(after.z, -before.z, atol=1e-15)


def test_random_contraction(rng):
    for _ in range(20):
        Z = random_even_transverse(rng, GRID, rng.uniform(1e-3, 0.02))
        _, rep = halving_cycle(south_state(Z))
        assert rep.ratio < 0.5


def test_drive_to_pole_cosine():
    st0 = south_state(0.01 * np.cos(GRID.nodes))
    out, reps = drive_to_pole(st0, tol=1e-5)
    assert len(reps) <= 10
    assert transverse_norm(out) < 1e-5
    assert np.max(np.linalg.norm(out.m - [0, 0, -1], axis=1)) < 3e-5 + 1e-9
    assert all(r.n_after < r.n_before / 2 for r in reps)


def test_drive_to_pole_edge_cases():
    st0 = EnsembleState.constant(GRID, [0, 0, -1])
    _, reps = drive_to_pole(st0, tol=1e-5)
    assert reps == []
    with pytest.raises(MaxCyclesExceeded) as exc:
        drive_to_pole(south_state(0.01 * np.cos(GRID.nodes)), max_cycles=0)
    assert exc.value.reports == []


def test_jump_constants_bounded(rng):
    g = OmegaGrid.uniform(0, np.pi, 257)
    jc = measure_jump_constants(rng, g, samples=100, n_max=64)
    assert jc.c_linear < 20 and jc.c_floor < 20
    assert len(jc.ratios) == 100


def test_config_tail_fraction_changes_k():
    spec = Spectrum.from_dict({0: 0.006, 1: 0.002, -1: 0.002}, 8)
    assert choose_k(spec, HalvingConfig(tail_fraction=0.45)) == 1
    assert choose_k(spec, HalvingConfig(tail_fraction=0.1)) == 2

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_ensemble
from thermobin.binning import (
    Binning, SolverConfig, brute_force, cut_boundaries, dp_exact, lloyd_max, ratio_landscape, solve,
)
from thermobin.errors import ConfigError, InstanceTooLarge, NoConvergence, TooManyBins
from thermobin.fisher import binned_fisher, thermal_fisher
from thermobin.ising2d import enumerate_dos
from thermobin.models import bosonic_spectrum, n_qubit_spectrum
from thermobin.spectra import DiscreteSpectrum, GaussianDOS, LinearDOS, ThermalEnsemble

INF = math.inf


def _lm(ens, d, starts=1, **kw):
    return lloyd_max(ens, SolverConfig(d=d, num_starts=starts, **kw))


def _enumerate_best(ens, d):
    """Oracle: score every consecutive cut set directly from level masses."""
    q, E = ens.probabilities, ens.energies
    mu = float(np.dot(q, E))
    best, arg = -1.0, None
    for cuts in itertools.combinations(range(1, E.size), d - 1):
        edges = (0,) + cuts + (E.size,)
        s = sum(
            np.dot(q[a:b], E[a:b] - mu) ** 2 / q[a:b].sum() for a, b in zip(edges[:-1], edges[1:])
        )
        if s > best + 1e-14 * (1 + best):
            best, arg = s, cuts
    return ens.beta**4 * best, arg


def test_gaussian_two_bins_cut_at_mean():
    ens = ThermalEnsemble(GaussianDOS(0.0, 1.0), 1.0)
    b, rec = _lm(ens, 2)
    assert b.boundaries[1] == pytest.approx(ens.mean, abs=1e-8)
    assert b.ratio == pytest.approx(2 / math.pi, abs=1e-10)
    assert rec.all_converged


def test_linear_dos_two_bins():
    b, _ = _lm(ThermalEnsemble(LinearDOS(), 1.0), 2)
    assert b.boundaries[1] == pytest.approx(2.58975, abs=1e-4)


def test_linear_dos_eight_bins():
    b, _ = _lm(ThermalEnsemble(LinearDOS(), 1.0), 8, starts=4)
    assert b.ratio == pytest.approx(0.97, abs=0.01)


def test_n_qubit_three_bins():
    ens = ThermalEnsemble(n_qubit_spectrum(170), 0.6)
    b, _ = _lm(ens, 3, starts=8)
    assert b.ratio == pytest.approx(0.82, abs=0.01)


def test_single_bin_has_no_information():
    ens = random_ensemble(np.random.default_rng(0), 6)
    assert dp_exact(ens, 1).coarse_C == 0.0


def test_full_resolution_recovers_thermal_fisher():
    ens = random_ensemble(np.random.default_rng(1), 9)
    assert dp_exact(ens, 9).coarse_C == pytest.approx(thermal_fisher(ens), rel=1e-12)


def test_five_level_two_bins_against_enumeration():
    ens = ThermalEnsemble(DiscreteSpectrum([0, 1, 2, 3, 4]), 1.0)
    C, cuts = _enumerate_best(ens, 2)
    b = dp_exact(ens, 2)
    assert b.coarse_C == pytest.approx(C, rel=1e-13)
    assert tuple(b.cuts[1:-1]) == cuts
    assert brute_force(ens, 2).coarse_C == pytest.approx(C, rel=1e-13)


def test_four_qubits_two_bins_against_enumeration():
    ens = ThermalEnsemble(n_qubit_spectrum(4), 0.6)
    C, cuts = _enumerate_best(ens, 2)
    assert dp_exact(ens, 2).coarse_C == pytest.approx(C, rel=1e-13)
    assert tuple(brute_force(ens, 2).cuts[1:-1]) == cuts


def test_dp_equals_brute_force_on_random_spectra():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(2, 13))
        d = int(rng.integers(1, min(n, 4) + 1))
        ens = random_ensemble(rng, n)
        a, b = dp_exact(ens, d), brute_force(ens, d)
        assert a.coarse_C == pytest.approx(b.coarse_C, rel=1e-12, abs=1e-300)


def test_nonconsecutive_conjecture_probe(capsys):
    rng = np.random.default_rng(99)
    counterexamples = 0
    for _ in range(40):
        ens = random_ensemble(rng, int(rng.integers(3, 9)))
        d = int(rng.integers(2, 4))
        gen = brute_force(ens, d, allow_nonconsecutive=True)
        con = brute_force(ens, d)
        assert gen.coarse_C >= con.coarse_C * (1 - 1e-12)
        if gen.coarse_C > con.coarse_C * (1 + 1e-10):
            counterexamples += 1
    # logged rather than asserted: consecutive optimality is only conjectured
    print(f"nonconsecutive improvements found: {counterexamples}")


def test_dp_tie_break_prefers_smallest_cuts():
    ens = ThermalEnsemble(DiscreteSpectrum([0, 1, 2]), 0.0)
    # cutting after level 0 or after level 1 scores the same by symmetry
    assert list(dp_exact(ens, 2).cuts[1:-1]) == [1]


def test_too_many_bins():
    ens = random_ensemble(np.random.default_rng(3), 4)
    with pytest.raises(TooManyBins):
        dp_exact(ens, 5)
    with pytest.raises(TooManyBins):
        _lm(ens, 5)


def test_instance_too_large():
    ens = ThermalEnsemble(n_qubit_spectrum(200), 0.6)
    with pytest.raises(InstanceTooLarge):
        brute_force(ens, 5)
    with pytest.raises(InstanceTooLarge):
        brute_force(random_ensemble(np.random.default_rng(0), 12), 4, allow_nonconsecutive=True)


def test_no_convergence_carries_partial_result():
    ens = ThermalEnsemble(LinearDOS(), 1.0)
    with pytest.raises(NoConvergence) as info:
        _lm(ens, 4, max_iters=2)
    binning, record = info.value.partial
    assert isinstance(binning, Binning) and not record.all_converged


def test_solver_config_validation():
    for kw in ({"d": 0}, {"d": 2, "rel_tol": 0}, {"d": 2, "num_starts": 0}, {"d": 2, "mode": "magic"}):
        with pytest.raises(ConfigError):
            SolverConfig(**kw)


def test_solve_dispatch():
    ens = ThermalEnsemble(n_qubit_spectrum(20), 0.6)
    a, _ = solve(ens, SolverConfig(d=3, mode="dp_exact"))
    b, _ = solve(ens, SolverConfig(d=3, mode="brute_force"))
    c, rec = solve(ens, SolverConfig(d=3, mode="lloyd_max", num_starts=4))
    assert a.coarse_C == pytest.approx(b.coarse_C, rel=1e-13)
    assert c.coarse_C == pytest.approx(a.coarse_C, rel=1e-6)
    assert rec.as_dict()["starts"] == 4


def test_binning_invariants():
    for ens in (ThermalEnsemble(GaussianDOS(1, 2), 0.5), ThermalEnsemble(n_qubit_spectrum(50), 0.4)):
        b, _ = _lm(ens, 5, starts=3)
        assert b.p.sum() == pytest.approx(1.0, abs=1e-10)
        assert np.all(np.diff(b.eps) > 0)
        assert np.all(b.eps >= b.boundaries[:-1]) and np.all(b.eps <= b.boundaries[1:])


@pytest.mark.parametrize("ens", [
    ThermalEnsemble(GaussianDOS(0, 1), 1.0),
    ThermalEnsemble(LinearDOS(), 0.7),
    ThermalEnsemble(n_qubit_spectrum(120), 0.6),
], ids=["gaussian", "linear", "qubits"])
def test_optimum_is_monotone_in_d(ens):
    prev = 0.0
    for d in range(1, 9):
        if d == 1:
            C = 0.0
        elif ens.is_discrete:
            C = dp_exact(ens, d).coarse_C
        else:
            C = _lm(ens, d, starts=4)[0].coarse_C
        assert C >= prev - 1e-12
        prev = C


@pytest.mark.parametrize("ens", [
    ThermalEnsemble(GaussianDOS(0, 1), 1.0),
    ThermalEnsemble(LinearDOS(), 2.0),
    ThermalEnsemble(n_qubit_spectrum(80), 0.5),
], ids=["gaussian", "linear", "qubits"])
@pytest.mark.parametrize("d", [2, 3, 6])
def test_converged_output_is_a_fixed_point(ens, d):
    b, rec = _lm(ens, d, starts=3)
    assert rec.all_converged
    eps = b.eps
    mids = 0.5 * (eps[:-1] + eps[1:])
    inner = b.boundaries[1:-1]
    if ens.is_discrete:
        # each midpoint must fall inside the level gap holding its boundary
        E = ens.energies
        inner_cuts = b.cuts[1:-1]
        lo, hi = E[inner_cuts - 1], E[inner_cuts]
        dist = np.maximum(lo - mids, 0) + np.maximum(mids - hi, 0)
        assert dist.max() / ens.std <= 1e-10
    else:
        assert np.max(np.abs(inner - mids)) / ens.std <= 1e-9


def _model_spectra():
    rng = np.random.default_rng(5)
    cases = [ThermalEnsemble(n_qubit_spectrum(int(N)), float(beta))
             for N, beta in zip(rng.integers(10, 200, size=12), rng.uniform(0.2, 2.0, size=12))]
    cases += [ThermalEnsemble(bosonic_spectrum(M, 1.0, b), b) for M in (1, 4, 16) for b in (0.1, 0.4, 0.7, 1.5)]
    dos = enumerate_dos(4)
    cases += [dos.ensemble(b) for b in (0.2, 0.44, 0.8)]
    return [e for e in cases if e.spectrum.n_levels <= 200]


def test_lloyd_max_matches_dp_on_model_spectra():
    for ens in _model_spectra():
        for d in (2, 3, 4, 6, 8):
            if d > ens.spectrum.n_levels:
                continue
            lm, _ = _lm(ens, d, starts=8)
            assert lm.coarse_C == pytest.approx(dp_exact(ens, d).coarse_C, rel=1e-6)


def test_lloyd_max_never_beats_dp():
    rng = np.random.default_rng(6)
    for _ in range(40):
        ens = random_ensemble(rng, int(rng.integers(5, 120)))
        for d in (2, 3, 5):
            lm, _ = _lm(ens, d, starts=8)
            assert lm.coarse_C <= dp_exact(ens, d).coarse_C * (1 + 1e-12)


def test_lloyd_max_two_bins_is_global_on_any_spectrum():
    # with a single cut the polish step scans every gap
    rng = np.random.default_rng(7)
    for _ in range(50):
        ens = random_ensemble(rng, int(rng.integers(3, 150)))
        lm, _ = _lm(ens, 2)
        assert lm.coarse_C == pytest.approx(dp_exact(ens, 2).coarse_C, rel=1e-12)


@pytest.mark.xfail(strict=True, reason="snapped Lloyd-Max has spurious fixed points on irregular spectra")
def test_lloyd_max_matches_dp_on_arbitrary_spectra():
    rng = np.random.default_rng(9)
    for _ in range(60):
        ens = random_ensemble(rng, int(rng.integers(5, 200)))
        for d in (3, 4, 6, 8):
            lm, _ = _lm(ens, d, starts=8)
            assert lm.coarse_C == pytest.approx(dp_exact(ens, d).coarse_C, rel=1e-6)


@given(st.integers(0, 10**6), st.floats(0.01, 0.99))
def test_moving_boundary_inside_gap_changes_nothing(seed, frac):
    rng = np.random.default_rng(seed)
    ens = random_ensemble(rng, int(rng.integers(3, 10)))
    E = ens.energies
    cuts = np.sort(rng.choice(np.arange(1, E.size), size=min(2, E.size - 1), replace=False))
    a = cut_boundaries(E, cuts)
    b = a.copy()
    b[1:-1] = E[cuts - 1] + frac * (E[cuts] - E[cuts - 1])
    ra, rb = binned_fisher(ens, a), binned_fisher(ens, b)
    assert np.array_equal(ra.p, rb.p)
    assert np.array_equal(ra.eps, rb.eps)
    assert ra.coarse_C == rb.coarse_C


def test_lloyd_max_is_deterministic():
    ens = ThermalEnsemble(LinearDOS(), 1.0)
    a, _ = _lm(ens, 5, starts=5, seed=3)
    b, _ = _lm(ens, 5, starts=5, seed=3)
    assert np.array_equal(a.boundaries, b.boundaries)


def test_qubit_landscape_peaks_near_mean():
    N, beta = 170, 0.6
    ens = ThermalEnsemble(n_qubit_spectrum(N), beta)
    grid = np.arange(20, 60) + 0.5
    r = ratio_landscape(ens, 2, grid)
    assert abs(grid[np.argmax(r)] - ens.mean) <= 1.0
    assert r.max() == pytest.approx(0.64, abs=0.01)
    assert r.max() <= dp_exact(ens, 2).ratio + 1e-12


def test_gaussian_landscape_is_symmetric():
    ens = ThermalEnsemble(GaussianDOS(0.0, 1.0), 1.0)
    x = np.linspace(0.1, 3, 30)
    left = ratio_landscape(ens, 2, ens.mean - x)
    right = ratio_landscape(ens, 2, ens.mean + x)
    np.testing.assert_allclose(left, right, rtol=1e-10)


def test_linear_landscape_maximum():
    step = 0.01
    grid = np.arange(0.5, 6.0 + step / 2, step)
    r = ratio_landscape(ThermalEnsemble(LinearDOS(), 1.0), 2, grid)
    assert abs(grid[np.argmax(r)] - 2.59) <= step


def test_landscape_in_two_dimensions():
    ens = ThermalEnsemble(GaussianDOS(0.0, 1.0), 1.0)
    g = np.linspace(-2.5, 0.5, 31)
    r = ratio_landscape(ens, 3, [g, g])
    assert np.isnan(r[5, 2]) and np.nanmax(r) <= _lm(ens, 3, starts=4)[0].ratio + 1e-3

import math

import numpy as np
import pytest
from scipy import integrate, special

from thermobin.binning import SolverConfig, brute_force, dp_exact, lloyd_max
from thermobin.errors import ConfigError, ParameterOutOfRange, TruncationInsufficient
from thermobin.fisher import binned_fisher, thermal_fisher
from thermobin.models import (
    ModelSpec, bosonic_modes_ratio, bosonic_spectrum, bosonic_truncation, build_ensemble, canonical_kind,
    excitation_probability, four_peak_ensemble, four_peak_ratio, gaussian_binary_ratio, linear_dos_binary_C,
    n_qubit_spectrum, nqubit_largeN_ratio, tight_binding_moments,
)
from thermobin.spectra import GaussianDOS, LinearDOS, ThermalEnsemble

INF = math.inf


def test_single_qubit_masses():
    beta = 0.9
    ens = build_ensemble(ModelSpec("n-qubits", {"N": 1}, beta))
    s = excitation_probability(beta)
    np.testing.assert_allclose(ens.probabilities, [1 - s, s], rtol=1e-14)


def test_four_peak_masses():
    N, eps, t = 40, 0.8, 0.05
    ens = build_ensemble(ModelSpec("four-peak", {"N": N, "eps": eps, "t_peak": t}, 1.3))
    np.testing.assert_allclose(ens.energies, [-t * N, -eps, eps, t * N])
    np.testing.assert_allclose(ens.probabilities, [1 / N, 0.5 - 1 / N, 0.5 - 1 / N, 1 / N], rtol=1e-12)


def test_tight_binding_matches_free_fermion_moments():
    N, eps, t, T = 20, 1.0, 0.3, 2.0
    ens = build_ensemble(ModelSpec("tight_binding", {"N": N, "eps_onsite": eps, "t_hop": t}, 1 / T))
    mean, var = tight_binding_moments(N, eps, t, 1 / T)
    assert ens.mean == pytest.approx(mean, rel=1e-6)
    assert ens.variance == pytest.approx(var, rel=1e-6)


def test_tight_binding_looks_gaussian():
    ens = build_ensemble(ModelSpec("tight_binding", {"N": 20, "eps_onsite": 1.0, "t_hop": 0.3}, 0.5))
    skew = ens.central_moment(3) / ens.variance**1.5
    kurt = ens.central_moment(4) / ens.variance**2 - 3
    assert abs(skew) < 0.3 and abs(kurt) < 0.3


def test_tight_binding_variance_is_mean_derivative():
    N, eps, t, beta = 20, 1.0, 0.3, 0.5
    h = beta * 1e-5
    up = tight_binding_moments(N, eps, t, beta + h)[0]
    dn = tight_binding_moments(N, eps, t, beta - h)[0]
    assert -(up - dn) / (2 * h) == pytest.approx(tight_binding_moments(N, eps, t, beta)[1], rel=1e-6)


def test_spec_validation():
    with pytest.raises(ConfigError):
        canonical_kind("spin-glass")
    with pytest.raises(ConfigError):
        build_ensemble(ModelSpec("n_qubits", {"N": 3, "x": 1}, 1.0))
    with pytest.raises(ParameterOutOfRange):
        build_ensemble(ModelSpec("n_qubits", {"N": 0}, 1.0))
    with pytest.raises(ParameterOutOfRange):
        build_ensemble(ModelSpec("gaussian", {"sigma": -1}, 1.0))
    with pytest.raises(ParameterOutOfRange):
        build_ensemble(ModelSpec("bosonic_modes", {"M": 0}, 1.0))


def test_bosonic_truncation_enforced():
    with pytest.raises(TruncationInsufficient):
        bosonic_spectrum(3, 1.0, 0.5, n_max=5)
    n = bosonic_truncation(3, 0.5)
    spec = bosonic_spectrum(3, 1.0, 0.5)
    assert spec.n_levels == n + 1
    assert spec.degeneracies[4] == math.comb(6, 2)


def test_gaussian_ratio_closed_form():
    assert gaussian_binary_ratio(0.0) == pytest.approx(2 / math.pi, rel=1e-15)
    assert gaussian_binary_ratio(40.0) == pytest.approx(0.0, abs=1e-300)
    assert gaussian_binary_ratio(INF) == 0.0
    assert gaussian_binary_ratio(-3.0) == gaussian_binary_ratio(3.0)


@pytest.mark.parametrize("bt", [0.3, 1.0, 2.2])
def test_gaussian_ratio_matches_binning(bt):
    mu_sigma = 1.7
    ens = ThermalEnsemble(GaussianDOS(0.4, mu_sigma), 0.6)
    b = ens.mean + math.sqrt(2) * ens.std * bt
    rep = binned_fisher(ens, [-INF, b, INF])
    assert rep.ratio == pytest.approx(gaussian_binary_ratio(bt), rel=1e-9)


def test_gaussian_ratio_against_quadrature():
    # direct quadrature of the coarse-grained Fisher information of a unit normal cut at sqrt(2)
    b = math.sqrt(2.0)
    phi = lambda z: math.exp(-z * z / 2) / math.sqrt(2 * math.pi)  # noqa: E731
    p1 = integrate.quad(phi, -np.inf, b, epsabs=1e-14)[0]
    w1 = integrate.quad(lambda z: z * phi(z), -np.inf, b, epsabs=1e-14)[0]
    ratio = w1**2 / p1 + w1**2 / (1 - p1)
    assert gaussian_binary_ratio(1.0) == pytest.approx(ratio, rel=1e-9)


def test_large_n_ratio_at_mean():
    N, beta = 300, 0.5
    s = excitation_probability(beta)
    assert nqubit_largeN_ratio(N, s, N * s) == pytest.approx(2 / math.pi, rel=1e-14)


def test_large_n_ratio_near_exact_at_170():
    N, beta = 170, 0.6
    ens = ThermalEnsemble(n_qubit_spectrum(N), beta)
    b = dp_exact(ens, 2)
    approx = nqubit_largeN_ratio(N, excitation_probability(beta), b.boundaries[1])
    assert approx == pytest.approx(0.64, abs=0.01)
    assert abs(approx - b.ratio) < 0.01


def test_large_n_gap_shrinks():
    gaps = []
    beta = 0.6
    s = excitation_probability(beta)
    for N in (50, 200, 800):
        b = dp_exact(ThermalEnsemble(n_qubit_spectrum(N), beta), 2)
        gaps.append(abs(b.ratio - nqubit_largeN_ratio(N, s, b.boundaries[1])))
    assert gaps[0] > gaps[1] > gaps[2]


def test_large_n_sup_gap_along_curve():
    N, beta = 100, 0.6
    ens = ThermalEnsemble(n_qubit_spectrum(N), beta)
    s = excitation_probability(beta)
    b = np.arange(int(N * s) - 12, int(N * s) + 13) + 0.5
    exact = np.array([binned_fisher(ens, [-INF, x, INF]).ratio for x in b])
    assert np.max(np.abs(exact - nqubit_largeN_ratio(N, s, b))) <= 0.02


def test_linear_dos_closed_form():
    ens = ThermalEnsemble(LinearDOS(), 1.0)
    assert linear_dos_binary_C(1.0, 2.58975) / 2 == pytest.approx(0.643, abs=1e-3)
    # C ~ 2 beta^2 (beta b)^2 as the cut approaches the spectrum edge
    assert linear_dos_binary_C(1.0, 1e-9) == pytest.approx(2e-18, rel=1e-6)
    assert linear_dos_binary_C(1.0, 0.0) == 0.0
    for beta, b in ((1.0, 1.0), (2.0, 0.7), (0.5, 9.0), (3.0, 1e-4)):
        e = ThermalEnsemble(LinearDOS(), beta)
        assert linear_dos_binary_C(beta, b) == pytest.approx(binned_fisher(e, [0, b, INF]).coarse_C, rel=1e-9)
    # quadrature oracle at beta b = 1
    q = lambda E: E * math.exp(-E)  # noqa: E731
    p1 = integrate.quad(q, 0, 1)[0]
    w1 = integrate.quad(lambda E: (E - 2) * q(E), 0, 1)[0]
    assert linear_dos_binary_C(1.0, 1.0) == pytest.approx(w1**2 / p1 + w1**2 / (1 - p1), rel=1e-9)
    with pytest.raises(ParameterOutOfRange):
        linear_dos_binary_C(1.0, -1.0)


def test_four_peak_formula_against_dp_when_mean_cut_is_optimal():
    for N, eps, t in ((100, 1.0, 0.02), (50, 1.0, 0.03), (10, 2.0, 0.05)):
        ens = four_peak_ensemble(N, eps, t, 1.0)
        b = dp_exact(ens, 2)
        assert b.boundaries[1] == pytest.approx(0.0, abs=1e-12)
        assert b.ratio == pytest.approx(four_peak_ratio(N, eps, t), rel=1e-12, abs=1e-12)


def test_four_peak_formula_is_the_mean_cut():
    # for wide outer peaks the optimal cut moves off zero; the closed form describes the cut at zero
    for N, eps, t in ((1000, 1.0, 1.0), (100, 0.5, 0.3)):
        rep = binned_fisher(four_peak_ensemble(N, eps, t, 1.0), [-INF, 0.0, INF])
        assert rep.ratio == pytest.approx(four_peak_ratio(N, eps, t), rel=1e-12)


def test_four_peak_decays_like_inverse_n():
    Ns = np.array([1e2, 1e3, 1e4, 1e5])
    r = [four_peak_ratio(int(N), 1.0, 1.0) for N in Ns]
    slope = np.polyfit(np.log(Ns), np.log(r), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.05)


def test_four_peak_without_inner_spacing():
    for N in (10, 100, 1000):
        assert four_peak_ratio(N, 0.0, 0.7) == pytest.approx(2 / N, rel=1e-14)


def test_bosonic_single_mode_by_enumeration():
    x = 0.7
    ens = ThermalEnsemble(bosonic_spectrum(1, 1.0, x), x)
    assert bosonic_modes_ratio(1, x) == pytest.approx(brute_force(ens, 2).ratio, rel=1e-13)


def test_bosonic_ratio_approaches_gaussian_limit():
    r = [bosonic_modes_ratio(M, 0.7) for M in (4, 16, 64)]
    assert abs(r[-1] - 0.64) <= 0.01
    assert abs(r[-1] - 2 / math.pi) < abs(r[0] - 2 / math.pi)


def test_bosonic_band_between_edge_temperatures():
    for M in (2, 8, 24):
        lo, hi = sorted((bosonic_modes_ratio(M, 0.1), bosonic_modes_ratio(M, 0.7)))
        for x in (0.25, 0.4, 0.55):
            assert lo - 0.02 <= bosonic_modes_ratio(M, x) <= hi + 0.02


@pytest.mark.parametrize("d", range(2, 9))
def test_gaussian_optimum_is_symmetric(d):
    ens = ThermalEnsemble(GaussianDOS(0.3, 1.2), 0.8)
    b, _ = lloyd_max(ens, SolverConfig(d=d, num_starts=4))
    inner = b.boundaries[1:-1] - ens.mean
    np.testing.assert_allclose(inner, -inner[::-1], atol=1e-6)


def test_erf_identity_used_by_closed_form():
    b = np.linspace(0, 3, 7)  # 1 - erf^2 cancels catastrophically beyond this
    direct = (2 / np.pi) * np.exp(-2 * b * b) / (1 - special.erf(b) ** 2)
    np.testing.assert_allclose(gaussian_binary_ratio(b), direct, rtol=1e-9)

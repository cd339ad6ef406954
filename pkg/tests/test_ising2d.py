import json
import math

import mpmath
import numpy as np
import pytest

from thermobin import ising2d
from thermobin.errors import InsufficientSizes, NumericalError, UnsupportedSize
from thermobin.ising2d import (
    BETA_C, IsingDOS, cached_dos, critical_beta, critical_temperature, criticality_binning_study, cumulant_scaling_fit,
    cumulants, enumerate_dos, exact_dos, kappa3_peaks, log_partition, magnetization_thermodynamic_limit,
    specific_heat, transfer_matrix_dos,
)


def _mp_log_partition(dos, beta, dps=50):
    """Oracle: ln Z from the exact integer degeneracies at extended precision."""
    with mpmath.workdps(dps):
        b = mpmath.mpf(beta)
        return mpmath.log(mpmath.fsum(mpmath.mpf(g) * mpmath.exp(-b * E) for E, g in zip(dos.energies, dos.degeneracies)))


def test_l4_matches_enumeration():
    assert exact_dos(4).as_dict() == enumerate_dos(4).as_dict()


def test_l4_counts():
    g = exact_dos(4).as_dict()
    assert sum(g.values()) == 65536 and g[-32] == 2


def test_l6_matches_transfer_matrix():
    assert exact_dos(6).as_dict() == transfer_matrix_dos(6).as_dict()


def test_l8_exact_invariants():
    g = exact_dos(8).as_dict()
    assert sum(g.values()) == 2**64
    assert all(g[-E] == v for E, v in g.items())
    assert g[-128] == 2


@pytest.mark.parametrize("L", [3, 2, 34, 5.0])
def test_unsupported_sizes(L):
    with pytest.raises(UnsupportedSize):
        exact_dos(L)


def test_validation_catches_corruption():
    dos = exact_dos(4)
    bad = IsingDOS(4, dos.energies, (dos.degeneracies[0] + 1,) + dos.degeneracies[1:])
    with pytest.raises(NumericalError):
        bad.validate()


def test_cache_round_trip(tmp_path, monkeypatch):
    monkeypatch.setenv("THERMOBIN_CACHE_DIR", str(tmp_path))
    assert ising2d.cache_dir() == tmp_path
    first = cached_dos(6)
    path = tmp_path / "ising_L6.json"
    obj = json.loads(path.read_text())
    assert obj["L"] == 6 and all(isinstance(lv["g"], str) for lv in obj["levels"])
    assert cached_dos(6).as_dict() == first.as_dict()
    path.write_text("{not json")
    assert cached_dos(6).as_dict() == first.as_dict()


def test_critical_point():
    assert critical_temperature() == pytest.approx(2.26919, abs=1e-5)
    assert critical_beta() == pytest.approx(math.log(1 + math.sqrt(2)) / 2, rel=1e-15)
    assert math.sinh(2 * critical_beta()) == pytest.approx(1.0, abs=1e-14)


def test_magnetization_curve():
    Tc = critical_temperature()
    assert magnetization_thermodynamic_limit(1e-3) == pytest.approx(1.0, abs=1e-12)
    assert magnetization_thermodynamic_limit(Tc) == 0.0
    assert magnetization_thermodynamic_limit(3.0) == 0.0
    assert magnetization_thermodynamic_limit(2.0) == pytest.approx((1 - math.sinh(1.0) ** -4) ** 0.125, rel=1e-14)
    near = [magnetization_thermodynamic_limit(Tc * (1 - e)) for e in (1e-2, 1e-4, 1e-6)]
    assert near[0] > near[1] > near[2] > 0 and near[2] < 0.25


def test_infinite_temperature_cumulants():
    rep = cumulants(exact_dos(6), 0.0)
    assert rep.kappa1 == pytest.approx(0.0, abs=1e-10)
    assert rep.kappa3 == pytest.approx(0.0, abs=1e-8)
    assert rep.kappa2 == pytest.approx(2 * 36, rel=1e-12)  # independent bonds at infinite temperature


def test_l4_cumulants_against_enumeration_sums():
    oracle = enumerate_dos(4).ensemble(BETA_C)
    rep = cumulants(exact_dos(4), BETA_C)
    m2, m3, m4 = (oracle.central_moment(k) for k in (2, 3, 4))
    assert rep.kappa1 == pytest.approx(oracle.mean, rel=1e-12)
    assert rep.kappa2 == pytest.approx(m2, rel=1e-10)
    assert rep.kappa3 == pytest.approx(m3, rel=1e-9)
    assert rep.kappa4 == pytest.approx(m4 - 3 * m2**2, rel=1e-9)


@pytest.mark.parametrize("L", [4, 8, 12])
@pytest.mark.parametrize("beta", [0.2, BETA_C, 0.6])
def test_cumulants_match_log_partition_derivatives(L, beta):
    dos = exact_dos(L)
    rep = cumulants(dos, beta)
    assert rep.kappa2 == pytest.approx(dos.ensemble(beta).variance, rel=1e-9)
    h = 1e-3 * beta
    with mpmath.workdps(60):
        f = [_mp_log_partition(dos, beta + k * h, 60) for k in (-2, -1, 0, 1, 2)]
        d1 = (f[3] - f[1]) / (2 * h)
        d2 = (f[3] - 2 * f[2] + f[1]) / h**2
        d3 = (f[4] - 2 * f[3] + 2 * f[1] - f[0]) / (2 * h**3)
        d4 = (f[4] - 4 * f[3] + 6 * f[2] - 4 * f[1] + f[0]) / h**4
    # kappa_k = (-1)^k d^k ln Z / d beta^k
    assert rep.kappa1 == pytest.approx(-float(d1), rel=1e-4)
    assert rep.kappa2 == pytest.approx(float(d2), rel=1e-4)
    assert rep.kappa3 == pytest.approx(-float(d3), rel=1e-4, abs=1e-4 * rep.kappa2**1.5)
    assert rep.kappa4 == pytest.approx(float(d4), rel=1e-4, abs=1e-4 * rep.kappa2**2)


@pytest.mark.parametrize("L", [6, 8, 16])
def test_specific_heat_is_second_derivative_of_free_energy(L, dos_loader):
    dos = dos_loader(L)
    for beta in (0.3, BETA_C, 0.55):
        h = 1e-6 * beta
        with mpmath.workdps(50):
            f = [_mp_log_partition(dos, beta + k * h) / dos.N for k in (-1, 0, 1)]
            fd = beta**2 * (f[2] - 2 * f[1] + f[0]) / h**2
        assert specific_heat(dos, beta) == pytest.approx(float(fd), rel=1e-4)


def test_log_partition_against_extended_precision():
    dos = exact_dos(8)
    for beta in (0.0, 0.3, BETA_C, 2.0):
        assert log_partition(dos, beta) == pytest.approx(float(_mp_log_partition(dos, beta)), rel=1e-13)


def test_kappa4_negative_at_criticality_for_finite_lattices(dos_loader):
    # measured behaviour: the fourth cumulant is negative at beta_c for every supported size
    for L in (8, 16, 32):
        assert cumulants(dos_loader(L), BETA_C).kappa4 < 0


def test_shape_ratios_decrease_with_size(dos_loader):
    A, K = [], []
    for L in (8, 16, 32):
        rep = cumulants(dos_loader(L), BETA_C)
        A.append(np.cbrt(rep.kappa3) / math.sqrt(rep.kappa2))
        K.append(abs(rep.kappa4) ** 0.25 / math.sqrt(rep.kappa2))
    assert abs(A[0]) > abs(A[1]) > abs(A[2])
    assert K[0] > K[1] > K[2]


def test_kappa3_peaks_flank_critical_point(dos_loader):
    pk = kappa3_peaks(dos_loader(16))
    assert pk.beta_below < BETA_C < pk.beta_above
    assert pk.offset_below > 0 and pk.offset_above > 0
    assert pk.below > 0 and pk.above > 0


def test_scaling_fit_needs_three_sizes(dos_loader):
    with pytest.raises(InsufficientSizes):
        cumulant_scaling_fit([8, 16], "kappa4", dos_loader=dos_loader)


def test_kappa2_fit_against_n_log_n(dos_loader):
    fit = cumulant_scaling_fit([8, 16, 32], "kappa2", dos_loader=dos_loader)
    assert fit.slope == pytest.approx(1.0, abs=0.1)


def test_binning_study(dos_loader):
    rep = criticality_binning_study(dos_loader(8), 0.3, 2)
    assert abs(rep.ratio - 2 / math.pi) < 0.05
    dos = exact_dos(4)
    full = criticality_binning_study(dos, BETA_C, len(dos.energies))
    assert full.ratio == pytest.approx(1.0, rel=1e-12)


def test_l16_critical_binning_regression(dos_loader):
    # archived from the first verified run of the exact pipeline
    rep = criticality_binning_study(dos_loader(16), BETA_C, 2)
    assert rep.ratio == pytest.approx(0.659979909906, abs=1e-9)

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from thermobin.spectra import DiscreteSpectrum, ThermalEnsemble

settings.register_profile(
    "thermobin", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True,
)
settings.load_profile("thermobin")


@pytest.fixture(scope="session")
def ising_cache(tmp_path_factory):
    """Private DOS cache so tests never touch the user's cache directory."""
    return tmp_path_factory.mktemp("ising-cache")


def random_ensemble(rng, n_levels, beta=None):
    pool = np.arange(-max(40, n_levels), max(40, n_levels) + 1)
    E = np.sort(rng.choice(pool, size=n_levels, replace=False)) * 0.25
    g = [int(x) for x in rng.integers(1, 6, size=n_levels)]
    return ThermalEnsemble(DiscreteSpectrum(E, g), rng.uniform(0.1, 2.0) if beta is None else beta)


def random_povm_weights(rng, d, n):
    w = rng.dirichlet(np.full(d, 0.5), size=n).T  # columns sum to one
    return w


@pytest.fixture(scope="session")
def dos_loader(ising_cache):
    from thermobin.ising2d import cached_dos

    return lambda L: cached_dos(L, ising_cache)

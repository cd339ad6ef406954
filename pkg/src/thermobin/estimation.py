"""Monte Carlo check of the Cramer-Rao bound for binned temperature estimates.

Each trial draws ``n`` outcomes from the bin probabilities at the true
temperature and estimates ``T`` by maximum likelihood.  The spread of the
estimates is compared with ``1 / (n C)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NonIdentifiable
from .fisher import P_DROP
from .spectra import ThermalEnsemble

RNG_NAME = "numpy.Philox4x64-10"
BOOTSTRAP_KEY = 2**32 - 1  # spawn key reserved for bootstrap resampling
GOLDEN = (math.sqrt(5) - 1) / 2


def rng_identifier(seed: int) -> str:
    return f"{RNG_NAME}/SeedSequence({seed}, spawn_key=(trial,))"


def trial_generator(seed: int, trial: int) -> np.random.Generator:
    """Independent counter-based stream for one trial; parallel and serial runs agree."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(trial),))))


@dataclass(frozen=True, eq=False)
class ExperimentSpec:
    """True-temperature ensemble, bin boundaries, sample size, trials and seed."""

    ensemble: ThermalEnsemble
    boundaries: np.ndarray
    n: int
    trials: int = 1
    seed: int = 0

    def __post_init__(self):
        b = np.asarray(getattr(self.boundaries, "boundaries", self.boundaries), dtype=float)
        object.__setattr__(self, "boundaries", b)
        if int(self.n) < 1 or int(self.trials) < 1:
            raise ConfigError("n and trials must be >= 1")
        if self.ensemble.beta <= 0:
            raise ConfigError("true temperature must be finite")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def T_star(self) -> float:
        return 1.0 / self.ensemble.beta

    @property
    def d(self) -> int:
        return self.boundaries.size - 1


def bin_probabilities(ensemble: ThermalEnsemble, boundaries, T: float) -> np.ndarray:
    """Outcome probabilities of the binning when the spectrum is at temperature ``T``."""
    return ensemble.with_beta(1.0 / T).interval_stats(boundaries).p


def coarse_fisher_at(ensemble: ThermalEnsemble, boundaries, T: float) -> float:
    ens = ensemble.with_beta(1.0 / T)
    st = ens.interval_stats(boundaries)
    keep = st.p >= P_DROP
    return ens.beta**4 * float(np.sum(st.m1[keep] ** 2 / st.p[keep]))


def sample_outcomes(spec: ExperimentSpec) -> np.ndarray:
    """Outcome counts, shape ``(trials, d)``; identical seeds give identical counts."""
    p = bin_probabilities(spec.ensemble, spec.boundaries, spec.T_star)
    p = np.clip(p, 0.0, None)
    p = p / p.sum()
    return np.stack([trial_generator(spec.seed, k).multinomial(spec.n, p) for k in range(spec.trials)])


def log_likelihood(counts, ensemble, boundaries, T) -> float:
    counts = np.asarray(counts)
    p = bin_probabilities(ensemble, boundaries, T)
    seen = counts > 0
    if np.any(p[seen] <= 0):
        return -math.inf
    return float(np.dot(counts[seen], np.log(p[seen])))


@dataclass(frozen=True)
class MLEResult:
    T_hat: float
    log_likelihood: float
    boundary_hit: bool


def _golden_max(f, a, b, tol):
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def mle_temperature(counts, ensemble: ThermalEnsemble, boundaries, T_ref: float | None = None,
                    rel_tol: float = 1e-8) -> MLEResult:
    """Maximum-likelihood temperature from binned counts.

    Golden-section search over ``[T_ref / 10, 10 T_ref]`` (``T_ref``
    defaults to the ensemble's temperature).

    Raises
    ------
    NonIdentifiable
        If the bin probabilities carry no temperature information anywhere in
        the bracket.
    """
    counts = np.asarray(counts)
    b = np.asarray(getattr(boundaries, "boundaries", boundaries), dtype=float)
    if counts.ndim != 1 or counts.size != b.size - 1:
        raise ConfigError("counts must have one entry per bin")
    if np.any(counts < 0) or counts.sum() < 1:
        raise ConfigError("counts must be nonnegative with a positive total")
    T_ref = ensemble.temperature if T_ref is None else float(T_ref)
    lo, hi = T_ref / 10, 10 * T_ref
    if counts.size == 1 or all(coarse_fisher_at(ensemble, b, T) == 0 for T in (lo, T_ref, hi)):
        raise NonIdentifiable("outcome distribution does not depend on temperature")
    f = lambda T: log_likelihood(counts, ensemble, b, T)  # noqa: E731
    tol = rel_tol * T_ref
    T_hat, ll = _golden_max(f, lo, hi, tol)
    hit = T_hat - lo < 10 * tol or hi - T_hat < 10 * tol
    return MLEResult(T_hat, ll, hit)


def cramer_rao_report(spec: ExperimentSpec, bootstrap: int = 1000) -> dict:
    """Empirical MLE variance against the Cramer-Rao bound ``1 / (n C)``.

    ``efficiency`` is ``cr_bound / empirical_var``; ``var_ratio_ci`` is a
    95% bootstrap interval for ``empirical_var / cr_bound``.
    """
    if spec.trials < 30:
        raise ConfigError("need at least 30 trials")
    counts = sample_outcomes(spec)
    fits = [mle_temperature(c, spec.ensemble, spec.boundaries, spec.T_star) for c in counts]
    est = np.array([r.T_hat for r in fits])
    C = coarse_fisher_at(spec.ensemble, spec.boundaries, spec.T_star)
    if C <= 0:
        raise NonIdentifiable("binning carries no Fisher information at the true temperature")
    bound = 1.0 / (spec.n * C)
    var = float(est.var(ddof=1))
    rng = trial_generator(spec.seed, BOOTSTRAP_KEY)
    idx = rng.integers(0, est.size, size=(bootstrap, est.size))
    boot = est[idx].var(axis=1, ddof=1) / bound
    lo, hi = np.quantile(boot, [0.025, 0.975])
    return {
        "T_star": spec.T_star,
        "n": int(spec.n),
        "trials": int(spec.trials),
        "empirical_var": var,
        "cr_bound": bound,
        "efficiency": bound / var if var > 0 else math.inf,
        "var_ratio": var / bound,
        "var_ratio_ci": [float(lo), float(hi)],
        "mean_T": float(est.mean()),
        "bias": float(est.mean() - spec.T_star),
        "boundary_hits": int(sum(r.boundary_hit for r in fits)),
        "seed": int(spec.seed),
        "rng": rng_identifier(spec.seed),
    }

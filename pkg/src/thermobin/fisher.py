"""Thermal and coarse-grained Fisher information about temperature.

Every quantity here is built from per-bin sums of the energy distribution:
the bin mass ``p``, the mass-weighted deviation ``W = sum q (E - <H>)`` and
the within-bin second moment.  Because ``dq/dT = beta^2 q (E - <H>)``, the
derivative of a bin probability is ``beta^2 W`` and the classical Fisher
information of the outcome distribution is ``beta^4 sum W^2 / p``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptyBin, IncompletePOVM, ParameterOutOfRange
from .spectra import ThermalEnsemble

#: bins lighter than this are left out of the coarse-grained sum
P_DROP = 1e-15


@dataclass(frozen=True)
class FisherReport:
    """Fisher information split into coarse-grained part and distortion.

    ``thermal_F = coarse_C + distortion_D``.  ``dropped`` lists bins whose
    probability fell below ``P_DROP`` (``empty`` the subset with exactly zero
    mass); they contribute nothing to ``coarse_C``.
    """

    thermal_F: float
    coarse_C: float
    distortion_D: float
    ratio: float
    p: np.ndarray = field(repr=False)
    eps: np.ndarray = field(repr=False)
    dropped: tuple = ()
    empty: tuple = ()

    def as_dict(self) -> dict:
        return {
            "thermal_F": self.thermal_F,
            "coarse_C": self.coarse_C,
            "distortion_D": self.distortion_D,
            "ratio": self.ratio,
            "p": [float(x) for x in self.p],
            "eps": [None if not math.isfinite(x) else float(x) for x in self.eps],
            "dropped": list(self.dropped),
            "empty": list(self.empty),
        }


def thermal_fisher(ensemble: ThermalEnsemble) -> float:
    """``beta^4 var(H)``, the Fisher information of a full energy measurement."""
    return ensemble.beta**4 * ensemble.variance


def _ratio(C, F):
    if F > 0:
        return min(max(C / F, 0.0), 1.0)
    return 0.0


def _boundaries_of(binning) -> np.ndarray:
    return np.asarray(getattr(binning, "boundaries", binning), dtype=float)


def binned_fisher(ensemble: ThermalEnsemble, binning, warn: bool = True) -> FisherReport:
    """Coarse-grained Fisher information of a consecutive binning.

    Parameters
    ----------
    ensemble : ThermalEnsemble
    binning : Binning or array_like
        Anything with a ``boundaries`` attribute, or the boundaries
        ``b_0 < ... < b_d`` themselves.
    warn : bool
        Emit :class:`EmptyBin` when a bin has zero probability.
    """
    b = _boundaries_of(binning)
    stats = ensemble.interval_stats(b)
    return _report_from_stats(ensemble, stats.p, stats.m1, stats.m2, warn)


def _report_from_stats(ensemble, P, m1, m2, warn=True) -> FisherReport:
    b4 = ensemble.beta**4
    keep = P >= P_DROP
    with np.errstate(divide="ignore", invalid="ignore"):
        coarse_terms = np.where(keep, m1 * m1 / np.where(keep, P, 1.0), 0.0)
        eps = np.where(P > 0, ensemble.mean + m1 / np.where(P > 0, P, 1.0), np.nan)
    if np.count_nonzero(P > 0) <= 1:
        # one occupied bin: its deviation sum vanishes identically
        coarse_terms = np.zeros_like(coarse_terms)
    # within-bin variance, clipped at zero against rounding
    distortion_terms = np.maximum(m2 - coarse_terms, 0.0)
    C = b4 * float(coarse_terms.sum())
    D = b4 * float(distortion_terms.sum())
    F = thermal_fisher(ensemble)
    dropped = tuple(int(i) for i in np.flatnonzero(~keep))
    empty = tuple(int(i) for i in np.flatnonzero(P <= 0))
    if empty and warn:
        warnings.warn(f"bins {list(empty)} have zero probability", EmptyBin, stacklevel=3)
    return FisherReport(F, C, D, _ratio(C, F), np.asarray(P, dtype=float), eps, dropped, empty)


def outcome_derivatives(ensemble: ThermalEnsemble, binning) -> np.ndarray:
    """Analytic ``d p_alpha / dT`` for each bin."""
    stats = ensemble.interval_stats(_boundaries_of(binning))
    return ensemble.beta**2 * stats.m1


def classical_fisher(p, dp) -> float:
    """``sum (dp)^2 / p`` over outcomes with ``p >= P_DROP``."""
    p = np.asarray(p, dtype=float)
    dp = np.asarray(dp, dtype=float)
    keep = p >= P_DROP
    return float(np.sum(dp[keep] ** 2 / p[keep]))


class DiagonalPOVM:
    """A measurement diagonal in the energy basis.

    ``weights[alpha, i]`` is the probability that a system in level ``i``
    produces outcome ``alpha``; columns must sum to one.
    """

    def __init__(self, weights, atol: float = 1e-9):
        w = np.atleast_2d(np.asarray(weights, dtype=float))
        if w.ndim != 2 or w.shape[0] < 1:
            raise ConfigError("POVM weights must be a (d, n_levels) array with d >= 1")
        if np.any(w < -atol) or np.any(w > 1 + atol):
            raise IncompletePOVM("POVM weights must lie in [0, 1]")
        err = np.max(np.abs(w.sum(axis=0) - 1.0))
        if err > atol:
            raise IncompletePOVM(f"POVM elements do not sum to identity (max deviation {err:.3g})")
        self.weights = np.clip(w, 0.0, 1.0)

    @property
    def d(self) -> int:
        return self.weights.shape[0]

    @property
    def n_levels(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def from_partition(cls, labels, d: int | None = None) -> "DiagonalPOVM":
        """Projective POVM assigning level ``i`` to outcome ``labels[i]``."""
        labels = np.asarray(labels, dtype=int)
        d = int(labels.max()) + 1 if d is None else d
        w = np.zeros((d, labels.size))
        w[labels, np.arange(labels.size)] = 1.0
        return cls(w)

    def mix(self, other: "DiagonalPOVM", lam: float) -> "DiagonalPOVM":
        """Convex combination ``lam * self + (1 - lam) * other``."""
        if other.weights.shape != self.weights.shape:
            raise ConfigError("POVMs differ in shape")
        return DiagonalPOVM(lam * self.weights + (1 - lam) * other.weights)


def povm_fisher_detailed(ensemble: ThermalEnsemble, povm: DiagonalPOVM):
    """Return ``(fisher, p, dropped)`` for a diagonal POVM."""
    if not ensemble.is_discrete:
        raise ConfigError("diagonal POVMs act on discrete spectra")
    if povm.n_levels != ensemble.spectrum.n_levels:
        raise IncompletePOVM(f"POVM covers {povm.n_levels} levels, spectrum has {ensemble.spectrum.n_levels}")
    q = ensemble.probabilities
    dev = ensemble.energies - ensemble.mean
    P = povm.weights @ q
    W = povm.weights @ (q * dev)
    # an outcome whose weight is the same on every level is blind to T
    W[np.ptp(povm.weights, axis=1) == 0] = 0.0
    keep = P >= P_DROP
    val = ensemble.beta**4 * float(np.sum(W[keep] ** 2 / P[keep]))
    return val, P, tuple(int(i) for i in np.flatnonzero(~keep))


def povm_fisher(ensemble: ThermalEnsemble, povm: DiagonalPOVM) -> float:
    """Classical Fisher information about T of the outcomes of ``povm``."""
    return povm_fisher_detailed(ensemble, povm)[0]


def proportionality_bound(lambda0: float, lam: float, A: float) -> float:
    """Lower bound ``Xi`` on ``C / F`` for a binary cut at the mean.

    Valid for distributions whose second moment beyond ``lam`` standard
    deviations is at most ``A var(H)^2``; see :func:`tail_second_moment`.
    """
    if not 0 < lambda0 < 0.5:
        raise ParameterOutOfRange("lambda0 must lie in (0, 1/2)")
    if not lam > 1:
        raise ParameterOutOfRange("lambda must exceed 1")
    if not 0 <= A < 0.5:
        raise ParameterOutOfRange("A must lie in [0, 1/2)")
    l0sq = lambda0 * lambda0
    return 4 * l0sq * ((1 - A - l0sq) / (lam * lam - l0sq)) ** 2


def tail_second_moment(ensemble: ThermalEnsemble, lam: float) -> float:
    """``sum/integral of (E - <H>)^2 q(E)`` over ``|E - <H>| > lam * std``."""
    if not lam > 1:
        raise ParameterOutOfRange("lambda must exceed 1")
    if math.isinf(lam):
        return 0.0
    mu, width = ensemble.mean, lam * ensemble.std
    if ensemble.is_discrete:
        dev = ensemble.energies - mu
        mask = np.abs(dev) > width
        return float(np.dot(ensemble.probabilities[mask], dev[mask] ** 2))
    lo, hi = ensemble.spectrum.support
    b = np.array([lo, max(lo, mu - width), min(hi, mu + width), hi])
    stats = ensemble.interval_stats(b)
    return float(stats.m2[0] + stats.m2[2])

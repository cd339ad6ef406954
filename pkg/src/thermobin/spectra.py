"""Energy spectra and thermal ensembles.

A spectrum is either discrete (levels with degeneracies) or a continuous
density of states.  :class:`ThermalEnsemble` pairs a spectrum with an
inverse temperature and exposes the energy distribution
``q(E) = Omega(E) exp(-beta E) / Z`` together with its moments and the
per-interval sums that every Fisher-information computation is built on.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from numbers import Integral
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate, optimize, special

from .errors import ConfigError, DivergentPartitionFunction, QuadratureFailure

QUAD_EPSABS = 1e-12
QUAD_EPSREL = 1e-10


class BinStats(NamedTuple):
    """Per-bin sums of ``q``, ``q (E - <H>)`` and ``q (E - <H>)**2``."""

    p: np.ndarray
    m1: np.ndarray
    m2: np.ndarray


def _log_weight(g) -> float:
    if isinstance(g, Integral):
        if g < 1:
            raise ConfigError(f"degeneracy must be >= 1, got {g}")
        return math.log(int(g))
    g = float(g)
    if not g > 0 or not math.isfinite(g):
        raise ConfigError(f"level weight must be positive and finite, got {g}")
    return math.log(g)


class DiscreteSpectrum:
    """Sorted distinct energy levels with (possibly huge) degeneracies.

    Degeneracies may be Python ints of any size or positive floats (the
    latter for models defined directly by their distribution).  Equal
    energies are merged by adding their degeneracies.
    """

    def __init__(self, energies: Sequence[float], degeneracies: Sequence | None = None):
        energies = [float(e) for e in energies]
        if degeneracies is None:
            degeneracies = [1] * len(energies)
        if len(degeneracies) != len(energies):
            raise ConfigError("energies and degeneracies differ in length")
        merged: dict[float, object] = {}
        for e, g in zip(energies, degeneracies):
            if not math.isfinite(e):
                raise ConfigError("energies must be finite")
            _log_weight(g)
            merged[e] = merged[e] + g if e in merged else g
        levels = sorted(merged.items())
        self.energies = np.array([e for e, _ in levels], dtype=float)
        self.degeneracies = tuple(g for _, g in levels)
        self.log_weights = np.array([_log_weight(g) for g in self.degeneracies])
        self._check()

    @classmethod
    def from_log_weights(cls, energies, log_weights) -> "DiscreteSpectrum":
        """Build from ``log g_i`` directly (no merging; energies must be distinct)."""
        energies = np.asarray(energies, dtype=float)
        log_weights = np.asarray(log_weights, dtype=float)
        order = np.argsort(energies, kind="stable")
        self = cls.__new__(cls)
        self.energies = energies[order]
        self.log_weights = log_weights[order]
        self.degeneracies = tuple(float(np.exp(w)) if w < 700 else math.inf for w in self.log_weights)
        if np.any(np.diff(self.energies) <= 0):
            raise ConfigError("energies must be distinct")
        if not np.all(np.isfinite(self.log_weights)):
            raise ConfigError("log weights must be finite")
        self._check()
        return self

    def _check(self):
        if self.energies.size < 1:
            raise ConfigError("spectrum has no levels")
        dim = self.dimension
        if self.energies.size == 1 and dim < 2:
            raise ConfigError("total dimension must be >= 2")

    @property
    def n_levels(self) -> int:
        return int(self.energies.size)

    @property
    def dimension(self):
        """Total Hilbert-space dimension (exact when degeneracies are ints)."""
        if all(isinstance(g, Integral) for g in self.degeneracies):
            return sum(int(g) for g in self.degeneracies)
        lse = float(special.logsumexp(self.log_weights))
        return math.exp(lse) if lse < 709 else math.inf

    def __repr__(self):
        return f"DiscreteSpectrum(n_levels={self.n_levels})"


class ContinuousDOS:
    """Base class for continuous densities of states ``Omega(E)``."""

    support: tuple[float, float]

    def omega(self, E):
        raise NotImplementedError

    # The following receive beta and return normalized quantities of q(E).
    def log_partition(self, beta: float) -> float:
        raise NotImplementedError

    def mean(self, beta: float) -> float:
        raise NotImplementedError

    def central_moment(self, beta: float, k: int) -> float:
        raise NotImplementedError

    def cdf(self, beta: float, E):
        raise NotImplementedError

    def quantile(self, beta: float, u):
        raise NotImplementedError

    def interval_stats(self, beta: float, boundaries: np.ndarray) -> BinStats:
        raise NotImplementedError

    def check_beta(self, beta: float):
        pass


def _gamma_interval(s: float, xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
    """Regularized incomplete gamma mass between ``xa`` and ``xb``, tail-accurate."""
    upper = special.gammaincc(s, xa) - special.gammaincc(s, xb)
    lower = special.gammainc(s, xb) - special.gammainc(s, xa)
    return np.where(xa > s, upper, lower)


class LinearDOS(ContinuousDOS):
    """``Omega(E) = E`` on ``[0, inf)``; ``q(E) = beta^2 E exp(-beta E)``."""

    kernel = "linear"
    support = (0.0, math.inf)

    def __init__(self, **params):
        if params:
            raise ConfigError(f"linear DOS takes no parameters, got {sorted(params)}")
        self.params = {}

    def check_beta(self, beta):
        if beta <= 0:
            raise DivergentPartitionFunction("linear DOS needs beta > 0")

    def omega(self, E):
        E = np.asarray(E, dtype=float)
        return np.where(E >= 0, E, 0.0)

    def log_partition(self, beta):
        return -2.0 * math.log(beta)

    def mean(self, beta):
        return 2.0 / beta

    def raw_moment(self, beta, n):
        return math.factorial(n + 1) / beta**n

    def central_moment(self, beta, k):
        mu = self.mean(beta)
        return sum(math.comb(k, j) * self.raw_moment(beta, j) * (-mu) ** (k - j) for j in range(k + 1))

    def cdf(self, beta, E):
        x = beta * np.clip(np.asarray(E, dtype=float), 0.0, None)
        return special.gammainc(2.0, x)

    def quantile(self, beta, u):
        return special.gammaincinv(2.0, np.asarray(u, dtype=float)) / beta

    def interval_stats(self, beta, boundaries):
        b = np.clip(np.asarray(boundaries, dtype=float), 0.0, None)
        xa, xb = beta * b[:-1], beta * b[1:]
        mu = self.mean(beta)
        P = _gamma_interval(2.0, xa, xb)
        M1 = 2.0 / beta * _gamma_interval(3.0, xa, xb)
        M2 = 6.0 / beta**2 * _gamma_interval(4.0, xa, xb)
        m1 = M1 - mu * P
        m2 = M2 - 2.0 * mu * M1 + mu * mu * P
        return BinStats(P, m1, m2)


class GaussianDOS(ContinuousDOS):
    """``Omega(E) = exp(-(E - center)^2 / (2 sigma^2))`` on the real line.

    At inverse temperature beta the energy distribution is normal with mean
    ``center - beta sigma^2`` and variance ``sigma^2``.
    """

    kernel = "gaussian"
    support = (-math.inf, math.inf)

    def __init__(self, center: float = 0.0, sigma: float = 1.0):
        if not sigma > 0:
            raise ConfigError("sigma must be positive")
        self.center = float(center)
        self.sigma = float(sigma)
        self.params = {"center": self.center, "sigma": self.sigma}

    def omega(self, E):
        z = (np.asarray(E, dtype=float) - self.center) / self.sigma
        return np.exp(-0.5 * z * z)

    def log_partition(self, beta):
        s = self.sigma
        return math.log(s * math.sqrt(2 * math.pi)) - beta * self.center + 0.5 * (beta * s) ** 2

    def mean(self, beta):
        return self.center - beta * self.sigma**2

    def central_moment(self, beta, k):
        if k % 2:
            return 0.0
        return float(special.factorial2(k - 1)) * self.sigma**k

    def cdf(self, beta, E):
        return special.ndtr((np.asarray(E, dtype=float) - self.mean(beta)) / self.sigma)

    def quantile(self, beta, u):
        return self.mean(beta) + self.sigma * special.ndtri(np.asarray(u, dtype=float))

    def interval_stats(self, beta, boundaries):
        s = self.sigma
        z = (np.asarray(boundaries, dtype=float) - self.mean(beta)) / s
        za, zb = z[:-1], z[1:]
        # mass computed from the nearer tail to keep small bins accurate
        P = np.where(za > 0, special.ndtr(-za) - special.ndtr(-zb), special.ndtr(zb) - special.ndtr(za))
        finite = np.isfinite(z)
        zf = np.where(finite, z, 0.0)
        phi = np.where(finite, np.exp(-0.5 * zf * zf), 0.0) / math.sqrt(2 * math.pi)
        zphi = zf * phi
        m1 = s * (phi[:-1] - phi[1:])
        m2 = s * s * (zphi[:-1] - zphi[1:] + P)
        return BinStats(P, m1, m2)


class TabulatedDOS(ContinuousDOS):
    """Piecewise-linear ``Omega(E)`` through ``(grid, values)``, zero outside."""

    kernel = "tabulated"

    def __init__(self, grid, values):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.size < 3 or grid.shape != values.shape:
            raise ConfigError("tabulated DOS needs matching 1-D grid/values with >= 3 points")
        if np.any(np.diff(grid) <= 0):
            raise ConfigError("tabulated grid must be strictly increasing")
        if np.any(values < 0) or not np.any(values > 0):
            raise ConfigError("tabulated DOS values must be nonnegative and not all zero")
        self.grid, self.values = grid, values
        self.support = (float(grid[0]), float(grid[-1]))
        self.params = {}
        self._cache: dict = {}

    def omega(self, E):
        return np.interp(E, self.grid, self.values, left=0.0, right=0.0)

    def _quad(self, f, a, b):
        a, b = max(a, self.grid[0]), min(b, self.grid[-1])
        if not b > a:
            return 0.0
        pts = self.grid[(self.grid > a) & (self.grid < b)]
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, _ = integrate.quad(
                    f, a, b, points=pts if pts.size else None,
                    epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=max(50, 4 * pts.size + 50),
                )
            except integrate.IntegrationWarning as exc:
                raise QuadratureFailure(str(exc)) from None
        return val

    def _weight(self, beta):
        e0 = self.grid[0]
        return lambda E: float(self.omega(E)) * math.exp(-beta * (E - e0))

    def _norm(self, beta):
        key = ("norm", beta)
        if key not in self._cache:
            self._cache[key] = self._quad(self._weight(beta), *self.support)
        return self._cache[key]

    def log_partition(self, beta):
        return math.log(self._norm(beta)) - beta * self.grid[0]

    def mean(self, beta):
        key = ("mean", beta)
        if key not in self._cache:
            w = self._weight(beta)
            self._cache[key] = self._quad(lambda E: E * w(E), *self.support) / self._norm(beta)
        return self._cache[key]

    def central_moment(self, beta, k):
        mu, w = self.mean(beta), self._weight(beta)
        return self._quad(lambda E: (E - mu) ** k * w(E), *self.support) / self._norm(beta)

    def cdf(self, beta, E):
        w, Zn = self._weight(beta), self._norm(beta)
        E = np.atleast_1d(np.asarray(E, dtype=float))
        out = np.array([self._quad(w, self.grid[0], e) / Zn if e > self.grid[0] else 0.0 for e in E])
        return np.clip(out, 0.0, 1.0)

    def quantile(self, beta, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        lo, hi = self.support
        out = []
        for ui in u:
            if ui <= 0:
                out.append(lo)
            elif ui >= 1:
                out.append(hi)
            else:
                out.append(optimize.brentq(lambda e: self.cdf(beta, e)[0] - ui, lo, hi, xtol=1e-13))
        return np.array(out)

    def interval_stats(self, beta, boundaries):
        mu, w, Zn = self.mean(beta), self._weight(beta), self._norm(beta)
        b = np.asarray(boundaries, dtype=float)
        P, m1, m2 = [], [], []
        for a, c in zip(b[:-1], b[1:]):
            P.append(self._quad(w, a, c) / Zn)
            m1.append(self._quad(lambda E: (E - mu) * w(E), a, c) / Zn)
            m2.append(self._quad(lambda E: (E - mu) ** 2 * w(E), a, c) / Zn)
        return BinStats(np.array(P), np.array(m1), np.array(m2))


KERNELS = {"linear": LinearDOS, "gaussian": GaussianDOS}


@dataclass(frozen=True, eq=False)
class ThermalEnsemble:
    """A spectrum at inverse temperature ``beta``.

    Instances are immutable; derived quantities are computed once and cached.
    """

    spectrum: DiscreteSpectrum | ContinuousDOS
    beta: float

    def __post_init__(self):
        beta = float(self.beta)
        object.__setattr__(self, "beta", beta)
        if not math.isfinite(beta) or beta < 0:
            raise ConfigError(f"beta must be finite and >= 0, got {beta}")
        if isinstance(self.spectrum, ContinuousDOS):
            self.spectrum.check_beta(beta)

    @property
    def is_discrete(self) -> bool:
        return isinstance(self.spectrum, DiscreteSpectrum)

    @property
    def temperature(self) -> float:
        return math.inf if self.beta == 0 else 1.0 / self.beta

    def with_beta(self, beta: float) -> "ThermalEnsemble":
        return ThermalEnsemble(self.spectrum, beta)

    # discrete internals -------------------------------------------------

    @cached_property
    def _log_terms(self) -> np.ndarray:
        return self.spectrum.log_weights - self.beta * self.spectrum.energies

    @cached_property
    def log_partition_function(self) -> float:
        if self.is_discrete:
            return float(special.logsumexp(self._log_terms))
        return self.spectrum.log_partition(self.beta)

    @cached_property
    def probabilities(self) -> np.ndarray:
        """Level probabilities ``q_i`` (discrete spectra only)."""
        if not self.is_discrete:
            raise ConfigError("probabilities are defined for discrete spectra only")
        t = self._log_terms
        w = np.exp(t - t.max())
        return w / w.sum()

    @property
    def energies(self) -> np.ndarray:
        return self.spectrum.energies

    # moments ----------------------------------------------------------------

    @cached_property
    def mean(self) -> float:
        if self.is_discrete:
            return float(np.dot(self.probabilities, self.energies))
        return float(self.spectrum.mean(self.beta))

    @cached_property
    def _deviations(self) -> np.ndarray:
        return self.energies - self.mean

    def central_moment(self, k: int) -> float:
        if k == 1:
            return 0.0
        if self.is_discrete:
            return float(np.dot(self.probabilities, self._deviations**k))
        return float(self.spectrum.central_moment(self.beta, k))

    @cached_property
    def variance(self) -> float:
        return self.central_moment(2)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    # distribution -------------------------------------------------------

    def cdf(self, E):
        """``P(energy < E)``."""
        if self.is_discrete:
            cum = np.concatenate([[0.0], np.cumsum(self.probabilities)])
            return cum[np.searchsorted(self.energies, E, side="left")]
        return self.spectrum.cdf(self.beta, E)

    def quantile(self, u):
        if self.is_discrete:
            cum = np.cumsum(self.probabilities)
            idx = np.searchsorted(cum, np.asarray(u, dtype=float), side="left")
            return self.energies[np.clip(idx, 0, self.energies.size - 1)]
        return self.spectrum.quantile(self.beta, u)

    def pdf(self, E):
        if self.is_discrete:
            raise ConfigError("pdf is defined for continuous spectra only")
        return self.spectrum.omega(E) * np.exp(-self.beta * np.asarray(E, dtype=float) - self.log_partition_function)

    def cut_indices(self, boundaries) -> np.ndarray:
        """Level index where each bin starts, for a discrete spectrum.

        Bin alpha collects levels with ``b_{alpha-1} <= E < b_alpha``.
        """
        b = np.asarray(boundaries, dtype=float)
        idx = np.searchsorted(self.energies, b, side="left")
        idx[0], idx[-1] = 0, self.energies.size
        return idx

    def interval_stats(self, boundaries) -> BinStats:
        """Mass and centered first/second moments of ``q`` in each bin.

        ``boundaries`` is ``b_0 < ... < b_d``; outer values may be infinite.
        """
        b = np.asarray(boundaries, dtype=float)
        if b.ndim != 1 or b.size < 2:
            raise ConfigError("need at least two boundaries")
        if np.any(np.diff(b) < 0):
            raise ConfigError("boundaries must be nondecreasing")
        if not self.is_discrete:
            return self.spectrum.interval_stats(self.beta, b)
        q, dev = self.probabilities, self._deviations
        cuts = self.cut_indices(b)
        P, m1, m2 = (np.zeros(b.size - 1) for _ in range(3))
        for a, (i, j) in enumerate(zip(cuts[:-1], cuts[1:])):
            if j > i:
                qs, ds = q[i:j], dev[i:j]
                P[a] = qs.sum()
                m1[a] = np.dot(qs, ds)
                m2[a] = np.dot(qs, ds * ds)
        return BinStats(P, m1, m2)


# module-level API --------------------------------------------------------


def partition_function(ensemble: ThermalEnsemble) -> float:
    """Return ``Z``.  Overflows raise; use ``ensemble.log_partition_function``."""
    logz = ensemble.log_partition_function
    if not math.isfinite(logz):
        raise DivergentPartitionFunction("partition function is not finite")
    return math.exp(logz)


def energy_moments(ensemble: ThermalEnsemble, max_order: int) -> list[float]:
    """``[<H>, mu_2, ..., mu_k]``: the raw mean followed by central moments."""
    if max_order < 1:
        raise ConfigError("max_order must be >= 1")
    return [ensemble.mean] + [ensemble.central_moment(k) for k in range(2, max_order + 1)]


def energy_distribution(ensemble: ThermalEnsemble, n_points: int = 2001):
    """Energy distribution as ``(energies, values)``.

    For discrete spectra ``values`` are the level masses.  For continuous
    spectra it is the density on a uniform grid spanning all but ``1e-10`` of
    the mass.
    """
    if ensemble.is_discrete:
        return ensemble.energies.copy(), ensemble.probabilities.copy()
    lo_s, hi_s = ensemble.spectrum.support
    lo, hi = ensemble.quantile(np.array([5e-11, 1 - 5e-11]))
    lo, hi = max(float(lo), lo_s), min(float(hi), hi_s)
    grid = np.linspace(lo, hi, n_points)
    return grid, ensemble.pdf(grid)


def _parse_degeneracy(g):
    if isinstance(g, str):
        try:
            return int(g)
        except ValueError:
            return float(g)
    return g


def spectrum_from_json(obj: dict) -> DiscreteSpectrum | ContinuousDOS:
    """Parse the spectrum file format (``levels`` / ``dos`` / ``dos_kernel``)."""
    keys = {"levels", "dos", "dos_kernel"} & set(obj)
    if len(keys) != 1:
        raise ConfigError("spectrum JSON needs exactly one of 'levels', 'dos', 'dos_kernel'")
    if "levels" in obj:
        levels = obj["levels"]
        E = [lv["E"] for lv in levels]
        g = [_parse_degeneracy(lv.get("g", 1)) for lv in levels]
        return DiscreteSpectrum(E, g)
    if "dos" in obj:
        return TabulatedDOS(obj["dos"]["grid"], obj["dos"]["values"])
    spec = obj["dos_kernel"]
    try:
        cls = KERNELS[spec["name"]]
    except KeyError:
        raise ConfigError(f"unknown DOS kernel {spec.get('name')!r}") from None
    return cls(**spec.get("params", {}))


def spectrum_to_json(spectrum: DiscreteSpectrum | ContinuousDOS) -> dict:
    if isinstance(spectrum, DiscreteSpectrum):
        return {"levels": [{"E": float(e), "g": str(g)} for e, g in zip(spectrum.energies, spectrum.degeneracies)]}
    if isinstance(spectrum, TabulatedDOS):
        return {"dos": {"grid": spectrum.grid.tolist(), "values": spectrum.values.tolist()}}
    return {"dos_kernel": {"name": spectrum.kernel, "params": dict(spectrum.params)}}

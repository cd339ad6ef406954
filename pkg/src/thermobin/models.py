"""Built-in model ensembles and their closed-form reference ratios."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .errors import ConfigError, ParameterOutOfRange, TruncationInsufficient
from .spectra import DiscreteSpectrum, GaussianDOS, LinearDOS, ThermalEnsemble

TAIL_MASS = 1e-12
GRID_BITS = 14

KINDS = ("n_qubits", "linear", "gaussian", "tight_binding", "bosonic_modes", "four_peak")
_ALIASES = {
    "n-qubits": "n_qubits", "qubits": "n_qubits",
    "linear-dos": "linear", "linear_dos": "linear",
    "gaussian-dos": "gaussian", "gaussian_dos": "gaussian",
    "tight-binding": "tight_binding",
    "bosonic-modes": "bosonic_modes", "bosons": "bosonic_modes",
    "four-peak": "four_peak",
}


def canonical_kind(kind: str) -> str:
    k = _ALIASES.get(kind, kind)
    if k not in KINDS:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    return k


@dataclass(frozen=True)
class ModelSpec:
    """A named model, its parameters and the inverse temperature."""

    kind: str
    params: dict = field(default_factory=dict)
    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_kind(self.kind))
        object.__setattr__(self, "params", dict(self.params))

    def with_beta(self, beta: float) -> "ModelSpec":
        return ModelSpec(self.kind, self.params, beta)


def _positive_int(params, name, minimum=1):
    if name not in params:
        raise ConfigError(f"missing parameter {name!r}")
    v = params[name]
    if isinstance(v, float) and not v.is_integer():
        raise ConfigError(f"{name} must be an integer")
    v = int(v)
    if v < minimum:
        raise ParameterOutOfRange(f"{name} must be >= {minimum}")
    return v


def _positive(params, name, default=None):
    v = float(params.get(name, default) if default is not None else params[name])
    if not v > 0:
        raise ParameterOutOfRange(f"{name} must be positive")
    return v


def _check_keys(params, allowed):
    extra = set(params) - set(allowed)
    if extra:
        raise ConfigError(f"unexpected parameters {sorted(extra)}")


def build_ensemble(spec: ModelSpec) -> ThermalEnsemble:
    """Construct the thermal ensemble described by ``spec``."""
    p, beta = spec.params, float(spec.beta)
    kind = spec.kind
    if kind == "n_qubits":
        _check_keys(p, ["N"])
        return ThermalEnsemble(n_qubit_spectrum(_positive_int(p, "N")), beta)
    if kind == "linear":
        _check_keys(p, [])
        return ThermalEnsemble(LinearDOS(), beta)
    if kind == "gaussian":
        _check_keys(p, ["mean", "sigma"])
        return ThermalEnsemble(GaussianDOS(float(p.get("mean", 0.0)), _positive(p, "sigma", 1.0)), beta)
    if kind == "tight_binding":
        _check_keys(p, ["N", "eps_onsite", "t_hop", "grid_resolution"])
        return tight_binding_ensemble(
            _positive_int(p, "N"), float(p.get("eps_onsite", 1.0)), float(p.get("t_hop", 0.3)), beta,
            int(p.get("grid_resolution", 2**GRID_BITS)),
        )
    if kind == "bosonic_modes":
        _check_keys(p, ["M", "omega_a", "n_max"])
        n_max = p.get("n_max")
        spectrum = bosonic_spectrum(
            _positive_int(p, "M"), _positive(p, "omega_a", 1.0), beta, None if n_max is None else int(n_max)
        )
        return ThermalEnsemble(spectrum, beta)
    _check_keys(p, ["N", "eps", "t_peak"])
    return four_peak_ensemble(_positive_int(p, "N", 3), _positive(p, "eps"), _positive(p, "t_peak"), beta)


# ---------------------------------------------------------------- spectra


def n_qubit_spectrum(N: int) -> DiscreteSpectrum:
    """Levels ``0..N`` (unit gap) with binomial degeneracies."""
    return DiscreteSpectrum(range(N + 1), [math.comb(N, j) for j in range(N + 1)])


def bosonic_truncation(M: int, beta_omega: float, tail: float = TAIL_MASS) -> int:
    """Smallest total excitation number leaving less than ``tail`` mass above it."""
    dist = stats.nbinom(M, -math.expm1(-beta_omega))
    n = int(dist.isf(tail))
    while dist.sf(n) >= tail:
        n += 1
    while n > 0 and dist.sf(n - 1) < tail:
        n -= 1
    return n


def bosonic_spectrum(M: int, omega_a: float, beta: float, n_max: int | None = None) -> DiscreteSpectrum:
    """``M`` identical oscillators: levels ``n omega_a`` with ``C(n+M-1, M-1)`` states.

    The excitation number is truncated where the thermal tail mass at
    ``beta`` drops below ``1e-12``.
    """
    if not beta > 0:
        raise ParameterOutOfRange("bosonic modes need beta > 0")
    x = beta * omega_a
    if n_max is None:
        n_max = bosonic_truncation(M, x)
    else:
        left = stats.nbinom(M, -math.expm1(-x)).sf(n_max)
        if left >= TAIL_MASS:
            raise TruncationInsufficient(f"n_max={n_max} leaves tail mass {left:.3g}")
    n_max = max(n_max, 1)
    return DiscreteSpectrum([n * omega_a for n in range(n_max + 1)], [math.comb(n + M - 1, M - 1) for n in range(n_max + 1)])


def four_peak_ensemble(N: int, eps: float, t_peak: float, beta: float) -> ThermalEnsemble:
    """Distribution with mass ``1/2 - 1/N`` at ``+-eps`` and ``1/N`` at ``+-t_peak N``."""
    if N < 3:
        raise ParameterOutOfRange("N must be >= 3")
    E = np.array([-t_peak * N, -eps, eps, t_peak * N])
    q = np.array([1 / N, 0.5 - 1 / N, 0.5 - 1 / N, 1 / N])
    if len(set(E.tolist())) < 4:
        raise ParameterOutOfRange("peak positions must be distinct")
    # weights chosen so that q is reproduced exactly at this beta
    return ThermalEnsemble(DiscreteSpectrum.from_log_weights(E, np.log(q) + beta * E), beta)


def tight_binding_modes(N: int, eps_onsite: float, t_hop: float) -> np.ndarray:
    a = np.arange(N)
    return eps_onsite - t_hop * np.cos(2 * np.pi * a / N)


def fermi(beta, energies):
    return special.expit(-beta * np.asarray(energies, dtype=float))


def tight_binding_distribution(N, eps_onsite, t_hop, beta, resolution=2**GRID_BITS):
    """Energy distribution of the free-fermion chain on a uniform grid.

    Each mode contributes a two-point distribution (empty / occupied);
    these are convolved one at a time, with every shifted mass split
    linearly between the two nearest grid nodes so the mean is exact.

    Returns ``(grid, masses)``.
    """
    eps = tight_binding_modes(N, eps_onsite, t_hop)
    f = fermi(beta, eps)
    span = float(np.abs(eps).sum())
    if span == 0:
        return np.zeros(1), np.ones(1)
    h = span / resolution
    size = resolution + 2 * N + 2
    dist = np.zeros(size)
    dist[0] = 1.0
    origin = 0.0  # grid offset accumulated from negative modes
    for e, fa in zip(eps, f):
        shift = e / h
        lo = math.floor(shift)
        frac = shift - lo
        moved = np.zeros(size)
        if lo >= 0:
            moved[lo:] += (1 - frac) * dist[: size - lo]
            moved[lo + 1:] += frac * dist[: size - lo - 1]
            new = (1 - fa) * dist + fa * moved
        else:
            # negative mode energy: re-anchor the grid so indices stay >= 0
            k = -lo
            padded = np.zeros(size)
            padded[k:] = dist[: size - k]
            moved[:] = (1 - frac) * dist
            moved[1:] += frac * dist[:-1]
            new = (1 - fa) * padded + fa * moved
            origin -= k * h
        dist = new
    grid = origin + h * np.arange(size)
    keep = dist > 0
    return grid[keep], dist[keep] / dist[keep].sum()


def tight_binding_ensemble(N, eps_onsite, t_hop, beta, resolution=2**GRID_BITS) -> ThermalEnsemble:
    """Gridded tight-binding distribution wrapped as a discrete ensemble.

    Level weights are ``q exp(beta E)`` so the ensemble reproduces the grid
    distribution at ``beta`` and responds to nearby temperatures like a
    density of states.
    """
    if not beta > 0:
        raise ParameterOutOfRange("tight-binding chain needs beta > 0")
    grid, q = tight_binding_distribution(N, eps_onsite, t_hop, beta, resolution)
    return ThermalEnsemble(DiscreteSpectrum.from_log_weights(grid, np.log(q) + beta * grid), beta)


def tight_binding_moments(N, eps_onsite, t_hop, beta):
    """Exact free-fermion mean and variance of the energy."""
    eps = tight_binding_modes(N, eps_onsite, t_hop)
    f = fermi(beta, eps)
    return float(np.sum(eps * f)), float(np.sum(eps**2 * f * (1 - f)))


# ---------------------------------------------------------------- closed forms


def gaussian_binary_ratio(b_tilde):
    """``C/F`` for a normal energy distribution cut once at ``<H> + sqrt(2) sigma b_tilde``."""
    b = np.abs(np.asarray(b_tilde, dtype=float))
    # 1 - erf(b)^2 = erfc(b) erfc(-b); erfc(b) = erfcx(b) exp(-b^2)
    with np.errstate(over="ignore", invalid="ignore"):
        out = (2 / np.pi) * np.exp(-b * b) / (special.erfcx(b) * special.erfc(-b))
    out = np.where(np.isinf(b), 0.0, out)
    return float(out) if out.ndim == 0 else out


def nqubit_largeN_ratio(N: int, s: float, b: float):
    """Normal approximation to the binary-cut ratio of ``N`` qubits with excitation probability ``s``."""
    r = 1 - s
    z = (N * s - np.asarray(b, dtype=float)) / np.sqrt(2 * N * r * s)
    return gaussian_binary_ratio(z)


def excitation_probability(beta: float) -> float:
    return float(special.expit(-beta))


def _expm1_minus_x(x):
    x = float(x)
    if abs(x) > 0.1:
        return math.expm1(x) - x
    term, total = x * x / 2, 0.0
    k = 2
    while abs(term) > 1e-18 * abs(total) or total == 0:
        total += term
        k += 1
        term *= x / k
        if term == 0:
            break
    return total


def linear_dos_binary_C(beta: float, b: float) -> float:
    """Coarse-grained Fisher information of the linear DOS cut once at ``b``."""
    if not b > 0:
        if b == 0:
            return 0.0
        raise ParameterOutOfRange("b must be positive")
    x = beta * b
    if math.isinf(x):
        return 0.0
    if x > 700:
        return math.exp(2 * math.log(beta) + 4 * math.log(x) - math.log1p(x) - x)
    return beta**2 * x**4 / ((1 + x) * _expm1_minus_x(x))


def four_peak_ratio(N: int, eps: float, t_peak: float) -> float:
    """``C/F`` of the four-peak distribution cut once at its mean (zero)."""
    if N < 3:
        raise ParameterOutOfRange("N must be >= 3")
    if not (eps >= 0 and t_peak > 0):
        raise ParameterOutOfRange("eps must be >= 0 and t_peak > 0")
    num = 4 * (t_peak + eps * (0.5 - 1 / N)) ** 2
    return num / (2 * t_peak**2 * N + (1 - 2 / N) * eps**2)


def bosonic_modes_ratio(M: int, beta_omega: float) -> float:
    """Optimal binary ``C/F`` for ``M`` identical oscillators at ``beta * omega_a``."""
    from .binning import dp_exact

    if M < 1 or not beta_omega > 0:
        raise ParameterOutOfRange("need M >= 1 and beta_omega > 0")
    ens = ThermalEnsemble(bosonic_spectrum(M, 1.0, beta_omega), beta_omega)
    return dp_exact(ens, 2).ratio

"""Qubit-probe thermometry.

Two protocols, both ending in a binary measurement of the probe:

* an idealized probe whose spin flips (with amplitude ``sin(lambda t)``)
  only when the system energy is at least a threshold ``Omega``;
* a qubit resonantly exchanging excitations with one bosonic mode
  (Jaynes-Cummings coupling), started in its ground state.

Fisher information about ``T`` is that of the binary outcome,
``(dP/dT)^2 / (P (1 - P))``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize

from .binning import dp_exact
from .errors import BoundViolation, ConfigError, DegenerateOutcome, ParameterOutOfRange, TruncationInsufficient
from .models import bosonic_spectrum
from .spectra import ThermalEnsemble

TAIL_MASS = 1e-12
N_MAX_CAP = 100_000
SCAN_STEP = 1e-3
GT_MAX = 20.0


def binary_fisher(P: float, dP: float) -> float:
    """Fisher information of a two-outcome distribution; zero (with a warning) if degenerate."""
    if P < 1e-15 or 1 - P < 1e-15:
        warnings.warn(f"outcome probability {P:.3g} is degenerate", DegenerateOutcome, stacklevel=3)
        return 0.0
    return dP * dP / (P * (1 - P))


# ---------------------------------------------------------------- ideal probe


@dataclass(frozen=True)
class IdealProbeSpec:
    """Threshold ``omega``, coupling ``lam`` and interaction time ``t``."""

    omega: float
    lam: float
    t: float = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ParameterOutOfRange("coupling must be positive")
        if self.t < 0:
            raise ParameterOutOfRange("time must be >= 0")

    @property
    def flip_time(self) -> float:
        """``pi / (2 lam)``: full flip for energies above threshold."""
        return math.pi / (2 * self.lam)


def _above(ensemble: ThermalEnsemble, omega: float):
    if not ensemble.is_discrete:
        raise ConfigError("the ideal probe acts on discrete spectra")
    mask = ensemble.energies >= omega
    q = ensemble.probabilities[mask]
    return float(q.sum()), float(np.dot(q, ensemble.energies[mask] - ensemble.mean))


def ideal_probe_up_probability(ensemble: ThermalEnsemble, spec: IdealProbeSpec) -> float:
    """Probability of finding the probe flipped after time ``spec.t``."""
    mass, _ = _above(ensemble, spec.omega)
    return math.sin(spec.lam * spec.t) ** 2 * mass


def ideal_probe_fisher(ensemble: ThermalEnsemble, spec: IdealProbeSpec) -> float:
    mass, w = _above(ensemble, spec.omega)
    s2 = math.sin(spec.lam * spec.t) ** 2
    return binary_fisher(s2 * mass, s2 * ensemble.beta**2 * w)


# ---------------------------------------------------------------- Jaynes-Cummings probe


@dataclass(frozen=True)
class JCProbeSpec:
    """Qubit frequency ``omega_d``, mode frequency ``omega_a``, coupling ``g``.

    ``n_max`` truncates the mode occupation; ``None`` picks the smallest
    value leaving thermal tail mass below ``1e-12``.
    """

    omega_d: float
    omega_a: float
    g: float
    t: float = 0.0
    n_max: int | None = None

    def __post_init__(self):
        if not self.g > 0:
            raise ParameterOutOfRange("g must be positive")
        if not self.omega_a > 0:
            raise ParameterOutOfRange("omega_a must be positive")
        if self.t < 0:
            raise ParameterOutOfRange("time must be >= 0")

    @property
    def delta(self) -> float:
        return self.omega_d - self.omega_a

    def with_time(self, t: float) -> "JCProbeSpec":
        return replace(self, t=t)

    def truncation(self, beta: float) -> int:
        """Occupations ``m = n + 1`` run over ``1..n_max + 1``."""
        x = beta * self.omega_a
        if not x > 0:
            raise ParameterOutOfRange("need beta * omega_a > 0")
        # thermal mass above occupation n_max + 1 is exp(-x (n_max + 2))
        needed = max(0, math.ceil(-math.log(TAIL_MASS) / x - 2 + 1e-12))
        while math.exp(-x * (needed + 2)) >= TAIL_MASS:
            needed += 1
        if self.n_max is None:
            if needed > N_MAX_CAP:
                raise TruncationInsufficient(f"needs n_max={needed} above the cap {N_MAX_CAP}")
            return needed
        if self.n_max < needed:
            raise TruncationInsufficient(f"n_max={self.n_max} leaves tail mass {math.exp(-x * (self.n_max + 2)):.3g}")
        return int(self.n_max)


def _jc_terms(beta: float, spec: JCProbeSpec):
    """Per-occupation weights, their T-derivatives, amplitudes and frequencies."""
    n_max = spec.truncation(beta)
    x = beta * spec.omega_a
    m = np.arange(1, n_max + 2, dtype=float)  # occupation before the exchange
    w = np.exp(-x * m) * -math.expm1(-x)
    nbar = 1.0 / math.expm1(x)
    dw = beta**2 * spec.omega_a * w * (m - nbar)
    lam = np.sqrt(0.25 * spec.delta**2 + spec.g**2 * m)
    amp = spec.g**2 * m / lam**2
    return w, dw, amp, lam


def jc_excited_probability(beta: float, spec: JCProbeSpec) -> float:
    """Probability that the qubit is excited after time ``spec.t``."""
    w, _, amp, lam = _jc_terms(beta, spec)
    return float(np.sum(w * amp * np.sin(lam * spec.t) ** 2))


def jc_probability_derivative(beta: float, spec: JCProbeSpec) -> float:
    """Analytic ``dP_e/dT``."""
    _, dw, amp, lam = _jc_terms(beta, spec)
    return float(np.sum(dw * amp * np.sin(lam * spec.t) ** 2))


def jc_fisher(beta: float, spec: JCProbeSpec) -> float:
    """Fisher information about ``T`` of the qubit's excited/ground outcome."""
    w, dw, amp, lam = _jc_terms(beta, spec)
    s2 = np.sin(lam * spec.t) ** 2
    return binary_fisher(float(np.sum(w * amp * s2)), float(np.sum(dw * amp * s2)))


def _fisher_curve(beta, spec, times):
    w, dw, amp, lam = _jc_terms(beta, spec)
    out = np.zeros(times.size)
    chunk = max(1, 4_000_000 // lam.size)
    for s in range(0, times.size, chunk):
        s2 = np.sin(np.outer(times[s:s + chunk], lam)) ** 2
        P = s2 @ (w * amp)
        dP = s2 @ (dw * amp)
        ok = (P >= 1e-15) & (1 - P >= 1e-15)
        out[s:s + chunk] = np.where(ok, dP * dP / np.where(ok, P * (1 - P), 1.0), 0.0)
    return out


def jc_optimal_time(beta: float, spec: JCProbeSpec, gt_max: float = GT_MAX, step: float = SCAN_STEP, tol: float = 1e-8):
    """Global maximum of :func:`jc_fisher` over ``g t`` in ``(0, gt_max]``.

    A scan with step ``step`` in ``g t`` is refined by golden-section search
    to ``tol``.  Equal maxima resolve to the smaller time.

    Returns
    -------
    (gt_opt, fisher_at_opt)
    """
    if not gt_max > 0:
        raise ParameterOutOfRange("gt_max must be positive")
    g = spec.g
    gts = np.arange(1, int(round(gt_max / step)) + 1) * step
    vals = _fisher_curve(beta, spec, gts / g)
    i = int(np.argmax(vals))
    best_gt, best = float(gts[i]), float(vals[i])
    if 0 < i < gts.size - 1:
        f = lambda gt: -_fisher_curve(beta, spec, np.array([gt / g]))[0]  # noqa: E731
        res = optimize.minimize_scalar(f, bracket=(gts[i - 1], gts[i], gts[i + 1]), method="golden",
                                       options={"xtol": tol / gts[i]})
        if -res.fun > best and gts[i - 1] <= res.x <= gts[i + 1]:
            best_gt, best = float(res.x), float(-res.fun)
    return best_gt, best


def single_mode_optimal_binary(beta: float, omega_a: float) -> float:
    """Optimal binary coarse-grained Fisher information of one thermal mode."""
    ens = ThermalEnsemble(bosonic_spectrum(1, omega_a, beta), beta)
    return dp_exact(ens, 2).coarse_C


def jc_ratio_curve(betas, spec: JCProbeSpec, gt_max: float = GT_MAX):
    """For each beta: ``(gt_opt, probe Fisher, optimal binary C, ratio)``."""
    rows = []
    for beta in betas:
        gt, fi = jc_optimal_time(beta, spec, gt_max)
        C = single_mode_optimal_binary(beta, spec.omega_a)
        rows.append((float(beta), gt, fi, C, fi / C if C > 0 else 0.0))
    return rows


def probe_bound_check(ensemble: ThermalEnsemble, d: int, probe_values, atol: float = 1e-9) -> dict:
    """Compare probe-derived Fisher values with the optimal ``d``-outcome binning.

    Raises
    ------
    BoundViolation
        If any value exceeds the optimum by more than ``atol``.
    """
    C = dp_exact(ensemble, d).coarse_C
    vals = [float(v) for v in np.atleast_1d(probe_values)]
    worst = max(vals) if vals else 0.0
    report = {"optimal_C": C, "values": vals, "max_value": worst, "passed": worst <= C + atol}
    if not report["passed"]:
        raise BoundViolation(f"probe Fisher {worst:.12g} exceeds optimal binned value {C:.12g}")
    return report

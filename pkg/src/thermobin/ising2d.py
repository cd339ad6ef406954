"""Exact energy statistics of the periodic square-lattice Ising model.

The density of states comes from Kaufman's four-term factorization of the
finite-lattice partition function.  Writing ``x = exp(-2 beta)`` (``J = 1``),
``x^N Z`` is an integer polynomial whose coefficients are the level
degeneracies.  It is evaluated modulo several word-sized primes at ``2N + 1``
integer points, interpolated mod each prime, and the exact coefficients are
recovered by Chinese remaindering.  Cosines ``cos(pi k / L)`` become
``(w^k + w^-k) / 2`` for a primitive ``2L``-th root of unity ``w`` mod p,
and ``2 cosh(M gamma_k)`` becomes a Chebyshev polynomial of the (algebraic)
``cosh gamma_k``, so everything stays in the prime field.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize

from . import kernels
from .binning import dp_exact
from .errors import ConfigError, InsufficientSizes, NumericalError, UnsupportedSize
from .fisher import FisherReport
from .spectra import DiscreteSpectrum, ThermalEnsemble

L_MIN, L_MAX = 4, 32
BETA_C = 0.5 * math.log(1 + math.sqrt(2))


def critical_temperature() -> float:
    """``T_c = 2 / ln(1 + sqrt 2)`` for ``J = 1``."""
    return 2.0 / math.log(1 + math.sqrt(2))


def critical_beta() -> float:
    return BETA_C


def magnetization_thermodynamic_limit(T):
    """Spontaneous magnetization of the infinite lattice (zero at and above ``T_c``)."""
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise ConfigError("temperature must be positive")
    with np.errstate(over="ignore"):
        sh = np.sinh(2.0 / T)
    inner = 1.0 - sh ** -4.0
    m = np.where(T < critical_temperature(), np.clip(inner, 0.0, None) ** 0.125, 0.0)
    return float(m) if m.ndim == 0 else m


# ---------------------------------------------------------------- prime field helpers


def _is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin for ``n < 3.3e24``."""
    if n < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
    for p in small:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in small:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _prime_factors(n: int) -> list[int]:
    out, f = [], 2
    while f * f <= n:
        if n % f == 0:
            out.append(f)
            while n % f == 0:
                n //= f
        f += 1
    if n > 1:
        out.append(n)
    return out


def _primes(L: int, count: int) -> list[int]:
    """Largest primes below 2^31 congruent to 1 mod 2L."""
    step = 2 * L
    p = ((2**31 - 1) // step) * step + 1
    if p >= 2**31:
        p -= step
    out = []
    while len(out) < count:
        if _is_prime(p):
            out.append(p)
        p -= step
    return out


def _root_of_unity(order: int, p: int) -> int:
    factors = _prime_factors(order)
    for a in range(2, p):
        w = pow(a, (p - 1) // order, p)
        if all(pow(w, order // f, p) != 1 for f in factors):
            return w
    raise NumericalError(f"no primitive root of order {order} mod {p}")


def _crt(residues: list[np.ndarray], primes: list[int]) -> list[int]:
    """Symmetric-range integers matching every residue vector."""
    values = [int(r) for r in residues[0]]
    modulus = primes[0]
    for res, p in zip(residues[1:], primes[1:]):
        inv = pow(modulus, -1, p)
        values = [v + modulus * (((int(r) - v) * inv) % p) for v, r in zip(values, res)]
        modulus *= p
    half = modulus // 2
    return [v - modulus if v > half else v for v in values]


# ---------------------------------------------------------------- DOS


@dataclass(frozen=True)
class IsingDOS:
    """Exact degeneracies ``g(E)`` of the ``L x L`` periodic lattice, ``J = 1``.

    Only energies with nonzero degeneracy are stored.
    """

    L: int
    energies: tuple
    degeneracies: tuple

    @property
    def N(self) -> int:
        return self.L * self.L

    def as_dict(self) -> dict:
        return dict(zip(self.energies, self.degeneracies))

    def spectrum(self) -> DiscreteSpectrum:
        return DiscreteSpectrum(list(self.energies), list(self.degeneracies))

    def ensemble(self, beta: float) -> ThermalEnsemble:
        return ThermalEnsemble(self.spectrum(), beta)

    def validate(self):
        """Check total count, ground-state degeneracy and ``E -> -E`` symmetry exactly."""
        N = self.N
        g = self.as_dict()
        if any(v <= 0 for v in g.values()):
            raise NumericalError("nonpositive degeneracy")
        if sum(g.values()) != 2**N:
            raise NumericalError("degeneracies do not sum to 2^N")
        if g.get(-2 * N) != 2:
            raise NumericalError("ground state must be doubly degenerate")
        if any(g.get(-E) != v for E, v in g.items()):
            raise NumericalError("g(E) != g(-E)")
        if any((E + 2 * N) % 4 for E in g):
            raise NumericalError("energy outside the lattice of allowed values")
        return self

    def to_json(self) -> dict:
        return {"L": self.L, "levels": [{"E": int(E), "g": str(g)} for E, g in zip(self.energies, self.degeneracies)]}

    @classmethod
    def from_json(cls, obj: dict) -> "IsingDOS":
        levels = sorted((int(lv["E"]), int(lv["g"])) for lv in obj["levels"])
        return cls(int(obj["L"]), tuple(E for E, _ in levels), tuple(g for _, g in levels))

    @classmethod
    def from_coefficients(cls, L: int, coef) -> "IsingDOS":
        """Degeneracies from the coefficients of ``x^N Z(x)`` (``x^j`` has ``E = 2j - 2N``)."""
        N = L * L
        pairs = [(2 * j - 2 * N, int(c)) for j, c in enumerate(coef) if c != 0]
        return cls(L, tuple(E for E, _ in pairs), tuple(g for _, g in pairs))


def _check_size(L):
    if not isinstance(L, (int, np.integer)) or L % 2 or not L_MIN <= L <= L_MAX:
        raise UnsupportedSize(f"L must be even with {L_MIN} <= L <= {L_MAX}, got {L!r}")


def exact_dos(L: int) -> IsingDOS:
    """Exact density of states of the periodic ``L x L`` lattice."""
    _check_size(L)
    L = int(L)
    N = L * L
    npts = 2 * N + 1
    n_primes = (N + 2) // 30 + 2  # product of primes exceeds 2^(N + 2)
    primes = _primes(L, n_primes)
    while math.prod(primes).bit_length() <= N + 2:
        primes = _primes(L, len(primes) + 1)
    x0 = 2
    residues = []
    for p in primes:
        w = _root_of_unity(2 * L, p)
        vals = kernels.ising_eval_mod(L, p, w, x0, npts)
        residues.append(np.asarray(kernels.interp_forward_mod(vals, x0, p)))
    coef = _crt(residues, primes)
    return IsingDOS.from_coefficients(L, coef).validate()


def cache_dir() -> Path:
    env = os.environ.get("THERMOBIN_CACHE_DIR")
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "thermobin"


def cached_dos(L: int, directory: str | os.PathLike | None = None) -> IsingDOS:
    """:func:`exact_dos` backed by a JSON file cache.

    A corrupt or mismatching cache file is recomputed and overwritten.
    """
    _check_size(L)
    d = Path(directory) if directory is not None else cache_dir()
    path = d / f"ising_L{int(L)}.json"
    if path.exists():
        try:
            dos = IsingDOS.from_json(json.loads(path.read_text()))
            if dos.L == L:
                return dos.validate()
        except (ValueError, KeyError, NumericalError):
            pass
    dos = exact_dos(L)
    d.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(dos.to_json()))
    os.replace(tmp, path)
    return dos


# ---------------------------------------------------------------- independent oracles


def _bond_energy(spins: np.ndarray) -> np.ndarray:
    """Energies of stacked ``(..., L, L)`` +-1 configurations."""
    return -(spins * np.roll(spins, 1, axis=-1)).sum(axis=(-1, -2)) - (spins * np.roll(spins, 1, axis=-2)).sum(axis=(-1, -2))


def enumerate_dos(L: int) -> IsingDOS:
    """Brute-force histogram over all ``2^(L^2)`` configurations (``L <= 4``)."""
    if L % 2 or not 2 <= L <= 4:
        raise UnsupportedSize("enumeration is limited to L in {2, 4}")
    N = L * L
    counts: dict[int, int] = {}
    chunk = 1 << 12
    bits = np.arange(N)
    for start in range(0, 1 << N, chunk):
        codes = np.arange(start, min(start + chunk, 1 << N))
        spins = 1 - 2 * ((codes[:, None] >> bits) & 1)
        E, c = np.unique(_bond_energy(spins.reshape(-1, L, L)), return_counts=True)
        for e, k in zip(E.tolist(), c.tolist()):
            counts[e] = counts.get(e, 0) + k
    levels = sorted(counts.items())
    return IsingDOS(L, tuple(E for E, _ in levels), tuple(g for _, g in levels))


def transfer_matrix_dos(L: int) -> IsingDOS:
    """Row-to-row transfer with polynomial (energy-histogram) entries (``L <= 8``).

    The first row is held fixed while rows are appended; the last row couples
    back to it.  Counts are exact int64 for ``L <= 6``; object ints above.
    """
    if L % 2 or not 2 <= L <= 8:
        raise UnsupportedSize("transfer-matrix oracle is limited to even L <= 8")
    N = L * L
    S = 1 << L
    bits = np.arange(L)
    rows = 1 - 2 * ((np.arange(S)[:, None] >> bits) & 1)
    row_E = -(rows * np.roll(rows, 1, axis=1)).sum(axis=1)  # in-row bonds
    vert = -(rows @ rows.T)  # bonds between stacked rows
    # histogram index i <-> energy 2i - 2N (all energies are even)
    size = 2 * N + 1
    dtype = np.int64 if N <= 36 else object
    V = np.zeros((S, S, size), dtype=dtype)  # (first row, current row, energy)
    for s in range(S):
        V[s, s, (row_E[s] + 2 * N) // 2] = 1
    shifts = np.unique(vert)
    for _ in range(L - 1):
        new = np.zeros_like(V)
        for s2 in range(S):
            for v in shifts:
                mask = vert[:, s2] == v
                if not mask.any():
                    continue
                k = (int(v) + int(row_E[s2])) // 2
                acc = V[:, mask, :].sum(axis=1)
                if k >= 0:
                    new[:, s2, k:] += acc[:, : size - k]
                else:
                    new[:, s2, :k] += acc[:, -k:]
        V = new
    hist = np.zeros(size, dtype=object)
    for s in range(S):
        for last in range(S):
            k = int(vert[last, s]) // 2
            row = V[s, last]
            if k >= 0:
                hist[k:] += row[: size - k].astype(object)
            else:
                hist[:k] += row[-k:].astype(object)
    return _hist_to_dos(L, hist)


def _hist_to_dos(L, hist):
    N = L * L
    pairs = [(2 * i - 2 * N, int(c)) for i, c in enumerate(hist) if c]
    return IsingDOS(L, tuple(E for E, _ in pairs), tuple(g for _, g in pairs))


# ---------------------------------------------------------------- cumulants


@dataclass(frozen=True)
class CumulantReport:
    """First four energy cumulants at ``beta``."""

    beta: float
    kappa: tuple

    @property
    def kappa1(self):
        return self.kappa[0]

    @property
    def kappa2(self):
        return self.kappa[1]

    @property
    def kappa3(self):
        return self.kappa[2]

    @property
    def kappa4(self):
        return self.kappa[3]


def _log_g(dos: IsingDOS):
    E = np.array(dos.energies, dtype=float)
    lg = np.array([math.log(g) for g in dos.degeneracies])
    return E, lg


def cumulants_many(dos: IsingDOS, betas) -> np.ndarray:
    """Cumulants ``kappa_1..kappa_4`` for each beta; shape ``(len(betas), 4)``."""
    E, lg = _log_g(dos)
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    out = np.empty((betas.size, 4))
    chunk = max(1, 2_000_000 // E.size)
    for s in range(0, betas.size, chunk):
        b = betas[s:s + chunk, None]
        t = lg[None, :] - b * E[None, :]
        t -= t.max(axis=1, keepdims=True)
        q = np.exp(t)
        q /= q.sum(axis=1, keepdims=True)
        mu = q @ E
        dev = E[None, :] - mu[:, None]
        d2 = dev * dev
        m2 = np.sum(q * d2, axis=1)
        m3 = np.sum(q * d2 * dev, axis=1)
        m4 = np.sum(q * d2 * d2, axis=1)
        out[s:s + chunk] = np.stack([mu, m2, m3, m4 - 3 * m2 * m2], axis=1)
    return out


def cumulants(dos: IsingDOS, beta: float) -> CumulantReport:
    """Energy cumulants from exact level sums."""
    k = cumulants_many(dos, [beta])[0]
    return CumulantReport(float(beta), tuple(float(v) for v in k))


def log_partition(dos: IsingDOS, beta: float) -> float:
    E, lg = _log_g(dos)
    t = lg - beta * E
    m = t.max()
    return float(m + math.log(np.exp(t - m).sum()))


def specific_heat(dos: IsingDOS, beta: float) -> float:
    """Per-site specific heat ``beta^2 kappa_2 / N``."""
    return beta**2 * cumulants(dos, beta).kappa2 / dos.N


# ---------------------------------------------------------------- scaling


@dataclass(frozen=True)
class ThirdCumulantPeaks:
    """The two extremes of ``kappa_3`` flanking ``beta_c``.

    ``above`` is ``max |kappa_3|`` over ``beta > beta_c``; ``below`` is the
    largest excursion of the opposite sign over ``beta < beta_c``.  Offsets
    are distances from ``beta_c``.
    """

    L: int
    below: float
    above: float
    offset_below: float
    offset_above: float
    beta_below: float
    beta_above: float


def _refine_max(f, grid, values, i, tol):
    """Golden-section refinement of a scanned maximum at ``grid[i]``."""
    if i == 0 or i == grid.size - 1:
        return float(grid[i]), float(values[i])
    a, m, b = float(grid[i - 1]), float(grid[i]), float(grid[i + 1])
    if a > b:
        a, b = b, a
    res = optimize.minimize_scalar(lambda x: -f(x), bracket=(a, m, b), method="golden",
                                   options={"xtol": tol / abs(m)})
    if -res.fun >= values[i] and a <= res.x <= b:
        return float(res.x), float(-res.fun)
    return m, float(values[i])


def kappa3_peaks(dos: IsingDOS, window: float = 0.6, step: float | None = None, tol: float = 1e-8) -> ThirdCumulantPeaks:
    """Locate the ``kappa_3`` extremes on both sides of ``beta_c``.

    A uniform scan with step ``1e-4 beta_c`` over ``beta_c (1 +- window)``
    brackets each extreme, which is then refined to ``tol`` in beta.
    """
    bc = BETA_C
    step = 1e-4 * bc if step is None else step
    n = int(window * bc / step)
    up = bc + np.arange(1, n + 1) * step
    k_up = cumulants_many(dos, up)[:, 2]
    i = int(np.argmax(np.abs(k_up)))
    sign = 1.0 if k_up[i] >= 0 else -1.0
    b_up, v_up = _refine_max(lambda x: sign * cumulants(dos, x).kappa3, up, sign * k_up, i, tol)
    down = bc - np.arange(1, n + 1) * step
    k_down = -sign * cumulants_many(dos, down)[:, 2]
    j = int(np.argmax(k_down))
    b_dn, v_dn = _refine_max(lambda x: -sign * cumulants(dos, x).kappa3, down, k_down, j, tol)
    return ThirdCumulantPeaks(dos.L, v_dn, v_up, bc - b_dn, b_up - bc, b_dn, b_up)


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares slope of ``log y`` against ``log x``."""

    which: str
    slope: float
    intercept: float
    x: tuple
    y: tuple
    residual: float


def _fit(which, x, y):
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.abs(np.asarray(y, dtype=float)))
    A = np.vstack([lx, np.ones_like(lx)]).T
    (slope, icpt), res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = float(np.sqrt(res[0] / lx.size)) if res.size else 0.0
    return ScalingFit(which, float(slope), float(icpt), tuple(map(float, x)), tuple(map(float, y)), resid)


FIT_KINDS = ("kappa2", "kappa3_peak", "kappa3_offset", "kappa4")


def cumulant_scaling_fit(sizes, which: str, beta: float | None = None, dos_loader=cached_dos):
    """Log-log scaling of a cumulant statistic against ``N = L^2``.

    ``which`` is one of ``kappa2`` (fitted against ``N ln N``, slope near 1
    expected), ``kappa4`` (at ``beta``, default ``beta_c``), ``kappa3_peak``
    (mean of the two peak magnitudes) or ``kappa3_offset`` (mean of the
    two peak distances from ``beta_c``).
    """
    sizes = sorted(set(int(L) for L in sizes))
    if len(sizes) < 3:
        raise InsufficientSizes("need at least three lattice sizes")
    if which not in FIT_KINDS:
        raise ConfigError(f"which must be one of {FIT_KINDS}")
    beta = BETA_C if beta is None else float(beta)
    N = np.array([L * L for L in sizes], dtype=float)
    ys = []
    for L in sizes:
        dos = dos_loader(L)
        if which in ("kappa2", "kappa4"):
            rep = cumulants(dos, beta)
            ys.append(rep.kappa2 if which == "kappa2" else rep.kappa4)
        else:
            pk = kappa3_peaks(dos)
            ys.append(0.5 * (pk.below + pk.above) if which == "kappa3_peak" else 0.5 * (pk.offset_below + pk.offset_above))
    x = N * np.log(N) if which == "kappa2" else N
    return _fit(which, x, ys)


def criticality_binning_study(dos: IsingDOS, beta: float, d: int) -> FisherReport:
    """Optimal consecutive ``d``-bin report for the lattice at ``beta``."""
    return dp_exact(dos.ensemble(beta), d).report

"""Optimal consecutive energy binnings.

The coarse-grained Fisher information of a binning is additive over bins,
``C = beta^4 sum_alpha W_alpha^2 / p_alpha``, which gives three solvers:

* :func:`lloyd_max` iterates the midpoint condition (each interior boundary
  sits halfway between the mean energies of its two bins), with multiple
  starts;
* :func:`dp_exact` maximizes over all consecutive cuts of a discrete
  spectrum by dynamic programming;
* :func:`brute_force` enumerates cuts (or arbitrary level partitions) on
  small instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, InstanceTooLarge, NoConvergence, TooManyBins
from .fisher import FisherReport, _report_from_stats, thermal_fisher
from .spectra import ThermalEnsemble

MODES = ("lloyd_max", "dp_exact", "brute_force")
DP_TIE_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class Binning:
    """Consecutive bins ``[b_{alpha-1}, b_alpha)`` with their probabilities.

    ``eps`` holds the mean energy inside each bin (NaN for empty bins).  For
    discrete spectra ``cuts`` holds the index of the first level of every bin
    plus the level count, and interior boundaries sit at gap midpoints.
    """

    boundaries: np.ndarray
    p: np.ndarray
    eps: np.ndarray
    report: FisherReport = field(repr=False)
    cuts: np.ndarray | None = None

    @property
    def d(self) -> int:
        return self.p.size

    @property
    def ratio(self) -> float:
        return self.report.ratio

    @property
    def coarse_C(self) -> float:
        return self.report.coarse_C

    @classmethod
    def from_boundaries(cls, ensemble: ThermalEnsemble, boundaries, warn=False) -> "Binning":
        b = np.asarray(boundaries, dtype=float).copy()
        if b.ndim != 1 or b.size < 2:
            raise ConfigError("need at least two boundaries")
        if np.any(np.diff(b) < 0):
            raise ConfigError("boundaries must be nondecreasing")
        stats = ensemble.interval_stats(b)
        rep = _report_from_stats(ensemble, stats.p, stats.m1, stats.m2, warn)
        cuts = ensemble.cut_indices(b) if ensemble.is_discrete else None
        return cls(b, rep.p, rep.eps, rep, cuts)

    @classmethod
    def from_cuts(cls, ensemble: ThermalEnsemble, cuts) -> "Binning":
        """Binning of a discrete spectrum from interior cut indices.

        ``cuts`` lists, for bins 2..d, the index of their first level.
        """
        return cls.from_boundaries(ensemble, cut_boundaries(ensemble.energies, cuts))


def cut_boundaries(energies, cuts) -> np.ndarray:
    """Boundaries ``[-inf, gap midpoints..., +inf]`` for interior cut indices."""
    E = np.asarray(energies, dtype=float)
    cuts = np.asarray(cuts, dtype=int)
    mids = 0.5 * (E[cuts - 1] + E[cuts]) if cuts.size else np.empty(0)
    return np.concatenate([[-np.inf], mids, [np.inf]])


@dataclass(frozen=True)
class SolverConfig:
    """Options shared by the binning solvers."""

    d: int
    max_iters: int = 10_000
    rel_tol: float = 1e-10
    num_starts: int = 1
    mode: str = "lloyd_max"
    seed: int = 0

    def __post_init__(self):
        if int(self.d) < 1:
            raise ConfigError("d must be >= 1")
        if not self.rel_tol > 0:
            raise ConfigError("rel_tol must be positive")
        if int(self.num_starts) < 1:
            raise ConfigError("num_starts must be >= 1")
        if int(self.max_iters) < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")


@dataclass
class ConvergenceRecord:
    """Per-start iteration counts and final residuals of :func:`lloyd_max`."""

    iterations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    scores: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    best_start: int = 0

    @property
    def all_converged(self) -> bool:
        return all(self.converged)

    def as_dict(self) -> dict:
        return {
            "iterations": list(self.iterations),
            "residuals": [float(r) for r in self.residuals],
            "starts": len(self.iterations),
            "best_start": self.best_start,
            "converged": self.all_converged,
        }


def solve(ensemble: ThermalEnsemble, config: SolverConfig):
    """Dispatch on ``config.mode``; returns ``(binning, record_or_None)``."""
    if config.mode == "lloyd_max":
        return lloyd_max(ensemble, config)
    if config.mode == "dp_exact":
        return dp_exact(ensemble, config.d), None
    return brute_force(ensemble, config.d), None


# ---------------------------------------------------------------- Lloyd-Max


def _outer(ensemble):
    if ensemble.is_discrete:
        return -math.inf, math.inf
    return ensemble.spectrum.support


def _initial_boundaries(ensemble, d, rng, jitter):
    u = np.arange(1, d) / d
    b = np.asarray(ensemble.quantile(u), dtype=float)
    if jitter:
        lo, hi = _outer(ensemble)
        ext = np.concatenate([[lo], b, [hi]])
        left, right = b - ext[:-2], ext[2:] - b
        gap = np.where(np.isfinite(left), left, right)
        gap = np.where(np.isfinite(right), np.minimum(gap, right), gap)
        gap = np.where(np.isfinite(gap), gap, ensemble.std)
        b = np.sort(b + rng.uniform(-0.2, 0.2, size=b.size) * gap)
    return b


def _split_widest(ensemble, inner, P):
    """Replace the boundary of one empty bin by a split of the heaviest bin."""
    lo, hi = _outer(ensemble)
    ext = np.concatenate([[lo], inner, [hi]])
    empty = int(np.flatnonzero(P <= 0)[0])
    heavy = int(np.argmax(P))
    # median of the heaviest bin by mass
    ca, cb = ensemble.cdf(np.array([ext[heavy], ext[heavy + 1]]))
    if ensemble.is_discrete:
        ca = 0.0 if heavy == 0 else ca
        cb = 1.0 if heavy == P.size - 1 else cb
    split = float(np.asarray(ensemble.quantile(np.array([0.5 * (ca + cb)])))[0])
    keep = np.delete(inner, min(empty, inner.size - 1))
    return np.sort(np.append(keep, split))


def _continuous_run(ensemble, d, b, max_iters, rel_tol):
    lo, hi = _outer(ensemble)
    spread = ensemble.std
    resid = math.inf
    for it in range(1, max_iters + 1):
        stats = ensemble.interval_stats(np.concatenate([[lo], b, [hi]]))
        P = stats.p
        if np.any(P <= 0):
            b = _split_widest(ensemble, b, P)
            continue
        eps = ensemble.mean + stats.m1 / P
        new = 0.5 * (eps[:-1] + eps[1:])
        resid = float(np.max(np.abs(new - b))) / spread
        b = new
        if resid <= rel_tol:
            return b, it, resid, True
    return b, max_iters, resid, False


class _DiscreteScorer:
    """Prefix/suffix sums for O(1) bin scores on a discrete spectrum."""

    def __init__(self, ensemble):
        q = ensemble.probabilities
        w = q * (ensemble.energies - ensemble.mean)
        self.E = ensemble.energies
        self.n = q.size
        self.mean = ensemble.mean
        self.cumP = np.concatenate([[0.0], np.cumsum(q)])
        self.cumW = np.concatenate([[0.0], np.cumsum(w)])
        self.revP = np.concatenate([np.cumsum(q[::-1])[::-1], [0.0]])
        self.revW = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])

    def sums(self, i, j):
        i, j = np.asarray(i), np.asarray(j)
        lower = self.cumP[i] < 0.5
        P = np.where(lower, self.cumP[j] - self.cumP[i], self.revP[i] - self.revP[j])
        W = np.where(lower, self.cumW[j] - self.cumW[i], self.revW[i] - self.revW[j])
        return P, W

    def score(self, cuts):
        edges = np.concatenate([[0], cuts, [self.n]])
        P, W = self.sums(edges[:-1], edges[1:])
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(np.sum(np.where(P > 0, W * W / np.where(P > 0, P, 1.0), 0.0)))

    def interval(self, i, js):
        return kernels.interval_scores(self.cumP, self.cumW, self.revP, self.revW, i, js)


def _snap(E, mids):
    """Cut index of the level gap containing each real boundary."""
    return np.clip(np.searchsorted(E, mids, side="left"), 1, E.size - 1)


def _discrete_residual(sc, cuts):
    """Distance of each Lloyd midpoint from its gap, scaled by the spread."""
    edges = np.concatenate([[0], cuts, [sc.n]])
    P, W = sc.sums(edges[:-1], edges[1:])
    if np.any(P <= 0):
        return math.inf
    eps = sc.mean + W / P
    mids = 0.5 * (eps[:-1] + eps[1:])
    lo, hi = sc.E[cuts - 1], sc.E[cuts]
    dist = np.maximum(lo - mids, 0.0) + np.maximum(mids - hi, 0.0)
    return float(dist.max()) if dist.size else 0.0


def _coordinate_polish(sc, cuts):
    """Move one cut at a time to its best position until nothing improves."""
    cuts = cuts.copy()
    best = sc.score(cuts)
    improved = True
    while improved:
        improved = False
        for a in range(cuts.size):
            left = 0 if a == 0 else cuts[a - 1]
            right = sc.n if a == cuts.size - 1 else cuts[a + 1]
            cand = np.arange(left + 1, right)
            if cand.size == 0:
                continue
            P, W = sc.sums(cand, np.full(cand.size, right))
            with np.errstate(divide="ignore", invalid="ignore"):
                tail = np.where(P > 0, W * W / np.where(P > 0, P, 1.0), 0.0)
            s = sc.interval(left, cand) + tail
            j = int(cand[np.argmax(s)])
            trial = cuts.copy()
            trial[a] = j
            val = sc.score(trial)
            if val > best * (1 + 1e-15) + 1e-300:
                cuts, best, improved = trial, val, True
    return cuts


def _block_moves(k):
    """Shift every contiguous run of cuts one level left or right."""
    moves = []
    for i in range(k):
        for j in range(i + 1, k + 1):
            for step in (-1, 1):
                m = np.zeros(k, dtype=int)
                m[i:j] = step
                moves.append(m)
    return np.array(moves).reshape(-1, k)


def _block_polish(sc, cuts):
    """Coordinate polish, then accept improving block shifts until none is left.

    Snapped Lloyd fixed points are often stuck where two neighbouring cuts
    would both have to move by one level for the score to rise.
    """
    cuts = _coordinate_polish(sc, cuts)
    if cuts.size < 2:
        return cuts
    best = sc.score(cuts)
    moves = _block_moves(cuts.size)
    while True:
        cand = cuts[None, :] + moves
        full = np.concatenate([np.zeros((len(cand), 1), dtype=int), cand, np.full((len(cand), 1), sc.n)], axis=1)
        cand = cand[np.all(np.diff(full, axis=1) > 0, axis=1)]
        if cand.size == 0:
            return cuts
        vals = np.array([sc.score(c) for c in cand])
        k = int(np.argmax(vals))
        if not vals[k] > best * (1 + 1e-15) + 1e-300:
            return cuts
        cuts = _coordinate_polish(sc, cand[k])
        best = sc.score(cuts)


def _discrete_run(ensemble, sc, d, b, max_iters, spread):
    E = sc.E
    cuts = np.unique(_snap(E, b))
    seen = set()
    it = 0
    while it < max_iters:
        it += 1
        while cuts.size < d - 1:
            # re-seed an empty bin inside the heaviest one
            edges = np.concatenate([[0], cuts, [sc.n]])
            P, _ = sc.sums(edges[:-1], edges[1:])
            order = np.argsort(-P)
            for k in order:
                i, j = edges[k], edges[k + 1]
                if j - i >= 2:
                    target = sc.cumP[i] + 0.5 * P[k]
                    m = int(np.clip(np.searchsorted(sc.cumP, target), i + 1, j - 1))
                    cuts = np.unique(np.append(cuts, m))
                    break
        key = tuple(cuts.tolist())
        if key in seen:
            break
        seen.add(key)
        edges = np.concatenate([[0], cuts, [sc.n]])
        P, W = sc.sums(edges[:-1], edges[1:])
        eps = sc.mean + W / P
        new = np.unique(_snap(E, 0.5 * (eps[:-1] + eps[1:])))
        if np.array_equal(new, cuts):
            break
        cuts = new
    polished = _block_polish(sc, cuts)
    resid = _discrete_residual(sc, polished) / spread
    converged = it < max_iters or resid == 0
    return polished, it, resid, converged


def lloyd_max(ensemble: ThermalEnsemble, config: SolverConfig):
    """Best binning found by Lloyd-Max iteration over ``config.num_starts`` starts.

    The first start uses equal-mass quantiles of ``q(E)``; later starts jitter
    those boundaries by up to 20% of the neighbouring quantile gap.  On a
    discrete spectrum each midpoint is snapped to the level gap containing it,
    iteration stops when the cut set repeats, and each result is polished by
    moving single cuts to their best position and shifting runs of adjacent
    cuts by one level.

    Returns
    -------
    (Binning, ConvergenceRecord)

    Raises
    ------
    NoConvergence
        If some start exhausts ``max_iters``; ``exc.partial`` holds the
        ``(Binning, ConvergenceRecord)`` pair.
    """
    d = int(config.d)
    if d < 2:
        raise ConfigError("Lloyd-Max needs d >= 2")
    if ensemble.is_discrete and d > ensemble.spectrum.n_levels:
        raise TooManyBins(f"d={d} exceeds {ensemble.spectrum.n_levels} distinct levels")
    rng = np.random.Generator(np.random.Philox(config.seed))
    record = ConvergenceRecord()
    spread = ensemble.std if ensemble.std > 0 else 1.0
    sc = _DiscreteScorer(ensemble) if ensemble.is_discrete else None
    best = None
    for start in range(config.num_starts):
        b0 = _initial_boundaries(ensemble, d, rng, jitter=start > 0)
        if sc is not None:
            cuts, it, resid, ok = _discrete_run(ensemble, sc, d, b0, config.max_iters, spread)
            binning = Binning.from_cuts(ensemble, cuts)
        else:
            b, it, resid, ok = _continuous_run(ensemble, d, b0, config.max_iters, config.rel_tol)
            lo, hi = _outer(ensemble)
            binning = Binning.from_boundaries(ensemble, np.concatenate([[lo], b, [hi]]))
        record.iterations.append(it)
        record.residuals.append(resid)
        record.scores.append(binning.coarse_C)
        record.converged.append(bool(ok))
        if best is None or binning.coarse_C > best.coarse_C * (1 + DP_TIE_TOL):
            best, record.best_start = binning, start
    if not record.all_converged:
        raise NoConvergence(
            f"Lloyd-Max did not reach rel_tol={config.rel_tol} within {config.max_iters} iterations",
            partial=(best, record),
        )
    return best, record


# ---------------------------------------------------------------- exact DP


def dp_exact(ensemble: ThermalEnsemble, d: int) -> Binning:
    """Globally optimal consecutive ``d``-bin partition of a discrete spectrum.

    Ties within a relative ``1e-14`` resolve to the lexicographically
    smallest cut vector.
    """
    if not ensemble.is_discrete:
        raise ConfigError("dp_exact needs a discrete spectrum")
    n = ensemble.spectrum.n_levels
    d = int(d)
    if d < 1:
        raise ConfigError("d must be >= 1")
    if d > n:
        raise TooManyBins(f"d={d} exceeds {n} distinct levels")
    sc = _DiscreteScorer(ensemble)
    f = kernels.dp_suffix(sc.cumP, sc.cumW, sc.revP, sc.revW, d)
    cuts = []
    i = 0
    for k in range(d, 1, -1):
        js = np.arange(i + 1, n - k + 2)
        vals = sc.interval(i, js) + f[k - 1, js]
        target = f[k, i]
        ok = vals >= target - DP_TIE_TOL * (1 + abs(target))
        i = int(js[np.argmax(ok)])
        cuts.append(i)
    return Binning.from_cuts(ensemble, np.array(cuts, dtype=int))


# ---------------------------------------------------------------- brute force


@dataclass(frozen=True, eq=False)
class LevelPartition:
    """Assignment of each level to one of ``d`` outcomes (not necessarily consecutive)."""

    labels: np.ndarray
    p: np.ndarray
    coarse_C: float
    ratio: float


def brute_force(ensemble: ThermalEnsemble, d: int, allow_nonconsecutive: bool = False):
    """Exhaustive optimum over consecutive cuts, or over all level partitions.

    Consecutive mode returns a :class:`Binning` and is limited to
    ``C(D-1, d-1) <= 1e6`` candidates; nonconsecutive mode returns a
    :class:`LevelPartition` and is limited to ``d^D <= 1e7`` assignments.
    """
    if not ensemble.is_discrete:
        raise ConfigError("brute_force needs a discrete spectrum")
    n = ensemble.spectrum.n_levels
    d = int(d)
    if not 1 <= d <= n:
        raise TooManyBins(f"d={d} must lie in [1, {n}]")
    q = ensemble.probabilities
    w = q * (ensemble.energies - ensemble.mean)
    b4 = ensemble.beta**4
    F = thermal_fisher(ensemble)
    if allow_nonconsecutive:
        if d**n > 10**7:
            raise InstanceTooLarge(f"{d}^{n} assignments exceed 1e7")
        return _brute_partition(q, w, d, n, b4, F)
    if math.comb(n - 1, d - 1) > 10**6:
        raise InstanceTooLarge(f"C({n - 1}, {d - 1}) cut sets exceed 1e6")
    best, best_cuts = -1.0, ()
    for cuts in itertools.combinations(range(1, n), d - 1):
        edges = (0,) + cuts + (n,)
        s = 0.0
        for a in range(d):
            P = q[edges[a]:edges[a + 1]].sum()
            if P > 0:
                W = w[edges[a]:edges[a + 1]].sum()
                s += W * W / P
        if s > best + DP_TIE_TOL * (1 + abs(best)):
            best, best_cuts = s, cuts
    return Binning.from_cuts(ensemble, np.array(best_cuts, dtype=int))


def _brute_partition(q, w, d, n, b4, F, chunk=1 << 16):
    best, best_labels, best_p = -1.0, None, None
    total = d**n
    powers = d ** np.arange(n - 1, -1, -1)
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total))
        labels = (codes[:, None] // powers[None, :]) % d
        onehot = labels[:, None, :] == np.arange(d)[None, :, None]
        P = onehot @ q
        W = onehot @ w
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(P > 0, W * W / np.where(P > 0, P, 1.0), 0.0).sum(axis=1)
        k = int(np.argmax(s))
        if s[k] > best + DP_TIE_TOL * (1 + abs(best)):
            best, best_labels, best_p = float(s[k]), labels[k].copy(), P[k].copy()
    C = b4 * best
    return LevelPartition(best_labels, best_p, C, C / F if F > 0 else 0.0)


# ---------------------------------------------------------------- landscape


def ratio_landscape(ensemble: ThermalEnsemble, d: int, grid):
    """``C/F`` over a grid of interior boundary positions.

    For ``d = 2``, ``grid`` is a 1-D array of boundary positions and the
    result has the same shape.  For larger ``d`` it is a sequence of ``d-1``
    1-D arrays; the result is evaluated on their outer product, with NaN
    where the boundaries are not increasing.
    """
    d = int(d)
    if d < 2:
        raise ConfigError("landscape needs d >= 2")
    lo, hi = _outer(ensemble)
    F = thermal_fisher(ensemble)
    axes = [np.asarray(grid, dtype=float)] if d == 2 else [np.asarray(g, dtype=float) for g in grid]
    if len(axes) != d - 1:
        raise ConfigError(f"need {d - 1} boundary grids for d={d}")
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    out = np.full(pts.shape[0], np.nan)
    b4 = ensemble.beta**4
    for k, row in enumerate(pts):
        if np.any(np.diff(row) <= 0):
            continue
        stats = ensemble.interval_stats(np.concatenate([[lo], row, [hi]]))
        keep = stats.p >= 1e-15
        C = b4 * float(np.sum(stats.m1[keep] ** 2 / stats.p[keep]))
        out[k] = C / F if F > 0 else 0.0
    return out.reshape(mesh[0].shape)

"""Gamma sweeps, avoided-crossing minima and ensemble statistics."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import theory
from .errors import BracketError, ConvergenceError, QremError, ValidationError
from .model import EnergyTable, ModelParams, ground_state_energy, sample_energies
from .spectral import DEFAULT_TOL, HamiltonianView, lowest_eigenpairs, start_vector

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class GapPoint:
    gamma: float
    levels: np.ndarray
    iterations: int
    max_residual: float

    @property
    def gap(self):
        return float(self.levels[1] - self.levels[0])


@dataclass
class GapCurve:
    n: int
    seed: int
    points: list = field(default_factory=list)
    tol: float = DEFAULT_TOL

    @property
    def gammas(self):
        return np.array([p.gamma for p in self.points])

    @property
    def levels(self):
        return np.array([p.levels for p in self.points])

    @property
    def gaps(self):
        return np.array([p.gap for p in self.points])

    def argmin(self):
        return int(np.argmin(self.gaps))

    def lipschitz_violations(self, norm_estimate=None):
        """Grid intervals where some level moved faster than n * dgamma allows."""
        g = self.gammas
        lv = self.levels
        if len(g) < 2:
            return []
        scale = norm_estimate if norm_estimate is not None else float(np.max(np.abs(lv)))
        slack = 2 * self.tol * (scale + 1.0)
        bound = self.n * np.diff(g)[:, None] + slack
        bad = np.abs(np.diff(lv, axis=0)) > bound
        return [int(i) for i in np.nonzero(bad.any(axis=1))[0]]

    def csv_rows(self):
        k = self.levels.shape[1] if self.points else 0
        columns = ["gamma", *[f"lambda_{i}" for i in range(k)], "gap", "iterations", "max_residual"]
        rows = [
            [p.gamma, *map(float, p.levels), p.gap, p.iterations, p.max_residual]
            for p in self.points
        ]
        return columns, rows


@dataclass
class MinGapRecord:
    n: int
    seed: int
    gamma_star: float
    min_gap: float
    e_classical: float
    prediction: float
    predicted_gamma: float
    tau_estimate: float
    bracket: tuple = (0.0, 0.0)
    gap_at_bracket: tuple = (0.0, 0.0)
    evaluations: int = 0
    expansions: int = 0
    window_width: float | None = None

    @property
    def ratio(self):
        return self.min_gap / self.prediction

    @property
    def gamma_deviation(self):
        """gamma_star * n / |E0| - 1."""
        return self.gamma_star / self.predicted_gamma - 1.0

    def to_dict(self):
        d = asdict(self)
        d["bracket"] = list(self.bracket)
        d["gap_at_bracket"] = list(self.gap_at_bracket)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("record", None)
        d["bracket"] = tuple(d.get("bracket", (0.0, 0.0)))
        d["gap_at_bracket"] = tuple(d.get("gap_at_bracket", (0.0, 0.0)))
        return cls(**d)


@dataclass(frozen=True)
class SweepConfig:
    tol: float = DEFAULT_TOL
    gamma_tol: float = 1e-4
    bracket_factors: tuple = (0.5, 1.5)
    max_expansions: int = 3
    scan_points: int = 9
    window_factor: float | None = None

    def to_dict(self):
        d = asdict(self)
        d["bracket_factors"] = list(self.bracket_factors)
        return d


def _gap_at(table, gamma, tol, k=2):
    res = lowest_eigenpairs(HamiltonianView(table, gamma), k, tol, seed=table.seed)
    return res.gap


def gap_sweep(table: EnergyTable, gamma_min, gamma_max, steps, k=2, tol=DEFAULT_TOL, warm_start=True):
    """Lowest ``k`` levels on a uniform gamma grid, warm-starting each solve."""
    if not gamma_min < gamma_max:
        raise ValidationError("need gamma_min < gamma_max")
    if steps < 2:
        raise ValidationError("need at least 2 grid points")
    if k < 2:
        raise ValidationError("a gap needs k >= 2")
    curve = GapCurve(table.n, table.seed, tol=tol)
    prev = None
    for gamma in np.linspace(gamma_min, gamma_max, steps):
        gamma = float(gamma)
        h = HamiltonianView(table, gamma)
        v0 = None
        if warm_start and prev is not None:
            v0 = prev.sum(axis=0) + 0.1 * start_vector(table.dim, table.seed, gamma)
        try:
            res = lowest_eigenpairs(h, k, tol, v0=v0, seed=table.seed, return_vectors=warm_start)
        except ConvergenceError as exc:
            raise ConvergenceError(f"sweep failed at gamma={gamma}: {exc}", exc.result) from exc
        prev = res.eigenvectors
        curve.points.append(
            GapPoint(gamma, res.eigenvalues, res.iterations, float(np.max(res.residual_norms)))
        )
    return curve


def golden_section(f, a, b, xtol):
    """Minimise ``f`` on [a, b]; return (x, f(x), all evaluations as dict)."""
    cache = {}

    def fx(x):
        if x not in cache:
            cache[x] = f(x)
        return cache[x]

    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fx(c), fx(d)
    while b - a > xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fx(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fx(d)
    x = min(cache, key=cache.get)
    return x, cache[x], cache


def find_min_gap(table: EnergyTable, bracket=None, config: SweepConfig = SweepConfig()) -> MinGapRecord:
    """Locate the avoided-crossing minimum of lambda_1 - lambda_0 over gamma.

    The default bracket is ``bracket_factors`` times the predicted location
    |E0|/n.  The bracket is first scanned on ``scan_points`` evenly spaced
    fields, since crossings with excited classical levels can make the gap
    non-unimodal; golden-section search then refines the cell pair around
    the best scan point.  A minimum on a bracket end doubles the bracket
    toward that side, at most ``max_expansions`` times.  Every evaluation
    is a cold solve from a start vector keyed on (seed, gamma).
    """
    _, e0 = ground_state_energy(table)
    n = table.n
    prediction, predicted_gamma = theory.min_gap_prediction(e0, n)
    if bracket is None:
        lo_f, hi_f = config.bracket_factors
        bracket = (lo_f * predicted_gamma, hi_f * predicted_gamma)
    lo, hi = map(float, bracket)
    if not 0 <= lo < hi:
        raise ValidationError(f"invalid bracket {bracket}")
    if config.scan_points < 3:
        raise ValidationError("scan_points must be >= 3")

    cache = {}

    def f(gamma):
        if gamma not in cache:
            cache[gamma] = _gap_at(table, gamma, config.tol)
        return cache[gamma]

    expansions = 0
    while True:
        grid = np.linspace(lo, hi, config.scan_points)
        values = [f(float(g)) for g in grid]
        i = int(np.argmin(values))
        a, b = float(grid[max(i - 1, 0)]), float(grid[min(i + 1, len(grid) - 1)])
        x, fmin, _ = golden_section(f, a, b, config.gamma_tol)
        f_lo, f_hi = values[0], values[-1]
        at_lo = f_lo <= fmin or x - lo < 2 * config.gamma_tol
        at_hi = f_hi <= fmin or hi - x < 2 * config.gamma_tol
        if not (at_lo or at_hi):
            break
        if (at_lo and lo == 0.0) or expansions >= config.max_expansions:
            raise BracketError(
                f"n={n} seed={table.seed}: gap minimum stuck at bracket end "
                f"[{lo:.6g}, {hi:.6g}] after {expansions} expansions"
            )
        expansions += 1
        width = hi - lo
        if at_lo:
            lo = max(0.0, lo - width)
        else:
            hi = hi + width
    evaluations = len(cache)

    record = MinGapRecord(
        n=n,
        seed=table.seed,
        gamma_star=float(x),
        min_gap=float(fmin),
        e_classical=float(e0),
        prediction=float(prediction),
        predicted_gamma=float(predicted_gamma),
        tau_estimate=theory.annealing_time_estimate(fmin) if fmin > 0 else math.inf,
        bracket=(lo, hi),
        gap_at_bracket=(float(f_lo), float(f_hi)),
        evaluations=evaluations,
        expansions=expansions,
    )
    if config.window_factor is not None:
        record.window_width = gap_window_width(table, record, config.window_factor, config.tol)
    return record


def gap_window_width(table: EnergyTable, record: MinGapRecord, factor=2.0, tol=DEFAULT_TOL):
    """Width in gamma of the region around gamma_star where gap < factor * min_gap.

    The region is clipped at gamma = 0 when the classical gap itself is
    below the threshold.
    """
    target = factor * record.min_gap

    def g(gamma):
        return _gap_at(table, gamma, tol) - target

    edges = []
    for sign in (-1.0, 1.0):
        step = max(record.min_gap / table.n, 1e-4)
        inner = record.gamma_star
        outer = inner + sign * step
        edge = None
        while edge is None:
            if outer <= 0.0:
                outer = 0.0
                if g(outer) < 0:
                    edge = 0.0
                    break
            elif g(outer) < 0:
                inner = outer
                step *= 2.0
                outer = inner + sign * step
                continue
            a, b = sorted((inner, outer))
            edge = brentq(g, a, b, xtol=1e-7)
        edges.append(edge)
    return edges[1] - edges[0]


def _min_gap_for_seed(args):
    n, seed, config = args
    try:
        table = sample_energies(ModelParams(n, seed))
        return seed, find_min_gap(table, config=config), None
    except QremError as exc:
        return seed, None, f"{type(exc).__name__}: {exc}"


@dataclass
class EnsembleSummary:
    n: int
    seeds: list
    records: list
    failures: dict = field(default_factory=dict)
    median_gap: float = math.nan
    mean_gap: float = math.nan
    min_gap: float = math.nan
    max_gap: float = math.nan
    mean_ratio: float = math.nan
    median_ratio: float = math.nan

    @classmethod
    def from_records(cls, n, seeds, records, failures=None):
        s = cls(n=n, seeds=sorted(seeds), records=sorted(records, key=lambda r: r.seed),
                failures=dict(sorted((failures or {}).items())))
        s._fill_stats()
        return s

    def _stats(self):
        gaps = np.array([r.min_gap for r in self.records])
        ratios = np.array([r.ratio for r in self.records])
        if len(gaps) == 0:
            return dict(median_gap=math.nan, mean_gap=math.nan, min_gap=math.nan,
                        max_gap=math.nan, mean_ratio=math.nan, median_ratio=math.nan)
        return dict(
            median_gap=float(np.median(gaps)),
            mean_gap=float(np.mean(gaps)),
            min_gap=float(np.min(gaps)),
            max_gap=float(np.max(gaps)),
            mean_ratio=float(np.mean(ratios)),
            median_ratio=float(np.median(ratios)),
        )

    def _fill_stats(self):
        for k, v in self._stats().items():
            setattr(self, k, v)

    def is_consistent(self):
        """Stored statistics agree with a recomputation from the records."""
        fresh = self._stats()
        return all(
            (math.isnan(v) and math.isnan(getattr(self, k))) or v == getattr(self, k)
            for k, v in fresh.items()
        )

    @property
    def dispersion(self):
        return self.max_gap / self.min_gap

    def to_dict(self):
        return {
            "n": self.n,
            "seeds": list(self.seeds),
            "failures": {str(k): v for k, v in self.failures.items()},
            **self._stats(),
        }


def ensemble_run(n, seeds, config: SweepConfig = SweepConfig(), workers=1) -> EnsembleSummary:
    """One MinGapRecord per seed; failures are collected, not raised.

    Output order is by seed and does not depend on ``workers``.
    """
    seeds = sorted({int(s) for s in seeds})
    if not seeds:
        raise ValidationError("seed list is empty")
    jobs = [(n, s, config) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_min_gap_for_seed, jobs))
    else:
        results = [_min_gap_for_seed(j) for j in jobs]
    records = [r for _, r, err in results if r is not None]
    failures = {s: err for s, r, err in results if err is not None}
    return EnsembleSummary.from_records(n, seeds, records, failures)


def fit_gap_scaling(summaries):
    """Least-squares slope and intercept of ln(median min_gap) against n."""
    ns = np.array([s.n for s in summaries], dtype=float)
    ys = np.log([s.median_gap for s in summaries])
    if len(ns) < 2:
        raise ValidationError("need at least two sizes to fit a slope")
    slope, intercept = np.polyfit(ns, ys, 1)
    return float(slope), float(intercept)

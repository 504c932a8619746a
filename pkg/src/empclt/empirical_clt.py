"""Empirical field over (time, threshold) pairs, its Gaussian limit, and
sup-statistic convergence diagnostics.

The field at (t, y) from n paths is

    nu_n(t, y) = n^(-1/2) sum_j [ 1{X_j(t) <= y} - P(X(t) <= y) ],

centered with the analytic marginal.  The candidate limit is the centered
Gaussian field with covariance P(X_s <= x, X_t <= y) - F_s(x) F_t(y).  The
diagnostic functional is sup |field| over the finite index set: distributions
of the sup under the empirical field (at a ladder of n) and under the limit
are compared by the two-sample KS distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grids import TimeGrid
from .metrics import IndexPoint, quantile_grid
from .process_models import ProcessSpec, analytic_cdf, generate_paths, psd_factor
from .rng import GAUSS_FIELD, SeedSpec, stream


def grid_from_index(spec: ProcessSpec, index) -> TimeGrid:
    ts = sorted({ip.t for ip in index})
    kind = spec.grid_kind()
    if kind == "interval-1d":
        horizon = max(1.0, max(ts))
    elif kind == "sheet-2d":
        horizon = max(1.0, max(max(t) for t in ts))
    else:
        horizon = 1.0
    return TimeGrid(kind, tuple(ts), horizon)


def default_index(spec: ProcessSpec, grid: TimeGrid, levels: int = 64) -> list:
    """Quantile-spaced thresholds per time point, plus family landmarks.

    For the Lipschitz oscillator the level 4.25 t separating the two branch
    value bands is always included.
    """
    index = []
    for t in grid:
        cdf = analytic_cdf(spec, t)
        ys = list(quantile_grid([cdf], levels))
        if spec.family == "lip1-osc" and t > 0:
            ys.append(4.25 * t)
        for y in np.unique(ys):
            index.append(IndexPoint(t, float(y)))
    return index


@dataclass
class EmpiricalField:
    index: list
    values: np.ndarray
    n: int


@dataclass
class LimitFieldModel:
    """Estimated covariance of the limiting Gaussian field."""

    index: list
    covariance: np.ndarray
    estimation_stderr: np.ndarray
    _factor: np.ndarray | None = field(default=None, repr=False)

    def factor(self, rel_tol: float = 1e-10) -> np.ndarray:
        if self._factor is None:
            self._factor = psd_factor(self.covariance, rel_tol)
        return self._factor


@dataclass
class SupStatDistribution:
    replicates: np.ndarray
    source: str


def _group_index(index):
    """Group index points by time point: (t, positions, thresholds)."""
    by_t = {}
    for pos, ip in enumerate(index):
        by_t.setdefault(ip.t, []).append(pos)
    groups = []
    for t, positions in by_t.items():
        ys = np.array([index[p].y for p in positions])
        order = np.argsort(ys)
        groups.append((t, np.asarray(positions)[order], ys[order]))
    return groups


def _field_values(paths: np.ndarray, grid: TimeGrid, groups, centers) -> np.ndarray:
    """nu_n at every index point from one path batch."""
    n = paths.shape[0]
    out = np.empty(sum(len(p) for _, p, _ in groups))
    root = math.sqrt(n)
    for (t, positions, ys), f_vals in zip(groups, centers):
        col = np.sort(paths[:, grid.index_of(t)])
        counts = np.searchsorted(col, ys, side="right")
        out[positions] = (counts - n * f_vals) / root
    return out


def _analytic_centers(spec, groups):
    return [np.asarray(analytic_cdf(spec, t).eval_cdf(ys), dtype=float) for t, _, ys in groups]


def build_empirical_field(spec: ProcessSpec, index, n: int, seed: SeedSpec) -> EmpiricalField:
    """One realization of the empirical field; centering uses the exact
    marginals, never a plug-in estimate."""
    grid = grid_from_index(spec, index)
    groups = _group_index(index)
    centers = _analytic_centers(spec, groups)
    paths = generate_paths(spec, grid, n, seed.master_seed, seed.replicate_index)
    values = _field_values(paths, grid, groups, centers)
    return EmpiricalField(index=list(index), values=values, n=n)


def estimate_limit_field(spec: ProcessSpec, index, m_paths: int, seed: SeedSpec) -> LimitFieldModel:
    """Sample covariance of the indicator family over m_paths joint draws.

    Using the same draws for joint and marginal terms keeps the matrix
    positive semidefinite by construction, so factorization only ever clips
    round-off noise.
    """
    if m_paths < 10_000:
        raise ValueError("need m_paths >= 10^4")
    grid = grid_from_index(spec, index)
    paths = generate_paths(spec, grid, m_paths, seed.master_seed, seed.replicate_index)
    cols = [grid.index_of(ip.t) for ip in index]
    ys = np.array([ip.y for ip in index])
    ind = (paths[:, cols] <= ys[None, :]).astype(np.float32)
    p = ind.mean(axis=0, dtype=np.float64)
    centered = ind - p.astype(np.float32)[None, :]
    cov = (centered.T @ centered).astype(np.float64) / m_paths
    sq = centered**2
    second = (sq.T @ sq).astype(np.float64) / m_paths
    se = np.sqrt(np.clip(second - cov**2, 0.0, None) / m_paths)
    return LimitFieldModel(index=list(index), covariance=cov, estimation_stderr=se)


def linear_u_limit_model(index) -> LimitFieldModel:
    """Exact limit covariance for the X_t = t U family.

    Each indicator 1{tU <= y} equals 1{U <= r} with r = y/t clipped to
    [0, 1] (r = 1 when t = 0 and y >= 0, r = 0 when t = 0 and y < 0), so the
    limit field is the tied-down Wiener process evaluated at r and the
    covariance is min(r, r') - r r'.
    """
    r = np.array([_linear_u_level(ip) for ip in index])
    cov = np.minimum.outer(r, r) - np.outer(r, r)
    return LimitFieldModel(index=list(index), covariance=cov, estimation_stderr=np.zeros_like(cov))


def _linear_u_level(ip: IndexPoint) -> float:
    if ip.t == 0:
        return 1.0 if ip.y >= 0 else 0.0
    return float(np.clip(ip.y / ip.t, 0.0, 1.0))


class EmpiricalSupSource:
    """sup |nu_n| replicates; replicate r draws its n paths from the
    counter-based stream (seed, PATHS, offset + r), so a smaller n reuses a
    prefix of the same paths (the ladder rungs are coupled)."""

    def __init__(self, spec: ProcessSpec, index, n: int):
        self.spec = spec
        self.index = list(index)
        self.n = n
        self.grid = grid_from_index(spec, index)
        self.groups = _group_index(self.index)
        self.centers = _analytic_centers(spec, self.groups)
        self.label = f"empirical(n={n})"

    def sample_range(self, master_seed: int, start: int, stop: int, offset: int = 0) -> np.ndarray:
        out = np.empty(stop - start)
        for r in range(start, stop):
            paths = generate_paths(self.spec, self.grid, self.n, master_seed, offset + r)
            vals = _field_values(paths, self.grid, self.groups, self.centers)
            out[r - start] = np.abs(vals).max()
        return out


class GaussianSupSource:
    """sup |G| replicates for a centered Gaussian field given by a limit model."""

    def __init__(self, model: LimitFieldModel):
        self.factor_matrix = model.factor()
        self.label = "gaussian-limit"

    def sample_range(self, master_seed: int, start: int, stop: int, offset: int = 0) -> np.ndarray:
        k = self.factor_matrix.shape[0]
        zs = np.empty((k, stop - start))
        for r in range(start, stop):
            zs[:, r - start] = stream(master_seed, GAUSS_FIELD, offset + r).standard_normal(k)
        vals = self.factor_matrix @ zs
        return np.abs(vals).max(axis=0)


class TiedDownWienerSupSource:
    """Direct simulation of sup_r |B(r) - r B(1)| over a finite r-grid.

    Structurally independent of the covariance-factorization route: the
    Brownian path comes from its independent increments.
    """

    def __init__(self, r_points):
        r = np.unique(np.clip(np.asarray(r_points, dtype=float), 0.0, 1.0))
        self.r = r
        self.aug = np.unique(np.concatenate((r, [1.0])))
        self.incr_sd = np.sqrt(np.diff(np.concatenate(([0.0], self.aug))))
        self.sel = np.searchsorted(self.aug, r)
        self.label = "tied-down-wiener"

    def sample_range(self, master_seed: int, start: int, stop: int, offset: int = 0) -> np.ndarray:
        out = np.empty(stop - start)
        k = len(self.aug)
        for r in range(start, stop):
            z = stream(master_seed, GAUSS_FIELD, offset + r).standard_normal(k)
            b = np.cumsum(self.incr_sd * z)
            w = b - self.aug * b[-1]
            out[r - start] = np.abs(w[self.sel]).max()
        return out


def sample_sup_distribution(source, reps: int, seed: SeedSpec) -> SupStatDistribution:
    """reps independent draws of the sup statistic from the named source."""
    if reps < 500:
        raise ValueError("need reps >= 500")
    vals = source.sample_range(seed.master_seed, 0, reps, offset=seed.replicate_index)
    return SupStatDistribution(replicates=vals, source=source.label)


def ks_two_sample(a, b) -> float:
    """sup_x |F_a(x) - F_b(x)| between two empirical cdfs."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    allv = np.concatenate((a, b))
    fa = np.searchsorted(a, allv, side="right") / len(a)
    fb = np.searchsorted(b, allv, side="right") / len(b)
    return float(np.abs(fa - fb).max())


@dataclass
class CltDiagnosticReport:
    n_ladder: list
    ks: list
    threshold: float
    reps: int
    verdict: str
    sup_samples: dict  # n -> array, plus "limit"

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.ks, self.ks[1:]))

    def csv_rows(self):
        scale = math.sqrt(2.0 / self.reps)
        return [
            {"n": n, "ks": ks, "stderr": scale, "verdict": self.verdict}
            for n, ks in zip(self.n_ladder, self.ks)
        ]


def clt_diagnostic(
    spec: ProcessSpec,
    index,
    n_ladder,
    reps: int,
    seed: SeedSpec,
    limit_source=None,
    limit_m: int = 20_000,
    ks_threshold: float = 0.08,
) -> CltDiagnosticReport:
    """Two-sample KS between empirical-sup and limit-sup distributions per n.

    A decreasing KS profile ending below the threshold is consistent with
    weak convergence; a plateau or growth is not.  Finite-n bias makes this
    a trend diagnostic, not a hypothesis test.
    """
    if limit_source is None:
        model = estimate_limit_field(spec, index, limit_m, SeedSpec(seed.master_seed, seed.replicate_index + 1))
        limit_source = GaussianSupSource(model)
    limit_sups = sample_sup_distribution(limit_source, reps, seed).replicates
    ks = []
    samples = {"limit": limit_sups}
    for n in n_ladder:
        source = EmpiricalSupSource(spec, index, n)
        sups = sample_sup_distribution(source, reps, seed).replicates
        samples[n] = sups
        ks.append(ks_two_sample(sups, limit_sups))
    decreasing = all(b < a for a, b in zip(ks, ks[1:]))
    verdict = "consistent" if decreasing and ks[-1] < ks_threshold else "inconsistent"
    return CltDiagnosticReport(
        n_ladder=list(n_ladder),
        ks=ks,
        threshold=ks_threshold,
        reps=reps,
        verdict=verdict,
        sup_samples=samples,
    )

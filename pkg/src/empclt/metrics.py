"""Metric structure on (index point, threshold) pairs and inequality oracles.

tau((s,x),(t,y)) is the L2 distance between the indicator variables
1{X_s <= x} and 1{X_t <= y}; rho is the analytic comparison metric of the
process family; lambda is their maximum.  The check_* oracles estimate both
sides of the distribution-closeness inequalities by Monte Carlo and flag a
violation only when the estimate exceeds its bound by a z-score margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grids import TimeGrid
from .process_models import ProcessSpec, analytic_cdf, analytic_rho, generate_paths
from .rng import SeedSpec


@dataclass(frozen=True)
class IndexPoint:
    """A (time point, threshold) pair indexing one indicator variable."""

    t: object
    y: float


@dataclass
class PseudoMetricTable:
    """Symmetric nonnegative distance matrix over a finite list of keys."""

    points: list
    d: np.ndarray
    exact: bool = True
    stderr: np.ndarray | None = None

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        k = len(self.points)
        if self.d.shape != (k, k):
            raise ValueError("distance matrix shape mismatch")

    def validate(self, tol: float = 1e-9):
        """Raise if symmetry, zero diagonal, or the triangle inequality fail.

        Estimated tables get slack 3x the combined stderr per triple.
        """
        if np.any(self.d < -tol):
            raise ValueError("negative distances")
        if np.abs(np.diag(self.d)).max() > tol:
            raise ValueError("nonzero diagonal")
        if np.abs(self.d - self.d.T).max() > tol:
            raise ValueError("asymmetric distance matrix")
        slack = np.full_like(self.d, tol)
        if not self.exact:
            if self.stderr is None:
                raise ValueError("estimated table requires stderr")
            slack = slack + 3.0 * self.stderr
        lhs = self.d[:, :, None]
        via = self.d[:, None, :] + self.d[None, :, :]
        allowance = slack[:, :, None] + slack[:, None, :] + slack[None, :, :]
        worst = np.max(lhs - via - allowance)
        if worst > 0:
            raise ValueError(f"triangle inequality violated by {worst:.3e}")

    def diameter(self, idx=None) -> float:
        sub = self.d if idx is None else self.d[np.ix_(idx, idx)]
        return float(sub.max()) if sub.size else 0.0

    def ball(self, i: int, eps: float):
        return [j for j in range(len(self.points)) if self.d[i, j] <= eps]

    def index_of(self, p):
        return self.points.index(p)


def lambda_metric(tau: float, rho: float) -> float:
    """max(tau, rho); both arguments must be nonnegative."""
    if tau < 0 or rho < 0:
        raise ValueError("metric values must be nonnegative")
    return max(tau, rho)


def rho_table(
    spec: ProcessSpec, grid: TimeGrid, alpha: float = 0.5, theta: float | None = None
) -> PseudoMetricTable:
    """Exact table of the comparison metric over all grid pairs."""
    pts = list(grid)
    k = len(pts)
    d = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            d[i, j] = d[j, i] = analytic_rho(spec, alpha, pts[i], pts[j], theta=theta, horizon=grid.horizon)
    return PseudoMetricTable(points=pts, d=d, exact=True)


def quantile_grid(cdfs, count: int = 512) -> np.ndarray:
    """Pooled quantile-spaced threshold grid for one or more cdfs.

    Quantile spacing concentrates points where mass lives, so jump
    neighborhoods of discrete components are always represented.
    """
    per = max(2, count // len(cdfs))
    levels = (np.arange(per) + 0.5) / per
    xs = []
    for c in cdfs:
        xs.extend(c.upper_quantile(q) for q in levels)
        xs.extend(c.atoms())
    xs = np.unique([x for x in xs if math.isfinite(x)])
    return xs


@dataclass
class TauEstimate:
    tau: float
    stderr: float
    tau_sq: float
    tau_sq_stderr: float
    n: int


def _pair_grid(spec: ProcessSpec, a_t, b_t) -> TimeGrid:
    kind = spec.grid_kind()
    pts = sorted({a_t, b_t})
    horizon = 1.0
    if kind == "interval-1d":
        horizon = max(1.0, max(pts))
    elif kind == "sheet-2d":
        horizon = max(1.0, max(max(p) for p in pts))
    return TimeGrid(kind, tuple(pts), horizon)


def estimate_tau(spec: ProcessSpec, a: IndexPoint, b: IndexPoint, n: int, seed: SeedSpec) -> TauEstimate:
    """Monte Carlo tau between two indicator variables from joint path draws.

    tau^2 = E|1{X_s <= x} - 1{X_t <= y}| is a binomial mean, so its stderr
    is sqrt(p(1-p)/n); the stderr of tau follows by the delta method (with a
    1/sqrt(n) scale when the estimate is exactly zero).
    """
    if n < 1000:
        raise ValueError("need n >= 1000")
    grid = _pair_grid(spec, a.t, b.t)
    paths = generate_paths(spec, grid, n, seed.master_seed, seed.replicate_index)
    ia = paths[:, grid.index_of(a.t)] <= a.y
    ib = paths[:, grid.index_of(b.t)] <= b.y
    p = float(np.mean(ia != ib))
    se_sq = math.sqrt(p * (1.0 - p) / n)
    tau = math.sqrt(p)
    stderr = se_sq / (2.0 * tau) if tau > 0 else 1.0 / (2.0 * math.sqrt(n))
    return TauEstimate(tau=tau, stderr=stderr, tau_sq=p, tau_sq_stderr=se_sq, n=n)


def indicator_matrix(paths: np.ndarray, grid: TimeGrid, index_points) -> np.ndarray:
    """(n, K) float32 matrix of indicators 1{X(t_k) <= y_k}."""
    cols = [grid.index_of(ip.t) for ip in index_points]
    ys = np.array([ip.y for ip in index_points])
    return (paths[:, cols] <= ys[None, :]).astype(np.float32)


def tau_table(
    spec: ProcessSpec,
    grid: TimeGrid,
    index_points,
    n: int,
    seed: SeedSpec,
) -> PseudoMetricTable:
    """Estimated tau over all pairs of index points, from one shared batch
    of joint draws.

    Sharing the draws makes tau-hat an exact pseudometric: it is the square
    root of the empirical symmetric-difference measure.
    """
    paths = generate_paths(spec, grid, n, seed.master_seed, seed.replicate_index)
    ind = indicator_matrix(paths, grid, index_points)
    p = ind.mean(axis=0, dtype=np.float64)
    gram = (ind.T @ ind).astype(np.float64) / n
    tau_sq = np.clip(p[:, None] + p[None, :] - 2.0 * gram, 0.0, None)
    np.fill_diagonal(tau_sq, 0.0)
    tau = np.sqrt(tau_sq)
    se_sq = np.sqrt(tau_sq * (1.0 - tau_sq) / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        stderr = np.where(tau > 0, se_sq / (2.0 * np.maximum(tau, 1e-300)), 0.5 / math.sqrt(n))
    np.fill_diagonal(stderr, 0.0)
    return PseudoMetricTable(points=list(index_points), d=tau, exact=False, stderr=stderr)


@dataclass
class InequalityCheck:
    """One estimated quantity against one bound."""

    label: str
    estimate: float
    stderr: float
    bound: float
    violated: bool
    detail: dict = field(default_factory=dict)

    def csv_row(self):
        pair = ""
        if "s" in self.detail and "t" in self.detail:
            pair = f"{self.detail['s']}|{self.detail['t']}"
        elif "pair" in self.detail and self.detail["pair"]:
            a, b = self.detail["pair"]
            pair = f"{a}|{b}"
        elif "t_b" in self.detail:
            pair = f"anchor {self.detail['t_b']}"
        return {
            "check": self.label,
            "pair": pair,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "bound": self.bound,
            "violated": int(self.violated),
        }


@dataclass
class CheckReport:
    name: str
    checks: list

    @property
    def violations(self):
        return [c for c in self.checks if c.violated]

    @property
    def ok(self) -> bool:
        return not self.violations

    def csv_rows(self):
        return [c.csv_row() for c in self.checks]


def check_lemma1(
    spec: ProcessSpec,
    s,
    t,
    n: int,
    seed: SeedSpec,
    l_value: float,
    alpha: float = 0.5,
    theta: float | None = None,
    x_grid=None,
    x_count: int = 512,
    z: float = 4.0,
) -> CheckReport:
    """One-sided crossing probabilities and marginal closeness for a pair s, t.

    Checks, for every threshold x on a pooled quantile grid,
        P(X_s <= x < X_t)        <= (L+1)  rho^2(s,t)
        P(X_t <= x < X_s)        <= (L+1)  rho^2(s,t)
        sup_x |F_t(x) - F_s(x)|  <= 2(L+1) rho^2(s,t)
    flagging only exceedances beyond z Monte Carlo standard errors.
    """
    grid = _pair_grid(spec, s, t)
    rho = analytic_rho(spec, alpha, s, t, theta=theta, horizon=grid.horizon)
    if x_grid is None:
        x_grid = quantile_grid([analytic_cdf(spec, s), analytic_cdf(spec, t)], x_count)
    x_grid = np.asarray(x_grid, dtype=float)

    paths = generate_paths(spec, grid, n, seed.master_seed, seed.replicate_index)
    vs = paths[:, grid.index_of(s)]
    vt = paths[:, grid.index_of(t)]

    below_s = vs[:, None] <= x_grid[None, :]
    below_t = vt[:, None] <= x_grid[None, :]
    p_st = np.mean(below_s & ~below_t, axis=0)
    p_ts = np.mean(below_t & ~below_s, axis=0)
    f_s = below_s.mean(axis=0)
    f_t = below_t.mean(axis=0)

    bound_one = (l_value + 1.0) * rho**2
    bound_two = 2.0 * (l_value + 1.0) * rho**2

    se_one = np.sqrt(np.maximum(p_st * (1 - p_st), p_ts * (1 - p_ts)) / n)
    # Var(F_t^ - F_s^) <= E(I_t - I_s)^2 / n = (p_st + p_ts)/n
    se_diff = np.sqrt((p_st + p_ts) / n)

    i_sup = int(np.argmax(np.abs(f_t - f_s)))
    checks = [
        InequalityCheck(
            "crossing-s-below-t",
            float(p_st.max()),
            float(se_one[int(np.argmax(p_st))]),
            bound_one,
            bool(np.any(p_st > bound_one + z * se_one)),
            {"s": s, "t": t, "rho": rho},
        ),
        InequalityCheck(
            "crossing-t-below-s",
            float(p_ts.max()),
            float(se_one[int(np.argmax(p_ts))]),
            bound_one,
            bool(np.any(p_ts > bound_one + z * se_one)),
            {"s": s, "t": t, "rho": rho},
        ),
        InequalityCheck(
            "sup-cdf-difference",
            float(np.abs(f_t - f_s)[i_sup]),
            float(se_diff[i_sup]),
            bound_two,
            bool(np.abs(f_t - f_s)[i_sup] > bound_two + z * se_diff[i_sup]),
            {"s": s, "t": t, "rho": rho, "argmax_x": float(x_grid[i_sup])},
        ),
    ]
    return CheckReport("lemma1", checks)


def lemma3_violations(
    tau: PseudoMetricTable,
    rho_of_pair,
    cdf_of_t,
    eps_grid,
    l_value: float,
    z: float = 4.0,
) -> CheckReport:
    """For every pair inside eps in both tau-hat and rho, check
    |F_t(x) - F_t(y)| <= (c eps')^2 with c = sqrt(2L+2) + 1.

    The left side is exact (analytic marginals); the Monte Carlo noise sits
    in the ball membership tau-hat <= eps, so the effective radius is
    eps' = eps + z * stderr of the pair that attains the worst gap.
    """
    c = math.sqrt(2.0 * l_value + 2.0) + 1.0
    checks = []
    k = len(tau.points)
    for eps in eps_grid:
        worst = 0.0
        worst_pair = None
        worst_se = 0.0
        for i in range(k):
            for j in range(i + 1, k):
                a, b = tau.points[i], tau.points[j]
                if tau.d[i, j] > eps:
                    continue
                if rho_of_pair(a.t, b.t) > eps:
                    continue
                ft = cdf_of_t(b.t)
                gap = abs(float(ft.eval_cdf(a.y)) - float(ft.eval_cdf(b.y)))
                if gap > worst:
                    worst, worst_pair = gap, (a, b)
                    worst_se = float(tau.stderr[i, j]) if tau.stderr is not None else 0.0
        bound = (c * (eps + z * worst_se)) ** 2
        checks.append(
            InequalityCheck(
                f"lemma3-eps-{eps:g}",
                worst,
                worst_se,
                bound,
                worst > bound,
                {"pair": worst_pair, "eps": eps},
            )
        )
    return CheckReport("lemma3", checks)


def check_corollary1_diameter(
    spec: ProcessSpec,
    b_points,
    t_b,
    d_interval,
    n: int,
    seed: SeedSpec,
    l_value: float,
    alpha: float = 0.5,
    theta: float | None = None,
    y_count: int = 12,
    z: float = 4.0,
) -> CheckReport:
    """tau-diameter of B x D against
    2 { sqrt(2L+2) diam_rho(B) + sup_{x,y in D} |F_tB(y) - F_tB(x)|^(1/2) }.
    """
    b_points = sorted(set(b_points))
    if t_b not in b_points:
        raise ValueError("t_b must belong to B")
    lo, hi = d_interval
    kind = spec.grid_kind()
    horizon = max(1.0, max(b_points)) if kind == "interval-1d" else 1.0
    grid = TimeGrid(kind, tuple(b_points), horizon)

    f_b = analytic_cdf(spec, t_b)
    qlo, qhi = float(f_b.eval_cdf(lo)), float(f_b.eval_cdf(hi))
    ys = [f_b.upper_quantile(q) for q in np.linspace(qlo, qhi, y_count)]
    ys = np.unique(np.clip([y for y in ys if math.isfinite(y)] + [lo, hi], lo, hi))

    index = [IndexPoint(s, float(y)) for s in b_points for y in ys]
    table = tau_table(spec, grid, index, n, seed)
    diam = table.diameter()
    imax = np.unravel_index(int(np.argmax(table.d)), table.d.shape)
    se = float(table.stderr[imax])

    diam_rho = max(
        analytic_rho(spec, alpha, a, b, theta=theta, horizon=grid.horizon)
        for a in b_points
        for b in b_points
    )
    sup_f = qhi - qlo
    bound = 2.0 * (math.sqrt(2.0 * l_value + 2.0) * diam_rho + math.sqrt(sup_f))
    check = InequalityCheck(
        "corollary1-diameter",
        diam,
        se,
        bound,
        diam > bound + z * se,
        {"t_b": t_b, "diam_rho": diam_rho, "sup_f": sup_f, "cells": len(index)},
    )
    return CheckReport("corollary1", [check])


def _holder_modulus(spec: ProcessSpec, theta: float, horizon: float):
    if spec.family == "fbm-shift":
        return lambda a, b: abs(a - b) ** theta
    if spec.family == "sheet-shift":
        return lambda a, b: (((a[0] - b[0]) / horizon) ** 2 + ((a[1] - b[1]) / horizon) ** 2) ** 0.125
    raise ValueError("Hoelder modulus available for fbm-shift and sheet-shift only")


def check_theorem5_conditions(
    spec: ProcessSpec,
    grid: TimeGrid,
    beta: float,
    k: float,
    eta: float,
    alpha: float,
    theta: float | None = None,
    n: int = 10_000,
    seed: SeedSpec = SeedSpec(0),
    x_grid=(4.0, 5.0, 6.0, 8.0),
    z: float = 4.0,
    chunk: int = 2000,
) -> CheckReport:
    """The three sufficient conditions for the uniform CLT of a sample
    continuous process with Hoelder modulus phi.

    (I)   sup_t |F_t(x) - F_t(y)| <= k |x-y|^beta, decided analytically from
          the supremum of the marginal densities;
    (II)  Gamma = sup_pairs |X_t - X_s| / phi(s,t) has tail P(Gamma >= x)
          below x^-eta, estimated on an x grid;
    (III) phi(s,t)^alpha <= rho_alpha(s,t) pointwise on the grid, exact.
    """
    if spec.family not in ("fbm-shift", "sheet-shift"):
        raise ValueError("conditions defined for fbm-shift and sheet-shift")
    if theta is None:
        from .process_models import default_theta

        theta = default_theta(spec, alpha)
    phi = _holder_modulus(spec, theta, grid.horizon)
    pts = list(grid)
    m = len(pts)

    # (I) analytic
    if spec.shift_law == "standard-normal":
        dens_sup = 1.0 / math.sqrt(2.0 * math.pi)
    else:
        dens_sup = 1.0
    holds_i = k >= dens_sup**beta and 0.0 < beta <= 1.0
    checks = [
        InequalityCheck(
            "condition-I",
            dens_sup**beta,
            0.0,
            k,
            not holds_i,
            {"density_sup": dens_sup, "beta": beta},
        )
    ]

    # (II) Monte Carlo tail of the Hoelder ratio
    phi_mat = np.array([[phi(a, b) if a != b else math.inf for b in pts] for a in pts])
    iu = np.triu_indices(m, 1)
    inv_phi = 1.0 / phi_mat[iu]
    gammas = np.empty(n)
    done = 0
    block = 0
    while done < n:
        take = min(chunk, n - done)
        paths = generate_paths(spec, grid, take, seed.master_seed, seed.replicate_index + block)
        diffs = np.abs(paths[:, iu[0]] - paths[:, iu[1]])
        gammas[done : done + take] = (diffs * inv_phi[None, :]).max(axis=1)
        done += take
        block += 1
    for x in x_grid:
        p_hat = float(np.mean(gammas >= x))
        se = math.sqrt(p_hat * (1 - p_hat) / n)
        bound = x ** (-eta)
        checks.append(
            InequalityCheck(
                f"condition-II-x-{x:g}",
                p_hat,
                se,
                bound,
                p_hat > bound + z * se,
                {"x": x, "eta": eta},
            )
        )

    # (III) exact pointwise comparison
    worst = -math.inf
    worst_pair = None
    for i in range(m):
        for j in range(i + 1, m):
            lhs = phi(pts[i], pts[j]) ** alpha
            rhs = analytic_rho(spec, alpha, pts[i], pts[j], theta=theta, horizon=grid.horizon)
            if lhs - rhs > worst:
                worst, worst_pair = lhs - rhs, (pts[i], pts[j])
    checks.append(
        InequalityCheck(
            "condition-III",
            worst,
            0.0,
            0.0,
            worst > 1e-12,
            {"worst_pair": worst_pair, "alpha": alpha, "theta": theta},
        )
    )
    return CheckReport("theorem5", checks)

"""Seed-driven sample-path generators with analytic marginals and metrics.

Families
  bm-tied             Brownian motion tied down at 0, covariance min(s, t)
  fbm-shift           fractional Brownian motion (Hurst gamma, normalized so
                      E(X_s - X_t)^2 = |s-t|^(2 gamma)) plus an independent
                      shift variable Z with bounded density
  sheet-shift         Brownian sheet, covariance min(s,u) min(t,v), plus Z
  linear-u            X_t = t U with U uniform on [0, 1]
  lip1-osc            Lipschitz oscillator: X_t = t (a_j(t) + 2) U on dyadic
                      interval (2^-j, 2^-(j-1)], where a_j is one of two sine
                      branches chosen by a fair coin per interval and U is
                      uniform on [3/2, 2]; zero at 0 and below the truncation
  discrete-bernoulli  independent coordinates on {1..m} with P(X_t = 1) = p_t

Gaussian families are drawn exactly via a symmetric factorization of the grid
covariance matrix; tied-down Brownian motion uses its analytic independent-
increments Cholesky factor so dyadic grids at extreme depth stay exact.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import transform as tr
from .grids import DISCRETE_N, INTERVAL_1D, SHEET_2D, TimeGrid
from .rng import PATHS, SeedSpec, stream

FAMILIES = ("bm-tied", "fbm-shift", "sheet-shift", "linear-u", "lip1-osc", "discrete-bernoulli")
SHIFT_LAWS = ("standard-normal", "uniform-01")

_PT_RE = re.compile(r"^(log-power|geometric)\(([-0-9.eE+]+)\)$")


class CovarianceFactorizationError(RuntimeError):
    """Covariance matrix failed PSD factorization beyond the clipping tolerance."""

    def __init__(self, min_eigenvalue, tolerance):
        self.min_eigenvalue = float(min_eigenvalue)
        self.tolerance = float(tolerance)
        super().__init__(
            f"covariance not positive semidefinite: min eigenvalue "
            f"{self.min_eigenvalue:.3e} below tolerance {-self.tolerance:.3e}"
        )


class GridCompatibilityError(ValueError):
    pass


@dataclass(frozen=True)
class ProcessSpec:
    """Which process family to simulate, plus its parameters.

    gamma                 Hurst exponent for fbm-shift, in (0, 1)
    shift_law             law of the additive shift Z (fbm-shift, sheet-shift)
    pt_family             "log-power(a)" or "geometric(q)" success probabilities
                          for discrete-bernoulli
    oscillator_intervals  truncation depth J for lip1-osc; points at or below
                          2^-J evaluate to zero
    """

    family: str
    gamma: float = 0.5
    shift_law: str = "standard-normal"
    pt_family: str | None = None
    oscillator_intervals: int = 40

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "fbm-shift" and not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if self.shift_law not in SHIFT_LAWS:
            raise ValueError(f"unknown shift law {self.shift_law!r}")
        if self.family == "discrete-bernoulli":
            name, param = self.pt_params()
            if name == "log-power" and param <= 0:
                raise ValueError("log-power exponent must be positive")
            if name == "geometric" and not 0.0 < param < 1.0:
                raise ValueError("geometric ratio must be in (0, 1)")
        if self.oscillator_intervals < 1:
            raise ValueError("oscillator_intervals must be >= 1")

    def pt_params(self):
        if self.pt_family is None:
            raise ValueError("discrete-bernoulli requires pt_family")
        m = _PT_RE.match(self.pt_family)
        if m is None:
            raise ValueError(f"cannot parse pt_family {self.pt_family!r}")
        return m.group(1), float(m.group(2))

    def grid_kind(self) -> str:
        if self.family == "sheet-shift":
            return SHEET_2D
        if self.family == "discrete-bernoulli":
            return DISCRETE_N
        return INTERVAL_1D

    def to_json(self) -> dict:
        out = {"family": self.family}
        if self.family == "fbm-shift":
            out["gamma"] = self.gamma
        if self.family in ("fbm-shift", "sheet-shift"):
            out["shift-law"] = self.shift_law
        if self.family == "discrete-bernoulli":
            out["pt-family"] = self.pt_family
        if self.family == "lip1-osc":
            out["oscillator-intervals"] = self.oscillator_intervals
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ProcessSpec":
        return cls(
            family=obj["family"],
            gamma=obj.get("gamma", 0.5),
            shift_law=obj.get("shift-law", "standard-normal"),
            pt_family=obj.get("pt-family"),
            oscillator_intervals=obj.get("oscillator-intervals", 40),
        )


@dataclass(frozen=True)
class SamplePath:
    """Values of one realization on a grid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape != (len(self.grid),):
            raise ValueError("values length must equal grid length")
        if not np.all(np.isfinite(vals)):
            raise ValueError("path values must be finite")


def _check_grid(spec: ProcessSpec, grid: TimeGrid):
    if grid.kind != spec.grid_kind():
        raise GridCompatibilityError(
            f"family {spec.family} requires a {spec.grid_kind()} grid, got {grid.kind}"
        )


def covariance_matrix(spec: ProcessSpec, grid: TimeGrid) -> np.ndarray:
    """Grid covariance of the centered Gaussian component (shift Z excluded)."""
    _check_grid(spec, grid)
    if spec.family == "bm-tied":
        t = grid.as_array()
        return np.minimum.outer(t, t)
    if spec.family == "fbm-shift":
        t = grid.as_array()
        g2 = 2.0 * spec.gamma
        return 0.5 * (t[:, None] ** g2 + t[None, :] ** g2 - np.abs(t[:, None] - t[None, :]) ** g2)
    if spec.family == "sheet-shift":
        pts = grid.as_array()
        s, t = pts[:, 0], pts[:, 1]
        return np.minimum.outer(s, s) * np.minimum.outer(t, t)
    raise ValueError(f"family {spec.family} has no Gaussian covariance")


def psd_factor(cov: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    """Symmetric factor A with A A^T = cov, eigenvalues clipped at zero.

    Eigenvalues below -rel_tol * trace/dim raise; mild round-off negatives
    are clipped.
    """
    w, v = np.linalg.eigh(cov)
    tol = rel_tol * max(np.trace(cov) / cov.shape[0], np.finfo(float).tiny)
    if w.min() < -tol:
        raise CovarianceFactorizationError(w.min(), tol)
    return v * np.sqrt(np.clip(w, 0.0, None))


@lru_cache(maxsize=64)
def _gaussian_factor(spec: ProcessSpec, grid: TimeGrid) -> np.ndarray:
    if spec.family == "bm-tied" or (spec.family == "fbm-shift" and spec.gamma == 0.5):
        # exact Cholesky of min(s, t): independent increments
        t = grid.as_array()
        incr = np.sqrt(np.diff(np.concatenate(([0.0], t))))
        m = len(t)
        factor = np.tril(np.ones((m, m))) * incr[None, :]
        return factor
    return psd_factor(covariance_matrix(spec, grid))


def _lip1_interval_index(t: np.ndarray) -> np.ndarray:
    """j with t in (2^-j, 2^-(j-1)]; meaningful only for t > 0."""
    with np.errstate(divide="ignore"):
        return np.where(t > 0, np.floor(-np.log2(np.maximum(t, np.finfo(float).tiny))) + 1, 0).astype(int)


def success_probabilities(spec: ProcessSpec, t) -> np.ndarray:
    """p_t for the discrete-bernoulli family."""
    name, param = spec.pt_params()
    t = np.asarray(t, dtype=float)
    if name == "log-power":
        return np.log(t + 2.0) ** (-param)
    return param**t


def generate_paths(
    spec: ProcessSpec,
    grid: TimeGrid,
    n: int,
    master_seed: int,
    stream_index: int = 0,
    label: int = PATHS,
) -> np.ndarray:
    """n independent realizations as an (n, m) array, one row per path.

    All n draws come from the single counter-based stream
    (master_seed, label, stream_index); rows are consumed in order, so the
    first k rows coincide with a size-k call on the same stream.
    """
    _check_grid(spec, grid)
    rg = stream(master_seed, label, stream_index)
    m = len(grid)

    if spec.family in ("bm-tied", "fbm-shift", "sheet-shift"):
        factor = _gaussian_factor(spec, grid)
        paths = rg.standard_normal((n, m)) @ factor.T
        if spec.family in ("fbm-shift", "sheet-shift"):
            if spec.shift_law == "standard-normal":
                shift = rg.standard_normal(n)
            else:
                shift = rg.random(n)
            paths += shift[:, None]
        return paths

    if spec.family == "linear-u":
        u = rg.random(n)
        return np.outer(u, grid.as_array())

    if spec.family == "lip1-osc":
        return _oscillator_values(spec, grid, rg.random((n, spec.oscillator_intervals)) < 0.5, 1.5 + 0.5 * rg.random(n))

    if spec.family == "discrete-bernoulli":
        p = success_probabilities(spec, grid.as_array())
        return (rg.random((n, m)) < p[None, :]).astype(float)

    raise AssertionError("unreachable")


def _oscillator_values(spec: ProcessSpec, grid: TimeGrid, fast_branch: np.ndarray, u: np.ndarray) -> np.ndarray:
    j_max = spec.oscillator_intervals
    t = grid.as_array()
    j = _lip1_interval_index(t)
    active = (t > 0) & (j <= j_max)
    paths = np.zeros((fast_branch.shape[0], len(t)))
    for col in np.nonzero(active)[0]:
        jj = j[col]
        tc = t[col]
        # 2^j * t is an exact power-of-two rescale, so the sine arguments
        # stay accurate even at extreme depth
        slow = math.sin(2.0 * math.pi * (2.0**jj * tc))
        fast = math.sin(2.0 * math.pi * (2.0 ** (jj + 1) * tc))
        alpha = np.where(fast_branch[:, jj - 1], fast, slow)
        paths[:, col] = tc * (alpha + 2.0) * u
    return paths


def oscillator_paths_with_aux(
    spec: ProcessSpec, grid: TimeGrid, n: int, master_seed: int, stream_index: int = 0, label: int = PATHS
):
    """Oscillator batch plus its latent variables (branch coins, scale U).

    Identical draws to generate_paths for the same stream; handy for checks
    that need the per-path Lipschitz constant (4 pi + 3) U.
    """
    _check_grid(spec, grid)
    rg = stream(master_seed, label, stream_index)
    fast_branch = rg.random((n, spec.oscillator_intervals)) < 0.5
    u = 1.5 + 0.5 * rg.random(n)
    return _oscillator_values(spec, grid, fast_branch, u), u, fast_branch


def generate_path(spec: ProcessSpec, grid: TimeGrid, seed: SeedSpec) -> SamplePath:
    """One realization; pure in (spec, grid, seed)."""
    values = generate_paths(spec, grid, 1, seed.master_seed, seed.replicate_index)[0]
    return SamplePath(grid, values)


def marginal_sd(spec: ProcessSpec, t) -> float:
    """Standard deviation of the Gaussian component at index t."""
    if spec.family == "bm-tied":
        return math.sqrt(t)
    if spec.family == "fbm-shift":
        return t**spec.gamma
    if spec.family == "sheet-shift":
        return math.sqrt(t[0] * t[1])
    raise ValueError(f"family {spec.family} is not Gaussian")


def analytic_cdf(spec: ProcessSpec, t) -> tr.CdfModel:
    """Closed-form marginal distribution function of X_t."""
    if spec.family == "bm-tied":
        return tr.DegenerateCdf(0.0) if t == 0 else tr.NormalCdf(0.0, math.sqrt(t))

    if spec.family in ("fbm-shift", "sheet-shift"):
        sd = marginal_sd(spec, t)
        if spec.shift_law == "standard-normal":
            return tr.NormalCdf(0.0, math.sqrt(sd**2 + 1.0))
        return tr.UniformCdf(0.0, 1.0) if sd == 0.0 else tr.NormalUniformSumCdf(sd)

    if spec.family == "linear-u":
        return tr.DegenerateCdf(0.0) if t == 0 else tr.UniformCdf(0.0, t)

    if spec.family == "lip1-osc":
        j_max = spec.oscillator_intervals
        if t <= 2.0**-j_max:
            return tr.DegenerateCdf(0.0)
        jj = int(_lip1_interval_index(np.array([t]))[0])
        slow = math.sin(2.0 * math.pi * (2.0**jj * t))
        fast = math.sin(2.0 * math.pi * (2.0 ** (jj + 1) * t))
        comps = []
        for a in (slow, fast):
            c = t * (a + 2.0)
            comps.append((0.5, 1.5 * c, 2.0 * c))
        return tr.PiecewiseUniformCdf(comps)

    if spec.family == "discrete-bernoulli":
        p = float(success_probabilities(spec, t))
        return tr.TwoPointCdf(p)

    raise AssertionError("unreachable")


def default_theta(spec: ProcessSpec, alpha: float = 1.0) -> float:
    """Default Hoelder exponent for the comparison metric rho_alpha.

    For 1-D families theta must stay below gamma/2 (gamma = 1 for the
    Lipschitz families); the sheet requires theta < alpha/8.
    """
    if spec.family == "fbm-shift":
        return 0.4 * spec.gamma
    if spec.family == "bm-tied":
        return 0.2
    if spec.family in ("linear-u", "lip1-osc"):
        return 0.4
    if spec.family == "sheet-shift":
        return alpha / 10.0
    raise ValueError(f"family {spec.family} has no Hoelder metric")


def analytic_rho(spec: ProcessSpec, alpha: float, s, t, theta: float | None = None, horizon: float = 1.0) -> float:
    """Comparison metric rho_alpha(s, t): the L2 distance of the dominating
    Gaussian process for this family.

    fbm-shift and the other 1-D families: |s - t|^(alpha theta).
    sheet-shift: sqrt((|u-s|/T)^(2 theta) + (|v-t|/T)^(2 theta)).
    discrete-bernoulli: independent comparison variables with variance
    v_t = log(t+2)^(-b), so rho = sqrt(v_s + v_t) off the diagonal; theta
    overrides the exponent b (default 3/2).
    """
    if spec.family == "discrete-bernoulli":
        if s == t:
            return 0.0
        b = 1.5 if theta is None else float(theta)
        v = (math.log(s + 2.0)) ** -b + (math.log(t + 2.0)) ** -b
        return math.sqrt(v)

    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if theta is None:
        theta = default_theta(spec, alpha)

    if spec.family == "sheet-shift":
        (s1, s2), (t1, t2) = s, t
        r2 = (abs(t1 - s1) / horizon) ** (2.0 * theta) + (abs(t2 - s2) / horizon) ** (2.0 * theta)
        return math.sqrt(r2)

    exponent = alpha * theta
    if not 0.0 < exponent < 1.0:
        raise ValueError("alpha * theta must lie in (0, 1)")
    return float(abs(s - t)) ** exponent if s != t else 0.0

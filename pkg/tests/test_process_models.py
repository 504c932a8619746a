import math

import numpy as np
import pytest
from scipy.special import ndtr

from empclt.grids import TimeGrid, discrete_grid, product_sheet_grid, uniform_grid
from empclt.process_models import (
    CovarianceFactorizationError,
    GridCompatibilityError,
    ProcessSpec,
    analytic_cdf,
    analytic_rho,
    covariance_matrix,
    generate_path,
    generate_paths,
    oscillator_paths_with_aux,
    psd_factor,
    success_probabilities,
)
from empclt.rng import SeedSpec


def _cov_se(c, i, j, n):
    # stderr of an empirical covariance entry of a Gaussian vector
    return math.sqrt((c[i, i] * c[j, j] + c[i, j] ** 2) / n)


def test_bm_tied_down_at_zero():
    grid = TimeGrid("interval-1d", (0.0,), 1.0)
    path = generate_path(ProcessSpec("bm-tied"), grid, SeedSpec(1, 0))
    assert path.values[0] == 0.0


def test_generate_is_pure():
    spec = ProcessSpec("fbm-shift", gamma=0.3)
    grid = uniform_grid(9)
    a = generate_path(spec, grid, SeedSpec(77, 5))
    b = generate_path(spec, grid, SeedSpec(77, 5))
    assert np.array_equal(a.values, b.values)


def test_incompatible_grid_errors():
    with pytest.raises(GridCompatibilityError):
        generate_paths(ProcessSpec("sheet-shift"), uniform_grid(4), 2, 0)
    with pytest.raises(GridCompatibilityError):
        generate_paths(ProcessSpec("discrete-bernoulli", pt_family="geometric(0.5)"), uniform_grid(4), 2, 0)


def test_psd_factor_rejects_indefinite():
    c = np.array([[1.0, 0.0], [0.0, -0.5]])
    with pytest.raises(CovarianceFactorizationError) as exc:
        psd_factor(c)
    assert exc.value.min_eigenvalue == pytest.approx(-0.5)


@pytest.mark.parametrize(
    "spec,grid",
    [
        (ProcessSpec("bm-tied"), uniform_grid(6)),
        (ProcessSpec("fbm-shift", gamma=0.3), uniform_grid(6)),
        (ProcessSpec("fbm-shift", gamma=0.7), uniform_grid(6)),
        (ProcessSpec("sheet-shift"), product_sheet_grid(3)),
    ],
    ids=["bm", "fbm-0.3", "fbm-0.7", "sheet"],
)
def test_gaussian_empirical_covariance_matches_analytic(spec, grid):
    n = 100_000
    paths = generate_paths(spec, grid, n, 4242)
    cov = covariance_matrix(spec, grid)
    if spec.family in ("fbm-shift", "sheet-shift"):
        cov = cov + 1.0  # the shared standard-normal shift adds 1 to every entry
        emp = np.cov(paths.T, ddof=1)
    else:
        emp = paths.T @ paths / n
    for i in range(len(grid)):
        for j in range(i, len(grid)):
            se = _cov_se(cov, i, j, n)
            assert abs(emp[i, j] - cov[i, j]) <= 4 * se + 1e-12


def test_fbm_increment_variance_monte_carlo():
    # Var(X_t - X_s) = |t - s|^(2 gamma); the shared shift cancels
    spec = ProcessSpec("fbm-shift", gamma=0.5)
    grid = TimeGrid("interval-1d", (0.25, 0.75), 1.0)
    n = 100_000
    paths = generate_paths(spec, grid, n, 99)
    diffs = paths[:, 1] - paths[:, 0]
    var_hat = float(np.var(diffs, ddof=1))
    se = 0.5 * math.sqrt(2.0 / (n - 1))  # sd of the sample variance of N(0, 0.5)
    assert abs(var_hat - 0.5) <= 3 * se


def test_linear_u_structure():
    spec = ProcessSpec("linear-u")
    grid = uniform_grid(17)
    paths = generate_paths(spec, grid, 50, 7)
    t = grid.as_array()
    assert np.all(np.diff(paths, axis=1) >= -1e-15)
    # exactly t * X(1)
    assert np.allclose(paths, np.outer(paths[:, -1], t), atol=1e-15)
    assert np.all(paths[:, 0] == 0.0)


def test_oscillator_bands_at_probe_points():
    # at t = (5/4) 2^-j the two branches give values in [3t, 4t] and
    # [4.5t, 6t]; the threshold 4.25 t separates them
    spec = ProcessSpec("lip1-osc", oscillator_intervals=12)
    pts = tuple(sorted((5.0 / 4.0) * 2.0**-j for j in range(1, 13)))
    grid = TimeGrid("interval-1d", pts, 1.0)
    values, u, fast = oscillator_paths_with_aux(spec, grid, 200, 11)
    from empclt.process_models import _lip1_interval_index

    j_of = _lip1_interval_index(grid.as_array())
    for c, t in enumerate(grid):
        jj = j_of[c]
        lo_band = values[fast[:, jj - 1], c]
        hi_band = values[~fast[:, jj - 1], c]
        assert np.all((lo_band >= 3 * t - 1e-12) & (lo_band <= 4 * t + 1e-12))
        assert np.all((hi_band >= 4.5 * t - 1e-12) & (hi_band <= 6 * t + 1e-12))
        assert np.all(lo_band < 4.25 * t) and np.all(hi_band > 4.25 * t)


def test_oscillator_lipschitz_bound():
    spec = ProcessSpec("lip1-osc", oscillator_intervals=20)
    rg_grid = np.sort(np.concatenate(([0.0], np.geomspace(2.0**-22, 1.0, 40))))
    grid = TimeGrid("interval-1d", tuple(float(x) for x in rg_grid), 1.0)
    values, u, _ = oscillator_paths_with_aux(spec, grid, 100, 13)
    t = grid.as_array()
    c = 4.0 * math.pi + 3.0
    for i in range(len(t)):
        for j in range(i + 1, len(t)):
            gap = np.abs(values[:, j] - values[:, i])
            assert np.all(gap <= c * u * (t[j] - t[i]) + 1e-12)


def test_oscillator_zero_below_truncation():
    spec = ProcessSpec("lip1-osc", oscillator_intervals=4)
    grid = TimeGrid("interval-1d", (0.0, 2.0**-6, 2.0**-4, 0.3), 1.0)
    paths = generate_paths(spec, grid, 20, 3)
    assert np.all(paths[:, 0] == 0.0)
    assert np.all(paths[:, 1] == 0.0)  # below 2^-J
    assert np.all(paths[:, 2] == 0.0)  # exactly 2^-J
    assert np.all(paths[:, 3] != 0.0)


def test_discrete_bernoulli_values_and_probs():
    spec = ProcessSpec("discrete-bernoulli", pt_family="log-power(2)")
    grid = discrete_grid(6)
    n = 100_000
    paths = generate_paths(spec, grid, n, 12)
    assert set(np.unique(paths)) <= {0.0, 1.0}
    p = success_probabilities(spec, grid.as_array())
    p_hat = paths.mean(axis=0)
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(p_hat - p) <= 4 * se)


# --- analytic marginals ------------------------------------------------------


def test_linear_u_cdf_example():
    f = analytic_cdf(ProcessSpec("linear-u"), 0.5)
    assert float(f.eval_cdf(0.25)) == pytest.approx(0.5)


def test_discrete_bernoulli_cdf_example():
    f = analytic_cdf(ProcessSpec("discrete-bernoulli", pt_family="log-power(2)"), 1)
    assert float(f.eval_cdf(0.0)) == pytest.approx(1.0 - math.log(3.0) ** -2)


def test_bm_degenerate_cdf_example():
    f = analytic_cdf(ProcessSpec("bm-tied"), 0.0)
    for y in (0.0, 0.5, 3.0):
        assert float(f.eval_cdf(y)) == 1.0


def test_fbm_shift_normal_marginal_formula():
    spec = ProcessSpec("fbm-shift", gamma=0.3)
    t = 0.6
    f = analytic_cdf(spec, t)
    ys = np.linspace(-3, 3, 13)
    expected = ndtr(ys / math.sqrt(t**0.6 + 1.0))
    assert np.allclose(f.eval_cdf(ys), expected)


def test_marginals_match_simulation():
    # KS between 2*10^4 simulated values and the analytic marginal, per family
    cases = [
        (ProcessSpec("bm-tied"), uniform_grid(4), 2),
        (ProcessSpec("fbm-shift", gamma=0.4), uniform_grid(4), 3),
        (ProcessSpec("fbm-shift", gamma=0.4, shift_law="uniform-01"), uniform_grid(4), 3),
        (ProcessSpec("lip1-osc", oscillator_intervals=8), uniform_grid(5), 4),
        (ProcessSpec("sheet-shift"), product_sheet_grid(3), 4),
    ]
    n = 20_000
    for spec, grid, col in cases:
        t = grid.points[col]
        vals = np.sort(generate_paths(spec, grid, n, 31)[:, col])
        f = analytic_cdf(spec, t)
        theo = np.asarray(f.eval_cdf(vals), dtype=float)
        emp_hi = np.arange(1, n + 1) / n
        emp_lo = np.arange(0, n) / n
        ks = max(np.max(emp_hi - theo), np.max(theo - emp_lo))
        assert ks < 1.95 / math.sqrt(n) * 1.5, spec.family


# --- analytic comparison metric ----------------------------------------------


def test_rho_examples():
    spec = ProcessSpec("fbm-shift", gamma=0.5)
    assert analytic_rho(spec, 0.5, 0.3, 0.3) == 0.0
    assert analytic_rho(spec, 0.5, 0.0, 1.0, theta=0.5) == pytest.approx(1.0)
    # alpha * theta = 0.2 by default (theta = 0.4 gamma)
    assert analytic_rho(spec, 0.5, 0.0, 0.5) == pytest.approx(0.5**0.1)

    bern = ProcessSpec("discrete-bernoulli", pt_family="log-power(2)")
    expected = math.sqrt(math.log(3.0) ** -1.5 + math.log(4.0) ** -1.5)
    assert analytic_rho(bern, 0.5, 1, 2) == pytest.approx(expected)
    assert analytic_rho(bern, 0.5, 2, 2) == 0.0


def test_rho_alpha_out_of_range():
    spec = ProcessSpec("fbm-shift", gamma=0.5)
    with pytest.raises(ValueError):
        analytic_rho(spec, 1.5, 0.0, 1.0)
    with pytest.raises(ValueError):
        analytic_rho(spec, -0.1, 0.0, 1.0)


def test_sheet_rho_normalization():
    spec = ProcessSpec("sheet-shift")
    r = analytic_rho(spec, 0.5, (0.0, 0.0), (1.0, 1.0), theta=0.05, horizon=1.0)
    assert r == pytest.approx(math.sqrt(2.0))
    r2 = analytic_rho(spec, 0.5, (0.0, 0.0), (2.0, 2.0), theta=0.05, horizon=2.0)
    assert r2 == pytest.approx(math.sqrt(2.0))


def test_process_spec_json_round_trip():
    for spec in (
        ProcessSpec("fbm-shift", gamma=0.35, shift_law="uniform-01"),
        ProcessSpec("discrete-bernoulli", pt_family="geometric(0.5)"),
        ProcessSpec("lip1-osc", oscillator_intervals=17),
    ):
        assert ProcessSpec.from_json(spec.to_json()) == spec


def test_time_grid_json_round_trip():
    for grid in (uniform_grid(5), product_sheet_grid(2), discrete_grid(4)):
        assert TimeGrid.from_json(grid.to_json()) == grid

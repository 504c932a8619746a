import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from empclt.grids import TimeGrid, uniform_grid
from empclt.process_models import ProcessSpec, SamplePath, generate_paths
from empclt.rng import SeedSpec, stream
from empclt.shattering import (
    brownian_lil_grid,
    delta_growth_diagnostic,
    lemma8_construct,
    oscillator_probe_times,
    registry_from_values,
    shatter_count,
)


def brute_force_masks(values: np.ndarray) -> set:
    """Independent oracle: enumerate every (grid point, threshold) pair with
    thresholds at all realized values and one below the minimum."""
    n, m = values.shape
    masks = set()
    for c in range(m):
        col = values[:, c]
        thresholds = list(col) + [col.min() - 1.0]
        for y in thresholds:
            masks.add(sum(1 << j for j in range(n) if col[j] <= y))
    return masks


@given(
    n=st.integers(1, 6),
    m=st.integers(1, 32),
    seed=st.integers(0, 10_000),
    ties=st.booleans(),
)
@settings(max_examples=120, deadline=None)
def test_registry_matches_brute_force(n, m, seed, ties):
    rg = stream(seed, 4, 0)
    vals = rg.standard_normal((n, m))
    if ties:
        vals = np.round(vals * 2) / 2  # force duplicate values
    reg = registry_from_values(vals)
    assert reg.masks == frozenset(brute_force_masks(vals))


def test_registry_contains_empty_and_full():
    vals = stream(1, 4, 0).standard_normal((4, 7))
    reg = registry_from_values(vals)
    assert 0 in reg and (1 << 4) - 1 in reg
    assert reg.count <= 2**4
    assert reg.count <= 7 * 4 + 2  # per-point contribution bound


def test_single_path_two_masks():
    vals = np.array([[0.3, -1.0, 2.0]])
    reg = registry_from_values(vals)
    assert reg.count == 2


def test_tie_merging_single_prefix():
    vals = np.array([[1.0], [1.0], [2.0]])
    reg = registry_from_values(vals)
    # thresholds cannot separate the two tied paths
    assert reg.masks == frozenset({0, 0b011, 0b111})


def test_registry_monotone_under_grid_refinement():
    spec = ProcessSpec("bm-tied")
    fine = uniform_grid(17)
    coarse = TimeGrid("interval-1d", fine.points[::4], 1.0)
    vals_fine = generate_paths(spec, fine, 5, 21)
    idx = [fine.index_of(p) for p in coarse.points]
    reg_fine = registry_from_values(vals_fine)
    reg_coarse = registry_from_values(vals_fine[:, idx])
    assert reg_coarse.masks <= reg_fine.masks


def test_path_count_cap():
    with pytest.raises(ValueError):
        registry_from_values(np.zeros((25, 2)))


def test_shatter_count_requires_common_grid():
    g1, g2 = uniform_grid(4), uniform_grid(5)
    p1 = SamplePath(g1, np.zeros(4))
    p2 = SamplePath(g2, np.zeros(5))
    with pytest.raises(ValueError):
        shatter_count([p1, p2])


def test_linear_u_count_n_plus_one():
    spec = ProcessSpec("linear-u")
    grid = uniform_grid(9)  # includes t = 0
    for n in (1, 3, 6):
        vals = generate_paths(spec, grid, n, 17)
        reg = registry_from_values(vals)
        assert reg.count == n + 1
        assert reg.masks == frozenset(brute_force_masks(vals))


def test_delta_growth_linear_u_exact_ratio():
    spec = ProcessSpec("linear-u")
    grid = uniform_grid(9)
    rep = delta_growth_diagnostic(spec, grid, [1, 3, 5], 20, SeedSpec(30))
    assert rep.mean_ratio[1] == pytest.approx(math.log(2.0))
    for n in (3, 5):
        assert rep.mean_ratio[n] == pytest.approx(math.log(n + 1) / math.sqrt(n))


def test_delta_growth_linear_u_decreasing_past_peak():
    # ln(n+1)/sqrt(n) peaks near n = 4 and decreases thereafter
    spec = ProcessSpec("linear-u")
    grid = uniform_grid(9)
    rep = delta_growth_diagnostic(spec, grid, [5, 8, 12], 10, SeedSpec(30))
    assert rep.decreasing


def test_delta_growth_brownian_exceeds_baseline():
    spec = ProcessSpec("bm-tied")
    rep = delta_growth_diagnostic(spec, brownian_lil_grid(60), [5], 40, SeedSpec(31))
    counts = rep.counts[5]
    assert np.mean(counts > 6) >= 0.95
    assert rep.mean_ratio[5] > math.log(6.0) / math.sqrt(5.0)


def test_oscillator_probe_times_quarter_points():
    pts = oscillator_probe_times(3)
    assert pts == tuple(sorted((5 / 4) * 2.0**-j for j in (3, 2, 1)))
    # each probe sits a quarter of the way into its dyadic interval
    for j, t in zip((3, 2, 1), pts):
        lo, hi = 2.0**-j, 2.0 ** -(j - 1)
        assert t == pytest.approx(lo + 0.25 * (hi - lo))


def test_lemma8_witnesses_validate():
    paths, wit = lemma8_construct(4, 60, SeedSpec(32))
    assert wit.validate(paths)
    assert 0 in wit.witnesses
    assert (1 << 4) - 1 in wit.witnesses


def test_lemma8_full_mask_probability():
    hits = 0
    for trial in range(40):
        paths, wit = lemma8_construct(3, 200, SeedSpec(33, trial))
        if shatter_count(paths).count == 8 and wit.validate(paths):
            hits += 1
    assert hits >= 39  # miss probability ~ 8 * (7/8)^200 per trial


def test_lemma8_witness_thresholds_are_band_separators():
    paths, wit = lemma8_construct(4, 50, SeedSpec(34))
    for mask, (t, y) in wit.witnesses.items():
        if y > 0 and mask not in (0, 15):
            assert y == pytest.approx(4.25 * t)

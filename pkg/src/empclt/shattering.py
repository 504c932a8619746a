"""Exact subset counts cut out of a path sample by threshold sets.

The class of sets is {paths z : z(t) <= y} over all grid points t and real
thresholds y.  At a fixed t the realized subsets are exactly the lower sets
of the value ordering (ties merged), so scanning sorted columns and pooling
prefix bitmasks over t gives the exact count with finite work: thresholds
between consecutive distinct values never produce a new subset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grids import TimeGrid, dyadic_grid
from .process_models import ProcessSpec, SamplePath, generate_paths
from .rng import SeedSpec, TRIALS

MAX_PATHS = 24


@dataclass(frozen=True)
class SubsetRegistry:
    """All subset bitmasks realized by some threshold set; bit j = path j."""

    n: int
    masks: frozenset

    @property
    def count(self) -> int:
        return len(self.masks)

    def __contains__(self, mask: int) -> bool:
        return mask in self.masks


def registry_from_values(values: np.ndarray) -> SubsetRegistry:
    """Exact registry from an (n, m) value matrix (n paths, m grid points)."""
    values = np.asarray(values, dtype=float)
    n, m = values.shape
    if n < 1:
        raise ValueError("need at least one path")
    if n > MAX_PATHS:
        raise ValueError(f"exact registry limited to {MAX_PATHS} paths")
    masks = {0}
    for c in range(m):
        col = values[:, c]
        order = np.argsort(col, kind="stable")
        svals = col[order]
        mask = 0
        for i in range(n):
            mask |= 1 << int(order[i])
            if i == n - 1 or svals[i + 1] != svals[i]:
                masks.add(mask)
    return SubsetRegistry(n=n, masks=frozenset(masks))


def shatter_count(paths) -> SubsetRegistry:
    """Registry for a list of SamplePath objects on a common grid."""
    paths = list(paths)
    if not paths:
        raise ValueError("need at least one path")
    grid = paths[0].grid
    if any(p.grid != grid for p in paths[1:]):
        raise ValueError("paths must share one grid")
    return registry_from_values(np.stack([p.values for p in paths]))


@dataclass
class DeltaGrowthReport:
    n_ladder: list
    trials: int
    counts: dict  # n -> int array of per-trial registry sizes
    mean_ratio: dict  # n -> mean of ln(count)/sqrt(n)
    quantiles: dict  # n -> (q05, q50, q95) of the ratio
    decreasing: bool

    def csv_rows(self):
        rows = []
        for n in self.n_ladder:
            for trial, count in enumerate(self.counts[n]):
                rows.append(
                    {
                        "trial": trial,
                        "n": n,
                        "count": int(count),
                        "ln_count_over_sqrt_n": math.log(count) / math.sqrt(n),
                    }
                )
        return rows


def delta_growth_diagnostic(
    spec: ProcessSpec, grid: TimeGrid, n_ladder, trials: int, seed: SeedSpec
) -> DeltaGrowthReport:
    """ln Delta / sqrt(n) across a ladder of sample sizes, over fresh trials.

    Slow subset growth (the count staying near n+1) drives the ratio down
    like ln(n)/sqrt(n); shattering keeps it near sqrt(n) ln 2.
    """
    if max(n_ladder) > MAX_PATHS:
        raise ValueError(f"n must stay at or below {MAX_PATHS}")
    counts = {}
    mean_ratio = {}
    quantiles = {}
    for n in n_ladder:
        per = np.empty(trials, dtype=int)
        for trial in range(trials):
            vals = generate_paths(
                spec, grid, n, seed.master_seed, seed.replicate_index + trial, label=TRIALS
            )
            per[trial] = registry_from_values(vals).count
        counts[n] = per
        ratios = np.log(per) / math.sqrt(n)
        mean_ratio[n] = float(np.mean(ratios))
        quantiles[n] = tuple(float(q) for q in np.quantile(ratios, [0.05, 0.5, 0.95]))
    means = [mean_ratio[n] for n in n_ladder]
    decreasing = all(b < a for a, b in zip(means, means[1:]))
    return DeltaGrowthReport(
        n_ladder=list(n_ladder),
        trials=trials,
        counts=counts,
        mean_ratio=mean_ratio,
        quantiles=quantiles,
        decreasing=decreasing,
    )


def oscillator_probe_times(j_count: int) -> tuple:
    """Quarter-way probe points t_j = (5/4) 2^-j, ascending."""
    return tuple((5.0 / 4.0) * 2.0**-j for j in range(j_count, 0, -1))


@dataclass
class Lemma8Witnesses:
    """Per-mask witness thresholds (t, y) with y = 17 t / 4."""

    n: int
    witnesses: dict  # mask -> (t, y)

    def validate(self, paths) -> bool:
        """Every witnessed mask is reproduced by its threshold pair."""
        values = np.stack([p.values for p in paths])
        grid = paths[0].grid
        for mask, (t, y) in self.witnesses.items():
            col = values[:, grid.index_of(t)]
            realized = sum(1 << j for j in range(len(paths)) if col[j] <= y)
            if realized != mask:
                return False
        return True

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "witnesses": {format(mask, "b").zfill(self.n): [t, y] for mask, (t, y) in self.witnesses.items()},
        }


def lemma8_construct(n: int, j_count: int, seed: SeedSpec):
    """Oscillator paths probed at the quarter points of each dyadic interval.

    At t_j = (5/4) 2^-j the slow sine branch evaluates to 1 and the fast one
    to 0, so path values split into the bands [4.5 t, 6 t] and [3 t, 4 t];
    the threshold 17 t / 4 = 4.25 t lies strictly between them and cuts out
    exactly the fast-branch paths.  Each interval's independent branch coins
    pick a uniform random subset, so j_count intervals witness all 2^n masks
    with coupon-collector probability.
    """
    if n > MAX_PATHS:
        raise ValueError(f"n must stay at or below {MAX_PATHS}")
    spec = ProcessSpec("lip1-osc", oscillator_intervals=j_count)
    grid = TimeGrid("interval-1d", oscillator_probe_times(j_count), 1.0)
    values = generate_paths(spec, grid, n, seed.master_seed, seed.replicate_index)
    paths = [SamplePath(grid, values[i]) for i in range(n)]

    witnesses = {}
    for c, t in enumerate(grid):
        y = 4.25 * t
        mask = sum(1 << j for j in range(n) if values[j, c] <= y)
        witnesses.setdefault(mask, (t, y))
    t1 = grid.points[-1]
    witnesses.setdefault(0, (t1, -1.0))
    witnesses.setdefault((1 << n) - 1, (t1, 6.5 * t1))
    return paths, Lemma8Witnesses(n=n, witnesses=witnesses)


def brownian_lil_grid(depth: int = 60) -> TimeGrid:
    """Dyadic grid 2^-j, j <= depth, reaching the small-time iterated-
    logarithm regime where orderings of independent paths keep reshuffling."""
    return dyadic_grid(depth)

"""Partition machinery: per-cell threshold cuts, product partitions, minimal
merges, admissibility bookkeeping, and greedy separated sets.

An admissible sequence is an increasing sequence of partitions with level-n
cardinality at most 2^(2^n); its quality against a metric d is the tail sum
sup_t sum_{n >= r} 2^(n/2) diam_d(A_n(t)), which must vanish as r grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import PseudoMetricTable
from .transform import CdfModel

NEG_INF = -math.inf
POS_INF = math.inf


@dataclass(frozen=True)
class Piece:
    """One cut piece of the real line: an interval or a single atom.

    Intervals are (lo, hi] when include_hi else (lo, hi); lo = -inf and
    hi = +inf mark the unbounded ends.  Atoms have lo == hi.
    """

    lo: float
    hi: float
    include_hi: bool
    mass: float
    is_tail: bool = False

    @property
    def is_atom(self) -> bool:
        return self.lo == self.hi

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.is_atom:
            return x == self.lo
        upper = (x <= self.hi) if self.include_hi else (x < self.hi)
        return (x > self.lo) & upper

    def label(self) -> str:
        if self.is_atom:
            return f"{{{self.lo:g}}}"
        left = "(-inf" if self.lo == NEG_INF else f"({self.lo:g}"
        if self.hi == POS_INF:
            return f"{left}, inf)"
        return f"{left}, {self.hi:g}" + ("]" if self.include_hi else ")")


@dataclass
class CutPointDecomposition:
    """Cut pieces for one cell: every C_k (and atom D_k) produced by the
    iteration carries cdf mass at least alpha, except a final light tail."""

    alpha: float
    pieces: list
    null_tail: Piece | None = None

    @property
    def count(self) -> int:
        return len(self.pieces)

    def all_pieces(self):
        return self.pieces + ([self.null_tail] if self.null_tail is not None else [])

    def cut_values(self):
        out = []
        for p in self.pieces:
            if not p.is_atom and math.isfinite(p.hi):
                out.append(p.hi)
        return out


def cut_points(f_b: CdfModel, alpha: float) -> CutPointDecomposition:
    """Iterated threshold cuts of the real line under a cdf.

    z_{k+1} = sup{ x > z_k : F(x) - F(z_k) < alpha }.  When the cdf climbs
    past the target exactly (no jump at z), the piece is the half-open
    interval (z_k, z_{k+1}]; when a jump overshoots, the interval stays open
    and the jump point becomes its own atom.  At most 2/alpha nonempty
    pieces result; residual mass below alpha ends up in one tail piece.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    pieces = []
    prev = NEG_INF
    f_prev = 0.0
    max_steps = int(2.0 / alpha) + 3
    for _ in range(max_steps):
        z = f_b.upper_quantile(f_prev + alpha)
        if z == POS_INF:
            pieces.append(Piece(prev, POS_INF, False, 1.0 - f_prev, is_tail=True))
            return CutPointDecomposition(alpha=alpha, pieces=pieces)
        f_z = float(f_b.eval_cdf(z))
        # tolerance keeps exact-climb steps (F(z) = F(prev) + alpha) from
        # spawning zero-mass atoms through float round-off
        if f_z - f_prev <= alpha * (1.0 + 1e-12) + 1e-15:
            pieces.append(Piece(prev, z, True, f_z - f_prev))
        else:
            f_left = float(f_b.eval_left(z))
            pieces.append(Piece(prev, z, False, f_left - f_prev))
            pieces.append(Piece(z, z, True, f_z - f_left))
        prev, f_prev = z, f_z
        remaining = 1.0 - f_prev
        if remaining < alpha:
            tail = Piece(prev, POS_INF, False, remaining, is_tail=True)
            if remaining > 0.0:
                pieces.append(tail)
                return CutPointDecomposition(alpha=alpha, pieces=pieces)
            return CutPointDecomposition(alpha=alpha, pieces=pieces, null_tail=tail)
    raise RuntimeError("cut-point iteration failed to terminate")


def chebyshev_anchor(d: PseudoMetricTable, cell) -> int:
    """Cell member minimizing the max distance to the rest of the cell."""
    cell = list(cell)
    sub = d.d[np.ix_(cell, cell)]
    return cell[int(np.argmin(sub.max(axis=1)))]


@dataclass
class ProductCell:
    b_indices: tuple
    anchor: object
    piece: Piece
    diam_bound: float | None = None


@dataclass
class ProductRefineResult:
    level: int
    cells: list
    count_bound: int

    @property
    def count(self) -> int:
        return sum(1 for c in self.cells if not c.piece.is_tail or c.piece.mass > 0)


def product_refine(
    level_cells,
    rho: PseudoMetricTable,
    cdf_of_point,
    n: int,
    l_value: float | None = None,
) -> ProductRefineResult:
    """Cross each cell B of a level-(n-1) partition with its own threshold
    cuts at alpha = (diam_rho(B) + 2^-n)^2.

    The alpha choice caps the per-cell piece count at 2^(2n+1), so a level
    with at most 2^(2^(n-1)) cells yields at most 2^(2^(n-1)) * 2^(2n+1)
    product cells.  Each product cell records the diameter bound
    2 (sqrt(2L+2) diam_rho(B) + diam_rho(B) + 2^-n) when L is supplied.
    """
    cells = []
    for b in level_cells:
        b = tuple(b)
        diam = rho.diameter(list(b))
        alpha = (diam + 2.0**-n) ** 2
        anchor_idx = chebyshev_anchor(rho, b)
        anchor = rho.points[anchor_idx]
        bound = None
        if l_value is not None:
            bound = 2.0 * (math.sqrt(2.0 * l_value + 2.0) * diam + diam + 2.0**-n)
        if alpha >= 1.0:
            # a single piece covers the line; no cut needed
            pieces = [Piece(NEG_INF, POS_INF, False, 1.0, is_tail=True)]
            null_tail = None
        else:
            decomp = cut_points(cdf_of_point(anchor), alpha)
            pieces = decomp.pieces
            null_tail = decomp.null_tail
        for piece in pieces:
            cells.append(ProductCell(b, anchor, piece, bound))
        if null_tail is not None:
            cells.append(ProductCell(b, anchor, null_tail, bound))
    count_bound = 2 ** (2 ** (n - 1)) * 2 ** (2 * n + 1)
    result = ProductRefineResult(level=n, cells=cells, count_bound=count_bound)
    nonnull = sum(1 for c in cells if c.piece.mass > 0 or not c.piece.is_tail)
    if nonnull > count_bound:
        raise RuntimeError(
            f"product partition at level {n} has {nonnull} cells, "
            f"exceeding the bound {count_bound}: construction bug"
        )
    return result


@dataclass
class PartitionSequence:
    """Increasing partitions of range(size); level n lives at levels[n].

    Cells are tuples of point indices.  The admissibility flag asserts
    cards[n] <= 2^(2^n) at every level.
    """

    size: int
    levels: list

    def __post_init__(self):
        for part in self.levels:
            seen = sorted(i for cell in part for i in cell)
            if seen != list(range(self.size)):
                raise ValueError("levels must partition range(size)")
        for coarse, fine in zip(self.levels, self.levels[1:]):
            lookup = {}
            for ci, cell in enumerate(coarse):
                for i in cell:
                    lookup[i] = ci
            for cell in fine:
                if len({lookup[i] for i in cell}) != 1:
                    raise ValueError("partition sequence must be increasing")

    @property
    def cards(self):
        return [len(part) for part in self.levels]

    @property
    def admissible(self) -> bool:
        return all(len(part) <= 2 ** (2**n) for n, part in enumerate(self.levels))

    def cell_of(self, n: int, i: int):
        for cell in self.levels[n]:
            if i in cell:
                return cell
        raise KeyError(i)

    def to_json(self) -> dict:
        return {
            "size": self.size,
            "cards": self.cards,
            "levels": [[list(cell) for cell in part] for part in self.levels],
        }


def _refine(a, b):
    """Coarsest common refinement of two partitions (cells as index tuples)."""
    label_b = {}
    for ci, cell in enumerate(b):
        for i in cell:
            label_b[i] = ci
    out = {}
    for ai, cell in enumerate(a):
        for i in cell:
            out.setdefault((ai, label_b[i]), []).append(i)
    return [tuple(sorted(v)) for v in sorted(out.values())]


def minimal_merge(partitions, size: int | None = None) -> PartitionSequence:
    """Running minimal partitions H_n generated by the inputs up to n-1.

    H_0 is the trivial partition and H_n refines inputs 1..n-1 (note the
    shift), so an already increasing input sequence comes back displaced by
    one level.  Cardinalities never exceed the running product of the input
    cardinalities.
    """
    partitions = [list(map(tuple, p)) for p in partitions]
    if size is None:
        size = max((i for p in partitions for cell in p for i in cell), default=-1) + 1
    for p in partitions:
        seen = sorted(i for cell in p for i in cell)
        if seen != list(range(size)):
            raise ValueError("inputs must partition the same index set")
    levels = [[tuple(range(size))]]
    current = levels[0]
    for g in partitions:
        current = _refine(current, g)
        levels.append(current)
    return PartitionSequence(size=size, levels=levels)


def gamma_sum_tail(seq: PartitionSequence, d: PseudoMetricTable, r: int) -> float:
    """sup over points of sum_{n >= r} 2^(n/2) diam_d(A_n(point)).

    The sequence must extend far enough that its last level is pointwise
    singletons; the tail beyond the stored levels is then zero.
    """
    if len(d.points) != seq.size:
        raise ValueError("metric table size mismatch")
    worst = 0.0
    for i in range(seq.size):
        total = 0.0
        for n in range(r, len(seq.levels)):
            cell = seq.cell_of(n, i)
            if len(cell) > 1:
                total += 2.0 ** (n / 2.0) * d.diameter(list(cell))
        worst = max(worst, total)
    return worst


def _farthest_point_split(d: np.ndarray, cell, k: int):
    """Split a cell into at most k subcells around farthest-point centers."""
    cell = list(cell)
    if len(cell) <= 1 or k <= 1:
        return [tuple(cell)]
    centers = [cell[0]]
    while len(centers) < min(k, len(cell)):
        dist = np.min(d[np.ix_(cell, centers)], axis=1)
        far = int(np.argmax(dist))
        if dist[far] <= 0.0:
            break
        centers.append(cell[far])
    assign = np.argmin(d[np.ix_(cell, centers)], axis=1)
    out = {}
    for i, a in zip(cell, assign):
        out.setdefault(int(a), []).append(i)
    return [tuple(sorted(v)) for _, v in sorted(out.items())]


def greedy_admissible(d: PseudoMetricTable) -> PartitionSequence:
    """Admissible sequence for a finite pseudo-metric space by farthest-point
    splitting.

    Each level spends its cardinality budget 2^(2^n) across the current
    cells front to back, reserving one slot for every cell still waiting,
    so singleton cells never eat the budget.  Terminates at singletons.
    """
    size = len(d.points)
    levels = [[tuple(range(size))]]
    n = 0
    while any(len(cell) > 1 for cell in levels[-1]):
        n += 1
        budget = 2 ** (2**n)
        current = levels[-1]
        nxt = []
        remaining_cells = len(current)
        remaining_budget = budget
        for cell in current:
            remaining_cells -= 1
            allowance = min(len(cell), max(1, remaining_budget - remaining_cells))
            parts = _farthest_point_split(d.d, cell, allowance)
            nxt.extend(parts)
            remaining_budget -= len(parts)
        levels.append(nxt)
        if n > 8:
            raise RuntimeError("greedy split failed to reach singletons")
    return PartitionSequence(size=size, levels=levels)


def maximal_separated_set(d: PseudoMetricTable, eps: float):
    """Greedy maximal eps-separated subset: pairwise distances >= eps and
    every excluded point lies within eps of a chosen one."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    size = len(d.points)
    chosen = [0]
    while True:
        dist = np.min(d.d[:, chosen], axis=1)
        far = int(np.argmax(dist))
        if dist[far] >= eps:
            chosen.append(far)
        else:
            break
    return [d.points[i] for i in chosen]


@dataclass
class ComposedChain:
    """Product-space admissible sequence assembled from a base sequence on
    the time grid and per-cell threshold cuts."""

    points: list  # (t, y) pairs, indexable
    sequence: PartitionSequence
    product_levels: list  # ProductRefineResult per level k >= 2
    base: PartitionSequence
    meta: dict = field(default_factory=dict)


def composed_admissible(
    rho: PseudoMetricTable,
    cdf_of_point,
    y_values,
    max_level: int,
    l_value: float | None = None,
) -> ComposedChain:
    """Levels 0-2 trivial; for k >= 2 cross the base level k-1 with its
    threshold cuts, then take running minimal merges of levels 2..n-1.

    The finite product index set is grid x y_values; empty product cells
    (pieces containing no realized threshold) vanish automatically.
    """
    base = greedy_admissible(rho)
    y_values = np.asarray(sorted(y_values), dtype=float)
    m = len(rho.points)
    points = [(rho.points[i], float(y)) for i in range(m) for y in y_values]
    size = len(points)

    def point_id(i_grid, j_y):
        return i_grid * len(y_values) + j_y

    product_levels = []
    g_partitions = []
    for k in range(2, max_level + 1):
        base_level = base.levels[min(k - 1, len(base.levels) - 1)]
        refined = product_refine(base_level, rho, cdf_of_point, k, l_value)
        product_levels.append(refined)
        cells = []
        for cell in refined.cells:
            inside = cell.piece.contains(y_values)
            ids = [point_id(i, j) for i in cell.b_indices for j in np.nonzero(inside)[0]]
            if ids:
                cells.append(tuple(sorted(ids)))
        g_partitions.append(cells)

    # levels 0-2 trivial; level n >= 3 merges the products at 2 .. n-1
    trivial = [tuple(range(size))]
    levels = [trivial, trivial, trivial]
    current = trivial
    for g in g_partitions:
        current = _refine(current, g)
        levels.append(current)
    seq = PartitionSequence(size=size, levels=levels)
    return ComposedChain(
        points=points,
        sequence=seq,
        product_levels=product_levels,
        base=base,
        meta={"max_level": max_level, "y_count": len(y_values)},
    )

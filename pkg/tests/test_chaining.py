import math

import numpy as np
import pytest

from empclt.chaining import (
    ComposedChain,
    PartitionSequence,
    chebyshev_anchor,
    composed_admissible,
    cut_points,
    gamma_sum_tail,
    greedy_admissible,
    maximal_separated_set,
    minimal_merge,
    product_refine,
)
from empclt.grids import uniform_grid
from empclt.metrics import IndexPoint, PseudoMetricTable, quantile_grid, rho_table, tau_table
from empclt.process_models import ProcessSpec, analytic_cdf
from empclt.rng import SeedSpec, stream
from empclt.transform import DegenerateCdf, TwoPointCdf, UniformCdf, empirical_cdf


def test_cut_points_uniform_quarters():
    dec = cut_points(UniformCdf(0, 1), 0.25)
    labels = [p.label() for p in dec.pieces]
    assert labels == ["(-inf, 0.25]", "(0.25, 0.5]", "(0.5, 0.75]", "(0.75, 1]"]
    assert all(not p.is_atom for p in dec.pieces)
    assert dec.count == 4
    assert dec.null_tail is not None


def test_cut_points_point_mass():
    dec = cut_points(DegenerateCdf(0.0), 0.5)
    assert [p.label() for p in dec.pieces] == ["(-inf, 0)", "{0}"]
    assert dec.pieces[1].mass == 1.0
    assert dec.count == 2


def test_cut_points_bernoulli_hand_trace():
    dec = cut_points(TwoPointCdf(0.3), 0.2)
    assert [p.label() for p in dec.pieces] == ["(-inf, 0)", "{0}", "(0, 1)", "{1}"]
    assert [p.mass for p in dec.pieces] == pytest.approx([0.0, 0.7, 0.0, 0.3])


def test_cut_points_normal_unbounded_tail():
    from empclt.transform import NormalCdf

    dec = cut_points(NormalCdf(0, 1), 0.3)
    assert dec.pieces[-1].hi == math.inf
    assert dec.pieces[-1].is_tail


def test_cut_points_alpha_domain():
    for alpha in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            cut_points(UniformCdf(0, 1), alpha)


@pytest.mark.parametrize(
    "cdf",
    [
        UniformCdf(0, 1),
        TwoPointCdf(0.3),
        DegenerateCdf(0.0),
        empirical_cdf(stream(3, 4, 1).standard_normal(10_000)),
    ],
    ids=["uniform", "bernoulli", "point-mass", "empirical-normal"],
)
@pytest.mark.parametrize("k", range(2, 9))
def test_cut_points_mass_and_count_invariants(cdf, k):
    alpha = 2.0**-k
    dec = cut_points(cdf, alpha)
    assert dec.count <= 2.0 / alpha
    total = sum(p.mass for p in dec.all_pieces())
    assert total == pytest.approx(1.0, abs=1e-9)
    # every piece except a final light tail carries >= alpha jointly with its
    # atom partner: walk the steps
    pieces = dec.pieces
    i = 0
    while i < len(pieces):
        p = pieces[i]
        if p.is_tail:
            assert p.mass < alpha + 1e-12 or i + 1 == len(pieces)
            i += 1
            continue
        step_mass = p.mass
        if i + 1 < len(pieces) and pieces[i + 1].is_atom:
            step_mass += pieces[i + 1].mass
            i += 1
        if not (i + 1 >= len(pieces) and dec.null_tail is None and p.is_tail):
            assert step_mass >= alpha - 1e-12
        i += 1


def test_piece_membership_partitions_line():
    dec = cut_points(TwoPointCdf(0.3), 0.2)
    xs = np.array([-5.0, -1e-9, 0.0, 1e-9, 0.5, 1.0 - 1e-9, 1.0, 1.5])
    counts = np.zeros(len(xs), dtype=int)
    for p in dec.all_pieces():
        counts += p.contains(xs).astype(int)
    assert np.all(counts == 1)


def test_product_refine_singleton_continuous_cell():
    # alpha = (0 + 2^-3)^2 = 2^-6; piece count <= 2 / alpha = 2^7
    spec = ProcessSpec("fbm-shift", gamma=0.5)
    grid = uniform_grid(4)
    rho = rho_table(spec, grid)
    res = product_refine([(2,)], rho, lambda t: analytic_cdf(spec, t), n=3)
    assert res.count <= 2**7
    assert res.count_bound == 2 ** (2**2) * 2**7


def test_product_refine_eq17_bound_formula():
    # diam 0.1, n = 2, L = 1: 2(sqrt(4)*0.1 + 0.1 + 0.25) = 1.1
    pts = [0, 1]
    d = PseudoMetricTable(points=pts, d=np.array([[0.0, 0.1], [0.1, 0.0]]))
    res = product_refine([(0, 1)], d, lambda t: UniformCdf(0, 1), n=2, l_value=1.0)
    assert res.cells[0].diam_bound == pytest.approx(1.1)


def test_product_refine_alpha_at_least_one_single_piece():
    pts = [0, 1]
    d = PseudoMetricTable(points=pts, d=np.array([[0.0, 1.0], [1.0, 0.0]]))
    res = product_refine([(0, 1)], d, lambda t: UniformCdf(0, 1), n=2)
    assert len(res.cells) == 1
    assert res.cells[0].piece.contains(np.array([-10.0, 0.0, 10.0])).all()


def _measure_cell_tau_diameter(spec, b_points, piece, n, seed, grid):
    f = analytic_cdf(spec, b_points[len(b_points) // 2])
    if piece.is_atom:
        ys = [piece.lo]
    else:
        q_lo = float(f.eval_cdf(piece.lo)) if math.isfinite(piece.lo) else 0.0
        q_hi = float(f.eval_cdf(piece.hi)) if math.isfinite(piece.hi) else 1.0
        qs = q_lo + (q_hi - q_lo) * np.linspace(0.05, 0.95, 7)
        ys = [f.upper_quantile(q) for q in qs]
        ys = [y for y in ys if math.isfinite(y) and piece.contains(y)]
    if not ys:
        return None, None
    index = [IndexPoint(t, float(y)) for t in b_points for y in ys]
    table = tau_table(spec, grid, index, n, seed)
    imax = np.unravel_index(int(np.argmax(table.d)), table.d.shape)
    return table.diameter(), float(table.stderr[imax])


def test_product_refine_diameter_bound_monte_carlo():
    spec = ProcessSpec("fbm-shift", gamma=0.5)
    grid = uniform_grid(16)
    rho = rho_table(spec, grid)
    base = greedy_admissible(rho)
    level = 3
    cells = base.levels[min(level - 1, len(base.levels) - 1)]
    res = product_refine(cells, rho, lambda t: analytic_cdf(spec, t), n=level, l_value=0.0)
    checked = 0
    for cell in res.cells[:24]:
        if cell.piece.mass <= 0:
            continue
        b_points = [rho.points[i] for i in cell.b_indices]
        diam, se = _measure_cell_tau_diameter(spec, b_points, cell.piece, 20_000, SeedSpec(41, checked), grid)
        if diam is None:
            continue
        assert diam <= cell.diam_bound + 4 * (se or 0.0)
        checked += 1
    assert checked >= 5


def test_product_refine_atom_piece_bound():
    # pieces that are single atoms obey the tighter 2 sqrt(2L+2) diam bound
    spec = ProcessSpec("linear-u")
    grid = uniform_grid(8)
    rho = rho_table(spec, grid)
    l_value = 0.0
    cell_b = tuple(range(len(grid)))  # includes t = 0 whose marginal is an atom
    res = product_refine([cell_b], rho, lambda t: analytic_cdf(spec, t), n=4, l_value=l_value)
    atoms = [c for c in res.cells if c.piece.is_atom]
    diam_rho = rho.diameter(list(cell_b))
    for cell in atoms:
        b_points = [rho.points[i] for i in cell.b_indices]
        index = [IndexPoint(t, cell.piece.lo) for t in b_points]
        table = tau_table(spec, grid, index, 20_000, SeedSpec(42))
        imax = np.unravel_index(int(np.argmax(table.d)), table.d.shape)
        bound = 2.0 * math.sqrt(2 * l_value + 2) * diam_rho
        assert table.diameter() <= bound + 4 * float(table.stderr[imax])


def test_minimal_merge_shift_of_increasing_sequence():
    parts = [
        [(0, 1, 2, 3)],
        [(0, 1), (2, 3)],
        [(0,), (1,), (2, 3)],
    ]
    seq = minimal_merge(parts, size=4)
    assert seq.levels[0] == [(0, 1, 2, 3)]
    for n in range(1, 4):
        assert sorted(seq.levels[n]) == sorted(parts[n - 1])


def test_minimal_merge_general_position():
    a = [(0, 1), (2, 3)]
    b = [(0, 2), (1, 3)]
    seq = minimal_merge([a, b], size=4)
    assert len(seq.levels[2]) == 4


def test_minimal_merge_card_bound():
    rg = stream(11, 4, 0)
    pts = rg.standard_normal(20)
    p1 = [tuple(np.nonzero(pts < q)[0]) for q in (-0.5,)] + [tuple(np.nonzero(pts >= -0.5)[0])]
    p2 = [tuple(np.nonzero(pts < q)[0]) for q in (0.4,)] + [tuple(np.nonzero(pts >= 0.4)[0])]
    seq = minimal_merge([p1, p2], size=20)
    assert len(seq.levels[2]) <= len(p1) * len(p2)


def test_minimal_merge_rejects_mismatched_inputs():
    with pytest.raises(ValueError):
        minimal_merge([[(0, 1)], [(0,)]], size=2)


def test_partition_sequence_validation():
    with pytest.raises(ValueError):
        PartitionSequence(size=3, levels=[[(0, 1)]])  # missing index 2
    with pytest.raises(ValueError):
        # not increasing: second level regroups across first-level cells
        PartitionSequence(size=4, levels=[[(0, 1), (2, 3)], [(1, 2), (0, 3)]])


def test_gamma_sum_tail_two_point_space():
    d = PseudoMetricTable(points=[0, 1], d=np.array([[0.0, 1.0], [1.0, 0.0]]))
    seq = PartitionSequence(size=2, levels=[[(0, 1)], [(0,), (1,)]])
    assert gamma_sum_tail(seq, d, 0) == pytest.approx(1.0)
    assert gamma_sum_tail(seq, d, 1) == 0.0


def test_gamma_sum_tail_singleton_space():
    d = PseudoMetricTable(points=[0], d=np.zeros((1, 1)))
    seq = PartitionSequence(size=1, levels=[[(0,)]])
    for r in range(3):
        assert gamma_sum_tail(seq, d, r) == 0.0


def test_greedy_admissible_uniform_metric_cards():
    k = 16
    d = np.ones((k, k)) - np.eye(k)
    table = PseudoMetricTable(points=list(range(k)), d=d)
    seq = greedy_admissible(table)
    assert seq.cards == [1, 4, 16]
    assert seq.admissible


def test_greedy_admissible_singleton():
    table = PseudoMetricTable(points=[0], d=np.zeros((1, 1)))
    seq = greedy_admissible(table)
    assert seq.cards == [1]


def test_greedy_admissible_fbm_tail_decreases():
    spec = ProcessSpec("fbm-shift", gamma=0.5)
    grid = uniform_grid(64)
    rho = rho_table(spec, grid)
    seq = greedy_admissible(rho)
    assert seq.admissible
    tails = [gamma_sum_tail(seq, rho, r) for r in range(len(seq.levels) + 1)]
    assert tails[0] > 0.0
    assert all(b <= a + 1e-12 for a, b in zip(tails, tails[1:]))
    assert tails[-1] == 0.0  # the top level is pointwise singletons


def test_maximal_separated_set_trivia():
    d2 = PseudoMetricTable(points=["a", "b"], d=np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert maximal_separated_set(d2, 2.0) == ["a"]
    assert sorted(maximal_separated_set(d2, 0.5)) == ["a", "b"]


def test_maximal_separated_set_properties():
    spec = ProcessSpec("fbm-shift", gamma=0.5)
    grid = uniform_grid(64)
    rho = rho_table(spec, grid)
    eps = 0.25
    chosen = maximal_separated_set(rho, eps)
    idx = [rho.points.index(p) for p in chosen]
    sub = rho.d[np.ix_(idx, idx)]
    off = sub[~np.eye(len(idx), dtype=bool)]
    assert np.all(off >= eps)
    mins = rho.d[:, idx].min(axis=1)
    assert np.all(mins < eps + 1e-12)  # maximality
    assert len(chosen) <= 2 ** (1.0 / eps**2)


def test_chebyshev_anchor_picks_center():
    d = np.array(
        [
            [0.0, 1.0, 2.0],
            [1.0, 0.0, 1.0],
            [2.0, 1.0, 0.0],
        ]
    )
    table = PseudoMetricTable(points=[0, 1, 2], d=d)
    assert chebyshev_anchor(table, (0, 1, 2)) == 1


def test_composed_chain_admissible_and_tail_vanishes():
    spec = ProcessSpec("fbm-shift", gamma=0.5)
    grid = uniform_grid(16)
    rho = rho_table(spec, grid)
    ys = quantile_grid([analytic_cdf(spec, grid.points[8])], 8)
    chain = composed_admissible(rho, lambda t: analytic_cdf(spec, t), ys, max_level=5, l_value=0.0)
    seq = chain.sequence
    assert isinstance(chain, ComposedChain)
    assert seq.admissible
    assert seq.cards[-1] == seq.size  # pointwise singletons at the top
    for res in chain.product_levels:
        assert res.count <= res.count_bound


def test_composition_tail_bounded_by_base_tail():
    # gamma tail of the composed sequence under estimated tau is controlled by
    # C * (base rho tail + sum 2^(-n/2)); C is fitted and must stay moderate
    spec = ProcessSpec("fbm-shift", gamma=0.5)
    grid = uniform_grid(16)
    rho = rho_table(spec, grid)
    ys = quantile_grid([analytic_cdf(spec, grid.points[8])], 6)
    chain = composed_admissible(rho, lambda t: analytic_cdf(spec, t), ys, max_level=5, l_value=0.0)
    seq = chain.sequence

    index = [IndexPoint(t, y) for (t, y) in chain.points]
    tau = tau_table(spec, grid, index, 20_000, SeedSpec(55))
    base_tails = [gamma_sum_tail(chain.base, rho, r) for r in range(len(seq.levels))]
    ratios = []
    for r in range(1, len(seq.levels) - 1):
        lhs = gamma_sum_tail(seq, tau, r)
        geo = sum(2.0 ** (-n / 2.0) for n in range(r, len(seq.levels)))
        rhs = base_tails[min(r, len(base_tails) - 1)] + geo
        if lhs > 0:
            ratios.append(lhs / rhs)
    assert ratios, "composition produced no nontrivial tails"
    fitted_c = max(ratios)
    assert fitted_c < 50.0
    assert gamma_sum_tail(seq, tau, len(seq.levels) - 1) == 0.0

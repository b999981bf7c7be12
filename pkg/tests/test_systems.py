import math
from fractions import Fraction

import numpy as np
import pytest

from pentropy.errors import NeedsDeeperStageError, UnsupportedOperationError
from pentropy.gaussian import GaussianSampler, sign_cylinder, threshold_cylinder, white_noise_sampler
from pentropy.partition import exact_join_distribution, sampled_join_distribution
from pentropy.rank_one import TowerConstruction
from pentropy.spectra import named_measure
from pentropy.systems import (
    ArcPartition,
    BernoulliShift,
    CoordinatePartition,
    GaussianSystem,
    LevelPartition,
    RankOneSystem,
    RotationSystem,
    dyadic_arc_partition,
    parse_angle,
    two_arc_partition,
)


def grid_join(alpha: float, endpoints, iterates, n=1_000_000):
    x = (np.arange(n) + 0.5) / n
    E = np.array([float(e) for e in endpoints])
    cols = [(np.searchsorted(E, np.mod(x + p * alpha, 1.0), side="right") - 1) % len(E)
            for p in iterates]
    keys, counts = np.unique(np.stack(cols, axis=1), axis=0, return_counts=True)
    return {tuple(int(v) for v in k): c / n for k, c in zip(keys, counts)}


def test_parse_angle():
    assert parse_angle("3/7") == Fraction(3, 7)
    assert parse_angle(0.25) == Fraction(1, 4)
    g = parse_angle("golden")
    assert abs(float(g) - (math.sqrt(5) - 1) / 2) < 1e-15


def test_rational_rotation_join_is_exact():
    sysm = RotationSystem("1/4")
    xi = two_arc_partition()
    d = exact_join_distribution(sysm, xi, {1, 2})
    # x and x + 1/2 always have opposite labels; x + 1/4 splits each half
    assert d.support == {("a", "b"): 0.25, ("b", "b"): 0.25, ("b", "a"): 0.25, ("a", "a"): 0.25}
    d2 = exact_join_distribution(sysm, xi, {2, 4})
    assert d2.support == {("b", "a"): 0.5, ("a", "b"): 0.5}


@pytest.mark.parametrize("iterates", [(2, 4), (1, 3, 7), (5, 10, 15, 20)])
def test_golden_rotation_matches_grid(iterates):
    sysm = RotationSystem("golden")
    xi = dyadic_arc_partition(2)
    exact = sysm.exact_join(xi, iterates)
    oracle = grid_join((math.sqrt(5) - 1) / 2, xi.endpoints, iterates)
    assert set(exact) == set(oracle)
    for k, m in exact.items():
        assert m == pytest.approx(oracle[k], abs=5e-6)
    assert math.fsum(exact.values()) == pytest.approx(1.0, abs=1e-14)


def test_rotation_cell_count_bound():
    sysm = RotationSystem("golden")
    xi = two_arc_partition()
    for L in (1, 4, 16, 40):
        d = sysm.exact_join(xi, [3 * k for k in range(1, L + 1)])
        assert len(d) <= 2 * L


def test_rotation_sampling_agrees_with_exact():
    sysm = RotationSystem("golden")
    xi = ArcPartition((Fraction(0), Fraction(1, 3)), ("u", "v"))
    it = (1, 2)
    d = sampled_join_distribution(sysm, xi, it, 400_000, seed=5)
    assert d.tv_distance(exact_join_distribution(sysm, xi, it)) < 5 * math.sqrt(4 / 400_000)


def test_arc_partition_validation():
    with pytest.raises(ValueError):
        ArcPartition((Fraction(1, 2), Fraction(0)))
    with pytest.raises(ValueError):
        ArcPartition((Fraction(0), Fraction(1)))
    merged = ArcPartition((Fraction(0), Fraction(1, 4), Fraction(1, 2)), ("a", "b", "a"))
    assert RotationSystem("golden").marginal(merged).masses == (0.75, 0.25)


def test_bernoulli_overlapping_window_entropy():
    sysm = BernoulliShift([0.5, 0.5])
    xi = CoordinatePartition((0, 1))
    # translates by 1 overlap: the join over {1, 2} sees 3 fair coins
    assert sysm.exact_join_entropy(xi, (1, 2)) == pytest.approx(3 * math.log(2), abs=1e-12)
    assert sysm.exact_join_entropy(xi, (2, 4)) == pytest.approx(4 * math.log(2), abs=1e-12)


def test_bernoulli_relabel_merges_cells():
    sysm = BernoulliShift([0.5, 0.5])
    parity = CoordinatePartition((0, 1), relabel=("even", "odd", "odd", "even"))
    assert sysm.labels(parity) == ("even", "odd")
    assert sysm.marginal(parity).masses == (0.5, 0.5)


def test_gaussian_exact_only_with_certificate():
    white = GaussianSystem(white_noise_sampler())
    assert white.exact_join_entropy(threshold_cylinder(0, 3), (1, 2, 3)) == pytest.approx(
        3 * math.log(3), abs=1e-12)
    corr = GaussianSystem(GaussianSampler(named_measure("ma1")))
    with pytest.raises(UnsupportedOperationError):
        corr.exact_join(sign_cylinder(0), (1, 2))
    # gaps of 2 avoid the only nonzero lag
    assert corr.exact_join_entropy(sign_cylinder(0), (2, 4)) == pytest.approx(2 * math.log(2))


def test_rank_one_level_partition_join():
    tc = TowerConstruction()
    tc.build_stage(2, [0, 3])   # h = 5
    tc.build_stage(2, [0, 20])  # h = 30
    sysm = RankOneSystem(tc)
    xi = LevelPartition(1, ("a", "b", "c", "d", "e"))
    d = exact_join_distribution(sysm, xi, {1})
    assert d.support[("b",)] == pytest.approx(0.2)
    # the top level's left column climbs onto level "a", its right column onto spacers
    assert d.support[("a",)] == pytest.approx(0.1)
    assert d.support[("outside",)] == pytest.approx(0.1)
    with pytest.raises(NeedsDeeperStageError):
        sysm.exact_join(xi, (40,))

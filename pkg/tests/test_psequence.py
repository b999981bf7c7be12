import math

import pytest
from hypothesis import given, strategies as st

from pentropy.partition import Partition
from pentropy.psequence import ProgressionSequence, materialize, vanishing_sequence_search
from pentropy.systems import BernoulliShift, IdentitySystem, RotationSystem, generator_partition, two_arc_partition


def test_materialize_examples():
    assert materialize(3, 4) == (3, 6, 9, 12)
    assert materialize(1, 1) == (1,)
    assert materialize(5, 3) == (5, 10, 15)


@given(st.integers(1, 10 ** 6), st.integers(1, 200))
def test_materialize_properties(j, L):
    P = materialize(j, L)
    assert len(set(P)) == L
    assert max(P) == j * L
    assert all(p % j == 0 for p in P)


@pytest.mark.parametrize("j, L", [(0, 1), (1, 0), (-2, 3), (1.5, 2)])
def test_materialize_rejects(j, L):
    with pytest.raises(ValueError):
        materialize(j, L)


def test_sequence_validation_and_json_roundtrip():
    seq = ProgressionSequence(((1, 2), (3, 2), (7, 5)))
    assert ProgressionSequence.from_json(seq.to_json()) == seq
    assert seq.to_dict() == {"entries": [[1, 2], [3, 2], [7, 5]]}
    assert seq.progression(3) == (3, 6)
    with pytest.raises(ValueError):
        ProgressionSequence(((2, 1), (2, 3)))
    with pytest.raises(ValueError):
        ProgressionSequence(((1, 3), (2, 2)))


def test_search_identity_exact_formula():
    xi = Partition(("a", "b"), (0.5, 0.5))
    res = vanishing_sequence_search(IdentitySystem(), [xi], 0.01, [1, 2, 3], L_bound=256)
    assert res.success
    for j, L in res.sequence:
        assert L >= math.log(2) / 0.01
        (h, se), = res.witnesses[j].values()
        assert h == math.log(2) / L and se == 0.0


def test_search_rotation_finds_vanishing():
    res = vanishing_sequence_search(RotationSystem("golden"), [two_arc_partition()], 0.05,
                                    [1, 2, 3], L_bound=512)
    assert res.success
    for j, L in res.sequence:
        assert res.witnesses[j]["arcs[0,1/2)"][0] < 0.05


def test_search_bernoulli_reports_failure():
    res = vanishing_sequence_search(BernoulliShift([0.5, 0.5]), [generator_partition()], 0.05,
                                    [1, 2], L_bound=32)
    assert not res.success
    assert len(res.sequence) == 0
    for j, L, best in res.failures:
        assert L == 32
        assert best["generator"] == pytest.approx(math.log(2), abs=1e-12)


def test_search_keeps_L_nondecreasing():
    xi = Partition(("a", "b"), (0.5, 0.5))
    res = vanishing_sequence_search(IdentitySystem(), [xi], [0.1, 0.2, 0.05], [1, 2, 3],
                                    L_bound=64)
    Ls = [L for _, L in res.sequence]
    assert Ls == sorted(Ls)


def test_search_reproducible_under_fresh_seed():
    sysm = RotationSystem("golden")
    xi = two_arc_partition()
    a = vanishing_sequence_search(sysm, [xi], 0.4, [2, 3], 8, mode="sampled",
                                  n_samples=50_000, seed=1)
    b = vanishing_sequence_search(sysm, [xi], 0.4, [2, 3], 8, mode="sampled",
                                  n_samples=50_000, seed=2)
    assert a.witnesses.keys() == b.witnesses.keys() and a.witnesses
    for j in a.witnesses:
        (va, sa), = a.witnesses[j].values()
        (vb, sb), = b.witnesses[j].values()
        assert abs(va - vb) <= 3 * math.hypot(sa, sb) + 0.01

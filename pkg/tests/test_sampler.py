import numpy as np
import pytest
from hypothesis import given, strategies as st

from lp_tournament.fixtures import two_point_function
from lp_tournament.model import HypothesisClass, TabularSpace, Triplet
from lp_tournament.sampler import draw_sample, draw_signs, partition, write_sample_csv


def _triplet(probs):
    sp = TabularSpace(np.array(probs))
    H = HypothesisClass.tabular(sp, [np.zeros(sp.n_atoms)])
    return Triplet(H, sp.function(np.arange(sp.n_atoms, dtype=float)))


def test_degenerate_space_only_draws_first_atom():
    s = draw_sample(_triplet([1.0, 0.0]), 1000, seed=5)
    assert np.all(s.x == 0)


def test_sample_determinism_and_keys():
    t = _triplet([0.5, 0.5])
    a, b = draw_sample(t, 200, 1), draw_sample(t, 200, 1)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    c = draw_sample(t, 200, 1, 7)
    assert not np.array_equal(a.x, c.x)


def test_two_point_frequency():
    f = two_point_function(6, 2, 1)  # Pr(K) = 1/8
    t = Triplet(HypothesisClass.tabular(f.space, [f.values]), f)
    s = draw_sample(t, 100_000, 11)
    assert abs(np.mean(s.x == 1) - 0.125) <= 0.004


def test_signs():
    assert len(draw_signs(0, 3)) == 0
    assert np.array_equal(draw_signs(50, 3).signs, draw_signs(50, 3).signs)
    s = draw_signs(100_000, 3).signs
    assert set(np.unique(s)) == {-1.0, 1.0}
    assert abs(s.mean()) <= 0.011


def test_sign_and_sample_streams_are_independent():
    t = _triplet([0.3, 0.7])
    before = draw_sample(t, 100, 4).x.copy()
    draw_signs(100, 99)
    assert np.array_equal(draw_sample(t, 100, 4).x, before)
    # the sign vector for a seed does not depend on any sample drawn
    assert np.array_equal(draw_signs(100, 4).signs, draw_signs(100, 4).signs)


def test_partition_examples():
    p = partition(6, 2)
    assert [list(b) for b in p.blocks()] == [[0, 1], [2, 3], [4, 5]]
    p7 = partition(7, 2)
    assert (p7.n, p7.discarded) == (3, 1)
    assert partition(8, 8).n == 1
    with pytest.raises(ValueError):
        partition(3, 4)
    with pytest.raises(ValueError):
        partition(3, 0)


@given(st.integers(1, 500), st.integers(1, 50))
def test_partition_is_set_partition_of_prefix(N, m):
    if m > N:
        return
    p = partition(N, m)
    idx = [i for b in p.blocks() for i in b]
    assert idx == list(range(p.n * p.m))
    assert p.n == N // m and p.discarded == N - p.n * m
    assert all(len(b) == m for b in p.blocks())


def test_sample_csv(tmp_path):
    s = draw_sample(_triplet([0.5, 0.5]), 5, 0)
    path = tmp_path / "s.csv"
    write_sample_csv(s, path, ["seed = 0"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# seed = 0"
    assert lines[1] == "# sample_seed = 0"
    assert lines[2] == "atom,y"
    assert len(lines) == 3 + 5

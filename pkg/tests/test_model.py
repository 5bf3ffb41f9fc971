import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lp_tournament.model import (ConstructionError, GenerativeSource, HypothesisClass,
                                 TabularSpace, TargetRule, Triplet, find_fstar, midpoint,
                                 midpoint_closure)


def test_space_probabilities_validated():
    with pytest.raises(ConstructionError):
        TabularSpace(np.array([0.5, 0.6]))
    with pytest.raises(ConstructionError):
        TabularSpace(np.array([1.5, -0.5]))
    with pytest.raises(ConstructionError):
        TabularSpace(np.array([]))


def test_function_values_validated():
    sp = TabularSpace.uniform(2)
    with pytest.raises(ConstructionError):
        sp.function([1.0, 2.0, 3.0])
    with pytest.raises(ConstructionError):
        sp.function([1.0, np.inf])


def test_midpoint_examples():
    sp = TabularSpace.uniform(2)
    u, v = sp.function([0.0, 2.0], "u"), sp.function([2.0, 0.0], "v")
    assert midpoint(u, u) is u
    assert np.array_equal(midpoint(u, v).values, [1.0, 1.0])
    src = GenerativeSource("gaussian", {}, dim=2)
    H = HypothesisClass.linear(src, [[1.0, 0.0], [0.0, 1.0]])
    w = midpoint(H.member(0), H.member(1))
    assert np.array_equal(w.weights, [0.5, 0.5])


def test_midpoint_rejects_mixed_spaces():
    a = TabularSpace.uniform(2).function([0.0, 1.0])
    b = TabularSpace.uniform(2).function([0.0, 1.0])
    with pytest.raises(ConstructionError):
        midpoint(a, b)


def test_closure_counts():
    sp = TabularSpace.uniform(3)
    one = HypothesisClass.tabular(sp, [[1.0, 2.0, 3.0]])
    assert len(midpoint_closure(one)) == 1
    two = HypothesisClass.tabular(sp, [[1.0, 2.0, 3.0], [0.0, 0.0, 1.0]])
    assert len(midpoint_closure(two)) == 3
    rng = np.random.default_rng(3)
    src = GenerativeSource("gaussian", {}, dim=4)
    k = 6
    H = HypothesisClass.linear(src, rng.normal(size=(k, 4)))
    closure = midpoint_closure(H)
    assert len(closure) == k * (k + 1) // 2
    # contains the originals with their labels
    for i, lab in enumerate(H.labels):
        assert np.array_equal(closure.table[closure.index(lab)], H.table[i])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.integers(-3, 3), min_size=3, max_size=3), min_size=1, max_size=5))
def test_closure_contains_class_and_bounded(rows):
    sp = TabularSpace.uniform(3)
    uniq = [list(r) for r in dict.fromkeys(map(tuple, rows))]
    H = HypothesisClass.tabular(sp, uniq)
    C = midpoint_closure(H)
    got = {r.tobytes() for r in C.table}
    assert all(np.asarray(r, dtype=float).tobytes() in got for r in uniq)
    assert len(C) <= len(H) * (len(H) + 1) // 2
    # midpoints of midpoints stay representable
    midpoint_closure(C)


def test_find_fstar_examples():
    sp = TabularSpace(np.array([0.25, 0.75]))
    y = sp.function([1.0, -2.0], "y")
    H = HypothesisClass.tabular(sp, [y.values + 1.0, y.values])
    assert find_fstar(Triplet(H, y)) == 1
    c = 0.7
    yc = sp.function([c, c])
    H2 = HypothesisClass.tabular(sp, [[0.0, 0.0], [2 * c, 2 * c]])
    assert find_fstar(Triplet(H2, yc)) == 0


def test_find_fstar_hand_enumeration(three_atom):
    p = np.array([0.2, 0.3, 0.5])
    y = np.array([0.2, 0.8, -0.4])
    rows = np.array([[0.0, 1.0, -1.0], [1.0, 1.0, 1.0], [0.5, 0.0, 0.0]])
    risks = [sum(p[a] * (rows[k, a] - y[a]) ** 2 for a in range(3)) for k in range(3)]
    assert three_atom.fstar == int(np.argmin(risks))
    assert np.allclose(three_atom.exact_risks(rows), risks, rtol=1e-14)


def test_lp_bound_enforced():
    sp = TabularSpace.uniform(2)
    with pytest.raises(ConstructionError, match="f0"):
        HypothesisClass.tabular(sp, [[0.0, 3.0]], p=6, M=2)


def test_generative_moment_certification():
    with pytest.raises(ConstructionError):
        GenerativeSource("student_t", {"df": 4.0}, p=5.0)
    with pytest.raises(ConstructionError):
        GenerativeSource("gaussian", {"std": 3.0}, p=6.0, M=1.0)
    GenerativeSource("student_t", {"df": 5.5}, p=5.0)


def test_cross_backend_risk_consistency():
    """Closed-form risks of a linear triplet agree with an oracle sample."""
    src = GenerativeSource("student_t", {"df": 6.5}, dim=2)
    noise = GenerativeSource("student_t", {"df": 6.5, "scale": 0.5})
    H = HypothesisClass.linear(src, [[0.3, -0.2], [1.0, 0.5], [0.0, 0.0]])
    t = Triplet(H, TargetRule(np.array([0.3, -0.2]), noise), oracle_size=200_000)
    exact = t.exact_risks(H.table)
    mc, se = t.mc_risks(H.table)
    assert np.all(np.abs(mc - exact) <= 3 * se)
    assert find_fstar(t, "mc") == find_fstar(t) == 0


def test_tabular_vs_generative_two_point():
    from lp_tournament.norms import lq_norm

    K, q = 2.0, 0.25
    sp = TabularSpace(np.array([1 - q, q]))
    tab = sp.function([0.0, K])
    src = GenerativeSource("two_point", {"K": K, "q": q})
    assert float(lq_norm(tab, 3.0)) == pytest.approx(src.lp_norm(3.0), rel=1e-14)
    draws = src.sample(100_000, np.random.default_rng(0))
    se = draws.std() / np.sqrt(draws.size)
    assert abs(draws.mean() - K * q) <= 3 * se

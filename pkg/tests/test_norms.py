import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from lp_tournament.fixtures import two_point_function, two_point_W
from lp_tournament.model import (GenerativeSource, HypothesisClass, LinearFunction, TabularSpace)
from lp_tournament.norms import (Estimate, NonFiniteMoment, UncertifiedError,
                                 integrability_constant, lq_norm, small_ball_probability,
                                 tail_fraction, write_norm_report)


def test_two_point_norms():
    W = two_point_W()  # K = 2^1.5, q = r^2/K^2 with r = 1
    assert float(lq_norm(W, 2)) == pytest.approx(1.0, rel=1e-15)
    f = two_point_function(6, 2, 1)
    assert float(lq_norm(f, 2)) == pytest.approx(1.0, rel=1e-15)
    assert float(lq_norm(f, 6)) == pytest.approx(2.0, rel=1e-15)


def test_zero_norm():
    sp = TabularSpace.uniform(4)
    z = sp.function(np.zeros(4))
    for q in (1, 2, 7.5):
        assert float(lq_norm(z, q)) == 0.0


def test_gamma_two_point_is_K_over_r():
    W = two_point_W()
    for xi in (0.01, 0.3, 0.99):
        assert integrability_constant(W, xi).gamma == pytest.approx(2 ** 1.5, rel=1e-15)


def test_gamma_constant_modulus():
    sp = TabularSpace.uniform(4)
    f = sp.function([1.0, -1.0, 1.0, -1.0])
    assert integrability_constant(f, 0.2).gamma == 1.0


def _pareto_gamma_oracle(a, xi):
    """Solve E X^2 1{X >= G ||X||_2} = xi E X^2 in closed form for Pareto(a, 1)."""
    m2 = a / (a - 2)
    # E X^2 1{X >= t} = a t^{2-a} / (a - 2) for t >= 1
    t = (xi * m2 * (a - 2) / a) ** (1 / (2 - a))
    return t / math.sqrt(m2)


def test_pareto_gamma_quadrature_and_lemma_bound():
    src = GenerativeSource("pareto", {"shape": 7.0})
    rep = integrability_constant(src, 0.01, p=6)
    assert rep.method == "quad"
    assert rep.gamma == pytest.approx(_pareto_gamma_oracle(7.0, 0.01), rel=1e-9)
    assert rep.gamma == pytest.approx(2.123, abs=1e-3)
    assert rep.gamma <= rep.lemma_bound


def test_gamma_undefined_for_zero():
    with pytest.raises(ValueError):
        integrability_constant(TabularSpace.uniform(2).function([0.0, 0.0]), 0.1)


def test_small_ball_examples():
    W = two_point_W()
    assert float(small_ball_probability(W, 0.5)) == pytest.approx(0.125, rel=1e-15)
    g = GenerativeSource("gaussian", {})
    assert float(small_ball_probability(g, 0.0)) == 1.0
    est = small_ball_probability(g, 1.0)
    truth = 2 * (1 - stats.norm.cdf(1.0))
    assert abs(float(est) - truth) <= 3 * est.stderr
    assert truth == pytest.approx(0.3173, abs=1e-4)


def test_generative_norms_and_divergence():
    t = GenerativeSource("student_t", {"df": 5.5})
    # closed form against numerical integration
    q = 3.0
    num = integrate.quad(lambda x: abs(x) ** q * stats.t.pdf(x, 5.5), -np.inf, np.inf)[0]
    assert float(lq_norm(t, q)) == pytest.approx(num ** (1 / q), rel=1e-8)
    with pytest.raises(NonFiniteMoment):
        lq_norm(t, 6.0)
    lin = LinearFunction(GenerativeSource("gaussian", {}, dim=2), np.array([0.6, 0.8]))
    est = lq_norm(lin, 2.0)
    assert est.method == "mc"
    assert abs(float(est) - 1.0) <= 3 * est.stderr


def test_estimate_certification():
    assert Estimate(1.0, 0.1).certify_le(1.5)
    assert not Estimate(2.0, 0.1).certify_le(1.5)
    with pytest.raises(UncertifiedError):
        Estimate(1.45, 0.1).certify_le(1.5)


tabular_functions = st.integers(2, 8).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n),
    st.lists(st.floats(-10, 10, allow_nan=False), min_size=n, max_size=n)))


def _make(pair):
    w, v = pair
    probs = np.array(w) / math.fsum(w)
    probs = probs / math.fsum(probs.tolist())
    return TabularSpace(probs).function(np.array(v))


@settings(max_examples=80, deadline=None)
@given(tabular_functions)
def test_lyapunov_monotone(pair):
    f = _make(pair)
    qs = [1, 1.5, 2, 3, 4.5, 6, 9]
    norms = [float(lq_norm(f, q)) for q in qs]
    assert all(a <= b * (1 + 1e-12) + 1e-300 for a, b in zip(norms, norms[1:]))


@settings(max_examples=80, deadline=None)
@given(tabular_functions, st.floats(0.001, 0.999), st.floats(0.001, 0.999))
def test_gamma_properties(pair, xi1, xi2):
    f = _make(pair)
    if float(lq_norm(f, 2)) < 1e-6:
        return
    lo, hi = sorted((xi1, xi2))
    r_lo = integrability_constant(f, lo, p=6)
    r_hi = integrability_constant(f, hi, p=6)
    assert r_hi.gamma <= r_lo.gamma * (1 + 1e-12)
    assert r_lo.gamma >= 1 - lo - 1e-12
    assert r_lo.gamma <= r_lo.lemma_bound * (1 + 1e-9)
    # two-sided certification of the infimum
    assert tail_fraction(f, r_lo.gamma + 1e-9) <= lo + 1e-12
    assert tail_fraction(f, r_lo.gamma - 1e-3) > lo


def test_norm_report(tmp_path):
    sp = TabularSpace.uniform(2)
    H = HypothesisClass.tabular(sp, [[0.0, 2.0], [1.0, 1.0]], ["a", "b"])
    path = tmp_path / "n.csv"
    write_norm_report(H, [2, 4], path)
    rows = path.read_text().splitlines()
    assert rows[0] == "member_id,q,norm,stderr"
    assert rows[1].startswith("a,2.0,") and float(rows[1].split(",")[2]) == pytest.approx(2 ** 0.5)

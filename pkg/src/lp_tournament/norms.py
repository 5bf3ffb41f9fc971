"""L_q norms, integrability constants and small-ball probabilities.

Everything is exact on tabular functions.  Generative functions (a
:class:`GenerativeSource` viewed as a random variable, or a
:class:`LinearFunction` of features) are handled in closed form where the
family allows it and by Monte Carlo otherwise; Monte Carlo results carry a
standard error.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .model import FunctionTable, GenerativeSource, LinearFunction
from .rng import stream


class NonFiniteMoment(ValueError):
    pass


class UncertifiedError(RuntimeError):
    """A Monte Carlo estimate is too noisy to decide an inequality."""


class Estimate(float):
    """A float carrying a standard error and the method that produced it."""

    def __new__(cls, value, stderr: float = 0.0, method: str = "exact"):
        obj = super().__new__(cls, value)
        obj.stderr = float(stderr)
        obj.method = method
        return obj

    def __repr__(self):
        if self.stderr:
            return f"Estimate({float(self)!r} +- {self.stderr:.3g}, {self.method})"
        return f"Estimate({float(self)!r}, {self.method})"

    def ci95(self) -> tuple[float, float]:
        return float(self) - 1.96 * self.stderr, float(self) + 1.96 * self.stderr

    def certify_le(self, bound: float) -> bool:
        """Decide ``value <= bound``; refuses when within two standard errors."""
        if self.stderr == 0.0:
            return float(self) <= bound
        if float(self) + 2 * self.stderr <= bound:
            return True
        if float(self) - 2 * self.stderr > bound:
            return False
        raise UncertifiedError(f"{self!r} is within 2 stderr of {bound}")


def _tail_index(f) -> float:
    if isinstance(f, GenerativeSource):
        return f.tail_index
    if isinstance(f, LinearFunction):
        return f.source.tail_index if np.any(f.weights) else math.inf
    return math.inf


def _draw(f, n: int, rng) -> np.ndarray:
    if isinstance(f, GenerativeSource):
        v = f.sample(n, rng)
        return v if v.ndim == 1 else v[:, 0]
    return f.evaluate(f.source.sample(n, rng))


def lq_norm(f, q: float, *, n_mc: int = 1 << 15, doublings: int = 3, seed: int = 0) -> Estimate:
    """``||f||_{L_q}``.

    Tabular functions are exact.  A :class:`GenerativeSource` (one coordinate)
    uses closed-form moments or quadrature.  Linear functions with a single
    active coordinate reduce to the source; others use Monte Carlo on
    ``n_mc * 2**doublings`` points, checking that the estimate has settled
    across the nested doubling prefixes.
    """
    if not (q >= 1 and math.isfinite(q)):
        raise ValueError("q must be a finite exponent >= 1")
    if isinstance(f, FunctionTable):
        return Estimate(f.space.expect(np.abs(f.values) ** q) ** (1.0 / q))
    if q >= _tail_index(f):
        raise NonFiniteMoment(f"moment of order {q} is infinite (tail index {_tail_index(f)})")
    if isinstance(f, GenerativeSource):
        method = "quad" if f.family == "gaussian" and f["mean"] != 0 else "exact"
        return Estimate(f.lp_norm(q), 0.0, method)
    if not np.any(f.weights):
        return Estimate(0.0)
    if np.count_nonzero(f.weights) == 1:
        return Estimate(np.abs(f.weights).max() * f.source.lp_norm(q))
    total = n_mc << doublings
    a = np.abs(_draw(f, total, stream(seed, "norms"))) ** q
    prev = None
    for k in range(doublings + 1):
        n = n_mc << k
        head = a[:n]
        mean, se = head.mean(), head.std() / math.sqrt(n)
        if prev is not None and mean - prev[0] > 4 * math.hypot(se, prev[1]) and k == doublings:
            raise NonFiniteMoment("Monte Carlo moment keeps growing with the sample size")
        prev = (mean, se)
    mean, se = prev
    norm = mean ** (1.0 / q)
    return Estimate(norm, norm / (q * mean) * se if mean > 0 else 0.0, "mc")


@dataclass(frozen=True)
class IntegrabilityReport:
    """``Gamma(h, xi)`` as a multiple of ``||h||_{L_2}``.

    ``lemma_bound`` is ``(||h||_p / ||h||_2)^{p/(p-2)} * xi^{-1/(p-2)}`` when
    an exponent ``p`` was supplied.
    """

    gamma: float
    xi: float
    method: str
    lemma_bound: float | None = None
    p: float | None = None


def _level_scan(probs: np.ndarray, values: np.ndarray, xi: float) -> float:
    """Exact infimum for a discrete law given by ``(probs, values)``."""
    a = np.abs(values)
    second = float(np.dot(probs, a * a))
    if second <= 0.0:
        raise ValueError("||f||_L2 = 0: the integrability constant is undefined")
    norm = math.sqrt(second)
    levels, inverse = np.unique(a / norm, return_inverse=True)
    mass = np.bincount(inverse.ravel(), weights=probs * (a / norm) ** 2, minlength=levels.size)
    # the tail {|h| >= G ||h||} for G in (L_{i+1}, L_i] holds the top levels down to L_i
    cum = np.cumsum(mass[::-1])
    i = int(np.argmax(cum > xi))
    return float(levels[::-1][i])


def tail_fraction(f: FunctionTable, gamma: float) -> float:
    """``E f^2 1{|f| >= gamma ||f||_2} / E f^2`` on a tabular space."""
    a = np.abs(f.values)
    second = f.space.expect(a * a)
    tail = a >= gamma * math.sqrt(second)
    return f.space.expect(a * a * tail) / second


def integrability_constant(f, xi: float, p: float | None = None, *, method: str | None = None,
                           n_mc: int = 1 << 18, seed: int = 0) -> IntegrabilityReport:
    """The integrability constant ``Gamma(f, xi)``.

    ``method`` defaults to ``"exact"`` (level scan) for tabular functions,
    ``"quad"`` (root of the tail integral) for continuous generative sources
    and ``"mc"`` (level scan of an empirical sample) otherwise.
    """
    if not 0.0 < xi < 1.0:
        raise ValueError("xi must lie in (0, 1)")
    if isinstance(f, FunctionTable):
        method = method or "exact"
        gamma = _level_scan(f.space.probs, f.values, xi)
    elif isinstance(f, GenerativeSource) and f.family == "two_point":
        method = "exact"
        gamma = _level_scan(np.array([1 - f["q"], f["q"]]), np.array([0.0, f["K"]]), xi)
    elif isinstance(f, GenerativeSource) and (method or "quad") == "quad":
        method = "quad"
        gamma = _quad_gamma(f, xi)
    else:
        method = "mc"
        v = _draw(f, n_mc, stream(seed, "norms", 1))
        gamma = _level_scan(np.full(v.size, 1.0 / v.size), v, xi)
    bound = None
    if p is not None:
        if p <= 2:
            raise ValueError("the L_p integrability bound needs p > 2")
        ratio = float(lq_norm(f, p)) / float(lq_norm(f, 2))
        bound = ratio ** (p / (p - 2)) * (1.0 / xi) ** (1.0 / (p - 2))
    return IntegrabilityReport(gamma, xi, method, bound, p)


def _quad_gamma(src: GenerativeSource, xi: float) -> float:
    dist = src.dist()
    second = src.second_moment()
    norm = math.sqrt(second)

    def tail(g):
        t = g * norm
        upper = integrate.quad(lambda x: x * x * dist.pdf(x), t, math.inf,
                               epsabs=0.0, epsrel=1e-12, limit=200)[0]
        lower = integrate.quad(lambda x: x * x * dist.pdf(x), -math.inf, -t,
                               epsabs=0.0, epsrel=1e-12, limit=200)[0]
        return (upper + lower) / second - xi

    lo, hi = 1e-9, 2.0
    while tail(hi) > 0:
        hi *= 2.0
    if tail(lo) <= 0:
        return 0.0
    return optimize.brentq(tail, lo, hi, xtol=1e-13, rtol=1e-13)


def small_ball_probability(f, kappa: float, *, n_mc: int = 1 << 18, seed: int = 0) -> Estimate:
    """``Pr(|f| >= kappa ||f||_{L_2})``; exact on tabular functions."""
    if isinstance(f, FunctionTable):
        a = np.abs(f.values)
        norm = math.sqrt(f.space.expect(a * a))
        if norm == 0:
            raise ValueError("||f||_L2 = 0")
        return Estimate(f.space.expect((a >= kappa * norm).astype(float)))
    v = np.abs(_draw(f, n_mc, stream(seed, "norms", 2)))
    norm = float(lq_norm(f, 2))
    if norm == 0:
        raise ValueError("||f||_L2 = 0")
    hit = (v >= kappa * norm).astype(float)
    return Estimate(hit.mean(), hit.std() / math.sqrt(v.size), "mc")


def write_norm_report(H, qs, path, header: list[str] | None = None) -> None:
    """CSV rows ``(member_id, q, norm, stderr)`` for every member and exponent."""
    with open(path, "w", newline="") as fh:
        for line in header or []:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["member_id", "q", "norm", "stderr"])
        for f in H.members():
            for q in qs:
                est = lq_norm(f, q)
                w.writerow([f.label, repr(float(q)), repr(float(est)), repr(est.stderr)])

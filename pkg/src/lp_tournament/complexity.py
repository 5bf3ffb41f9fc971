"""Localised oscillations, their fixed points and sample complexities.

For a class ``U``, a centre ``h`` and a radius ``r``, the localised set is
``U_{h,r} = star(U - h, 0) ∩ r D``.  The absolute value of a linear
functional is maximised over a segment ``[0, v]`` at ``v``, so the supremum
over ``U_{h,r}`` is a maximum over the projected points
``lambda_u (u - h)`` with ``lambda_u = min(1, r / ||u - h||)``.

Both estimators below store the raw functionals
``A[t, u] = N^{-1} sum_i eps_i w_i (u - h)(X_i)`` (``w = 1`` for the
quadratic process, ``w = xi`` for the multiplier one) and evaluate the
oscillation at any ``r`` as ``mean_t max_u lambda_u(r) |A[t, u]|``.  Reusing
the same draws for every ``r`` makes the estimated ratio ``osc(r)/r^s``
exactly nonincreasing in ``r``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .model import FunctionTable, HypothesisClass, LinearFunction, Triplet, feature_moments
from .rng import stream
from .sampler import draw_xy

KINDS = {"quadratic": 1, "multiplier": 2}


class NoiseError(RuntimeError):
    """Monte Carlo noise prevents a decision; increase trials."""


class SearchError(RuntimeError):
    pass


def _exponent(kind: str) -> int:
    try:
        return KINDS[kind]
    except KeyError:
        raise ValueError(f"kind must be one of {sorted(KINDS)}") from None


def l2_norm(f) -> float:
    """Exact ``||f||_{L_2}`` for a tabular or linear member."""
    if isinstance(f, FunctionTable):
        return math.sqrt(max(f.space.expect(f.values ** 2), 0.0))
    if isinstance(f, LinearFunction):
        S = feature_moments(f.source)[1]
        return math.sqrt(max(float(f.weights @ S @ f.weights), 0.0))
    raise TypeError(f"cannot take the norm of {type(f).__name__}")


def star_project(u, h, r: float):
    """``lambda_u (u - h)`` with ``lambda_u = min(1, r / ||u - h||_{L_2})``."""
    if r <= 0:
        raise ValueError("r must be positive")
    d = u - h
    norm = l2_norm(d)
    if norm == 0.0:
        return d * 0.0
    lam = min(1.0, r / norm)
    return d if lam == 1.0 else d * lam


def shrink_factors(norms: np.ndarray, r: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        lam = np.where(norms > 0, np.minimum(1.0, r / np.where(norms > 0, norms, 1.0)), 0.0)
    return lam


@dataclass(frozen=True)
class OscillationEstimate:
    kind: str
    value: float
    stderr: float
    trials: int
    N: int
    r: float


def _resolve(t: Triplet, U: HypothesisClass | None, h, ustar):
    U = t.hclass if U is None else U
    risks = t.exact_risks(U.table)
    if ustar is None:
        ustar = U.table[int(np.argmin(risks))]
    else:
        ustar = U._row(ustar)
    h = ustar if h is None else U._row(h)
    return U, np.asarray(h, dtype=float), np.asarray(ustar, dtype=float)


class Functionals:
    """Raw linear functionals ``A[t, u]`` with weights (probabilities)."""

    kind: str
    N: int
    norms: np.ndarray
    A: np.ndarray
    weights: np.ndarray | None  # None means equal-weight Monte Carlo trials

    def sup_values(self, r: float) -> np.ndarray:
        if self.A.shape[1] == 0:
            return np.zeros(self.A.shape[0])
        lam = shrink_factors(self.norms, r)
        return (np.abs(self.A) * lam[None, :]).max(axis=1)

    def at(self, r: float) -> OscillationEstimate:
        s = self.sup_values(r)
        if self.weights is None:
            T = s.size
            se = float(s.std(ddof=1) / math.sqrt(T)) if T > 1 else math.inf
            return OscillationEstimate(self.kind, float(s.mean()), se, T, self.N, r)
        return OscillationEstimate(self.kind, float(np.dot(self.weights, s)), 0.0, 0, self.N, r)

    def can_extend(self) -> bool:
        return False

    def extend(self) -> None:
        raise NoiseError("increase trials")


class MonteCarloFunctionals(Functionals):
    """Fresh sample and signs per trial, from ``stream(seed, "complexity", N, trial)``."""

    def __init__(self, t: Triplet, h, N: int, kind: str, trials: int = 200, *,
                 U: HypothesisClass | None = None, ustar=None, seed: int = 0,
                 max_trials: int = 1 << 14):
        _exponent(kind)
        if N < 1:
            raise ValueError("N must be >= 1")
        if trials < 2:
            raise ValueError("need at least two trials for a standard error")
        self.t, self.kind, self.N, self.seed = t, kind, N, seed
        self.max_trials = max_trials
        self.U, self.h, self.ustar = _resolve(t, U, h, ustar)
        self.diff = self.U.table - self.h[None, :]
        self.norms = self.U.l2_distances(self.h)
        self._D = self.U.with_rows(self.diff, self.U.labels)
        self._ustar = self.U.with_rows(self.ustar[None, :], ("u*",))
        self.weights = None
        self.A = np.zeros((0, len(self.U)))
        self._grow(trials)

    def _trial(self, j: int) -> np.ndarray:
        t, N = self.t, self.N
        x, y = draw_xy(t, N, stream(self.seed, "complexity", N, j, 0),
                       stream(self.seed, "complexity", N, j, 1))
        eps = 2.0 * stream(self.seed, "complexity", N, j, 2).integers(0, 2, size=N) - 1.0
        D = self._D.evaluate(x)
        w = eps
        if self.kind == "multiplier":
            w = eps * (self._ustar.evaluate(x)[0] - y)
        return D @ w / N

    def _grow(self, total: int) -> None:
        start = self.A.shape[0]
        rows = [self._trial(j) for j in range(start, total)]
        if rows:
            self.A = np.vstack([self.A, np.array(rows)])

    def can_extend(self) -> bool:
        return self.A.shape[0] < self.max_trials

    def extend(self) -> None:
        if not self.can_extend():
            raise NoiseError("increase trials")
        self._grow(min(2 * self.A.shape[0], self.max_trials))


class ExactFunctionals(Functionals):
    """Exhaustive enumeration over all atom assignments and sign patterns.

    Tabular triplets only; the number of configurations is
    ``n_atoms^N * 2^N`` and is capped by ``max_configs``.
    """

    def __init__(self, t: Triplet, h, N: int, kind: str, *, U: HypothesisClass | None = None,
                 ustar=None, max_configs: int = 1 << 22):
        _exponent(kind)
        if t.hclass.backend != "tabular":
            raise ValueError("exhaustive enumeration needs a tabular triplet")
        space = t.hclass.space
        na = space.n_atoms
        if na ** N * 2 ** N > max_configs:
            raise ValueError(f"{na}^{N} * 2^{N} configurations exceed the cap {max_configs}")
        self.kind, self.N = kind, N
        self.U, self.h, self.ustar = _resolve(t, U, h, ustar)
        diff = self.U.table - self.h[None, :]
        self.norms = self.U.l2_distances(self.h)
        w_atom = np.ones(na)
        if kind == "multiplier":
            w_atom = self.ustar - t.target.values
        atoms = np.array(list(itertools.product(range(na), repeat=N)), dtype=int).reshape(-1, N)
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=N))).reshape(-1, N)
        # G[a, i, u] = w(x_{a,i}) (u - h)(x_{a,i})
        G = w_atom[atoms][:, :, None] * diff.T[atoms]
        A = np.einsum("si,aiu->sau", signs, G) / N
        self.A = A.reshape(-1, len(self.U))
        p_atoms = np.prod(space.probs[atoms], axis=1)
        self.weights = np.broadcast_to(p_atoms[None, :] / signs.shape[0],
                                       (signs.shape[0], atoms.shape[0])).ravel()


def estimate_oscillation(t: Triplet, h, r: float, N: int, trials: int = 200,
                         kind: str = "quadratic", *, U=None, ustar=None, seed: int = 0,
                         exact: bool = False) -> OscillationEstimate:
    """``E sup_{v in U_{h,r}} |N^{-1} sum eps_i (w_i) v(X_i)|``."""
    if r <= 0:
        raise ValueError("r must be positive")
    if exact:
        return ExactFunctionals(t, h, N, kind, U=U, ustar=ustar).at(r)
    if trials < 30:
        raise ValueError("use at least 30 trials")
    return MonteCarloFunctionals(t, h, N, kind, trials, U=U, ustar=ustar, seed=seed).at(r)


def exact_oscillation(t: Triplet, h, r: float, N: int, kind: str = "quadratic", **kw) -> float:
    return ExactFunctionals(t, h, N, kind, **kw).at(r).value


def _decide(est: OscillationEstimate, target: float):
    """True for ``<=``, False for ``>``, None when within two standard errors."""
    if est.stderr == 0.0 or not math.isfinite(est.stderr):
        if est.stderr == 0.0:
            return est.value <= target
        return None
    if est.value + 2 * est.stderr <= target:
        return True
    if est.value - 2 * est.stderr > target:
        return False
    return None


def _certify(F: Functionals, r: float, target: float, want: bool, trace: list) -> bool:
    """Double trials until ``osc(r) <= target`` is settled at two standard errors."""
    while True:
        est = F.at(r)
        trace.append(est)
        d = _decide(est, target)
        if d is not None:
            return d == want
        if not F.can_extend():
            raise NoiseError(f"increase trials: undecided at r={r:.4g}, N={F.N} "
                             f"with {est.trials} trials")
        F.extend()


@dataclass
class FixedPointResult:
    kind: str
    kappa: float
    N: int
    r: float
    bracket: tuple[float, float]
    trials: int
    band: tuple[float, float] | None = None
    trace: list = field(default_factory=list)


def fixed_point(t: Triplet, h=None, kappa: float = 1.0, kind: str = "quadratic", N: int = 100, *,
                U=None, ustar=None, r_lo: float = 1e-6, r_hi: float | None = None,
                trials: int = 200, max_trials: int = 1 << 14, seed: int = 0,
                exact: bool = False, rtol: float = 1e-2, noise_rtol: float = 0.1,
                functionals: Functionals | None = None) -> FixedPointResult:
    """``inf{r > 0 : osc(r) <= kappa r^s}`` with ``s = 1`` or ``2``.

    Log-space bisection of the estimated ratio on ``[r_lo, r_hi]`` down to
    relative width ``rtol``.  With Monte Carlo estimates the ratio curve is
    monotone (common draws), so the bisection itself is exact for the
    estimate; the noise is controlled at the endpoints: ``r_hi`` and the
    band ``r (1 +- noise_rtol)`` must be decided with two standard errors of
    separation, doubling trials up to ``max_trials`` before giving up.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    s = _exponent(kind)
    if functionals is not None:
        F = functionals
    elif exact:
        F = ExactFunctionals(t, h, N, kind, U=U, ustar=ustar)
    else:
        F = MonteCarloFunctionals(t, h, N, kind, trials, U=U, ustar=ustar, seed=seed,
                                  max_trials=max_trials)
    if r_hi is None:
        r_hi = 10.0 * max(float(np.max(F.norms)), 1.0)
    if not 0 < r_lo < r_hi:
        raise ValueError("need 0 < r_lo < r_hi")
    trace: list = []
    if not _certify(F, r_hi, kappa * r_hi ** s, True, trace):
        raise SearchError(f"increase r_hi: osc({r_hi:.4g})/r^{s} exceeds kappa")

    def below(r):
        est = F.at(r)
        trace.append(est)
        return est.value <= kappa * r ** s

    if below(r_lo):
        return FixedPointResult(kind, kappa, F.N, r_lo, (r_lo, r_lo), _trials(F), None, trace)
    band = None
    while True:
        lo, hi = r_lo, r_hi
        while hi / lo - 1.0 > rtol:
            mid = math.sqrt(lo * hi)
            if below(mid):
                hi = mid
            else:
                lo = mid
        if F.weights is not None:
            break
        up, down = hi * (1 + noise_rtol), lo * (1 - noise_rtol)
        ok = min(up, r_hi)
        good = _certify(F, ok, kappa * ok ** s, True, trace)
        if down > r_lo:
            good = good and _certify(F, down, kappa * down ** s, False, trace)
        if good:
            band = (down, up)
            break
        # the estimate moved while trials grew; search again on the larger sample
        if not F.can_extend():
            raise NoiseError("increase trials: fixed point not separated from its band")
        F.extend()
    return FixedPointResult(kind, kappa, F.N, hi, (lo, hi), _trials(F), band, trace)


def _trials(F: Functionals) -> int:
    return F.A.shape[0] if F.weights is None else 0


@dataclass
class SampleComplexityResult:
    kind: str
    kappa: float
    r: float
    N: int
    at_N: OscillationEstimate
    at_half: OscillationEstimate | None
    band: tuple[int, int] | None = None
    trace: list = field(default_factory=list)


def sample_complexity(t: Triplet, r: float, kappa: float, kind: str = "quadratic", *, h=None,
                      U=None, ustar=None, N_max: int = 1 << 16, trials: int = 200,
                      max_trials: int = 1 << 12, seed: int = 0, exact: bool = False,
                      noise_rtol: float = 0.25) -> SampleComplexityResult:
    """``min{N : osc_N(r) <= kappa r^s}``: doubling, then integer bisection.

    The oscillation is nonincreasing in ``N`` (the ``N``-point average is
    the mean of its ``N`` leave-one-out averages, and a supremum of a mean is
    at most the mean of suprema), so a monotone search applies.  Search
    decisions use the estimates; with Monte Carlo the result must then be
    certified at the band ``ceil(N (1 + noise_rtol))`` (below the target)
    and ``floor(N (1 - noise_rtol))`` (above it) at two standard errors.
    """
    if kappa <= 0 or r <= 0:
        raise ValueError("kappa and r must be positive")
    s = _exponent(kind)
    target = kappa * r ** s
    cache: dict[int, Functionals] = {}
    trace: list = []

    def functionals(N):
        if N not in cache:
            if exact:
                cache[N] = ExactFunctionals(t, h, N, kind, U=U, ustar=ustar)
            else:
                cache[N] = MonteCarloFunctionals(t, h, N, kind, trials, U=U, ustar=ustar,
                                                 seed=seed, max_trials=max_trials)
        return cache[N]

    def below(N):
        est = functionals(N).at(r)
        trace.append(est)
        return est.value <= target

    N = 1
    while not below(N):
        if N >= N_max:
            est = functionals(N).at(r)
            raise SearchError(f"not reached by N_max={N_max}: osc={est.value:.4g} > {target:.4g}")
        N = min(2 * N, N_max)
    lo, hi = N // 2, N
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if below(mid):
            hi = mid
        else:
            lo = mid
    band = None
    if not exact:
        up = min(math.ceil(hi * (1 + noise_rtol)), N_max)
        down = math.floor(hi * (1 - noise_rtol))
        ok = _certify(functionals(up), r, target, True, trace)
        if down >= 1:
            ok = ok and _certify(functionals(down), r, target, False, trace)
        if not ok:
            raise NoiseError(f"increase trials: N={hi} not separated from its band")
        band = (down, up)
    at_N = functionals(hi).at(r)
    at_half = functionals(max(1, hi // 2)).at(r) if hi > 1 else None
    return SampleComplexityResult(kind, kappa, r, hi, at_N, at_half, band, trace)


# --------------------------------------------------------------------------
# the sample-size recipe


def confidence_term(p: float, M: float, eps: float, delta: float) -> float:
    return (M ** 2 / eps) ** (p / (p - 2)) * math.log(2.0 / delta)


def unrestricted_centres(t: Triplet, Fbar: HypothesisClass) -> list[tuple[int, list[int]]]:
    """Centres ``c`` and maximal subsets ``U_c`` of ``Fbar``.

    A subset containing ``f*`` has a minimiser ``c`` (lowest index among
    ties) with ``R(c) <= R(f*)``.  For a fixed centre both oscillations grow
    with the subset, so the largest subset with minimiser ``c`` dominates
    every other one.  It holds ``c`` and every member whose risk exceeds
    ``R(c)`` or ties it at a higher index.  Centres whose maximal subset
    would miss ``f*`` are skipped.
    """
    risks = t.exact_risks(Fbar.table)
    fstar_row = t.hclass.table[t.fstar]
    matches = [i for i in range(len(Fbar)) if np.array_equal(Fbar.table[i], fstar_row)]
    if not matches:
        raise ValueError("Fbar does not contain f*")
    fs = matches[0]
    out = []
    for c in range(len(Fbar)):
        members = [i for i in range(len(Fbar))
                   if i == c or risks[i] > risks[c] or (risks[i] == risks[c] and i > c)]
        if fs in members:
            out.append((c, members))
    return out


@dataclass
class N0Report:
    branch: str
    N_Q: int
    N_M: int
    confidence: float
    c0: float
    c1: float
    c2: float
    N0: float
    kappa_Q: float
    kappa_M: float
    worst_centre: str | None = None

    def rows(self) -> list[tuple[str, float]]:
        return [("N_Q", self.N_Q), ("N_M", self.N_M), ("confidence", self.confidence),
                ("N0", self.N0)]


def theorem_main_N0(t: Triplet, cfg, *, c0: float = 1.0, c1: float = 1.0, c2: float = 1.0,
                    branch: str = "convex", trials: int = 200, seed: int = 0,
                    exact: bool = False, N_max: int = 1 << 16, **kw) -> N0Report:
    """Sample-size recipe: ``c0 (2 max{N_Q, N_M} + (M^2/eps)^{p/(p-2)} log(2/delta))``.

    ``N_Q`` uses radius ``sqrt(eps)`` and ``kappa = c1 (sqrt(eps)/M)^{p/(p-2)}``;
    ``N_M`` uses ``kappa = c2``.  On the ``"unrestricted"`` branch both are
    maximised over subsets of the midpoint closure containing ``f*`` (see
    :func:`unrestricted_centres`) and the factor 2 is dropped.
    """
    from .model import midpoint_closure

    p, M, eps, delta = cfg.p, cfg.M, cfg.eps, cfg.delta
    r = math.sqrt(eps)
    kq = c1 * (r / M) ** (p / (p - 2))
    km = c2
    conf = confidence_term(p, M, eps, delta)
    opts = dict(trials=trials, seed=seed, exact=exact, N_max=N_max, **kw)
    if branch == "convex":
        nq = sample_complexity(t, r, kq, "quadratic", **opts).N
        nm = sample_complexity(t, r, km, "multiplier", **opts).N
        return N0Report(branch, nq, nm, conf, c0, c1, c2, c0 * (2 * max(nq, nm) + conf), kq, km)
    if branch != "unrestricted":
        raise ValueError("branch is 'convex' or 'unrestricted'")
    Fbar = midpoint_closure(t.hclass)
    nq = nm = 0
    worst = None
    for c, members in unrestricted_centres(t, Fbar):
        U = Fbar.subset(members)
        centre = Fbar.table[c]
        q = sample_complexity(t, r, kq, "quadratic", U=U, h=centre, ustar=centre, **opts).N
        m_ = sample_complexity(t, r, km, "multiplier", U=U, h=centre, ustar=centre, **opts).N
        if max(q, m_) > max(nq, nm):
            worst = Fbar.labels[c]
        nq, nm = max(nq, q), max(nm, m_)
    return N0Report(branch, nq, nm, conf, c0, c1, c2, c0 * (max(nq, nm) + conf), kq, km, worst)


def write_trace_csv(trace, path, header: list[str] | None = None) -> None:
    """Rows ``(kind, r, N, estimate, stderr, trials)`` from a search trace."""
    with open(path, "w", newline="") as fh:
        for line in header or []:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "r", "N", "estimate", "stderr", "trials"])
        for e in trace:
            w.writerow([e.kind, repr(e.r), e.N, repr(e.value), repr(e.stderr), e.trials])

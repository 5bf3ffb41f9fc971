"""Empirical checks of the properties the procedure relies on.

The suitability checks run on tabular triplets, where every distance and
expectation is exact and only the sample is random.  Each check returns a
:class:`PropertyReport`: the number of seeded trials, how many failed and the
resulting empirical confidence.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .blocks_mom import block_sums, lower_median
from .model import FunctionTable, GenerativeSource, HypothesisClass, Triplet
from .norms import Estimate, integrability_constant
from .rng import stream
from .sampler import BlockPartition, SignVector, draw_xy, partition

BETA_GRID = tuple(np.round(np.arange(1.25, 8.0 + 1e-9, 0.25), 10))
ALPHA_GRID = tuple(np.round(np.arange(0.05, 1.0 + 1e-9, 0.05), 10))
PARAM_COLUMNS = ("alpha", "beta", "gamma", "nu", "r", "m", "n", "ell", "k")


class CalibrationError(RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass
class PropertyReport:
    prop: str
    trials: int
    failures: int
    params: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.failures <= self.trials:
            raise ValueError("failures must lie in [0, trials]")

    @property
    def confidence(self) -> float:
        return 1.0 - self.failures / self.trials if self.trials else 1.0

    def passes(self, delta: float) -> bool:
        return self.confidence >= 1.0 - delta / 4.0


def write_reports_csv(reports, path, header: list[str] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for line in header or []:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["property", "trials", "failures", "confidence", *PARAM_COLUMNS, "extra"])
        for rep in reports:
            params = [rep.params.get(c, "") for c in PARAM_COLUMNS]
            extra = ";".join(f"{k}={_fmt(v)}" for k, v in sorted(rep.extra.items()))
            w.writerow([rep.prop, rep.trials, rep.failures, repr(rep.confidence),
                        *[_fmt(v) for v in params], extra])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


# --------------------------------------------------------------------------
# sampling helpers


def _tabular(t: Triplet):
    if t.hclass.backend != "tabular":
        raise ValueError("this check needs a tabular triplet (exact ground truth)")


def _minimiser(t: Triplet, H: HypothesisClass) -> int:
    return int(np.argmin(t.exact_risks(H.table)))


def _trial_data(t: Triplet, N: int, seed: int, trial: int, name: str = "verify"):
    x, y = draw_xy(t, N, stream(seed, name, trial, 0), stream(seed, name, trial, 1))
    eps = 2.0 * stream(seed, name, trial, 2).integers(0, 2, size=N) - 1.0
    return x, y, eps


def _setup(t, cfg, N, H):
    _tabular(t)
    H = t.hclass if H is None else H
    part = partition(N, cfg.m)
    hs = _minimiser(t, H)
    diff = H.table - H.table[hs][None, :]
    dist = H.l2_distances(hs)
    return H, part, hs, diff, dist


def _params(cfg, part: BlockPartition, **kw) -> dict:
    d = dict(alpha=cfg.alpha, beta=cfg.beta, gamma=cfg.gamma, nu=cfg.nu, r=cfg.r,
             m=part.m, n=part.n)
    d.update(kw)
    return d


# --------------------------------------------------------------------------
# the distance oracle


def club_statistics(t: Triplet, m: int, N: int, trials: int, seed: int = 0,
                    H: HypothesisClass | None = None, stream_name: str = "verify"):
    """``Psi(h, h*)`` per trial and member, and the exact distances."""
    _tabular(t)
    H = t.hclass if H is None else H
    part = partition(N, m)
    hs = _minimiser(t, H)
    diff = H.table - H.table[hs][None, :]
    psi = np.empty((trials, len(H)))
    for j in range(trials):
        x, _, eps = _trial_data(t, part.size, seed, j, stream_name)
        S = block_sums(diff[:, x], SignVector(eps), part)
        psi[j] = lower_median(np.abs(S), axis=-1)
    return psi, H.l2_distances(hs), part


def club_failures(psi: np.ndarray, dist: np.ndarray, alpha, beta, r) -> np.ndarray:
    """Per-trial failure flags for one or many ``(alpha, beta)`` pairs.

    ``alpha`` and ``beta`` broadcast against each other; the result has shape
    ``broadcast(alpha, beta).shape + (trials,)``.
    """
    a = np.asarray(alpha, dtype=float)[..., None, None]
    b = np.asarray(beta, dtype=float)[..., None, None]
    big = psi >= b * r
    sandwich = (psi / b <= dist) & (dist <= psi / a)
    close = dist <= (b / a) * r
    bad = np.where(big, ~sandwich, ~close)
    return bad.any(axis=-1)


def check_club(t: Triplet, cfg, N: int, trials: int = 500, seed: int = 0,
               H: HypothesisClass | None = None) -> PropertyReport:
    """Two-sided distance estimate by the oracle, for every member."""
    psi, dist, part = club_statistics(t, cfg.m, N, trials, seed, H)
    fails = club_failures(psi, dist, cfg.alpha, cfg.beta, cfg.r)
    return PropertyReport("club", trials, int(fails.sum()),
                          _params(cfg, part), {"members": psi.shape[1]})


def calibrate_alpha_beta(t: Triplet, cfg, N: int, trials: int = 500, seed: int = 0,
                         H: HypothesisClass | None = None, margin: float = 0.0):
    """Smallest ``beta`` and then largest ``alpha`` on the grid passing the club check.

    Draws come from the ``"calibrate"`` stream so they never coincide with the
    ``"verify"`` draws of a later check.  ``margin`` raises the required
    confidence above ``1 - delta/4``.  Returns ``(alpha, beta, table)`` where
    ``table[b, a]`` is the confidence at ``(ALPHA_GRID[a], BETA_GRID[b])``.
    """
    psi, dist, part = club_statistics(t, cfg.m, N, trials, seed, H, "calibrate")
    A = np.array(ALPHA_GRID)[None, :]
    B = np.array(BETA_GRID)[:, None]
    conf = 1.0 - club_failures(psi, dist, A, B, cfg.r).mean(axis=-1)
    need = 1.0 - cfg.delta / 4.0 + margin
    ok = conf >= need
    rows = np.flatnonzero(ok.any(axis=1))
    if rows.size == 0:
        b, a = np.unravel_index(np.argmax(conf), conf.shape)
        raise CalibrationError(
            f"no grid point reaches confidence {need:.4g}; best {conf[b, a]:.4g} at "
            f"alpha={ALPHA_GRID[a]}, beta={BETA_GRID[b]}", (ALPHA_GRID[a], BETA_GRID[b], conf[b, a]))
    b = rows[0]
    a = np.flatnonzero(ok[b])[-1]
    return float(ALPHA_GRID[a]), float(BETA_GRID[b]), conf


# --------------------------------------------------------------------------
# block comparisons


def check_diamond(t: Triplet, cfg, N: int, trials: int = 500, seed: int = 0,
                  H: HypothesisClass | None = None) -> PropertyReport:
    """Quadratic block means stay above ``(1 - nu) ||h - h*||^2``."""
    H, part, hs, diff, dist = _setup(t, cfg, N, H)
    far = dist >= cfg.r
    target = (1.0 - cfg.nu) * dist[far] ** 2
    D2 = diff[far] ** 2
    fails = strict = 0
    for j in range(trials):
        x, _, _ = _trial_data(t, part.size, seed, j)
        Q = part.reshape(D2[:, x]).mean(axis=-1)
        count = np.count_nonzero(Q >= target[:, None], axis=1)
        fails += bool(np.any(2 * count <= part.n))
        strict += bool(np.any(count < 0.99 * part.n))
    return PropertyReport("diamond", trials, fails, _params(cfg, part),
                          {"members_checked": int(far.sum()),
                           "confidence_099n": 1.0 - strict / trials})


def multiplier_means(t: Triplet, H: HypothesisClass, hs: int) -> np.ndarray:
    """Exact ``E M_{h,h*} = 2 E (h*(X) - Y)(h - h*)(X)`` for every member."""
    xi = H.table[hs] - t.target.values
    return 2.0 * ((H.table - H.table[hs][None, :]) * xi[None, :]) @ H.space.probs


def check_heart_spade(t: Triplet, cfg, N: int, trials: int = 500, seed: int = 0,
                      H: HypothesisClass | None = None) -> tuple[PropertyReport, PropertyReport]:
    """Lower (heart) and two-sided (spade) deviation of the multiplier block means."""
    H, part, hs, diff, dist = _setup(t, cfg, N, H)
    EM = multiplier_means(t, H, hs)
    xi_atoms = H.table[hs] - t.target.values
    far = dist >= cfg.r
    near = dist <= (cfg.beta / cfg.alpha) * cfg.r
    lower = -cfg.nu * dist ** 2
    fh = fs = sh = ss = 0
    for j in range(trials):
        x, _, _ = _trial_data(t, part.size, seed, j)
        prod = diff[:, x] * xi_atoms[x][None, :]
        dev = 2.0 * part.reshape(prod).mean(axis=-1) - EM[:, None]
        heart = np.count_nonzero(dev >= lower[:, None], axis=1)[far]
        spade = np.count_nonzero(np.abs(dev) <= cfg.gamma * cfg.eps, axis=1)[near]
        fh += bool(np.any(2 * heart <= part.n))
        sh += bool(np.any(heart < 0.99 * part.n))
        fs += bool(np.any(2 * spade <= part.n))
        ss += bool(np.any(spade < 0.99 * part.n))
    params = _params(cfg, part)
    return (PropertyReport("heart", trials, fh, params,
                           {"members_checked": int(far.sum()), "confidence_099n": 1 - sh / trials}),
            PropertyReport("spade", trials, fs, params,
                           {"members_checked": int(near.sum()), "confidence_099n": 1 - ss / trials}))


@dataclass
class SuitabilityReport:
    reports: list[PropertyReport]
    delta: float

    @property
    def suitable(self) -> bool:
        return all(r.passes(self.delta) for r in self.reports)


def check_suitability(t: Triplet, cfg, N: int, trials: int = 500, seed: int = 0,
                      H: HypothesisClass | None = None) -> SuitabilityReport:
    """All four properties on ``H`` (default: the triplet's class)."""
    reps = [check_club(t, cfg, N, trials, seed, H), check_diamond(t, cfg, N, trials, seed, H),
            *check_heart_spade(t, cfg, N, trials, seed, H)]
    return SuitabilityReport(reps, cfg.delta)


# --------------------------------------------------------------------------
# single random variables


def _second_moment(W) -> float:
    if isinstance(W, FunctionTable):
        return W.space.expect(W.values ** 2)
    return W.second_moment()


def _draw_values(W, shape, rng) -> np.ndarray:
    n = int(np.prod(shape))
    if isinstance(W, FunctionTable):
        atoms = rng.choice(W.space.n_atoms, size=n, p=W.space.probs)
        return W.values[atoms].reshape(shape)
    v = W.sample(n, rng)
    return (v if v.ndim == 1 else v[:, 0]).reshape(shape)


@dataclass(frozen=True)
class StableLBParams:
    nu: float
    ell: int
    k: float
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not 0 <= self.ell <= self.m:
            raise ValueError(f"ell={self.ell} must lie in [0, m={self.m}]")

    @classmethod
    def auto(cls, W, m: int, xi: float, c0: float = 1.0, c1: float = 1.0) -> "StableLBParams":
        """``nu = 3 xi``, ``ell = floor(c0 m xi / G^2)``, ``k = c1 m xi^2 / G^2``, ``G = Gamma(W, xi)``."""
        g2 = integrability_constant(W, xi).gamma ** 2
        return cls(3 * xi, int(math.floor(c0 * m * xi / g2)), c1 * m * xi ** 2 / g2, m)


def remaining_after_removal(squares: np.ndarray, ell: int) -> np.ndarray:
    """``min_{|J| <= ell} sum_{i not in J} W_i^2``: drop the ``ell`` largest squares."""
    if ell == 0:
        return squares.sum(axis=-1)
    s = np.sort(squares, axis=-1)
    return s[..., : squares.shape[-1] - ell].sum(axis=-1)


def brute_force_remaining(squares: np.ndarray, ell: int) -> float:
    """The same minimum by enumerating every ``J`` with ``|J| <= ell``."""
    m = squares.size
    best = squares.sum()
    for size in range(1, ell + 1):
        for J in itertools.combinations(range(m), size):
            keep = np.ones(m, dtype=bool)
            keep[list(J)] = False
            best = min(best, squares[keep].sum())
    return float(best)


def check_stable_lower_bound(W, params: StableLBParams, trials: int = 5000,
                             seed: int = 0) -> PropertyReport:
    """Failure rate of the perturbed lower bound against ``2 exp(-k)``."""
    rng = stream(seed, "verify", 101)
    vals = _draw_values(W, (trials, params.m), rng)
    left = remaining_after_removal(vals ** 2, params.ell) / params.m
    fails = left < (1.0 - params.nu) * _second_moment(W)
    rate = float(fails.mean())
    bound = 2.0 * math.exp(-params.k)
    se = math.sqrt(max(rate * (1 - rate), 0.0) / trials)
    return PropertyReport("stable-lb", trials, int(fails.sum()),
                          {"nu": params.nu, "m": params.m, "ell": params.ell, "k": params.k},
                          {"failure_rate": rate, "bound": bound, "stderr": se,
                           "vacuous": bound >= 1.0, "within_bound": rate <= bound + 3 * se})


def signed_block_sums(W, m: int, trials: int, rng) -> np.ndarray:
    """``m^{-1/2} sum_{i<=m} eps_i W_i`` for ``trials`` independent blocks.

    Small tabular laws are sampled exactly through multinomial atom counts
    and binomial sign splits; everything else by direct draws.
    """
    if isinstance(W, FunctionTable) and W.space.n_atoms <= 64:
        counts = rng.multinomial(m, W.space.probs, size=trials)
        plus = rng.binomial(counts, 0.5)
        return ((2 * plus - counts) @ W.values) / math.sqrt(m)
    out = np.empty(trials)
    chunk = max(1, (1 << 22) // m)
    for start in range(0, trials, chunk):
        n = min(chunk, trials - start)
        v = _draw_values(W, (n, m), rng)
        eps = 2.0 * rng.integers(0, 2, size=(n, m)) - 1.0
        out[start:start + n] = (eps * v).sum(axis=1) / math.sqrt(m)
    return out


def check_mom_small_ball(W, m: int, etas=(0.05, 0.1, 0.2, 0.5), trials: int = 100_000,
                         seed: int = 0, c3: float | None = None, xi: float = 0.01,
                         c2: float = 1.0, enforce_precondition: bool = True) -> PropertyReport:
    """Small-ball probabilities of normalised signed sums.

    With ``c3`` given, counts the ``eta`` where
    ``P(|S| <= c3 eta ||W||) + 3 se > eta``.  Otherwise reports the largest
    ``c3`` for which the inequality holds with that margin on every ``eta``.
    """
    etas = tuple(float(e) for e in etas)
    if not etas or not all(0 < e < 1 for e in etas):
        raise ValueError("etas must lie in (0, 1)")
    gamma = integrability_constant(W, xi).gamma
    eta0 = min(etas)
    if enforce_precondition and m * eta0 ** 2 < c2 * max(1.0, gamma ** 2):
        raise ValueError(f"m={m} too small: need m eta0^2 >= {c2 * max(1.0, gamma ** 2):.4g}")
    norm = math.sqrt(_second_moment(W))
    best, probs, failures = math.inf, {}, 0
    for i, eta in enumerate(etas):
        s = np.sort(np.abs(signed_block_sums(W, m, trials, stream(seed, "verify", 202, i))))
        if c3 is not None:
            q = np.searchsorted(s, c3 * eta * norm, side="right") / trials
            probs[eta] = q
            failures += q + 3 * math.sqrt(q * (1 - q) / trials) > eta
            continue
        k = np.arange(trials + 1)
        q = k / trials
        ok = q + 3 * np.sqrt(q * (1 - q) / trials) <= eta
        kmax = int(np.flatnonzero(ok)[-1])
        c_eta = math.inf if kmax >= trials else s[kmax] / (eta * norm)
        best = min(best, c_eta)
    if c3 is None:
        c3 = best * (1 - 1e-9)
        for i, eta in enumerate(etas):
            s = np.abs(signed_block_sums(W, m, trials, stream(seed, "verify", 202, i)))
            probs[eta] = float(np.mean(s <= c3 * eta * norm))
    extra = {"c3": c3, "gamma": gamma}
    extra.update({f"p_eta={e}": v for e, v in probs.items()})
    return PropertyReport("small-ball", len(etas), int(failures), {"m": m}, extra)


# --------------------------------------------------------------------------
# multiplier norm and excess risk


def multiplier_constant(p: float) -> float:
    return 2.0 ** (p / (p - 2)) + 1.0


def check_multiplier_norm(xi, h, p: float, M: float, c: float | None = None):
    """``||xi h||_2`` against ``c M^{p/(p-2)} ||h||_2^{1 - 2/(p-2)}``.

    ``xi`` and ``h`` are functions on one tabular space (build a product
    space for independent variables) or two independent generative sources.
    Returns ``(holds, ratio)`` with ``ratio = lhs / bound`` (0 when both vanish).
    """
    if p <= 4:
        raise ValueError("needs p > 4")
    c = multiplier_constant(p) if c is None else c
    if isinstance(xi, FunctionTable) and isinstance(h, FunctionTable):
        if xi.space is not h.space:
            raise ValueError("xi and h must live on the same space")
        sp = xi.space
        nx = sp.expect(np.abs(xi.values) ** p) ** (1 / p)
        nh = sp.expect(np.abs(h.values) ** p) ** (1 / p)
        lhs = math.sqrt(sp.expect((xi.values * h.values) ** 2))
        h2 = math.sqrt(sp.expect(h.values ** 2))
    elif isinstance(xi, GenerativeSource) and isinstance(h, GenerativeSource):
        nx, nh = xi.lp_norm(p), h.lp_norm(p)
        lhs = math.sqrt(xi.second_moment() * h.second_moment())
        h2 = math.sqrt(h.second_moment())
    else:
        raise TypeError("xi and h must both be tabular or both generative")
    tol = M * 1e-9
    if nx > M + tol or nh > M + tol:
        raise ValueError(f"norms ({nx:.6g}, {nh:.6g}) exceed M={M}")
    bound = c * M ** (p / (p - 2)) * h2 ** (1 - 2 / (p - 2))
    if bound == 0.0:
        return lhs == 0.0, 0.0
    return lhs <= bound, lhs / bound


def excess_risk(t: Triplet, f, method: str | None = None, size: int | None = None,
                seed: int | None = None) -> Estimate:
    """``E (f(X) - Y)^2 - E (f*(X) - Y)^2``.

    Exact on tabular triplets and on linear ones (closed-form moments).
    ``method="mc"`` uses a paired oracle sample and reports its stderr.
    """
    method = t.risk_method if method is None else method
    row = t.hclass._row(f)
    fstar = t.hclass.table[t.fstar]
    if method != "mc":
        r = t.exact_risks(np.stack([row, fstar]))
        return Estimate(r[0] - r[1])
    size = t.oracle_size if size is None else size
    seed = t.oracle_seed if seed is None else seed
    H = t.hclass.with_rows(np.stack([row, fstar]), ("f", "f*"))
    total = total2 = 0.0
    done = batch = 0
    while done < size:
        n = min(1 << 16, size - done)
        x, y = draw_xy(t, n, stream(seed, "oracle", 0, batch), stream(seed, "oracle", 1, batch))
        v = H.evaluate(x)
        d = (v[0] - y) ** 2 - (v[1] - y) ** 2
        total += d.sum()
        total2 += (d ** 2).sum()
        done += n
        batch += 1
    mean = total / size
    var = max(total2 / size - mean ** 2, 0.0)
    return Estimate(mean, math.sqrt(var / size), "mc")

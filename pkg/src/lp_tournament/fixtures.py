"""Reference triplets used by the tests, the acceptance suite and the CLI."""

from __future__ import annotations

import math

import numpy as np

from .model import (FunctionTable, GenerativeSource, HypothesisClass, TabularSpace, TargetRule,
                    Triplet)
from .rng import stream
from .tournament import TournamentConfig


def two_point_level(p: float, M: float, r: float) -> tuple[float, float]:
    """``(K, Pr(f = K))`` with ``K = M^{p/(p-2)} / r^{2/(p-2)}`` and ``Pr = r^2/K^2``."""
    if p <= 2 or M <= 0 or r <= 0:
        raise ValueError("need p > 2, M > 0 and r > 0")
    K = M ** (p / (p - 2)) / r ** (2 / (p - 2))
    q = r ** 2 / K ** 2
    if q > 1:
        raise ValueError("r exceeds M: no two-point function with these norms")
    return K, q


def two_point_function(p: float, M: float, r: float, label: str = "f") -> FunctionTable:
    """``f in {0, K}`` with ``||f||_2 = r`` and ``||f||_p = M``."""
    K, q = two_point_level(p, M, r)
    space = TabularSpace(np.array([1.0 - q, q]), ids=("0", "K"))
    return FunctionTable(space, np.array([0.0, K]), label)


def two_point_W(K: float = 2 ** 1.5, q: float = 1 / 8) -> FunctionTable:
    """Two-point variable ``Pr(W = K) = q``; unit L_2 norm for the defaults."""
    return FunctionTable(TabularSpace(np.array([1.0 - q, q]), ids=("0", "K")),
                         np.array([0.0, K]), "W")


def singleton_triplet(n_atoms: int = 3, value: float = 0.5) -> Triplet:
    sp = TabularSpace.uniform(n_atoms)
    H = HypothesisClass.tabular(sp, [np.full(n_atoms, value)], ["f0"])
    return Triplet(H, sp.function(np.linspace(-1, 1, n_atoms), "y"), name="singleton")


# ratios ||h - h*|| / r of the members of the suitability fixture
NEAR = (0.25, 0.5, 0.75)
MODERATE = (1.0, 1.25, 1.5, 1.75)
FAR = tuple(2.0 + 0.25 * i for i in range(12))


def suitability_fixture(p: float = 6.0, M: float = 2.0, eps: float = 0.16, theta1: float = 4.0,
                        n_features: int = 10_000, noise_mass: float = 0.02,
                        noise_std: float = 0.1, moderate_mass: float = 0.101, seed: int = 0,
                        **cfg_kw) -> tuple[Triplet, TournamentConfig]:
    """A 20-member tabular class of heavy-tailed two-point functions.

    The space is ``uniform(n_features) x noise`` with symmetric two-point
    noise of total mass ``noise_mass`` and standard deviation ``noise_std``,
    independent of the features.  ``Y`` is the noise, so ``h* = 0``.  The
    members are ``K 1_A`` for seeded random feature sets ``A``:

    * near members (distance ``rho < r``) with ``K = M``, the heaviest the
      ``L_p`` bound allows;
    * moderate members (``r <= rho < 2r``) with mass ``moderate_mass``;
    * far members (``2r <= rho``) with the smallest mass the ``L_p`` bound
      permits (at least ``moderate_mass``).
    """
    r = math.sqrt(eps)
    feat = TabularSpace.uniform(n_features)
    kx = noise_std / math.sqrt(noise_mass)
    noise = TabularSpace(np.array([noise_mass / 2, 1.0 - noise_mass, noise_mass / 2]))
    space = TabularSpace.product(feat, noise)
    rows, labels = [np.zeros(space.n_atoms)], ["h*"]
    for group, ratios in (("near", NEAR), ("mid", MODERATE), ("far", FAR)):
        for i, ratio in enumerate(ratios):
            rho = ratio * r
            if group == "near":
                mass = rho ** 2 / M ** 2
            elif group == "mid":
                mass = moderate_mass
            else:
                mass = max(moderate_mass, (rho / M) ** (2 * p / (p - 2)) * 1.02)
            size = max(1, int(math.ceil(mass * n_features)))
            mass = size / n_features
            K = rho / math.sqrt(mass)
            support = stream(seed, "fixture", len(rows)).choice(n_features, size, replace=False)
            vals = np.zeros(n_features)
            vals[support] = K
            rows.append(space.lift(vals, 0))
            labels.append(f"{group}{i}")
    H = HypothesisClass.tabular(space, np.array(rows), labels, p=p, M=M)
    y = space.lift(np.array([-kx, 0.0, kx]), 1)
    t = Triplet(H, space.function(y, "Y"), name="suitability")
    return t, TournamentConfig(p, M, eps, theta1=theta1, **cfg_kw)


def heavy_tail_linear_fixture(n_members: int = 30, dim: int = 3, df: float = 5.5, p: float = 5.0,
                              M: float = 1.0, m_target: int = 30, radius: float = 1.0,
                              noise_norm: float = 1.0, f0_l1: float = 0.2, seed: int = 0,
                              **cfg_kw) -> tuple[Triplet, TournamentConfig]:
    """Linear class over scaled Student-t features with Student-t noise.

    Coordinates of ``X`` and the noise are ``t(df)`` rescaled to unit and
    ``noise_norm`` ``L_p`` norm.  ``Y = <f0, X> + W``.  Members are seeded
    weight vectors with ``||w||_1 <= radius`` (so ``||<w, X>||_p <= radius``
    by Minkowski), one of them ``f0`` itself at a seeded position.  ``eps`` is set so that the
    block size is ``m_target``: ``eps = M^2 m_target^{-(p-2)/p}``.
    """
    base = GenerativeSource("student_t", {"df": df})
    scale = 1.0 / base.lp_norm(p)
    X = GenerativeSource("student_t", {"df": df, "scale": scale}, dim=dim, p=p, M=M)
    W = GenerativeSource("student_t", {"df": df, "scale": noise_norm * scale}, p=p, M=M)
    rng = stream(seed, "fixture", 7)
    f0 = rng.normal(size=dim)
    f0 *= f0_l1 / np.abs(f0).sum()
    rows = [f0]
    while len(rows) < n_members:
        w = rng.normal(size=dim)
        rows.append(w * rng.uniform(0.25, 1.0) * radius / np.abs(w).sum())
    # keep f0 away from id 0 so that the id-order pick in the last stage is not f0 by default
    pos = int(rng.integers(1, n_members))
    rows.insert(pos, rows.pop(0))
    H = HypothesisClass.linear(X, np.array(rows), p=p, M=M)
    eps = M ** 2 * m_target ** (-(p - 2) / p)
    t = Triplet(H, TargetRule(f0, W), name="heavy-tail-linear")
    return t, TournamentConfig(p, M, eps, **cfg_kw)

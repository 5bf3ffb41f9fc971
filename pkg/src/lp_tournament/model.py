"""Probability spaces, hypothesis classes and learning triplets.

Two backends are supported:

* ``tabular`` -- a finite probability space with exact expectations.  Class
  members and the target are value tables over the atoms.
* ``linear`` -- features drawn from a :class:`GenerativeSource`, members are
  weight vectors, and the target is ``f0(X) + W`` for independent noise ``W``.
  First and second moments of every supported family are known in closed
  form, so squared risks are still exact.

All objects are immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np
from scipy import integrate, special, stats

from .rng import stream


class ConstructionError(ValueError):
    """An object violates its declared invariants."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# --------------------------------------------------------------------------
# tabular backend


@dataclass(frozen=True, eq=False)
class TabularSpace:
    """Finite probability space ``(Omega, mu)``.

    ``factors`` is set for product spaces; atom ``(a, b)`` of a product of
    spaces with ``na`` and ``nb`` atoms has index ``a * nb + b``.
    """

    probs: np.ndarray
    ids: tuple[str, ...] | None = None
    factors: tuple[int, ...] | None = None

    def __post_init__(self):
        probs = _frozen(self.probs)
        if probs.ndim != 1 or probs.size == 0:
            raise ConstructionError("a tabular space needs at least one atom")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ConstructionError("atom probabilities must be finite and >= 0")
        total = math.fsum(probs.tolist())
        if abs(total - 1.0) > 1e-12:
            raise ConstructionError(f"atom probabilities sum to {total!r}, not 1")
        if self.ids is not None and len(self.ids) != probs.size:
            raise ConstructionError("ids length does not match atom count")
        object.__setattr__(self, "probs", probs)

    @property
    def n_atoms(self) -> int:
        return self.probs.size

    @classmethod
    def uniform(cls, n_atoms: int) -> "TabularSpace":
        return cls(np.full(n_atoms, 1.0 / n_atoms))

    @classmethod
    def product(cls, *spaces: "TabularSpace") -> "TabularSpace":
        probs = spaces[0].probs
        for s in spaces[1:]:
            probs = np.outer(probs, s.probs).ravel()
        # renormalise the rounding of the outer product
        probs = probs / math.fsum(probs.tolist())
        return cls(probs, factors=tuple(s.n_atoms for s in spaces))

    def lift(self, values, axis: int) -> np.ndarray:
        """Embed a function of factor ``axis`` into this product space."""
        if self.factors is None:
            raise ConstructionError("lift() needs a product space")
        values = np.asarray(values, dtype=float)
        if values.size != self.factors[axis]:
            raise ConstructionError("values do not match the factor size")
        shape = [1] * len(self.factors)
        shape[axis] = self.factors[axis]
        return np.broadcast_to(values.reshape(shape), self.factors).ravel().copy()

    def expect(self, values) -> float:
        return float(np.dot(self.probs, values))

    def function(self, values, label: str = "f") -> "FunctionTable":
        return FunctionTable(self, values, label)


@dataclass(frozen=True, eq=False)
class FunctionTable:
    """A real function on the atoms of a :class:`TabularSpace`."""

    space: TabularSpace
    values: np.ndarray
    label: str = "f"

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != (self.space.n_atoms,):
            raise ConstructionError(
                f"{self.label}: {values.size} values for {self.space.n_atoms} atoms"
            )
        if not np.all(np.isfinite(values)):
            raise ConstructionError(f"{self.label}: values must be finite")
        object.__setattr__(self, "values", values)

    def evaluate(self, x) -> np.ndarray:
        return self.values[np.asarray(x)]

    def relabel(self, label: str) -> "FunctionTable":
        return FunctionTable(self.space, self.values, label)

    def _binary(self, other, op, sym):
        if isinstance(other, FunctionTable):
            if other.space is not self.space:
                raise ConstructionError("functions live on different spaces")
            return FunctionTable(self.space, op(self.values, other.values),
                                 f"({self.label}{sym}{other.label})")
        return FunctionTable(self.space, op(self.values, float(other)),
                             f"({self.label}{sym}{other!r})")

    def __add__(self, other):
        return self._binary(other, np.add, "+")

    def __sub__(self, other):
        return self._binary(other, np.subtract, "-")

    def __mul__(self, c):
        return FunctionTable(self.space, self.values * float(c), f"{c!r}*{self.label}")

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


# --------------------------------------------------------------------------
# generative backend

FAMILIES = {
    "student_t": ("df", "scale"),
    "pareto": ("shape", "scale"),
    "gaussian": ("mean", "std"),
    "two_point": ("K", "q"),
}
_DEFAULTS = {"scale": 1.0, "mean": 0.0, "std": 1.0}


@dataclass(frozen=True, eq=False)
class GenerativeSource:
    """A named distribution family with ``dim`` i.i.d. coordinates.

    Supported families and parameters::

        student_t  df, scale      scale * T_df
        pareto     shape, scale   classical Pareto on [scale, inf)
        gaussian   mean, std
        two_point  K, q           K with probability q, else 0

    When ``p`` and ``M`` are given, the construction certifies that each
    coordinate has a finite p-th moment and ``||X_k||_{L_p} <= M``.
    """

    family: str
    params: Mapping[str, float]
    dim: int = 1
    seed: int = 0
    p: float | None = None
    M: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConstructionError(f"unknown family {self.family!r}")
        names = FAMILIES[self.family]
        params = {}
        for name in names:
            if name in self.params:
                params[name] = float(self.params[name])
            elif name in _DEFAULTS:
                params[name] = _DEFAULTS[name]
            else:
                raise ConstructionError(f"{self.family} needs parameter {name!r}")
        extra = set(self.params) - set(names)
        if extra:
            raise ConstructionError(f"unexpected parameters {sorted(extra)}")
        object.__setattr__(self, "params", params)
        if self.dim < 1:
            raise ConstructionError("dim must be >= 1")
        if self.family == "student_t" and params["df"] <= 0:
            raise ConstructionError("df must be > 0")
        if self.family == "pareto" and (params["shape"] <= 0 or params["scale"] <= 0):
            raise ConstructionError("pareto shape and scale must be > 0")
        if self.family == "two_point" and not 0.0 <= params["q"] <= 1.0:
            raise ConstructionError("two_point q must lie in [0, 1]")
        if self.p is not None:
            if self.p >= self.tail_index:
                raise ConstructionError(
                    f"{self.family}{params} has no finite moment of order {self.p}"
                )
            if self.M is not None and self.lp_norm(self.p) > self.M * (1 + 1e-12):
                raise ConstructionError(
                    f"||X||_L{self.p} = {self.lp_norm(self.p):.6g} exceeds M = {self.M}"
                )

    def __getitem__(self, name: str) -> float:
        return self.params[name]

    @property
    def tail_index(self) -> float:
        """Supremum of the orders of finite absolute moments."""
        if self.family == "student_t":
            return self["df"]
        if self.family == "pareto":
            return self["shape"]
        return math.inf

    def dist(self):
        """Frozen scipy distribution (continuous families only)."""
        if self.family == "student_t":
            return stats.t(self["df"], scale=self["scale"])
        if self.family == "pareto":
            return stats.pareto(self["shape"], scale=self["scale"])
        if self.family == "gaussian":
            return stats.norm(self["mean"], self["std"])
        raise ConstructionError("two_point has no density")

    def mean(self) -> float:
        if self.family == "student_t":
            if self["df"] <= 1:
                raise ConstructionError("student_t mean needs df > 1")
            return 0.0
        if self.family == "pareto":
            a, xm = self["shape"], self["scale"]
            if a <= 1:
                raise ConstructionError("pareto mean needs shape > 1")
            return a * xm / (a - 1)
        if self.family == "gaussian":
            return self["mean"]
        return self["K"] * self["q"]

    def second_moment(self) -> float:
        if self.family == "gaussian":
            return self["mean"] ** 2 + self["std"] ** 2
        return self.abs_moment(2.0)

    def abs_moment(self, q: float) -> float:
        """``E|X_k|^q`` for one coordinate (closed form or quadrature)."""
        if q >= self.tail_index:
            return math.inf
        if self.family == "student_t":
            df, s = self["df"], self["scale"]
            logm = (q / 2 * math.log(df) + special.gammaln((q + 1) / 2)
                    + special.gammaln((df - q) / 2)
                    - 0.5 * math.log(math.pi) - special.gammaln(df / 2))
            return s ** q * math.exp(logm)
        if self.family == "pareto":
            a, xm = self["shape"], self["scale"]
            return a * xm ** q / (a - q)
        if self.family == "two_point":
            return abs(self["K"]) ** q * self["q"]
        mu, sd = self["mean"], self["std"]
        if mu == 0.0:
            return sd ** q * 2 ** (q / 2) * math.exp(special.gammaln((q + 1) / 2)) / math.sqrt(math.pi)
        pdf = self.dist().pdf
        val = 0.0
        for lo, hi in ((-math.inf, min(mu, 0.0)), (min(mu, 0.0), max(mu, 0.0)),
                       (max(mu, 0.0), math.inf)):
            if lo < hi:
                val += integrate.quad(lambda x: abs(x) ** q * pdf(x), lo, hi,
                                      epsabs=0.0, epsrel=1e-12, limit=200)[0]
        return val

    def lp_norm(self, q: float) -> float:
        return self.abs_moment(q) ** (1.0 / q)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        shape = (n,) if self.dim == 1 else (n, self.dim)
        if self.family == "student_t":
            return self["scale"] * rng.standard_t(self["df"], size=shape)
        if self.family == "pareto":
            return self["scale"] * (1.0 + rng.pareto(self["shape"], size=shape))
        if self.family == "gaussian":
            return rng.normal(self["mean"], self["std"], size=shape)
        return np.where(rng.random(shape) < self["q"], self["K"], 0.0)

    def scaled(self, c: float) -> "GenerativeSource":
        """The law of ``c * X`` (``c > 0``)."""
        if c <= 0:
            raise ConstructionError("scale factor must be > 0")
        params = dict(self.params)
        if self.family in ("student_t", "pareto"):
            params["scale"] *= c
        elif self.family == "gaussian":
            params["mean"] *= c
            params["std"] *= c
        else:
            params["K"] *= c
        return GenerativeSource(self.family, params, self.dim, self.seed)

    def spec(self) -> str:
        inner = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{self.family}({inner}; dim={self.dim})"


@dataclass(frozen=True, eq=False)
class LinearFunction:
    """``x -> <w, x>`` over the features of ``source``."""

    source: GenerativeSource
    weights: np.ndarray
    label: str = "f"

    def __post_init__(self):
        w = _frozen(self.weights).ravel()
        if w.size != self.source.dim:
            raise ConstructionError(f"{self.label}: weight length != feature dim")
        if not np.all(np.isfinite(w)):
            raise ConstructionError(f"{self.label}: weights must be finite")
        object.__setattr__(self, "weights", w)

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return x * self.weights[0]
        return x @ self.weights

    def relabel(self, label: str) -> "LinearFunction":
        return LinearFunction(self.source, self.weights, label)


Member = Union[FunctionTable, LinearFunction]


def feature_moments(source: GenerativeSource) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and second-moment matrix ``E[X X^T]`` of i.i.d. features."""
    mu = source.mean()
    var = source.second_moment() - mu ** 2
    d = source.dim
    return np.full(d, mu), var * np.eye(d) + mu * mu * np.ones((d, d))


@dataclass(frozen=True, eq=False)
class TargetRule:
    """``Y = <f0, X> + W`` with noise ``W`` independent of ``X``."""

    f0: np.ndarray
    noise: GenerativeSource

    def __post_init__(self):
        object.__setattr__(self, "f0", _frozen(self.f0).ravel())
        if self.noise.dim != 1:
            raise ConstructionError("noise must be one-dimensional")

    def draw(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        signal = x * self.f0[0] if x.ndim == 1 else x @ self.f0
        return signal + self.noise.sample(len(x), rng)


# --------------------------------------------------------------------------
# hypothesis classes


@dataclass(frozen=True, eq=False)
class HypothesisClass:
    """A finite class of real functions with stable labels.

    ``table`` holds one row per member: atom values (tabular backend) or
    weight vectors (linear backend).  When ``p`` and ``M`` are given every
    member is certified to satisfy ``||f||_{L_p} <= M``: exactly on the
    tabular backend, through Minkowski's inequality on the linear one.
    """

    backend: str
    table: np.ndarray
    labels: tuple[str, ...]
    space: TabularSpace | None = None
    source: GenerativeSource | None = None
    midpoint_closed: bool = True
    p: float | None = None
    M: float | None = None

    def __post_init__(self):
        table = _frozen(self.table)
        if table.ndim != 2 or table.shape[0] < 1:
            raise ConstructionError("a class needs at least one member")
        if not np.all(np.isfinite(table)):
            raise ConstructionError("class values must be finite")
        labels = tuple(str(s) for s in self.labels)
        if len(labels) != table.shape[0]:
            raise ConstructionError("one label per member is required")
        if len(set(labels)) != len(labels):
            raise ConstructionError("labels must be unique")
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "labels", labels)
        if self.backend == "tabular":
            if self.space is None or table.shape[1] != self.space.n_atoms:
                raise ConstructionError("tabular class needs a matching space")
        elif self.backend == "linear":
            if self.source is None or table.shape[1] != self.source.dim:
                raise ConstructionError("linear class needs a matching feature source")
        else:
            raise ConstructionError(f"unknown backend {self.backend!r}")
        if self.p is not None and self.M is not None:
            norms = self.lp_bounds(self.p)
            bad = np.flatnonzero(norms > self.M * (1 + 1e-6))
            if bad.size:
                i = bad[0]
                raise ConstructionError(
                    f"member {labels[i]}: ||f||_L{self.p} <= {norms[i]:.6g} not within M = {self.M}"
                )

    @classmethod
    def tabular(cls, space: TabularSpace, rows, labels=None, **kw) -> "HypothesisClass":
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if labels is None:
            labels = [f"f{i}" for i in range(len(rows))]
        return cls("tabular", rows, tuple(labels), space=space, **kw)

    @classmethod
    def linear(cls, source: GenerativeSource, weights, labels=None, **kw) -> "HypothesisClass":
        weights = np.asarray(weights, dtype=float)
        if weights.ndim == 1:
            weights = weights.reshape(-1, source.dim)
        if labels is None:
            labels = [f"w{i}" for i in range(len(weights))]
        return cls("linear", weights, tuple(labels), source=source, **kw)

    def __len__(self) -> int:
        return self.table.shape[0]

    def member(self, i: int) -> Member:
        if self.backend == "tabular":
            return FunctionTable(self.space, self.table[i], self.labels[i])
        return LinearFunction(self.source, self.table[i], self.labels[i])

    def members(self) -> list[Member]:
        return [self.member(i) for i in range(len(self))]

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def evaluate(self, x) -> np.ndarray:
        """Values of every member on the points ``x``; shape ``(k, N)``."""
        if self.backend == "tabular":
            return self.table[:, np.asarray(x)]
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.table[:, :1] * x[None, :]
        return self.table @ x.T

    def subset(self, indices: Sequence[int]) -> "HypothesisClass":
        idx = list(indices)
        return HypothesisClass(self.backend, self.table[idx], tuple(self.labels[i] for i in idx),
                               self.space, self.source, self.midpoint_closed)

    def with_rows(self, rows, labels) -> "HypothesisClass":
        return HypothesisClass(self.backend, rows, tuple(labels), self.space, self.source,
                               self.midpoint_closed)

    def second_moment_matrix(self) -> np.ndarray:
        return feature_moments(self.source)[1]

    def l2_distances(self, center) -> np.ndarray:
        """Exact ``||f - center||_{L_2}`` for every member.

        ``center`` is a member index, a member, or a raw row of the table.
        """
        c = self._row(center)
        diff = self.table - c[None, :]
        if self.backend == "tabular":
            return np.sqrt(np.maximum(diff ** 2 @ self.space.probs, 0.0))
        S = self.second_moment_matrix()
        return np.sqrt(np.maximum(np.einsum("ki,ij,kj->k", diff, S, diff), 0.0))

    def lp_bounds(self, q: float) -> np.ndarray:
        """Upper bounds on ``||f||_{L_q}``; exact on the tabular backend."""
        if self.backend == "tabular":
            return (np.abs(self.table) ** q @ self.space.probs) ** (1.0 / q)
        return np.abs(self.table).sum(axis=1) * self.source.lp_norm(q)

    def _row(self, f) -> np.ndarray:
        if isinstance(f, (int, np.integer)):
            return self.table[int(f)]
        if isinstance(f, FunctionTable):
            return f.values
        if isinstance(f, LinearFunction):
            return f.weights
        return np.asarray(f, dtype=float)


def midpoint(u: Member, v: Member) -> Member:
    """Pointwise average ``(u + v) / 2`` of two members of the same class."""
    if type(u) is not type(v):
        raise ConstructionError("midpoint of members from different backends")
    if isinstance(u, FunctionTable):
        if u.space is not v.space:
            raise ConstructionError("midpoint of functions on different spaces")
        a, b = u.values, v.values
    elif isinstance(u, LinearFunction):
        if u.source is not v.source:
            raise ConstructionError("midpoint of linear functions over different features")
        a, b = u.weights, v.weights
    else:
        raise ConstructionError(f"cannot form midpoints of {type(u).__name__}")
    if np.array_equal(a, b):
        return u
    lo, hi = sorted((u.label, v.label))
    label = f"({lo}+{hi})/2"
    vals = (a + b) / 2.0
    if isinstance(u, FunctionTable):
        return FunctionTable(u.space, vals, label)
    return LinearFunction(u.source, vals, label)


def midpoint_closure(H: HypothesisClass) -> HypothesisClass:
    """``{(u + v) / 2 : u, v in H}`` deduplicated by exact value.

    Members are ordered by the index pair ``(i, j)``, ``i <= j``, in
    lexicographic order; the first pair producing a value wins.
    """
    if not H.midpoint_closed:
        raise ConstructionError("class is not flagged as midpoint-closed")
    rows, labels, seen = [], [], set()
    originals = {}
    for row, label in zip(H.table, H.labels):
        originals.setdefault(row.tobytes(), label)
    k = len(H)
    for i in range(k):
        for j in range(i, k):
            a, b = H.table[i], H.table[j]
            row = a if i == j else (a + b) / 2.0
            key = row.tobytes()
            if key in originals:
                label = originals[key]
            else:
                lo, hi = sorted((H.labels[i], H.labels[j]))
                label = f"({lo}+{hi})/2"
            if key in seen:
                continue
            seen.add(key)
            rows.append(row)
            labels.append(label)
    if len(set(labels)) != len(labels):
        labels = [f"{lab}#{n}" for n, lab in enumerate(labels)]
    return H.with_rows(np.array(rows), labels)


# --------------------------------------------------------------------------
# triplets


@dataclass(frozen=True, eq=False)
class Triplet:
    """A learning problem ``(F, X, Y)`` with its designated minimiser ``f*``.

    ``fstar`` is the lowest index minimising the squared risk, computed at
    construction with :func:`find_fstar`.
    """

    hclass: HypothesisClass
    target: FunctionTable | TargetRule
    risk_method: str = "auto"
    oracle_size: int = 10 ** 6
    oracle_seed: int = 0
    name: str = "triplet"
    fstar: int = field(init=False, default=-1)

    def __post_init__(self):
        if self.hclass.backend == "tabular":
            if not isinstance(self.target, FunctionTable) or self.target.space is not self.hclass.space:
                raise ConstructionError("tabular triplet needs a target table on the class space")
        else:
            if not isinstance(self.target, TargetRule) or self.target.f0.size != self.hclass.source.dim:
                raise ConstructionError("linear triplet needs a TargetRule over the class features")
        object.__setattr__(self, "fstar", find_fstar(self, self.risk_method))

    @property
    def input(self) -> TabularSpace | GenerativeSource:
        return self.hclass.space if self.hclass.backend == "tabular" else self.hclass.source

    def fstar_member(self) -> Member:
        return self.hclass.member(self.fstar)

    def xi_values(self, x, y) -> np.ndarray:
        """``xi_i = f*(X_i) - Y_i`` on a sample."""
        return self.hclass.evaluate(x)[self.fstar] - y

    def exact_risks(self, rows) -> np.ndarray:
        """Exact ``E(f(X) - Y)^2`` for each row of ``rows``."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if self.hclass.backend == "tabular":
            return (rows - self.target.values[None, :]) ** 2 @ self.hclass.space.probs
        mu, S = feature_moments(self.hclass.source)
        noise = self.target.noise
        d = rows - self.target.f0[None, :]
        return (np.einsum("ki,ij,kj->k", d, S, d) - 2.0 * noise.mean() * (d @ mu)
                + noise.second_moment())

    def mc_risks(self, rows, size: int | None = None, seed: int | None = None):
        """Oracle-sample estimates of the risks with standard errors."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        size = self.oracle_size if size is None else size
        seed = self.oracle_seed if seed is None else seed
        H = self.hclass.with_rows(rows, [f"r{i}" for i in range(len(rows))])
        s1 = np.zeros(len(rows))
        s2 = np.zeros(len(rows))
        chunk = 1 << 16
        done = 0
        batch = 0
        while done < size:
            n = min(chunk, size - done)
            rng_x = stream(seed, "oracle", 0, batch)
            if self.hclass.backend == "tabular":
                x = rng_x.choice(self.hclass.space.n_atoms, size=n, p=self.hclass.space.probs)
                y = self.target.values[x]
            else:
                x = self.hclass.source.sample(n, rng_x)
                y = self.target.draw(x, stream(seed, "oracle", 1, batch))
            loss = (H.evaluate(x) - y[None, :]) ** 2
            s1 += loss.sum(axis=1)
            s2 += (loss ** 2).sum(axis=1)
            done += n
            batch += 1
        mean = s1 / size
        var = np.maximum(s2 / size - mean ** 2, 0.0)
        return mean, np.sqrt(var / size)

    def risk(self, f: Member | int, method: str | None = None) -> float:
        row = self.hclass._row(f)[None, :]
        method = self.risk_method if method is None else method
        if method == "mc":
            return float(self.mc_risks(row)[0][0])
        return float(self.exact_risks(row)[0])

    def excess_risk(self, f: Member | int, method: str | None = None) -> float:
        return self.risk(f, method) - self.risk(self.fstar, method)


def find_fstar(t: Triplet, method: str = "auto") -> int:
    """Lowest index minimising the squared risk over the class.

    ``method`` is ``"exact"`` (closed form expectations), ``"mc"`` (a
    dedicated oracle sample of ``t.oracle_size`` points drawn with
    ``t.oracle_seed``), or ``"auto"`` which is exact on both backends.
    """
    if method in ("auto", "exact"):
        risks = t.exact_risks(t.hclass.table)
    elif method == "mc":
        risks = t.mc_risks(t.hclass.table)[0]
    else:
        raise ValueError(f"unknown risk method {method!r}")
    bad = np.flatnonzero(~np.isfinite(risks))
    if bad.size:
        raise ConstructionError(f"member {t.hclass.labels[bad[0]]} has non-finite risk")
    return int(np.argmin(risks))

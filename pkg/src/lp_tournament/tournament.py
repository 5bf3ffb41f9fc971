"""Block comparisons, the selection step and the two-stage procedure."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .blocks_mom import OracleTable, p1_oracle
from .model import HypothesisClass, Triplet, midpoint_closure
from .sampler import BlockPartition, Sample, SignVector, draw_sample, draw_signs, partition

RHO_MAX = 1.0 / 18.0


@dataclass(frozen=True)
class TournamentConfig:
    """Constants of the procedure.

    ``theta2``, ``theta3`` and ``theta4`` default to ``beta^2/alpha^2 + gamma``,
    ``2 nu / alpha^2`` and ``beta``.  ``m`` and ``rho`` are derived.
    """

    p: float
    M: float
    eps: float
    delta: float = 0.1
    alpha: float = 0.5
    beta: float = 2.0
    nu: float = 0.1
    gamma: float = 0.1
    theta1: float = 1.0
    theta2: float | None = None
    theta3: float | None = None
    theta4: float | None = None
    profile: str = "practical"

    def __post_init__(self):
        if not self.p > 4:
            raise ValueError("the procedure needs p > 4")
        for name in ("M", "eps", "alpha", "beta", "nu", "gamma", "theta1"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        ab = self.beta ** 2 / self.alpha ** 2
        if self.theta2 is None:
            object.__setattr__(self, "theta2", ab + self.gamma)
        if self.theta3 is None:
            object.__setattr__(self, "theta3", 2 * self.nu / self.alpha ** 2)
        if self.theta4 is None:
            object.__setattr__(self, "theta4", self.beta)
        for name in ("theta2", "theta3", "theta4"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.m < 1:
            raise ValueError(f"block size rounds to {self.m}; increase theta1")

    @classmethod
    def practical(cls, p, M, eps, **kw) -> "TournamentConfig":
        return cls(p, M, eps, **kw)

    @classmethod
    def theory(cls, p, M, eps, alpha=0.5, beta=2.0, **kw) -> "TournamentConfig":
        """``nu`` chosen so that ``rho = 1/18``, and ``gamma = nu``."""
        nu = 1.0 / (36.0 * (1.0 + beta ** 2 / alpha ** 2))
        kw.setdefault("gamma", nu)
        return cls(p, M, eps, alpha=alpha, beta=beta, nu=nu, profile="theory", **kw)

    @property
    def r(self) -> float:
        return math.sqrt(self.eps)

    @property
    def m(self) -> int:
        return int(round(self.theta1 * (self.M ** 2 / self.eps) ** (self.p / (self.p - 2))))

    @property
    def rho(self) -> float:
        return 2 * self.nu * (1 + self.beta ** 2 / self.alpha ** 2)

    @property
    def rbar(self) -> float:
        return math.sqrt(2 * (self.gamma + self.beta ** 2 / self.alpha ** 2) * self.eps)

    def n(self, N: int) -> int:
        return N // self.m

    def partition(self, N: int) -> BlockPartition:
        if self.n(N) < 1:
            raise ValueError(f"per-stage size {N} is smaller than the block size {self.m}")
        return partition(N, self.m)

    def flags(self) -> list[str]:
        out = []
        if self.rho > RHO_MAX * (1 + 1e-12):
            out.append(f"rho={self.rho:.4g} exceeds 1/18")
        if self.profile == "theory":
            out.append(f"theory profile: nu={self.nu:.4g} is tiny")
        return out

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(m=self.m, rho=self.rho, rbar=self.rbar)
        return d


class TournamentFailure(RuntimeError):
    """A selection stage returned no member."""

    def __init__(self, stage: str, audit: "StageReport"):
        super().__init__(f"stage {stage} selected no member")
        self.stage = stage
        self.audit = audit


def block_loss_diff(h, f, block: range, sample: Sample) -> float:
    """``B_{h,f}(j)``: mean squared loss of ``h`` minus that of ``f`` on a block."""
    idx = np.arange(block.start, block.stop)
    x, y = sample.x[idx], sample.y[idx]
    lh = (np.asarray(h.evaluate(x), dtype=float) - y) ** 2
    lf = (np.asarray(f.evaluate(x), dtype=float) - y) ** 2
    return float(lh.mean() - lf.mean())


def block_losses(H: HypothesisClass, sample: Sample, part: BlockPartition) -> np.ndarray:
    """``L[f, j]``: mean squared loss of each member on each block; shape ``(k, n)``."""
    x, y = sample.x[: part.size], sample.y[: part.size]
    loss = (H.evaluate(x) - y[None, :]) ** 2
    return part.reshape(loss).mean(axis=-1)


def _thresholds(psi: np.ndarray, cfg: TournamentConfig) -> np.ndarray:
    # both branches are lower bounds on B_{h,f}
    near = psi <= cfg.theta4 * cfg.r
    return np.where(near, -cfg.theta2 * cfg.eps, -cfg.theta3 * psi ** 2)


def vote_matrix(L: np.ndarray, psi: np.ndarray, cfg: TournamentConfig) -> np.ndarray:
    """``V[f, h]`` = number of blocks on which ``f`` passes against ``h``."""
    thr = _thresholds(psi, cfg)
    k = L.shape[0]
    V = np.empty((k, k), dtype=np.int64)
    for f in range(k):
        B = L - L[f][None, :]  # B_{h,f}(j) for every h
        V[f] = np.count_nonzero(B >= thr[f][:, None], axis=1)
    return V


@dataclass(frozen=True, eq=False)
class ComparisonOutcome:
    """All ordered comparisons within one class on one chunk.

    ``wins[f, h]`` records ``f`` beats ``h``.  The per-block differences are
    ``B_{h,f}(j) = block_losses[h, j] - block_losses[f, j]``.
    """

    labels: tuple[str, ...]
    votes: np.ndarray
    n: int
    block_losses: np.ndarray

    @property
    def wins(self) -> np.ndarray:
        return 2 * self.votes > self.n

    def B(self, h: int, f: int) -> np.ndarray:
        return self.block_losses[h] - self.block_losses[f]

    def selected(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.wins.all(axis=1))]


def compare(H: HypothesisClass, oracle: OracleTable, sample: Sample, part: BlockPartition,
            cfg: TournamentConfig) -> ComparisonOutcome:
    if oracle.labels != H.labels:
        raise ValueError("oracle table was computed for a different class")
    L = block_losses(H, sample, part)
    return ComparisonOutcome(H.labels, vote_matrix(L, oracle.psi, cfg), part.n, L)


def beats(f, h, oracle: OracleTable, sample: Sample, part: BlockPartition,
          cfg: TournamentConfig) -> bool:
    """``f`` beats ``h``: strictly more than half of the blocks pass the test."""
    psi = oracle[h.label, f.label]
    B = np.array([block_loss_diff(h, f, blk, sample) for blk in part.blocks()])
    thr = _thresholds(np.array(psi), cfg)
    return 2 * int(np.count_nonzero(B >= thr)) > part.n


def p2_select(H: HypothesisClass, oracle: OracleTable, sample: Sample, part: BlockPartition,
              cfg: TournamentConfig) -> list:
    """Members beating every member of ``H``, in id order; possibly empty."""
    return [H.member(i) for i in compare(H, oracle, sample, part, cfg).selected()]


@dataclass(frozen=True, eq=False)
class StageAudit:
    name: str
    oracle_chunk: tuple[int, int]
    select_chunk: tuple[int, int]
    labels: tuple[str, ...]
    oracle: OracleTable
    outcome: ComparisonOutcome

    @property
    def selected(self) -> tuple[str, ...]:
        return tuple(self.labels[i] for i in self.outcome.selected())


@dataclass(eq=False)
class StageReport:
    """Everything the procedure computed, stage by stage."""

    cfg: dict
    N: int
    m: int
    n: int
    seed: int | None
    stages: list[StageAudit] = field(default_factory=list)
    closure_labels: tuple[str, ...] = ()
    fhat: str | None = None
    flags: tuple[str, ...] = ()

    @property
    def sizes(self) -> dict:
        out = {"F": len(self.stages[0].labels) if self.stages else 0}
        if self.stages:
            out["F1"] = len(self.stages[0].selected)
        if self.closure_labels:
            out["F1bar"] = len(self.closure_labels)
        if len(self.stages) > 1:
            out["F2"] = len(self.stages[1].selected)
        return out

    def write_stages_csv(self, path, header: list[str] | None = None) -> None:
        with open(path, "w", newline="") as fh:
            for line in header or []:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["stage", "oracle_start", "oracle_stop", "select_start", "select_stop",
                        "class_size", "selected_size", "selected"])
            for s in self.stages:
                w.writerow([s.name, *s.oracle_chunk, *s.select_chunk, len(s.labels),
                            len(s.selected), ";".join(s.selected)])

    def write_votes_csv(self, path, header: list[str] | None = None) -> None:
        """Long format ``(stage, f_id, h_id, votes, n, beats, psi)``."""
        with open(path, "w", newline="") as fh:
            for line in header or []:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["stage", "f_id", "h_id", "votes", "n", "beats", "psi"])
            for s in self.stages:
                o = s.outcome
                wins = o.wins
                for i, fl in enumerate(s.labels):
                    for j, hl in enumerate(s.labels):
                        w.writerow([s.name, fl, hl, int(o.votes[i, j]), o.n, int(wins[i, j]),
                                    repr(float(s.oracle.psi[i, j]))])


def _stage(name, H, sample, signs, part, N, k_oracle, cfg) -> StageAudit:
    a, b = k_oracle * N, (k_oracle + 1) * N
    c, d = b, b + N
    oracle = p1_oracle(H, sample.slice(a, b), signs.slice(a, b), part, chunk=(a, b))
    outcome = compare(H, oracle, sample.slice(c, d), part, cfg)
    return StageAudit(name, (a, b), (c, d), H.labels, oracle, outcome)


def run_procedure(t: Triplet, N: int, cfg: TournamentConfig, seed: int = 0,
                  sample: Sample | None = None, signs: SignVector | None = None):
    """Two selection stages on four disjoint chunks of ``N`` points.

    Chunks 1 and 2 give the oracle and the comparisons on ``F``; chunks 3 and
    4 do the same on the midpoint closure of the survivors.  Returns the
    first member of the final selection together with a :class:`StageReport`.
    Raises :class:`TournamentFailure` when a stage selects nothing.
    """
    part = cfg.partition(N)
    if sample is None:
        sample = draw_sample(t, 4 * N, seed)
    if signs is None:
        signs = draw_signs(4 * N, seed)
    if len(sample) < 4 * N or len(signs) < 4 * N:
        raise ValueError("the procedure needs 4N sample points and signs")
    report = StageReport(cfg.as_dict(), N, part.m, part.n, seed, flags=tuple(cfg.flags()))
    H = t.hclass
    s1 = _stage("stage1", H, sample, signs, part, N, 0, cfg)
    report.stages.append(s1)
    idx1 = s1.outcome.selected()
    if not idx1:
        raise TournamentFailure("F1", report)
    closure = midpoint_closure(H.subset(idx1))
    report.closure_labels = closure.labels
    s2 = _stage("stage2", closure, sample, signs, part, N, 2, cfg)
    report.stages.append(s2)
    idx2 = s2.outcome.selected()
    if not idx2:
        raise TournamentFailure("F2", report)
    fhat = closure.member(idx2[0])
    report.fhat = fhat.label
    return fhat, report


def empirical_risks(H: HypothesisClass, sample: Sample) -> np.ndarray:
    return ((H.evaluate(sample.x) - sample.y[None, :]) ** 2).mean(axis=1)


def erm_baseline(t: Triplet, sample: Sample):
    """Empirical risk minimiser over the class; ties go to the lowest id."""
    if len(sample) < 1:
        raise ValueError("empty sample")
    return t.hclass.member(int(np.argmin(empirical_risks(t.hclass, sample))))

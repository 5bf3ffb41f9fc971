"""The distance oracle: signed block sums and their medians."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .sampler import BlockPartition, Sample, SignVector


def mu_j(f, h, block: range, signs: SignVector, sample: Sample) -> float:
    """``|m^{-1/2} sum_{i in block} eps_i (f - h)(X_i)|``."""
    if block.start < 0 or block.stop > len(sample) or block.stop > len(signs):
        raise ValueError("block lies outside the sample")
    idx = np.arange(block.start, block.stop)
    x = sample.x[idx]
    diff = np.asarray(f.evaluate(x), dtype=float) - np.asarray(h.evaluate(x), dtype=float)
    return abs(float(np.dot(signs.signs[idx], diff))) / math.sqrt(len(block))


def median_index(k: int) -> int:
    """0-based position of the lower median among ``k`` sorted values."""
    if k < 1:
        raise ValueError("median of an empty list")
    return (k + 1) // 2 - 1


def median(values) -> float:
    """Lower median: for an even count the smaller of the two middle values."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    return float(v[median_index(v.size)])


def lower_median(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Vectorised :func:`median` along ``axis``."""
    k = median_index(a.shape[axis])
    return np.take(np.partition(a, k, axis=axis), k, axis=axis)


def block_sums(values: np.ndarray, signs: SignVector, partition: BlockPartition) -> np.ndarray:
    """``S[f, j] = m^{-1/2} sum_{i in I_j} eps_i f(X_i)`` for rows of ``values``.

    ``mu_j(f, h) = |S[f, j] - S[h, j]|`` by linearity, which is how the whole
    pairwise table is filled without forming every difference.
    """
    if len(signs) < partition.size or values.shape[-1] < partition.size:
        raise ValueError("sample shorter than n*m")
    eps = signs.signs[: partition.size]
    prod = values[..., : partition.size] * eps
    return partition.reshape(prod).sum(axis=-1) / math.sqrt(partition.m)


@dataclass(frozen=True, eq=False)
class OracleTable:
    """Symmetric matrix of ``Psi(f, h)`` indexed by member labels."""

    labels: tuple[str, ...]
    psi: np.ndarray
    m: int
    n: int
    sign_seed: int | None = None
    sample_seed: int | None = None
    chunk: tuple[int, int] | None = None
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        psi = np.array(self.psi, dtype=float)
        k = len(self.labels)
        if psi.shape != (k, k):
            raise ValueError("psi must be a square matrix over the labels")
        if not np.all(np.isfinite(psi)) or np.any(psi < 0):
            raise ValueError("oracle values must be finite and non-negative")
        if not np.array_equal(psi, psi.T) or np.any(np.diag(psi) != 0):
            raise ValueError("oracle table must be symmetric with zero diagonal")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(self.labels)})

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, pair) -> float:
        f, h = pair
        return float(self.psi[self._index[f], self._index[h]])

    def index(self, label: str) -> int:
        return self._index[label]

    def write_csv(self, path, header: list[str] | None = None) -> None:
        with open(path, "w", newline="") as fh:
            for line in header or []:
                fh.write(f"# {line}\n")
            fh.write(f"# m = {self.m}, n = {self.n}, sign_seed = {self.sign_seed}, "
                     f"sample_seed = {self.sample_seed}, chunk = {self.chunk}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["f_id", "h_id", "psi"])
            k = len(self.labels)
            for i in range(k):
                for j in range(i, k):
                    w.writerow([self.labels[i], self.labels[j], repr(float(self.psi[i, j]))])


def _pair_table(S: np.ndarray) -> np.ndarray:
    """Lower median over blocks of ``|S[f] - S[h]|`` for every pair."""
    k = S.shape[0]
    psi = np.zeros((k, k))
    # row at a time keeps memory at O(k n) for big closures
    for i in range(k - 1):
        psi[i, i + 1:] = lower_median(np.abs(S[i + 1:] - S[i]), axis=-1)
    psi = np.triu(psi, 1)
    return psi + psi.T


def p1_oracle(H, sample: Sample, signs: SignVector, partition: BlockPartition,
              chunk: tuple[int, int] | None = None) -> OracleTable:
    """``Psi(f, h) = Med_j mu_j(f, h)`` for every pair of members of ``H``."""
    S = block_sums(H.evaluate(sample.x[: partition.size]), signs, partition)
    return OracleTable(H.labels, _pair_table(S), partition.m, partition.n,
                       signs.seed, sample.seed, chunk)


def psi_norm_oracle(h, sample: Sample, signs: SignVector, partition: BlockPartition) -> float:
    """``Psi(h, 0)``: the oracle table of the pair ``{h, 0}``."""
    x = sample.x[: partition.size]
    vals = np.asarray(h.evaluate(x), dtype=float)
    S = block_sums(np.stack([vals, np.zeros_like(vals)]), signs, partition)
    return float(_pair_table(S)[0, 1])

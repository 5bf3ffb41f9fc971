"""Seeded samples, Rademacher signs and block partitions."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .rng import stream


@dataclass(frozen=True, eq=False)
class Sample:
    """``(X_i, Y_i)_{i<N}``.  ``x`` holds atom ids (tabular) or feature rows."""

    x: np.ndarray
    y: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ValueError("x and y lengths differ")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("sample values must be finite")
        if self.x.dtype.kind == "f" and not np.all(np.isfinite(self.x)):
            raise ValueError("sample points must be finite")
        for a in (self.x, self.y):
            a.setflags(write=False)

    def __len__(self) -> int:
        return len(self.y)

    def slice(self, start: int, stop: int) -> "Sample":
        return Sample(self.x[start:stop], self.y[start:stop], self.seed)


@dataclass(frozen=True, eq=False)
class SignVector:
    signs: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if self.signs.size and not np.all(np.abs(self.signs) == 1):
            raise ValueError("signs must be +-1")
        self.signs.setflags(write=False)

    def __len__(self) -> int:
        return self.signs.size

    def slice(self, start: int, stop: int) -> "SignVector":
        return SignVector(self.signs[start:stop], self.seed)


@dataclass(frozen=True)
class BlockPartition:
    """``n`` contiguous blocks of ``m`` indices covering ``[0, n*m)``.

    Indices are 0-based; block ``j`` is ``range(j*m, (j+1)*m)``.
    """

    n: int
    m: int
    discarded: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("need at least one block of size >= 1")

    @property
    def size(self) -> int:
        return self.n * self.m

    def block(self, j: int) -> range:
        return range(j * self.m, (j + 1) * self.m)

    def blocks(self) -> list[range]:
        return [self.block(j) for j in range(self.n)]

    def reshape(self, values: np.ndarray) -> np.ndarray:
        """View the retained prefix of ``values[..., :N]`` as ``(..., n, m)``."""
        v = values[..., : self.size]
        return v.reshape(v.shape[:-1] + (self.n, self.m))


def draw_sample(t, N: int, seed: int, *keys: int) -> Sample:
    """``N`` i.i.d. draws of ``(X, Y)`` from the triplet ``t``.

    ``keys`` (a trial index, say) select an independent stream under ``seed``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    x, y = draw_xy(t, N, stream(seed, "sample", *keys), stream(seed, "noise", *keys))
    return Sample(x, y, seed)


def draw_xy(t, N: int, rng_x, rng_noise) -> tuple[np.ndarray, np.ndarray]:
    """Raw ``(x, y)`` arrays from explicit generators."""
    H = t.hclass
    if H.backend == "tabular":
        x = rng_x.choice(H.space.n_atoms, size=N, p=H.space.probs)
        y = t.target.values[x]
    else:
        x = H.source.sample(N, rng_x)
        y = t.target.draw(x, rng_noise)
    return x, np.asarray(y, dtype=float)


def draw_signs(N: int, seed: int, *keys: int) -> SignVector:
    """Independent symmetric +-1 signs, from their own seed namespace."""
    if N < 0:
        raise ValueError("N must be >= 0")
    rng = stream(seed, "signs", *keys)
    signs = 2.0 * rng.integers(0, 2, size=N) - 1.0
    return SignVector(signs, seed)


def partition(N: int, m: int) -> BlockPartition:
    """Split ``N`` points into ``floor(N/m)`` blocks; the tail is discarded."""
    if m < 1:
        raise ValueError("block size must be >= 1")
    if m > N:
        raise ValueError(f"block size {m} exceeds sample size {N}")
    n = N // m
    return BlockPartition(n, m, N - n * m)


def write_sample_csv(sample: Sample, path, header: list[str] | None = None) -> None:
    """Write ``x`` columns then ``y``; header lines start with ``#``."""
    x = sample.x
    if x.ndim == 1:
        cols = ["atom" if x.dtype.kind in "iu" else "x1"]
        xs = x[:, None]
    else:
        cols = [f"x{i + 1}" for i in range(x.shape[1])]
        xs = x
    with open(path, "w", newline="") as fh:
        for line in header or []:
            fh.write(f"# {line}\n")
        fh.write(f"# sample_seed = {sample.seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols + ["y"])
        for row, yv in zip(xs, sample.y):
            w.writerow([repr(v.item()) for v in row] + [repr(float(yv))])

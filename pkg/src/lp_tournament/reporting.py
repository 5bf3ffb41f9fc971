"""Output headers and figures.

Every CSV the CLI writes starts with ``#`` lines: the version string, the
config hash, the seed, the column schema and the config text itself.
Nothing time- or host-dependent goes in, so reruns are byte-identical.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from . import __version__

VERSION_TAG = f"lp-tournament v{__version__}"


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def header(config_text: str, seed: int, columns: list[str], extra: list[str] | None = None) -> list[str]:
    lines = [VERSION_TAG, f"config_hash = {config_hash(config_text)}", f"seed = {seed}",
             "columns = " + ",".join(columns)]
    lines += list(extra or [])
    lines.append("config:")
    lines += ["  " + ln for ln in config_text.rstrip("\n").splitlines()]
    return lines


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # metadata would otherwise embed a version banner and dates in the PNGs
    return plt


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=110, metadata={"Software": None})
    import matplotlib.pyplot as plt

    plt.close(fig)
    return path


def plot_excess_risks(tour, erm, eps: float, c3: float, path) -> Path:
    """Histogram of excess risks (in units of ``eps``) for the procedure and ERM."""
    import numpy as np

    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    tour = np.asarray(tour, dtype=float) / eps
    erm = np.asarray(erm, dtype=float) / eps
    finite = np.concatenate([tour[np.isfinite(tour)], erm])
    hi = max(float(finite.max()) if finite.size else 1.0, c3) * 1.05
    bins = np.linspace(0.0, hi if hi > 0 else 1.0, 40)
    ax.hist(tour[np.isfinite(tour)], bins=bins, alpha=0.6, label="tournament")
    ax.hist(erm, bins=bins, alpha=0.6, label="ERM")
    ax.axvline(c3, color="k", ls="--", lw=1, label=f"c3 = {c3:g}")
    ax.set_xlabel("excess risk / eps")
    ax.set_ylabel("trials")
    ax.legend()
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_phi_curve(rs, values, stderrs, kappa: float, r_star: float, ylabel: str, path) -> Path:
    import numpy as np

    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    rs, values, stderrs = map(np.asarray, (rs, values, stderrs))
    ax.plot(rs, values, marker=".", label="estimate")
    ax.fill_between(rs, values - 2 * stderrs, values + 2 * stderrs, alpha=0.25, label="+-2 se")
    ax.axhline(kappa, color="k", ls="--", lw=1, label="kappa")
    ax.axvline(r_star, color="r", ls=":", lw=1, label=f"r* = {r_star:.4g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("r")
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_confidences(reports, delta: float, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    names = [r.prop for r in reports]
    ax.bar(names, [r.confidence for r in reports])
    ax.axhline(1 - delta / 4, color="k", ls="--", lw=1, label="1 - delta/4")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("empirical confidence")
    ax.legend(loc="lower right")
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_calibration(conf, alphas, betas, chosen, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(conf, origin="lower", aspect="auto", vmin=0, vmax=1,
                   extent=(alphas[0], alphas[-1], betas[0], betas[-1]))
    fig.colorbar(im, ax=ax, label="club confidence")
    ax.plot([chosen[0]], [chosen[1]], "r*", ms=12)
    ax.set_xlabel("alpha")
    ax.set_ylabel("beta")
    fig.tight_layout()
    return _save(fig, Path(path))

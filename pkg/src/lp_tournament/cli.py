"""``lp-tournament`` command line interface.

Every subcommand reads one ``key = value`` config file (see the README for
the schema), writes CSV reports with self-describing headers into the output
directory and, unless ``--no-figures`` is given, PNG figures next to them.
Exit status: 0 on success, 1 for config errors, 2 for structured failures
(an empty selection stage, an undecidable Monte Carlo comparison, a failed
calibration).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import fixtures
from .classfile import read_triplet
from .complexity import (MonteCarloFunctionals, ExactFunctionals, NoiseError, SearchError,
                         fixed_point, sample_complexity, theorem_main_N0, write_trace_csv)
from .model import TabularSpace, ConstructionError
from .reporting import (header, plot_calibration, plot_confidences, plot_excess_risks,
                        plot_phi_curve)
from .sampler import draw_sample, draw_signs
from .tournament import TournamentConfig, TournamentFailure, erm_baseline, run_procedure
from .verify import (ALPHA_GRID, BETA_GRID, CalibrationError, PropertyReport,
                     StableLBParams, calibrate_alpha_beta, check_club, check_diamond,
                     check_heart_spade, check_mom_small_ball, check_multiplier_norm,
                     check_stable_lower_bound, excess_risk, write_reports_csv)

SCHEMA = 1

SECTIONS = {
    "experiment": {"schema", "name"},
    "triplet": None,  # fixture keyword arguments are free-form
    "procedure": {"profile", "p", "M", "eps", "delta", "alpha", "beta", "nu", "gamma",
                  "theta1", "theta2", "theta3", "theta4"},
    "run": {"trials", "N", "seed", "jobs", "c3", "audit_trials"},
    "complexity": {"mode", "kind", "kappa", "N", "r", "trials", "max_trials", "exact",
                   "r_lo", "r_hi", "N_max", "c0", "c1", "c2", "branch", "curve_points"},
    "verify": {"properties", "N", "trials", "calibrate", "margin", "W_K", "W_q", "xi",
               "stable_m", "stable_trials", "small_ball_m", "small_ball_trials", "etas",
               "small_ball_c3", "mult_p", "mult_M", "mult_r_xi", "mult_r_h", "mult_c"},
    "output": {"dir", "figures"},
}

FIXTURES = {
    "suitability": fixtures.suitability_fixture,
    "heavy_tail_linear": fixtures.heavy_tail_linear_fixture,
    "singleton": None,
    "file": None,
}


class ConfigError(ValueError):
    pass


def _number(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


@dataclass
class ExperimentConfig:
    text: str
    base: Path
    parser: configparser.ConfigParser

    def section(self, name: str) -> dict:
        if not self.parser.has_section(name):
            return {}
        return {k: v for k, v in self.parser.items(name)}

    def get(self, section: str, key: str, default=None, kind=str):
        value = self.section(section).get(key)
        if value is None:
            return default
        if kind is bool:
            return value.strip().lower() in ("1", "true", "yes", "on")
        try:
            return kind(value)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {value!r}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case sensitive (M, N)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        allowed = SECTIONS[name]
        if allowed is not None:
            bad = set(parser[name]) - allowed
            if bad:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
    schema = parser.get("experiment", "schema", fallback=str(SCHEMA))
    if schema != str(SCHEMA):
        raise ConfigError(f"config schema {schema} is not supported (expected {SCHEMA})")
    return ExperimentConfig(text, path.parent, parser)


def build_triplet(ec: ExperimentConfig):
    """The triplet and the configuration its fixture suggests (or None)."""
    sec = ec.section("triplet")
    name = sec.pop("fixture", None)
    if name not in FIXTURES:
        raise ConfigError(f"[triplet] fixture must be one of {sorted(FIXTURES)}")
    kw = {k: _number(v) for k, v in sec.items()}
    try:
        if name == "singleton":
            return fixtures.singleton_triplet(**kw), None
        if name == "file":
            path = kw.pop("path", None)
            if path is None:
                raise ConfigError("[triplet] fixture = file needs path")
            return read_triplet(ec.base / str(path)), None
        return FIXTURES[name](**kw)
    except TypeError as exc:
        raise ConfigError(f"[triplet] {exc}") from None


def build_cfg(ec: ExperimentConfig, base: TournamentConfig | None, profile: str | None):
    sec = {k: _number(v) for k, v in ec.section("procedure").items()}
    profile = profile or sec.pop("profile", None) or (base.profile if base else "practical")
    sec.pop("profile", None)
    fields = {}
    if base is not None:
        fields = {k: getattr(base, k) for k in ("p", "M", "eps", "delta", "alpha", "beta",
                                                "nu", "gamma", "theta1")}
    fields.update(sec)
    for key in ("p", "M", "eps"):
        if key not in fields:
            raise ConfigError(f"[procedure] {key} is required")
    try:
        if profile == "theory":
            fields.pop("nu", None)  # fixed by the profile
            for k in ("gamma", "theta2", "theta3", "theta4"):
                if k not in sec:
                    fields.pop(k, None)
            return TournamentConfig.theory(fields.pop("p"), fields.pop("M"), fields.pop("eps"),
                                           **fields)
        if profile != "practical":
            raise ConfigError("profile must be practical or theory")
        return TournamentConfig(**fields, profile="practical")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[procedure] {exc}") from None


def _write_csv(path: Path, head: list[str], columns: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        for line in head:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _quantile(values, q: float) -> float:
    return float(np.quantile(np.asarray(values, dtype=float), q, method="inverted_cdf"))


# --------------------------------------------------------------------------
# run


def _run_trial(args):
    t, N, cfg, seed, trial, keep = args
    sample = draw_sample(t, 4 * N, seed, trial)
    signs = draw_signs(4 * N, seed, trial)
    try:
        fhat, audit = run_procedure(t, N, cfg, seed, sample, signs)
        stage, label, ex = "", fhat.label, float(excess_risk(t, fhat))
    except TournamentFailure as exc:
        audit, stage, label, ex = exc.audit, exc.stage, "", math.inf
    g = erm_baseline(t, sample)
    sizes = audit.sizes
    row = (trial, label, sizes.get("F1", 0), sizes.get("F1bar", 0), sizes.get("F2", 0),
           stage, ex, g.label, float(excess_risk(t, g)))
    return row, (audit if keep else None)


def _map(fn, jobs, items):
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def cmd_run(ec: ExperimentConfig, args) -> int:
    t, base = build_triplet(ec)
    cfg = build_cfg(ec, base, args.profile)
    seed = args.seed if args.seed is not None else ec.get("run", "seed", 0, int)
    trials = args.trials or ec.get("run", "trials", 200, int)
    N = ec.get("run", "N", None, int)
    if N is None:
        raise ConfigError("[run] N (per-stage sample size) is required")
    jobs = args.jobs or ec.get("run", "jobs", 1, int)
    c3 = ec.get("run", "c3", 10.0, float)
    keep = ec.get("run", "audit_trials", 1, int)
    out = _outdir(ec, args)
    results = _map(_run_trial, jobs, [(t, N, cfg, seed, j, j < keep) for j in range(trials)])
    rows = [r for r, _ in results]
    derived = [f"procedure: {k} = {v!r}" for k, v in sorted(cfg.as_dict().items())]
    derived += [f"flag: {f}" for f in cfg.flags()]
    derived.append(f"n = {cfg.n(N)}")
    cols = ["trial", "fhat", "F1", "F1bar", "F2", "failure_stage", "excess_tournament",
            "erm_member", "excess_erm"]
    _write_csv(out / "run_trials.csv", header(ec.text, seed, cols, derived), cols, rows)
    tour = [r[6] for r in rows]
    erm = [r[8] for r in rows]
    failures = sum(1 for r in rows if r[5])
    within = float(np.mean([x <= c3 * cfg.eps for x in tour]))
    summary = [
        ("trials", trials), ("failures", failures), ("eps", cfg.eps), ("delta", cfg.delta),
        ("c3", c3), ("prob_within_c3_eps", within),
        ("confidence_ok", int(within >= 1 - cfg.delta)),
        ("c3_recorded", _quantile(tour, 1 - cfg.delta) / cfg.eps),
        ("tournament_q50", _quantile(tour, 0.5)), ("tournament_q90", _quantile(tour, 0.9)),
        ("tournament_q95", _quantile(tour, 0.95)),
        ("erm_q50", _quantile(erm, 0.5)), ("erm_q90", _quantile(erm, 0.9)),
        ("erm_q95", _quantile(erm, 0.95)),
    ]
    _write_csv(out / "run_summary.csv", header(ec.text, seed, ["metric", "value"], derived),
               ["metric", "value"], summary)
    for j, (_, audit) in enumerate(results[:keep]):
        if audit is None:
            continue
        stage_cols = ["stage", "oracle_start", "oracle_stop", "select_start", "select_stop",
                      "class_size", "selected_size", "selected"]
        audit.write_stages_csv(out / f"run_audit_trial{j}_stages.csv",
                               header(ec.text, seed, stage_cols, derived + [f"trial = {j}"]))
        vote_cols = ["stage", "f_id", "h_id", "votes", "n", "beats", "psi"]
        audit.write_votes_csv(out / f"run_audit_trial{j}_votes.csv",
                              header(ec.text, seed, vote_cols, derived + [f"trial = {j}"]))
    if _figures(ec, args):
        plot_excess_risks(tour, erm, cfg.eps, c3, out / "run_excess.png")
    print(f"run: {trials} trials, {failures} stage failures, "
          f"Pr[EL <= {c3:g} eps] = {within:.4f}; reports in {out}")
    if failures:
        stages = sorted({r[5] for r in rows if r[5]})
        print(f"error: selection stage {'/'.join(stages)} was empty in {failures} trials",
              file=sys.stderr)
        return 2
    return 0


# --------------------------------------------------------------------------
# fixed-point


def cmd_fixed_point(ec: ExperimentConfig, args) -> int:
    t, base = build_triplet(ec)
    cfg = build_cfg(ec, base, args.profile) if ec.section("procedure") or base else None
    seed = args.seed if args.seed is not None else ec.get("run", "seed", 0, int)
    g = lambda k, d, kind=str: ec.get("complexity", k, d, kind)  # noqa: E731
    mode = g("mode", "fixed_point")
    kinds = ["quadratic", "multiplier"] if g("kind", "both") == "both" else [g("kind", "quadratic")]
    trials = args.trials or g("trials", 200, int)
    exact = g("exact", False, bool)
    max_trials = g("max_trials", 1 << 14, int)
    out = _outdir(ec, args)
    rows, traces = [], []
    if mode == "fixed_point":
        N = g("N", 100, int)
        kappa = g("kappa", 1.0, float)
        r_lo, r_hi = g("r_lo", 1e-6, float), g("r_hi", None, float)
        for kind in kinds:
            if exact:
                F = ExactFunctionals(t, None, N, kind)
            else:
                F = MonteCarloFunctionals(t, None, N, kind, trials, seed=seed, max_trials=max_trials)
            res = fixed_point(t, None, kappa, kind, N, r_lo=r_lo, r_hi=r_hi,
                              functionals=F)
            band = res.band or ("", "")
            rows.append((kind, "r", res.r, res.bracket[0], res.bracket[1], band[0], band[1],
                         res.trials, kappa, N))
            traces += res.trace
            s = 1 if kind == "quadratic" else 2
            rs = np.geomspace(max(res.r / 20, r_lo), max(res.r, 1.0) * 20,
                             g("curve_points", 41, int))
            ests = [F.at(float(r)) for r in rs]
            curve = [(kind, float(r), e.value / r ** s, e.stderr / r ** s, e.trials)
                     for r, e in zip(rs, ests)]
            cols = ["kind", "r", "phi", "stderr", "trials"]
            _write_csv(out / f"phi_curve_{kind}.csv", header(ec.text, seed, cols), cols, curve)
            if _figures(ec, args):
                plot_phi_curve(rs, [c[2] for c in curve], [c[3] for c in curve], kappa, res.r,
                               f"osc(r) / r^{s}", out / f"phi_curve_{kind}.png")
        cols = ["kind", "quantity", "value", "bracket_lo", "bracket_hi", "band_lo", "band_hi",
                "trials", "kappa", "N"]
    elif mode == "sample_complexity":
        r = g("r", None, float)
        if r is None:
            raise ConfigError("[complexity] r is required for sample_complexity")
        kappa = g("kappa", 1.0, float)
        for kind in kinds:
            res = sample_complexity(t, r, kappa, kind, trials=trials, seed=seed, exact=exact,
                                    N_max=g("N_max", 1 << 16, int), max_trials=max_trials)
            band = res.band or ("", "")
            half = res.at_half.value if res.at_half else ""
            rows.append((kind, "N", res.N, res.at_N.value, half, band[0], band[1],
                         res.at_N.trials, kappa, r))
            traces += res.trace
        cols = ["kind", "quantity", "value", "osc_at_N", "osc_at_half", "band_lo", "band_hi",
                "trials", "kappa", "r"]
    elif mode == "N0":
        if cfg is None:
            raise ConfigError("mode = N0 needs a [procedure] section")
        rep = theorem_main_N0(t, cfg, c0=g("c0", 1.0, float), c1=g("c1", 1.0, float),
                              c2=g("c2", 1.0, float), branch=g("branch", "convex"),
                              trials=trials, seed=seed, exact=exact,
                              N_max=g("N_max", 1 << 16, int), max_trials=max_trials)
        rows = [(rep.branch, name, value) for name, value in rep.rows()]
        rows += [(rep.branch, "kappa_Q", rep.kappa_Q), (rep.branch, "kappa_M", rep.kappa_M)]
        cols = ["branch", "quantity", "value"]
    else:
        raise ConfigError("[complexity] mode must be fixed_point, sample_complexity or N0")
    _write_csv(out / "fixed_point.csv", header(ec.text, seed, cols), cols, rows)
    if traces:
        tcols = ["kind", "r", "N", "estimate", "stderr", "trials"]
        write_trace_csv(traces, out / "fixed_point_trace.csv", header(ec.text, seed, tcols))
    for row in rows:
        print("fixed-point:", ", ".join(str(v) for v in row[:3]))
    return 0


# --------------------------------------------------------------------------
# verify and calibrate


def _verify_cfg(ec, args):
    t, base = build_triplet(ec)
    cfg = build_cfg(ec, base, args.profile)
    seed = args.seed if args.seed is not None else ec.get("run", "seed", 0, int)
    return t, cfg, seed


def _calibrated(t, cfg, N, trials, seed, margin):
    alpha, beta, conf = calibrate_alpha_beta(t, cfg, N, trials, seed, margin=margin)
    return replace(cfg, alpha=alpha, beta=beta, theta2=None, theta3=None, theta4=None), conf


def cmd_verify(ec: ExperimentConfig, args) -> int:
    t, cfg, seed = _verify_cfg(ec, args)
    g = lambda k, d, kind=str: ec.get("verify", k, d, kind)  # noqa: E731
    props = [p.strip() for p in g("properties", "club,diamond,heart,spade").split(",") if p.strip()]
    trials = args.trials or g("trials", 500, int)
    out = _outdir(ec, args)
    reports: list[PropertyReport] = []
    suitability = {"club", "diamond", "heart", "spade"}
    if suitability & set(props):
        N = g("N", None, int)
        if N is None:
            raise ConfigError("[verify] N is required for the suitability checks")
        if g("calibrate", False, bool):
            cfg, _ = _calibrated(t, cfg, N, trials, seed, g("margin", 0.0, float))
        if "club" in props:
            reports.append(check_club(t, cfg, N, trials, seed))
        if "diamond" in props:
            reports.append(check_diamond(t, cfg, N, trials, seed))
        if "heart" in props or "spade" in props:
            heart, spade = check_heart_spade(t, cfg, N, trials, seed)
            reports += [r for r in (heart, spade) if r.prop in props]
    W = fixtures.two_point_W(g("W_K", 2 ** 1.5, float), g("W_q", 1 / 8, float))
    if "stable-lb" in props:
        params = StableLBParams.auto(W, g("stable_m", 64, int), g("xi", 0.03, float))
        reports.append(check_stable_lower_bound(W, params, g("stable_trials", 5000, int), seed))
    if "small-ball" in props:
        etas = tuple(float(e) for e in g("etas", "0.05,0.1,0.2,0.5").split(","))
        reports.append(check_mom_small_ball(W, g("small_ball_m", 3200, int), etas,
                                            g("small_ball_trials", 100_000, int), seed,
                                            c3=g("small_ball_c3", None, float)))
    if "multiplier-norm" in props:
        p, M = g("mult_p", 6.0, float), g("mult_M", 2.0, float)
        a = fixtures.two_point_function(p, M, g("mult_r_xi", 1.0, float), "xi")
        b = fixtures.two_point_function(p, M, g("mult_r_h", 0.5, float), "h")
        space = TabularSpace.product(a.space, b.space)
        xi = space.function(space.lift(a.values, 0), "xi")
        h = space.function(space.lift(b.values, 1), "h")
        ok, ratio = check_multiplier_norm(xi, h, p, M, g("mult_c", None, float))
        reports.append(PropertyReport("multiplier-norm", 1, 0 if ok else 1, {},
                                      {"ratio": ratio}))
    unknown = set(props) - suitability - {"stable-lb", "small-ball", "multiplier-norm"}
    if unknown:
        raise ConfigError(f"[verify] unknown properties {sorted(unknown)}")
    cols = ["property", "trials", "failures", "confidence", "alpha", "beta", "gamma", "nu", "r",
            "m", "n", "ell", "k", "extra"]
    write_reports_csv(reports, out / "verify_reports.csv", header(ec.text, seed, cols))
    if _figures(ec, args) and reports:
        plot_confidences(reports, cfg.delta, out / "verify_confidence.png")
    for r in reports:
        print(f"verify: {r.prop} confidence {r.confidence:.4f} ({r.failures}/{r.trials} failed)")
    return 0


def cmd_calibrate(ec: ExperimentConfig, args) -> int:
    t, cfg, seed = _verify_cfg(ec, args)
    N = ec.get("verify", "N", None, int)
    if N is None:
        raise ConfigError("[verify] N is required for calibration")
    trials = args.trials or ec.get("verify", "trials", 500, int)
    out = _outdir(ec, args)
    new, conf = _calibrated(t, cfg, N, trials, seed, ec.get("verify", "margin", 0.0, float))
    cols = ["alpha", "beta", "confidence"]
    rows = [(a, b, conf[i, j]) for i, b in enumerate(BETA_GRID) for j, a in enumerate(ALPHA_GRID)]
    _write_csv(out / "calibrate_grid.csv", header(ec.text, seed, cols), cols, rows)
    rcols = ["alpha", "beta", "theta2", "theta3", "theta4", "rho"]
    _write_csv(out / "calibrate_result.csv", header(ec.text, seed, rcols), rcols,
               [(new.alpha, new.beta, new.theta2, new.theta3, new.theta4, new.rho)])
    if _figures(ec, args):
        plot_calibration(conf, ALPHA_GRID, BETA_GRID, (new.alpha, new.beta),
                         out / "calibrate_grid.png")
    print(f"calibrate: alpha = {new.alpha}, beta = {new.beta}")
    return 0


# --------------------------------------------------------------------------


def _outdir(ec: ExperimentConfig, args) -> Path:
    out = Path(args.out) if args.out else ec.base / ec.get("output", "dir", "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _figures(ec: ExperimentConfig, args) -> bool:
    return not args.no_figures and ec.get("output", "figures", True, bool)


COMMANDS = {"run": cmd_run, "fixed-point": cmd_fixed_point, "verify": cmd_verify,
            "calibrate": cmd_calibrate}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lp-tournament", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="experiment config file")
        sp.add_argument("--seed", type=int, help="override [run] seed")
        sp.add_argument("--out", help="output directory (default: [output] dir)")
        sp.add_argument("--trials", type=int, help="override the trial count")
        sp.add_argument("--jobs", type=int, help="worker processes for trials")
        sp.add_argument("--profile", choices=("practical", "theory"))
        sp.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ec = load_config(args.config)
        return COMMANDS[args.command](ec, args)
    except (ConfigError, ConstructionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NoiseError, SearchError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

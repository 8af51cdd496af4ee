"""Experiment runner: JSON config in, CSV tables plus a JSON summary out.

Every run is reproducible from its config: the seed is mandatory (no
wall-clock default), worker parallelism never changes results, and outputs
are byte-stable (17-significant-digit decimals, LF endings, sorted JSON
keys).  The summary echoes the config and its SHA-256 so artifacts are
self-describing.

Exit codes: 0 success, 2 config error, 3 system validation failure
(e.g. infinite horizon), 4 runtime horizon guard.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, dyadic, spectral, stats
from .billiard import ScattererConfig, finite_horizon_check, validate_config
from .errors import ConfigError, GeometryError, HorizonGuardError
from .lattice import lattice_index

EXPERIMENTS = ("simulate", "lclt", "recurrence", "spectral", "arithmetic",
               "ssrw", "joint")

_TOP_KEYS = {
    "simulate": {"experiment", "seed", "system", "n", "ensemble"},
    "lclt": {"experiment", "seed", "system", "n", "ensemble", "lags",
             "stream_length", "burn_in"},
    "recurrence": {"experiment", "seed", "system", "n", "ensemble"},
    "spectral": {"experiment", "seed", "system", "t_max"},
    "arithmetic": {"experiment", "seed", "system", "resolution"},
    "ssrw": {"experiment", "seed", "system", "n"},
    "joint": {"experiment", "seed", "system", "m", "n", "ensemble"},
}

_SYSTEM_KEYS = {
    "billiard": {"type", "disks", "tau_max_hint"},
    "dyadic": {"type", "values"},
    "ssrw": {"type", "d"},
}


def _fmt(x) -> str:
    """Decimal with 17 significant digits for reals, exact text for ints."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_csv(path: Path, columns, rows):
    lines = ["# columns: " + ", ".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _check_keys(mapping, allowed, where):
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


def _parse_system(raw):
    _require(isinstance(raw, dict), "system must be an object")
    kind = raw.get("type")
    _require(kind in _SYSTEM_KEYS, f"unknown system type {kind!r}")
    _check_keys(raw, _SYSTEM_KEYS[kind], "system")
    if kind == "billiard":
        disks = raw.get("disks")
        _require(isinstance(disks, list) and disks, "billiard needs disks")
        for d in disks:
            _require(isinstance(d, list) and len(d) == 3,
                     "each disk is [cx, cy, r]")
        return ScattererConfig(disks=tuple(tuple(float(v) for v in d) for d in disks),
                               tau_max_hint=float(raw.get("tau_max_hint", 5.0)))
    if kind == "dyadic":
        values = raw.get("values")
        _require(isinstance(values, list) and values, "dyadic needs values")
        return dyadic.DyadicSystem(values=tuple(int(v) for v in values))
    d = int(raw.get("d", 2))
    _require(d in (1, 2), "ssrw dimension must be 1 or 2")
    return ("ssrw", d)


def _n_list(cfg):
    ns = cfg.get("n")
    _require(isinstance(ns, list) and ns, "key 'n' must be a non-empty list")
    out = []
    for n in ns:
        _require(isinstance(n, int) and n > 0, f"n value {n!r} must be a positive integer")
        out.append(n)
    return sorted(out)


def _ensemble(cfg, default=None):
    e = cfg.get("ensemble", default)
    _require(isinstance(e, int) and e > 0, "key 'ensemble' must be a positive integer")
    return e


# ---------------------------------------------------------------------------
# experiment bodies: each returns (columns, rows, results_dict)

def _run_ssrw(cfg, system, seed):
    _require(isinstance(system, tuple) and system[0] == "ssrw",
             "ssrw experiment needs an ssrw system")
    d = system[1]
    rows, table = [], []
    for n in _n_list(cfg):
        p = float(stats.ssrw_exact(n, d))
        table.append((n, p))
        rows.append({"n": n, "p_return": p})
    return ("n", "p_return"), table, {"mode": "exact", "d": d,
                                      "return_probabilities": rows}


def _guard_check(guards):
    if guards:
        raise HorizonGuardError(
            f"horizon guard fired on {guards} trajectories; "
            f"raise tau_max_hint or fix the configuration")


def _run_simulate(cfg, system, seed):
    _require(isinstance(system, ScattererConfig),
             "simulate experiment needs a billiard system")
    ns = _n_list(cfg)
    ensemble = _ensemble(cfg)
    sums, guards = stats.billiard_checkpoint_sums(system, seed, ensemble, ns)
    _guard_check(guards)
    table = []
    per_n = []
    for ci, n in enumerate(ns):
        s = sums[:, ci, :] / math.sqrt(n)
        mean = sums[:, ci, :].mean(axis=0)
        cov = np.cov(s, rowvar=False)
        table.append((n, mean[0], mean[1], cov[0, 0], cov[0, 1], cov[1, 1],
                      ensemble))
        per_n.append({"n": n, "mean": [float(mean[0]), float(mean[1])],
                      "cov_scaled": [[cov[0, 0], cov[0, 1]],
                                     [cov[1, 0], cov[1, 1]]]})
    results = {"ensemble": ensemble, "guards": int(guards), "checkpoints": per_n}
    return ("n", "mean_x", "mean_y", "cov_xx", "cov_xy", "cov_yy",
            "samples"), table, results


def _run_lclt(cfg, system, seed):
    ns = _n_list(cfg)
    if isinstance(system, ScattererConfig):
        ensemble = _ensemble(cfg)
        lags = int(cfg.get("lags", 40))
        stream_length = int(cfg.get("stream_length", 2_000_000))
        burn_in = int(cfg.get("burn_in", 1000))
        stream = stats.billiard_kappa_stream(system, seed + 1, stream_length,
                                             burn_in=burn_in)
        gk = stats.green_kubo_covariance(stream, lags)
        counts, guards = stats.billiard_zero_counts(system, seed, ensemble, ns)
        _guard_check(guards)
        table = []
        for n, count in zip(ns, counts):
            stat, ci = stats.lclt_normalized_statistic(n, int(count), ensemble,
                                                       gk, covol=1.0, d=2)
            table.append((n, int(count), count / ensemble, stat, ci[0], ci[1]))
        results = {
            "mode": "monte_carlo", "ensemble": ensemble, "guards": int(guards),
            "sigma": gk.sigma.tolist(), "sigma_stderr": gk.stderr.tolist(),
            "lags": lags,
            "statistics": [{"n": r[0], "count_zero": r[1], "p_hat": r[2],
                            "statistic": r[3], "ci": [r[4], r[5]]} for r in table],
        }
        return ("n", "count_zero", "p_hat", "statistic", "ci_lo",
                "ci_hi"), table, results
    if isinstance(system, dyadic.DyadicSystem):
        sigma2 = float(dyadic.green_kubo_sigma2(system))
        lat = system.support_lattice()
        covol = float(lattice_index(lat))
        a = float(system.mean)
        table = []
        for n in ns:
            target = n * a
            target_res = lat.reduce(tuple(n * t for t in lat.translation))
            near = [k for k in range(int(math.floor(target)) - 3,
                                     int(math.ceil(target)) + 4)
                    if lat.reduce((k,)) == target_res]
            k = (min(near, key=lambda v: abs(v - target)) if near
                 else int(round(target)))
            p = spectral.lclt_inversion(system, n, k)
            stat = math.sqrt(n) * p * math.sqrt(2.0 * math.pi * sigma2) / covol
            table.append((n, k, p, stat))
        results = {"mode": "exact", "sigma2": sigma2, "covol": covol,
                   "statistics": [{"n": r[0], "k": r[1], "p": r[2],
                                   "statistic": r[3]} for r in table]}
        return ("n", "k", "p", "statistic"), table, results
    d = system[1]
    table = []
    for n in ns:
        p = float(stats.ssrw_exact(n, d))
        covol = float(lattice_index(stats.ssrw_step_lattice(d)))
        det = (1.0 / d) ** d
        stat = (n ** (d / 2.0) * p * (2.0 * math.pi) ** (d / 2.0)
                * math.sqrt(det) / covol)
        table.append((n, p, stat))
    results = {"mode": "exact", "d": d,
               "statistics": [{"n": r[0], "p": r[1], "statistic": r[2]}
                              for r in table]}
    return ("n", "p_return", "statistic"), table, results


def _run_recurrence(cfg, system, seed):
    ns = _n_list(cfg)
    n_max = ns[-1]
    if isinstance(system, tuple):  # exact walk
        d = system[1]
        curve = stats.ssrw_return_curve(n_max, d)
        table = [(n, curve[n]) for n in ns]
        slope, r2 = stats.log_fit(ns, [curve[n] for n in ns])
        results = {"mode": "exact", "d": d, "slope": slope, "r2": r2,
                   "slope_target": 1.0 / math.pi,
                   "lamperti_ratio": stats.ssrw_lamperti_ratio_exact(n_max, d=d)}
        return ("n", "sum_pa"), table, results
    _require(isinstance(system, ScattererConfig),
             "recurrence needs a billiard or ssrw system")
    ensemble = _ensemble(cfg)
    rec = stats.billiard_return_stats(system, seed, ensemble, n_max)
    _guard_check(rec.guards)
    table = [(n, rec.sum_pa(n), rec.returned_fraction(n)) for n in ns]
    slope, r2 = stats.log_fit(ns, [rec.sum_pa(n) for n in ns])
    results = {"mode": "monte_carlo", "ensemble": ensemble,
               "guards": int(rec.guards), "slope": slope, "r2": r2,
               "lamperti_ratio": rec.lamperti_ratio(),
               "returned_fraction": rec.returned_fraction()}
    return ("n", "sum_pa", "returned_fraction"), table, results


def _run_spectral(cfg, system, seed):
    _require(isinstance(system, dyadic.DyadicSystem),
             "spectral experiment needs a dyadic system")
    t_max = float(cfg.get("t_max", 0.05))
    _require(0 < t_max <= 0.1, "t_max must lie in (0, 0.1]")
    fit = spectral.nagaev_fit(system, [s * t_max for s in
                                       (-1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0)])
    ts = np.linspace(-t_max, t_max, 41)
    lams = spectral.eigenvalue_curve(system, ts)
    gaps = [spectral.leading_eig(spectral.twisted_matrix(system, t)).gap
            for t in ts]
    table = [(t, l.real, l.imag, abs(l), g) for t, l, g in zip(ts, lams, gaps)]
    results = {"a": fit.a, "sigma2": fit.sigma2, "residual": fit.residual,
               "degenerate": fit.degenerate,
               "sigma2_exact": float(dyadic.green_kubo_sigma2(system)),
               "mean_exact": float(system.mean)}
    return ("t", "re_lambda", "im_lambda", "abs_lambda", "gap"), table, results


def _run_arithmetic(cfg, system, seed):
    _require(isinstance(system, dyadic.DyadicSystem),
             "arithmetic experiment needs a dyadic system")
    resolution = int(cfg.get("resolution", 512))
    report = spectral.arithmeticity_scan(system, resolution)
    table = [(t, ph) for t, ph in zip(report.unit_circle_points, report.phases)]
    results = {"unit_circle_points": list(report.unit_circle_points),
               "phases": list(report.phases), "r": report.r,
               "phase_residual": report.phase_residual,
               "group_residual": report.group_residual,
               "resolution": resolution}
    return ("t", "phase"), table, results


def _run_joint(cfg, system, seed):
    m = cfg.get("m")
    ns = _n_list(cfg)
    _require(isinstance(m, int) and m > 0, "key 'm' must be a positive integer")
    n = ns[-1]
    _require(m < n, "need m < n")
    ensemble = _ensemble(cfg)
    regimes = sorted({m, n // 2})
    table = []
    rows = []
    for mm in regimes:
        if isinstance(system, ScattererConfig):
            cm, cn, cb = stats.billiard_joint_counts(system, seed, ensemble, mm, n)
            exact = math.nan
        else:
            d = system[1]
            sums = stats.ssrw_checkpoint_sums(seed, ensemble, (mm, n), d)
            zm = ~np.any(sums[:, 0, :], axis=1)
            zn = ~np.any(sums[:, 1, :], axis=1)
            cm, cn, cb = (int(zm.sum()), int(zn.sum()), int((zm & zn).sum()))
            exact = stats.ssrw_joint_exact_ratio(mm, n, d)
        j = stats.joint_return_statistic(cm, cn, cb, ensemble)
        table.append((mm, n, j.ratio, j.ci[0], j.ci[1], exact))
        rows.append({"m": mm, "n": n, "ratio": j.ratio, "ci": list(j.ci),
                     "exact_ratio": None if math.isnan(exact) else exact,
                     "p_m": j.p_m, "p_n": j.p_n, "p_both": j.p_both})
    results = {"ensemble": ensemble, "regimes": rows}
    return ("m", "n", "ratio", "ci_lo", "ci_hi", "exact_ratio"), table, results


_RUNNERS = {
    "ssrw": _run_ssrw,
    "simulate": _run_simulate,
    "lclt": _run_lclt,
    "recurrence": _run_recurrence,
    "spectral": _run_spectral,
    "arithmetic": _run_arithmetic,
    "joint": _run_joint,
}


def run_experiment(config_path, seed=None, out=None, threads=None) -> int:
    """Execute the experiment described by a JSON config file.

    Returns the process exit code; all failures are reported on stderr.
    """
    try:
        text = Path(config_path).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        print(f"config error: invalid JSON at line {exc.lineno}, column "
              f"{exc.colno}: {exc.msg}", file=sys.stderr)
        return 2
    try:
        _require(isinstance(cfg, dict), "config must be a JSON object")
        experiment = cfg.get("experiment")
        _require(experiment in EXPERIMENTS,
                 f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
        _check_keys(cfg, _TOP_KEYS[experiment], "config")
        if seed is None:
            seed = cfg.get("seed")
        _require(isinstance(seed, int) and 0 <= seed < 2 ** 64,
                 "seed is mandatory and must be a 64-bit unsigned integer")
        if threads is not None:
            import numba

            numba.set_num_threads(max(1, int(threads)))
        system = _parse_system(cfg.get("system"))
        if isinstance(system, ScattererConfig):
            validate_config(system)
            verdict = finite_horizon_check(system)
            if not verdict.finite:
                print(f"validation error: infinite horizon, open corridor in "
                      f"direction {verdict.witness_direction} at offsets "
                      f"{verdict.uncovered_offset}", file=sys.stderr)
                return 3
        columns, table, results = _RUNNERS[experiment](cfg, system, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except GeometryError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 3
    except HorizonGuardError as exc:
        print(f"runtime guard: {exc}", file=sys.stderr)
        return 4

    out_dir = Path(out) if out is not None else Path("results")
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{experiment}.csv"
    _write_csv(csv_path, columns, table)
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    summary = {
        "experiment": experiment,
        "seed": seed,
        "version": f"lorentzgas-{__version__}",
        "config": cfg,
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "outputs": [csv_path.name],
        "results": results,
    }
    (out_dir / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n",
        encoding="utf-8", newline="\n")
    return 0


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(prog="lorentzgas",
                                     description="Lorentz gas experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("--config", required=True, help="path to the JSON config")
    run.add_argument("--seed", type=int, default=None,
                     help="override the config seed")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--threads", type=int, default=None,
                     help="worker threads (results do not depend on this)")
    args = parser.parse_args(argv)
    sys.exit(run_experiment(args.config, seed=args.seed, out=args.out,
                            threads=args.threads))


if __name__ == "__main__":
    main()

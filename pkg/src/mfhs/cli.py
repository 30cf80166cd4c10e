"""Command-line entry point: ``mfhs {spectra,dims,levelset,verify,fib}``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cache import curves_for
from .config import RunConfig, load_config
from .errors import ConfigError, InsufficientDepthsError
from .estimators import (box_dimensions, level_set_spectrum, max_geometry_depth, moment_scaling,
                         partition_sum, regime_count_table)
from .legendre import alpha_range, legendre_at
from .measures import FibonacciMoran, SwitchedBernoulli
from .spectra import switched_window
from .symbolic import ETA, fibonacci_a_counts
from .verify import LEVELSET_DEPTH, HarnessSettings, reference_families, run_checks

MOMENT_DEPTH = {"FibonacciMoran": 10000, "NonRegularMoran": 24575, "SwitchedBernoulli": 40319}
ORACLE_DEPTH = 12
SKIP_NAMES = ("ordering", "shape", "levelset", "formalism", "sampled")
N_ALPHA = 41


def footer(cfg: RunConfig) -> str:
    return f"# generated-by=mfhs {__version__}, config-hash={cfg.digest()}"


def _r(x) -> str:
    return repr(float(x))


def _write(path: Path, header: list[str], rows, cfg: RunConfig) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        fh.write(footer(cfg) + "\n")
    return path


def _moment_depths(cfg: RunConfig) -> list[int]:
    if cfg.depth_schedule is not None:
        return list(range(1, max(cfg.depth_schedule) + 1))
    hi = cfg.max_depth or MOMENT_DEPTH.get(cfg.measure.family, 5039)
    return list(range(1, hi + 1))


# ------------------------------------------------------------ commands


def command_spectra(cfg: RunConfig, out: Path, oracle: bool = False) -> list[Path]:
    spec = cfg.measure
    q = cfg.q_grid.values()
    curves = curves_for(spec, q, cfg.cache)
    rows = [[label, _r(x), _r(v)] for label, c in curves.items() for x, v in zip(c.q_grid, c.values)]
    depths = _moment_depths(cfg)
    lo, hi = [], []
    for x in q:
        try:
            est = moment_scaling(spec, float(x), depths)
        except InsufficientDepthsError:
            continue
        lo.append(["moment_liminf", _r(x), _r(est.liminf_est)])
        hi.append(["moment_limsup", _r(x), _r(est.limsup_est)])
    rows += lo + hi
    if oracle:
        n = min(ORACLE_DEPTH, depths[-1])
        cum = regime_count_table(spec, n)
        r0, r1 = spec.regimes
        log_scale = cum[n] * math.log(r0.ratio) + (n - cum[n]) * math.log(r1.ratio)
        for x in q:
            val = partition_sum(spec, n, float(x), oracle=True) / -log_scale
            rows.append([f"oracle_ratio_n{n}", _r(x), _r(val)])
    return [_write(out / "spectra.csv", ["label", "q", "value"], rows, cfg)]


def command_dims(cfg: RunConfig, out: Path) -> list[Path]:
    spec = cfg.measure
    depth = cfg.max_depth or max_geometry_depth(spec)
    rows, summary = [], []
    for kind in ("covering", "packing"):
        est = box_dimensions(spec, max_depth=depth, kind=kind)
        s = est.series
        rows += [[kind, str(int(n)), _r(a), _r(b)] for n, a, b in zip(s.depths, s.log_scale, s.log_quantity)]
        summary.append([kind, _r(est.liminf_est), _r(est.limsup_est),
                        " ".join(str(int(d)) for d in est.subsequence_used)])
    paths = [_write(out / "dims.csv", ["kind", "n", "log_scale", "log_quantity"], rows, cfg),
             _write(out / "dims_summary.csv", ["kind", "liminf", "limsup", "subsequence"], summary, cfg)]
    for kind, lo, hi, _ in summary:
        print(f"{kind}: lower={lo} upper={hi}")
    return paths


def levelset_alphas(cfg: RunConfig, curves) -> np.ndarray:
    if cfg.alpha_grid is not None:
        return cfg.alpha_grid.values()
    if isinstance(cfg.measure, SwitchedBernoulli):
        lo, hi = switched_window(cfg.measure)
        return np.linspace(lo, hi, N_ALPHA + 2)[1:-1]
    lo, hi = alpha_range(curves["B"])
    if hi - lo < 1e-9:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, N_ALPHA)


def command_levelset(cfg: RunConfig, out: Path) -> list[Path]:
    spec = cfg.measure
    curves = curves_for(spec, cfg.q_grid.values(), cfg.cache)
    depth = cfg.max_depth or LEVELSET_DEPTH.get(spec.family, 5039)
    rows = []
    for a in levelset_alphas(cfg, curves):
        a = float(a)
        est = level_set_spectrum(spec, a, cfg.eps_schedule, cfg.depth_schedule, depth)
        rows.append([_r(a), _r(legendre_at(curves["b"], a)), _r(legendre_at(curves["B"], a)),
                     _r(est.lower), _r(est.upper), str(est.stable)])
    header = ["alpha", "b_star", "B_star", "lower_est", "upper_est", "stable"]
    return [_write(out / "levelset.csv", header, rows, cfg)]


def command_verify(cfg: RunConfig | None, out: Path, seed: int, skip: frozenset[str]) -> tuple[int, list[Path]]:
    settings = HarnessSettings(skip=skip)
    if cfg is None:
        base = RunConfig(seed=seed)
        specs = [dataclasses.replace(base, measure=m) for m in reference_families()]
        meta = base
    else:
        specs, meta = [cfg], cfg
    text, csv_parts, ok = [], [], True
    for c in specs:
        q = c.q_grid.values()
        curves = curves_for(c.measure, q, c.cache)
        alphas = c.alpha_grid.values() if c.alpha_grid is not None else None
        depths = c.depth_schedule
        report = run_checks(c.measure, seed, q, alphas, settings, curves, c.eps_schedule, depths)
        text.append(report.to_text())
        csv_parts.append(report.csv_rows())
        ok &= report.ok
    out.mkdir(parents=True, exist_ok=True)
    txt = out / "verify.txt"
    txt.write_text("\n".join(text) + footer(meta) + "\n")
    header = ["spec", "claim_id", "anchor", "margin", "tolerance", "pass", "informative", "skipped", "params"]
    path = _write(out / "verify.csv", header, [r for part in csv_parts for r in part], meta)
    return (0 if ok else 1), [txt, path]


def command_fib(cfg: RunConfig, out: Path, n: int) -> list[Path]:
    counts = fibonacci_a_counts(n)
    rows = []
    m = 1
    while m <= n:
        freq = counts[m] / m
        rows.append([str(m), str(int(counts[m])), _r(freq), _r(freq - ETA)])
        m = m + 1 if m < 100 else int(m * 1.25)
    if rows[-1][0] != str(n):
        rows.append([str(n), str(int(counts[n])), _r(counts[n] / n), _r(counts[n] / n - ETA)])
    return [_write(out / "fib.csv", ["n", "a_count", "frequency", "deviation"], rows, cfg)]


# ------------------------------------------------------------ entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfhs", description="Hewitt-Stromberg multifractal toolkit.")
    p.add_argument("command", choices=("spectra", "dims", "levelset", "verify", "fib"))
    p.add_argument("--config", type=Path, help="run configuration file")
    p.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    p.add_argument("--seed", type=int, help="RNG seed (overrides output.seed)")
    p.add_argument("--skip", action="append", default=[], choices=SKIP_NAMES,
                   help="verify: omit a check group (repeatable)")
    p.add_argument("--oracle", action="store_true", help="use brute-force paths where available")
    p.add_argument("--n", type=int, default=1000, help="fib: word length")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else None
    except ConfigError as exc:
        print(f"config error: {args.config}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config {args.config}: {exc}", file=sys.stderr)
        return 3
    if cfg is not None and args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    out = args.out or Path(cfg.out_dir if cfg else "out")
    run_cfg = cfg or RunConfig(seed=seed)
    try:
        if args.command == "verify":
            status, paths = command_verify(cfg, out, seed, frozenset(args.skip))
        elif args.command == "fib":
            fib_cfg = cfg or dataclasses.replace(run_cfg, measure=FibonacciMoran())
            status, paths = 0, command_fib(fib_cfg, out, args.n)
        elif args.command == "spectra":
            status, paths = 0, command_spectra(run_cfg, out, args.oracle)
        elif args.command == "dims":
            status, paths = 0, command_dims(run_cfg, out)
        else:
            status, paths = 0, command_levelset(run_cfg, out)
    except OSError as exc:
        print(f"I/O error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return 3
    for p in paths:
        print(p)
    if status:
        print("verification failed", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())

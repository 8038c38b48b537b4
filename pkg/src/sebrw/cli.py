"""Command-line runner: `python3 -m sebrw <subcommand> --config FILE --out DIR`."""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import subprocess
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import run_acceptance
from .asymptotics import SCALING_COLUMNS, compute_scaling, rate_I, scaling_row
from .brw_sim import Exact, Pruned, is_power_of_two
from .campaign import limit_draws, run_campaign
from .config import ConfigError, ExperimentConfig, apply_overrides, dump_toml, load_config
from .galton_watson import build_cluster_cache
from .ldp_mc import (Estimator, asymptotic_ratio, convolution_oracle, merge_estimates, naive_tail,
                     one_big_jump_tail, tilted_tail)
from .limit_law import compare_extremes, ks_against_cdf
from .rng import spawn_streams

SUBCOMMANDS = ("asymptotics", "ldp", "brw", "limit-compare", "full-acceptance")
log = logging.getLogger("sebrw")


def version_string() -> str:
    """Package version plus `git describe` of the source tree when available."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5)
        desc = out.stdout.strip() if out.returncode == 0 else ""
    except (OSError, subprocess.SubprocessError):
        desc = ""
    return f"{__version__}+{desc}" if desc else __version__


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return "" if v is None else str(v)


def _write_csv(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    path.write_text(buf.getvalue())


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _dumps(obj, indent=None) -> str:
    return json.dumps(obj, sort_keys=True, indent=indent, default=_json_default)


class Run:
    """Output directory bookkeeping: the manifest says whether the artifacts are complete."""

    def __init__(self, cfg: ExperimentConfig, subcommand: str):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.sub = subcommand
        self.stamp = {"seed": cfg.seed, "config_hash": cfg.hash(), "version": version_string()}
        self.files: list[str] = []

    def _manifest(self, status: str, error: str | None = None, ok: bool | None = None) -> None:
        files = {}
        for name in self.files:
            p = self.out / name
            if p.exists():
                files[name] = hashlib.sha256(p.read_bytes()).hexdigest()
        doc = {"subcommand": self.sub, "status": status, "files": files, **self.stamp}
        if ok is not None:
            doc["checks_passed"] = ok
        if error:
            doc["error"] = error
        tmp = self.out / "manifest.json.tmp"
        tmp.write_text(_dumps(doc, indent=2) + "\n")
        os.replace(tmp, self.out / "manifest.json")

    def start(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        self._manifest("running")
        self.add("config.toml", dump_toml(self.cfg))

    def add(self, name: str, text: str | None = None) -> Path:
        if name not in self.files:
            self.files.append(name)
        p = self.out / name
        if text is not None:
            p.write_text(text)
        return p

    def finish(self, ok: bool, error: str | None = None) -> None:
        self._manifest("complete" if error is None else "failed", error, ok)


def run_asymptotics(run: Run) -> bool:
    cfg = run.cfg
    spec = cfg.tail_spec(cfg.asymptotics.tail)
    table = cfg.cumulants()
    m = cfg.offspring_law().m
    rows = []
    for n in cfg.asymptotics.n_list:
        sc = compute_scaling(spec, table, n, m, cfg.tail.delta, cfg.tail.window_fraction)
        rows.append({**scaling_row(spec, table, sc), "m": m, "r": spec.r, "tail": cfg.asymptotics.tail,
                     **run.stamp})
        log.info("asymptotics n=%d d_n=%.6g", n, sc.d_n)
    cols = ("tail", "r", "m") + SCALING_COLUMNS + ("I_discrepancy", "seed", "config_hash", "version")
    _write_csv(run.add("asymptotics.csv"), cols, rows)
    return True


LDP_COLUMNS = ("estimator", "n", "j", "x_offset", "x", "d_n", "a_n", "p_hat", "se", "rel_se", "reps",
               "ess", "I", "ratio", "ratio_se", "seed", "config_hash", "version")


def _ldp_shard(args):
    dist, table, sc, est, n, x, j, reps, rng = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if est == Estimator.NAIVE:
            return naive_tail(dist, n - j, x, reps, rng)
        if est == Estimator.ONE_BIG_JUMP:
            return one_big_jump_tail(dist, n, x, reps, rng, scaling=sc, j=j)
        return tilted_tail(dist, table, sc, n, x, reps, rng, j=j)


def _ldp_jobs(cfg: ExperimentConfig):
    dist, table, law = cfg.displacement(), cfg.cumulants(), cfg.offspring_law()
    L = cfg.ldp
    cells, jobs = [], []
    for n in L.n_list:
        sc = compute_scaling(dist.tail, table, n, law.m, cfg.tail.delta, cfg.tail.window_fraction,
                             with_tau=False)
        for c in L.x_offsets:
            x = sc.d_n + c * sc.a_n
            for j in L.j_list:
                if j >= n:
                    continue
                for est, reps in ((Estimator.NAIVE, L.naive_reps), (Estimator.ONE_BIG_JUMP, L.obj_reps),
                                  (Estimator.TILTED, L.tilted_reps)):
                    shards = min(L.shards, reps)
                    per = [reps // shards + (i < reps % shards) for i in range(shards)]
                    rngs = spawn_streams(cfg.seed, shards, "ldp", est.value, n, float(c), j)
                    idx = list(range(len(jobs), len(jobs) + shards))
                    jobs += [(dist, table, sc, est, n, x, j, k, g) for k, g in zip(per, rngs)]
                    cells.append((est, n, c, x, j, sc, idx))
    return dist, table, cells, jobs


def run_ldp(run: Run) -> bool:
    cfg = run.cfg
    dist, table, cells, jobs = _ldp_jobs(cfg)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_ldp_shard, jobs))
    else:
        parts = [_ldp_shard(a) for a in jobs]
    rows = []
    rates = {}
    for est, n, c, x, j, sc, idx in cells:
        e = merge_estimates([parts[i] for i in idx])
        key = (n, c)
        if key not in rates:
            rates[key] = rate_I(dist.tail, table, x, n).value
        ratio, rse = asymptotic_ratio(e, rates[key], n) if e.p_hat > 0 else (math.nan, math.nan)
        rows.append({"estimator": est.value, "n": n, "j": j, "x_offset": c, "x": x, "d_n": sc.d_n,
                     "a_n": sc.a_n, "p_hat": e.p_hat, "se": e.se, "rel_se": e.rel_se, "reps": e.reps,
                     "ess": e.ess, "I": rates[key], "ratio": ratio, "ratio_se": rse, **run.stamp})
        if est == Estimator.TILTED and cfg.ldp.oracle and n <= 8:
            o = convolution_oracle(dist, n - j, x)
            rows.append({"estimator": Estimator.ORACLE.value, "n": n, "j": j, "x_offset": c, "x": x,
                         "d_n": sc.d_n, "a_n": sc.a_n, "p_hat": o.p_hat, "se": o.se,
                         "rel_se": o.rel_se, "reps": 0, "I": rates[key], **run.stamp})
        log.info("ldp %s n=%d j=%d offset=%g p=%.4g", est.value, n, j, c, e.p_hat)
    _write_csv(run.add("ldp.csv"), LDP_COLUMNS, rows)
    return True


def _mode(cfg: ExperimentConfig, d_n: float):
    if cfg.brw.mode == "exact":
        return Exact(cfg.brw.cap)
    return Pruned(cfg.brw.prune_width if cfg.brw.prune_width is not None else 2.0 * max(d_n, 1.0))


def _campaign(cfg: ExperimentConfig):
    dist, table, law = cfg.displacement(), cfg.cumulants(), cfg.offspring_law()
    B = cfg.brw
    camps = {}
    for n in B.n_list:
        d_n = compute_scaling(dist.tail, table, n, law.m, cfg.tail.delta, with_tau=False).d_n
        camps[n] = run_campaign(law, dist, table, [n], B.replicas, cfg.seed, B.window_L, B.k_n,
                                _mode(cfg, d_n), cfg.tail.delta, cfg.tail.window_fraction, cfg.workers)
    return camps


def run_brw(run: Run, camps=None) -> bool:
    camps = camps if camps is not None else _campaign(run.cfg)
    for n, camp in camps.items():
        lines = [_dumps({**rec, **run.stamp}) for rec in camp.records[n]]
        run.add(f"brw_n{n}.jsonl", "\n".join(lines) + "\n")
        sc = camp.scalings[n]
        run.add(f"brw_n{n}_scaling.json", _dumps({**sc.as_dict(), **run.stamp}, indent=2) + "\n")
    return True


def run_limit_compare(run: Run) -> bool:
    cfg = run.cfg
    camps = _campaign(cfg)
    run_brw(run, camps)
    law = cfg.offspring_law()
    a = cfg.tail_spec("effective").a
    report = {"L": cfg.brw.window_L, "a": a, "per_n": {}, **run.stamp}
    for n, camp in camps.items():
        lim = limit_draws(law, a, cfg.limit.samples, cfg.brw.window_L, cfg.seed, n)
        surv = camp.survivors(n)
        entry = {"survivors": len(surv)}
        if len(surv) >= 100:
            entry.update(compare_extremes(camp.windows(n), lim, [r["multiplicity_at_max"] for r in surv]))
            W = np.array([s.W for s in lim])
            z = [r["max_rescaled"] for r in surv]
            ks, p = ks_against_cdf(z, a, build_cluster_cache(law).upsilon, W)
            entry["ks_against_closed_form"] = {"statistic": ks, "p_value": p}
        else:
            entry["skipped"] = "fewer than 100 surviving replicas"
        entry["power_of_two_fraction"] = float(np.mean([is_power_of_two(r["multiplicity_at_max"])
                                                        for r in surv])) if surv else math.nan
        entry["M_over_d_mean"] = float(np.mean([r["M_n"] for r in surv]) / camp.scalings[n].d_n) if surv else math.nan
        report["per_n"][str(n)] = entry
    run.add("limit_compare.json", _dumps(report, indent=2) + "\n")
    return True


def run_full_acceptance(run: Run) -> bool:
    cfg = run.cfg
    results = run_acceptance(cfg.seed, cfg.workers, progress=log.info)
    for r in results:
        print(r.line(), flush=True)
    ok = all(r.passed for r in results)
    doc = {"all_passed": ok, "criteria": [r.as_dict() for r in results], **run.stamp}
    run.add("acceptance.json", _dumps(doc, indent=2) + "\n")
    print(f"acceptance: {sum(r.passed for r in results)}/{len(results)} criteria passed", flush=True)
    return ok


RUNNERS = {"asymptotics": run_asymptotics, "ldp": run_ldp, "brw": run_brw,
           "limit-compare": run_limit_compare, "full-acceptance": run_full_acceptance}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sebrw", description=__doc__)
    p.add_argument("command", nargs="?", choices=SUBCOMMANDS, help="what to run")
    p.add_argument("--subcommand", choices=SUBCOMMANDS, help="alternative to the positional form")
    p.add_argument("--config", type=Path, help="TOML experiment config (defaults built in)")
    p.add_argument("--seed", type=int, help="master seed, overrides SEBRW_SEED and the config")
    p.add_argument("--workers", type=int, help="worker processes, overrides SEBRW_WORKERS")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    sub = args.subcommand or args.command
    if sub is None or (args.subcommand and args.command and args.subcommand != args.command):
        print("sebrw: give exactly one subcommand", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        cfg = apply_overrides(cfg, args.seed, args.workers, args.out)
    except ConfigError as exc:
        print(f"sebrw: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"sebrw: cannot read config: {exc}", file=sys.stderr)
        return 2
    run = Run(cfg, sub)
    run.start()
    try:
        ok = RUNNERS[sub](run)
    except Exception as exc:
        run.finish(False, f"{type(exc).__name__}: {exc}")
        raise
    run.finish(ok)
    return 0 if ok else 1

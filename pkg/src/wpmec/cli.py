"""Command-line front end.

    wpmec run    --policy PCF --v 400 --p 2 --seeds 5 --slots 3000 [--trace]
    wpmec sweep  --config plan.cfg [--parallel 4] [--out DIR]
    wpmec bounds [--v 400] [--p 2]
    wpmec verify

run/sweep emit the documented CSV; --out writes files into a directory,
otherwise CSV goes to stdout. Config files are flat `key = value` text.
"""

import argparse
import math
import pathlib
import sys

from .harness import (DEFAULT_WARMUP, ExperimentPlan, parse_config_text,
                      config_from_mapping, plan_from_mapping, results_to_csv,
                      simulate_run, sweep, trace_to_csv, run_to_row,
                      CSV_HEADER, config_for)
from .model import SystemConfig
from .scheduler import compute_bounds
from .verify import quick_verify


def _load_mapping(path):
    if path is None:
        return {}
    return parse_config_text(pathlib.Path(path).read_text())


def _add_common(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--v", type=float, help="utility weight V")
    p.add_argument("--p", type=str, help="drop price (number or 'inf')")
    p.add_argument("--out", help="output directory")


def _apply_overrides(cfg: SystemConfig, args) -> SystemConfig:
    v = cfg.v_param if args.v is None else args.v
    if args.p is None:
        p = math.inf if cfg.never_drop else cfg.drop_price
    else:
        p = math.inf if args.p.lower() == "inf" else float(args.p)
    return config_for(cfg, v, p)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wpmec",
        description="Data-age-aware scheduling simulator for wireless-powered "
                    "mobile-edge computing",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one (policy, V, p) cell")
    _add_common(p_run)
    p_run.add_argument("--policy", default="PCF",
                       choices=("PCF", "PPF", "PF", "HDO"))
    p_run.add_argument("--seeds", type=int, default=1,
                       help="number of seeds (0..n-1)")
    p_run.add_argument("--slots", type=int, default=3000)
    p_run.add_argument("--warmup", type=int, default=DEFAULT_WARMUP)
    p_run.add_argument("--trace", action="store_true",
                       help="also write per-slot trace CSV (per seed)")
    p_run.add_argument("--bound-checks", default="assert",
                       choices=("assert", "record", "off"))

    p_sweep = sub.add_parser("sweep", help="run a plan file's full grid")
    _add_common(p_sweep)
    p_sweep.add_argument("--parallel", type=int, default=1)
    p_sweep.add_argument("--bound-checks", default="assert",
                         choices=("assert", "record", "off"))

    p_bounds = sub.add_parser("bounds", help="print worst-case bound report")
    _add_common(p_bounds)

    sub.add_parser("verify", help="run the built-in oracle/property checks")

    args = parser.parse_args(argv)

    if args.command == "verify":
        results = quick_verify()
        all_ok = True
        for name, ok, detail in results:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
            all_ok &= ok
        return 0 if all_ok else 1

    raw = _load_mapping(args.config)

    if args.command == "bounds":
        cfg = _apply_overrides(config_from_mapping(raw), args)
        rep = compute_bounds(cfg, cfg.c_max)
        print(f"B1 = {rep.b1!r}")
        print(f"B2 = {rep.b2!r}")
        print("device,q_max_mb,z_max,s_max_mb,g_max_slots")
        for i in range(cfg.n_devices):
            print(f"{i},{rep.q_max[i]!r},{rep.z_max[i]!r},{rep.s_max[i]!r},"
                  f"{rep.g_max[i]}")
        return 0

    out_dir = None
    if args.out:
        out_dir = pathlib.Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)

    if args.command == "run":
        cfg = _apply_overrides(config_from_mapping(raw), args)
        p_val = math.inf if cfg.never_drop else cfg.drop_price
        rows = [CSV_HEADER]
        for seed in range(args.seeds):
            metrics = simulate_run(cfg, args.policy, seed, slots=args.slots,
                                   warmup=args.warmup,
                                   check=args.bound_checks,
                                   trace=args.trace)
            rows.append(run_to_row(args.policy, cfg.v_param, p_val, seed,
                                   metrics))
            if args.trace and out_dir is not None:
                (out_dir / f"trace_seed{seed}.csv").write_text(
                    trace_to_csv(metrics.per_slot_series))
        csv = "\n".join(rows) + "\n"
        if out_dir is not None:
            (out_dir / "run.csv").write_text(csv)
            print(f"wrote {out_dir / 'run.csv'}")
        else:
            sys.stdout.write(csv)
        return 0

    if args.command == "sweep":
        plan = plan_from_mapping(raw)
        if args.v is not None or args.p is not None:
            raise SystemExit("sweep: put v_grid/p_grid in the plan file")
        results, failures = sweep(plan, check=args.bound_checks,
                                  parallel=max(1, args.parallel))
        csv = results_to_csv(results)
        if out_dir is not None:
            (out_dir / "results.csv").write_text(csv)
            print(f"wrote {out_dir / 'results.csv'} "
                  f"({len(results)} rows, {len(failures)} failed cells)")
        else:
            sys.stdout.write(csv)
        for pol, v, p, seed, msg in failures:
            print(f"FAILED {pol} V={v} p={p} seed={seed}: {msg}",
                  file=sys.stderr)
        return 0 if not failures else 2

    return 0


if __name__ == "__main__":
    raise SystemExit(main())

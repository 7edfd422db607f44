"""Command-line entry point: ``wpmec run|timing|train-dnn|solve-one``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import InstanceConfig, load_config, make_instance
from .experiments import (ALL_METHODS, EXPERIMENT_IDS, InvariantError, emit_plot, load_spec, preset, run,
                          run_method, timing_csv, timing_suite)
from .strategy import EX_CAP


def _methods(s):
    return tuple(m.strip().upper() for m in s.split(",") if m.strip())


def _base_config(args) -> InstanceConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else InstanceConfig()
    if getattr(args, "N", None):
        cfg = cfg.updated(N=args.N)
    return cfg


def cmd_run(args) -> int:
    if Path(args.spec).exists():
        spec = load_spec(args.spec)
    elif args.spec in EXPERIMENT_IDS:
        spec = preset(args.spec)
    else:
        print(f"error: {args.spec!r} is neither a spec file nor a preset ({', '.join(EXPERIMENT_IDS[:-1])})",
              file=sys.stderr)
        return 2
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.methods:
        kw["methods"] = _methods(args.methods)
    if args.ex_cap is not None:
        kw["ex_cap"] = args.ex_cap
    if args.n_seeds is not None:
        kw["n_seeds"] = args.n_seeds
    if args.timing:
        kw["timing"] = True
    out_dir = Path(args.out) if args.out else Path("results")
    kw["out"] = str(out_dir / f"{spec.experiment}.csv")
    d = spec.to_dict()
    d.update(kw)
    spec = type(spec).from_dict(d)
    table = run(spec)
    print(f"wrote {spec.out} ({len(table.rows)} rows)")
    if args.plot:
        print(f"wrote {emit_plot(table, out_dir / (spec.experiment + '.svg'))}")
    for a in table.aggregate():
        print("  " + " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in a.items()))
    if table.failures:
        print(f"{len(table.failures)} invariant failures:", file=sys.stderr)
        for f in table.failures[:20]:
            print("  " + f, file=sys.stderr)
        return 1
    return 0


def cmd_timing(args) -> int:
    methods = _methods(args.methods) if args.methods else ("PI", "DL")
    res = timing_suite(args.N_list, methods, args.n_seeds, _base_config(args), seed=args.seed or 0,
                       ex_cap=args.ex_cap or EX_CAP, repeats=args.repeats)
    out = Path(args.out) if args.out else Path("results") / "timing.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    timing_csv(res, out)
    print(f"wrote {out}")
    for (N, m), ms in sorted(res["summary"].items()):
        print(f"  N={N} {m}: {ms:.3f} ms")
    for N, m in res["skipped"]:
        print(f"  N={N} {m}: skipped (above cap)")
    return 0


def cmd_train(args) -> int:
    from .dnn import TrainParams, generate_dataset, train
    cfg = _base_config(args)
    seed = args.seed or 0
    ds = generate_dataset(cfg, args.samples, seed=seed, redraw_weights=not args.fixed_weights)
    if args.dataset_out:
        ds.to_csv(args.dataset_out)
    pred = train(ds, TrainParams(epochs=args.epochs), seed=seed)
    out = Path(args.out) if args.out else Path(f"mlp_N{cfg.n_devices}.txt")
    out.parent.mkdir(parents=True, exist_ok=True)
    pred.save(out)
    h = pred.history
    print(f"wrote {out}: N={cfg.n_devices} samples={len(ds)} labels={ds.label_counts().tolist()} "
          f"best_epoch={h['best_epoch']} val_loss={min(h['val_loss']):.4g}")
    return 0


def cmd_solve_one(args) -> int:
    cfg = _base_config(args)
    inst = make_instance(cfg, args.seed or 0)
    methods = _methods(args.methods) if args.methods else ("PI", "NC", "LC")
    pred = None
    if "DL" in methods:
        if not args.model:
            print("error: method DL needs --model", file=sys.stderr)
            return 2
        from .dnn import load_predictor
        pred = load_predictor(args.model)
    for m in methods:
        if m == "PM":
            print("error: PM needs a grid; use `run`", file=sys.stderr)
            return 2
        r = run_method(m, inst, args.seed or 0, predictor=pred, ex_cap=args.ex_cap or EX_CAP)
        print(f"{m:3s} wscr={r.wscr:.6g} feasible={int(r.feasible)} m={r.m} strategy={r.strategy} "
              f"solves={r.n_solves} ms={r.solve_ms:.2f} violation={r.worst_violation:.3g} {r.note}".rstrip())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wpmec", description="Collaborative wireless-powered MEC experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=None)
    common.add_argument("--methods", default=None, help=f"comma-separated subset of {','.join(ALL_METHODS)}")
    common.add_argument("--ex-cap", type=int, default=None, dest="ex_cap")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", parents=[common], help="run an experiment spec file or preset")
    r.add_argument("spec")
    r.add_argument("--n-seeds", type=int, default=None, dest="n_seeds")
    r.add_argument("--timing", action="store_true", help="include solve_ms in the CSV")
    r.add_argument("--plot", action="store_true", help="also write an SVG chart")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("timing", parents=[common], help="decision time per method versus N")
    t.add_argument("--N", type=int, nargs="+", default=[5, 10, 20, 30], dest="N_list")
    t.add_argument("--n-seeds", type=int, default=10, dest="n_seeds")
    t.add_argument("--config", default=None)
    t.add_argument("--repeats", type=int, default=3, help="time each decision this often and keep the minimum")
    t.set_defaults(func=cmd_timing)

    d = sub.add_parser("train-dnn", parents=[common], help="label frames and train the m predictor")
    d.add_argument("--config", default=None)
    d.add_argument("--N", type=int, default=None)
    d.add_argument("--samples", type=int, default=2000)
    d.add_argument("--epochs", type=int, default=200)
    d.add_argument("--fixed-weights", action="store_true", dest="fixed_weights")
    d.add_argument("--dataset-out", default=None, dest="dataset_out")
    d.set_defaults(func=cmd_train)

    s = sub.add_parser("solve-one", parents=[common], help="solve one seeded frame with each method")
    s.add_argument("--config", default=None)
    s.add_argument("--N", type=int, default=None)
    s.add_argument("--model", default=None)
    s.set_defaults(func=cmd_solve_one)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, InvariantError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``tsic run|preset|trace|workload``."""
import argparse
import json
import sys

from .harness import (
    PRESETS,
    ConfigError,
    ExperimentConfig,
    run_experiment,
    trace_experiment,
    write_metrics,
    write_trace,
)
from .sim import generate_workload, write_workload


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _emit_rows(rows, path):
    fh, close = _open_out(path)
    try:
        write_metrics(rows, fh)
    finally:
        if close:
            fh.close()


def _load(path):
    try:
        return ExperimentConfig.load(path)
    except (OSError, ConfigError) as exc:
        raise SystemExit(f"error: {exc}")


def cmd_run(args):
    cfg = _load(args.config)
    try:
        rows = run_experiment(cfg, jobs=args.jobs)
    except ConfigError as exc:
        raise SystemExit(f"error: {exc}")
    _emit_rows(rows, args.out or cfg.output)


def cmd_preset(args):
    cfg = PRESETS[args.name]()
    if args.seeds:
        cfg.seeds = args.seeds
    if args.episodes is not None:
        cfg.train_episodes = args.episodes
    if args.dump_config:
        json.dump(cfg.to_dict(), sys.stdout, indent=2)
        sys.stdout.write("\n")
        return
    _emit_rows(run_experiment(cfg, jobs=args.jobs), args.out)


def cmd_trace(args):
    cfg = _load(args.config)
    try:
        res = trace_experiment(cfg)
    except ConfigError as exc:
        raise SystemExit(f"error: {exc}")
    fh, close = _open_out(args.out)
    try:
        write_trace(res, fh)
    finally:
        if close:
            fh.close()


def cmd_workload(args):
    cfg = _load(args.config)
    sim = cfg.sim
    sim.rng_seed = args.seed if args.seed is not None else cfg.seeds[0]
    write_workload(generate_workload(sim, stream=args.stream), args.out)


def build_parser():
    p = argparse.ArgumentParser(prog="tsic", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config and write metrics CSV")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="CSV path (default: config 'output', else stdout)")
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=cmd_run)

    pr = sub.add_parser("preset", help="run a built-in sweep")
    pr.add_argument("name", choices=sorted(PRESETS))
    pr.add_argument("--out", help="CSV path (default stdout)")
    pr.add_argument("--seeds", type=int, nargs="+")
    pr.add_argument("--episodes", type=int, help="TSIC training episodes")
    pr.add_argument("--jobs", type=int, default=1)
    pr.add_argument("--dump-config", action="store_true", help="print the preset as JSON and exit")
    pr.set_defaults(func=cmd_preset)

    t = sub.add_parser("trace", help="decision log of the first run in a config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", help="CSV path (default stdout)")
    t.set_defaults(func=cmd_trace)

    w = sub.add_parser("workload", help="export a generated workload as CSV")
    w.add_argument("--config", required=True)
    w.add_argument("--out", required=True)
    w.add_argument("--seed", type=int)
    w.add_argument("--stream", type=int, default=0)
    w.set_defaults(func=cmd_workload)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()

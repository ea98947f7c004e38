"""Command-line interface: ``roadgp run|verify|gen-network|bench``."""

import argparse
import json
import sys
from pathlib import Path

from . import bench, verify
from .config import ConfigError, RunConfig, build_model, build_network
from .generate import KINDS, generate_network
from .simulator import run_experiment, write_metrics


def _load_config(path):
    try:
        return RunConfig.load(path)
    except FileNotFoundError:
        print(f"error: config file {path} not found", file=sys.stderr)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
    return None


def cmd_run(args):
    cfg = _load_config(args.config)
    if cfg is None:
        return 2
    rows = run_experiment(cfg)
    out = Path(args.output or cfg.output)
    if not out.is_absolute() and args.output is None:
        out = Path(args.config).parent / out
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        write_metrics(rows, fh)
    last = {}
    for r in rows:
        last[(r.algorithm, r.K, r.L, r.U, r.eps, r.seed)] = r
    for (alg, K, L, U, eps, seed), r in sorted(last.items()):
        print(f"{alg} K={K} L={L} U={U} eps={eps:g} seed={seed}: "
              f"|D|={r.n_observed} rmse={r.rmse:.4f} rounds={r.round + 1}")
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_verify(args):
    if args.trials < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return 2
    rep = verify.run_suite(args.suite, args.trials, args.seed)
    summary = {"suite": rep.suite, "trials": rep.trials, "seed": rep.seed,
               "passed": rep.passed, "failed": rep.failed, "ok": rep.ok}
    if args.output:
        Path(args.output).write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
    print(json.dumps(summary))
    return 0 if rep.ok else 1


def cmd_gen_network(args):
    try:
        net = generate_network(args.kind, args.size, args.seed, args.segments)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    net.save(args.out)
    print(f"wrote {len(net)} segments, {len(net.edges)} edges to {args.out}")
    return 0


def cmd_bench(args):
    cfg = _load_config(args.config)
    if cfg is None:
        return 2
    net = build_network(cfg)
    model = build_model(cfg, net)
    timings = bench.fusion_scaling(
        model, n_events=cfg.budget, K_values=cfg.sweep("K"),
        support_size=cfg.sweep("support_size")[0], repeats=args.repeats, seed=cfg.seeds[0],
    )
    report = {
        "fusion": [t.__dict__ for t in timings],
        "messages": {k: (v if not isinstance(v, dict) else {str(a): b for a, b in v.items()})
                     for k, v in bench.message_scaling().items()},
    }
    text = json.dumps(report, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n")
    for t in timings:
        print(f"K={t.K} |D|={t.n_events} |U|={t.support_size}: per-sensor "
              f"{t.per_sensor_seconds:.4f}s, centralized {t.centralized_seconds:.4f}s")
    m = report["messages"]
    print(f"summary bytes ~ {m['summary_coef']:.4f}|U|^2 (max rel. residual "
          f"{m['summary_max_rel_residual']:.4f}); adjacency bytes ~ {m['adjacency_coef']:.4f}K")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="roadgp", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a simulation experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--output", help="metrics CSV (overrides the config)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run a randomized property suite")
    v.add_argument("--suite", required=True, choices=verify.SUITES)
    v.add_argument("--trials", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--output", help="write the per-trial JSON report here")
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("gen-network", help="write a synthetic road network")
    g.add_argument("--kind", required=True, choices=KINDS)
    g.add_argument("--size", required=True, type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--segments", type=int, help="grid only: trim to this many segments")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_network)

    b = sub.add_parser("bench", help="fusion timing and message-size benchmark")
    b.add_argument("--config", required=True)
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--output", help="write the JSON report here")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver: train, simulate, compare, plot, membench.

Exit codes: 0 success, 1 validation error (message on stderr), 2 runtime
abort (watchdog or poisoned update) with the diagnostics path on stderr.
Logging verbosity comes from DVLA_LOG=quiet|info|trace.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import config as config_mod
from . import metrics, pools, sim
from .core import ConfigError, UsageError
from .plots import KINDS, write_plot
from .runtime import RunAbort, run

log = logging.getLogger("dvla")

_LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO,
               "trace": logging.DEBUG}


def _setup_logging():
    name = os.environ.get("DVLA_LOG", "info").lower()
    if name not in _LOG_LEVELS:
        raise ConfigError(
            f"DVLA_LOG must be one of {sorted(_LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=_LOG_LEVELS[name],
                        format="%(levelname)s %(name)s: %(message)s")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); our contract says 1
        raise ConfigError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="dvla", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run the live four-lane runtime")
    t.add_argument("--config", required=True)
    t.add_argument("--mode", choices=("sync", "async"))
    t.add_argument("--strategy",
                   choices=("colocated", "disaggregated", "hybrid"))
    t.add_argument("--ratio", help="rollout:actor slot split, e.g. 3:1")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", default="metrics.jsonl")

    s = sub.add_parser("simulate", help="run the discrete-event simulator")
    s.add_argument("--config", required=True)
    s.add_argument("--sweep", help="envs=A..B:STEP environment-count sweep")
    s.add_argument("--out", default="curve.csv")

    c = sub.add_parser("compare",
                       help="sync vs async with the same config")
    c.add_argument("--config", required=True)
    c.add_argument("--out", required=True)

    pl = sub.add_parser("plot", help="render an SVG figure from a run file")
    pl.add_argument("--in", dest="infile", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--kind", required=True, choices=KINDS)

    m = sub.add_parser("membench",
                       help="dual-pool vs unified-baseline churn")
    m.add_argument("--config", required=True)
    return p


def _load_config(path: str, args=None) -> config_mod.RunConfig:
    cfg = config_mod.load(path)
    overrides: dict = {}
    if args is not None:
        rt = {}
        if args.mode is not None:
            rt["mode"] = args.mode
        if args.seed is not None:
            rt["seed"] = args.seed
        if rt:
            overrides["runtime"] = rt
        pl = {}
        if args.strategy is not None:
            pl["strategy"] = args.strategy
        if args.ratio is not None:
            pl["ratio"] = args.ratio
        if pl:
            overrides["placement"] = pl
    if overrides:
        cfg = config_mod.overridden(cfg, **overrides)
    cfg.validate()
    return cfg


def parse_sweep(text: str) -> list:
    """envs=A..B:STEP -> [A, A+STEP, ..., <=B]."""
    try:
        key, _, rng = text.partition("=")
        if key != "envs" or not rng:
            raise ValueError("expected envs=A..B:STEP")
        span, _, step_s = rng.partition(":")
        lo_s, sep, hi_s = span.partition("..")
        if not sep or not step_s:
            raise ValueError("expected envs=A..B:STEP")
        lo, hi, step = int(lo_s), int(hi_s), int(step_s)
    except ValueError as exc:
        raise ConfigError(f"bad --sweep {text!r}: {exc}") from None
    if lo < 1 or hi < lo or step < 1:
        raise ConfigError(f"bad --sweep {text!r}: need 1 <= A <= B and STEP >= 1")
    return list(range(lo, hi + 1, step))


def _cmd_train(args) -> int:
    cfg = _load_config(args.config, args)
    writer = metrics.MetricWriter(args.out)
    try:
        result = run(cfg, metric_writer=writer)
    finally:
        writer.close()
    summary = result.summary()
    log.info("run complete: %s", summary)
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    if args.sweep:
        counts = parse_sweep(args.sweep)
        rows = sim.sweep_envs(cfg, counts)
        sim.write_sweep_csv(rows, args.out)
        log.info("sweep of %d points written to %s", len(rows), args.out)
        print(args.out)
        return 0
    res = sim.simulate(cfg)
    row = dict(res.row(), n_envs=cfg.env.n_envs,
               strategy=cfg.plan.strategy.value)
    print(json.dumps(row, sort_keys=True))
    return 0


def _cmd_compare(args) -> int:
    cfg = _load_config(args.config)
    report: dict = {"config_digest": cfg.digest(), "runs": {}, "sim": {},
                    "fit": {}}
    for mode in ("sync", "async"):
        mcfg = config_mod.overridden(cfg, runtime={"mode": mode})
        live = run(mcfg).summary()
        des = sim.simulate(mcfg)
        report["runs"][mode] = live
        report["sim"][mode] = des.row()
        report["fit"][mode] = sim.fit_check(des, live)
    report["speedup"] = (report["runs"]["async"]["throughput"]
                         / max(report["runs"]["sync"]["throughput"], 1e-12))
    report["sim_speedup"] = (report["sim"]["async"]["throughput"]
                             / max(report["sim"]["sync"]["throughput"], 1e-12))
    sync_run = report["runs"]["sync"]
    imbalance = (max(sync_run["rollout_time"], sync_run["actor_time"])
                 / max(min(sync_run["rollout_time"], sync_run["actor_time"]),
                       1e-12))
    report["degeneration"] = {
        "cost_imbalance": imbalance,
        "bottleneck": report["sim"]["async"]["bottleneck"],
        "quasi_synchronous": bool(imbalance > 2.0),
        "staleness_max": report["runs"]["async"]["staleness_max"],
    }
    Path(args.out).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    log.info("comparison written to %s (speedup %.3f)", args.out,
             report["speedup"])
    print(json.dumps({"speedup": report["speedup"],
                      "sim_speedup": report["sim_speedup"]}, sort_keys=True))
    return 0


def _cmd_plot(args) -> int:
    write_plot(args.infile, args.out, args.kind)
    log.info("%s figure written to %s", args.kind, args.out)
    print(args.out)
    return 0


def _cmd_membench(args) -> int:
    cfg = _load_config(args.config)
    cfg.validate()
    out = {}
    for label, unified in (("dual", False), ("unified", True)):
        failed, stats = pools.run_churn(unified)
        out[label] = {"model_request_failed": failed,
                      "pools": {k: v.__dict__ for k, v in stats.items()}}
    out["fragmentation_delta"] = (
        max(p["fragmentation"] for p in out["unified"]["pools"].values())
        - max(p["fragmentation"] for p in out["dual"]["pools"].values()))
    print(json.dumps(out, sort_keys=True, indent=2))
    return 0


_COMMANDS = {"train": _cmd_train, "simulate": _cmd_simulate,
             "compare": _cmd_compare, "plot": _cmd_plot,
             "membench": _cmd_membench}


def main(argv=None) -> int:
    try:
        _setup_logging()
        args = _build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RunAbort as exc:
        diag_path = Path("dvla-abort.json")
        diag_path.write_text(json.dumps({
            "reason": exc.reason, "lane": exc.lane, "epoch": exc.epoch,
            "lane_states": exc.lane_states}, sort_keys=True, indent=2) + "\n")
        print(f"runtime abort: {exc.reason} (diagnostics: {diag_path})",
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

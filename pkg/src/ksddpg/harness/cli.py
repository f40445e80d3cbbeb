"""Command line: ``ksddpg train | eval | compare``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import KsddpgError
from . import io
from .config import LEARNING, load_config
from .runner import aggregate_reward, evaluate, save_checkpoint, train

log = logging.getLogger("ksddpg")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ksddpg", description="Traffic signal control experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train (or run) one algorithm for every configured seed")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, action="append", help="override the config seeds (repeatable)")
    t.add_argument("--out", help="output directory (default: the config's output_dir)")
    t.add_argument("--episodes", type=int)
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. hyper.batch_size=256")

    e = sub.add_parser("eval", help="evaluate a trained checkpoint or a classic controller")
    e.add_argument("--config", required=True)
    e.add_argument("--checkpoint")
    e.add_argument("--episodes", type=int)
    e.add_argument("--out")
    e.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")

    c = sub.add_parser("compare", help="evaluate several configs and write one summary table")
    c.add_argument("--configs", nargs="+", required=True)
    c.add_argument("--episodes", type=int)
    c.add_argument("--out", default="compare_summary.csv")
    return p


def _check_configs(parser, paths) -> None:
    for path in paths:
        if not Path(path).exists():
            parser.error(f"config file not found: {path}")


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    out = Path(args.out or cfg._path(cfg.output_dir))
    seeds = args.seed or cfg.seeds
    for seed in seeds:
        sdir = out / f"seed_{seed}"
        sdir.mkdir(parents=True, exist_ok=True)

        def progress(ep_log, seed=seed):
            if ep_log.episode % 10 == 0:
                log.info("seed %d episode %d  Rbar=%.4f  %.1fs", seed, ep_log.episode,
                         aggregate_reward(ep_log), ep_log.wall_time)

        res = train(cfg, seed, args.episodes, callback=progress)
        rbar = res.rbar()
        io.write_reward_curve(sdir / "reward_curve.csv", rbar)
        io.write_training_log(sdir / "training_log.csv", res.logs, res.env.n_agents)
        if cfg.algorithm in LEARNING:
            save_checkpoint(sdir / "checkpoint", res.policy, res.env.agent_ids,
                            {"seed": seed, "episodes": len(res.logs)})
        cfg.save(sdir / "config.json")
        print(f"seed {seed}: {len(rbar)} episodes, final Rbar {rbar[-1]:.4f} -> {sdir}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.set)
    # a command-line checkpoint is relative to the shell, not to the config file
    ckpt = Path(args.checkpoint).resolve() if args.checkpoint else None
    summary, logs = evaluate(cfg, ckpt, args.episodes)
    if args.out:
        out = Path(args.out)
        io.write_summary(out / "summary.csv", {cfg.algorithm: summary})
        io.write_metrics(out / "metrics.csv", logs[0], [n for n in cfg.build_network().signalized])
    for k, v in summary.items():
        print(f"{k:28s} {v:12.4f}")
    return 0


def cmd_compare(args) -> int:
    table = {}
    for path in args.configs:
        cfg = load_config(path)
        summary, _ = evaluate(cfg, None, args.episodes)
        table[f"{cfg.algorithm}:{Path(path).stem}"] = summary
    io.write_summary(args.out, table)
    names = list(table)
    print("metric".ljust(28) + "".join(n[:16].rjust(18) for n in names))
    for metric in table[names[0]]:
        print(metric.ljust(28) + "".join(f"{table[n].get(metric, float('nan')):18.4f}" for n in names))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    _check_configs(parser, args.configs if args.command == "compare" else [args.config])
    try:
        return {"train": cmd_train, "eval": cmd_eval, "compare": cmd_compare}[args.command](args)
    except KsddpgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

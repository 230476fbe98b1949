"""Command line front end.

Every subcommand materializes a run directory <out>/<timestamp>-<name>/
holding the frozen config it ran with, so any result can be reproduced by
pointing --config at that frozen file. A 'latest' pointer file in the out
root names the newest run directory.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import time

import numpy as np

from .arm import ArmModel, load_arm_params
from .configio import ConfigError, parse_config
from .evaluation import (directional_dtw_eval, eval_success, export_plot_data,
                         make_env, parse_report_csv, policy_actor,
                         run_episode, sim2sim_eval, speed_bucket_eval)
from .fdcc import ClipRejected, make_demo_set
from .motion import build_dataset, load_clips, save_clips
from .training import Trainer, load_policy

PROTOCOLS = ("success", "dtw", "speed", "sim2sim")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ppforge",
        description="table-tennis striking: teach demos, augment, train, evaluate")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(p):
        p.add_argument("--config", help="config file layered over the defaults")
        p.add_argument("--seed", type=int, help="sets run.seed")
        p.add_argument("--out", default="runs", help="run directory root")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="config override, repeatable")

    p = sub.add_parser("teach", help="record demo clips from the packaged wrench scripts")
    common(p)

    p = sub.add_parser("augment", help="speed-augment a clip directory into a dataset")
    common(p)
    p.add_argument("--in", dest="in_dir", help="clip directory (defaults to io.clips)")
    p.add_argument("--factors", help="comma-separated extra speed factors, e.g. 2,3,5")

    p = sub.add_parser("train", help="run PPO training")
    common(p)
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--ckpt", help="policy checkpoint path")
    p.add_argument("--protocol", choices=PROTOCOLS,
                   help="overrides eval.protocol")

    p = sub.add_parser("export-plots", help="re-emit plot CSVs from an eval run directory")
    common(p)
    p.add_argument("--in", dest="in_dir", help="eval run directory to read")
    return parser


def make_run_dir(out_root, subcommand):
    os.makedirs(out_root, exist_ok=True)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = "%s-%s" % (stamp, subcommand)
    name, k = base, 0
    while os.path.exists(os.path.join(out_root, name)):
        k += 1
        name = "%s-%02d" % (base, k)
    path = os.path.join(out_root, name)
    os.makedirs(path)
    with open(os.path.join(out_root, "latest"), "w", encoding="utf-8") as fh:
        fh.write(name + "\n")
    return path


def _load_config(args):
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append("run.seed=%d" % args.seed)
    return parse_config(user_path=args.config, overrides=overrides)


def _freeze_config(cfg, run_dir, subcommand):
    with open(os.path.join(run_dir, "config.cfg"), "w", encoding="utf-8") as fh:
        fh.write(cfg.dump(subcommand=subcommand,
                          stamp=time.strftime("%Y-%m-%d %H:%M:%S")))


def _demo_rng(cfg):
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([cfg["run.seed"], 0x7EAC])))


def cmd_teach(args):
    cfg = _load_config(args)
    run_dir = make_run_dir(args.out, "teach")
    _freeze_config(cfg, run_dir, "teach")
    model = ArmModel(load_arm_params())
    scripts = cfg["io.scripts"] or None
    clips = make_demo_set(_demo_rng(cfg), model, cfg, script_dir=scripts)
    out = os.path.join(run_dir, "clips")
    names = save_clips(clips, out)
    for clip, name in zip(clips, names):
        print("taught %-32s %3d frames  %s" % (name, len(clip), clip.direction))
    print("clips written to %s" % out)
    return 0


def cmd_augment(args, parser):
    cfg = _load_config(args)
    in_dir = args.in_dir or cfg["io.clips"]
    if not in_dir:
        parser.error("augment requires --in (or io.clips) naming a clip directory")
    clips = load_clips(in_dir)
    if args.factors:
        try:
            extra = [int(tok) for tok in args.factors.split(",") if tok.strip()]
        except ValueError:
            parser.error("--factors expects comma-separated integers")
        factors = sorted(set([1] + extra))
    else:
        factors = cfg["data.factors"]
    run_dir = make_run_dir(args.out, "augment")
    _freeze_config(cfg, run_dir, "augment")
    dataset = build_dataset(clips, factors, cfg["data.window_length"])
    out = os.path.join(run_dir, "dataset")
    save_clips(dataset.clips, out)
    print("augmented %d clips x factors %s -> %d dataset clips (%d windows)"
          % (len(clips), factors, len(dataset.clips), dataset.total_windows))
    print("dataset written to %s" % out)
    return 0


def cmd_train(args):
    cfg = _load_config(args)
    run_dir = make_run_dir(args.out, "train")
    _freeze_config(cfg, run_dir, "train")
    trainer = Trainer(cfg, run_dir=run_dir, log_fn=print)
    if args.resume:
        trainer.load(args.resume)
        print("resumed from %s at iteration %d" % (args.resume, trainer.iteration))
    done = trainer.iteration
    remaining = max(0, cfg["ppo.iterations"] - done)
    trainer.train(iterations=remaining)
    print("metrics: %s" % os.path.join(run_dir, "metrics.csv"))
    print("checkpoint: %s" % os.path.join(run_dir, "final.txt"))
    return 0


def _eval_clips(cfg):
    if cfg["io.dataset"]:
        return load_clips(cfg["io.dataset"])
    if cfg["io.clips"]:
        return load_clips(cfg["io.clips"])
    model = ArmModel(load_arm_params())
    return make_demo_set(_demo_rng(cfg), model, cfg)


def cmd_eval(args, parser):
    cfg = _load_config(args)
    protocol = args.protocol or cfg["eval.protocol"]
    if protocol not in PROTOCOLS:
        parser.error("unknown eval.protocol %r" % protocol)
    ckpt = args.ckpt or cfg["io.ckpt"]
    if not ckpt:
        parser.error("eval --protocol %s requires --ckpt (or io.ckpt) naming "
                     "a policy checkpoint" % protocol)
    snapshot, _ = load_policy(ckpt)
    actor = policy_actor(snapshot)
    run_dir = make_run_dir(args.out, "eval")
    _freeze_config(cfg, run_dir, "eval")

    success_reports, dtw_reports, speed_reports, s2s_reports = [], [], [], []
    if protocol == "success":
        success_reports.append(eval_success(actor, cfg, method="ours"))
    elif protocol == "dtw":
        clips = _eval_clips(cfg)
        dtw_reports = directional_dtw_eval(actor, cfg, clips)
    elif protocol == "speed":
        speed_reports = speed_bucket_eval(actor, cfg, method="ours")
    else:
        s2s_reports = sim2sim_eval(actor, cfg, method="ours")

    trajectories = []
    n_dump = cfg["eval.dump_episodes"]
    if n_dump > 0:
        env = make_env(cfg, np.random.SeedSequence([cfg["run.seed"], 0xD0]))
        for _ in range(n_dump):
            trajectories.append(run_episode(env, actor, collect_traj=True).trajectory)

    written = export_plot_data(run_dir, success_reports, dtw_reports,
                               speed_reports, s2s_reports, trajectories)
    for rep in success_reports + speed_reports + s2s_reports:
        tag = rep.bucket or rep.backend
        print("%s%s: attempts %d  mean %.2f  rate %.2f%%"
              % (rep.method, " [%s]" % tag if tag else "",
                 rep.attempts, rep.mean_success, 100.0 * rep.success_rate))
    for rep in dtw_reports:
        print("dtw %-10s mean %.2f (normalized %.4f) over %d episodes"
              % (rep.direction, rep.mean_dtw, rep.mean_dtw_normalized,
                 rep.episodes))
    for path in written:
        print("wrote %s" % path)
    return 0


def cmd_export_plots(args, parser):
    cfg = _load_config(args)
    if not args.in_dir:
        parser.error("export-plots requires --in naming an eval run directory")
    if not os.path.isdir(args.in_dir):
        raise FileNotFoundError("no such run directory: %s" % args.in_dir)
    run_dir = make_run_dir(args.out, "export-plots")
    _freeze_config(cfg, run_dir, "export-plots")
    copied = 0
    for name in sorted(os.listdir(args.in_dir)):
        if not name.endswith(".csv"):
            continue
        parse_report_csv(os.path.join(args.in_dir, name))  # validates shape
        shutil.copyfile(os.path.join(args.in_dir, name),
                        os.path.join(run_dir, name))
        print("exported %s" % name)
        copied += 1
    if copied == 0:
        raise FileNotFoundError("no plot CSVs found in %s" % args.in_dir)
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 2
    try:
        if args.command == "teach":
            return cmd_teach(args)
        if args.command == "augment":
            return cmd_augment(args, parser)
        if args.command == "train":
            return cmd_train(args)
        if args.command == "eval":
            return cmd_eval(args, parser)
        if args.command == "export-plots":
            return cmd_export_plots(args, parser)
        parser.error("unknown command %r" % args.command)
    except (ConfigError, ClipRejected, FileNotFoundError, ValueError,
            OSError, RuntimeError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())

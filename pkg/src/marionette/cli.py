"""Command line entry point.

Subcommands cover the whole pipeline: retarget source clips, train a policy,
evaluate a checkpoint, roll out headless episodes, and serve a live session
over WebSocket.  Exit codes: 0 on success, 1 on bad input or a failed run,
2 on usage errors (argparse's convention).
"""

import argparse
import dataclasses
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .config import (ConfigError, config_hash, default_config, eval_config,
                     gate_config, load_config, ppo_config, worker_count)
from .curriculum import STAGES, sample_episode
from .evaluate import BASELINES, DIRECTIVE_FORMS, run_eval
from .model import default_model, load_model
from .motion import MotionFormatError, load_motion, save_motion
from .policy import MHCPolicy
from .ppo import ABLATIONS, stage_schedule, train
from .retarget import load_clip, retarget_clip
from .rollout import episode_rngs, run_episode

log = logging.getLogger("marionette")


def _packaged_dir(*parts) -> Path:
    return Path(resources.files("marionette").joinpath("assets", *parts))


def _load_motions(directory, model) -> list:
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"{directory}: no such motion directory")
    motions = []
    tags = {}
    for path in sorted(directory.glob("*.json")):
        motion = load_motion(path, model)
        if motion.source_tag in tags:
            raise ConfigError(
                f"{path}: duplicate source tag {motion.source_tag!r} "
                f"(also in {tags[motion.source_tag]})")
        tags[motion.source_tag] = path.name
        motions.append(motion)
    if not motions:
        raise ConfigError(f"{directory}: no motion files (*.json)")
    return motions


def _build_model(cfg: dict):
    path = cfg["model"]["path"]
    return load_model(path) if path else default_model()


def _load_policy(cfg: dict, checkpoint):
    model = _build_model(cfg)
    path = Path(checkpoint)
    if not path.is_file():
        raise ConfigError(f"{path}: no such checkpoint")
    return model, MHCPolicy.load(path, model)


def _config_or_defaults(args) -> dict:
    if getattr(args, "config", None):
        return load_config(args.config)
    return default_config()


# ---------------------------------------------------------------------------
# Subcommands


def cmd_validate_config(args) -> int:
    cfg = load_config(args.config)
    print(f"{args.config}: ok (version {cfg['version']}, sha256 {config_hash(cfg)})")
    return 0


def cmd_retarget(args) -> int:
    model = load_model(args.model) if args.model else default_model()
    clips_dir = Path(args.clips)
    if not clips_dir.is_dir():
        raise ConfigError(f"{clips_dir}: no such clip directory")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    paths = sorted(clips_dir.glob("*.json"))
    if not paths:
        raise ConfigError(f"{clips_dir}: no clip files (*.json)")
    failures = 0
    for path in paths:
        try:
            clip = load_clip(path)
            motion = retarget_clip(clip, model)
        except MotionFormatError as exc:
            log.error("%s: %s", path.name, exc)
            failures += 1
            continue
        dest = out_dir / f"{motion.source_tag or path.stem}.json"
        save_motion(motion, dest, model.name)
        print(f"{path.name} -> {dest.name}: {motion.horizon} frames")
    if failures:
        log.error("%d of %d clips failed", failures, len(paths))
        return 1
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg["run"]["seed"]
    workers = worker_count(cfg, args.workers)
    out_dir = Path(args.out_dir or cfg["run"]["out_dir"])

    model = _build_model(cfg)
    motions_dir = cfg["motions"]["dir"] or _packaged_dir("motions")
    dataset = _load_motions(motions_dir, model) if Path(motions_dir).is_dir() else []

    train_cfg = cfg["train"]
    missing = [s for s in ABLATIONS[train_cfg["ablation"]]
               if s not in train_cfg["iterations"]]
    if missing:
        raise ConfigError(
            f"train.iterations: ablation {train_cfg['ablation']!r} "
            f"needs counts for stages {missing}")
    schedule = stage_schedule(train_cfg["ablation"], train_cfg["iterations"])
    gate = gate_config(cfg)
    if gate is not None:
        schedule = [dataclasses.replace(p, use_gate=True, gate=gate)
                    for p in schedule]

    needs_motions = any(p != "LOCO" for plan in schedule
                        for p in plan.stage.patterns)
    if needs_motions and not dataset:
        raise ConfigError(
            "motions.dir: required for this schedule (stages sample motion "
            "directives) but not set or empty")

    policy = MHCPolicy(model, np.random.default_rng(seed),
                       aux_target_input=train_cfg["aux_target_input"])
    extra = {"command": "train", "seed": seed,
             "config_hash": config_hash(cfg), "config": cfg}
    log.info("training: ablation=%s seed=%d workers=%d out=%s",
             train_cfg["ablation"], seed, workers, out_dir)
    result = train(model, policy, dataset, schedule, ppo_config(cfg),
                   out_dir, seed, workers=workers,
                   checkpoint_every=train_cfg["checkpoint_every"],
                   extra_manifest=extra, resume_from=args.resume)
    print(f"trained {result['iterations']} iterations; "
          f"final checkpoint {result['final_checkpoint']}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config_or_defaults(args)
    overrides = {}
    if args.directive:
        overrides["directive"] = args.directive.upper()
    if args.episodes is not None:
        overrides["episodes_per_motion"] = args.episodes
    if args.baseline:
        overrides["baseline"] = args.baseline.upper()
    if args.seed is not None:
        overrides["seed"] = args.seed
    econfig = eval_config(cfg, **overrides)

    model, policy = _load_policy(cfg, args.checkpoint)
    motions_dir = args.motions or cfg["motions"]["dir"] or _packaged_dir("motions")
    motions = _load_motions(motions_dir, model)

    log.info("evaluating %s on %d motions (%s, %d episodes each)",
             args.checkpoint, len(motions), econfig.directive,
             econfig.episodes_per_motion)
    report = run_eval(model, policy, motions, econfig)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.save(out)
    agg = report.aggregate
    mpjpe = "n/a" if agg["mpjpe"] is None else f"{agg['mpjpe']:.4f} m"
    print(f"{agg['episodes']} episodes: fail {agg['fail_pct']:.1f}%, "
          f"mpjpe {mpjpe}, root drift {agg['root_drift']:.4f} m "
          f"-> {out}")
    return 0


def cmd_rollout(args) -> int:
    cfg = _config_or_defaults(args)
    seed = args.seed if args.seed is not None else cfg["run"]["seed"]
    model, policy = _load_policy(cfg, args.checkpoint)
    dataset = []
    motions_dir = args.motions or cfg["motions"]["dir"]
    if motions_dir:
        dataset = _load_motions(motions_dir, model)
    stage = STAGES[args.stage]

    out = open(args.out, "w") if args.out else None
    lengths, returns = [], []
    try:
        for i in range(args.episodes):
            sample_rng, noise_rng, action_rng = episode_rngs(seed, 0, i)
            spec = sample_episode(stage, dataset, model, sample_rng)
            record = run_episode(model, policy, spec, noise_rng=noise_rng,
                                 action_rng=action_rng,
                                 deterministic=args.deterministic,
                                 seed=(seed, 0, i))
            lengths.append(record.length)
            returns.append(float(record.rewards.sum()))
            print(f"episode {i}: {record.length} steps, "
                  f"return {returns[-1]:.2f}, terminal {record.terminal}")
            if out is not None:
                out.write(json.dumps({
                    "episode": i, "length": record.length,
                    "terminal": record.terminal, "return": returns[-1],
                    "term_means": record.term_means(),
                }, sort_keys=True) + "\n")
    finally:
        if out is not None:
            out.close()
    print(f"mean length {np.mean(lengths):.1f}, mean return {np.mean(returns):.2f}")
    return 0


def cmd_serve(args) -> int:
    from . import service   # keep asyncio/websockets off the import path elsewhere

    cfg = _config_or_defaults(args)
    model, policy = _load_policy(cfg, args.checkpoint)
    presets_dir = args.presets or cfg["motions"]["dir"] or _packaged_dir("motions")
    presets = {}
    if Path(presets_dir).is_dir():
        try:
            presets = {m.source_tag: m for m in _load_motions(presets_dir, model)}
        except ConfigError as exc:
            log.warning("no upper-body presets loaded: %s", exc)
    host = args.host or cfg["serve"]["host"]
    port = args.port if args.port is not None else cfg["serve"]["port"]
    rate = args.rate if args.rate is not None else cfg["serve"]["rate_hz"]
    speed = args.speed if args.speed is not None else cfg["serve"]["speed"]
    log.info("serving %s on ws://%s:%d/session (%.0f Hz broadcast, %gx speed)",
             args.checkpoint, host, port, rate, speed)
    service.serve(model, policy, host=host, port=port, rate_hz=rate,
                  speed=speed, presets=presets)
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="override the run seed from the config")
    common.add_argument("--log-level", default=argparse.SUPPRESS,
                        choices=["debug", "info", "warning", "error"],
                        help="logging verbosity (default: info)")
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS,
                        help="parallel rollout workers (default: config, "
                             "then all logical cores)")

    parser = argparse.ArgumentParser(
        prog="marionette",
        description="Directive-steered humanoid control toolkit",
        parents=[common])
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("validate-config", parents=[common],
                       help="check a config file and print its hash")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate_config)

    p = sub.add_parser("retarget", parents=[common],
                       help="solve source clips into joint-space motions")
    p.add_argument("--clips", required=True, help="directory of clip JSON files")
    p.add_argument("--out", required=True, help="output motion directory")
    p.add_argument("--model", help="model JSON (default: built-in humanoid)")
    p.set_defaults(func=cmd_retarget)

    p = sub.add_parser("train", parents=[common], help="run the training loop")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", help="override run.out_dir")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common],
                       help="score a checkpoint on a motion set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--motions", help="motion directory")
    p.add_argument("--directive",
                   choices=[f.lower() for f in DIRECTIVE_FORMS])
    p.add_argument("--episodes", type=int, help="episodes per motion")
    p.add_argument("--baseline", choices=[b.lower() for b in BASELINES])
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--config", help="config file for remaining settings")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rollout", parents=[common],
                       help="run headless episodes and print summaries")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--stage", type=int, choices=sorted(STAGES), default=3)
    p.add_argument("--motions", help="motion directory")
    p.add_argument("--deterministic", action="store_true",
                   help="use mean actions instead of sampling")
    p.add_argument("--out", help="write per-episode NDJSON here")
    p.add_argument("--config", help="config file for model/motion paths")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("serve", parents=[common],
                       help="expose a live session over WebSocket")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--rate", type=float, help="state broadcast rate in Hz")
    p.add_argument("--speed", type=float,
                   help="wall-clock pacing multiplier (sim time unaffected)")
    p.add_argument("--presets", help="motion directory for upper-body presets")
    p.add_argument("--config", help="config file for remaining settings")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:   # argparse exits 2 on usage errors
        return int(exc.code or 0)
    if not getattr(args, "command", None):
        parser.print_help()
        return 2

    level = getattr(args, "log_level", None) or "info"
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    # SUPPRESS leaves the attributes unset when the flags were not given.
    args.seed = getattr(args, "seed", None)
    args.workers = getattr(args, "workers", None)

    try:
        return args.func(args)
    except ConfigError as exc:
        for line in exc.diagnostics:
            print(line, file=sys.stderr)
        return 1
    except (MotionFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: gen-scenes, train, propose, evaluate, render."""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from treerl import qnet
from treerl._io import atomic_write_text
from treerl.evaluator import evaluate, recall_curve
from treerl.featurizer import GridFeaturizer
from treerl.mdp import SceneContext, input_dim
from treerl.scene import SceneConfig, generate_dataset, load_manifest, render, save_manifest, scenes_by_id
from treerl.svg import line_plot, scene_svg
from treerl.trainer import TrainConfig, train
from treerl.tree_search import (
    MAX_LEVELS,
    propose,
    propose_random,
    propose_single_path,
    read_proposals,
    write_proposals,
)

log = logging.getLogger("treerl")


class CliError(Exception):
    pass


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _levels(text: str) -> int:
    value = int(text)
    if not 1 <= value <= MAX_LEVELS:
        raise argparse.ArgumentTypeError(f"levels must lie in [1, {MAX_LEVELS}], got {text}")
    return value


def _add_scene_flags(p: argparse.ArgumentParser, full: bool) -> None:
    d = SceneConfig()
    g = p.add_argument_group("scene")
    g.add_argument("--background", type=float, default=d.background)
    g.add_argument("--noise", type=float, default=d.noise)
    if not full:
        return
    g.add_argument("--width", type=int, default=d.width)
    g.add_argument("--height", type=int, default=d.height)
    g.add_argument("--min-objects", type=int, default=d.min_objects)
    g.add_argument("--max-objects", type=int, default=d.max_objects)
    g.add_argument("--min-object-area", type=float, default=d.min_object_area)
    g.add_argument("--min-side", type=int, default=d.min_side)
    g.add_argument("--max-side-frac", type=float, default=d.max_side_frac)
    g.add_argument("--intensity-low", type=float, default=d.intensity_low)
    g.add_argument("--intensity-high", type=float, default=d.intensity_high)


def _scene_config(args: argparse.Namespace) -> SceneConfig:
    names = SceneConfig.__dataclass_fields__
    return SceneConfig(**{k: v for k, v in vars(args).items() if k in names})


def _add_feature_flags(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    p.add_argument("--grid", type=int, default=d.grid, help="featurizer grid size G (features = 2*G*G)")
    p.add_argument("--min-size", type=float, default=d.min_size, help="minimum window side in pixels")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="treerl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scenes", help="generate a synthetic scene manifest")
    p.add_argument("--count", type=_non_negative_int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_scene_flags(p, full=True)

    d = TrainConfig()
    p = sub.add_parser("train", help="train a Q-network on a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="checkpoint path (rewritten after every epoch)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--epochs", type=_non_negative_int, default=d.epochs)
    p.add_argument("--max-steps", type=int, default=d.max_steps)
    p.add_argument("--eps-start", type=float, default=d.eps_start)
    p.add_argument("--eps-end", type=float, default=d.eps_end)
    p.add_argument("--anneal-epochs", type=_non_negative_int, default=d.anneal_epochs)
    p.add_argument("--gamma", type=float, default=d.gamma)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--replay-capacity", type=int, default=d.replay_capacity)
    p.add_argument("--learning-rate", type=float, default=d.learning_rate)
    p.add_argument("--td-clip", type=float, default=d.td_clip)
    p.add_argument("--hidden", type=int, nargs="+", default=list(d.hidden))
    p.add_argument("--updates-per-episode", type=_non_negative_int, default=d.updates_per_episode)
    p.add_argument("--target-sync", type=_non_negative_int, default=d.target_sync,
                   help="copy weights to a frozen target net every N updates (0 = no target net)")
    p.add_argument("--log", type=Path, help="training log path (default: <out>.log.tsv)")
    p.add_argument("--keep-epoch-checkpoints", action="store_true",
                   help="also keep <out>.epochNN copies of every per-epoch checkpoint")
    _add_feature_flags(p)
    _add_scene_flags(p, full=False)

    p = sub.add_parser("propose", help="write proposals for every scene of a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--levels", type=_levels, default=5)
    p.add_argument("--mode", choices=("tree", "single", "random"), default="tree")
    p.add_argument("--steps", type=_non_negative_int, default=50, help="chain length for --mode single")
    p.add_argument("--seed", type=int, default=0, help="rng seed for --mode random")
    p.add_argument("--out", type=Path, required=True)
    _add_feature_flags(p)
    _add_scene_flags(p, full=False)

    p = sub.add_parser("evaluate", help="recall table and plots for a proposal file")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--proposals", type=Path, required=True)
    p.add_argument("--thresholds", type=float, nargs="+", default=[0.5, 0.6, 0.7])
    p.add_argument("--budgets", type=int, nargs="+", default=[31, 63])
    p.add_argument("--out", type=Path, help="report table path (default: stdout)")
    p.add_argument("--plots", type=Path, help="prefix for <prefix>.recall_iou.svg and <prefix>.recall_budget.svg")

    p = sub.add_parser("render", help="draw one scene with its proposals as SVG")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--proposals", type=Path)
    p.add_argument("--scene-id", required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_scene_flags(p, full=False)
    return parser


def _load_scenes(args: argparse.Namespace):
    if not args.manifest.exists():
        raise CliError(f"manifest not found: {args.manifest}")
    return load_manifest(args.manifest, SceneConfig(background=args.background, noise=args.noise))


def cmd_gen_scenes(args: argparse.Namespace) -> None:
    config = _scene_config(args)
    try:
        scenes = generate_dataset(args.count, args.seed, config)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    save_manifest(scenes, args.out)
    log.info("wrote %d scenes to %s", len(scenes), args.out)


def cmd_train(args: argparse.Namespace) -> None:
    scenes = _load_scenes(args)
    if not scenes:
        raise CliError(f"manifest {args.manifest} holds no scenes")
    cfg = TrainConfig(
        epochs=args.epochs,
        max_steps=args.max_steps,
        eps_start=args.eps_start,
        eps_end=args.eps_end,
        anneal_epochs=args.anneal_epochs,
        gamma=args.gamma,
        batch_size=args.batch_size,
        replay_capacity=args.replay_capacity,
        learning_rate=args.learning_rate,
        td_clip=args.td_clip,
        hidden=tuple(args.hidden),
        grid=args.grid,
        min_size=args.min_size,
        updates_per_episode=args.updates_per_episode,
        target_sync=args.target_sync,
        seed=args.seed,
    )
    log_path = args.log or args.out.with_name(args.out.name + ".log.tsv")
    run_config = {"manifest": str(args.manifest), "scenes": len(scenes), **cfg.as_dict()}
    atomic_write_text(args.out.with_name(args.out.name + ".run.json"), json.dumps(run_config, indent=2) + "\n")
    lines = ["epoch\tepsilon\tmean_reward\tmean_loss\tepisodes"]

    def on_epoch(entry, net) -> None:
        qnet.save(net, args.out)
        if args.keep_epoch_checkpoints:
            shutil.copyfile(args.out, args.out.with_name(f"{args.out.name}.epoch{entry.epoch:02d}"))
        lines.append(entry.to_line())
        atomic_write_text(log_path, "\n".join(lines) + "\n")
        log.info("%s", entry.to_line())

    result = train(scenes, cfg, on_epoch=on_epoch)
    qnet.save(result.net, args.out)
    atomic_write_text(log_path, "\n".join(lines) + "\n")


def cmd_propose(args: argparse.Namespace) -> None:
    scenes = _load_scenes(args)
    featurizer = GridFeaturizer(args.grid)
    net = None
    if args.mode != "random":
        if args.checkpoint is None:
            raise CliError(f"--checkpoint is required for --mode {args.mode}")
        try:
            net = qnet.load(args.checkpoint)
        except OSError as exc:
            raise CliError(f"cannot read checkpoint: {exc}") from None
        expected = input_dim(featurizer.dim)
        if net.input_dim != expected:
            raise CliError(
                f"checkpoint input dim {net.input_dim} does not match featurizer input dim {expected} "
                f"(grid {args.grid})"
            )
    rng = np.random.default_rng(args.seed)
    out = []
    for scene in scenes:
        ctx = SceneContext(scene, featurizer, args.min_size)
        if args.mode == "tree":
            props = propose(ctx, net, args.levels)
        elif args.mode == "single":
            props = propose_single_path(ctx, net, args.steps)
        else:
            props = propose_random(ctx, args.levels, rng)
        out.append((scene.id, props))
    write_proposals(args.out, out)


def _check_ids(scenes, proposals) -> None:
    if not proposals:
        return
    ids = {s.id for s in scenes}
    missing = sorted(ids - proposals.keys())
    extra = sorted(proposals.keys() - ids)
    if missing or extra:
        parts = []
        if missing:
            parts.append("missing proposals for " + ", ".join(missing))
        if extra:
            parts.append("unknown scene ids " + ", ".join(extra))
        raise CliError("scene-id mismatch: " + "; ".join(parts))


def cmd_evaluate(args: argparse.Namespace) -> None:
    if not args.manifest.exists():
        raise CliError(f"manifest not found: {args.manifest}")
    scenes = load_manifest(args.manifest)
    proposals = read_proposals(args.proposals)
    _check_ids(scenes, proposals)
    windows = {sid: [p.window for p in props] for sid, props in proposals.items()}
    rep = evaluate(scenes, windows, args.budgets, args.thresholds)
    table = rep.to_tsv()
    if args.out:
        atomic_write_text(args.out, table)
    else:
        sys.stdout.write(table)
    if args.plots:
        taus = [round(0.5 + 0.025 * i, 3) for i in range(21)]
        by_iou = [(f"{b} proposals", taus, recall_curve(scenes, windows, b, taus)) for b in args.budgets]
        atomic_write_text(
            args.plots.with_name(args.plots.name + ".recall_iou.svg"),
            line_plot(by_iou, "Recall vs IoU threshold", "IoU threshold", "recall", (0.5, 1.0)),
        )
        max_budget = max(max(args.budgets), max((len(v) for v in windows.values()), default=1))
        budgets = sorted({b for b in (1, 3, 7, 15, 31, 63, 127, 255, 511, 1023, *args.budgets) if b <= max_budget})
        per_budget = [recall_curve(scenes, windows, b, args.thresholds) for b in budgets]
        by_budget = [
            (f"IoU {t:g}", budgets, [curve[i] for curve in per_budget])
            for i, t in enumerate(args.thresholds)
        ]
        atomic_write_text(
            args.plots.with_name(args.plots.name + ".recall_budget.svg"),
            line_plot(by_budget, "Recall vs number of proposals", "proposals", "recall", (0, max_budget)),
        )


def cmd_render(args: argparse.Namespace) -> None:
    scenes = scenes_by_id(_load_scenes(args))
    if args.scene_id not in scenes:
        raise CliError(f"unknown scene id {args.scene_id!r}")
    scene = scenes[args.scene_id]
    props = []
    if args.proposals is not None:
        props = [(p.window, p.level) for p in read_proposals(args.proposals).get(scene.id, [])]
    atomic_write_text(args.out, scene_svg(render(scene), scene.objects, props))


COMMANDS = {
    "gen-scenes": cmd_gen_scenes,
    "train": cmd_train,
    "propose": cmd_propose,
    "evaluate": cmd_evaluate,
    "render": cmd_render,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    log.info("config %s", json.dumps({k: str(v) for k, v in sorted(vars(args).items())}))
    try:
        COMMANDS[args.command](args)
    except (CliError, ValueError, OSError, FloatingPointError) as exc:
        print(f"treerl {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

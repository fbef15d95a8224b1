"""Command-line interface.

Subcommands:

* ``run expN`` — run one of the four packaged experiments end to end and
  write its reports into the output directory.
* ``train oc|ppo`` — train a single run and write its summary, episode log,
  final trace, and rendered path.
* ``render`` — turn a saved trace CSV back into an SVG.
* ``stats`` — recompute the significance tests from a saved
  ``run_summaries.csv``.

Exit codes: 0 on success, 1 for configuration/usage errors, 2 for runtime
failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path

from . import __version__, harness
from . import maze as maze_mod
from . import option_critic as oc
from . import ppo as ppo_mod
from . import render as render_mod
from .stats import TrainSettings

log = logging.getLogger(__name__)


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part != "")
    except ValueError as exc:
        raise ValueError(f"bad seed list {text!r}: {exc}") from None


def _parse_phis(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part != "")
    except ValueError as exc:
        raise ValueError(f"bad phi list {text!r}: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hrlmaze",
        description="Option-critic and PPO experiments on grid mazes.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a packaged experiment")
    run.add_argument("experiment", help="one of exp1, exp2, exp3, exp4")
    run.add_argument(
        "--maze",
        action="append",
        default=None,
        help="override the experiment's maze(s); repeatable",
    )
    run.add_argument("--seeds", default=None, help="comma-separated seed list")
    run.add_argument("--max-steps", type=int, default=None, help="env-step budget per run")
    run.add_argument(
        "--phi-list", default=None, help="comma-separated termination regularizers (exp4)"
    )
    run.add_argument("--out", default=None, help="output directory (default results/<exp>)")
    run.add_argument(
        "--desk-scale",
        action="store_true",
        help="desk-scale preset: 150k-step budget and matched schedules",
    )
    run.add_argument(
        "--paper-widths",
        action="store_true",
        help="use the full-scale PPO network widths instead of the desk widths",
    )

    train = sub.add_parser("train", help="train a single run")
    train.add_argument("agent", help="oc or ppo")
    train.add_argument("--maze", default="four-rooms", help="built-in maze name")
    train.add_argument("--seed", type=int, default=1)
    train.add_argument("--max-steps", type=int, default=None)
    train.add_argument("--desk-scale", action="store_true")
    train.add_argument("--paper-widths", action="store_true")
    train.add_argument(
        "--obs-mode", default="one-hot", help="observation encoding: one-hot or coords"
    )
    train.add_argument("--out", default="results/train", help="output directory")

    rend = sub.add_parser("render", help="render a saved trace CSV to SVG")
    rend.add_argument("trace", help="path to a trace CSV")
    rend.add_argument("--maze", required=True, help="built-in maze name")
    rend.add_argument("--out", default=None, help="output SVG path (default: trace with .svg)")

    stats = sub.add_parser("stats", help="recompute tests from run_summaries.csv")
    stats.add_argument("summary", help="path to a run_summaries.csv")

    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    config = harness.ExperimentConfig(
        experiment=args.experiment,
        out_dir=args.out or "",
        mazes=tuple(args.maze) if args.maze else (),
        seeds=_parse_seeds(args.seeds) if args.seeds else harness.DEFAULT_SEEDS,
        max_env_steps=args.max_steps,
        desk_scale=args.desk_scale,
        paper_widths=args.paper_widths,
        phi_sweep=(
            _parse_phis(args.phi_list) if args.phi_list else harness.DEFAULT_PHI_SWEEP
        ),
    )
    config.validate()
    report = harness.run_experiment(config)
    out_dir = report["out_dir"]
    print(f"experiment {args.experiment} complete; reports in {out_dir}")
    for row in report["rows"]:
        print("  " + "  ".join(f"{k}={harness.fmt(v)}" for k, v in row.items()))
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    if args.agent not in ("oc", "ppo"):
        raise ValueError(f"unknown agent {args.agent!r}; expected oc or ppo")
    if args.maze not in maze_mod.BUILT_IN_NAMES:
        raise ValueError(f"unknown maze {args.maze!r}")
    max_steps = args.max_steps
    if max_steps is None:
        max_steps = 150000 if args.desk_scale else 500000
    settings = TrainSettings(max_env_steps=max_steps)
    if args.agent == "oc":
        params = oc.OptionCriticParams()
        if args.desk_scale:
            params = oc.desk_scale(params)
        spec = harness.RunSpec(
            run_id=f"train-{args.maze}-oc-s{args.seed}",
            experiment="train",
            label="oc",
            agent="oc",
            maze=args.maze,
            seed=args.seed,
            settings=settings,
            oc_params=params,
            obs_mode=args.obs_mode,
        )
    else:
        params = ppo_mod.PPOParams()
        if args.paper_widths:
            params = ppo_mod.paper_widths(params)
        if args.desk_scale:
            params = ppo_mod.desk_scale(params)
        spec = harness.RunSpec(
            run_id=f"train-{args.maze}-ppo-s{args.seed}",
            experiment="train",
            label="ppo",
            agent="ppo",
            maze=args.maze,
            seed=args.seed,
            settings=settings,
            ppo_params=params,
            obs_mode=args.obs_mode,
        )
    result = harness.execute_run(spec)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs = [(spec, result)]
    harness.write_episode_log(out_dir / f"{spec.run_id}_episodes.csv", runs)
    harness.write_run_summaries(out_dir / f"{spec.run_id}_summary.csv", runs)
    if result.final_trace and result.final_trace.steps:
        harness.write_trace_csv(
            out_dir / f"{spec.run_id}_trace.csv", result.final_trace.steps
        )
        maze_spec = maze_mod.built_in(args.maze)
        svg = render_mod.render_path_svg(result.final_trace.steps, maze_spec)
        (out_dir / f"{spec.run_id}.svg").write_text(svg)
    conv = result.convergence_step if result.convergence_step is not None else "censored"
    print(
        f"{spec.run_id}: convergence={conv} final_path={result.final_path_length} "
        f"success={result.final_path_success} steps={result.total_env_steps}"
    )
    return 0


def _cmd_render(args: argparse.Namespace) -> int:
    trace_path = Path(args.trace)
    if not trace_path.exists():
        raise ValueError(f"trace file {trace_path} does not exist")
    if args.maze not in maze_mod.BUILT_IN_NAMES:
        raise ValueError(f"unknown maze {args.maze!r}")
    steps = harness.read_trace_csv(trace_path)
    maze_spec = maze_mod.built_in(args.maze)
    svg = render_mod.render_path_svg(steps, maze_spec)
    out_path = Path(args.out) if args.out else trace_path.with_suffix(".svg")
    out_path.write_text(svg)
    print(f"rendered {len(steps)} steps to {out_path}")
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    summary_path = Path(args.summary)
    if not summary_path.exists():
        raise ValueError(f"summary file {summary_path} does not exist")
    for line in harness.recompute_tests(summary_path):
        print(line)
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "train": _cmd_train,
    "render": _cmd_render,
    "stats": _cmd_stats,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(asctime)s %(name)s %(message)s", stream=sys.stderr
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help/--version and 2 for usage errors; fold
        # usage errors into the configuration-error code.
        return 0 if exc.code in (0, None) else 1
    try:
        return _COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())

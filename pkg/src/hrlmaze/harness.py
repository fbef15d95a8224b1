"""Experiment orchestration: configured comparisons, file outputs, statistics.

Four experiments are provided, each over five seeds by default:

* ``exp1`` — option-critic vs. the flat PPO baseline on three mazes
  (both one-room variants and four-rooms), comparing convergence time and
  final greedy path length with pooled two-sample t-tests.
* ``exp2`` — the terminate-every-step ablation vs. learned terminations on
  four-rooms, with t-tests on convergence and path length and a shrink
  degeneration flag when options collapse to single steps.
* ``exp3`` — learned (automatic) sub-goal discovery vs. a manual sub-goal
  controller that walks the doorway route, same two t-tests.
* ``exp4`` — sweep of the termination regularizer φ with per-φ summary rows,
  one-way ANOVA across φ for each metric, learning-curve CSVs, and one
  rendered SVG of the best final path per φ.

Every experiment writes into its output directory: a combined per-episode
log, per-run summaries, per-run final-trace CSVs, rendered SVG paths, the
experiment's results table, and a ``manifest.txt`` echoing the full
configuration.  All CSV output uses deterministic number formatting, so two
runs of the same configuration produce byte-identical files.

Runs are cached when the ``HRLMAZE_RUN_CACHE`` environment variable names a
directory: each run is keyed by a digest of everything that determines its
outcome (agent, maze, hyperparameters, seed, code version), so repeated
experiments that share arms (e.g. the default four-rooms arm appearing in
several comparisons) train only once.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import pickle
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__ as CODE_VERSION
from . import maze as maze_mod
from . import option_critic as oc
from . import ppo as ppo_mod
from . import render
from .maze import MazeSpec, observe
from .stats import (
    EvalPoint,
    RunResult,
    StepRecord,
    TrainSettings,
    anova_one_way,
    t_test_two_sample,
)

log = logging.getLogger(__name__)

Cell = tuple[int, int]

EXPERIMENT_IDS = ("exp1", "exp2", "exp3", "exp4")
DEFAULT_SEEDS = (1, 2, 3, 4, 5)
DEFAULT_PHI_SWEEP = tuple(round(0.01 * i, 2) for i in range(11))
# Doorway route for the manual controller on four-rooms: south door of the
# start room, east door of the lower-right room, then the goal cell.
DEFAULT_SUBGOAL_ROUTE: tuple[Cell, ...] = ((10, 6), (7, 9), (2, 11))

EXPERIMENT_MAZES = {
    "exp1": ("one-room-ten-obs", "one-room-one-obs", "four-rooms"),
    "exp2": ("four-rooms",),
    "exp3": ("four-rooms",),
    "exp4": ("four-rooms",),
}

# Option lengths at or below this mean are flagged as shrink degeneration;
# above the growth bound options effectively never terminate.
SHRINK_OPTION_LENGTH = 1.5
GROWTH_OPTION_LENGTH = 20.0

EPISODE_LOG_HEADER = (
    "run_id,seed,episode,global_step,path_length,success,"
    "avg_option_length,epsilon,agent,phi"
)
TRACE_HEADER = "step,row,col,option,action,reward,terminated"
SUMMARY_HEADER = (
    "run_id,experiment,label,agent,maze,phi,seed,convergence_step,censored,"
    "final_path_length,final_success,mean_option_length,total_env_steps,"
    "config_digest"
)


# -- deterministic formatting ------------------------------------------------------


def fmt(value) -> str:
    """Render one CSV field deterministically.

    None -> empty, bools -> 0/1, floats -> shortest repr that round-trips
    (platform-independent for the value ranges used here), everything else
    via str().
    """
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        value = float(value)  # strip numpy scalar types before repr
        if math.isnan(value):
            return "nan"
        if value == int(value) and abs(value) < 1e15:
            return str(int(value))
        return repr(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path: Path, header: str, rows: list[list]) -> None:
    lines = [header]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


# -- manual sub-goal controller ----------------------------------------------------


@dataclass(frozen=True)
class ManualSubgoalPlan:
    """An ordered list of sub-goal cells, the last being the maze goal.

    Option i is bound to leg i of the route.  ``match_mode`` decides when a
    leg is complete: ``exact-cell`` terminates the option only on the exact
    sub-goal cell; ``cosine`` terminates once the cosine similarity between
    the agent's coordinate observation and the sub-goal's is at least
    ``cosine_threshold``.
    """

    subgoals: tuple[Cell, ...] = DEFAULT_SUBGOAL_ROUTE
    match_mode: str = "exact-cell"
    cosine_threshold: float = 0.999

    def validate(self, spec: MazeSpec, num_options: int) -> None:
        if not self.subgoals:
            raise ValueError("sub-goal plan must name at least one cell")
        if len(self.subgoals) > num_options:
            raise ValueError(
                f"plan has {len(self.subgoals)} legs but only "
                f"{num_options} options exist to bind them to"
            )
        if self.match_mode not in ("exact-cell", "cosine"):
            raise ValueError(f"unknown match mode {self.match_mode!r}")
        if not 0.0 < self.cosine_threshold <= 1.0:
            raise ValueError("cosine threshold must lie in (0, 1]")
        if tuple(self.subgoals[-1]) != tuple(spec.goal):
            raise ValueError("the final sub-goal must be the maze goal")
        for cell in self.subgoals:
            r, c = cell
            if not (0 <= r < spec.height and 0 <= c < spec.width):
                raise ValueError(f"sub-goal {cell} lies outside the maze")
            if spec.is_wall(cell):
                raise ValueError(f"sub-goal {cell} is a wall cell")


def manual_subgoal_controller(
    plan: ManualSubgoalPlan, spec: MazeSpec, cell: Cell, segment: int
) -> tuple[bool, int]:
    """Decision rule for one arrival cell: (terminate-here, next segment).

    Pure function of its inputs.  The active option index equals the segment
    index; a hit on the segment's sub-goal terminates the option and advances
    to the next leg.
    """
    target = plan.subgoals[min(segment, len(plan.subgoals) - 1)]
    if plan.match_mode == "exact-cell":
        hit = tuple(cell) == tuple(target)
    else:
        a = observe(spec, cell, "coords")
        b = observe(spec, target, "coords")
        na = math.hypot(*a)
        nb = math.hypot(*b)
        if na == 0.0 or nb == 0.0:
            # The corner cell (0, 0) has a zero coordinate vector; cosine is
            # undefined there, so fall back to exact matching.
            hit = tuple(cell) == tuple(target)
        else:
            hit = float(a @ b) / (na * nb) >= plan.cosine_threshold
    return hit, segment + 1 if hit else segment


class ManualController(oc.SubgoalController):
    """Stateful wrapper binding a plan to the training loop's protocol."""

    def __init__(self, plan: ManualSubgoalPlan, spec: MazeSpec):
        plan.validate(spec, num_options=len(plan.subgoals))
        self.plan = plan
        self.spec = spec
        self._segment = 0

    def reset(self) -> None:
        self._segment = 0

    @property
    def option(self) -> int:
        return min(self._segment, len(self.plan.subgoals) - 1)

    def observe(self, cell: Cell) -> bool:
        terminate, self._segment = manual_subgoal_controller(
            self.plan, self.spec, cell, self._segment
        )
        return terminate


# -- run descriptions and caching --------------------------------------------------


@dataclass(frozen=True)
class RunSpec:
    """Everything that determines one training run's outcome, plus labels."""

    run_id: str
    experiment: str
    label: str  # variant / arm name within the experiment
    agent: str  # "oc" | "ppo"
    maze: str
    seed: int
    settings: TrainSettings
    oc_params: oc.OptionCriticParams | None = None
    ppo_params: ppo_mod.PPOParams | None = None
    plan: ManualSubgoalPlan | None = None
    obs_mode: str = "one-hot"

    @property
    def phi(self) -> float | None:
        return self.oc_params.termination_reg if self.oc_params else None


def _as_plain(obj) -> object:
    """Dataclass -> sorted plain dict for canonical JSON."""
    if obj is None:
        return None
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def config_digest(spec: RunSpec) -> str:
    """Content hash of the run's outcome-determining configuration.

    Excludes the run id and experiment labels so identical arms shared
    between experiments hash to the same key.
    """
    payload = {
        "agent": spec.agent,
        "maze": spec.maze,
        "obs_mode": spec.obs_mode,
        "seed": spec.seed,
        "settings": _as_plain(spec.settings),
        "oc_params": _as_plain(spec.oc_params),
        "ppo_params": _as_plain(spec.ppo_params),
        "plan": _as_plain(spec.plan),
        "code_version": CODE_VERSION,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _cache_dir() -> Path | None:
    d = os.environ.get("HRLMAZE_RUN_CACHE")
    return Path(d) if d else None


def _cache_load(digest: str) -> RunResult | None:
    d = _cache_dir()
    if d is None:
        return None
    path = d / f"{digest}.pkl"
    if not path.exists():
        return None
    try:
        with path.open("rb") as fh:
            return pickle.load(fh)
    except Exception:  # corrupt entry: retrain rather than fail
        log.warning("discarding unreadable cache entry %s", path)
        return None


def _cache_store(digest: str, result: RunResult) -> None:
    d = _cache_dir()
    if d is None:
        return
    d.mkdir(parents=True, exist_ok=True)
    tmp = d / f"{digest}.pkl.tmp"
    with tmp.open("wb") as fh:
        pickle.dump(result, fh)
    tmp.replace(d / f"{digest}.pkl")


def execute_run(spec: RunSpec) -> RunResult:
    """Train one run (or fetch it from the cache)."""
    digest = config_digest(spec)
    cached = _cache_load(digest)
    if cached is not None:
        log.info("cache hit for %s (%s)", spec.run_id, digest[:12])
        return cached
    maze_spec = maze_mod.built_in(spec.maze)
    log.info("training %s (agent=%s maze=%s seed=%d)", spec.run_id, spec.agent, spec.maze, spec.seed)
    if spec.agent == "oc":
        controller = None
        if spec.plan is not None:
            controller = ManualController(spec.plan, maze_spec)
        result = oc.train_run_oc(
            maze_spec,
            spec.oc_params,
            spec.settings,
            spec.seed,
            controller=controller,
            obs_mode=spec.obs_mode,
        )
    elif spec.agent == "ppo":
        result = ppo_mod.train_run_ppo(
            maze_spec, spec.ppo_params, spec.settings, spec.seed, obs_mode=spec.obs_mode
        )
    else:
        raise ValueError(f"unknown agent {spec.agent!r}")
    _cache_store(digest, result)
    return result


def execute_runs(specs: list[RunSpec]) -> list[tuple[RunSpec, RunResult]]:
    """Run each spec in order; a failed run is recorded censored, not fatal."""
    out: list[tuple[RunSpec, RunResult]] = []
    for spec in specs:
        try:
            out.append((spec, execute_run(spec)))
        except Exception:
            log.exception("run %s failed; recording it as censored", spec.run_id)
            out.append((spec, RunResult()))
    return out


# -- experiment configuration ------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment invocation as assembled by the CLI."""

    experiment: str
    out_dir: str = ""
    mazes: tuple[str, ...] = ()
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    max_env_steps: int | None = None  # None: 500000, or 150000 at desk scale
    desk_scale: bool = False
    paper_widths: bool = False
    phi_sweep: tuple[float, ...] = DEFAULT_PHI_SWEEP
    oc_params: oc.OptionCriticParams = field(default_factory=oc.OptionCriticParams)
    ppo_params: ppo_mod.PPOParams = field(default_factory=ppo_mod.PPOParams)
    subgoal_plan: ManualSubgoalPlan = field(default_factory=ManualSubgoalPlan)

    def validate(self) -> None:
        if self.experiment not in EXPERIMENT_IDS:
            raise ValueError(
                f"unknown experiment {self.experiment!r}; "
                f"expected one of {', '.join(EXPERIMENT_IDS)}"
            )
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if self.max_env_steps is not None and self.max_env_steps < 1:
            raise ValueError("max_env_steps must be positive")
        for name in self.mazes:
            if name not in maze_mod.BUILT_IN_NAMES:
                raise ValueError(f"unknown maze {name!r}")
        if self.experiment == "exp4":
            if not self.phi_sweep:
                raise ValueError("phi sweep must not be empty")
            if any(phi < 0 for phi in self.phi_sweep):
                raise ValueError("phi values must be non-negative")
            if len(set(self.phi_sweep)) != len(self.phi_sweep):
                raise ValueError("phi values must be distinct")

    def resolved_mazes(self) -> tuple[str, ...]:
        return self.mazes or EXPERIMENT_MAZES[self.experiment]

    def resolved_out_dir(self) -> Path:
        return Path(self.out_dir or f"results/{self.experiment}")

    def settings(self) -> TrainSettings:
        steps = self.max_env_steps
        if steps is None:
            steps = 150000 if self.desk_scale else 500000
        return TrainSettings(max_env_steps=steps)

    def oc_arm(self, **overrides) -> oc.OptionCriticParams:
        params = self.oc_params
        if self.desk_scale:
            params = oc.desk_scale(params)
        return replace(params, **overrides) if overrides else params

    def ppo_arm(self) -> ppo_mod.PPOParams:
        params = self.ppo_params
        if self.paper_widths:
            params = ppo_mod.paper_widths(params)
        if self.desk_scale:
            params = ppo_mod.desk_scale(params)
        return params


# -- metric extraction --------------------------------------------------------------


def conv_value(result: RunResult, settings: TrainSettings) -> float:
    """Convergence step for averaging/tests; censored runs count at budget."""
    if result.convergence_step is None:
        return float(settings.max_env_steps)
    return float(result.convergence_step)


def _mean(xs: list[float]) -> float:
    return sum(xs) / len(xs)


def _option_length(result: RunResult) -> float | None:
    return result.mean_option_length


# -- file outputs -------------------------------------------------------------------


def write_episode_log(path: Path, runs: list[tuple[RunSpec, RunResult]]) -> None:
    rows: list[list] = []
    for spec, result in runs:
        for ep in result.episodes:
            rows.append(
                [
                    spec.run_id,
                    spec.seed,
                    ep.episode,
                    ep.global_step,
                    ep.path_length,
                    ep.success,
                    ep.avg_option_length,
                    ep.epsilon,
                    spec.agent,
                    spec.phi,
                ]
            )
    write_csv(path, EPISODE_LOG_HEADER, rows)


def write_trace_csv(path: Path, steps: list[StepRecord]) -> None:
    rows = [
        [i, s.row, s.col, s.option, s.action, s.reward, s.terminated]
        for i, s in enumerate(steps)
    ]
    write_csv(path, TRACE_HEADER, rows)


def read_trace_csv(path: Path) -> list[StepRecord]:
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        steps = []
        for row in reader:
            steps.append(
                StepRecord(
                    row=int(row["row"]),
                    col=int(row["col"]),
                    option=int(row["option"]) if row["option"] != "" else None,
                    action=int(row["action"]),
                    reward=float(row["reward"]),
                    terminated=row["terminated"] == "1",
                )
            )
    return steps


def write_run_summaries(path: Path, runs: list[tuple[RunSpec, RunResult]]) -> None:
    rows: list[list] = []
    for spec, result in runs:
        rows.append(
            [
                spec.run_id,
                spec.experiment,
                spec.label,
                spec.agent,
                spec.maze,
                spec.phi,
                spec.seed,
                result.convergence_step,
                result.convergence_step is None,
                result.final_path_length,
                result.final_path_success,
                result.mean_option_length,
                result.total_env_steps,
                config_digest(spec),
            ]
        )
    write_csv(path, SUMMARY_HEADER, rows)


def write_manifest(path: Path, config: ExperimentConfig, n_runs: int) -> None:
    entries: dict[str, object] = {
        "code_version": CODE_VERSION,
        "experiment": config.experiment,
        "mazes": ";".join(config.resolved_mazes()),
        "seeds": ";".join(str(s) for s in config.seeds),
        "max_env_steps": config.settings().max_env_steps,
        "desk_scale": config.desk_scale,
        "paper_widths": config.paper_widths,
        "run_count": n_runs,
        "obs_mode": "one-hot",
    }
    if config.experiment == "exp4":
        entries["phi_sweep"] = ";".join(fmt(p) for p in config.phi_sweep)
    if config.experiment == "exp3":
        plan = config.subgoal_plan
        entries["subgoal_route"] = ";".join(f"{r}-{c}" for r, c in plan.subgoals)
        entries["subgoal_match_mode"] = plan.match_mode
        entries["subgoal_cosine_threshold"] = plan.cosine_threshold
    oc_arm = config.oc_arm()
    for f in fields(oc_arm):
        entries[f"oc.{f.name}"] = getattr(oc_arm, f.name)
    ppo_arm = config.ppo_arm()
    for f in fields(ppo_arm):
        entries[f"ppo.{f.name}"] = getattr(ppo_arm, f.name)
    settings = config.settings()
    for f in fields(settings):
        entries[f"settings.{f.name}"] = getattr(settings, f.name)
    lines = []
    for key in sorted(entries):
        value = entries[key]
        if isinstance(value, tuple):
            value = ";".join(fmt(v) for v in value)
        lines.append(f"{key}={fmt(value)}")
    path.write_text("\n".join(lines) + "\n")


def _render_best_trace(
    runs: list[tuple[RunSpec, RunResult]], out_path: Path
) -> None:
    """Render the shortest successful final trace (or shortest overall)."""
    candidates = [(s, r) for s, r in runs if r.final_trace and r.final_trace.steps]
    if not candidates:
        return
    successful = [(s, r) for s, r in candidates if r.final_path_success]
    pool = successful or candidates
    spec, result = min(pool, key=lambda sr: sr[1].final_path_length)
    maze_spec = maze_mod.built_in(spec.maze)
    out_path.write_text(render.render_path_svg(result.final_trace.steps, maze_spec))


def _write_traces(
    out_dir: Path, runs: list[tuple[RunSpec, RunResult]]
) -> None:
    traces = out_dir / "traces"
    traces.mkdir(parents=True, exist_ok=True)
    for spec, result in runs:
        if result.final_trace and result.final_trace.steps:
            write_trace_csv(traces / f"{spec.run_id}.csv", result.final_trace.steps)


def _write_common(
    config: ExperimentConfig, runs: list[tuple[RunSpec, RunResult]]
) -> Path:
    out_dir = config.resolved_out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    write_episode_log(out_dir / "episode_logs.csv", runs)
    write_run_summaries(out_dir / "run_summaries.csv", runs)
    write_manifest(out_dir / "manifest.txt", config, len(runs))
    _write_traces(out_dir, runs)
    return out_dir


# -- experiment 1: agents across mazes ----------------------------------------------


def run_experiment_1(config: ExperimentConfig) -> dict:
    """Option-critic vs. PPO on each configured maze."""
    config.validate()
    settings = config.settings()
    specs: list[RunSpec] = []
    for maze_name in config.resolved_mazes():
        for agent in ("oc", "ppo"):
            for seed in config.seeds:
                specs.append(
                    RunSpec(
                        run_id=f"exp1-{maze_name}-{agent}-s{seed}",
                        experiment="exp1",
                        label=agent,
                        agent=agent,
                        maze=maze_name,
                        seed=seed,
                        settings=settings,
                        oc_params=config.oc_arm() if agent == "oc" else None,
                        ppo_params=config.ppo_arm() if agent == "ppo" else None,
                    )
                )
    runs = execute_runs(specs)
    out_dir = _write_common(config, runs)

    rows: list[list] = []
    report_rows: list[dict] = []
    for maze_name in config.resolved_mazes():
        by_agent: dict[str, list[tuple[RunSpec, RunResult]]] = {"oc": [], "ppo": []}
        for spec, result in runs:
            if spec.maze == maze_name:
                by_agent[spec.agent].append((spec, result))
        oc_conv = [conv_value(r, settings) for _, r in by_agent["oc"]]
        ppo_conv = [conv_value(r, settings) for _, r in by_agent["ppo"]]
        oc_path = [float(r.final_path_length) for _, r in by_agent["oc"]]
        ppo_path = [float(r.final_path_length) for _, r in by_agent["ppo"]]
        t_conv, p_conv = t_test_two_sample(oc_conv, ppo_conv)
        row = {
            "maze": maze_name,
            "oc_conv_mean": _mean(oc_conv),
            "ppo_conv_mean": _mean(ppo_conv),
            "t_conv": t_conv,
            "p_conv": p_conv,
            "oc_path_mean": _mean(oc_path),
            "ppo_path_mean": _mean(ppo_path),
        }
        report_rows.append(row)
        rows.append(list(row.values()))
        for agent in ("oc", "ppo"):
            _render_best_trace(
                by_agent[agent], out_dir / f"exp1_{maze_name}_{agent}.svg"
            )
    write_csv(
        out_dir / "exp1_results.csv",
        "maze,oc_conv_mean,ppo_conv_mean,t_conv,p_conv,oc_path_mean,ppo_path_mean",
        rows,
    )
    return {"rows": report_rows, "out_dir": out_dir, "runs": runs}


# -- shared two-variant comparison (experiments 2 and 3) -----------------------------


def _two_variant_experiment(
    config: ExperimentConfig,
    variants: list[tuple[str, dict, ManualSubgoalPlan | None]],
    results_name: str,
) -> dict:
    """Run two OC variants on one maze and t-test convergence and path."""
    settings = config.settings()
    maze_name = config.resolved_mazes()[0]
    specs: list[RunSpec] = []
    for label, overrides, plan in variants:
        for seed in config.seeds:
            specs.append(
                RunSpec(
                    run_id=f"{config.experiment}-{label}-{maze_name}-oc-s{seed}",
                    experiment=config.experiment,
                    label=label,
                    agent="oc",
                    maze=maze_name,
                    seed=seed,
                    settings=settings,
                    oc_params=config.oc_arm(**overrides),
                    plan=plan,
                )
            )
    runs = execute_runs(specs)
    out_dir = _write_common(config, runs)

    by_label: dict[str, list[tuple[RunSpec, RunResult]]] = {}
    for spec, result in runs:
        by_label.setdefault(spec.label, []).append((spec, result))

    rows: list[list] = []
    report_rows: list[dict] = []
    metric_sets: dict[str, dict[str, list[float]]] = {"conv": {}, "path": {}}
    for label, _, _ in variants:
        group = by_label[label]
        convs = [conv_value(r, settings) for _, r in group]
        paths = [float(r.final_path_length) for _, r in group]
        optlens = [v for v in (_option_length(r) for _, r in group) if v is not None]
        optlen_mean = _mean(optlens) if optlens else None
        shrink = optlen_mean is not None and optlen_mean <= SHRINK_OPTION_LENGTH
        row = {
            "variant": label,
            "conv_mean": _mean(convs),
            "path_mean": _mean(paths),
            "option_length_mean": optlen_mean,
            "shrink_degeneration": shrink,
            "t_stat": None,
            "p_value": None,
        }
        report_rows.append(row)
        rows.append(list(row.values()))
        metric_sets["conv"][label] = convs
        metric_sets["path"][label] = paths
        _render_best_trace(group, out_dir / f"{config.experiment}_{label}.svg")

    label_a, label_b = (variants[0][0], variants[1][0])
    tests: dict[str, tuple[float, float]] = {}
    for metric, name in (("conv", "t_test_convergence"), ("path", "t_test_path")):
        t_stat, p_value = t_test_two_sample(
            metric_sets[metric][label_a], metric_sets[metric][label_b]
        )
        tests[metric] = (t_stat, p_value)
        rows.append([name, None, None, None, None, t_stat, p_value])
    write_csv(
        out_dir / results_name,
        "variant,conv_mean,path_mean,option_length_mean,shrink_degeneration,"
        "t_stat,p_value",
        rows,
    )
    return {
        "rows": report_rows,
        "tests": tests,
        "out_dir": out_dir,
        "runs": runs,
    }


def run_experiment_2(config: ExperimentConfig) -> dict:
    """Learned terminations vs. the terminate-every-step ablation."""
    config.validate()
    variants = [
        ("default", {}, None),
        ("terminate-every-step", {"terminate_every_step": True}, None),
    ]
    return _two_variant_experiment(config, variants, "exp2_results.csv")


def run_experiment_3(config: ExperimentConfig) -> dict:
    """Automatic sub-goal discovery vs. the manual doorway-route controller."""
    config.validate()
    maze_spec = maze_mod.built_in(config.resolved_mazes()[0])
    config.subgoal_plan.validate(maze_spec, config.oc_arm().num_options)
    variants = [
        ("automatic", {}, None),
        ("manual", {}, config.subgoal_plan),
    ]
    return _two_variant_experiment(config, variants, "exp3_results.csv")


# -- experiment 4: termination-regularizer sweep ------------------------------------


def run_experiment_4(config: ExperimentConfig) -> dict:
    """Sweep φ; summarize per φ and ANOVA each metric across φ groups."""
    config.validate()
    settings = config.settings()
    maze_name = config.resolved_mazes()[0]
    specs: list[RunSpec] = []
    for phi in config.phi_sweep:
        for seed in config.seeds:
            specs.append(
                RunSpec(
                    run_id=f"exp4-phi{fmt(phi)}-{maze_name}-oc-s{seed}",
                    experiment="exp4",
                    label=f"phi={fmt(phi)}",
                    agent="oc",
                    maze=maze_name,
                    seed=seed,
                    settings=settings,
                    oc_params=config.oc_arm(termination_reg=phi),
                )
            )
    runs = execute_runs(specs)
    out_dir = _write_common(config, runs)

    by_phi: dict[float, list[tuple[RunSpec, RunResult]]] = {}
    for spec, result in runs:
        by_phi.setdefault(spec.phi, []).append((spec, result))

    rows: list[list] = []
    report_rows: list[dict] = []
    conv_groups: list[list[float]] = []
    optlen_groups: list[list[float]] = []
    path_groups: list[list[float]] = []
    for phi in config.phi_sweep:
        group = by_phi[phi]
        convs = [conv_value(r, settings) for _, r in group]
        paths = [float(r.final_path_length) for _, r in group]
        optlens = [v for v in (_option_length(r) for _, r in group) if v is not None]
        optlen_mean = _mean(optlens) if optlens else None
        degeneration = ""
        if optlen_mean is not None:
            if optlen_mean > GROWTH_OPTION_LENGTH:
                degeneration = "growth"
            elif optlen_mean <= SHRINK_OPTION_LENGTH:
                degeneration = "shrink"
        successful = [
            r.final_path_length for _, r in group if r.final_path_success
        ]
        shortest = min(successful) if successful else min(paths)
        row = {
            "phi": phi,
            "conv_mean": _mean(convs),
            "option_length_mean": optlen_mean,
            "shortest_path": shortest,
            "degeneration": degeneration,
            "f_stat": None,
            "p_value": None,
        }
        report_rows.append(row)
        rows.append(list(row.values()))
        conv_groups.append(convs)
        optlen_groups.append(optlens)
        path_groups.append(paths)
        _render_best_trace(group, out_dir / f"exp4_phi{fmt(phi)}.svg")

    anovas: dict[str, tuple[float, float]] = {}
    if len(config.phi_sweep) >= 2:
        tables = [
            ("anova_convergence", conv_groups),
            ("anova_path", path_groups),
        ]
        if all(len(g) >= 2 for g in optlen_groups):
            tables.insert(1, ("anova_option_length", optlen_groups))
        else:
            log.warning(
                "skipping option-length ANOVA: some phi groups have fewer "
                "than two measured runs"
            )
        for name, groups in tables:
            f_stat, p_value = anova_one_way(groups)
            anovas[name] = (f_stat, p_value)
            rows.append([name, None, None, None, None, f_stat, p_value])
    write_csv(
        out_dir / "exp4_results.csv",
        "phi,conv_mean,option_length_mean,shortest_path,degeneration,f_stat,p_value",
        rows,
    )

    curve_opt: list[list] = []
    curve_path: list[list] = []
    for spec, result in runs:
        for ep in result.episodes:
            if ep.avg_option_length is not None:
                curve_opt.append(
                    [spec.phi, spec.seed, ep.global_step, ep.avg_option_length]
                )
        for point in result.evals:
            curve_path.append(
                [spec.phi, spec.seed, point.global_step, point.path_length]
            )
    write_csv(out_dir / "curves_option_length.csv", "phi,seed,global_step,value", curve_opt)
    write_csv(out_dir / "curves_path_length.csv", "phi,seed,global_step,value", curve_path)

    return {"rows": report_rows, "anovas": anovas, "out_dir": out_dir, "runs": runs}


EXPERIMENT_RUNNERS = {
    "exp1": run_experiment_1,
    "exp2": run_experiment_2,
    "exp3": run_experiment_3,
    "exp4": run_experiment_4,
}


def run_experiment(config: ExperimentConfig) -> dict:
    config.validate()
    return EXPERIMENT_RUNNERS[config.experiment](config)


# -- statistics over saved summaries ------------------------------------------------


def recompute_tests(summary_csv: Path) -> list[str]:
    """Re-derive the significance tests from a saved run_summaries.csv.

    Groups rows by (maze, label); two groups per maze get a pooled t-test on
    convergence and path, more get one-way ANOVA.  Returns printable lines.
    """
    with summary_csv.open(newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        raise ValueError(f"{summary_csv} contains no runs")
    by_maze: dict[str, dict[str, list[dict]]] = {}
    for row in rows:
        by_maze.setdefault(row["maze"], {}).setdefault(row["label"], []).append(row)

    def _conv(row: dict) -> float:
        if row["convergence_step"] == "":
            return float(row["total_env_steps"])
        return float(row["convergence_step"])

    lines: list[str] = []
    for maze_name in sorted(by_maze):
        groups = by_maze[maze_name]
        labels = sorted(groups)
        conv = {lbl: [_conv(r) for r in groups[lbl]] for lbl in labels}
        path = {
            lbl: [float(r["final_path_length"]) for r in groups[lbl]]
            for lbl in labels
        }
        if len(labels) == 2:
            a, b = labels
            t_c, p_c = t_test_two_sample(conv[a], conv[b])
            t_p, p_p = t_test_two_sample(path[a], path[b])
            lines.append(
                f"{maze_name}: t-test({a} vs {b}) convergence t={t_c:.4f} "
                f"p={p_c:.6f}; path t={t_p:.4f} p={p_p:.6f}"
            )
        elif len(labels) > 2:
            f_c, p_c = anova_one_way([conv[lbl] for lbl in labels])
            f_p, p_p = anova_one_way([path[lbl] for lbl in labels])
            lines.append(
                f"{maze_name}: ANOVA over {len(labels)} groups convergence "
                f"F={f_c:.4f} p={p_c:.6f}; path F={f_p:.4f} p={p_p:.6f}"
            )
        else:
            lines.append(f"{maze_name}: single group, nothing to compare")
    return lines

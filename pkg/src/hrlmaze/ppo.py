"""Flat PPO baseline: clipped surrogate over a single softmax policy.

The network is a deep ReLU stack (four hidden layers) with a softmax policy
head and a scalar value head, deliberately much larger than the option
critic so the comparison is not capacity-bound. Returns are discounted
rewards-to-go; truncated rollout tails bootstrap through the value head;
advantages are return minus value, normalized per rollout. Updates run a
fixed number of epochs of shuffled minibatches per rollout, each taking one
ascent step on

    mean[ min(r * A, clip(r, 1-eps, 1+eps) * A)
          - value_coef * (V - G)^2 + entropy_coef * H(pi) ].

Exploration mirrors the option agent: with linearly decaying probability
epsilon the action is uniform random, but the stored log-probability is
always the policy's own, so the importance ratio stays well-defined.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .maze import NUM_ACTIONS, MazeEnv, MazeSpec
from .option_critic import epsilon_at, _sample_from
from .stats import (
    EpisodeRow,
    EpisodeTrace,
    EvalPoint,
    RunResult,
    StepRecord,
    TrainSettings,
    detect_convergence,
)

_LOG_FLOOR = 1e-12

DESK_HIDDEN = (128, 256, 256, 128)
PAPER_HIDDEN = (256, 512, 512, 256)


@dataclass(frozen=True)
class PPOParams:
    hidden_widths: tuple[int, ...] = DESK_HIDDEN
    learning_rate: float = 0.0005
    discount: float = 0.99
    clip_epsilon: float = 0.2
    rollout_steps: int = 1024
    update_epochs: int = 4
    minibatch_size: int = 32
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    epsilon_decay_steps: int = 50000
    horizon: int = 1000

    def __post_init__(self) -> None:
        assert 0.0 < self.clip_epsilon < 1.0
        assert self.rollout_steps >= 1
        assert self.minibatch_size >= 1
        assert self.update_epochs >= 0


def network_spec(obs_dim: int, params: PPOParams) -> nn.NetworkSpec:
    return nn.NetworkSpec(
        input_dim=obs_dim,
        hidden=params.hidden_widths,
        heads=(
            nn.HeadSpec("policy", NUM_ACTIONS, "softmax"),
            nn.HeadSpec("value", 1, "linear"),
        ),
    )


class PPOModel:
    def __init__(self, obs_dim: int, params: PPOParams, rng: np.random.Generator):
        self.params = params
        self.net = nn.Network(network_spec(obs_dim, params), rng)


def desk_scale(params: PPOParams) -> PPOParams:
    return replace(params, epsilon_decay_steps=15000)


def paper_widths(params: PPOParams) -> PPOParams:
    return replace(params, hidden_widths=PAPER_HIDDEN)


# -- rollouts --------------------------------------------------------------------


@dataclass
class RolloutBatch:
    obs: np.ndarray          # (N, obs_dim)
    actions: np.ndarray      # (N,) int
    rewards: np.ndarray      # (N,)
    dones: np.ndarray        # (N,) bool
    values: np.ndarray       # (N,) V(s_t) at collection time
    log_probs: np.ndarray    # (N,) log pi(a_t | s_t), the policy's own
    bootstrap_value: float   # V of the state after the last step (0 if done)


@dataclass
class _EpisodeCursor:
    """Episode bookkeeping that survives across rollout boundaries."""

    env: MazeEnv
    obs: np.ndarray = field(init=False)
    cell: tuple[int, int] = field(init=False)
    steps: list[StepRecord] = field(default_factory=list)
    episodes_completed: int = 0

    def __post_init__(self) -> None:
        self.cell = self.env.reset()
        self.obs = self.env.observe()


def collect_rollout(
    model: PPOModel,
    cursor: _EpisodeCursor,
    params: PPOParams,
    rng: np.random.Generator,
    global_step: int,
) -> tuple[RolloutBatch, list[EpisodeTrace], int]:
    """Gather rollout_steps transitions, resetting the env at terminals.

    Returns the batch, the episodes completed inside it, and the advanced
    global step count. A rollout may end mid-episode; the tail is bootstrapped
    later from the value head.
    """
    n = params.rollout_steps
    d = cursor.env.obs_dim
    obs_buf = np.empty((n, d))
    actions = np.empty(n, dtype=np.int64)
    rewards = np.empty(n)
    dones = np.empty(n, dtype=bool)
    values = np.empty(n)
    log_probs = np.empty(n)
    finished: list[EpisodeTrace] = []

    for i in range(n):
        outputs, _ = model.net.forward(cursor.obs)
        probs = outputs["policy"]
        eps = epsilon_at(global_step, params.epsilon_decay_steps)
        if rng.random() < eps:
            action = int(rng.integers(NUM_ACTIONS))
        else:
            action = _sample_from(probs, rng)
        obs_buf[i] = cursor.obs
        actions[i] = action
        values[i] = float(outputs["value"][0])
        log_probs[i] = float(np.log(max(probs[action], _LOG_FLOOR)))

        cell = cursor.cell
        next_cell, reward, done = cursor.env.step(action)
        rewards[i] = reward
        dones[i] = done
        cursor.steps.append(StepRecord(cell[0], cell[1], None, action, reward, False))
        global_step += 1
        if done:
            cursor.episodes_completed += 1
            finished.append(
                EpisodeTrace(
                    steps=cursor.steps,
                    success=cursor.env.reached_goal,
                    episode=cursor.episodes_completed,
                    end_global_step=global_step,
                )
            )
            cursor.cell = cursor.env.reset()
            cursor.obs = cursor.env.observe()
            cursor.steps = []
        else:
            cursor.cell = next_cell
            cursor.obs = cursor.env.observe()

    if dones[-1]:
        bootstrap = 0.0
    else:
        tail_out, _ = model.net.forward(cursor.obs)
        bootstrap = float(tail_out["value"][0])
    batch = RolloutBatch(obs_buf, actions, rewards, dones, values, log_probs, bootstrap)
    return batch, finished, global_step


def compute_returns_and_advantages(
    batch: RolloutBatch, gamma: float
) -> tuple[np.ndarray, np.ndarray]:
    """Discounted returns-to-go and normalized advantages.

    Returns reset across episode boundaries; an unfinished tail bootstraps
    from the recorded value of the following state. Advantages are
    (return - value), shifted to mean 0 and scaled to unit standard
    deviation except for single-step batches.
    """
    n = len(batch.rewards)
    returns = np.empty(n)
    g = batch.bootstrap_value
    for t in range(n - 1, -1, -1):
        if batch.dones[t]:
            g = 0.0
        g = batch.rewards[t] + gamma * g
        returns[t] = g
    advantages = returns - batch.values
    if n > 1:
        std = float(advantages.std())
        advantages = (advantages - advantages.mean()) / max(std, 1e-8)
    return returns, advantages


# -- updates ---------------------------------------------------------------------


def clipped_surrogate(ratio: float, advantage: float, clip_epsilon: float) -> float:
    """min(r * A, clip(r, 1-eps, 1+eps) * A), elementwise for arrays."""
    r = np.asarray(ratio, dtype=np.float64)
    a = np.asarray(advantage, dtype=np.float64)
    clipped = np.clip(r, 1.0 - clip_epsilon, 1.0 + clip_epsilon)
    out = np.minimum(r * a, clipped * a)
    return float(out) if out.ndim == 0 else out


def ppo_update(
    model: PPOModel,
    batch: RolloutBatch,
    returns: np.ndarray,
    advantages: np.ndarray,
    params: PPOParams,
    rng: np.random.Generator,
) -> dict[str, float]:
    """Epochs of shuffled minibatches, one combined ascent step each.

    Returns summary statistics of the last epoch for logging.
    """
    n = len(batch.actions)
    old_probs = np.exp(batch.log_probs)
    stats = {"surrogate": 0.0, "value_loss": 0.0, "entropy": 0.0}
    for _ in range(params.update_epochs):
        perm = rng.permutation(n)
        stats = {"surrogate": 0.0, "value_loss": 0.0, "entropy": 0.0}
        for start in range(0, n, params.minibatch_size):
            idx = perm[start : start + params.minibatch_size]
            b = len(idx)
            outputs, cache = model.net.forward(batch.obs[idx])
            probs = outputs["policy"]
            values = outputs["value"][:, 0]
            acts = batch.actions[idx]
            adv = advantages[idx]
            rows = np.arange(b)

            taken = probs[rows, acts]
            ratio = taken / old_probs[idx]
            unclipped = ratio * adv
            clipped = np.clip(ratio, 1.0 - params.clip_epsilon, 1.0 + params.clip_epsilon) * adv
            # d surrogate / d ratio: A on the unclipped branch, 0 once the
            # clip saturates (the min picks the constant branch there)
            grad_ratio = np.where(unclipped <= clipped, adv, 0.0)

            logp = np.log(np.maximum(probs, _LOG_FLOOR))
            entropy = -(probs * logp).sum(axis=1)

            gout_pi = -params.entropy_coef * (logp + 1.0) / b
            gout_pi[rows, acts] += grad_ratio / old_probs[idx] / b
            verr = values - returns[idx]
            gout_v = (-2.0 * params.value_coef * verr / b)[:, None]

            grads = model.net.backward_multi(cache, {"policy": gout_pi, "value": gout_v})
            model.net.apply_gradients(grads, params.learning_rate, "ascent")

            stats["surrogate"] += float(np.minimum(unclipped, clipped).sum()) / n
            stats["value_loss"] += float((verr**2).sum()) / n
            stats["entropy"] += float(entropy.sum()) / n
    return stats


# -- evaluation and full runs -------------------------------------------------------


def greedy_evaluate_ppo(env: MazeEnv, model: PPOModel) -> tuple[int, bool, list[StepRecord]]:
    """Deterministic argmax rollout; returns (path length, success, steps)."""
    cell = env.reset()
    obs = env.observe()
    steps: list[StepRecord] = []
    done = False
    while not done:
        outputs, _ = model.net.forward(obs)
        action = int(np.argmax(outputs["policy"]))
        next_cell, reward, done = env.step(action)
        steps.append(StepRecord(cell[0], cell[1], None, action, reward, False))
        cell = next_cell
        obs = env.observe()
    return len(steps), env.reached_goal, steps


def train_run_ppo(
    maze_spec: MazeSpec,
    params: PPOParams,
    settings: TrainSettings,
    seed: int,
    obs_mode: str = "one-hot",
) -> RunResult:
    """Full PPO training run with the same evaluation cadence and logging
    schema as the option agent (option fields are absent from its rows).

    Greedy evaluations happen at the first rollout boundary after every
    ``eval_interval_episodes`` completed episodes.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    env = MazeEnv(maze_spec, horizon=params.horizon, obs_mode=obs_mode)
    model = PPOModel(env.obs_dim, params, rng)
    cursor = _EpisodeCursor(env)
    eval_env = MazeEnv(maze_spec, horizon=params.horizon, obs_mode=obs_mode)

    result = RunResult()
    global_step = 0
    last_eval_episode = 0
    while global_step < settings.max_env_steps and result.convergence_step is None:
        batch, finished, global_step = collect_rollout(model, cursor, params, rng, global_step)
        returns, advantages = compute_returns_and_advantages(batch, params.discount)
        ppo_update(model, batch, returns, advantages, params, rng)
        for trace in finished:
            result.episodes.append(
                EpisodeRow(
                    episode=trace.episode,
                    global_step=trace.end_global_step,
                    path_length=len(trace.steps),
                    success=trace.success,
                    avg_option_length=None,
                    epsilon=epsilon_at(trace.end_global_step, params.epsilon_decay_steps),
                )
            )
        if cursor.episodes_completed - last_eval_episode >= settings.eval_interval_episodes:
            last_eval_episode = cursor.episodes_completed
            plen, success, _ = greedy_evaluate_ppo(eval_env, model)
            result.evals.append(EvalPoint(global_step, plen, success))
            result.convergence_step = detect_convergence(
                result.evals, settings.convergence_window, settings.convergence_slack
            )
    plen, success, steps = greedy_evaluate_ppo(eval_env, model)
    result.final_path_length = plen
    result.final_path_success = success
    result.final_trace = EpisodeTrace(steps, success, cursor.episodes_completed + 1, global_step)
    result.mean_option_length = None
    result.total_env_steps = global_step
    return result

"""Option-critic agent: intra-option policies, termination head, option critic.

One shared ReLU trunk feeds three heads:

* ``q_u``   -- linear, num_options * num_actions values Q_U(s, w, a)
* ``beta``  -- sigmoid, per-option termination probabilities
* ``pi``    -- linear logits, softmax per option row at a temperature

Option values come from marginalizing the critic over the intra-option
policy, Q_Omega(s, w) = sum_a pi_w(a|s) Q_U(s, w, a). Critic regression
targets bootstrap through a frozen copy of the trunk and critic head that
is refreshed every ``freeze_interval`` critic updates; the policy and
termination probabilities in the target always come from the live network.

Per step the agent takes one stochastic-gradient step on each actor head:
ascent on log pi_w(a|s) * Q_U(s, w, a) plus an entropy bonus for the
intra-option policy, and descent on beta_w(s') * (advantage + phi) for the
termination head, where phi > 0 deliberately discourages termination.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from . import nn
from .maze import NUM_ACTIONS, MazeEnv
from .stats import (
    EpisodeRow,
    EpisodeTrace,
    EvalPoint,
    RunResult,
    StepRecord,
    TrainSettings,
    average_option_length,
    detect_convergence,
    path_length,
)

log = logging.getLogger(__name__)

_LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class OptionCriticParams:
    """Agent hyperparameters. Defaults follow the reference configuration."""

    num_options: int = 4
    learning_rate: float = 0.0005
    discount: float = 0.99
    termination_reg: float = 0.01   # phi
    entropy_reg: float = 0.01
    update_frequency: int = 4       # env steps between critic updates
    freeze_interval: int = 200      # critic updates between target syncs
    horizon: int = 1000
    buffer_capacity: int = 10000
    batch_size: int = 32
    epsilon_decay_steps: int = 50000
    temperature: float = 1.0
    trunk_widths: tuple[int, ...] = (32, 64)
    terminate_every_step: bool = False
    # Optional per-head learning rates; None means use learning_rate.
    critic_lr: float | None = None
    policy_lr: float | None = None
    termination_lr: float | None = None

    def __post_init__(self) -> None:
        assert self.num_options >= 1
        assert 0.0 < self.discount <= 1.0
        assert self.update_frequency >= 1
        assert self.freeze_interval >= 1
        assert self.batch_size >= 1
        assert self.temperature > 0.0

    def head_lr(self, head: str) -> float:
        override = {"q_u": self.critic_lr, "pi": self.policy_lr, "beta": self.termination_lr}[head]
        return self.learning_rate if override is None else override


def network_spec(obs_dim: int, params: OptionCriticParams) -> nn.NetworkSpec:
    """The agent's architecture for a given observation width."""
    oa = params.num_options * NUM_ACTIONS
    return nn.NetworkSpec(
        input_dim=obs_dim,
        hidden=params.trunk_widths,
        heads=(
            nn.HeadSpec("q_u", oa, "linear"),
            nn.HeadSpec("beta", params.num_options, "sigmoid"),
            nn.HeadSpec("pi", oa, "linear"),
        ),
    )


class OptionCriticModel:
    """Live network plus the frozen target copy of trunk and critic head."""

    def __init__(self, obs_dim: int, params: OptionCriticParams, rng: np.random.Generator):
        self.params = params
        self.num_options = params.num_options
        self.num_actions = NUM_ACTIONS
        self.net = nn.Network(network_spec(obs_dim, params), rng)
        self.target = self.net.copy()

    def q_u(self, outputs: dict[str, np.ndarray]) -> np.ndarray:
        return outputs["q_u"].reshape(self.num_options, self.num_actions)

    def policy(self, outputs: dict[str, np.ndarray]) -> np.ndarray:
        """Per-option action distributions, shape (options, actions)."""
        logits = outputs["pi"].reshape(self.num_options, self.num_actions)
        return nn.softmax(logits, self.params.temperature)

    def sync_target(self) -> None:
        """Copy live trunk and critic-head parameters into the target."""
        state = self.net.state()
        partial = {
            name: state[name]
            for name in state
            if name.startswith("trunk") or name == "head:q_u"
        }
        full = self.target.state()
        full.update(partial)
        self.target.load_state(full)


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    option: int
    action: int
    reward: float
    next_obs: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity FIFO of transitions with uniform sampling."""

    def __init__(self, capacity: int):
        self._items: deque[Transition] = deque(maxlen=capacity)

    def add(self, item: Transition) -> None:
        self._items.append(item)

    def sample(self, rng: np.random.Generator, batch_size: int) -> list[Transition]:
        # Uniform with replacement; keeps sampling cost independent of size.
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]

    def __len__(self) -> int:
        return len(self._items)


# -- policy over options ---------------------------------------------------------


def epsilon_at(global_step: int, decay_steps: int) -> float:
    """Linear decay from 1 to 0 over decay_steps env steps."""
    if decay_steps <= 0:
        return 0.0
    return max(0.0, 1.0 - global_step / decay_steps)


def q_omega_from(q_u: np.ndarray, policy: np.ndarray) -> np.ndarray:
    """Q_Omega(s, .) = sum_a pi(a|s, .) * Q_U(s, ., a)."""
    return (policy * q_u).sum(axis=1)


def q_omega(model: OptionCriticModel, obs: np.ndarray) -> np.ndarray:
    outputs, _ = model.net.forward(obs)
    return q_omega_from(model.q_u(outputs), model.policy(outputs))


def q_omega_target(model: OptionCriticModel, obs: np.ndarray) -> np.ndarray:
    """Option values through the frozen critic but the live policy."""
    target_out, _ = model.target.forward(obs)
    live_out, _ = model.net.forward(obs)
    return q_omega_from(model.q_u(target_out), model.policy(live_out))


def select_option(
    model: OptionCriticModel, obs: np.ndarray, epsilon: float, rng: np.random.Generator
) -> int:
    """Epsilon-greedy over Q_Omega; greedy ties go to the lowest index."""
    if rng.random() < epsilon:
        return int(rng.integers(model.num_options))
    return int(np.argmax(q_omega(model, obs)))


def _sample_from(probs: np.ndarray, rng: np.random.Generator) -> int:
    u = rng.random()
    cum = np.cumsum(probs)
    return int(min(np.searchsorted(cum, u, side="right"), len(probs) - 1))


def select_action(
    model: OptionCriticModel,
    outputs: dict[str, np.ndarray],
    option: int,
    rng: np.random.Generator,
) -> int:
    """Sample an action from the option's softmax policy."""
    return _sample_from(model.policy(outputs)[option], rng)


def should_terminate(
    model: OptionCriticModel,
    next_obs: np.ndarray,
    option: int,
    rng: np.random.Generator,
    terminate_every_step: bool = False,
) -> bool:
    """Bernoulli draw on beta_w(s'); the ablation flag forces True."""
    if terminate_every_step:
        return True
    outputs, _ = model.net.forward(next_obs)
    return bool(rng.random() < outputs["beta"][option])


# -- learning updates --------------------------------------------------------------


def critic_target(model: OptionCriticModel, transition: Transition, gamma: float) -> float:
    """Bootstrapped regression target for Q_U(s, w, a).

    g = r for terminal transitions, otherwise
    g = r + gamma * ((1 - beta_w(s')) * Q_Omega^target(s', w)
                     + beta_w(s') * max_w' Q_Omega^target(s', w')).
    """
    if transition.done:
        return transition.reward
    live_out, _ = model.net.forward(transition.next_obs)
    target_out, _ = model.target.forward(transition.next_obs)
    q_next = q_omega_from(model.q_u(target_out), model.policy(live_out))
    beta = float(live_out["beta"][transition.option])
    cont = (1.0 - beta) * q_next[transition.option] + beta * q_next.max()
    return transition.reward + gamma * float(cont)


def update_critic(
    model: OptionCriticModel,
    buffer: ReplayBuffer,
    params: OptionCriticParams,
    rng: np.random.Generator,
) -> float | None:
    """One batched MSE step of Q_U toward bootstrapped targets.

    Returns the pre-step loss, or None (skip) while the buffer holds fewer
    than batch_size transitions.
    """
    if len(buffer) < params.batch_size:
        log.debug("critic update skipped: buffer %d < batch %d", len(buffer), params.batch_size)
        return None
    batch = buffer.sample(rng, params.batch_size)
    b = len(batch)
    o, a = model.num_options, model.num_actions

    obs = np.stack([t.obs for t in batch])
    next_obs = np.stack([t.next_obs for t in batch])
    rewards = np.array([t.reward for t in batch])
    done = np.array([t.done for t in batch])
    options = np.array([t.option for t in batch])
    actions = np.array([t.action for t in batch])

    live_next, _ = model.net.forward(next_obs)
    target_next, _ = model.target.forward(next_obs)
    pol_next = nn.softmax(live_next["pi"].reshape(b, o, a), params.temperature)
    q_next = (pol_next * target_next["q_u"].reshape(b, o, a)).sum(axis=2)
    beta_next = live_next["beta"][np.arange(b), options]
    cont = (1.0 - beta_next) * q_next[np.arange(b), options] + beta_next * q_next.max(axis=1)
    targets = rewards + np.where(done, 0.0, params.discount * cont)

    outputs, cache = model.net.forward(obs)
    flat_idx = options * a + actions
    predicted = outputs["q_u"][np.arange(b), flat_idx]
    errors = predicted - targets
    loss = float((errors**2).mean())

    gout = np.zeros((b, o * a))
    gout[np.arange(b), flat_idx] = 2.0 * errors / b
    grads = model.net.backward(cache, "q_u", gout)
    model.net.apply_gradients(grads, params.head_lr("q_u"), "descent")
    return loss


def update_policy(
    model: OptionCriticModel,
    cache: nn.ForwardCache,
    outputs: dict[str, np.ndarray],
    option: int,
    action: int,
    params: OptionCriticParams,
) -> None:
    """Ascent on log pi_w(a|s) * Q_U(s, w, a) + entropy_reg * H(pi_w(.|s)).

    Uses the forward pass already taken at s, so the critic weight
    Q_U(s, w, a) is the live pre-update value, held constant.
    """
    a = model.num_actions
    probs = model.policy(outputs)[option]
    q_value = float(model.q_u(outputs)[option, action])
    logp = np.log(np.maximum(probs, _LOG_FLOOR))
    entropy = -float((probs * logp).sum())
    onehot = np.zeros(a)
    onehot[action] = 1.0
    # d/d logits of [log pi(a) * Q + c * H], both terms through the row softmax
    row = (q_value * (onehot - probs) - params.entropy_reg * probs * (logp + entropy)) / (
        params.temperature
    )
    gout = np.zeros(model.num_options * a)
    gout[option * a : (option + 1) * a] = row
    grads = model.net.backward(cache, "pi", gout)
    model.net.apply_gradients(grads, params.head_lr("pi"), "ascent")


def update_termination(
    model: OptionCriticModel,
    next_obs: np.ndarray,
    option: int,
    params: OptionCriticParams,
) -> None:
    """Descent on beta_w(s') * (Q_Omega(s', w) - max_w' Q_Omega(s', w') + phi).

    The positive phi sits inside the bracket, so beta still shrinks when the
    option is exactly greedy and only grows once the advantage deficit
    exceeds phi.
    """
    outputs, cache = model.net.forward(next_obs)
    q_om = q_omega_from(model.q_u(outputs), model.policy(outputs))
    advantage = float(q_om[option] - q_om.max())
    gout = np.zeros(model.num_options)
    gout[option] = advantage + params.termination_reg
    grads = model.net.backward(cache, "beta", gout)
    model.net.apply_gradients(grads, params.head_lr("beta"), "descent")


def sync_target(model: OptionCriticModel, critic_updates: int, freeze_interval: int) -> bool:
    """Refresh the target at freeze-interval boundaries; returns True on copy."""
    if critic_updates > 0 and critic_updates % freeze_interval == 0:
        model.sync_target()
        return True
    return False


# -- episodes ---------------------------------------------------------------------


class SubgoalController:
    """Protocol for overriding option selection and termination.

    reset() starts a new episode; option is the segment currently bound;
    observe(cell) consumes the arrival cell and reports whether the active
    option terminates there (advancing the segment when it does).
    """

    def reset(self) -> None:  # pragma: no cover - interface default
        raise NotImplementedError

    @property
    def option(self) -> int:  # pragma: no cover - interface default
        raise NotImplementedError

    def observe(self, cell: tuple[int, int]) -> bool:  # pragma: no cover
        raise NotImplementedError


def run_episode(
    env: MazeEnv,
    model: OptionCriticModel,
    buffer: ReplayBuffer,
    params: OptionCriticParams,
    rng: np.random.Generator,
    global_step: int,
    episode_index: int,
    critic_updates: int,
    controller: SubgoalController | None = None,
) -> tuple[EpisodeTrace, int, int]:
    """One training episode with per-step actor updates and periodic
    critic updates. Returns (trace, global_step, critic_updates)."""
    cell = env.reset()
    obs = env.observe()
    if controller is not None:
        controller.reset()
    option: int | None = None
    steps: list[StepRecord] = []
    done = False
    while not done:
        outputs, cache = model.net.forward(obs)
        if controller is not None:
            option = controller.option
        elif option is None:
            eps = epsilon_at(global_step, params.epsilon_decay_steps)
            if rng.random() < eps:
                option = int(rng.integers(params.num_options))
            else:
                option = int(np.argmax(q_omega_from(model.q_u(outputs), model.policy(outputs))))
        action = select_action(model, outputs, option, rng)
        next_cell, reward, done = env.step(action)
        next_obs = env.observe()
        buffer.add(Transition(obs, option, action, reward, next_obs, done))

        update_policy(model, cache, outputs, option, action, params)
        update_termination(model, next_obs, option, params)
        global_step += 1
        if global_step % params.update_frequency == 0:
            loss = update_critic(model, buffer, params, rng)
            if loss is not None:
                critic_updates += 1
                sync_target(model, critic_updates, params.freeze_interval)

        if controller is not None:
            terminated = controller.observe(next_cell)
        else:
            terminated = should_terminate(
                model, next_obs, option, rng, params.terminate_every_step
            )
        steps.append(StepRecord(cell[0], cell[1], option, action, reward, terminated))
        if terminated:
            option = None
        cell, obs = next_cell, next_obs
    trace = EpisodeTrace(
        steps=steps, success=env.reached_goal, episode=episode_index, end_global_step=global_step
    )
    return trace, global_step, critic_updates


def greedy_evaluate(
    env: MazeEnv,
    model: OptionCriticModel,
    params: OptionCriticParams,
    controller: SubgoalController | None = None,
) -> tuple[int, bool, list[StepRecord]]:
    """Deterministic rollout: argmax options, argmax actions, terminate when
    beta exceeds 0.5 (or per the controller). No learning, no randomness.

    Returns (path length, success, step records).
    """
    cell = env.reset()
    obs = env.observe()
    if controller is not None:
        controller.reset()
    option: int | None = None
    steps: list[StepRecord] = []
    done = False
    while not done:
        outputs, _ = model.net.forward(obs)
        if controller is not None:
            option = controller.option
        elif option is None:
            option = int(np.argmax(q_omega_from(model.q_u(outputs), model.policy(outputs))))
        action = int(np.argmax(model.policy(outputs)[option]))
        next_cell, reward, done = env.step(action)
        if controller is not None:
            terminated = controller.observe(next_cell)
        else:
            next_out, _ = model.net.forward(env.observe())
            terminated = bool(next_out["beta"][option] > 0.5)
        steps.append(StepRecord(cell[0], cell[1], option, action, reward, terminated))
        if terminated:
            option = None
        cell = next_cell
        obs = env.observe()
    return len(steps), env.reached_goal, steps


def desk_scale(params: OptionCriticParams) -> OptionCriticParams:
    """Desk-scale preset: short exploration schedule plus per-head learning
    rates sized for one-hot inputs over a 150k-step budget.

    At the paper-scale rate (5e-4 everywhere) the trunk features stay near
    their tiny initial norms for far longer than a desk run lasts, so no
    state-dependent policy can form.  The preset raises the critic rate until
    the shared trunk grows informative features quickly, and gives the policy
    and termination heads a slower rate so their state-independent drift does
    not outrun per-state learning.  Explicit per-head overrides on `params`
    are preserved.
    """
    return replace(
        params,
        epsilon_decay_steps=15000,
        freeze_interval=200,
        critic_lr=params.critic_lr if params.critic_lr is not None else 1.0,
        policy_lr=params.policy_lr if params.policy_lr is not None else 0.01,
        termination_lr=(
            params.termination_lr if params.termination_lr is not None else 0.01
        ),
    )


def train_run_oc(
    maze_spec,
    params: OptionCriticParams,
    settings: TrainSettings,
    seed: int,
    controller: SubgoalController | None = None,
    obs_mode: str = "one-hot",
) -> RunResult:
    """Full training run: episodes until convergence or the step budget.

    Every ``eval_interval_episodes`` episodes a greedy evaluation is taken;
    the run stops once detect_convergence fires on that history. All
    randomness flows from one counter-based generator seeded per run, so
    equal (seed, config) pairs reproduce byte-identical logs.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    env = MazeEnv(maze_spec, horizon=params.horizon, obs_mode=obs_mode)
    model = OptionCriticModel(env.obs_dim, params, rng)
    buffer = ReplayBuffer(params.buffer_capacity)

    result = RunResult()
    global_step = 0
    critic_updates = 0
    episode = 0
    while global_step < settings.max_env_steps and result.convergence_step is None:
        episode += 1
        trace, global_step, critic_updates = run_episode(
            env, model, buffer, params, rng, global_step, episode, critic_updates, controller
        )
        result.episodes.append(
            EpisodeRow(
                episode=episode,
                global_step=global_step,
                path_length=path_length(trace),
                success=trace.success,
                avg_option_length=average_option_length(trace),
                epsilon=epsilon_at(global_step, params.epsilon_decay_steps),
            )
        )
        if episode % settings.eval_interval_episodes == 0:
            plen, success, _ = greedy_evaluate(env, model, params, controller)
            result.evals.append(EvalPoint(global_step, plen, success))
            result.convergence_step = detect_convergence(
                result.evals, settings.convergence_window, settings.convergence_slack
            )
    plen, success, steps = greedy_evaluate(env, model, params, controller)
    result.final_path_length = plen
    result.final_path_success = success
    result.final_trace = EpisodeTrace(steps, success, episode + 1, global_step)
    tail = [
        r.avg_option_length
        for r in result.episodes[-settings.option_length_window :]
        if r.avg_option_length is not None
    ]
    result.mean_option_length = sum(tail) / len(tail) if tail else None
    result.total_env_steps = global_step
    return result

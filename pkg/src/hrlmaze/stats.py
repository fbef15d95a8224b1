"""Run metrics and the statistical tests used by the experiment reports.

The distribution backend is a regularized incomplete beta function computed
with a Lentz-style continued fraction, which gives exact (to ~1e-12) t and F
tail probabilities without any external statistics dependency.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

_BETA_EPS = 1e-14
_BETA_TINY = 1e-300
_BETA_MAX_ITER = 300


# -- shared run/episode types ---------------------------------------------------


@dataclass(frozen=True)
class StepRecord:
    """One environment step as recorded in an episode trace."""

    row: int
    col: int
    option: int | None
    action: int
    reward: float
    terminated: bool  # option-termination event at the end of this step


@dataclass
class EpisodeTrace:
    steps: list[StepRecord]
    success: bool
    episode: int
    end_global_step: int


@dataclass(frozen=True)
class EvalPoint:
    """One periodic greedy evaluation during training."""

    global_step: int
    path_length: int
    success: bool


@dataclass(frozen=True)
class EpisodeRow:
    """One line of the per-episode training log."""

    episode: int
    global_step: int
    path_length: int
    success: bool
    avg_option_length: float | None
    epsilon: float


@dataclass(frozen=True)
class TrainSettings:
    """Knobs of the shared training loop (identical for both agents)."""

    max_env_steps: int = 500000
    eval_interval_episodes: int = 20
    convergence_window: int = 10
    convergence_slack: int = 2
    option_length_window: int = 50  # trailing episodes for the summary mean


@dataclass
class RunResult:
    """Everything one training run produces, before any file I/O."""

    episodes: list[EpisodeRow] = field(default_factory=list)
    evals: list[EvalPoint] = field(default_factory=list)
    convergence_step: int | None = None
    final_path_length: int = 0
    final_path_success: bool = False
    final_trace: EpisodeTrace | None = None
    mean_option_length: float | None = None
    total_env_steps: int = 0


# -- trace metrics ----------------------------------------------------------------


def path_length(trace: EpisodeTrace) -> int:
    """Number of environment steps in the trace."""
    if not trace.steps:
        raise ValueError("empty trace has no path length")
    return len(trace.steps)


def average_option_length(trace: EpisodeTrace) -> float | None:
    """Mean steps per maximal option segment.

    A segment ends at a termination event or at episode end. Returns None
    for traces without options (the flat-agent case).
    """
    if not trace.steps:
        raise ValueError("empty trace has no option segments")
    if all(s.option is None for s in trace.steps):
        return None
    segments = 0
    length = 0
    for step in trace.steps:
        length += 1
        if step.terminated:
            segments += 1
            length = 0
    if length > 0:
        segments += 1
    return len(trace.steps) / segments


def detect_convergence(
    evals: list[EvalPoint], window: int = 10, slack: int = 2
) -> int | None:
    """First stable point of the evaluation history, or None if censored.

    An evaluation E qualifies when E and the next `window` evaluations all
    succeed and every one of their path lengths lies within `slack` of the
    minimum over that span. Returns E's global env step. Evaluations are
    assumed to be spaced at a fixed episode interval.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if slack < 0:
        raise ValueError("slack must be >= 0")
    for i in range(len(evals) - window):
        span = evals[i : i + window + 1]
        if not all(e.success for e in span):
            continue
        lengths = [e.path_length for e in span]
        if max(lengths) - min(lengths) <= slack:
            return evals[i].global_step
    return None


# -- distribution backend -----------------------------------------------------------


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz method)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETA_TINY:
        d = _BETA_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_TINY:
            d = _BETA_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETA_TINY:
            c = _BETA_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_TINY:
            d = _BETA_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETA_TINY:
            c = _BETA_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1], absolute error below 1e-10."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    # The continued fraction converges fast on one side of the mean;
    # use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) for the other.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def _t_sf2(t: float, df: float) -> float:
    """Two-tailed tail probability of Student's t."""
    x = df / (df + t * t)
    return regularized_incomplete_beta(x, df / 2.0, 0.5)


def _f_sf(f: float, d1: float, d2: float) -> float:
    """Upper tail probability of the F distribution."""
    x = d2 / (d2 + d1 * f)
    return regularized_incomplete_beta(x, d2 / 2.0, d1 / 2.0)


# -- tests ---------------------------------------------------------------------------


def t_test_two_sample(xs: list[float], ys: list[float]) -> tuple[float, float]:
    """Pooled-variance two-sample t-test; returns (t, two-tailed p).

    Degenerate inputs: zero pooled variance with equal means gives (0, 1);
    zero pooled variance with unequal means gives (signed inf, 0) and a
    warning, since the statistic is undefined there.
    """
    n1, n2 = len(xs), len(ys)
    if n1 < 2 or n2 < 2:
        raise ValueError("each sample needs at least two values")
    m1 = sum(xs) / n1
    m2 = sum(ys) / n2
    ss1 = sum((v - m1) ** 2 for v in xs)
    ss2 = sum((v - m2) ** 2 for v in ys)
    df = n1 + n2 - 2
    pooled = (ss1 + ss2) / df
    if pooled <= 0.0:
        if m1 == m2:
            return 0.0, 1.0
        log.warning("degenerate t-test: zero pooled variance with unequal means")
        return math.copysign(math.inf, m1 - m2), 0.0
    t = (m1 - m2) / math.sqrt(pooled * (1.0 / n1 + 1.0 / n2))
    return t, min(1.0, _t_sf2(t, df))


def anova_one_way(groups: list[list[float]]) -> tuple[float, float]:
    """One-way ANOVA; returns (F, p).

    Degenerate inputs mirror the t-test: zero within-group variance gives
    (0, 1) when all group means agree and (inf, 0) with a warning otherwise.
    """
    if len(groups) < 2:
        raise ValueError("ANOVA needs at least two groups")
    if any(len(g) < 2 for g in groups):
        raise ValueError("each group needs at least two values")
    k = len(groups)
    n_total = sum(len(g) for g in groups)
    grand = sum(sum(g) for g in groups) / n_total
    means = [sum(g) / len(g) for g in groups]
    ssb = sum(len(g) * (m - grand) ** 2 for g, m in zip(groups, means))
    ssw = sum(sum((v - m) ** 2 for v in g) for g, m in zip(groups, means))
    d1 = k - 1
    d2 = n_total - k
    if ssw <= 0.0:
        if ssb <= 1e-300:
            return 0.0, 1.0
        log.warning("degenerate ANOVA: zero within-group variance with unequal means")
        return math.inf, 0.0
    f = (ssb / d1) / (ssw / d2)
    return f, min(1.0, _f_sf(f, d1, d2))

"""Noise-scale schedules: adaptive tuning and three fixed decay laws."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import SelectionError, TrainingDivergenceError

SCHEDULES = ("fixed", "ant", "time", "exp", "step")


@dataclass(frozen=True)
class ScheduleState:
    """State of the adaptive controller.

    ``sigma_t`` is the scale to use at the next iteration. ``use_average``
    switches between comparing running means (default) and raw accuracies.
    """

    sigma0: float
    sigma_t: float
    k: float
    tau: float
    t: int = 0
    t_star: int = 1
    accuracy_history: tuple[float, ...] = field(default_factory=tuple)
    use_average: bool = True

    def __post_init__(self):
        if not 0 < self.k <= 1:
            raise ValueError(f"decay rate must satisfy 0 < k <= 1, got {self.k}")
        if self.sigma_t > self.sigma0:
            raise ValueError("sigma_t may not exceed sigma0")

    @classmethod
    def start(cls, sigma0, k, tau, use_average=True, t_star=1):
        return cls(sigma0, sigma0, k, tau, 0, t_star, (), use_average)

    @property
    def mean_accuracy(self) -> float:
        h = self.accuracy_history
        return sum(h) / len(h) if h else 0.0


def _signal(history, use_average):
    """Current and previous accuracy signals, both 0 before any observation."""
    if not history:
        return 0.0, 0.0
    if use_average:
        cur = math.fsum(history) / len(history)
        prev = math.fsum(history[:-1]) / (len(history) - 1) if len(history) > 1 else 0.0
    else:
        cur = history[-1]
        prev = history[-2] if len(history) > 1 else 0.0
    return cur, prev


def ant_next_sigma(state: ScheduleState, new_accuracy: float) -> ScheduleState:
    """Record one test accuracy and shrink sigma by ``k`` if it did not improve by ``tau``."""
    history = state.accuracy_history + (float(new_accuracy),)
    cur, prev = _signal(history, state.use_average)
    sigma = state.sigma_t if cur - prev >= state.tau else state.k * state.sigma_t
    return replace(state, sigma_t=sigma, t=state.t + 1, accuracy_history=history)


def time_decay(sigma0: float, k: float, t: int) -> float:
    if k < 0:
        raise ValueError("decay rate must be non-negative")
    return sigma0 / (1.0 + k * t)


def exp_decay(sigma0: float, k: float, t: int) -> float:
    if k < 0:
        raise ValueError("decay rate must be non-negative")
    return sigma0 * math.exp(-k * t)


def step_decay(sigma0: float, k: float, t: int, t_star: int) -> float:
    if t_star < 1:
        raise ValueError("step period must be >= 1")
    if not 0 < k <= 1:
        raise ValueError("step decay needs 0 < k <= 1")
    return sigma0 * k ** (t // t_star)


def predefined_sigma(kind: str, sigma0: float, k: float, t: int, t_star: int = 100) -> float:
    if kind == "fixed":
        return sigma0
    if kind == "time":
        return time_decay(sigma0, k, t)
    if kind == "exp":
        return exp_decay(sigma0, k, t)
    if kind == "step":
        return step_decay(sigma0, k, t, t_star)
    raise ValueError(f"not a predefined schedule: {kind!r}")


def select_decay_rate(candidate_ks, run_fn):
    """Grid search over decay rates; ``run_fn(k)`` returns the final mean accuracy.

    Ties go to the larger ``k``. Candidates whose run raises
    ``TrainingDivergenceError`` or returns a non-finite accuracy are skipped.

    Returns:
        ``(best_k, table)`` where ``table`` maps each k to its accuracy (nan for
        diverged runs).
    """
    ks = list(candidate_ks)
    if not ks:
        raise ValueError("need at least one candidate decay rate")
    table = {}
    for k in ks:
        try:
            acc = float(run_fn(k))
        except TrainingDivergenceError:
            acc = math.nan
        table[k] = acc
    valid = [(acc, k) for k, acc in table.items() if math.isfinite(acc)]
    if not valid:
        raise SelectionError(f"every candidate diverged: {ks}")
    best_acc, best_k = max(valid)
    return best_k, table

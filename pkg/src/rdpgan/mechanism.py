"""Loss perturbation and empirical sensitivity estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .rng import SeedPath, stream


@dataclass(frozen=True)
class LossBound:
    """Bound ``c`` on the summed batch loss and the sensitivity it implies."""

    c: float
    batch_size: int

    def __post_init__(self):
        if self.c < 0:
            raise ValueError(f"loss bound must be non-negative, got {self.c}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")

    @property
    def delta_s(self) -> float:
        return float(Fraction(self.c) / self.batch_size)


def sensitivity(c: float, batch_size: int) -> float:
    return LossBound(c, batch_size).delta_s


def ceil_sig(x: float, digits: int = 2) -> float:
    """Round ``x`` up to ``digits`` significant figures."""
    if x <= 0:
        return 0.0
    scale = 10.0 ** (math.floor(math.log10(x)) - digits + 1)
    # round() first so values like 20.000000000004 do not jump to 21
    return math.ceil(round(x / scale, 9)) * scale


def estimate_loss_bound(training_trace, batch_size: int, margin: float = 1.08) -> LossBound:
    """Bound the batch loss from a noise-free training trace.

    ``c`` is ``margin * max(trace)`` rounded up to two significant figures.
    The default margin reproduces the reference census-data bounds (17.852 -> 20,
    21.242 -> 23).
    """
    trace = np.asarray(training_trace, dtype=float)
    if trace.size == 0:
        raise ValueError("training trace is empty")
    if margin < 1:
        raise ValueError(f"margin must be >= 1, got {margin}")
    peak = float(np.max(trace))
    return LossBound(ceil_sig(margin * peak), batch_size)


@dataclass(frozen=True)
class NoiseDraw:
    sigma: float
    seed_path: SeedPath
    value: float


def draw_noise(sigma: float, seed_path, n_draws: int = 1) -> NoiseDraw:
    """Sum of ``n_draws`` independent N(0, sigma^2) values from one stream."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    path = SeedPath(*seed_path)
    z = stream(path).standard_normal(n_draws)
    return NoiseDraw(sigma, path, float(sigma * z.sum()))


def perturb_loss_value(batch_loss: float, sigma: float, seed_path, per_sample: int | None = None) -> float:
    """Reported batch loss plus Gaussian noise.

    By default one draw is added per batch. ``per_sample=m`` adds one draw per
    sample instead; the summed noise then has variance ``m * sigma^2`` and the
    accountant's single-draw analysis no longer applies.
    """
    if sigma == 0:
        return batch_loss
    return batch_loss + draw_noise(sigma, seed_path, per_sample or 1).value


def perturb_output_delta(output_error, sigma: float, seed_path, shared: bool = False) -> np.ndarray:
    """Add Gaussian noise to the output-layer error signal.

    With ``shared=False`` each component gets its own draw; with ``shared=True``
    one scalar draw is broadcast over the whole signal.
    """
    output_error = np.asarray(output_error, dtype=float)
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return output_error
    rng = stream(SeedPath(*seed_path))
    if shared:
        return output_error + sigma * rng.standard_normal()
    return output_error + sigma * rng.standard_normal(output_error.shape)

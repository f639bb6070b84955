"""Privacy accounting for loss perturbation with a subsampled Gaussian.

The chain used throughout the package is

    per-step RDP  ->  discriminator DP after n_d steps  ->  generator DP
                  ->  total DP after n_g generator iterations

All quantities are in nats. Functions here are pure; ``BudgetLedger`` is the
only stateful object and expects a single writer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import optimize, special

from .errors import BudgetExceededError, CalibrationError, PrivacyConditionError

MAX_ORDER = 1e6


@dataclass(frozen=True)
class MechanismParams:
    q: float
    delta_s: float
    sigma: float
    delta: float = 1e-5

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"sampling rate q must lie in [0, 1], got {self.q}")
        if self.delta_s < 0:
            raise ValueError(f"sensitivity must be non-negative, got {self.delta_s}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class RdpBound:
    alpha: float
    epsilon: float

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"Renyi order must exceed 1, got {self.alpha}")
        if self.epsilon < 0:
            raise ValueError(f"RDP epsilon must be non-negative, got {self.epsilon}")


@dataclass(frozen=True)
class DpGuarantee:
    epsilon: float
    delta: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


def _check_order(alpha):
    if not alpha > 1:
        raise ValueError(f"Renyi order must exceed 1, got {alpha}")
    if alpha > MAX_ORDER:
        raise ValueError(f"Renyi order {alpha} exceeds supported maximum {MAX_ORDER:g}")


def rdp_gaussian_bound(params: MechanismParams, alpha: float) -> RdpBound:
    """Closed-form per-step RDP of the subsampled loss perturbation.

    Returns ``q * alpha**2 * delta_s**2 / (2 * (alpha - 1) * sigma**2)``.
    """
    _check_order(alpha)
    eps = params.q * alpha**2 * params.delta_s**2 / (2.0 * (alpha - 1.0) * params.sigma**2)
    return RdpBound(alpha, eps)


def rdp_subsampled_gaussian_exact(params: MechanismParams, alpha: int) -> RdpBound:
    """Exact RDP at integer order via the binomial expansion of the mixture.

    Evaluates ``log sum_k C(a,k) (1-q)^(a-k) q^k exp(r^2 k(k-1)/2) / (a-1)`` with
    ``r = delta_s / sigma``. The excess over one is reduced with log-sum-exp so
    tiny values keep full relative precision and large ones do not overflow.
    """
    if isinstance(alpha, (bool, np.bool_)) or int(alpha) != alpha:
        raise ValueError(f"exact RDP needs an integer order, got {alpha!r}")
    alpha = int(alpha)
    if alpha < 2:
        raise ValueError(f"exact RDP needs order >= 2, got {alpha}")
    _check_order(alpha)
    q = params.q
    if q == 0.0:
        return RdpBound(alpha, 0.0)
    r2 = (params.delta_s / params.sigma) ** 2
    if r2 == 0.0:
        return RdpBound(alpha, 0.0)
    # The binomial weights sum to one, so the sum is 1 + sum_k w_k expm1(x_k).
    # Only k >= 2 contributes; summing the excess keeps precision when it is tiny.
    k = np.arange(2, alpha + 1, dtype=float)
    log_binom = special.gammaln(alpha + 1) - special.gammaln(k + 1) - special.gammaln(alpha - k + 1)
    rest = alpha - k
    if q == 1.0:
        log_mix = np.where(rest == 0, 0.0, -np.inf)
    else:
        log_mix = rest * math.log1p(-q)
    x = r2 * k * (k - 1) / 2.0
    log_expm1 = np.where(x > 1.0, x + np.log(-np.expm1(-x)), np.log(np.expm1(np.minimum(x, 1.0))))
    log_excess = float(special.logsumexp(log_binom + log_mix + k * math.log(q) + log_expm1))
    if not math.isfinite(log_excess):
        raise OverflowError(
            f"binomial sum overflowed at alpha={alpha}, delta_s/sigma={math.sqrt(r2)}"
        )
    if log_excess < 0:
        total = math.log1p(math.exp(log_excess))
    else:
        total = log_excess + math.log1p(math.exp(-log_excess))
    return RdpBound(alpha, total / (alpha - 1))


def rdp_compose(bounds) -> RdpBound:
    """Additive composition of RDP bounds at a shared order."""
    bounds = list(bounds)
    if not bounds:
        raise ValueError("cannot compose an empty list of bounds")
    alpha = bounds[0].alpha
    for b in bounds[1:]:
        if b.alpha != alpha:
            raise ValueError(f"mismatched orders in composition: {alpha} vs {b.alpha}")
    return RdpBound(alpha, math.fsum(b.epsilon for b in bounds))


def rdp_to_dp(epsilon_rdp: float, n: int, delta: float) -> DpGuarantee:
    """Convert ``n`` composed steps of per-step RDP ``epsilon_rdp`` to (eps, delta)-DP.

    Raises:
        PrivacyConditionError: when ``log(1/delta) < epsilon_rdp**2 * n``.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if n < 0 or epsilon_rdp < 0:
        raise ValueError("step count and epsilon must be non-negative")
    log_inv_delta = math.log(1.0 / delta)
    needed = epsilon_rdp**2 * n
    if log_inv_delta < needed:
        raise PrivacyConditionError(log_inv_delta, needed)
    return DpGuarantee(4.0 * epsilon_rdp * math.sqrt(2.0 * n * log_inv_delta), delta)


def total_epsilon(n_g: int, epsilon_g: float) -> float:
    if n_g < 0 or epsilon_g < 0:
        raise ValueError("n_g and epsilon_g must be non-negative")
    return n_g * epsilon_g


def generator_epsilon(params: MechanismParams, n_d: int, alpha: float = 2.0) -> float:
    """Per-generator-iteration DP epsilon at the given noise scale.

    The generator only post-processes the discriminator, so this is the
    discriminator's DP epsilon after ``n_d`` perturbed steps.
    """
    eps = rdp_gaussian_bound(params, alpha).epsilon
    return rdp_to_dp(eps, n_d, params.delta).epsilon


def ma_epsilon(q: float, n_d: int, delta: float, sigma: float) -> float:
    """Moment-accountant style per-iteration epsilon, used only for comparison."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return 2.0 * q * math.sqrt(n_d * math.log(1.0 / delta)) / sigma


def _order_factor(alpha):
    return alpha**2 / (alpha - 1.0)


def default_order_grid() -> np.ndarray:
    grid = np.concatenate([1.0 + 2.0 ** np.arange(-4, 7), np.arange(2, 129)])
    return np.unique(grid[grid <= 128])


def best_order(grid=None) -> float:
    """Order minimising ``alpha**2 / (alpha - 1)``: grid search, then refinement."""
    grid = default_order_grid() if grid is None else np.asarray(grid, dtype=float)
    values = _order_factor(grid)
    i = int(np.argmin(values))
    best = float(grid[i])
    lo = float(grid[max(i - 1, 0)])
    hi = float(grid[min(i + 1, len(grid) - 1)])
    if hi > lo:
        res = optimize.minimize_scalar(_order_factor, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-10})
        if res.success and _order_factor(res.x) < _order_factor(best):
            best = float(res.x)
    return best


@dataclass(frozen=True)
class Calibration:
    sigma: float
    alpha: float
    epsilon_g: float
    epsilon_rdp: float


def max_epsilon_total(delta: float, n_g: int) -> float:
    """Largest total budget for which the conversion precondition still holds."""
    return n_g * 4.0 * math.sqrt(2.0) * math.log(1.0 / delta)


def calibrate_noise(epsilon_total: float, delta: float, n_g: int, n_d: int,
                    q: float, delta_s: float, orders=None) -> Calibration:
    """Invert the accounting chain: noise scale that spends ``epsilon_total`` evenly.

    Raises:
        CalibrationError: if the per-step RDP implied by the budget violates the
            conversion precondition.
    """
    if epsilon_total <= 0 or n_g < 1 or n_d < 1:
        raise ValueError("epsilon_total, n_g and n_d must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not 0.0 <= q <= 1.0 or delta_s < 0:
        raise ValueError("need 0 <= q <= 1 and delta_s >= 0")
    log_inv_delta = math.log(1.0 / delta)
    eps_g = epsilon_total / n_g
    eps_rdp = eps_g / (4.0 * math.sqrt(2.0 * n_d * log_inv_delta))
    if log_inv_delta < eps_rdp**2 * n_d:
        cap = max_epsilon_total(delta, n_g)
        raise CalibrationError(
            f"budget {epsilon_total} is infeasible with n_g={n_g}, n_d={n_d}, delta={delta}; "
            f"the largest supported epsilon_total is {cap:.6g}",
            cap,
        )
    alpha = best_order(orders)
    if delta_s == 0 or q == 0:
        return Calibration(0.0, alpha, eps_g, eps_rdp)
    sigma = delta_s * math.sqrt(q * _order_factor(alpha) / (2.0 * eps_rdp))
    return Calibration(sigma, alpha, eps_g, eps_rdp)


def rdp_ma_ratio(sigma: float, q: float, n_d: int, delta: float, delta_s: float,
                 alpha: float = 2.0) -> float:
    rdp = generator_epsilon(MechanismParams(q, delta_s, sigma, delta), n_d, alpha)
    return rdp / ma_epsilon(q, n_d, delta, sigma)


def rdp_ma_crossover(q: float, n_d: int, delta: float, delta_s: float,
                     lo: float = 1e-3, hi: float = 1e4, alpha: float = 2.0) -> float:
    """Noise scale above which the RDP-derived epsilon beats the MA baseline.

    Found by root bracketing on ``log(ratio)``. Returns ``nan`` if the ratio
    does not cross one inside ``[lo, hi]``.
    """
    def log_ratio(s):
        try:
            return math.log(rdp_ma_ratio(s, q, n_d, delta, delta_s, alpha))
        except PrivacyConditionError:
            return math.inf

    f_lo, f_hi = log_ratio(lo), log_ratio(hi)
    if not (f_lo > 0 > f_hi):
        return math.nan
    if math.isinf(f_lo):
        # Walk up until the conversion precondition holds.
        s = lo
        while math.isinf(log_ratio(s)):
            s *= 2.0
        if log_ratio(s) <= 0:
            return math.nan
        lo = s
    return optimize.brentq(log_ratio, lo, hi, xtol=1e-14, rtol=1e-14)


def composition_event_bound(epsilon: float, n: int, event_prob: float) -> float:
    """Upper bound on an event's probability after ``n`` composed RDP steps.

    ``exp(2 * eps * sqrt(n * log(1/Q))) * Q`` where Q is the event probability
    under the adjacent input.
    """
    if not 0.0 < event_prob <= 1.0:
        raise ValueError("event probability must lie in (0, 1]")
    return math.exp(2.0 * epsilon * math.sqrt(n * math.log(1.0 / event_prob))) * event_prob


@dataclass(frozen=True)
class PreservationCheck:
    p_event: float
    q_event: float
    lhs: float
    rhs: float
    slack: float
    status: str  # "holds", "violated" or "inconclusive"

    @property
    def holds(self) -> bool | None:
        if self.status == "inconclusive":
            return None
        return self.status == "holds"


def check_probability_preservation(sigma: float, shift: float, alpha: float,
                                   event_threshold: float, sample_count: int = 10**6,
                                   rng_seed: int = 0) -> PreservationCheck:
    """Monte-Carlo check of ``P(A) <= (exp(D_alpha(P||Q)) Q(A))^((alpha-1)/alpha)``.

    P is ``N(shift, sigma^2)``, Q is ``N(0, sigma^2)`` and A is the event
    ``{x > event_threshold}``. The divergence uses the Gaussian closed form
    ``alpha * shift^2 / (2 sigma^2)``. A 3-standard-error slack absorbs
    sampling noise.
    """
    _check_order(alpha)
    if sample_count < 10**5:
        raise ValueError(f"need at least 1e5 samples, got {sample_count}")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    rng = np.random.Generator(np.random.Philox(rng_seed))
    z_p = rng.standard_normal(sample_count)
    z_q = rng.standard_normal(sample_count)
    p_hat = float(np.mean(shift + sigma * z_p > event_threshold))
    q_hat = float(np.mean(sigma * z_q > event_threshold))
    div = alpha * shift**2 / (2.0 * sigma**2)
    power = (alpha - 1.0) / alpha
    rhs = (math.exp(div) * q_hat) ** power
    if p_hat == 0.0 or q_hat == 0.0:
        return PreservationCheck(p_hat, q_hat, p_hat, rhs, math.nan, "inconclusive")
    se_p = math.sqrt(p_hat * (1 - p_hat) / sample_count)
    se_q = math.sqrt(q_hat * (1 - q_hat) / sample_count)
    se_rhs = power * rhs / q_hat * se_q
    slack = 3.0 * math.hypot(se_p, se_rhs)
    status = "holds" if p_hat <= rhs + slack else "violated"
    return PreservationCheck(p_hat, q_hat, p_hat, rhs, slack, status)


@dataclass(frozen=True)
class LedgerEntry:
    iteration: int
    sigma: float
    epsilon_g: float


@dataclass
class BudgetLedger:
    """Running account of per-generator-iteration charges against a DP budget.

    Charges that would push ``spent`` above ``epsilon_total`` are rejected.
    A relative slack of 1e-12 absorbs rounding when a budget is split evenly.
    """

    epsilon_total: float
    delta: float
    entries: list[LedgerEntry] = field(default_factory=list)
    spent: float = 0.0

    rel_slack = 1e-12

    def __post_init__(self):
        if self.epsilon_total < 0:
            raise ValueError("epsilon_total must be non-negative")

    @property
    def remaining(self) -> float:
        return max(self.epsilon_total - self.spent, 0.0)

    def _limit(self):
        return self.epsilon_total * (1.0 + self.rel_slack)

    def can_afford(self, epsilon_g: float) -> bool:
        if not math.isfinite(epsilon_g):
            return False
        return math.fsum([self.spent, epsilon_g]) <= self._limit()

    def charge(self, iteration: int, sigma: float, epsilon_g: float) -> LedgerEntry:
        if epsilon_g < 0:
            raise ValueError("charges must be non-negative")
        if not self.can_afford(epsilon_g):
            raise BudgetExceededError(
                f"charge {epsilon_g} at iteration {iteration} exceeds remaining {self.remaining}"
            )
        entry = LedgerEntry(iteration, sigma, epsilon_g)
        self.entries.append(entry)
        self.spent = math.fsum(e.epsilon_g for e in self.entries)
        return entry


RECORD_KEYS = ("alpha", "epsilon_rdp", "epsilon_dp", "delta", "sigma", "q", "delta_s", "n_d", "n_g")


@dataclass(frozen=True)
class AccountingRecord:
    """Flat key=value record consumed by the CLI table writer."""

    alpha: float
    epsilon_rdp: float
    epsilon_dp: float
    delta: float
    sigma: float
    q: float
    delta_s: float
    n_d: int
    n_g: int

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name}={v}" if isinstance(v, int) else f"{f.name}={v:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "AccountingRecord":
        values = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, raw = line.partition("=")
            values[key.strip()] = raw.strip()
        missing = set(RECORD_KEYS) - set(values)
        if missing:
            raise ValueError(f"record is missing keys: {sorted(missing)}")
        kw = {k: (int(values[k]) if k in ("n_d", "n_g") else float(values[k])) for k in RECORD_KEYS}
        return cls(**kw)

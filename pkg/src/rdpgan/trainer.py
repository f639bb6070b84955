"""Deterministic GAN training with a perturbed discriminator and a privacy ledger.

``train_rdp_gan`` keeps the noise scale fixed for the whole run.
``train_ant_rdp_gan`` lets the scale follow a schedule (adaptive or one of
the predefined decays) and re-prices each generator iteration at the scale
actually used, so runs with shrinking noise exhaust the budget sooner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import accountant, mechanism, nn, rng as rngmod
from .data import TabularDataset, TabularSchema, subsample_batch
from .errors import PrivacyConditionError, TrainingDivergenceError
from .evaluation import histogram_pmf_2d, histogram_score, predict
from .rng import SeedPath, stream
from .schedules import SCHEDULES, ScheduleState, ant_next_sigma, predefined_sigma

HALT_ITERATIONS = "iterations exhausted"
HALT_BUDGET = "budget exhausted"
HALT_DIVERGED = "diverged"

# Plain SGD on the one-hot tabular task oscillates at the ring learning rate.
TABULAR_LR = 0.02
CSV_HEADER = "iteration,sigma,noisy_loss,S_t,S_bar,epsilon_charged,epsilon_remaining"


@dataclass(frozen=True)
class ScheduleConfig:
    kind: str = "fixed"
    k: float = 1.0
    tau: float = 0.005
    t_star: int = 100
    use_average: bool = True

    def __post_init__(self):
        if self.kind not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.kind!r}; choose from {SCHEDULES}")


@dataclass(frozen=True)
class PrivacyConfig:
    """Either ``epsilon_total`` (noise is calibrated) or an explicit ``sigma``."""

    epsilon_total: float | None = None
    sigma: float | None = None
    delta: float = 1e-5
    delta_s: float = 0.3125
    alpha: float | None = None

    def __post_init__(self):
        if (self.epsilon_total is None) == (self.sigma is None):
            raise ValueError("give exactly one of epsilon_total and sigma")


@dataclass(frozen=True)
class TrainConfig:
    n_g: int = 1000
    n_d: int = 5
    m: int = 64
    lr_d: float = 0.05
    lr_g: float = 0.05
    latent_dim: int = 8
    hidden: tuple[int, ...] = (32, 32)
    hidden_act: str = "tanh"
    output_act: str = "identity"
    seed: int = 0
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    privacy: PrivacyConfig | None = None
    shared_noise: bool = False
    output_blocks: tuple[int, ...] | None = None
    gumbel_tau: float = 0.5

    def __post_init__(self):
        if self.output_blocks is not None and self.output_act != "identity":
            raise ValueError("a block-softmax output head needs identity (logit) outputs")
        if self.n_g < 1 or self.n_d < 1 or self.m < 1:
            raise ValueError("n_g, n_d and m must all be >= 1")

    @property
    def head(self):
        if self.output_blocks is None:
            return None
        return GumbelSoftmaxHead(tuple(self.output_blocks), self.gumbel_tau)

    @classmethod
    def for_schema(cls, schema: TabularSchema, **kwargs) -> "TrainConfig":
        blocks = tuple(a.size for a in schema.attributes)
        kwargs.setdefault("lr_d", TABULAR_LR)
        kwargs.setdefault("lr_g", TABULAR_LR)
        return cls(output_blocks=blocks, output_act="identity", **kwargs)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    sigma: float
    noisy_loss: float
    score: float
    mean_score: float
    epsilon_charged: float
    epsilon_remaining: float


def _fmt(x) -> str:
    return f"{x:.17g}"


@dataclass
class TrainReport:
    records: list[IterationRecord]
    generator: nn.DenseNet
    discriminator: nn.DenseNet
    halt_reason: str
    ledger: accountant.BudgetLedger
    sigma0: float = 0.0
    q: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def sigmas(self) -> list[float]:
        return [r.sigma for r in self.records]

    def final_mean_score(self) -> float:
        return self.records[-1].mean_score if self.records else math.nan

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for r in self.records:
            lines.append(",".join([str(r.iteration), _fmt(r.sigma), _fmt(r.noisy_loss), _fmt(r.score),
                                   _fmt(r.mean_score), _fmt(r.epsilon_charged),
                                   _fmt(r.epsilon_remaining)]))
        return "\n".join(lines) + "\n"


def init_networks(config: TrainConfig, data_dim: int):
    rng = stream(SeedPath(config.seed, purpose=rngmod.INIT))
    g = nn.mlp(config.latent_dim, config.hidden, data_dim, config.hidden_act, config.output_act, rng)
    d = nn.mlp(data_dim, config.hidden, 1, config.hidden_act, "sigmoid", rng)
    return g, d


@dataclass(frozen=True)
class GumbelSoftmaxHead:
    """Turns generator logits into near one-hot rows, one block per attribute.

    Each block is ``softmax((logits + gumbel) / tau)``; the argmax of a block is
    an exact sample from ``softmax(logits)``.
    """

    blocks: tuple[int, ...]
    tau: float = 0.5

    def forward(self, logits, seed_path):
        g = stream(SeedPath(*seed_path).with_purpose(rngmod.GUMBEL)).gumbel(size=logits.shape)
        return nn.block_softmax((logits + g) / self.tau, self.blocks)

    def backward(self, rows, grad_rows):
        return nn.block_softmax_backward(rows, grad_rows, self.blocks) / self.tau


def prior_batch(count: int, latent_dim: int, seed_path) -> np.ndarray:
    return stream(SeedPath(*seed_path)).standard_normal((count, latent_dim))


def _generate(g_net, prior, head, seed_path):
    cache, out = nn.forward(g_net, prior)
    rows = out if head is None else head.forward(out, seed_path)
    return cache, rows


def sample_generator(g_net: nn.DenseNet, count: int, seed_path, head=None) -> np.ndarray:
    prior = prior_batch(count, g_net.input_dim, seed_path)
    return _generate(g_net, prior, head, seed_path)[1]


def discriminator_step(d_net, g_net, real, prior, sigma, seed_path, lr_d=0.05, shared_noise=False,
                       head=None):
    """One cross-entropy update of the discriminator on real vs generated rows.

    The output-layer error is perturbed before backpropagation and the batch
    loss is perturbed before it is reported.

    Returns:
        ``(updated discriminator, noisy batch loss)``
    """
    path = SeedPath(*seed_path)
    fake = _generate(g_net, prior, head, path)[1]
    x = np.vstack([real, fake])
    y = np.concatenate([np.ones(len(real)), np.zeros(len(fake))])[:, None]
    cache, p = nn.forward(d_net, x)
    loss, err = nn.cross_entropy_loss(p, y)
    if not math.isfinite(loss):
        raise TrainingDivergenceError("non-finite discriminator loss", path.generator_iter)
    err = mechanism.perturb_output_delta(err, sigma, path.with_purpose(rngmod.DELTA_NOISE), shared_noise)
    grads = nn.backward(d_net, cache, err / len(x))
    d_net = nn.sgd_update(d_net, grads, lr_d)
    if not d_net.is_finite():
        raise TrainingDivergenceError("non-finite discriminator parameters", path.generator_iter)
    noisy = mechanism.perturb_loss_value(loss, sigma, path.with_purpose(rngmod.LOSS_NOISE))
    return d_net, noisy


def generator_step(g_net, d_net, prior, lr_g=0.05, iteration=None, head=None, seed_path=(0, 0, 0, 0)):
    """Non-saturating generator update: descend ``-sum log d(g(z))`` with d frozen."""
    cache_g, fake = _generate(g_net, prior, head, seed_path)
    cache_d, p = nn.forward(d_net, fake)
    loss, _ = nn.cross_entropy_loss(p, np.ones_like(p))
    if not math.isfinite(loss):
        raise TrainingDivergenceError("non-finite generator loss", iteration)
    grad_d = nn.backward(d_net, cache_d, (p - 1.0) / len(prior))
    grad_out = grad_d.input_error if head is None else head.backward(fake, grad_d.input_error)
    err_g = nn.output_error_from_grad(g_net, cache_g, grad_out)
    g_net = nn.sgd_update(g_net, nn.backward(g_net, cache_g, err_g), lr_g)
    if not g_net.is_finite():
        raise TrainingDivergenceError("non-finite generator parameters", iteration)
    return g_net


class _Pricing:
    """Per-generator-iteration epsilon as a function of the noise scale."""

    def __init__(self, privacy: PrivacyConfig | None, q: float, n_d: int, n_g: int):
        self.privacy = privacy
        self.q = q
        self.n_d = n_d
        self.alpha = 2.0
        if privacy is None:
            self.sigma0 = 0.0
            self.epsilon_total = math.inf
            self.delta = 1e-5
            return
        self.delta = privacy.delta
        if privacy.epsilon_total is not None:
            cal = accountant.calibrate_noise(privacy.epsilon_total, privacy.delta, n_g, n_d, q,
                                             privacy.delta_s)
            self.sigma0 = cal.sigma
            self.alpha = privacy.alpha or cal.alpha
            self.epsilon_total = privacy.epsilon_total
        else:
            self.sigma0 = privacy.sigma
            self.alpha = privacy.alpha or 2.0
            self.epsilon_total = math.inf

    def price(self, sigma: float) -> float:
        if self.privacy is None or self.privacy.delta_s == 0 or self.q == 0:
            return 0.0
        if sigma <= 0:
            return math.inf
        params = accountant.MechanismParams(self.q, self.privacy.delta_s, sigma, self.privacy.delta)
        try:
            return accountant.generator_epsilon(params, self.n_d, self.alpha)
        except PrivacyConditionError:
            # The conversion does not apply at this scale, so nothing can be certified.
            return math.inf


Scorer = Callable[[nn.DenseNet, int], float]


def _run(config: TrainConfig, data, scorer: Scorer | None, schedule: ScheduleConfig) -> TrainReport:
    data = data.encode() if isinstance(data, TabularDataset) else np.asarray(data, dtype=float)
    n = data.shape[0]
    if config.m > n:
        raise ValueError(f"batch size {config.m} exceeds dataset size {n}")
    if schedule.kind == "ant" and scorer is None:
        raise ValueError("adaptive noise tuning needs a scorer")
    q = config.m / n
    pricing = _Pricing(config.privacy, q, config.n_d, config.n_g)
    ledger = accountant.BudgetLedger(pricing.epsilon_total, pricing.delta)
    g, d = init_networks(config, data.shape[1])
    state = ScheduleState.start(pricing.sigma0, schedule.k if schedule.kind == "ant" else 1.0,
                                schedule.tau, schedule.use_average, schedule.t_star)
    scores: list[float] = []
    records: list[IterationRecord] = []
    halt = HALT_ITERATIONS
    m = config.m
    head = config.head
    report = TrainReport(records, g, d, halt, ledger, pricing.sigma0, q)
    for t in range(config.n_g):
        if schedule.kind == "ant":
            sigma = state.sigma_t
        else:
            sigma = predefined_sigma(schedule.kind, pricing.sigma0, schedule.k, t, schedule.t_star)
        charge = pricing.price(sigma)
        if not ledger.can_afford(charge):
            halt = HALT_BUDGET
            break
        try:
            noisy = math.nan
            for j in range(config.n_d):
                path = SeedPath(config.seed, t, j)
                batch = subsample_batch(data, m, path.with_purpose(rngmod.REAL_BATCH)).x
                z = prior_batch(m, config.latent_dim, path.with_purpose(rngmod.PRIOR_BATCH))
                d, noisy = discriminator_step(d, g, batch, z, sigma, path, config.lr_d,
                                              config.shared_noise, head)
            gpath = SeedPath(config.seed, t, config.n_d, rngmod.GEN_PRIOR)
            z = prior_batch(m, config.latent_dim, gpath)
            g = generator_step(g, d, z, config.lr_g, t + 1, head, gpath)
        except TrainingDivergenceError as exc:
            report.generator, report.discriminator, report.halt_reason = g, d, HALT_DIVERGED
            exc.report = report
            raise
        ledger.charge(t + 1, sigma, charge)
        score = float(scorer(g, t)) if scorer is not None else math.nan
        if scorer is not None:
            scores.append(score)
            state = ant_next_sigma(state, score) if schedule.kind == "ant" else state
        mean_score = math.fsum(scores) / len(scores) if scores else math.nan
        records.append(IterationRecord(t + 1, sigma, noisy, score, mean_score, charge, ledger.remaining))
    report.generator, report.discriminator, report.halt_reason = g, d, halt
    return report


def train_rdp_gan(config: TrainConfig, data, scorer: Scorer | None = None) -> TrainReport:
    """Fixed-noise training; the configured schedule is ignored."""
    return _run(config, data, scorer, ScheduleConfig("fixed"))


def train_ant_rdp_gan(config: TrainConfig, data, scorer: Scorer | None = None) -> TrainReport:
    """Training under ``config.schedule``; halts when the budget runs out."""
    return _run(config, data, scorer, config.schedule)


def train(config: TrainConfig, data, scorer: Scorer | None = None) -> TrainReport:
    if config.schedule.kind == "fixed":
        return train_rdp_gan(config, data, scorer)
    return train_ant_rdp_gan(config, data, scorer)


def ring_scorer(real_points, seed: int, n_samples: int = 1000, bins: int = 8,
                extent: float = 2.5) -> Scorer:
    """Histogram proximity between generated and real points, in [0, 1]."""
    real_pmf = histogram_pmf_2d(real_points, bins, extent)

    def score(g_net, t):
        pts = sample_generator(g_net, n_samples, SeedPath(seed, t, 0, rngmod.SCORING))
        return histogram_score(histogram_pmf_2d(pts, bins, extent), real_pmf)

    return score


def generate_tabular(g_net, schema: TabularSchema, count: int, seed_path) -> TabularDataset:
    """Decode generator samples into rows by a Gumbel-max draw per attribute block."""
    head = GumbelSoftmaxHead(tuple(a.size for a in schema.attributes))
    return TabularDataset.decode(schema, sample_generator(g_net, count, seed_path, head))


def tabular_scorer(classifier: nn.DenseNet, schema: TabularSchema, seed: int,
                   n_samples: int = 500) -> Scorer:
    """Accuracy of a real-data classifier on generated rows against their own labels."""

    def score(g_net, t):
        fake = generate_tabular(g_net, schema, n_samples, SeedPath(seed, t, 0, rngmod.SCORING))
        return float(np.mean(predict(classifier, fake.features()) == fake.labels))

    return score

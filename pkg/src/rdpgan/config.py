"""Flat ``key=value`` experiment configuration.

Keys carry dotted section prefixes (``train.n_g=1000``). Blank lines and lines
starting with ``#`` are ignored. Every key is validated against the table of
known keys below; unknown keys are an error so typos do not pass silently.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .trainer import PrivacyConfig, ScheduleConfig, TrainConfig

DATA_KINDS = ("ring", "tabular", "file")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none") else float(text)


def _opt_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none") else int(text)


def _opt_bool(text: str) -> bool | None:
    return None if text.strip().lower() in ("", "auto") else _bool(text)


# key -> (parser, default)
KEYS = {
    "seed": (int, 0),
    "out": (str, "out"),
    "data.kind": (str, "ring"),
    "data.path": (str, ""),
    "data.test_path": (str, ""),
    "data.seed": (int, 0),
    "data.count": (_opt_int, None),
    "data.test_count": (int, 10000),
    "data.scale": (float, 1.0),
    "data.n_modes": (int, 8),
    "data.radius": (float, 2.0),
    "data.std": (float, 0.2),
    "train.n_g": (int, 1000),
    "train.n_d": (int, 5),
    "train.m": (int, 64),
    "train.lr_d": (_opt_float, None),
    "train.lr_g": (_opt_float, None),
    "train.latent_dim": (int, 8),
    "train.hidden": (_ints, (32, 32)),
    "train.hidden_act": (str, "tanh"),
    "train.shared_noise": (_bool, False),
    "train.gumbel_tau": (float, 0.5),
    "privacy.enabled": (_opt_bool, None),
    "privacy.epsilon_total": (_opt_float, None),
    "privacy.sigma": (_opt_float, None),
    "privacy.delta": (float, 1e-5),
    "privacy.delta_s": (float, 0.3125),
    "privacy.alpha": (_opt_float, None),
    "schedule.kind": (str, "fixed"),
    "schedule.k": (float, 1.0),
    "schedule.tau": (float, 0.005),
    "schedule.t_star": (int, 100),
    "schedule.use_average": (_bool, True),
    "account.sigmas": (_floats, ()),
    "account.q": (_opt_float, None),
    "compare.sigma_min": (float, 0.5),
    "compare.sigma_max": (float, 100.0),
    "compare.points": (int, 60),
    "eval.checkpoint": (str, ""),
    "eval.samples": (int, 5000),
    "eval.bins": (int, 8),
    "eval.extent": (float, 2.5),
    "eval.classifier_rows": (int, 5000),
    "sweep.schedule": (str, "ant"),
    "sweep.ks": (_floats, (0.7, 0.8, 0.9)),
    "sweep.baseline": (_bool, True),
    "score.samples": (int, 500),
}


def parse_text(text: str) -> dict[str, str]:
    """Split config text into raw ``key -> value`` strings."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def out(self) -> str:
        return self.values["out"]

    @property
    def data_kind(self) -> str:
        return self.values["data.kind"]

    def train_rows(self) -> int:
        """Training-set size for generated data (ring: 2000, tabular: 20000 times scale)."""
        count = self.values["data.count"]
        if self.data_kind == "ring":
            return 2000 if count is None else count
        return max(1, round((20000 if count is None else count) * self.values["data.scale"]))

    def test_rows(self) -> int:
        return max(1, round(self.values["data.test_count"] * self.values["data.scale"]))

    def with_overrides(self, seed: int | None = None, out: str | None = None) -> "ExperimentConfig":
        values = dict(self.values)
        if seed is not None:
            values["seed"] = seed
        if out is not None:
            values["out"] = out
        return replace(self, values=values)

    def privacy(self) -> PrivacyConfig | None:
        v = self.values
        enabled = v["privacy.enabled"]
        if enabled is None:
            # Privacy is on when a budget or a noise scale is given.
            enabled = v["privacy.epsilon_total"] is not None or v["privacy.sigma"] is not None
        if not enabled:
            return None
        return PrivacyConfig(epsilon_total=v["privacy.epsilon_total"], sigma=v["privacy.sigma"],
                             delta=v["privacy.delta"], delta_s=v["privacy.delta_s"],
                             alpha=v["privacy.alpha"])

    def schedule(self, kind: str | None = None, k: float | None = None) -> ScheduleConfig:
        v = self.values
        return ScheduleConfig(kind or v["schedule.kind"], v["schedule.k"] if k is None else k,
                              v["schedule.tau"], v["schedule.t_star"], v["schedule.use_average"])

    def train_config(self, schema=None, schedule: ScheduleConfig | None = None) -> TrainConfig:
        v = self.values
        kwargs = dict(n_g=v["train.n_g"], n_d=v["train.n_d"], m=v["train.m"],
                      latent_dim=v["train.latent_dim"], hidden=v["train.hidden"],
                      hidden_act=v["train.hidden_act"], seed=v["seed"],
                      schedule=schedule or self.schedule(), privacy=self.privacy(),
                      shared_noise=v["train.shared_noise"])
        for key in ("lr_d", "lr_g"):
            if v[f"train.{key}"] is not None:
                kwargs[key] = v[f"train.{key}"]
        if schema is not None:
            return TrainConfig.for_schema(schema, gumbel_tau=v["train.gumbel_tau"], **kwargs)
        return TrainConfig(**kwargs)


def _validate(cfg: ExperimentConfig) -> None:
    v = cfg.values
    if v["data.kind"] not in DATA_KINDS:
        raise ConfigError(f"data.kind must be one of {DATA_KINDS}, got {v['data.kind']!r}")
    if v["data.kind"] == "file":
        for key in ("data.path", "data.test_path"):
            if key == "data.test_path" and not v[key]:
                continue
            if not v[key] or not os.path.isfile(v[key]):
                raise ConfigError(f"{key} does not name an existing file: {v[key]!r}")
    if v["eval.checkpoint"] and not os.path.isfile(v["eval.checkpoint"]):
        raise ConfigError(f"eval.checkpoint does not exist: {v['eval.checkpoint']!r}")
    if not 0 < v["data.scale"] <= 1:
        raise ConfigError("data.scale must lie in (0, 1]")
    if v["train.gumbel_tau"] <= 0:
        raise ConfigError("train.gumbel_tau must be positive")
    if v["seed"] < 0 or v["data.seed"] < 0:
        raise ConfigError("seeds must be non-negative")
    if any(s <= 0 or not math.isfinite(s) for s in v["account.sigmas"]):
        raise ConfigError("account.sigmas must be positive and finite")
    if not v["sweep.ks"]:
        raise ConfigError("sweep.ks needs at least one candidate")
    try:
        cfg.privacy()
        cfg.schedule()
        cfg.schedule(v["sweep.schedule"])
        cfg.train_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(text: str, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    """Parse and validate config text; raises ConfigError on any problem."""
    raw = parse_text(text)
    values = {}
    for key, (parser, default) in KEYS.items():
        if key in raw:
            try:
                values[key] = parser(raw[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from exc
        else:
            values[key] = default
    cfg = ExperimentConfig(values).with_overrides(seed, out)
    _validate(cfg)
    return cfg


def load_config_file(path, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return load_config(text, seed, out)

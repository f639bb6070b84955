"""Datasets: a 2-D Gaussian ring, a synthetic census-like table, file I/O, batching.

Tabular rows are stored as integer codes, one column per attribute: the level
index for categorical attributes and the bin index for binned-continuous ones.
Networks see the one-hot encoding of those codes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import IngestionError
from .rng import DATA, SeedPath, stream


@dataclass(frozen=True)
class Attribute:
    """A categorical attribute (``levels``) or an equal-width binned range."""

    name: str
    levels: tuple[str, ...] = ()
    low: float | None = None
    high: float | None = None
    bins: int = 0

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if self.levels and self.bins:
            raise ValueError(f"attribute {self.name!r} is both categorical and binned")
        if not self.levels:
            if self.bins < 1 or self.low is None or self.high is None or not self.high > self.low:
                raise ValueError(f"attribute {self.name!r} needs levels or a valid binned range")
        if len(set(self.levels)) != len(self.levels):
            raise ValueError(f"attribute {self.name!r} has duplicate levels")

    @classmethod
    def categorical(cls, name, levels):
        return cls(name, tuple(levels))

    @classmethod
    def binned(cls, name, low, high, bins):
        return cls(name, (), float(low), float(high), int(bins))

    @property
    def kind(self) -> str:
        return "categorical" if self.levels else "binned"

    @property
    def size(self) -> int:
        return len(self.levels) if self.levels else self.bins

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.low, self.high, self.bins + 1)

    @property
    def labels(self) -> tuple[str, ...]:
        if self.levels:
            return self.levels
        e = self.edges
        return tuple(f"[{e[i]:g},{e[i + 1]:g})" for i in range(self.bins))

    def bin_index(self, value: float) -> int:
        if not self.low <= value <= self.high:
            raise ValueError(f"{value} outside [{self.low}, {self.high}] for {self.name!r}")
        width = (self.high - self.low) / self.bins
        return min(int((value - self.low) // width), self.bins - 1)

    def midpoint(self, index: int) -> float:
        e = self.edges
        return float((e[index] + e[index + 1]) / 2.0)


@dataclass(frozen=True)
class TabularSchema:
    attributes: tuple[Attribute, ...]
    label: str

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        if not self.attributes:
            raise ValueError("schema needs at least one attribute")
        names = self.names
        if len(set(names)) != len(names):
            raise ValueError("attribute names must be unique")
        if self.label not in names:
            raise ValueError(f"label attribute {self.label!r} not in schema")
        lab = self[self.label]
        if lab.kind != "categorical" or lab.size != 2:
            raise ValueError("label attribute must be categorical with two levels")

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    def __getitem__(self, name) -> Attribute:
        for a in self.attributes:
            if a.name == name:
                return a
        raise KeyError(name)

    def index(self, name) -> int:
        return self.names.index(name)

    @property
    def width(self) -> int:
        return sum(a.size for a in self.attributes)

    def offsets(self) -> list[int]:
        return list(itertools.accumulate([0] + [a.size for a in self.attributes]))

    def feature_width(self) -> int:
        return self.width - self[self.label].size


@dataclass(frozen=True)
class TabularDataset:
    schema: TabularSchema
    codes: np.ndarray
    rejected: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64).reshape(-1, len(self.schema.attributes))
        for j, a in enumerate(self.schema.attributes):
            col = codes[:, j]
            if col.size and (col.min() < 0 or col.max() >= a.size):
                raise ValueError(f"codes out of range for attribute {a.name!r}")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    def __len__(self):
        return self.codes.shape[0]

    def column(self, name) -> np.ndarray:
        return self.codes[:, self.schema.index(name)]

    @property
    def labels(self) -> np.ndarray:
        return self.column(self.schema.label).astype(float)

    def encode(self) -> np.ndarray:
        """One-hot encoding of every attribute, label included."""
        return _one_hot(self.codes, self.schema.attributes)

    def features(self) -> np.ndarray:
        """One-hot encoding of every attribute except the label."""
        li = self.schema.index(self.schema.label)
        attrs = [a for j, a in enumerate(self.schema.attributes) if j != li]
        return _one_hot(np.delete(self.codes, li, axis=1), attrs)

    @classmethod
    def decode(cls, schema: TabularSchema, matrix) -> "TabularDataset":
        """Inverse of ``encode``: blockwise argmax over each attribute's columns."""
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[1] != schema.width:
            raise ValueError(f"matrix width {matrix.shape} != schema width {schema.width}")
        off = schema.offsets()
        codes = np.stack(
            [np.argmax(matrix[:, off[j]:off[j + 1]], axis=1) for j in range(len(off) - 1)],
            axis=1,
        ) if len(matrix) else np.zeros((0, len(schema.attributes)), dtype=np.int64)
        return cls(schema, codes)


def _one_hot(codes, attributes):
    n = codes.shape[0]
    width = sum(a.size for a in attributes)
    out = np.zeros((n, width))
    off = 0
    rows = np.arange(n)
    for j, a in enumerate(attributes):
        out[rows, off + codes[:, j]] = 1.0
        off += a.size
    return out


@dataclass(frozen=True)
class CorrelationSpec:
    """Independent feature marginals plus a logistic label model.

    ``P(label = levels[1] | row) = sigmoid(intercept + sum_a log_odds[a][code_a])``.
    """

    marginals: dict
    log_odds: dict = field(default_factory=dict)
    intercept: float = 0.0

    def validate(self, schema: TabularSchema):
        for a in schema.attributes:
            if a.name == schema.label:
                if a.name in self.marginals or a.name in self.log_odds:
                    raise ValueError("the label attribute is driven by the label model only")
                continue
            if a.name not in self.marginals:
                raise ValueError(f"no marginal given for attribute {a.name!r}")
            p = np.asarray(self.marginals[a.name], dtype=float)
            if p.shape != (a.size,) or np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
                raise ValueError(f"marginal for {a.name!r} must be {a.size} probabilities summing to 1")
        unknown = (set(self.marginals) | set(self.log_odds)) - set(schema.names)
        if unknown:
            raise ValueError(f"correlation spec names unknown attributes: {sorted(unknown)}")
        for name, lo in self.log_odds.items():
            if len(lo) != schema[name].size:
                raise ValueError(f"log-odds for {name!r} needs {schema[name].size} entries")

    def feature_pmf(self, name) -> np.ndarray:
        return np.asarray(self.marginals[name], dtype=float)

    def label_pmf(self, schema: TabularSchema) -> np.ndarray:
        """Exact label distribution by enumerating attributes that carry log-odds."""
        self.validate(schema)
        names = list(self.log_odds)
        logit = np.array([self.intercept])
        prob = np.array([1.0])
        for name in names:
            lo = np.asarray(self.log_odds[name], dtype=float)
            p = self.feature_pmf(name)
            logit = (logit[:, None] + lo[None, :]).ravel()
            prob = (prob[:, None] * p[None, :]).ravel()
        p1 = float(np.sum(prob / (1.0 + np.exp(-logit))))
        return np.array([1.0 - p1, p1])

    def pmf(self, schema: TabularSchema, name) -> np.ndarray:
        return self.label_pmf(schema) if name == schema.label else self.feature_pmf(name)


def adult_like_schema() -> TabularSchema:
    """Eight attributes in the spirit of the census income task."""
    return TabularSchema(
        (
            Attribute.binned("age", 17, 90, 9),
            Attribute.categorical("occupation", ["Sales", "Tech-support", "Prof-specialty",
                                                 "Other-service", "Craft-repair", "Exec-managerial"]),
            Attribute.categorical("education", ["HS-grad", "Some-college", "Bachelors",
                                                "Masters", "Doctorate"]),
            Attribute.categorical("gender", ["Male", "Female"]),
            Attribute.categorical("workclass", ["Private", "State-gov", "Self-emp", "Federal-gov"]),
            Attribute.categorical("marital", ["Never-married", "Married-civ-spouse",
                                              "Divorced", "Separated"]),
            Attribute.binned("hours", 1, 99, 5),
            Attribute.categorical("income", ["<=50K", ">50K"]),
        ),
        label="income",
    )


def adult_like_spec() -> CorrelationSpec:
    return CorrelationSpec(
        marginals={
            "age": [0.12, 0.16, 0.17, 0.16, 0.13, 0.10, 0.08, 0.05, 0.03],
            "occupation": [0.18, 0.08, 0.20, 0.22, 0.20, 0.12],
            "education": [0.35, 0.25, 0.22, 0.13, 0.05],
            "gender": [0.66, 0.34],
            "workclass": [0.70, 0.10, 0.12, 0.08],
            "marital": [0.33, 0.46, 0.14, 0.07],
            "hours": [0.05, 0.25, 0.55, 0.12, 0.03],
        },
        log_odds={
            "education": [-1.6, -0.8, 0.6, 1.4, 2.2],
            "marital": [-1.8, 1.6, -1.0, -1.4],
            "age": [-2.5, -1.0, 0.0, 0.5, 0.7, 0.7, 0.5, 0.0, -0.5],
            "hours": [-1.5, -0.8, 0.0, 0.8, 1.0],
        },
        intercept=-1.0,
    )


def gen_mini_tabular(schema: TabularSchema, spec: CorrelationSpec, count: int, seed: int) -> TabularDataset:
    """Sample ``count`` rows from independent marginals and the label model."""
    spec.validate(schema)
    rng = stream(SeedPath(seed, purpose=DATA))
    codes = np.zeros((count, len(schema.attributes)), dtype=np.int64)
    logit = np.full(count, float(spec.intercept))
    for j, a in enumerate(schema.attributes):
        if a.name == schema.label:
            continue
        codes[:, j] = rng.choice(a.size, size=count, p=spec.feature_pmf(a.name))
        if a.name in spec.log_odds:
            logit += np.asarray(spec.log_odds[a.name], dtype=float)[codes[:, j]]
    p1 = 1.0 / (1.0 + np.exp(-logit))
    codes[:, schema.index(schema.label)] = (rng.random(count) < p1).astype(np.int64)
    return TabularDataset(schema, codes)


def gen_gaussian_ring(n_modes: int, radius: float, std: float, count: int, seed: int) -> np.ndarray:
    """Points from an equal-weight mixture of isotropic Gaussians on a circle."""
    if n_modes < 1:
        raise ValueError("need at least one mode")
    rng = stream(SeedPath(seed, purpose=DATA))
    angles = 2.0 * np.pi * np.arange(n_modes) / n_modes
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    modes = rng.integers(n_modes, size=count)
    return centers[modes] + std * rng.standard_normal((count, 2))


class Batch(NamedTuple):
    x: np.ndarray
    labels: np.ndarray | None
    indices: np.ndarray


def subsample_batch(data, m: int, seed_path, labels=None) -> Batch:
    """Uniform sample of ``m`` rows without replacement.

    ``data`` is an array of encoded rows or a ``TabularDataset`` (encoded in
    full, label included). The accountant is charged at ``q = m / n``.
    """
    if isinstance(data, TabularDataset):
        labels = data.labels if labels is None else labels
        data = data.encode()
    data = np.asarray(data)
    n = data.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"batch size {m} must lie in [1, {n}]")
    idx = stream(SeedPath(*seed_path)).choice(n, size=m, replace=False)
    return Batch(data[idx], None if labels is None else np.asarray(labels)[idx], idx)


def _format_cell(attr: Attribute, code: int) -> str:
    if attr.kind == "categorical":
        return attr.levels[code]
    return repr(attr.midpoint(code))


def save_delimited(path, dataset: TabularDataset) -> None:
    attrs = dataset.schema.attributes
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(a.name for a in attrs) + "\n")
        for row in dataset.codes:
            fh.write(",".join(_format_cell(a, int(c)) for a, c in zip(attrs, row)) + "\n")


def _parse_cell(attr: Attribute, cell: str) -> int:
    if '"' in cell:
        raise ValueError("quoted cells are not supported")
    if attr.kind == "categorical":
        if cell not in attr.levels:
            raise ValueError(f"unknown level {cell!r} for {attr.name!r}")
        return attr.levels.index(cell)
    try:
        value = float(cell)
    except ValueError:
        raise ValueError(f"cannot parse {cell!r} as a number for {attr.name!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"non-finite value for {attr.name!r}")
    return attr.bin_index(value)


def load_delimited(path, schema: TabularSchema) -> TabularDataset:
    """Read a comma-separated file with a header row.

    Rows that fail validation are dropped and listed in ``rejected`` as
    ``(line_number, reason)`` with 1-based line numbers.

    Raises:
        IngestionError: when the header is missing or does not match the schema.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if not lines or not lines[0].strip():
        raise IngestionError(f"{path}: missing header row")
    header = [h.strip() for h in lines[0].rstrip("\r").split(",")]
    missing = [n for n in schema.names if n not in header]
    extra = [h for h in header if h not in schema.names]
    if missing or extra:
        raise IngestionError(f"{path}: header mismatch, missing={missing} unexpected={extra}")
    if len(set(header)) != len(header):
        raise IngestionError(f"{path}: duplicate columns in header")
    position = [header.index(n) for n in schema.names]
    rows, rejected = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            rejected.append((lineno, f"expected {len(header)} fields, found {len(cells)}"))
            continue
        try:
            rows.append([_parse_cell(a, cells[p].strip()) for a, p in zip(schema.attributes, position)])
        except ValueError as exc:
            rejected.append((lineno, str(exc)))
    codes = np.array(rows, dtype=np.int64).reshape(-1, len(schema.attributes))
    return TabularDataset(schema, codes, tuple(rejected))

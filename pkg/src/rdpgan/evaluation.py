"""Utility metrics: per-attribute PMFs, index-weighted error, classifier accuracy."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import nn
from .data import TabularDataset
from .rng import SCORING, SeedPath, stream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Pmf:
    attribute: str
    labels: tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or len(p) != len(self.labels):
            raise ValueError("one probability per bin label is required")
        if np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
            raise ValueError(f"PMF for {self.attribute!r} is not a distribution")
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "probs", p)

    def __len__(self):
        return len(self.labels)


def pmf_from_codes(codes, size: int, attribute: str = "", labels=None) -> Pmf:
    codes = np.asarray(codes, dtype=np.int64)
    if codes.size == 0:
        raise ValueError("cannot build a PMF from an empty sample")
    counts = np.bincount(codes, minlength=size).astype(float)
    if len(counts) != size:
        raise ValueError("codes fall outside the bin range")
    labels = tuple(labels) if labels is not None else tuple(str(i + 1) for i in range(size))
    return Pmf(attribute, labels, counts / counts.sum())


def pmf_of_attribute(dataset: TabularDataset, attribute: str) -> Pmf:
    """Empirical PMF of one attribute over the schema's levels or bins."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    attr = dataset.schema[attribute]
    return pmf_from_codes(dataset.column(attribute), attr.size, attribute, attr.labels)


def pmf_of_values(values, edges, attribute: str = "") -> Pmf:
    """Binned PMF of continuous values; values outside ``edges`` are an error."""
    values = np.asarray(values, dtype=float)
    edges = np.asarray(edges, dtype=float)
    if values.size == 0:
        raise ValueError("cannot build a PMF from an empty sample")
    if values.min() < edges[0] or values.max() > edges[-1]:
        raise ValueError("binning does not cover the data range")
    counts, _ = np.histogram(values, bins=edges)
    labels = tuple(f"[{edges[i]:g},{edges[i + 1]:g})" for i in range(len(edges) - 1))
    return Pmf(attribute, labels, counts / counts.sum())


def histogram_pmf_2d(points, bins: int = 8, extent: float = 2.5, attribute: str = "xy") -> Pmf:
    """Flattened ``bins x bins`` histogram on ``[-extent, extent]^2``.

    Points outside the square are counted in the nearest edge cell, so the
    result is a distribution for any finite input.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
        raise ValueError("expected a non-empty (n, 2) array of points")
    width = 2.0 * extent / bins
    ij = np.clip(np.floor((pts + extent) / width), 0, bins - 1).astype(np.int64)
    return pmf_from_codes(ij[:, 0] * bins + ij[:, 1], bins * bins, attribute)


def _check_pair(p_g: Pmf, p_r: Pmf):
    if len(p_g) != len(p_r) or p_g.labels != p_r.labels:
        raise ValueError("PMFs must share the same bins in the same order")


def abs_avg_error(p_g: Pmf, p_r: Pmf) -> float:
    """``sum_x |p_g(x) - p_r(x)| * x`` with 1-based bin index ``x``."""
    _check_pair(p_g, p_r)
    weights = np.arange(1, len(p_g) + 1, dtype=float)
    return float(np.sum(np.abs(p_g.probs - p_r.probs) * weights))


def l1_error(p_g: Pmf, p_r: Pmf) -> float:
    _check_pair(p_g, p_r)
    return float(np.sum(np.abs(p_g.probs - p_r.probs)))


def histogram_score(p_g: Pmf, p_r: Pmf) -> float:
    """One minus total variation distance, in [0, 1]."""
    return 1.0 - 0.5 * l1_error(p_g, p_r)


def _mean_bce(net, x, y):
    p = net(x)[:, 0]
    loss, _ = nn.cross_entropy_loss(p, y)
    return loss / len(y)


def train_eval_classifier(x, y, seed: int = 0, hidden: int = 16, learning_rate: float = 0.5,
                          batch_size: int = 128, max_epochs: int = 200, patience: int = 10,
                          val_fraction: float = 0.2) -> nn.DenseNet:
    """Fit a three-layer sigmoid perceptron (input, hidden, output) for a binary label.

    Mini-batch SGD on mean cross-entropy. Stops when validation loss has not
    improved for ``patience`` epochs or after ``max_epochs``; returns the
    parameters with the best validation loss.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if len(np.unique(y)) < 2:
        raise ValueError("classifier training needs both classes present")
    rng = stream(SeedPath(seed, purpose=SCORING))
    order = rng.permutation(len(y))
    n_val = max(1, int(round(val_fraction * len(y))))
    val, tr = order[:n_val], order[n_val:]
    net = nn.mlp(x.shape[1], [hidden], 1, "sigmoid", "sigmoid", rng)
    best, best_loss, stale = net, _mean_bce(net, x[val], y[val]), 0
    for _ in range(max_epochs):
        perm = tr[rng.permutation(len(tr))]
        for start in range(0, len(perm), batch_size):
            idx = perm[start:start + batch_size]
            cache, p = nn.forward(net, x[idx])
            _, err = nn.cross_entropy_loss(p, y[idx, None])
            grads = nn.backward(net, cache, err / len(idx))
            net = nn.sgd_update(net, grads, learning_rate)
        val_loss = _mean_bce(net, x[val], y[val])
        if val_loss < best_loss - 1e-6:
            best, best_loss, stale = net, val_loss, 0
        else:
            stale += 1
            if stale >= patience:
                break
    return best


def predict(classifier: nn.DenseNet, samples) -> np.ndarray:
    return (classifier(samples)[:, 0] >= 0.5).astype(float)


def utility_accuracy(classifier: nn.DenseNet, samples, labels) -> float:
    samples = np.asarray(samples, dtype=float)
    labels = np.asarray(labels, dtype=float).ravel()
    if len(labels) == 0:
        warnings.warn("accuracy of an empty sample set is reported as 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(np.mean(predict(classifier, samples) == labels))


def majority_accuracy(labels) -> float:
    labels = np.asarray(labels, dtype=float)
    p = labels.mean()
    return float(max(p, 1.0 - p))

"""Class-imbalance numerics: effective-number weighting, class-balanced
losses, and the class-aware batch sampler.

These are offline evaluators for cross-checking an external trainer and for
analysis; no gradients are computed here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .core import TaskSchema, log_softmax
from .errors import ConfigError

DEFAULT_BETA = 0.999
DEFAULT_W_MIN = 0.25
DEFAULT_W_MAX = 4.0


@dataclass(frozen=True)
class WeightConfig:
    """Effective-number weighting knobs: saturation rate and clamp bounds."""

    beta: float = DEFAULT_BETA
    w_min: float = DEFAULT_W_MIN
    w_max: float = DEFAULT_W_MAX

    def __post_init__(self):
        if not (0.0 <= self.beta < 1.0):
            raise ConfigError(f"beta must be in [0, 1), got {self.beta}")
        if not (0.0 < self.w_min <= self.w_max):
            raise ConfigError(f"need 0 < w_min <= w_max, got [{self.w_min}, {self.w_max}]")


@dataclass(frozen=True)
class ClassWeights:
    """Final per-class weights plus every intermediate stage for audit.

    The clamp bound holds for ``clamped``; the final unit-mean
    re-normalization can push ``weights`` marginally outside
    [w_min, w_max] by the re-normalization factor.
    """

    weights: tuple[float, ...]
    counts: tuple[int, ...]
    raw: tuple[float, ...]
    normalized: tuple[float, ...]
    clamped: tuple[float, ...]

    def __post_init__(self):
        if any(c < 1 for c in self.counts):
            raise ConfigError(f"all counts must be >= 1, got {self.counts}")
        if abs(float(np.mean(self.weights)) - 1.0) > 1e-9:
            raise ConfigError(f"final weights must have unit mean, got {np.mean(self.weights)!r}")


@dataclass(frozen=True)
class LossConfig:
    """Focusing exponent and label-smoothing mass.

    Smoothing applies to the class-balanced cross-entropy only; the focal
    loss uses the hard gold-class probability as written.
    """

    gamma: float = 2.0
    label_smoothing_eps: float = 0.05

    def __post_init__(self):
        if self.gamma < 0.0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if not (0.0 <= self.label_smoothing_eps < 1.0):
            raise ConfigError(f"label_smoothing_eps must be in [0, 1), got {self.label_smoothing_eps}")


@dataclass(frozen=True)
class SamplerConfig:
    batch_size: int
    num_classes: int
    seed: int
    num_batches: int

    def __post_init__(self):
        if self.batch_size < 1 or self.num_classes < 1 or self.num_batches < 1:
            raise ConfigError("batch_size, num_classes and num_batches must be positive")

    @property
    def per_class_quota(self) -> int:
        return self.batch_size // self.num_classes


def effective_number(n: int, beta: float) -> float:
    """Saturation-corrected sample count (1 - beta^n) / (1 - beta).

    Grows with n but saturates at 1/(1-beta); beta=0 collapses every count
    to 1 (no re-weighting signal beyond presence).
    """
    if n < 1:
        raise ConfigError(f"count must be >= 1, got {n}")
    if not (0.0 <= beta < 1.0):
        raise ConfigError(f"beta must be in [0, 1), got {beta}")
    if beta == 0.0:
        return 1.0
    return float((1.0 - beta ** n) / (1.0 - beta))


def class_weights(counts: Sequence[int], cfg: WeightConfig = WeightConfig()) -> ClassWeights:
    """Inverse effective-number weights, unit-mean normalized, clamped,
    then re-normalized to unit mean — in exactly that order.
    """
    counts = tuple(int(c) for c in counts)
    for c in counts:
        if c < 1:
            raise ConfigError(
                f"class count {c} < 1: drop or merge the empty class before weighting"
            )
    en = np.asarray([effective_number(c, cfg.beta) for c in counts], dtype=np.float64)
    raw = 1.0 / en
    normalized = raw * (len(counts) / raw.sum())
    clamped = np.clip(normalized, cfg.w_min, cfg.w_max)
    final = clamped / clamped.mean()
    return ClassWeights(
        weights=tuple(final.tolist()),
        counts=counts,
        raw=tuple(raw.tolist()),
        normalized=tuple(normalized.tolist()),
        clamped=tuple(clamped.tolist()),
    )


def _weight_vector(weights: "ClassWeights | Sequence[float]") -> tuple[float, ...]:
    if isinstance(weights, ClassWeights):
        return weights.weights
    return tuple(float(w) for w in weights)


def _check_arity(logits: Sequence[float], gold_index: int, weights: tuple[float, ...]) -> None:
    if len(weights) != len(logits):
        raise ConfigError(
            f"weight arity {len(weights)} does not match logit arity {len(logits)}"
        )
    if not (0 <= gold_index < len(logits)):
        raise ConfigError(f"gold_index {gold_index} out of range for {len(logits)} classes")


def cb_ce_loss(
    logits: Sequence[float],
    gold_index: int,
    weights: "ClassWeights | Sequence[float]",
    cfg: LossConfig = LossConfig(),
) -> float:
    """Class-balanced cross-entropy with a smoothed target.

    Target is (1-eps) * onehot(gold) + eps/C; the whole sum is scaled by the
    gold class's balance weight. Weights may be a ClassWeights or any plain
    per-class vector.
    """
    w = _weight_vector(weights)
    _check_arity(logits, gold_index, w)
    logp = log_softmax(logits)
    c = len(logp)
    eps = cfg.label_smoothing_eps
    target = np.full(c, eps / c, dtype=np.float64)
    target[gold_index] += 1.0 - eps
    return float(-w[gold_index] * (target * logp).sum())


def cb_focal_loss(
    logits: Sequence[float],
    gold_index: int,
    weights: "ClassWeights | Sequence[float]",
    cfg: LossConfig = LossConfig(),
) -> float:
    """Class-balanced focal loss: -w_y * (1 - p_y)^gamma * log(p_y).

    Down-weights easy examples; with gamma=0 it reduces exactly to the
    unsmoothed class-balanced cross-entropy.
    """
    w = _weight_vector(weights)
    _check_arity(logits, gold_index, w)
    logp = log_softmax(logits)
    p_y = float(np.exp(logp[gold_index]))
    return float(-w[gold_index] * (1.0 - p_y) ** cfg.gamma * logp[gold_index])


def class_aware_batches(
    indices_by_class: Sequence[Sequence[int]] | Mapping[int, Sequence[int]],
    cfg: SamplerConfig,
) -> Iterator[tuple[int, ...]]:
    """Yield batches with a fixed per-class quota k = floor(B/C).

    Every class contributes exactly k draws sampled with replacement, and
    each combined batch is shuffled to avoid positional biases. The stream
    is fully determined by the seed (PCG64); construct one iterator per
    worker with distinct seeds for parallel use.
    """
    if isinstance(indices_by_class, Mapping):
        partitions = [np.asarray(indices_by_class[k], dtype=np.int64)
                      for k in sorted(indices_by_class)]
    else:
        partitions = [np.asarray(p, dtype=np.int64) for p in indices_by_class]
    if len(partitions) != cfg.num_classes:
        raise ConfigError(
            f"expected {cfg.num_classes} class partitions, got {len(partitions)}"
        )
    k = cfg.per_class_quota
    if k < 1:
        raise ConfigError(
            f"batch too small for class count: floor({cfg.batch_size}/{cfg.num_classes}) = 0"
        )
    for ci, part in enumerate(partitions):
        if part.size == 0:
            raise ConfigError(f"class partition {ci} is empty")

    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    for _ in range(cfg.num_batches):
        drawn = [part[rng.integers(0, part.size, size=k)] for part in partitions]
        batch = np.concatenate(drawn)
        rng.shuffle(batch)
        yield tuple(int(i) for i in batch)


def read_class_counts(path: str | Path, schema: TaskSchema) -> tuple[int, ...]:
    """Read the label -> count JSON map in schema label order."""
    with open(path, encoding="utf-8") as fh:
        by_label = json.load(fh)
    missing = [lab for lab in schema.class_labels if lab not in by_label]
    if missing:
        raise ConfigError(f"class counts missing labels: {missing}")
    return tuple(int(by_label[lab]) for lab in schema.class_labels)


def write_weights_json(path: str | Path, schema: TaskSchema, cw: ClassWeights) -> None:
    """Persist final weights keyed by label plus all intermediates for audit."""
    doc = {
        "task_id": schema.task_id,
        "weights": {lab: w for lab, w in zip(schema.class_labels, cw.weights)},
        "counts": {lab: c for lab, c in zip(schema.class_labels, cw.counts)},
        "intermediates": {
            "raw": list(cw.raw),
            "normalized": list(cw.normalized),
            "clamped": list(cw.clamped),
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_weights_json(path: str | Path, schema: TaskSchema) -> ClassWeights:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("task_id") != schema.task_id:
        raise ConfigError(
            f"weights file is for task {doc.get('task_id')!r}, not {schema.task_id!r}"
        )
    return ClassWeights(
        weights=tuple(doc["weights"][lab] for lab in schema.class_labels),
        counts=tuple(doc["counts"][lab] for lab in schema.class_labels),
        raw=tuple(doc["intermediates"]["raw"]),
        normalized=tuple(doc["intermediates"]["normalized"]),
        clamped=tuple(doc["intermediates"]["clamped"]),
    )

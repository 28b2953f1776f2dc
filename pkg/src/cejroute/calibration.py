"""Post-hoc calibration: temperature scaling fitted by dev-set NLL, and a
binary decision threshold tuned for dev macro-F1.

Temperature scaling never changes the argmax, so it is safe to apply to
multi-class tasks too, where it only affects routing confidences.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Dataset, ProbVector, TaskSchema, softmax
from .errors import ConfigError, DatasetError, SchemaError
from .metrics import ConfusionMatrix, macro_f1, per_class_f1

DEFAULT_BOUNDS = (0.05, 10.0)
DEFAULT_TOL = 1e-4
DEFAULT_GRID_STEP = 0.001
TYPICAL_THRESHOLD_BAND = (0.3, 0.6)

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class TemperatureModel:
    """Fitted temperature with the evidence used to accept it."""

    temperature: float
    search_bounds: tuple[float, float]
    dev_nll_before: float
    dev_nll_after: float
    at_bound: str | None = None  # "lower" | "upper" | None
    degenerate_dev: bool = False


@dataclass(frozen=True)
class ThresholdModel:
    """Macro-F1-maximizing decision threshold on the search grid."""

    threshold: float
    grid_step: float
    dev_macro_f1: float
    in_typical_band: bool = True


@dataclass(frozen=True)
class CalibrationModel:
    """Everything the pipeline needs to reproduce a calibrated decision."""

    task_id: str
    temperature: float
    threshold: float | None
    tau_conf: float | None
    tau_margin: float | None
    fitted_on: str
    grid_step: float
    bounds: tuple[float, float]
    dev_nll_before: float | None = None
    dev_nll_after: float | None = None


def calibrate(logits: Sequence[float], temperature: float) -> ProbVector:
    """Softmax of logits / T. T=1 is the plain softmax; argmax is invariant
    for any T > 0."""
    if temperature <= 0.0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(logits, dtype=np.float64)
    return softmax(z / temperature)


def dataset_nll(dataset: Dataset, temperature: float) -> float:
    """Average per-instance negative log-likelihood at the given temperature."""
    if temperature <= 0.0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    z = dataset.logit_matrix() / temperature
    gold = dataset.gold_indices()
    zmax = z.max(axis=1, keepdims=True)
    logsumexp = (zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1)))
    return float(np.mean(logsumexp - z[np.arange(len(gold)), gold]))


def fit_temperature(
    dev: Dataset,
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
    tol: float = DEFAULT_TOL,
) -> TemperatureModel:
    """Minimize dev NLL over T in [lo, hi] by golden-section search.

    The NLL is smooth and effectively unimodal in T on practical data, so a
    derivative-free deterministic bracket search suffices. Both bounds are
    always evaluated: if an endpoint wins, it is returned and flagged, and
    flat objectives tie-break toward the lower bound.
    """
    lo, hi = bounds
    if not (0.0 < lo < hi):
        raise ConfigError(f"need 0 < T_lo < T_hi, got {bounds}")
    if len(dev) == 0:
        raise DatasetError([("<dev>", "empty", "temperature fit needs a non-empty dev set")])
    gold = dev.gold_indices()  # raises if any gold label is missing
    degenerate = len(set(gold.tolist())) < 2
    if degenerate:
        warnings.warn("dev set contains a single gold class; temperature fitted anyway",
                      UserWarning, stacklevel=2)

    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = dataset_nll(dev, c), dataset_nll(dev, d)
    while (b - a) > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = dataset_nll(dev, c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = dataset_nll(dev, d)
    t_interior = (a + b) / 2.0

    # Endpoint sweep with a smallest-T tie-break keeps flat objectives (and
    # monotone ones) snapped exactly onto a bound.
    best_t, best_nll = lo, dataset_nll(dev, lo)
    for t in (t_interior, hi):
        nll = dataset_nll(dev, t)
        if nll < best_nll - 1e-12:
            best_t, best_nll = t, nll

    at_bound = "lower" if best_t == lo else "upper" if best_t == hi else None
    nll_before = dataset_nll(dev, 1.0) if lo <= 1.0 <= hi else dataset_nll(dev, best_t)
    return TemperatureModel(
        temperature=float(best_t),
        search_bounds=(lo, hi),
        dev_nll_before=float(nll_before),
        dev_nll_after=float(best_nll),
        at_bound=at_bound,
        degenerate_dev=degenerate,
    )


def threshold_grid(grid_step: float) -> np.ndarray:
    """The search grid {0, step, 2*step, ..., 1}."""
    if not (0.0 < grid_step <= 1.0):
        raise ConfigError(f"grid_step must be in (0, 1], got {grid_step}")
    n = int(round(1.0 / grid_step))
    return np.linspace(0.0, 1.0, n + 1)


def _binary_macro_f1(p_pos: np.ndarray, gold_pos: np.ndarray, threshold: float,
                     schema: TaskSchema) -> float:
    pred_pos = p_pos >= threshold
    pos_i = schema.index_of(schema.positive_label)
    neg_i = 1 - pos_i
    counts = [[0, 0], [0, 0]]
    counts[pos_i][pos_i] = int((gold_pos & pred_pos).sum())
    counts[pos_i][neg_i] = int((gold_pos & ~pred_pos).sum())
    counts[neg_i][pos_i] = int((~gold_pos & pred_pos).sum())
    counts[neg_i][neg_i] = int((~gold_pos & ~pred_pos).sum())
    cm = ConfusionMatrix(schema=schema, counts=(tuple(counts[0]), tuple(counts[1])))
    return macro_f1(per_class_f1(cm))


def tune_threshold(
    p_pos: Sequence[float],
    gold_labels: Sequence[str],
    schema: TaskSchema,
    grid_step: float = DEFAULT_GRID_STEP,
) -> ThresholdModel:
    """Exhaustive grid scan maximizing dev macro-F1.

    Decision rule: positive iff p >= t (inclusive, so t=0 is the
    always-positive policy). Ties go to the smallest grid t, which favors
    recall on the positive class. A threshold outside [0.3, 0.6] is legal
    but warned about, since that band is where well-calibrated binary
    thresholds typically land.
    """
    if not schema.is_binary:
        raise SchemaError(
            f"{schema.task_id}: threshold tuning is binary-only; use routing "
            "thresholds for the multi-class path"
        )
    p = np.asarray(p_pos, dtype=np.float64)
    if p.size == 0:
        raise DatasetError([("<dev>", "empty", "threshold tuning needs a non-empty dev set")])
    if np.any((p < 0.0) | (p > 1.0)):
        raise ConfigError("positive-class probabilities must lie in [0, 1]")
    gold_pos = np.asarray([lab == schema.positive_label for lab in gold_labels], dtype=bool)
    for lab in gold_labels:
        if lab not in schema.class_labels:
            raise SchemaError(f"{schema.task_id}: unknown gold label {lab!r}")

    best_t, best_f1 = 0.0, -1.0
    for t in threshold_grid(grid_step):
        f1 = _binary_macro_f1(p, gold_pos, float(t), schema)
        if f1 > best_f1:  # strict: ties keep the smallest grid t
            best_t, best_f1 = float(t), f1

    in_band = TYPICAL_THRESHOLD_BAND[0] <= best_t <= TYPICAL_THRESHOLD_BAND[1]
    if not in_band:
        warnings.warn(
            f"tuned threshold {best_t:.3f} falls outside the typical band "
            f"[{TYPICAL_THRESHOLD_BAND[0]}, {TYPICAL_THRESHOLD_BAND[1]}]",
            UserWarning, stacklevel=2,
        )
    return ThresholdModel(threshold=best_t, grid_step=grid_step,
                          dev_macro_f1=best_f1, in_typical_band=in_band)


def apply_threshold(p_pos: float, threshold: float, schema: TaskSchema) -> str:
    """positive_label iff p_pos >= threshold, else the other label."""
    if not schema.is_binary:
        raise SchemaError(f"{schema.task_id}: apply_threshold is binary-only")
    return schema.positive_label if p_pos >= threshold else schema.negative_label


def save_calibration(path: str | Path, model: CalibrationModel) -> None:
    doc = {
        "task_id": model.task_id,
        "temperature": model.temperature,
        "threshold": model.threshold,
        "tau_conf": model.tau_conf,
        "tau_margin": model.tau_margin,
        "fitted_on": model.fitted_on,
        "grid_step": model.grid_step,
        "bounds": list(model.bounds),
        "dev_nll_before": model.dev_nll_before,
        "dev_nll_after": model.dev_nll_after,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_calibration(path: str | Path, expected_task_id: str) -> CalibrationModel:
    """Load a calibration model, refusing one fitted under another task."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    task_id = doc["task_id"]
    fitted_on = doc["fitted_on"]
    if task_id != expected_task_id or not fitted_on.startswith(f"{expected_task_id}:"):
        raise ConfigError(
            f"calibration model was fitted on {fitted_on!r} (task {task_id!r}); "
            f"refusing to apply it to task {expected_task_id!r}"
        )
    return CalibrationModel(
        task_id=task_id,
        temperature=float(doc["temperature"]),
        threshold=None if doc["threshold"] is None else float(doc["threshold"]),
        tau_conf=None if doc["tau_conf"] is None else float(doc["tau_conf"]),
        tau_margin=None if doc["tau_margin"] is None else float(doc["tau_margin"]),
        fitted_on=fitted_on,
        grid_step=float(doc["grid_step"]),
        bounds=(float(doc["bounds"][0]), float(doc["bounds"][1])),
        dev_nll_before=doc.get("dev_nll_before"),
        dev_nll_after=doc.get("dev_nll_after"),
    )

"""Reference training/calibration profiles per task.

These are the recorded hyperparameter configurations for the specialist
models, shipped so downstream trainers and the logit-export adapter share
one source of truth. The inference pipeline itself consumes only the
calibration- and loss-relevant subset.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .core import EDOS_A, EDOS_B, EDOS_C, EXIST_11
from .errors import ConfigError


@dataclass(frozen=True)
class TaskProfile:
    task_id: str
    learning_rate: float
    batch_size: int
    gradient_accumulation: int
    training_epochs: int
    warmup_ratio: float
    weight_decay: float
    max_sequence_length: int
    label_smoothing_eps: float
    cb_beta: float
    cb_w_min: float
    cb_w_max: float
    focal_gamma: float | None  # None: plain CB-CE (binary tasks)
    lora_rank: int
    lora_alpha: int
    lora_dropout: float

    def to_json_dict(self) -> dict:
        return asdict(self)


_BINARY_COMMON = dict(
    learning_rate=2e-4,
    training_epochs=5,
    focal_gamma=None,
    lora_rank=32,
    lora_alpha=64,
    lora_dropout=0.1,
)

_SHARED = dict(
    batch_size=16,
    gradient_accumulation=2,
    warmup_ratio=0.1,
    weight_decay=0.01,
    max_sequence_length=512,
    label_smoothing_eps=0.05,
    cb_beta=0.999,
    cb_w_min=0.25,
    cb_w_max=4.0,
)

_PROFILES = {
    EXIST_11: TaskProfile(task_id=EXIST_11, **_SHARED, **_BINARY_COMMON),
    EDOS_A: TaskProfile(task_id=EDOS_A, **_SHARED, **_BINARY_COMMON),
    EDOS_B: TaskProfile(
        task_id=EDOS_B, **_SHARED,
        learning_rate=6e-5, training_epochs=8, focal_gamma=2.0,
        lora_rank=96, lora_alpha=192, lora_dropout=0.2,
    ),
    EDOS_C: TaskProfile(
        task_id=EDOS_C, **_SHARED,
        learning_rate=2e-5, training_epochs=12, focal_gamma=2.0,
        lora_rank=96, lora_alpha=192, lora_dropout=0.2,
    ),
}


def task_profile(task_id: str) -> TaskProfile:
    try:
        return _PROFILES[task_id]
    except KeyError:
        raise ConfigError(f"no reference profile for task {task_id!r}") from None

"""Adapter configuration and the shared task label contract.

The label tuples must match the pipeline's schemas exactly: label strings
are the interface, and the logit vector is ordered by them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

TASK_LABELS: dict[str, tuple[str, ...]] = {
    "exist-1.1": ("NO", "YES"),
    "edos-a": ("not sexist", "sexist"),
    "edos-b": (
        "1. threats, plans to harm and incitement",
        "2. derogation",
        "3. animosity",
        "4. prejudiced discussions",
    ),
    "edos-c": (
        "1.1 threats of harm",
        "1.2 incitement and encouragement of harm",
        "2.1 descriptive attacks",
        "2.2 aggressive and emotive attacks",
        "2.3 dehumanising attacks & overt sexual objectification",
        "3.1 casual use of gendered slurs, profanities, and insults",
        "3.2 immutable gender differences and gender stereotypes",
        "3.3 backhanded gendered compliments",
        "3.4 condescending explanations or unwelcome advice",
        "4.1 supporting mistreatment of individual women",
        "4.2 supporting systemic discrimination against women as a group",
    ),
}


class AdapterError(Exception):
    pass


@dataclass(frozen=True)
class AdapterConfig:
    """Where the classifier comes from and what it should label.

    ``model`` is either ``toy[:seed]`` for the deterministic hashing
    classifier or a HuggingFace model path/identifier with a
    sequence-classification head.
    """

    model: str
    task_id: str
    input_path: Path
    output_path: Path
    batch_size: int = 16
    device: str = "cpu"
    max_length: int = 512

    def __post_init__(self):
        if self.task_id not in TASK_LABELS:
            raise AdapterError(
                f"unknown task {self.task_id!r}; expected one of {sorted(TASK_LABELS)}")
        if self.batch_size < 1:
            raise AdapterError("batch_size must be positive")

    @property
    def class_labels(self) -> tuple[str, ...]:
        return TASK_LABELS[self.task_id]

    @property
    def num_classes(self) -> int:
        return len(self.class_labels)


def load_task_profiles(path: str | Path) -> dict:
    """Read the pipeline's exported per-task hyperparameter profiles."""
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)

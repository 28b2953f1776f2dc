"""Task schemas, instance records, and probability-vector primitives.

Label strings are the canonical representation at module boundaries;
integer indices are internal. All types are immutable after construction
and safe to share across workers.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DatasetError, SchemaError

EXIST_11 = "exist-1.1"
EDOS_A = "edos-a"
EDOS_B = "edos-b"
EDOS_C = "edos-c"

EDOS_B_LABELS = (
    "1. threats, plans to harm and incitement",
    "2. derogation",
    "3. animosity",
    "4. prejudiced discussions",
)

_EXPECTED_ARITY = {EXIST_11: 2, EDOS_A: 2, EDOS_B: 4, EDOS_C: 11}

EDOS_C_LABELS = (
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
)


@dataclass(frozen=True)
class TaskSchema:
    """A label taxonomy: binary or multi-class, with optional hierarchy.

    ``positive_label`` is mandatory for binary tasks (no guessing which of
    the two strings is the harm class). ``parent_map`` maps fine-grained
    labels to their coarse parent (edos-c -> edos-b).
    """

    task_id: str
    class_labels: tuple[str, ...]
    positive_label: str | None = None
    parent_map: dict[str, str] | None = None

    def __post_init__(self):
        labels = tuple(self.class_labels)
        object.__setattr__(self, "class_labels", labels)
        if len(labels) < 2:
            raise SchemaError(f"{self.task_id}: need at least 2 classes, got {len(labels)}")
        if len(set(labels)) != len(labels):
            raise SchemaError(f"{self.task_id}: class labels must be unique")
        if any(not lab for lab in labels):
            raise SchemaError(f"{self.task_id}: class labels must be non-empty")
        if len(labels) == 2:
            if self.positive_label is None:
                raise SchemaError(f"{self.task_id}: binary schema requires positive_label")
            if self.positive_label not in labels:
                raise SchemaError(
                    f"{self.task_id}: positive_label {self.positive_label!r} not in class_labels"
                )
        elif self.positive_label is not None:
            raise SchemaError(f"{self.task_id}: positive_label only applies to binary schemas")
        if self.parent_map is not None:
            unknown = set(self.parent_map) - set(labels)
            if unknown:
                raise SchemaError(f"{self.task_id}: parent_map keys not in schema: {sorted(unknown)}")
        expected = _EXPECTED_ARITY.get(self.task_id)
        if expected is not None and len(labels) != expected:
            raise SchemaError(
                f"{self.task_id}: expected {expected} classes, got {len(labels)}"
            )
        if self.task_id == EDOS_C:
            if self.parent_map is None or set(self.parent_map) != set(labels):
                raise SchemaError(f"{EDOS_C}: every fine label needs a coarse parent")
            bad = set(self.parent_map.values()) - set(EDOS_B_LABELS)
            if bad:
                raise SchemaError(f"{EDOS_C}: parents must be {EDOS_B} classes, got {sorted(bad)}")

    @property
    def num_classes(self) -> int:
        return len(self.class_labels)

    @property
    def is_binary(self) -> bool:
        return len(self.class_labels) == 2

    @property
    def negative_label(self) -> str:
        if not self.is_binary:
            raise SchemaError(f"{self.task_id}: negative_label only defined for binary schemas")
        a, b = self.class_labels
        return b if a == self.positive_label else a

    def index_of(self, label: str) -> int:
        try:
            return self.class_labels.index(label)
        except ValueError:
            raise SchemaError(f"{self.task_id}: unknown label {label!r}") from None


def builtin_schema(task_id: str) -> TaskSchema:
    """Return the schema for one of the four supported tasks."""
    if task_id == EXIST_11:
        return TaskSchema(task_id, ("NO", "YES"), positive_label="YES")
    if task_id == EDOS_A:
        return TaskSchema(task_id, ("not sexist", "sexist"), positive_label="sexist")
    if task_id == EDOS_B:
        return TaskSchema(task_id, EDOS_B_LABELS)
    if task_id == EDOS_C:
        parent = {c: EDOS_B_LABELS[int(c.split(".")[0]) - 1] for c in EDOS_C_LABELS}
        return TaskSchema(task_id, EDOS_C_LABELS, parent_map=parent)
    raise SchemaError(f"unknown task_id {task_id!r}; expected one of "
                      f"{EXIST_11}, {EDOS_A}, {EDOS_B}, {EDOS_C}")


@dataclass(frozen=True)
class LogitRecord:
    """One instance: id, text, optional gold label, raw specialist logits."""

    instance_id: str
    text: str
    gold_label: str | None
    logits: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "logits", tuple(float(z) for z in self.logits))
        if not all(math.isfinite(z) for z in self.logits):
            raise DatasetError([(self.instance_id, "non_finite_logits", repr(self.logits))])


@dataclass(frozen=True)
class ProbVector:
    """A categorical distribution: entries in [0, 1] summing to 1 (1e-9)."""

    probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if len(probs) < 1:
            raise SchemaError("empty probability vector")
        if any(not (0.0 <= p <= 1.0) for p in probs):
            raise SchemaError(f"probabilities outside [0, 1]: {probs}")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise SchemaError(f"probabilities sum to {sum(probs)!r}, not 1")

    def __len__(self) -> int:
        return len(self.probs)

    def argmax(self) -> int:
        return int(np.argmax(self.probs))


def softmax(logits: Sequence[float]) -> ProbVector:
    """Normalized exponentials, max-subtracted so large logits cannot overflow."""
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0:
        raise SchemaError("softmax of empty vector")
    if not np.all(np.isfinite(z)):
        raise SchemaError(f"softmax on non-finite input: {logits!r}")
    shifted = z - z.max()
    e = np.exp(shifted)
    p = e / e.sum()
    return ProbVector(tuple(p.tolist()))


def log_softmax(logits: Sequence[float]) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max()
    return shifted - np.log(np.exp(shifted).sum())


@dataclass(frozen=True)
class Dataset:
    """A validated, immutable collection of records for one schema."""

    schema: TaskSchema
    records: tuple[LogitRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def logit_matrix(self) -> np.ndarray:
        return np.asarray([r.logits for r in self.records], dtype=np.float64)

    def gold_indices(self) -> np.ndarray:
        missing = [r.instance_id for r in self.records if r.gold_label is None]
        if missing:
            raise DatasetError([(iid, "missing_gold_label", "gold label required") for iid in missing])
        return np.asarray([self.schema.index_of(r.gold_label) for r in self.records], dtype=np.int64)

    def fingerprint(self) -> str:
        """Stable content hash, prefixed with the task id so a calibration
        model can never be applied under the wrong task."""
        h = hashlib.sha256()
        h.update(self.schema.task_id.encode())
        for r in self.records:
            h.update(r.instance_id.encode())
            h.update(repr(r.logits).encode())
            h.update(repr(r.gold_label).encode())
        return f"{self.schema.task_id}:{h.hexdigest()}"


def validate_dataset(records: Iterable[LogitRecord], schema: TaskSchema) -> Dataset:
    """Check every record against the schema; report all violations at once.

    Violations covered: duplicate instance ids, wrong logit arity, unknown
    gold labels, non-finite logits (already rejected at record construction).
    """
    records = tuple(records)
    violations: list[tuple[str, str, str]] = []
    seen: set[str] = set()
    for rec in records:
        if rec.instance_id in seen:
            violations.append((rec.instance_id, "duplicate_id", "instance_id appears more than once"))
        seen.add(rec.instance_id)
        if len(rec.logits) != schema.num_classes:
            violations.append((
                rec.instance_id,
                "logit_arity",
                f"expected {schema.num_classes} logits, got {len(rec.logits)}",
            ))
        if rec.gold_label is not None and rec.gold_label not in schema.class_labels:
            violations.append((rec.instance_id, "unknown_label", f"gold_label {rec.gold_label!r}"))
    if violations:
        raise DatasetError(violations)
    return Dataset(schema=schema, records=records)


def read_logit_records(path: str | Path) -> list[LogitRecord]:
    """Read the JSON-Lines logit contract: one object per line with keys
    instance_id, text, gold_label (nullable), logits."""
    out: list[LogitRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError([(f"line {lineno}", "bad_json", str(exc))]) from exc
            try:
                out.append(LogitRecord(
                    instance_id=str(obj["instance_id"]),
                    text=str(obj["text"]),
                    gold_label=obj.get("gold_label"),
                    logits=tuple(obj["logits"]),
                ))
            except KeyError as exc:
                raise DatasetError([(f"line {lineno}", "missing_key", str(exc))]) from exc
    return out


def write_logit_records(path: str | Path, records: Iterable[LogitRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({
                "instance_id": rec.instance_id,
                "text": rec.text,
                "gold_label": rec.gold_label,
                "logits": list(rec.logits),
            }, ensure_ascii=False) + "\n")


def load_dataset(path: str | Path, schema: TaskSchema) -> Dataset:
    return validate_dataset(read_logit_records(path), schema)

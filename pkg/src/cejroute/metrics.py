"""Per-class F1, macro-F1, confusion matrices, and class-wise gain reports.

ICM and ICM-Norm are intentionally not computed here: they come from the
external official scorer, and the report carries null placeholders pointing
at it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from .core import TaskSchema
from .errors import DatasetError

if TYPE_CHECKING:  # pragma: no cover - type-only import, avoids a cycle
    from .routing import RoutingDecision

ICM_POINTER = "ICM/ICM-Norm are produced by the external official scorer (PyEvALL / Evaluate ALL)"


@dataclass(frozen=True)
class ConfusionMatrix:
    """C x C counts, rows = gold, cols = predicted."""

    schema: TaskSchema
    counts: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        c = self.schema.num_classes
        if len(self.counts) != c or any(len(row) != c for row in self.counts):
            raise DatasetError([("<matrix>", "shape", f"expected {c}x{c}")])
        if any(v < 0 for row in self.counts for v in row):
            raise DatasetError([("<matrix>", "negative_count", repr(self.counts))])

    @classmethod
    def from_labels(
        cls, gold: Sequence[str], pred: Sequence[str], schema: TaskSchema
    ) -> "ConfusionMatrix":
        if len(gold) != len(pred):
            raise DatasetError([("<matrix>", "length_mismatch", f"{len(gold)} gold vs {len(pred)} pred")])
        counts = np.zeros((schema.num_classes, schema.num_classes), dtype=np.int64)
        for g, p in zip(gold, pred):
            counts[schema.index_of(g), schema.index_of(p)] += 1
        return cls(schema=schema, counts=tuple(tuple(int(v) for v in row) for row in counts))

    @property
    def total(self) -> int:
        return int(sum(sum(row) for row in self.counts))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)


def per_class_f1(cm: ConfusionMatrix) -> dict[str, float]:
    """F1 per class with the 0/0 -> 0 convention (see zero_division_classes)."""
    m = cm.as_array()
    tp = np.diag(m).astype(np.float64)
    pred_pos = m.sum(axis=0).astype(np.float64)
    gold_pos = m.sum(axis=1).astype(np.float64)
    out: dict[str, float] = {}
    for i, label in enumerate(cm.schema.class_labels):
        denom = pred_pos[i] + gold_pos[i]
        # F1 = 2 TP / (pred + gold); equals 2PR/(P+R) and handles P+R=0 as 0
        out[label] = 0.0 if denom == 0.0 else float(2.0 * tp[i] / denom)
    return out


def zero_division_classes(cm: ConfusionMatrix) -> frozenset[str]:
    """Classes absent from both gold and predictions: their F1 is the 0/0
    convention value, flagged so reports stay auditable."""
    m = cm.as_array()
    flagged = [
        label
        for i, label in enumerate(cm.schema.class_labels)
        if m[i, :].sum() == 0 and m[:, i].sum() == 0
    ]
    return frozenset(flagged)


def macro_f1(per_class: Mapping[str, float]) -> float:
    """Unweighted mean of per-class F1 over all schema classes."""
    if not per_class:
        raise DatasetError([("<macro>", "empty", "no classes to average")])
    return float(np.mean(list(per_class.values())))


@dataclass(frozen=True)
class GainRow:
    label: str
    n: int
    baseline_f1: float
    routed_f1: float
    gain_points: float


@dataclass(frozen=True)
class RunReport:
    task_id: str
    per_class_f1: dict[str, float]
    macro_f1: float
    baseline_per_class_f1: dict[str, float]
    baseline_macro_f1: float
    escalation_rate: float
    accepted_accuracy: float | None
    accepted_vs_final: dict[str, int]
    classwise_gain: tuple[GainRow, ...]
    escalations_by_gold_class: dict[str, int]
    degraded_classes: tuple[str, ...]
    zero_division_flags: tuple[str, ...]
    icm: None = None
    icm_norm: None = None
    icm_pointer: str = ICM_POINTER

    def to_json_dict(self) -> dict:
        doc = {
            "task_id": self.task_id,
            "per_class_f1": self.per_class_f1,
            "macro_f1": self.macro_f1,
            "baseline_per_class_f1": self.baseline_per_class_f1,
            "baseline_macro_f1": self.baseline_macro_f1,
            "escalation_rate": self.escalation_rate,
            "accepted_accuracy": self.accepted_accuracy,
            "accepted_vs_final": self.accepted_vs_final,
            "classwise_gain": [
                {
                    "label": r.label,
                    "n": r.n,
                    "baseline_f1": r.baseline_f1,
                    "routed_f1": r.routed_f1,
                    "gain_points": r.gain_points,
                }
                for r in self.classwise_gain
            ],
            "escalations_by_gold_class": self.escalations_by_gold_class,
            "degraded_classes": list(self.degraded_classes),
            "zero_division_flags": list(self.zero_division_flags),
            "icm": self.icm,
            "icm_norm": self.icm_norm,
            "icm_pointer": self.icm_pointer,
        }
        return doc


def build_report(
    baseline: Mapping[str, str],
    final: Mapping[str, str],
    decisions: Sequence["RoutingDecision"],
    gold: Mapping[str, str],
    schema: TaskSchema,
) -> RunReport:
    """Compare the specialist-only predictions against the routed run.

    All four inputs must cover exactly the same instance ids; the first
    mismatched id is named in the error. Gains are reported in percentage
    points, negative values included (never suppressed).
    """
    ids = sorted(gold)
    for name, mapping in (("baseline", baseline), ("final", final)):
        for iid in ids:
            if iid not in mapping:
                raise DatasetError([(iid, "misaligned_ids", f"missing from {name} predictions")])
        extra = set(mapping) - set(ids)
        if extra:
            raise DatasetError([(sorted(extra)[0], "misaligned_ids", f"not in gold ({name})")])
    decision_ids = {d.instance_id for d in decisions}
    missing = [iid for iid in ids if iid not in decision_ids]
    if missing:
        raise DatasetError([(missing[0], "misaligned_ids", "missing routing decision")])

    gold_seq = [gold[iid] for iid in ids]
    base_cm = ConfusionMatrix.from_labels(gold_seq, [baseline[iid] for iid in ids], schema)
    final_cm = ConfusionMatrix.from_labels(gold_seq, [final[iid] for iid in ids], schema)
    base_f1 = per_class_f1(base_cm)
    final_f1 = per_class_f1(final_cm)

    gold_counts = {lab: gold_seq.count(lab) for lab in schema.class_labels}
    rows = tuple(
        GainRow(
            label=lab,
            n=gold_counts[lab],
            baseline_f1=base_f1[lab],
            routed_f1=final_f1[lab],
            gain_points=(final_f1[lab] - base_f1[lab]) * 100.0,
        )
        for lab in schema.class_labels
    )

    escalated = [d for d in decisions if d.instance_id in gold and d.is_escalated]
    accepted = [d for d in decisions if d.instance_id in gold and not d.is_escalated]
    esc_by_class: dict[str, int] = {lab: 0 for lab in schema.class_labels}
    for d in escalated:
        esc_by_class[gold[d.instance_id]] += 1
    accepted_accuracy = None
    if accepted:
        hits = sum(1 for d in accepted if d.specialist_label == gold[d.instance_id])
        accepted_accuracy = hits / len(accepted)
    changed = sum(1 for d in escalated if final[d.instance_id] != d.specialist_label)

    return RunReport(
        task_id=schema.task_id,
        per_class_f1=final_f1,
        macro_f1=macro_f1(final_f1),
        baseline_per_class_f1=base_f1,
        baseline_macro_f1=macro_f1(base_f1),
        escalation_rate=len(escalated) / len(ids) if ids else 0.0,
        accepted_accuracy=accepted_accuracy,
        accepted_vs_final={
            "accepted": len(accepted),
            "escalated": len(escalated),
            "escalated_changed": changed,
            "escalated_unchanged": len(escalated) - changed,
        },
        classwise_gain=rows,
        escalations_by_gold_class=esc_by_class,
        degraded_classes=tuple(r.label for r in rows if r.gain_points < 0.0),
        zero_division_flags=tuple(sorted(
            zero_division_classes(base_cm) | zero_division_classes(final_cm)
        )),
    )


def render_text_table(report: RunReport) -> str:
    """Plain-text class-wise table: Category, n, baseline, routed, Gain."""
    header = f"{'Category':<55} {'n':>5} {'base':>7} {'routed':>7} {'Gain':>7}"
    lines = [header, "-" * len(header)]
    for row in report.classwise_gain:
        lines.append(
            f"{row.label:<55} {row.n:>5} {row.baseline_f1:>7.3f} "
            f"{row.routed_f1:>7.3f} {row.gain_points:>+7.1f}"
        )
    lines.append("-" * len(header))
    lines.append(
        f"{'macro-F1':<55} {'':>5} {report.baseline_macro_f1:>7.4f} {report.macro_f1:>7.4f} "
        f"{(report.macro_f1 - report.baseline_macro_f1) * 100:>+7.1f}"
    )
    lines.append(f"escalation rate: {report.escalation_rate:.4f}")
    return "\n".join(lines) + "\n"


def write_report_json(path: str | Path, report: RunReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_report_csv(path: str | Path, report: RunReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "n", "baseline_f1", "routed_f1", "gain_points"])
        for row in report.classwise_gain:
            writer.writerow([row.label, row.n, f"{row.baseline_f1:.6f}",
                             f"{row.routed_f1:.6f}", f"{row.gain_points:.6f}"])

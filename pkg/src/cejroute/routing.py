"""Confidence-aware selective classification.

Binary tasks escalate on low confidence alone; multi-class tasks escalate
only when the confidence AND the top-two margin are both below their
thresholds (a decisive margin rescues a low-confidence prediction).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import ProbVector, TaskSchema
from .errors import ConfigError, SchemaError
from .metrics import ConfusionMatrix, macro_f1, per_class_f1

BINARY = "binary"
MULTICLASS = "multiclass"

ACCEPTED = "accepted"
ESCALATED = "escalated"

# An escalation outcome provider answers: "what label would the debate
# module assign to this instance?" — from cached transcripts, a scripted
# test oracle, or a probabilistic proxy.
OutcomeProvider = Callable[[str], str]


@dataclass(frozen=True)
class RoutingPolicy:
    tau_conf: float
    tau_margin: float | None
    mode: str

    def __post_init__(self):
        if self.mode not in (BINARY, MULTICLASS):
            raise ConfigError(f"mode must be '{BINARY}' or '{MULTICLASS}', got {self.mode!r}")
        if not (0.0 < self.tau_conf <= 1.0):
            raise ConfigError(f"tau_conf must be in (0, 1], got {self.tau_conf}")
        if self.mode == BINARY:
            if self.tau_margin is not None:
                raise ConfigError("binary mode ignores tau_margin; pass None")
        else:
            if self.tau_margin is None or not (0.0 <= self.tau_margin <= 1.0):
                raise ConfigError(f"multiclass mode needs tau_margin in [0, 1], got {self.tau_margin}")


@dataclass(frozen=True)
class RoutingDecision:
    instance_id: str
    specialist_label: str
    confidence: float
    margin: float
    outcome: str  # ACCEPTED | ESCALATED

    @property
    def is_escalated(self) -> bool:
        return self.outcome == ESCALATED

    def to_json_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "specialist_label": self.specialist_label,
            "confidence": self.confidence,
            "margin": self.margin,
            "outcome": self.outcome,
        }


def confidence(p: ProbVector) -> float:
    """Maximum calibrated class probability."""
    return float(max(p.probs))


def margin(p: ProbVector) -> float:
    """Gap between the two largest probabilities; 0 when tied."""
    if len(p) < 2:
        raise SchemaError("margin needs at least 2 classes")
    top2 = sorted(p.probs, reverse=True)[:2]
    return float(top2[0] - top2[1])


def decide(
    p: ProbVector,
    policy: RoutingPolicy,
    schema: TaskSchema,
    instance_id: str,
    specialist_label: str | None = None,
) -> RoutingDecision:
    """Accept the specialist label or escalate.

    Binary: escalate iff confidence < tau_conf. Multiclass: escalate iff
    confidence < tau_conf AND margin < tau_margin (strict inequalities, so
    c >= tau_conf always accepts). ``specialist_label`` defaults to the
    argmax label; binary callers pass their thresholded label instead.
    """
    if policy.mode == BINARY and not schema.is_binary:
        raise SchemaError(f"{schema.task_id}: binary policy on a {schema.num_classes}-class schema")
    if policy.mode == MULTICLASS and schema.is_binary:
        raise SchemaError(f"{schema.task_id}: multiclass policy on a binary schema")
    c = confidence(p)
    m = margin(p)
    if policy.mode == BINARY:
        escalate = c < policy.tau_conf
    else:
        escalate = (c < policy.tau_conf) and (m < policy.tau_margin)
    label = specialist_label if specialist_label is not None else schema.class_labels[p.argmax()]
    return RoutingDecision(
        instance_id=instance_id,
        specialist_label=label,
        confidence=c,
        margin=m,
        outcome=ESCALATED if escalate else ACCEPTED,
    )


def cached_outcomes(mapping: Mapping[str, str]) -> OutcomeProvider:
    """Outcome provider backed by cached debate verdicts."""

    def provider(instance_id: str) -> str:
        try:
            return mapping[instance_id]
        except KeyError:
            raise ConfigError(f"no cached escalation outcome for instance {instance_id!r}") from None

    return provider


def proxy_outcomes(
    gold: Mapping[str, str],
    specialist: Mapping[str, str],
    q: float,
    seed: int,
) -> OutcomeProvider:
    """Pessimistic proxy: the debate answers gold with probability q, else
    it parrots the specialist. Hash-seeded per instance, so the outcome is
    independent of iteration order.
    """
    if not (0.0 <= q <= 1.0):
        raise ConfigError(f"q must be in [0, 1], got {q}")

    def provider(instance_id: str) -> str:
        digest = hashlib.sha256(f"{seed}:{instance_id}".encode()).digest()
        u = int.from_bytes(digest[:8], "big") / 2 ** 64
        return gold[instance_id] if u < q else specialist[instance_id]

    return provider


@dataclass(frozen=True)
class GridCell:
    tau_conf: float
    tau_margin: float | None
    macro_f1: float
    escalation_rate: float
    objective: float


@dataclass(frozen=True)
class RoutingTuneResult:
    policy: RoutingPolicy
    dev_macro_f1: float
    dev_escalation_rate: float
    surface: tuple[GridCell, ...]


LEXICOGRAPHIC = "lexicographic"
PENALIZED = "penalized"


def tune_routing(
    probs: Sequence[ProbVector],
    specialist_labels: Sequence[str],
    gold_labels: Sequence[str],
    instance_ids: Sequence[str],
    schema: TaskSchema,
    conf_grid: Sequence[float],
    margin_grid: Sequence[float] | None,
    outcome_provider: OutcomeProvider,
    objective: str = LEXICOGRAPHIC,
    penalty_lambda: float = 0.0,
) -> RoutingTuneResult:
    """Exhaustive grid search over (tau_conf, tau_margin).

    The default objective is lexicographic: maximize dev macro-F1 compared
    at 4 decimal places, then minimize the escalation rate among ties, with
    the fixed grid order (tau_conf ascending, then tau_margin) breaking any
    remainder deterministically. The ``penalized`` objective maximizes
    macro-F1 - lambda * escalation_rate instead, for sensitivity analysis.
    The full objective surface is returned for audit.
    """
    if len(conf_grid) == 0 or (margin_grid is not None and len(margin_grid) == 0):
        raise ConfigError("threshold grids must be non-empty")
    if objective not in (LEXICOGRAPHIC, PENALIZED):
        raise ConfigError(f"unknown objective {objective!r}")
    n = len(probs)
    if not (n == len(specialist_labels) == len(gold_labels) == len(instance_ids)):
        raise ConfigError("probs, labels and ids must be aligned")
    mode = BINARY if margin_grid is None else MULTICLASS
    if mode == BINARY and not schema.is_binary:
        raise SchemaError(f"{schema.task_id}: margin_grid is required for multi-class tuning")
    if mode == MULTICLASS and schema.is_binary:
        raise SchemaError(f"{schema.task_id}: binary tuning takes no margin_grid")

    confidences = np.asarray([confidence(p) for p in probs])
    margins = np.asarray([margin(p) for p in probs])
    cej_labels = [outcome_provider(iid) for iid in instance_ids]

    def evaluate(tau_c: float, tau_m: float | None) -> GridCell:
        if mode == BINARY:
            esc = confidences < tau_c
        else:
            esc = (confidences < tau_c) & (margins < tau_m)
        preds = [cej_labels[i] if esc[i] else specialist_labels[i] for i in range(n)]
        cm = ConfusionMatrix.from_labels(list(gold_labels), preds, schema)
        f1 = macro_f1(per_class_f1(cm))
        rate = float(esc.mean()) if n else 0.0
        if objective == LEXICOGRAPHIC:
            obj = round(f1, 4)
        else:
            obj = f1 - penalty_lambda * rate
        return GridCell(tau_conf=float(tau_c), tau_margin=None if tau_m is None else float(tau_m),
                        macro_f1=f1, escalation_rate=rate, objective=obj)

    margin_values: Sequence[float | None] = [None] if margin_grid is None else list(margin_grid)
    surface = tuple(
        evaluate(tau_c, tau_m) for tau_c in conf_grid for tau_m in margin_values
    )

    best = surface[0]
    for cell in surface[1:]:
        if cell.objective > best.objective + 1e-12:
            best = cell
        elif abs(cell.objective - best.objective) <= 1e-12 and cell.escalation_rate < best.escalation_rate - 1e-12:
            best = cell

    policy = RoutingPolicy(tau_conf=best.tau_conf, tau_margin=best.tau_margin, mode=mode)
    return RoutingTuneResult(
        policy=policy,
        dev_macro_f1=best.macro_f1,
        dev_escalation_rate=best.escalation_rate,
        surface=surface,
    )


def routing_summary(decisions: Sequence[RoutingDecision],
                    gold: Mapping[str, str] | None,
                    schema: TaskSchema) -> dict:
    escalated = [d for d in decisions if d.is_escalated]
    accepted = [d for d in decisions if not d.is_escalated]
    # Escalations are grouped by gold class when gold is known (analysis
    # view), otherwise by the specialist's label.
    by_class = {lab: 0 for lab in schema.class_labels}
    for d in escalated:
        key = gold.get(d.instance_id, d.specialist_label) if gold else d.specialist_label
        by_class[key] = by_class.get(key, 0) + 1
    accepted_accuracy = None
    if gold:
        scored = [d for d in accepted if d.instance_id in gold]
        if scored:
            accepted_accuracy = sum(
                1 for d in scored if d.specialist_label == gold[d.instance_id]
            ) / len(scored)
    return {
        "total": len(decisions),
        "accepted": len(accepted),
        "escalated": len(escalated),
        "escalation_rate": len(escalated) / len(decisions) if decisions else 0.0,
        "accepted_accuracy": accepted_accuracy,
        "escalations_by_class": by_class,
    }


def write_routing_report(
    jsonl_path: str | Path,
    summary_path: str | Path,
    decisions: Sequence[RoutingDecision],
    schema: TaskSchema,
    gold: Mapping[str, str] | None = None,
) -> None:
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for d in decisions:
            fh.write(json.dumps(d.to_json_dict(), sort_keys=True) + "\n")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(routing_summary(decisions, gold, schema), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_routing_decisions(path: str | Path) -> list[RoutingDecision]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(RoutingDecision(
                instance_id=obj["instance_id"],
                specialist_label=obj["specialist_label"],
                confidence=float(obj["confidence"]),
                margin=float(obj["margin"]),
                outcome=obj["outcome"],
            ))
    return out

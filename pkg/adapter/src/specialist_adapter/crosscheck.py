"""Recompute the pipeline's class-balanced losses in torch tensor ops and
compare against the expected values it exported.

A deviation above the fixture tolerance signals a cross-implementation bug
and exits nonzero from the CLI.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .config import AdapterError


@dataclass
class CrosscheckReport:
    cases: int
    max_abs_deviation: float
    tolerance: float
    failures: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.max_abs_deviation <= self.tolerance


def torch_cb_ce(logits: torch.Tensor, gold: int, weights: torch.Tensor,
                eps: float) -> torch.Tensor:
    logp = torch.log_softmax(logits, dim=-1)
    c = logits.shape[-1]
    target = torch.full((c,), eps / c, dtype=logits.dtype)
    target[gold] += 1.0 - eps
    return -weights[gold] * (target * logp).sum()


def torch_cb_focal(logits: torch.Tensor, gold: int, weights: torch.Tensor,
                   gamma: float) -> torch.Tensor:
    logp = torch.log_softmax(logits, dim=-1)
    p_y = logp[gold].exp()
    return -weights[gold] * (1.0 - p_y) ** gamma * logp[gold]


def _file_weights(doc: dict, fixtures_path: Path) -> torch.Tensor:
    weights_path = fixtures_path.parent / doc["weights_file"]
    with open(weights_path, encoding="utf-8") as fh:
        weights_doc = json.load(fh)
    by_label = weights_doc["weights"]
    try:
        vec = [by_label[label] for label in doc["class_labels"]]
    except KeyError as exc:
        raise AdapterError(f"weights file missing label {exc}") from None
    return torch.tensor(vec, dtype=torch.float64)


def crosscheck_losses(fixtures_path: str | Path) -> CrosscheckReport:
    fixtures_path = Path(fixtures_path)
    with open(fixtures_path, encoding="utf-8") as fh:
        doc = json.load(fh)
    tolerance = float(doc.get("tolerance", 1e-5))
    file_weights = _file_weights(doc, fixtures_path)

    max_dev = 0.0
    failures: list[dict] = []
    for i, case in enumerate(doc["cases"]):
        logits = torch.tensor(case["logits"], dtype=torch.float64)
        if case["use_file_weights"]:
            weights = file_weights
        else:
            weights = torch.tensor(case["weights"], dtype=torch.float64)
        if len(weights) != len(logits):
            raise AdapterError(f"case {i}: weight arity {len(weights)} vs {len(logits)} logits")
        if case["kind"] == "cb_ce":
            value = torch_cb_ce(logits, case["gold_index"], weights,
                                case["label_smoothing_eps"])
        elif case["kind"] == "cb_focal":
            value = torch_cb_focal(logits, case["gold_index"], weights, case["gamma"])
        else:
            raise AdapterError(f"case {i}: unknown loss kind {case['kind']!r}")
        deviation = abs(float(value) - case["expected_loss"])
        max_dev = max(max_dev, deviation)
        if deviation > tolerance:
            failures.append({"case": i, "kind": case["kind"], "deviation": deviation})
    return CrosscheckReport(cases=len(doc["cases"]), max_abs_deviation=max_dev,
                            tolerance=tolerance, failures=failures)

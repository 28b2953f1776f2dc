#!/usr/bin/env python3
"""Export the shared cross-check fixtures consumed by the logit adapter.

Writes, under shared/:
  weights_edos_b.json   class-weight export (with intermediates) for the
                        task-B class counts
  loss_fixtures.json    loss cases with expected values computed by this
                        package; the adapter recomputes them in torch and
                        must agree to 1e-5
  task_profiles.json    the recorded per-task hyperparameter profiles
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from cejroute.core import EDOS_B, builtin_schema
from cejroute.imbalance import LossConfig, cb_ce_loss, cb_focal_loss, class_weights
from cejroute.profiles import task_profile

ROOT = Path(__file__).resolve().parent.parent
SHARED = ROOT / "shared"

EDOS_B_COUNTS = (89, 454, 333, 94)


def build_cases(weights: tuple[float, ...]) -> list[dict]:
    cases = []

    def add(kind, logits, gold, gamma, eps, w, use_file_weights=False):
        cfg = LossConfig(gamma=gamma, label_smoothing_eps=eps)
        fn = cb_ce_loss if kind == "cb_ce" else cb_focal_loss
        cases.append({
            "kind": kind,
            "logits": [float(v) for v in logits],
            "gold_index": gold,
            "gamma": gamma,
            "label_smoothing_eps": eps,
            "use_file_weights": use_file_weights,
            "weights": None if use_file_weights else [float(v) for v in w],
            "expected_loss": fn(logits, gold, weights if use_file_weights else w, cfg),
        })

    # the three documented cross-entropy spot cases
    add("cb_ce", [10.0, -10.0], 0, 0.0, 0.0, (1.0, 1.0))
    add("cb_ce", [0.0, 0.0], 0, 0.0, 0.0, (1.0, 1.0))
    add("cb_ce", [0.0, 0.0], 0, 0.0, 0.0, (2.0, 0.5))
    # focal spot cases and the gamma=0 reduction pair
    add("cb_focal", [30.0, 0.0], 0, 2.0, 0.0, (1.0, 1.0))
    add("cb_focal", [0.0, 0.0], 0, 2.0, 0.0, (1.0, 1.0))
    rng = np.random.default_rng(2718)
    reduction_logits = rng.normal(0, 3, size=4).tolist()
    add("cb_ce", reduction_logits, 2, 0.0, 0.0, (1.3, 0.7, 1.1, 0.9))
    add("cb_focal", reduction_logits, 2, 0.0, 0.0, (1.3, 0.7, 1.1, 0.9))
    # randomized 4-class cases against the exported weight file
    for _ in range(12):
        logits = rng.normal(0, 2.5, size=4).tolist()
        gold = int(rng.integers(0, 4))
        add("cb_focal", logits, gold, 2.0, 0.0, None, use_file_weights=True)
        add("cb_ce", logits, gold, 0.0, 0.05, None, use_file_weights=True)
    return cases


def main() -> None:
    SHARED.mkdir(parents=True, exist_ok=True)
    schema = builtin_schema(EDOS_B)
    cw = class_weights(EDOS_B_COUNTS)
    from cejroute.imbalance import write_weights_json
    write_weights_json(SHARED / "weights_edos_b.json", schema, cw)

    fixtures = {
        "task_id": EDOS_B,
        "class_labels": list(schema.class_labels),
        "weights_file": "weights_edos_b.json",
        "tolerance": 1e-5,
        "cases": build_cases(cw.weights),
    }
    with open(SHARED / "loss_fixtures.json", "w", encoding="utf-8") as fh:
        json.dump(fixtures, fh, indent=2)
        fh.write("\n")

    profiles = {tid: task_profile(tid).to_json_dict()
                for tid in ("exist-1.1", "edos-a", "edos-b", "edos-c")}
    with open(SHARED / "task_profiles.json", "w", encoding="utf-8") as fh:
        json.dump(profiles, fh, indent=2)
        fh.write("\n")
    print(f"wrote weight, loss, and profile fixtures to {SHARED}")


if __name__ == "__main__":
    main()

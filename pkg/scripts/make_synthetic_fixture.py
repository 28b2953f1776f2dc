#!/usr/bin/env python3
"""Regenerate the bundled synthetic task-B fixture under tests/data/.

Construction: every class has a block of confidently-correct instances
(big logit peak, wide margin) plus a block of low-confidence, low-margin
instances. The low-margin blocks are specialist errors in classes 1-3
(the scripted debate fixes them) and correct-but-uncertain instances in
class 4, two of which the scripted judge deliberately flips, so the
class-wise gain table shows both signs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from cejroute.core import EDOS_B_LABELS, LogitRecord, write_logit_records

ROOT = Path(__file__).resolve().parent.parent
DATA_DIR = ROOT / "tests" / "data"

LABELS = EDOS_B_LABELS
SEED = 7

# per-class test-set layout: (easy_correct, hard_block, hard_is_error, wrong_class_idx)
TEST_PLAN = {
    0: (22, 2, True, 1),
    1: (14, 2, True, 2),
    2: (6, 6, True, 1),
    3: (2, 6, False, 2),  # class 4: uncertain but correct; runner-up is class 3
}
DEV_PLAN = {
    0: (16, 2, True, 1),
    1: (12, 2, True, 2),
    2: (5, 4, True, 1),
    3: (5, 2, False, 2),
}
# judge flips these two correct-but-borderline class-4 instances, so class 4
# shows a negative gain
SABOTAGED = ("t054", "t055")
SABOTAGE_LABEL = LABELS[2]


def easy_logits(rng: np.random.Generator, gold: int) -> list[float]:
    z = rng.uniform(-0.15, 0.15, size=4)
    z[gold] = 3.0
    return [round(float(v), 4) for v in z]


def hard_logits(rng: np.random.Generator, top: int, runner: int) -> list[float]:
    z = rng.uniform(-0.55, -0.45, size=4)
    rest = [i for i in range(4) if i not in (top, runner)]
    z[rest[0]] = rng.uniform(-0.05, 0.05)
    z[top] = 1.2
    z[runner] = 1.17
    return [round(float(v), 4) for v in z]


def build_records(plan, prefix: str, rng: np.random.Generator) -> list[LogitRecord]:
    records = []
    k = 0
    for cls, (n_easy, n_hard, hard_is_error, other) in plan.items():
        for _ in range(n_easy):
            records.append(LogitRecord(
                instance_id=f"{prefix}{k:03d}",
                text=f"synthetic {prefix}-tweet {k} (category {cls + 1})",
                gold_label=LABELS[cls],
                logits=tuple(easy_logits(rng, cls)),
            ))
            k += 1
        for _ in range(n_hard):
            top, runner = (other, cls) if hard_is_error else (cls, other)
            records.append(LogitRecord(
                instance_id=f"{prefix}{k:03d}",
                text=f"synthetic {prefix}-tweet {k} (category {cls + 1}, borderline)",
                gold_label=LABELS[cls],
                logits=tuple(hard_logits(rng, top, runner)),
            ))
            k += 1
    return records


def opinion_json() -> str:
    return json.dumps({
        "persona": "Normal Person",
        "label": "2",
        "justification": "Reads as a demeaning generalization.",
        "confidence": "0.8",
    })


def debate_json() -> str:
    personas = ["Normal Person", "Linguist", "Psychologist",
                "Legal Studies Expert", "Gender Studies Expert", "Sexism Victim"]
    turns = []
    for i, name in enumerate(personas):
        peer = personas[(i + 1) % len(personas)]
        turns.append({
            "persona": name,
            "intent": "assess the category of the remark",
            "reaction": f"Agree with {peer} on the framing of the target.",
            "updated_reasoning": "category judgement unchanged after review",
            "final_stance": "2",
            "stance_changed": False,
            "updated_confidence": 0.75,
        })
    return json.dumps(turns)


def judge_json(label: str) -> str:
    return json.dumps({
        "label": label,
        "justification": "Weighing the panel summary against the category definitions.",
        "confidence": 0.9,
    })


def build_mock_script(test_records) -> dict:
    rules = []
    for rec in test_records:
        target = SABOTAGE_LABEL if rec.instance_id in SABOTAGED else rec.gold_label
        rules.append({
            "match": {"stage": "judge", "instance_id": rec.instance_id},
            "responses": [{"content": judge_json(target)}],
        })
    rules.append({"match": {"stage": "opinion"},
                  "responses": [{"content": opinion_json()}]})
    rules.append({"match": {"stage": "debate"},
                  "responses": [{"content": debate_json()}]})
    rules.append({"match": {"stage": "summary"},
                  "responses": [{"content": "The panel converges on a demeaning-category reading "
                                            "with one dissent on severity."}]})
    return {"rules": rules}


def main() -> None:
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(SEED))
    dev = build_records(DEV_PLAN, "d", rng)
    test = build_records(TEST_PLAN, "t", rng)
    assert len(dev) == 48 and len(test) == 60
    sabotaged = [r for r in test if r.instance_id in SABOTAGED]
    assert all(r.gold_label == LABELS[3] and "borderline" in r.text for r in sabotaged)
    write_logit_records(DATA_DIR / "edosb_dev.jsonl", dev)
    write_logit_records(DATA_DIR / "edosb_test.jsonl", test)
    with open(DATA_DIR / "mock_script.json", "w", encoding="utf-8") as fh:
        json.dump(build_mock_script(test), fh, indent=2)
        fh.write("\n")
    print(f"wrote {len(dev)} dev / {len(test)} test records and mock script to {DATA_DIR}")


if __name__ == "__main__":
    main()

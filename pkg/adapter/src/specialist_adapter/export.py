"""Batch inference over id,text,label rows into the logit JSONL contract.

Output lines carry exactly the keys the pipeline's validator expects:
instance_id, text, gold_label (null when the row has none), logits.
"""

from __future__ import annotations

import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import torch

from .config import AdapterConfig, AdapterError
from .toy import ToyTextClassifier, parse_toy_spec


@dataclass
class ExportSummary:
    exported: int
    skipped: int


def _load_model(cfg: AdapterConfig):
    seed = parse_toy_spec(cfg.model)
    if seed is not None:
        return ToyTextClassifier(cfg.num_classes, seed=seed), None
    # lazily import so the toy path stays dependency-light
    from transformers import AutoModelForSequenceClassification, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(cfg.model)
    model = AutoModelForSequenceClassification.from_pretrained(cfg.model)
    model.to(cfg.device)
    model.eval()
    if model.config.num_labels != cfg.num_classes:
        raise AdapterError(
            f"classifier head has {model.config.num_labels} labels but task "
            f"{cfg.task_id!r} needs {cfg.num_classes}")
    return model, tokenizer


def _read_rows(path: Path, labels: tuple[str, ...]) -> tuple[list[dict], int]:
    delimiter = "\t" if path.suffix.lower() in (".tsv", ".tab") else ","
    rows: list[dict] = []
    skipped = 0
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        required = {"id", "text"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise AdapterError(f"input needs id,text[,label] columns, got {reader.fieldnames}")
        for raw in reader:
            rid = (raw.get("id") or "").strip()
            text = (raw.get("text") or "").strip()
            gold = (raw.get("label") or "").strip() or None
            if not rid or not text or (gold is not None and gold not in labels):
                skipped += 1
                continue
            rows.append({"id": rid, "text": text, "gold": gold})
    return rows, skipped


@torch.no_grad()
def _infer_logits(model, tokenizer, texts: list[str], cfg: AdapterConfig) -> torch.Tensor:
    if tokenizer is None:
        return model(texts)
    enc = tokenizer(texts, return_tensors="pt", padding=True, truncation=True,
                    max_length=cfg.max_length).to(cfg.device)
    return model(**enc).logits.cpu()


def export_logits(cfg: AdapterConfig) -> ExportSummary:
    """Write one LogitRecord line per readable row, in input order."""
    model, tokenizer = _load_model(cfg)
    rows, skipped = _read_rows(Path(cfg.input_path), cfg.class_labels)
    seen: set[str] = set()
    deduped = []
    for row in rows:
        if row["id"] in seen:
            skipped += 1
            continue
        seen.add(row["id"])
        deduped.append(row)

    with open(cfg.output_path, "w", encoding="utf-8") as fh:
        for start in range(0, len(deduped), cfg.batch_size):
            batch = deduped[start:start + cfg.batch_size]
            logits = _infer_logits(model, tokenizer, [r["text"] for r in batch], cfg)
            if logits.shape[1] != cfg.num_classes:
                raise AdapterError(
                    f"model produced {logits.shape[1]} logits but task "
                    f"{cfg.task_id!r} needs {cfg.num_classes}")
            for row, vec in zip(batch, logits):
                fh.write(json.dumps({
                    "instance_id": row["id"],
                    "text": row["text"],
                    "gold_label": row["gold"],
                    "logits": [round(float(v), 6) for v in vec],
                }, ensure_ascii=False) + "\n")
    if skipped:
        print(f"skipped {skipped} unreadable rows", file=sys.stderr)
    return ExportSummary(exported=len(deduped), skipped=skipped)

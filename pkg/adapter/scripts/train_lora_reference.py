#!/usr/bin/env python3
"""Reference LoRA fine-tuning recipe for the specialist classifiers.

This is documentation-grade scaffolding, not a supported surface: the
adapter's contract is the exported logit JSONL, and any trainer honoring
the label arity works. The recipe reads the pipeline's exported task
profiles (shared/task_profiles.json) so the hyperparameters live in one
place.

Requires: transformers, peft, bitsandbytes, datasets (not adapter deps).
Usage:
    python train_lora_reference.py --task edos-b --train train.csv --out ckpt/
"""

from __future__ import annotations

import argparse
from pathlib import Path

from specialist_adapter.config import TASK_LABELS, load_task_profiles

BASE_MODEL = "meta-llama/Llama-3.2-3B"
LORA_TARGET_MODULES = [
    "q_proj", "k_proj", "v_proj", "o_proj",
    "gate_proj", "up_proj", "down_proj",
]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--task", required=True)
    parser.add_argument("--train", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--profiles", default=None,
                        help="path to the exported task_profiles.json")
    args = parser.parse_args()

    profiles_path = args.profiles or (
        Path(__file__).resolve().parent.parent.parent / "shared" / "task_profiles.json")
    profile = load_task_profiles(profiles_path)[args.task]
    labels = TASK_LABELS[args.task]

    import torch
    from datasets import load_dataset
    from peft import LoraConfig, get_peft_model
    from transformers import (
        AutoModelForSequenceClassification,
        AutoTokenizer,
        BitsAndBytesConfig,
        Trainer,
        TrainingArguments,
    )

    quant = BitsAndBytesConfig(
        load_in_4bit=True,
        bnb_4bit_quant_type="nf4",
        bnb_4bit_use_double_quant=True,
        bnb_4bit_compute_dtype=torch.bfloat16
        if torch.cuda.is_bf16_supported() else torch.float16,
    )
    tokenizer = AutoTokenizer.from_pretrained(BASE_MODEL)
    model = AutoModelForSequenceClassification.from_pretrained(
        BASE_MODEL, num_labels=len(labels), quantization_config=quant)
    model = get_peft_model(model, LoraConfig(
        r=profile["lora_rank"],
        lora_alpha=profile["lora_alpha"],
        lora_dropout=profile["lora_dropout"],
        target_modules=LORA_TARGET_MODULES,
        task_type="SEQ_CLS",
    ))

    dataset = load_dataset("csv", data_files={"train": args.train})["train"]
    label_to_idx = {label: i for i, label in enumerate(labels)}

    def encode(row):
        enc = tokenizer(row["text"], truncation=True,
                        max_length=profile["max_sequence_length"])
        enc["labels"] = label_to_idx[row["label"]]
        return enc

    dataset = dataset.map(encode)

    trainer = Trainer(
        model=model,
        args=TrainingArguments(
            output_dir=args.out,
            learning_rate=profile["learning_rate"],
            per_device_train_batch_size=profile["batch_size"],
            gradient_accumulation_steps=profile["gradient_accumulation"],
            num_train_epochs=profile["training_epochs"],
            warmup_ratio=profile["warmup_ratio"],
            weight_decay=profile["weight_decay"],
            label_smoothing_factor=profile["label_smoothing_eps"],
        ),
        train_dataset=dataset,
    )
    # NOTE: to reproduce the class-balanced objectives, override
    # Trainer.compute_loss with the CB-CE / CB-Focal formulas cross-checked
    # in specialist_adapter.crosscheck, using weights exported by the
    # pipeline (shared/weights_<task>.json).
    trainer.train()
    trainer.save_model(args.out)


if __name__ == "__main__":
    main()

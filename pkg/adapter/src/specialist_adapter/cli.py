from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import AdapterConfig, AdapterError
from .crosscheck import crosscheck_losses
from .export import export_logits


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="specialist-adapter",
        description="Export classifier logits in the pipeline's JSONL contract.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    exp = sub.add_parser("export", help="run inference and write logit JSONL")
    exp.add_argument("--model", required=True, help="'toy[:seed]' or a HF model path/id")
    exp.add_argument("--task", required=True, help="exist-1.1 | edos-a | edos-b | edos-c")
    exp.add_argument("--input", required=True, help="CSV/TSV with id,text[,label] columns")
    exp.add_argument("--output", required=True, help="output JSONL path")
    exp.add_argument("--batch-size", type=int, default=16)
    exp.add_argument("--device", default="cpu")

    chk = sub.add_parser("crosscheck", help="recompute shared loss fixtures in torch")
    chk.add_argument("--fixtures", required=True, help="path to loss_fixtures.json")

    args = parser.parse_args(argv)
    try:
        if args.command == "export":
            cfg = AdapterConfig(
                model=args.model, task_id=args.task,
                input_path=Path(args.input), output_path=Path(args.output),
                batch_size=args.batch_size, device=args.device,
            )
            summary = export_logits(cfg)
            print(json.dumps({"exported": summary.exported, "skipped": summary.skipped}))
            return 0
        report = crosscheck_losses(args.fixtures)
        print(json.dumps({
            "cases": report.cases,
            "max_abs_deviation": report.max_abs_deviation,
            "tolerance": report.tolerance,
            "failures": report.failures,
        }))
        return 0 if report.ok else 1
    except (AdapterError, FileNotFoundError) as exc:
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Run the full pipeline on the bundled synthetic task-B fixture with the
scripted mock gateway, then print the class-wise gain table.

No network and no models needed; regenerate the fixture first with
make_synthetic_fixture.py if tests/data/ is missing.

Usage:
    python scripts/run_mock_pipeline.py [output_dir]
"""

from __future__ import annotations

import sys
import tempfile
from pathlib import Path

from cejroute.metrics import render_text_table
from cejroute.pipeline import PipelineConfig, run_pipeline

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "tests" / "data"


def main() -> int:
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
    cfg = PipelineConfig(
        task_id="edos-b",
        run_id="mock-demo",
        mode="full",
        seed=1234,
        dev_logits=DATA / "edosb_dev.jsonl",
        test_logits=DATA / "edosb_test.jsonl",
        output_dir=out_dir,
        margin_grid=tuple(round(0.05 * i, 10) for i in range(11)),
        mock_script=DATA / "mock_script.json",
    )
    run = run_pipeline(cfg)
    print(f"artifacts: {cfg.run_dir}")
    print(f"temperature: {run.calibration.temperature:.4f}  "
          f"tau_conf: {run.calibration.tau_conf}  tau_margin: {run.calibration.tau_margin}")
    print(f"counts: {run.manifest.counts}")
    print()
    print(render_text_table(run.report))
    return 0


if __name__ == "__main__":
    sys.exit(main())

from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

from specialist_adapter.cli import main
from specialist_adapter.config import TASK_LABELS, AdapterConfig, AdapterError
from specialist_adapter.crosscheck import crosscheck_losses
from specialist_adapter.export import export_logits
from specialist_adapter.toy import ToyTextClassifier, parse_toy_spec

SHARED = Path(__file__).resolve().parent.parent.parent / "shared"


def write_csv(path: Path, rows, header="id,text,label"):
    path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")


@pytest.fixture
def toy_csv(tmp_path):
    path = tmp_path / "toy.csv"
    rows = [
        f"r{i},sample text number {i} with shared vocabulary,"
        + ("sexist" if i % 2 else "not sexist")
        for i in range(10)
    ]
    write_csv(path, rows)
    return path


class TestExport:
    def test_contract_shape(self, toy_csv, tmp_path):
        out = tmp_path / "out.jsonl"
        cfg = AdapterConfig(model="toy:3", task_id="edos-a",
                            input_path=toy_csv, output_path=out, batch_size=4)
        summary = export_logits(cfg)
        assert summary.exported == 10 and summary.skipped == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 10
        seen = set()
        for line in lines:
            obj = json.loads(line)
            assert set(obj) == {"instance_id", "text", "gold_label", "logits"}
            assert obj["instance_id"] not in seen
            seen.add(obj["instance_id"])
            assert len(obj["logits"]) == len(TASK_LABELS["edos-a"])
            assert all(math.isfinite(v) for v in obj["logits"])
            assert obj["gold_label"] in TASK_LABELS["edos-a"]

    def test_deterministic_output(self, toy_csv, tmp_path):
        out_a = tmp_path / "a.jsonl"
        out_b = tmp_path / "b.jsonl"
        for out in (out_a, out_b):
            export_logits(AdapterConfig(model="toy:3", task_id="edos-a",
                                        input_path=toy_csv, output_path=out))
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_different_seed_differs(self, toy_csv, tmp_path):
        out_a = tmp_path / "a.jsonl"
        out_b = tmp_path / "b.jsonl"
        export_logits(AdapterConfig(model="toy:3", task_id="edos-a",
                                    input_path=toy_csv, output_path=out_a))
        export_logits(AdapterConfig(model="toy:4", task_id="edos-a",
                                    input_path=toy_csv, output_path=out_b))
        assert out_a.read_bytes() != out_b.read_bytes()

    def test_unreadable_rows_skipped_with_count(self, tmp_path, capsys):
        path = tmp_path / "messy.csv"
        write_csv(path, [
            "r0,good row,sexist",
            ",missing id,sexist",
            "r2,,not sexist",
            "r3,bad label,other",
            "r0,duplicate id,sexist",
            "r4,fine,not sexist",
        ])
        out = tmp_path / "out.jsonl"
        summary = export_logits(AdapterConfig(model="toy", task_id="edos-a",
                                              input_path=path, output_path=out))
        assert summary.exported == 2
        assert summary.skipped == 4
        assert "skipped 4" in capsys.readouterr().err

    def test_gold_label_optional(self, tmp_path):
        path = tmp_path / "unlabeled.csv"
        write_csv(path, ["r0,some text,", "r1,more text,"])
        out = tmp_path / "out.jsonl"
        export_logits(AdapterConfig(model="toy", task_id="exist-1.1",
                                    input_path=path, output_path=out))
        objs = [json.loads(l) for l in out.read_text().splitlines()]
        assert all(o["gold_label"] is None for o in objs)

    def test_eleven_class_head_under_edos_b_is_arity_error(self, tmp_path):
        path = tmp_path / "unlabeled.csv"
        write_csv(path, ["r0,some text,", "r1,other text,"])
        cfg = AdapterConfig(model="toy", task_id="edos-b",
                            input_path=path, output_path=tmp_path / "o.jsonl")
        # build a model with the wrong head on purpose
        from specialist_adapter import export as export_mod
        wrong = ToyTextClassifier(num_classes=11, seed=0)
        original = export_mod._load_model
        export_mod._load_model = lambda _cfg: (wrong, None)
        try:
            with pytest.raises(AdapterError, match="11 logits"):
                export_logits(cfg)
        finally:
            export_mod._load_model = original

    def test_unknown_task_rejected(self, toy_csv, tmp_path):
        with pytest.raises(AdapterError, match="unknown task"):
            AdapterConfig(model="toy", task_id="edos-z",
                          input_path=toy_csv, output_path=tmp_path / "o.jsonl")

    def test_missing_columns_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n", encoding="utf-8")
        with pytest.raises(AdapterError, match="id,text"):
            export_logits(AdapterConfig(model="toy", task_id="edos-a",
                                        input_path=path, output_path=tmp_path / "o.jsonl"))

    def test_toy_spec_parsing(self):
        assert parse_toy_spec("toy") == 0
        assert parse_toy_spec("toy:17") == 17
        assert parse_toy_spec("org/model") is None


class TestCrosscheck:
    def test_shared_fixtures_agree(self):
        if not (SHARED / "loss_fixtures.json").exists():
            pytest.skip("shared fixtures not exported")
        report = crosscheck_losses(SHARED / "loss_fixtures.json")
        assert report.ok, report.failures
        assert report.max_abs_deviation < 1e-5
        assert report.cases >= 3

    def test_gamma_zero_reduction_cases_agree(self):
        if not (SHARED / "loss_fixtures.json").exists():
            pytest.skip("shared fixtures not exported")
        doc = json.loads((SHARED / "loss_fixtures.json").read_text())
        pair = [c for c in doc["cases"]
                if c["gamma"] == 0.0 and c["label_smoothing_eps"] == 0.0
                and not c["use_file_weights"] and len(c["logits"]) == 4]
        kinds = {c["kind"] for c in pair}
        assert kinds == {"cb_ce", "cb_focal"}
        values = {c["kind"]: c["expected_loss"] for c in pair}
        assert values["cb_ce"] == pytest.approx(values["cb_focal"], abs=1e-12)

    def test_corrupted_weight_file_fails(self, tmp_path):
        if not (SHARED / "loss_fixtures.json").exists():
            pytest.skip("shared fixtures not exported")
        fixtures = json.loads((SHARED / "loss_fixtures.json").read_text())
        weights = json.loads((SHARED / fixtures["weights_file"]).read_text())
        first_label = fixtures["class_labels"][0]
        weights["weights"][first_label] *= 3.0  # deliberate corruption
        (tmp_path / "weights_edos_b.json").write_text(json.dumps(weights), encoding="utf-8")
        (tmp_path / "loss_fixtures.json").write_text(json.dumps(fixtures), encoding="utf-8")
        report = crosscheck_losses(tmp_path / "loss_fixtures.json")
        assert not report.ok
        assert main(["crosscheck", "--fixtures", str(tmp_path / "loss_fixtures.json")]) == 1


class TestCli:
    def test_export_and_crosscheck_commands(self, toy_csv, tmp_path, capsys):
        out = tmp_path / "out.jsonl"
        code = main(["export", "--model", "toy:3", "--task", "edos-a",
                     "--input", str(toy_csv), "--output", str(out),
                     "--batch-size", "4"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out.strip())
        assert payload == {"exported": 10, "skipped": 0}
        if (SHARED / "loss_fixtures.json").exists():
            assert main(["crosscheck", "--fixtures",
                         str(SHARED / "loss_fixtures.json")]) == 0

    def test_export_error_exit_code(self, tmp_path, capsys):
        code = main(["export", "--model", "toy", "--task", "edos-a",
                     "--input", str(tmp_path / "missing.csv"),
                     "--output", str(tmp_path / "o.jsonl")])
        assert code == 1
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"] in ("FileNotFoundError", "AdapterError")

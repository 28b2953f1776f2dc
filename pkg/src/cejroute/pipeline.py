"""End-to-end runner: calibrate -> tune -> route -> debate -> merge -> report.

Each phase writes its artifact (keyed by run id) before the next begins, so
a crashed run resumes from the last completed phase: completed debate
transcripts are never re-bought from the gateway.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import yaml

from . import __version__
from .calibration import (
    CalibrationModel,
    apply_threshold,
    calibrate,
    fit_temperature,
    load_calibration,
    save_calibration,
    tune_threshold,
)
from .cej import CejConfig, CejTranscript, read_transcript, run_cej, write_transcript, zero_shot_classify
from .core import Dataset, ProbVector, TaskSchema, builtin_schema, load_dataset
from .errors import ConfigError, PhaseError
from .gateway import Gateway, GatewayConfig, MockTransport, gateway_config_from_dict
from .metrics import RunReport, build_report, render_text_table, write_report_csv, write_report_json
from .routing import (
    RoutingDecision,
    RoutingPolicy,
    cached_outcomes,
    decide,
    proxy_outcomes,
    read_routing_decisions,
    tune_routing,
    write_routing_report,
)

MODES = ("full", "calibrate-only", "route-only", "cej-only", "zero-shot-baseline")


@dataclass(frozen=True)
class PipelineConfig:
    task_id: str
    run_id: str
    mode: str
    seed: int
    dev_logits: Path
    test_logits: Path
    output_dir: Path
    temperature_bounds: tuple[float, float] = (0.05, 10.0)
    grid_step: float = 0.001
    conf_grid: tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 6) for i in range(11))
    margin_grid: tuple[float, ...] | None = None
    outcome_kind: str = "proxy"  # proxy | cached
    outcome_q: float = 0.8
    outcome_cache: Path | None = None
    objective: str = "lexicographic"
    penalty_lambda: float = 0.0
    cej_stage: str = "P5"
    roster_file: Path | None = None
    stages_file: Path | None = None
    summarizer_backend: str = "personas"
    opinion_concurrency: int = 1
    instance_workers: int = 1
    gateway_config: GatewayConfig | None = None
    mock_script: Path | None = None
    csv_report: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        for path in (self.dev_logits, self.test_logits):
            if path is not None and not Path(path).exists():
                raise ConfigError(f"referenced file does not exist: {path}")
        if self.outcome_kind not in ("proxy", "cached"):
            raise ConfigError(f"outcome kind must be proxy or cached, got {self.outcome_kind!r}")

    @property
    def run_dir(self) -> Path:
        return Path(self.output_dir) / self.run_id

    def snapshot(self) -> dict:
        return {
            "task_id": self.task_id,
            "run_id": self.run_id,
            "mode": self.mode,
            "seed": self.seed,
            "dev_logits": str(self.dev_logits),
            "test_logits": str(self.test_logits),
            "temperature_bounds": list(self.temperature_bounds),
            "grid_step": self.grid_step,
            "conf_grid": list(self.conf_grid),
            "margin_grid": None if self.margin_grid is None else list(self.margin_grid),
            "outcome_kind": self.outcome_kind,
            "outcome_q": self.outcome_q,
            "outcome_cache": None if self.outcome_cache is None else str(self.outcome_cache),
            "objective": self.objective,
            "penalty_lambda": self.penalty_lambda,
            "cej_stage": self.cej_stage,
            "summarizer_backend": self.summarizer_backend,
            "version": __version__,
        }


def _parse_grid(raw) -> tuple[float, ...]:
    if isinstance(raw, Mapping):
        start, stop, step = float(raw["start"]), float(raw["stop"]), float(raw["step"])
        n = int(round((stop - start) / step))
        return tuple(float(np.round(start + i * step, 10)) for i in range(n + 1))
    return tuple(float(v) for v in raw)


def load_pipeline_config(path: str | Path, overrides: Mapping | None = None) -> PipelineConfig:
    """Parse the single structured config document (YAML or JSON).

    All paths are resolved relative to the config file's directory unless a
    ``workspace`` key says otherwise. CLI flags arrive as ``overrides``.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) if path.suffix in (".yaml", ".yml") else json.load(fh)
    if overrides:
        doc = {**doc, **{k: v for k, v in overrides.items() if v is not None}}

    root = Path(doc.get("workspace", path.parent))

    def _resolve(p) -> Path | None:
        return None if p is None else (root / p if not Path(p).is_absolute() else Path(p))

    paths = doc.get("paths", {})
    calib = doc.get("calibration", {})
    routing = doc.get("routing", {})
    outcome = routing.get("outcome", {}) or {}
    cej = doc.get("cej", {})
    gw_doc = doc.get("gateway", {}) or {}
    objective = routing.get("objective", "lexicographic")
    penalty_lambda = 0.0
    if isinstance(objective, Mapping):
        penalty_lambda = float(objective.get("lambda", 0.0))
        objective = objective.get("kind", "lexicographic")

    conf_grid = _parse_grid(routing["conf_grid"]) if "conf_grid" in routing \
        else PipelineConfig.__dataclass_fields__["conf_grid"].default
    margin_grid = _parse_grid(routing["margin_grid"]) if routing.get("margin_grid") is not None else None

    return PipelineConfig(
        task_id=doc["task_id"],
        run_id=str(doc.get("run_id", "run")),
        mode=doc.get("mode", "full"),
        seed=int(doc.get("seed", 0)),
        dev_logits=_resolve(paths.get("dev_logits")),
        test_logits=_resolve(paths.get("test_logits")),
        output_dir=_resolve(paths.get("output_dir", "runs")),
        temperature_bounds=tuple(calib.get("temperature_bounds", (0.05, 10.0))),
        grid_step=float(calib.get("grid_step", 0.001)),
        conf_grid=conf_grid,
        margin_grid=margin_grid,
        outcome_kind=outcome.get("kind", "proxy"),
        outcome_q=float(outcome.get("q", 0.8)),
        outcome_cache=_resolve(outcome.get("path")),
        objective=objective,
        penalty_lambda=penalty_lambda,
        cej_stage=cej.get("stage", "P5"),
        roster_file=_resolve(cej.get("roster_file")),
        stages_file=_resolve(cej.get("stages_file")),
        summarizer_backend=cej.get("summarizer_backend", "personas"),
        opinion_concurrency=int(cej.get("opinion_concurrency", 1)),
        instance_workers=int(cej.get("instance_workers", 1)),
        gateway_config=gateway_config_from_dict(gw_doc) if gw_doc.get("backends") else None,
        mock_script=_resolve(gw_doc.get("mock_script")),
        csv_report=bool(doc.get("report", {}).get("csv", False)),
    )


@dataclass
class RunManifest:
    run_id: str
    task_id: str
    mode: str
    seed: int
    config_snapshot: dict
    dataset_fingerprints: dict = field(default_factory=dict)
    calibration: dict | None = None
    counts: dict = field(default_factory=dict)
    phases: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)  # wall clock; excluded from determinism checks
    version: str = __version__

    def to_json_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "task_id": self.task_id,
            "mode": self.mode,
            "seed": self.seed,
            "config_snapshot": self.config_snapshot,
            "dataset_fingerprints": self.dataset_fingerprints,
            "calibration": self.calibration,
            "counts": self.counts,
            "phases": self.phases,
            "timings": self.timings,
            "version": self.version,
        }


def _write_json(path: Path, doc: dict) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    tmp.replace(path)


def build_gateway(cfg: PipelineConfig) -> Gateway:
    if cfg.mock_script is not None:
        transport = MockTransport.from_script_file(cfg.mock_script)
        gw_cfg = cfg.gateway_config
        if gw_cfg is None:
            from .gateway import BackendConfig, RetryConfig
            gw_cfg = GatewayConfig(
                backends={
                    "personas": BackendConfig(url="mock://personas", model="mock-personas"),
                    "judge": BackendConfig(url="mock://judge", model="mock-judge"),
                },
                retry=RetryConfig(max_attempts=3, base_backoff_ms=0.0),
            )
        return Gateway(gw_cfg, transport, sleep=lambda _s: None)
    if cfg.gateway_config is None:
        raise ConfigError("no gateway configured: set gateway.backends or gateway.mock_script")
    from .gateway import HttpTransport
    return Gateway(cfg.gateway_config, HttpTransport(cfg.gateway_config.timeout_s))


def specialist_label(probs: ProbVector, schema: TaskSchema, calib: CalibrationModel) -> str:
    """Thresholded label for binary tasks, argmax otherwise."""
    if schema.is_binary and calib.threshold is not None:
        p_pos = probs.probs[schema.index_of(schema.positive_label)]
        return apply_threshold(p_pos, calib.threshold, schema)
    return schema.class_labels[probs.argmax()]


def _calibrated_probs(dataset: Dataset, temperature: float) -> list[ProbVector]:
    return [calibrate(rec.logits, temperature) for rec in dataset]


class PipelineRun:
    """Executes phases in order with per-phase artifacts and resume."""

    def __init__(self, cfg: PipelineConfig, gateway: Gateway | None = None):
        self.cfg = cfg
        self.schema = builtin_schema(cfg.task_id)
        self._gateway = gateway
        self.run_dir = cfg.run_dir
        self.manifest = RunManifest(
            run_id=cfg.run_id, task_id=cfg.task_id, mode=cfg.mode,
            seed=cfg.seed, config_snapshot=cfg.snapshot(),
        )
        self.dev: Dataset | None = None
        self.test: Dataset | None = None
        self.calibration: CalibrationModel | None = None
        self.policy: RoutingPolicy | None = None
        self.decisions: list[RoutingDecision] = []
        self.transcripts: dict[str, CejTranscript] = {}
        self.final: dict[str, str] = {}
        self.fallback_ids: list[str] = []
        self.report: RunReport | None = None

    # -- plumbing ---------------------------------------------------------

    @property
    def gateway(self) -> Gateway:
        if self._gateway is None:
            self._gateway = build_gateway(self.cfg)
        return self._gateway

    def _artifact(self, name: str) -> Path:
        return self.run_dir / name

    def _save_manifest(self) -> None:
        _write_json(self._artifact("manifest.json"), self.manifest.to_json_dict())

    def _run_phase(self, name: str, fn: Callable[[], None]) -> None:
        t0 = time.monotonic()
        try:
            fn()
        except Exception as exc:
            self.manifest.phases[name] = f"failed: {exc}"
            self.manifest.timings[name] = time.monotonic() - t0
            self._save_manifest()
            raise PhaseError(f"phase {name!r} failed: {exc}") from exc
        # a phase may record its own status (e.g. "skipped: ...")
        self.manifest.phases.setdefault(name, "done")
        self.manifest.timings[name] = time.monotonic() - t0
        self._save_manifest()

    # -- phases -----------------------------------------------------------

    def phase_load(self) -> None:
        if self.cfg.mode != "zero-shot-baseline":
            self.dev = load_dataset(self.cfg.dev_logits, self.schema)
            self.manifest.dataset_fingerprints["dev"] = self.dev.fingerprint()
        self.test = load_dataset(self.cfg.test_logits, self.schema)
        self.manifest.dataset_fingerprints["test"] = self.test.fingerprint()

    def phase_calibrate(self) -> None:
        path = self._artifact("calibration.json")
        if path.exists():
            self.calibration = load_calibration(path, self.cfg.task_id)
            self.manifest.calibration = {
                "temperature": self.calibration.temperature,
                "threshold": self.calibration.threshold,
            }
            return
        temp_model = fit_temperature(self.dev, self.cfg.temperature_bounds)
        threshold = None
        if self.schema.is_binary:
            pos_idx = self.schema.index_of(self.schema.positive_label)
            p_pos = [calibrate(rec.logits, temp_model.temperature).probs[pos_idx]
                     for rec in self.dev]
            gold = [rec.gold_label for rec in self.dev]
            threshold = tune_threshold(p_pos, gold, self.schema, self.cfg.grid_step).threshold
        self.calibration = CalibrationModel(
            task_id=self.cfg.task_id,
            temperature=temp_model.temperature,
            threshold=threshold,
            tau_conf=None,
            tau_margin=None,
            fitted_on=self.dev.fingerprint(),
            grid_step=self.cfg.grid_step,
            bounds=self.cfg.temperature_bounds,
            dev_nll_before=temp_model.dev_nll_before,
            dev_nll_after=temp_model.dev_nll_after,
        )
        save_calibration(path, self.calibration)
        self.manifest.calibration = {
            "temperature": self.calibration.temperature,
            "threshold": self.calibration.threshold,
        }

    def phase_tune(self) -> None:
        tune_path = self._artifact("routing_tune.json")
        calib_path = self._artifact("calibration.json")
        if tune_path.exists():
            self.calibration = load_calibration(calib_path, self.cfg.task_id)
            with open(tune_path, encoding="utf-8") as fh:
                doc = json.load(fh)
            self.policy = RoutingPolicy(
                tau_conf=doc["tau_conf"], tau_margin=doc["tau_margin"], mode=doc["mode"])
            self.manifest.calibration = {
                "temperature": self.calibration.temperature,
                "threshold": self.calibration.threshold,
                "tau_conf": self.calibration.tau_conf,
                "tau_margin": self.calibration.tau_margin,
            }
            return
        probs = _calibrated_probs(self.dev, self.calibration.temperature)
        ids = [rec.instance_id for rec in self.dev]
        gold = {rec.instance_id: rec.gold_label for rec in self.dev}
        spec_labels = [specialist_label(p, self.schema, self.calibration) for p in probs]
        spec_by_id = dict(zip(ids, spec_labels))
        if self.cfg.outcome_kind == "cached":
            with open(self.cfg.outcome_cache, encoding="utf-8") as fh:
                provider = cached_outcomes(json.load(fh))
        else:
            provider = proxy_outcomes(gold, spec_by_id, self.cfg.outcome_q, self.cfg.seed)
        result = tune_routing(
            probs, spec_labels, [gold[i] for i in ids], ids, self.schema,
            conf_grid=self.cfg.conf_grid,
            margin_grid=None if self.schema.is_binary else self.cfg.margin_grid,
            outcome_provider=provider,
            objective=self.cfg.objective,
            penalty_lambda=self.cfg.penalty_lambda,
        )
        self.policy = result.policy
        self.calibration = CalibrationModel(
            task_id=self.calibration.task_id,
            temperature=self.calibration.temperature,
            threshold=self.calibration.threshold,
            tau_conf=result.policy.tau_conf,
            tau_margin=result.policy.tau_margin,
            fitted_on=self.calibration.fitted_on,
            grid_step=self.calibration.grid_step,
            bounds=self.calibration.bounds,
            dev_nll_before=self.calibration.dev_nll_before,
            dev_nll_after=self.calibration.dev_nll_after,
        )
        save_calibration(calib_path, self.calibration)
        self.manifest.calibration = {
            "temperature": self.calibration.temperature,
            "threshold": self.calibration.threshold,
            "tau_conf": self.calibration.tau_conf,
            "tau_margin": self.calibration.tau_margin,
        }
        _write_json(tune_path, {
            "tau_conf": result.policy.tau_conf,
            "tau_margin": result.policy.tau_margin,
            "mode": result.policy.mode,
            "dev_macro_f1": result.dev_macro_f1,
            "dev_escalation_rate": result.dev_escalation_rate,
            "surface": [
                {"tau_conf": c.tau_conf, "tau_margin": c.tau_margin,
                 "macro_f1": c.macro_f1, "escalation_rate": c.escalation_rate,
                 "objective": c.objective}
                for c in result.surface
            ],
        })

    def phase_route(self) -> None:
        jsonl = self._artifact("routing.jsonl")
        if jsonl.exists():
            self.decisions = read_routing_decisions(jsonl)
            return
        probs = _calibrated_probs(self.test, self.calibration.temperature)
        self.decisions = [
            decide(p, self.policy, self.schema, rec.instance_id,
                   specialist_label(p, self.schema, self.calibration))
            for p, rec in zip(probs, self.test)
        ]
        gold = {rec.instance_id: rec.gold_label for rec in self.test
                if rec.gold_label is not None}
        write_routing_report(jsonl, self._artifact("routing_summary.json"),
                             self.decisions, self.schema, gold or None)

    def phase_cej(self) -> None:
        cej_cfg = CejConfig.default(
            stage=self.cfg.cej_stage,
            roster_path=self.cfg.roster_file,
            stages_path=self.cfg.stages_file,
            summarizer_backend=self.cfg.summarizer_backend,
            opinion_concurrency=self.cfg.opinion_concurrency,
        )
        tdir = self._artifact("transcripts")
        text_by_id = {rec.instance_id: rec.text for rec in self.test}
        pending = []
        for decision in self.decisions:
            if not decision.is_escalated:
                continue
            path = tdir / f"{decision.instance_id}.json"
            if path.exists():  # resume: never re-buy a finished debate
                self.transcripts[decision.instance_id] = read_transcript(path)
            else:
                pending.append(decision)

        def debate(decision):
            transcript = run_cej(
                text_by_id[decision.instance_id], decision.instance_id,
                cej_cfg, self.schema, self.gateway,
            )
            write_transcript(tdir, transcript)
            return decision.instance_id, transcript

        # instances are independent; results key by id, so worker count
        # cannot change any downstream artifact
        if self.cfg.instance_workers > 1 and pending:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(max_workers=self.cfg.instance_workers) as pool:
                for iid, transcript in pool.map(debate, pending):
                    self.transcripts[iid] = transcript
        else:
            for decision in pending:
                iid, transcript = debate(decision)
                self.transcripts[iid] = transcript

    def phase_merge(self) -> None:
        path = self._artifact("final_predictions.jsonl")
        self.final = {}
        self.fallback_ids = []
        degraded = 0
        for decision in self.decisions:
            iid = decision.instance_id
            if not decision.is_escalated:
                self.final[iid] = decision.specialist_label
                continue
            transcript = self.transcripts[iid]
            if transcript.is_degraded:
                degraded += 1
            if transcript.judgment is None:
                # terminal judge failure: routing still promises a label
                self.final[iid] = decision.specialist_label
                self.fallback_ids.append(iid)
            else:
                self.final[iid] = transcript.judgment.label
        with open(path, "w", encoding="utf-8") as fh:
            for decision in self.decisions:
                iid = decision.instance_id
                fh.write(json.dumps({
                    "instance_id": iid,
                    "label": self.final[iid],
                    "source": "specialist" if not decision.is_escalated
                    else ("fallback" if iid in self.fallback_ids else "cej"),
                }, sort_keys=True) + "\n")
        escalated = sum(1 for d in self.decisions if d.is_escalated)
        self.manifest.counts = {
            "total": len(self.decisions),
            "accepted": len(self.decisions) - escalated,
            "escalated": escalated,
            "degraded": degraded,
            "fallback": len(self.fallback_ids),
        }
        if self.manifest.counts["accepted"] + escalated != len(self.decisions):
            raise PhaseError("conservation violated: accepted + escalated != total")

    def phase_report(self) -> None:
        gold = {rec.instance_id: rec.gold_label for rec in self.test}
        if any(v is None for v in gold.values()):
            self.manifest.phases["report"] = "skipped: test set has no gold labels"
            return
        baseline = {d.instance_id: d.specialist_label for d in self.decisions}
        self.report = build_report(baseline, self.final, self.decisions, gold, self.schema)
        write_report_json(self._artifact("report.json"), self.report)
        with open(self._artifact("report.txt"), "w", encoding="utf-8") as fh:
            fh.write(render_text_table(self.report))
        if self.cfg.csv_report:
            write_report_csv(self._artifact("report.csv"), self.report)

    def phase_zero_shot(self) -> None:
        preds = {}
        for rec in self.test:
            preds[rec.instance_id] = zero_shot_classify(
                rec.text, self.schema, self.gateway, rec.instance_id)
        with open(self._artifact("zero_shot_predictions.jsonl"), "w", encoding="utf-8") as fh:
            for rec in self.test:
                fh.write(json.dumps({
                    "instance_id": rec.instance_id, "label": preds[rec.instance_id],
                }, sort_keys=True) + "\n")
        self.manifest.counts = {"total": len(self.test), "accepted": len(self.test),
                                "escalated": 0, "degraded": 0, "fallback": 0}

    # -- driver -----------------------------------------------------------

    def execute(self) -> "PipelineRun":
        self.run_dir.mkdir(parents=True, exist_ok=True)
        manifest_path = self._artifact("manifest.json")
        if manifest_path.exists():
            with open(manifest_path, encoding="utf-8") as fh:
                existing = json.load(fh)

            def _identity(snapshot: dict) -> dict:
                # mode is a phase selector, not part of the run's identity:
                # route-only followed by cej-only on one run_id is the
                # intended split workflow
                return {k: v for k, v in (snapshot or {}).items() if k != "mode"}

            if _identity(existing.get("config_snapshot")) != _identity(self.manifest.config_snapshot):
                raise ConfigError(
                    f"run_id {self.cfg.run_id!r} already exists in {self.cfg.output_dir} "
                    "with a different config; choose a new run_id"
                )
        full = [("load", self.phase_load), ("calibrate", self.phase_calibrate),
                ("tune", self.phase_tune), ("route", self.phase_route),
                ("cej", self.phase_cej), ("merge", self.phase_merge),
                ("report", self.phase_report)]
        if self.cfg.mode == "zero-shot-baseline":
            phases = [("load", self.phase_load), ("zero-shot", self.phase_zero_shot)]
        elif self.cfg.mode == "calibrate-only":
            phases = full[:2]
        elif self.cfg.mode == "route-only":
            phases = full[:4]
        else:
            # "full" and "cej-only" share the list: the earlier phases load
            # their cached artifacts instead of recomputing
            phases = full
        for name, fn in phases:
            self._run_phase(name, fn)
        return self


def run_pipeline(cfg: PipelineConfig, gateway: Gateway | None = None) -> PipelineRun:
    return PipelineRun(cfg, gateway).execute()


def plan_dry_run(cfg: PipelineConfig) -> dict:
    """Compute planned gateway call counts without any gateway traffic.

    Uses the cached routing artifact when the run already has one;
    otherwise calibrates and routes in memory (both phases are
    gateway-free) and writes nothing.
    """
    schema = builtin_schema(cfg.task_id)
    roster_size = len(CejConfig.default(
        stage=cfg.cej_stage, roster_path=cfg.roster_file, stages_path=cfg.stages_file,
    ).roster)
    routing_path = cfg.run_dir / "routing.jsonl"
    if routing_path.exists():
        decisions = read_routing_decisions(routing_path)
        escalated = sum(1 for d in decisions if d.is_escalated)
    else:
        run = PipelineRun(cfg)
        run.phase_load()
        dev = run.dev
        temp_model = fit_temperature(dev, cfg.temperature_bounds)
        threshold = None
        if schema.is_binary:
            pos_idx = schema.index_of(schema.positive_label)
            p_pos = [calibrate(rec.logits, temp_model.temperature).probs[pos_idx] for rec in dev]
            threshold = tune_threshold(p_pos, [r.gold_label for r in dev], schema,
                                       cfg.grid_step).threshold
        calib = CalibrationModel(
            task_id=cfg.task_id, temperature=temp_model.temperature, threshold=threshold,
            tau_conf=None, tau_margin=None, fitted_on=dev.fingerprint(),
            grid_step=cfg.grid_step, bounds=cfg.temperature_bounds,
        )
        probs = _calibrated_probs(dev, calib.temperature)
        ids = [rec.instance_id for rec in dev]
        gold = {rec.instance_id: rec.gold_label for rec in dev}
        spec_labels = [specialist_label(p, schema, calib) for p in probs]
        provider = proxy_outcomes(gold, dict(zip(ids, spec_labels)), cfg.outcome_q, cfg.seed) \
            if cfg.outcome_kind == "proxy" else cached_outcomes(
                json.load(open(cfg.outcome_cache, encoding="utf-8")))
        result = tune_routing(
            probs, spec_labels, [gold[i] for i in ids], ids, schema,
            conf_grid=cfg.conf_grid,
            margin_grid=None if schema.is_binary else cfg.margin_grid,
            outcome_provider=provider, objective=cfg.objective,
            penalty_lambda=cfg.penalty_lambda,
        )
        test = run.test
        test_probs = _calibrated_probs(test, calib.temperature)
        escalated = sum(
            1 for p, rec in zip(test_probs, test)
            if decide(p, result.policy, schema, rec.instance_id).is_escalated
        )
    calls_per_instance = roster_size + 3
    return {
        "escalated": escalated,
        "calls_per_instance": calls_per_instance,
        "planned_gateway_calls": escalated * calls_per_instance,
    }

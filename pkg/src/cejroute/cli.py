"""Command-line interface binding the pipeline phases.

Exit codes: 0 success, 1 phase/data errors (structured JSON on stderr),
2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from .core import builtin_schema, load_dataset
from .errors import CejRouteError
from .metrics import build_report, render_text_table
from .pipeline import PipelineRun, load_pipeline_config, plan_dry_run, run_pipeline
from .prompts import build_zero_shot_prompt
from .routing import read_routing_decisions


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cejroute",
        description="Selective sexism-detection inference: calibrate, route, debate, report.",
    )
    parser.add_argument("--json", action="store_true", dest="as_json",
                        help="emit machine-readable JSON on stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, needs_config: bool = True) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=needs_config, help="pipeline config file (YAML or JSON)")
        p.add_argument("--run-id", default=None, help="override the config's run id")
        p.add_argument("--seed", type=int, default=None, help="override the config's seed")
        p.add_argument("--dry-run", action="store_true",
                       help="print planned gateway calls without making any")
        return p

    add("calibrate", "fit temperature (and binary threshold) on the dev set")
    add("tune-routing", "grid-search the routing thresholds on the dev set")
    add("route", "apply the tuned policy to the test set")
    add("cej", "run the debate protocol over escalated instances")
    add("pipeline", "run every phase end to end")
    add("evaluate", "rebuild the report from a finished run's artifacts")
    zs = add("zero-shot", "single-call baseline with the literal task prompt", needs_config=False)
    zs.add_argument("--task", default=None,
                    help="task id (dry-run only needs this, not a config)")
    return parser


def _load_cfg(args, mode: str | None = None):
    overrides = {}
    if args.run_id is not None:
        overrides["run_id"] = args.run_id
    if args.seed is not None:
        overrides["seed"] = args.seed
    if mode is not None:
        overrides["mode"] = mode
    return load_pipeline_config(args.config, overrides)


def _emit(args, human: str, payload: dict) -> None:
    if args.as_json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(human)


def _cmd_calibrate(args) -> int:
    cfg = _load_cfg(args, mode="calibrate-only")
    run = run_pipeline(cfg)
    calib = run.calibration
    _emit(args,
          f"temperature={calib.temperature:.6f} threshold={calib.threshold} "
          f"-> {run.run_dir / 'calibration.json'}",
          {"temperature": calib.temperature, "threshold": calib.threshold,
           "artifact": str(run.run_dir / "calibration.json")})
    return 0


def _cmd_tune_routing(args) -> int:
    cfg = _load_cfg(args, mode="route-only")
    run = PipelineRun(cfg)
    run.run_dir.mkdir(parents=True, exist_ok=True)
    for name, fn in (("load", run.phase_load), ("calibrate", run.phase_calibrate),
                     ("tune", run.phase_tune)):
        run._run_phase(name, fn)
    _emit(args,
          f"tau_conf={run.policy.tau_conf} tau_margin={run.policy.tau_margin} "
          f"-> {run.run_dir / 'routing_tune.json'}",
          {"tau_conf": run.policy.tau_conf, "tau_margin": run.policy.tau_margin,
           "artifact": str(run.run_dir / "routing_tune.json")})
    return 0


def _cmd_route(args) -> int:
    cfg = _load_cfg(args, mode="route-only")
    run = run_pipeline(cfg)
    escalated = sum(1 for d in run.decisions if d.is_escalated)
    _emit(args,
          f"routed {len(run.decisions)} instances, {escalated} escalated "
          f"-> {run.run_dir / 'routing.jsonl'}",
          {"total": len(run.decisions), "escalated": escalated,
           "artifact": str(run.run_dir / "routing.jsonl")})
    return 0


def _cmd_cej(args) -> int:
    cfg = _load_cfg(args, mode="cej-only")
    if args.dry_run:
        plan = plan_dry_run(cfg)
        _emit(args,
              f"would make {plan['calls_per_instance']}*{plan['escalated']} = "
              f"{plan['planned_gateway_calls']} gateway calls",
              plan)
        return 0
    run = run_pipeline(cfg)
    _emit(args,
          f"debated {run.manifest.counts.get('escalated', 0)} instances "
          f"({run.manifest.counts.get('fallback', 0)} fallbacks)",
          {"counts": run.manifest.counts})
    return 0


def _cmd_pipeline(args) -> int:
    cfg = _load_cfg(args, mode="full")
    if args.dry_run:
        plan = plan_dry_run(cfg)
        _emit(args,
              f"would make {plan['calls_per_instance']}*{plan['escalated']} = "
              f"{plan['planned_gateway_calls']} gateway calls",
              plan)
        return 0
    run = run_pipeline(cfg)
    payload = {"counts": run.manifest.counts,
               "artifacts": str(run.run_dir)}
    if run.report is not None:
        payload["macro_f1"] = run.report.macro_f1
        payload["baseline_macro_f1"] = run.report.baseline_macro_f1
        human = (f"macro-F1 {run.report.baseline_macro_f1:.4f} -> {run.report.macro_f1:.4f}; "
                 f"counts {run.manifest.counts}")
    else:
        human = f"pipeline done; counts {run.manifest.counts}"
    _emit(args, human, payload)
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    schema = builtin_schema(cfg.task_id)
    run_dir = cfg.run_dir
    decisions = read_routing_decisions(run_dir / "routing.jsonl")
    final = {}
    with open(run_dir / "final_predictions.jsonl", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                final[obj["instance_id"]] = obj["label"]
    test = load_dataset(cfg.test_logits, schema)
    gold = {rec.instance_id: rec.gold_label for rec in test}
    baseline = {d.instance_id: d.specialist_label for d in decisions}
    report = build_report(baseline, final, decisions, gold, schema)
    _emit(args, render_text_table(report), report.to_json_dict())
    return 0


def _cmd_zero_shot(args) -> int:
    if args.dry_run:
        task_id = args.task
        if task_id is None and args.config:
            task_id = _load_cfg(args).task_id
        if task_id is None:
            print("zero-shot --dry-run needs --task or --config", file=sys.stderr)
            return 2
        prompt = build_zero_shot_prompt("<text>", builtin_schema(task_id))
        _emit(args, prompt, {"task_id": task_id, "prompt": prompt})
        return 0
    if not args.config:
        print("zero-shot without --dry-run needs --config", file=sys.stderr)
        return 2
    cfg = _load_cfg(args, mode="zero-shot-baseline")
    run = run_pipeline(cfg)
    _emit(args,
          f"classified {run.manifest.counts['total']} instances "
          f"-> {run.run_dir / 'zero_shot_predictions.jsonl'}",
          {"counts": run.manifest.counts,
           "artifact": str(run.run_dir / "zero_shot_predictions.jsonl")})
    return 0


_COMMANDS = {
    "calibrate": _cmd_calibrate,
    "tune-routing": _cmd_tune_routing,
    "route": _cmd_route,
    "cej": _cmd_cej,
    "pipeline": _cmd_pipeline,
    "evaluate": _cmd_evaluate,
    "zero-shot": _cmd_zero_shot,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CejRouteError as exc:
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}),
              file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(json.dumps({"error": "FileNotFoundError", "detail": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Collaborative expert judgment: the four-stage debate protocol.

Stages per escalated instance: independent persona opinions (K calls),
one structured debate call, one summarization call, one judge call, so a
clean instance costs K+3 gateway calls. Stage degradations are recorded as
transcript flags; only a judge failure is terminal, and the caller then
falls back to the specialist label.
"""

from __future__ import annotations

import json
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .core import TaskSchema
from .errors import GatewayError, ParseError
from .gateway import (
    JUDGE_BACKEND,
    PERSONAS_BACKEND,
    ChatRequest,
    Gateway,
    Message,
)
from .parsing import (
    DebateTurn,
    Judgment,
    PersonaOpinion,
    coerce_label,
    parse_debate,
    parse_judgment,
    parse_opinion,
)
from .prompts import (
    DEFAULT_STAGE,
    Persona,
    PromptStageConfig,
    build_debate_prompt,
    build_initial_prompt,
    build_judge_prompt,
    build_summary_prompt,
    build_zero_shot_prompt,
    load_roster,
    load_stage_config,
)

OPINIONS_STAGE = "opinions"
DEBATE_STAGE = "debate"
SUMMARY_STAGE = "summary"
JUDGE_STAGE = "judge"


@dataclass(frozen=True)
class CejConfig:
    roster: tuple[Persona, ...]
    stage_cfg: PromptStageConfig
    parse_retries: int = 2  # extra asks per call when the payload will not parse
    summarizer_backend: str = PERSONAS_BACKEND
    opinion_concurrency: int = 1

    @classmethod
    def default(cls, stage: str = DEFAULT_STAGE, roster_path=None, stages_path=None,
                **kwargs) -> "CejConfig":
        return cls(roster=load_roster(roster_path),
                   stage_cfg=load_stage_config(stage, stages_path), **kwargs)


@dataclass(frozen=True)
class CejTranscript:
    instance_id: str
    text: str
    opinions: tuple[PersonaOpinion, ...]
    debate: tuple[DebateTurn, ...]
    summary: str | None
    judgment: Judgment | None
    llm_calls: int
    per_stage_latency: dict[str, float]
    stage_times: dict[str, tuple[float, float]]
    raw_payloads: dict[str, list[str]]
    flags: tuple[str, ...] = ()

    @property
    def judge_failed(self) -> bool:
        return self.judgment is None

    @property
    def is_degraded(self) -> bool:
        return bool(self.flags)

    def to_json_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "text": self.text,
            "opinions": [o.to_json_dict() for o in self.opinions],
            "debate": [t.to_json_dict() for t in self.debate],
            "summary": self.summary,
            "judgment": None if self.judgment is None else self.judgment.to_json_dict(),
            "llm_calls": self.llm_calls,
            "per_stage_latency": self.per_stage_latency,
            "stage_times": {k: list(v) for k, v in self.stage_times.items()},
            "raw_payloads": self.raw_payloads,
            "flags": list(self.flags),
        }


def _chat(gateway: Gateway, prompt: str, role_tag: str, metadata: dict):
    req = ChatRequest(
        model_name="",
        messages=(Message(role="user", content=prompt),),
        sampling=gateway.config.sampling,
        role_tag=role_tag,
        metadata=metadata,
    )
    return gateway.chat(req)


def collect_initial_opinions(
    text: str,
    instance_id: str,
    cfg: CejConfig,
    schema: TaskSchema,
    gateway: Gateway,
) -> tuple[list[PersonaOpinion], list[str], int, float, list[str]]:
    """One independent call per persona; a persona whose responses never
    parse (or whose calls exhaust the gateway budget) abstains rather than
    dropping the instance."""

    def ask(persona: Persona) -> tuple[PersonaOpinion, list[str], int, float]:
        prompt = build_initial_prompt(persona, text, cfg.stage_cfg, schema)
        raws: list[str] = []
        calls = 0
        latency = 0.0
        for _attempt in range(1 + cfg.parse_retries):
            try:
                calls += 1
                resp = _chat(gateway, prompt, PERSONAS_BACKEND, {
                    "stage": "opinion", "persona": persona.persona_id,
                    "instance_id": instance_id,
                })
            except GatewayError as exc:
                raws.append(f"<gateway error: {exc}>")
                break
            raws.append(resp.content)
            latency += resp.latency
            try:
                opinion = parse_opinion(resp.content, schema, persona.persona_id, cfg.roster)
                return opinion, raws, calls, latency
            except ParseError:
                continue
        abstain = PersonaOpinion(
            persona_id=persona.persona_id, label=None, justification="",
            confidence=0.0, abstained=True, flags=("abstained",),
        )
        return abstain, raws, calls, latency

    if cfg.opinion_concurrency > 1:
        with ThreadPoolExecutor(max_workers=cfg.opinion_concurrency) as pool:
            results = list(pool.map(ask, cfg.roster))
    else:
        results = [ask(p) for p in cfg.roster]

    opinions, all_raws, total_calls, total_latency, flags = [], [], 0, 0.0, []
    for persona, (opinion, raws, calls, latency) in zip(cfg.roster, results):
        opinions.append(opinion)
        all_raws.extend(raws)
        total_calls += calls
        total_latency += latency
        if opinion.abstained:
            flags.append(f"abstained:{persona.persona_id}")
    return opinions, all_raws, total_calls, total_latency, flags


def _opinions_json(opinions: Sequence[PersonaOpinion]) -> str:
    return json.dumps([o.to_json_dict() for o in opinions], ensure_ascii=False)


def run_debate(
    text: str,
    instance_id: str,
    opinions: Sequence[PersonaOpinion],
    cfg: CejConfig,
    schema: TaskSchema,
    gateway: Gateway,
) -> tuple[list[DebateTurn], list[str], int, float, list[str]]:
    """One gateway call carrying all opinions, returning all turns.

    Turns violating the engagement rule come back flagged; an unparseable
    debate degrades the transcript and the judge proceeds opinions-only.
    """
    prompt = build_debate_prompt(text, _opinions_json(opinions), cfg.stage_cfg, schema)
    raws: list[str] = []
    calls = 0
    latency = 0.0
    flags: list[str] = []
    turns: list[DebateTurn] = []
    for _attempt in range(1 + cfg.parse_retries):
        try:
            calls += 1
            resp = _chat(gateway, prompt, PERSONAS_BACKEND, {
                "stage": "debate", "instance_id": instance_id,
            })
        except GatewayError as exc:
            raws.append(f"<gateway error: {exc}>")
            flags.append("debate_unparseable")
            return [], raws, calls, latency, flags
        raws.append(resp.content)
        latency += resp.latency
        try:
            turns = parse_debate(resp.content, schema, cfg.roster)
            break
        except ParseError:
            turns = []
            continue
    if not turns:
        flags.append("debate_unparseable")
        return [], raws, calls, latency, flags

    by_persona = {t.persona_id: t for t in turns}
    ordered = [by_persona[p.persona_id] for p in cfg.roster if p.persona_id in by_persona]
    ordered += [t for t in turns if t.persona_id not in {p.persona_id for p in cfg.roster}]
    missing = [p.persona_id for p in cfg.roster if p.persona_id not in by_persona]
    for pid in missing:
        flags.append(f"debate_missing:{pid}")
    if any(not t.engagement_ok for t in ordered):
        flags.append("engagement_violation")
    return ordered, raws, calls, latency, flags


def summarize(
    text: str,
    instance_id: str,
    debate_json: str,
    cfg: CejConfig,
    gateway: Gateway,
) -> tuple[str | None, list[str], int, float, list[str]]:
    """Single summarization call; an empty synthesis degrades the stage and
    the judge receives the raw debate text instead."""
    prompt = build_summary_prompt(text, debate_json)
    raws: list[str] = []
    calls = 0
    latency = 0.0
    for _attempt in range(1 + cfg.parse_retries):
        try:
            calls += 1
            resp = _chat(gateway, prompt, cfg.summarizer_backend, {
                "stage": "summary", "instance_id": instance_id,
            })
        except GatewayError as exc:
            raws.append(f"<gateway error: {exc}>")
            return None, raws, calls, latency, ["summary_failed"]
        raws.append(resp.content)
        latency += resp.latency
        if resp.content.strip():
            return resp.content, raws, calls, latency, []
    return None, raws, calls, latency, ["summary_empty"]


def judge(
    text: str,
    instance_id: str,
    opinions: Sequence[PersonaOpinion],
    summary_text: str,
    cfg: CejConfig,
    schema: TaskSchema,
    gateway: Gateway,
) -> tuple[Judgment | None, list[str], int, float, list[str]]:
    """Final adjudication; an unrecoverable judgment is terminal for the
    instance and the pipeline substitutes the specialist label."""
    prompt = build_judge_prompt(text, _opinions_json(opinions), summary_text,
                                cfg.stage_cfg, schema)
    raws: list[str] = []
    calls = 0
    latency = 0.0
    for _attempt in range(1 + cfg.parse_retries):
        try:
            calls += 1
            resp = _chat(gateway, prompt, JUDGE_BACKEND, {
                "stage": "judge", "instance_id": instance_id,
            })
        except GatewayError as exc:
            raws.append(f"<gateway error: {exc}>")
            return None, raws, calls, latency, ["judge_failed"]
        raws.append(resp.content)
        latency += resp.latency
        try:
            verdict = parse_judgment(resp.content, schema)
            return verdict, raws, calls, latency, []
        except ParseError:
            continue
    return None, raws, calls, latency, ["judge_failed"]


def run_cej(
    text: str,
    instance_id: str,
    cfg: CejConfig,
    schema: TaskSchema,
    gateway: Gateway,
) -> CejTranscript:
    """Execute the four stages strictly in order and keep all the evidence.

    The debate needs the opinions and the judge needs the summary, so
    stages never interleave; initial opinions may fan out concurrently.
    """
    flags: list[str] = []
    raw_payloads: dict[str, list[str]] = {}
    per_stage_latency: dict[str, float] = {}
    stage_times: dict[str, tuple[float, float]] = {}
    llm_calls = 0

    t0 = time.monotonic()
    opinions, raws, calls, latency, stage_flags = collect_initial_opinions(
        text, instance_id, cfg, schema, gateway)
    stage_times[OPINIONS_STAGE] = (t0, time.monotonic())
    raw_payloads[OPINIONS_STAGE] = raws
    per_stage_latency[OPINIONS_STAGE] = latency
    llm_calls += calls
    flags.extend(stage_flags)

    t0 = time.monotonic()
    turns, raws, calls, latency, stage_flags = run_debate(
        text, instance_id, opinions, cfg, schema, gateway)
    stage_times[DEBATE_STAGE] = (t0, time.monotonic())
    raw_payloads[DEBATE_STAGE] = raws
    per_stage_latency[DEBATE_STAGE] = latency
    llm_calls += calls
    flags.extend(stage_flags)

    if turns:
        debate_json = json.dumps([t.to_json_dict() for t in turns], ensure_ascii=False)
    else:
        # opinions-only fallback: the summarizer condenses what evidence exists
        debate_json = _opinions_json(opinions)

    t0 = time.monotonic()
    summary, raws, calls, latency, stage_flags = summarize(
        text, instance_id, debate_json, cfg, gateway)
    stage_times[SUMMARY_STAGE] = (t0, time.monotonic())
    raw_payloads[SUMMARY_STAGE] = raws
    per_stage_latency[SUMMARY_STAGE] = latency
    llm_calls += calls
    flags.extend(stage_flags)

    summary_for_judge = summary if summary is not None else debate_json

    t0 = time.monotonic()
    verdict, raws, calls, latency, stage_flags = judge(
        text, instance_id, opinions, summary_for_judge, cfg, schema, gateway)
    stage_times[JUDGE_STAGE] = (t0, time.monotonic())
    raw_payloads[JUDGE_STAGE] = raws
    per_stage_latency[JUDGE_STAGE] = latency
    llm_calls += calls
    flags.extend(stage_flags)

    return CejTranscript(
        instance_id=instance_id,
        text=text,
        opinions=tuple(opinions),
        debate=tuple(turns),
        summary=summary,
        judgment=verdict,
        llm_calls=llm_calls,
        per_stage_latency=per_stage_latency,
        stage_times=stage_times,
        raw_payloads=raw_payloads,
        flags=tuple(flags),
    )


def zero_shot_classify(
    text: str,
    schema: TaskSchema,
    gateway: Gateway,
    instance_id: str = "",
) -> str:
    """Single-call baseline with the literal task prompt; an unmappable
    response is an error, never a silent default."""
    prompt = build_zero_shot_prompt(text, schema)
    resp = _chat(gateway, prompt, PERSONAS_BACKEND, {
        "stage": "zero_shot", "instance_id": instance_id,
    })
    try:
        label, _ = coerce_label(resp.content, schema)
    except ValueError as exc:
        raise ParseError(str(exc), raw=resp.content) from None
    return label


def _safe_filename(instance_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", instance_id) or "_"


def write_transcript(directory: str | Path, transcript: CejTranscript) -> Path:
    """Atomic per-instance JSON write; safe under concurrent workers."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{_safe_filename(transcript.instance_id)}.json"
    tmp = path.with_suffix(".json.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(transcript.to_json_dict(), fh, indent=2, ensure_ascii=False, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def read_transcript(path: str | Path) -> CejTranscript:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    opinions = tuple(
        PersonaOpinion(
            persona_id=o["persona"],
            label=o.get("label"),
            justification=o.get("justification", ""),
            confidence=float(o.get("confidence", 0.0)),
            abstained=bool(o.get("abstained", False)),
        )
        for o in doc["opinions"]
    )
    debate = tuple(
        DebateTurn(
            persona_id=t["persona"],
            intent=t.get("intent", ""),
            reaction=t.get("reaction", ""),
            updated_reasoning=t.get("updated_reasoning", ""),
            final_stance=t["final_stance"],
            stance_changed=bool(t.get("stance_changed", False)),
            updated_confidence=float(t.get("updated_confidence", 0.0)),
        )
        for t in doc["debate"]
    )
    verdict = doc.get("judgment")
    judgment = None if verdict is None else Judgment(
        label=verdict["label"],
        justification=verdict.get("justification", ""),
        confidence=float(verdict.get("confidence", 0.0)),
    )
    return CejTranscript(
        instance_id=doc["instance_id"],
        text=doc.get("text", ""),
        opinions=opinions,
        debate=debate,
        summary=doc.get("summary"),
        judgment=judgment,
        llm_calls=int(doc["llm_calls"]),
        per_stage_latency=dict(doc.get("per_stage_latency", {})),
        stage_times={k: (v[0], v[1]) for k, v in doc.get("stage_times", {}).items()},
        raw_payloads={k: list(v) for k, v in doc.get("raw_payloads", {}).items()},
        flags=tuple(doc.get("flags", ())),
    )

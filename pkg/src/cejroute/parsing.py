"""Recovery of structured persona/judge payloads from LLM text.

The prompts demand "only a valid JSON object"; real models wrap JSON in
prose, quote numbers, or write stances like ``1 (changed from 0)``. The
extraction pipeline is: strict parse of the whole body, then the first
balanced JSON block (with a targeted repair for the changed-from idiom),
then field-level coercions. Anything still unrecoverable raises ParseError
carrying the raw text.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Sequence

from .core import TaskSchema
from .errors import ParseError
from .prompts import Persona

OPINION = "opinion"
DEBATE = "debate"
JUDGMENT = "judgment"

_CHANGED_VALUE_RE = re.compile(r'(:\s*)([^",{}\[\]\n]*?\(changed from[^)]*\))')
_STANCE_RE = re.compile(r"^\s*(.+?)\s*\(changed from\s+(.+?)\)\s*$")
_LEADING_NUMBER_RE = re.compile(r"^(\d+(?:\.\d+)?)[.)]?\s*(.*)$")

_BINARY_POSITIVE = {"1", "yes", "true", "sexist"}
_BINARY_NEGATIVE = {"0", "no", "false", "not sexist", "non-sexist"}


@dataclass(frozen=True)
class PersonaOpinion:
    persona_id: str
    label: str | None
    justification: str
    confidence: float
    abstained: bool = False
    flags: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        if self.abstained:
            return {"persona": self.persona_id, "abstained": True,
                    "note": "no opinion provided"}
        return {
            "persona": self.persona_id,
            "label": self.label,
            "justification": self.justification,
            "confidence": self.confidence,
        }


@dataclass(frozen=True)
class DebateTurn:
    persona_id: str
    intent: str
    reaction: str
    updated_reasoning: str
    final_stance: str
    stance_changed: bool
    updated_confidence: float
    changed_from: str | None = None
    engagement_ok: bool = True
    flags: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "persona": self.persona_id,
            "intent": self.intent,
            "reaction": self.reaction,
            "updated_reasoning": self.updated_reasoning,
            "final_stance": self.final_stance,
            "stance_changed": self.stance_changed,
            "updated_confidence": self.updated_confidence,
        }


@dataclass(frozen=True)
class Judgment:
    label: str
    justification: str
    confidence: float
    flags: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "label": self.label,
            "justification": self.justification,
            "confidence": self.confidence,
        }


def coerce_label(value, schema: TaskSchema) -> tuple[str, bool]:
    """Map a model-emitted label onto the schema; returns (label, coerced).

    Accepted forms: the exact label (any case), binary shorthands
    (1/0, YES/NO, sexist/not sexist), a category number matching the
    label's leading number, or the category name without its number.
    """
    s = str(value).strip().strip('"').strip("'").strip()
    low = s.lower().rstrip(".")
    for lab in schema.class_labels:
        if low == lab.lower():
            return lab, s != lab
    if schema.is_binary:
        if low in _BINARY_POSITIVE:
            return schema.positive_label, True
        if low in _BINARY_NEGATIVE:
            return schema.negative_label, True
    m_val = _LEADING_NUMBER_RE.match(low)
    for lab in schema.class_labels:
        m_lab = _LEADING_NUMBER_RE.match(lab.lower())
        if m_lab is None:
            continue
        num, name = m_lab.groups()
        if m_val is not None and m_val.group(1) == num:
            return lab, True
        if low == name.rstrip("."):
            return lab, True
    raise ValueError(f"cannot map {value!r} onto schema {schema.task_id}")


def coerce_confidence(value) -> tuple[float, bool]:
    """Parse a confidence as a real in [0, 1]; clamping sets the flag."""
    try:
        conf = float(str(value).strip().strip('"'))
    except (TypeError, ValueError):
        raise ValueError(f"confidence {value!r} is not a real number") from None
    clamped = min(1.0, max(0.0, conf))
    return clamped, clamped != conf


def _repair(text: str) -> str:
    """Quote bare ``X (changed from Y)`` values so json.loads can cope."""
    return _CHANGED_VALUE_RE.sub(lambda m: f'{m.group(1)}"{m.group(2).strip()}"', text)


def _balanced_blocks(raw: str, open_ch: str, close_ch: str) -> list[str]:
    blocks: list[str] = []
    depth = 0
    start = 0
    in_str = False
    escaped = False
    for i, ch in enumerate(raw):
        if in_str:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
        elif ch == open_ch:
            if depth == 0:
                start = i
            depth += 1
        elif ch == close_ch and depth > 0:
            depth -= 1
            if depth == 0:
                blocks.append(raw[start:i + 1])
    return blocks


def _load_candidates(raw: str, want_list: bool = False):
    """Yield parsed JSON values in decreasing strictness order."""
    texts = [raw, _repair(raw)]
    wrapper = ("[", "]") if want_list else ("{", "}")
    for block in _balanced_blocks(raw, *wrapper):
        texts.extend([block, _repair(block)])
    for text in texts:
        try:
            yield json.loads(text)
        except json.JSONDecodeError:
            continue
    if want_list:
        # last resort: concatenated bare objects without array brackets
        objs = []
        for block in _balanced_blocks(raw, "{", "}"):
            for text in (block, _repair(block)):
                try:
                    objs.append(json.loads(text))
                    break
                except json.JSONDecodeError:
                    continue
        if objs:
            yield objs


def _first_dict(raw: str) -> dict:
    for value in _load_candidates(raw):
        if isinstance(value, dict):
            return value
    raise ParseError("no JSON object found in payload", raw=raw)


def parse_opinion(
    raw: str,
    schema: TaskSchema,
    expected_persona_id: str,
    roster: Sequence[Persona] = (),
) -> PersonaOpinion:
    obj = _first_dict(raw)
    flags: list[str] = []
    try:
        label, coerced = coerce_label(obj["label"], schema)
        confidence, clamped = coerce_confidence(obj["confidence"])
    except KeyError as exc:
        raise ParseError(f"opinion payload missing field {exc}", raw=raw) from None
    except ValueError as exc:
        raise ParseError(str(exc), raw=raw) from None
    if coerced:
        flags.append("label_coerced")
    if clamped:
        flags.append("confidence_clamped")
    stated = str(obj.get("persona", "")).strip()
    if stated:
        matched = _match_persona(stated, roster)
        if matched is not None and matched != expected_persona_id:
            flags.append(f"persona_mismatch:{matched}")
    return PersonaOpinion(
        persona_id=expected_persona_id,
        label=label,
        justification=str(obj.get("justification", "")),
        confidence=confidence,
        flags=tuple(flags),
    )


def _match_persona(name: str, roster: Sequence[Persona]) -> str | None:
    low = name.strip().lower()
    for persona in roster:
        if low in {n.lower() for n in persona.all_names()}:
            return persona.persona_id
    return None


def _parse_stance(obj: dict, schema: TaskSchema) -> tuple[str, bool, str | None, bool]:
    raw_stance = obj.get("final_stance", obj.get("label"))
    if raw_stance is None:
        raise ValueError("debate turn has no final_stance")
    changed_from = None
    changed = False
    m = _STANCE_RE.match(str(raw_stance))
    if m:
        raw_stance, raw_from = m.groups()
        changed = True
        try:
            changed_from = coerce_label(raw_from, schema)[0]
        except ValueError:
            changed_from = str(raw_from)
    label, coerced = coerce_label(raw_stance, schema)
    if isinstance(obj.get("stance_changed"), bool):
        changed = changed or obj["stance_changed"]
    return label, changed, changed_from, coerced


def parse_debate(
    raw: str,
    schema: TaskSchema,
    roster: Sequence[Persona],
) -> list[DebateTurn]:
    """Parse the single debate response into per-persona turns.

    Turns whose reaction references no other persona are flagged with
    engagement_ok=False, not rejected.
    """
    turns_raw = None
    for value in _load_candidates(raw, want_list=True):
        if isinstance(value, list) and value and all(isinstance(v, dict) for v in value):
            turns_raw = value
            break
        if isinstance(value, dict):
            inner = value.get("turns")
            if isinstance(inner, list) and inner:
                turns_raw = inner
                break
    if not turns_raw:
        raise ParseError("no debate turns found in payload", raw=raw)

    turns: list[DebateTurn] = []
    for obj in turns_raw:
        flags: list[str] = []
        persona_id = _match_persona(str(obj.get("persona", "")), roster)
        if persona_id is None:
            persona_id = str(obj.get("persona", "unknown"))
            flags.append("unknown_persona")
        try:
            label, changed, changed_from, coerced = _parse_stance(obj, schema)
            confidence, clamped = coerce_confidence(obj.get("updated_confidence",
                                                            obj.get("confidence", 0.0)))
        except ValueError as exc:
            raise ParseError(str(exc), raw=raw) from None
        if coerced:
            flags.append("label_coerced")
        if clamped:
            flags.append("confidence_clamped")
        reaction = str(obj.get("reaction", ""))
        others = [p for p in roster if p.persona_id != persona_id]
        # the engagement rule asks for a reference to another persona's id or
        # display name; short aliases would false-positive on ordinary prose
        engaged = any(
            name.lower() in reaction.lower()
            for p in others for name in (p.persona_id, p.display_name)
        )
        turns.append(DebateTurn(
            persona_id=persona_id,
            intent=str(obj.get("intent", "")),
            reaction=reaction,
            updated_reasoning=str(obj.get("updated_reasoning", "")),
            final_stance=label,
            stance_changed=changed,
            updated_confidence=confidence,
            changed_from=changed_from,
            engagement_ok=engaged,
            flags=tuple(flags),
        ))
    return turns


def parse_judgment(raw: str, schema: TaskSchema) -> Judgment:
    obj = _first_dict(raw)
    flags: list[str] = []
    try:
        label, coerced = coerce_label(obj["label"], schema)
        confidence, clamped = coerce_confidence(obj["confidence"])
    except KeyError as exc:
        raise ParseError(f"judgment payload missing field {exc}", raw=raw) from None
    except ValueError as exc:
        raise ParseError(str(exc), raw=raw) from None
    if coerced:
        flags.append("label_coerced")
    if clamped:
        flags.append("confidence_clamped")
    return Judgment(
        label=label,
        justification=str(obj.get("justification", "")),
        confidence=confidence,
        flags=tuple(flags),
    )


def parse_structured_output(
    raw: str,
    kind: str,
    schema: TaskSchema,
    roster: Sequence[Persona] = (),
    expected_persona_id: str = "",
):
    """Dispatch to the kind-specific parser (opinion | debate | judgment)."""
    if kind == OPINION:
        return parse_opinion(raw, schema, expected_persona_id, roster)
    if kind == DEBATE:
        return parse_debate(raw, schema, roster)
    if kind == JUDGMENT:
        return parse_judgment(raw, schema)
    raise ValueError(f"unknown payload kind {kind!r}")

"""Persona roster, progressive prompt stages (P1-P5), and prompt builders.

All prompt text is data: the default roster and stage configurations ship
as JSON resources and can be replaced with external files, so deployments
can align the wording with their own annotation guidelines.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .core import EDOS_B, EDOS_C, TaskSchema
from .errors import ConfigError

STAGES = ("P1", "P2", "P3", "P4", "P5")
DEFAULT_STAGE = "P5"

OPINION_OUTPUT_EXAMPLE = """\
{
"persona": "Normal Person",
"label": "1",
"justification": "The tweet stereotypes women's intelligence.",
"confidence": "0.87"
}"""

DEBATE_OUTPUT_EXAMPLE = """\
{
  "persona": "Sexism Victim",
  "intent": "The author's intent is to shame the woman by dismissing her distress.",
  "reaction": "Agree with Linguist because their interpretation highlights the use of gendered stereotypes.",
  "updated_reasoning": "While my initial view focused on tone, I now realize the tweet uses the 'victim card' trope to discredit women's emotional responses.",
  "final_stance": "1 (changed from 0)",
  "updated_confidence": 0.72
}"""

JUDGE_OUTPUT_EXAMPLE = """\
{
  "label": 0,
  "justification": "Although the tweet contains profanity and strong language, it is not clearly directed at women. Based on the personas' disagreement and the classification guidelines, the tweet is offensive but not sexist.",
  "confidence": 0.79
}"""

# Literal baseline prompts for the zero-shot comparison runs.
ZERO_SHOT_PROMPTS = {
    "binary": "Classify the following text as sexist or not sexist.",
    EDOS_B: (
        "Classify the following text into one of the sexism categories: "
        "1) Threats, plans to harm and incitement; "
        "2) Derogation; "
        "3) Animosity; "
        "4) Prejudiced discussions."
    ),
    EDOS_C: (
        "Classify the following text into one of the sexism subcategories: "
        "1.1) Threats of harm; "
        "1.2) Incitement and encouragement of harm; "
        "2.1) Descriptive attacks; "
        "2.2) Aggressive and emotive attacks; "
        "2.3) Dehumanising attacks & overt sexual objectification; "
        "3.1) Casual use of gendered slurs, profanities, and insults; "
        "3.2) Immutable gender differences and gender stereotypes; "
        "3.3) Backhanded gendered compliments; "
        "3.4) Condescending explanations or unwelcome advice; "
        "4.1) Supporting mistreatment of individual women; "
        "4.2) Supporting systemic discrimination against women as a group."
    ),
}


@dataclass(frozen=True)
class Persona:
    persona_id: str
    display_name: str
    role_description: str
    demographic_note: str = ""
    aliases: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.role_description:
            raise ConfigError(f"persona {self.persona_id!r} needs a role description")

    def all_names(self) -> tuple[str, ...]:
        return (self.persona_id, self.display_name) + self.aliases


@dataclass(frozen=True)
class PromptStageConfig:
    """One rung of the progressive prompt ladder.

    P1 is role identity + few-shot only; P2 expands the persona and adds
    reasoning sub-steps; P3 introduces the formal definition; P4 adds
    multilingual shots; P5 folds in refined guidelines from error analysis.
    """

    stage: str
    definition_text: str
    objective_text: str
    examples: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ConfigError(f"unknown prompt stage {self.stage!r}; expected one of {STAGES}")
        if self.stage in ("P3", "P4", "P5") and not self.definition_text:
            raise ConfigError(f"stage {self.stage} requires a sexism definition")
        if self.stage in ("P4", "P5") and len(self.examples) < 2:
            raise ConfigError(f"stage {self.stage} requires multilingual examples (>= 2 shots)")

    @property
    def includes_definition(self) -> bool:
        return self.stage in ("P3", "P4", "P5")

    @property
    def includes_expert_framing(self) -> bool:
        return self.stage != "P1"


def _data_text(name: str) -> str:
    return resources.files("cejroute").joinpath("data", name).read_text(encoding="utf-8")


def load_roster(path: str | Path | None = None) -> tuple[Persona, ...]:
    """Load a persona roster; with no path, the bundled six-persona default."""
    raw = Path(path).read_text(encoding="utf-8") if path else _data_text("roster.json")
    doc = json.loads(raw)
    roster = tuple(
        Persona(
            persona_id=p["persona_id"],
            display_name=p["display_name"],
            role_description=p["role_description"],
            demographic_note=p.get("demographic_note", ""),
            aliases=tuple(p.get("aliases", ())),
        )
        for p in doc["personas"]
    )
    if len({p.persona_id for p in roster}) != len(roster):
        raise ConfigError("persona ids must be unique")
    if path is None and len(roster) != 6:
        raise ConfigError(f"default roster must contain exactly 6 personas, got {len(roster)}")
    if len(roster) < 2:
        raise ConfigError("a debate needs at least 2 personas")
    return roster


def load_stage_config(stage: str = DEFAULT_STAGE, path: str | Path | None = None) -> PromptStageConfig:
    """Load one stage's config; with no path, the bundled defaults."""
    raw = Path(path).read_text(encoding="utf-8") if path else _data_text("stages.json")
    doc = json.loads(raw)
    try:
        entry = doc["stages"][stage]
    except KeyError:
        raise ConfigError(f"stage {stage!r} not present in stage config") from None
    return PromptStageConfig(
        stage=stage,
        definition_text=entry.get("definition_text", ""),
        objective_text=entry.get("objective_text", ""),
        examples=tuple((t, l) for t, l in entry.get("examples", ())),
    )


def _label_instruction(schema: TaskSchema) -> str:
    if schema.is_binary:
        return f"1 (sexist, i.e. {schema.positive_label!r}) or 0 (not sexist, i.e. {schema.negative_label!r})"
    lines = "; ".join(schema.class_labels)
    return f"exactly one of the following categories: {lines}"


def _examples_block(stage_cfg: PromptStageConfig) -> str:
    return "\n".join(f'"{text}" -> {label}' for text, label in stage_cfg.examples)


def build_initial_prompt(
    persona: Persona,
    text: str,
    stage_cfg: PromptStageConfig,
    schema: TaskSchema,
) -> str:
    """Initial persona classification prompt.

    Deterministic fill, section order: persona description, tweet, task
    steps, definition (P3+), objective, examples, JSON output schema.
    """
    parts: list[str] = []
    if stage_cfg.includes_expert_framing:
        desc = persona.role_description.rstrip(".")
        desc = desc[0].lower() + desc[1:]
        parts.append(f"You are {desc}, tasked with classifying the following tweet for sexism.")
        parts.append(f"Tweet: {text}")
        parts.append(
            "Your task:\n"
            "1. Read the guidelines below carefully\n"
            "2. Analyze the tweet carefully for sexism.\n"
            "3. Think before responding.\n"
            f"4. Decide the final label: {_label_instruction(schema)}.\n"
            "5. Provide a short justification for your label based on your role.\n"
            "6. Output a confidence score between 0.0 and 1.0 reflecting your certainty."
        )
        if stage_cfg.includes_definition:
            parts.append(f"Sexism Definition\n{stage_cfg.definition_text}")
        parts.append(f"Objective:\n{stage_cfg.objective_text}")
    else:
        parts.append(
            f"You are a {persona.display_name.lower()}. "
            "Classify the tweet as sexist or not sexist."
        )
        parts.append(f"Tweet: {text}")
        parts.append(f"Decide the final label: {_label_instruction(schema)}.")
    parts.append(f"Here are some examples:\n{_examples_block(stage_cfg)}")
    parts.append(
        "Output Example: Provide only a valid JSON object like the following example:\n"
        + OPINION_OUTPUT_EXAMPLE
    )
    return "\n\n".join(parts)


def build_debate_prompt(
    text: str,
    opinions_json: str,
    stage_cfg: PromptStageConfig,
    schema: TaskSchema,
) -> str:
    """Single structured-debate prompt carrying all initial opinions."""
    parts = [
        "You are continuing the expert panel discussion on the following tweet:",
        f"Tweet: {text}",
        f"Initial Opinions: {opinions_json}",
        (
            "Now, each persona must:\n"
            "1. Read all other personas' initial opinions.\n"
            "2. Reflect on whether their own reasoning is still the strongest.\n"
            "3. Engage with at least one other persona by agreeing or disagreeing with their argument.\n"
            "4. Update their stance if persuaded, or affirm their original decision.\n"
            "5. Reassess and adjust their confidence accordingly."
        ),
    ]
    if stage_cfg.includes_definition:
        parts.append(f"Sexism Definition\n{stage_cfg.definition_text}")
    parts.append(f"Objective:\n{stage_cfg.objective_text}")
    parts.append(f"Here are some examples:\n{_examples_block(stage_cfg)}")
    parts.append(
        "Important Notes:\n"
        "- Confidence can be increased if supported by solid reasoning, or reduced if uncertainty arises.\n"
        "- Final answers must state if the stance is changed or unchanged."
    )
    parts.append(
        "Output Example (per persona):\n" + DEBATE_OUTPUT_EXAMPLE
        + "\n\nRespond with a JSON array containing exactly one such object per persona."
    )
    return "\n\n".join(parts)


def build_summary_prompt(text: str, debate_json: str) -> str:
    return "\n\n".join([
        "You are a dedicated summarization agent for an expert panel that "
        "debated whether the following tweet is sexist.",
        f"Tweet: {text}",
        f"Debate turns: {debate_json}",
        "Condense the full debate into a concise synthesis highlighting the "
        "main arguments, points of consensus, and unresolved disagreements. "
        "Respond with plain text only.",
    ])


def build_judge_prompt(
    text: str,
    opinions_json: str,
    summary: str,
    stage_cfg: PromptStageConfig,
    schema: TaskSchema,
) -> str:
    """Final adjudication prompt over the tweet, opinions, and summary."""
    parts = [
        "You are an impartial judge of the detection of sexist language. "
        "Review the following expert panel summary and the original tweet "
        "being discussed then classify it for sexism.",
        f"You have the following information:\nTweet: {text}",
        f"Discussion summary:\n{summary}",
        f"Initial opinions:\n{opinions_json}",
        (
            "Your task:\n"
            "1. Read the guidelines below carefully\n"
            "2. Review the expert panel summary.\n"
            "3. Analyze the tweet for sexism.\n"
            "4. Think before responding.\n"
            f"5. Decide the final label: {_label_instruction(schema)}.\n"
            "6. Provide a brief justification for your decision.\n"
            "7. State your confidence score (0.0-1.0)."
        ),
    ]
    if stage_cfg.includes_definition:
        parts.append(f"Sexism Definition:\n{stage_cfg.definition_text}")
    parts.append(f"Objective:\n{stage_cfg.objective_text}")
    parts.append(f"Here are some examples:\n{_examples_block(stage_cfg)}")
    parts.append(
        "Output Example: Provide only a valid JSON object like the following:\n"
        + JUDGE_OUTPUT_EXAMPLE
    )
    return "\n\n".join(parts)


def build_zero_shot_prompt(text: str, schema: TaskSchema) -> str:
    """The literal task-specific baseline prompt plus the text to label."""
    if schema.is_binary:
        instruction = ZERO_SHOT_PROMPTS["binary"]
    else:
        try:
            instruction = ZERO_SHOT_PROMPTS[schema.task_id]
        except KeyError:
            raise ConfigError(
                f"no zero-shot prompt defined for task {schema.task_id!r}"
            ) from None
    return f"{instruction}\n\nText: {text}\nAnswer with the label only."

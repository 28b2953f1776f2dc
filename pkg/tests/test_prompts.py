from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cejroute.core import builtin_schema
from cejroute.errors import ConfigError, ParseError
from cejroute.parsing import (
    DebateTurn,
    PersonaOpinion,
    coerce_confidence,
    coerce_label,
    parse_debate,
    parse_judgment,
    parse_opinion,
    parse_structured_output,
)
from cejroute.prompts import (
    PromptStageConfig,
    build_debate_prompt,
    build_initial_prompt,
    build_judge_prompt,
    build_zero_shot_prompt,
    load_roster,
    load_stage_config,
)

ROSTER = load_roster()
DEFINITION_HEAD = "Sexism is gender-based prejudice, stereotyping, or discrimination"

# verbatim payloads from the prompt documentation examples
FIGURE_OPINION = """{
"persona": "Normal Person",
"label": "1",
"justification": "The tweet stereotypes women's intelligence.",
"confidence": "0.87"
}"""

FIGURE_JUDGMENT = """{
  "label": 0,
  "justification": "Although the tweet contains profanity and strong language, it is not clearly directed at women. Based on the personas' disagreement and the classification guidelines, the tweet is offensive but not sexist.",
  "confidence": 0.79
}"""

FIGURE_DEBATE_TURN = """{
  "persona": "Sexism Victim",
  "intent": "The author's intent is to shame the woman by dismissing her distress.",
  "reaction": "Agree with Linguist because their interpretation highlights the use of gendered stereotypes.",
  "updated_reasoning": "While my initial view focused on tone, I now realize the tweet uses the 'victim card' trope to discredit women's emotional responses.",
  "final_stance": 1 (changed from 0),
  "updated_confidence": 0.72
}"""


class TestRoster:
    def test_default_has_six_personas(self):
        assert len(ROSTER) == 6
        assert [p.persona_id for p in ROSTER] == [
            "layperson", "linguist", "psychologist",
            "legal_expert", "gender_expert", "sexism_victim",
        ]

    def test_role_descriptions_non_empty(self):
        assert all(p.role_description for p in ROSTER)

    def test_custom_roster_file(self, tmp_path):
        doc = {"personas": [
            {"persona_id": "a", "display_name": "A", "role_description": "An expert."},
            {"persona_id": "b", "display_name": "B", "role_description": "Another expert."},
        ]}
        path = tmp_path / "roster.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        roster = load_roster(path)
        assert len(roster) == 2

    def test_roster_needs_two(self, tmp_path):
        doc = {"personas": [
            {"persona_id": "a", "display_name": "A", "role_description": "An expert."},
        ]}
        path = tmp_path / "solo.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        with pytest.raises(ConfigError):
            load_roster(path)


class TestStages:
    def test_all_stages_load(self):
        for stage in ("P1", "P2", "P3", "P4", "P5"):
            cfg = load_stage_config(stage)
            assert cfg.stage == stage

    def test_definition_appears_from_p3(self):
        assert load_stage_config("P1").definition_text == ""
        assert load_stage_config("P2").definition_text == ""
        for stage in ("P3", "P4", "P5"):
            assert load_stage_config(stage).definition_text.startswith(DEFINITION_HEAD)

    def test_p4_adds_multilingual_shots(self):
        examples = load_stage_config("P4").examples
        assert any("No tengo nada contra las mujeres" in text for text, _ in examples)

    def test_stage_invariants(self):
        with pytest.raises(ConfigError, match="definition"):
            PromptStageConfig(stage="P3", definition_text="", objective_text="x",
                              examples=(("a", "1"), ("b", "0")))
        with pytest.raises(ConfigError, match="multilingual"):
            PromptStageConfig(stage="P4", definition_text="def", objective_text="x",
                              examples=(("a", "1"),))
        with pytest.raises(ConfigError, match="unknown prompt stage"):
            PromptStageConfig(stage="P9", definition_text="", objective_text="",
                              examples=())


class TestInitialPrompt:
    def test_p1_role_identity_and_shots_no_definition(self, exist_schema):
        persona = ROSTER[0]
        prompt = build_initial_prompt(persona, "hello", load_stage_config("P1"), exist_schema)
        assert "You are a normal person." in prompt
        assert "Here are some examples:" in prompt
        assert "Sexism Definition" not in prompt
        assert "Tweet: hello" in prompt

    def test_p3_contains_definition_sentence(self, exist_schema):
        persona = ROSTER[2]
        prompt = build_initial_prompt(persona, "hi", load_stage_config("P3"), exist_schema)
        assert DEFINITION_HEAD in prompt
        assert "psychologist specializing in language" in prompt

    def test_section_order_matches_template(self, exist_schema):
        prompt = build_initial_prompt(ROSTER[1], "tweet body", load_stage_config("P5"),
                                      exist_schema)
        order = [
            prompt.index("You are a linguist"),
            prompt.index("Tweet: tweet body"),
            prompt.index("Your task:"),
            prompt.index("Sexism Definition"),
            prompt.index("Objective:"),
            prompt.index("Here are some examples:"),
            prompt.index("Output Example:"),
        ]
        assert order == sorted(order)
        assert '"confidence"' in prompt  # JSON output schema block

    def test_byte_determinism(self, exist_schema):
        cfg = load_stage_config("P5")
        a = build_initial_prompt(ROSTER[3], "same text", cfg, exist_schema)
        b = build_initial_prompt(ROSTER[3], "same text", cfg, exist_schema)
        assert a == b

    def test_multiclass_lists_categories(self, edos_b_schema):
        prompt = build_initial_prompt(ROSTER[0], "t", load_stage_config("P5"), edos_b_schema)
        for label in edos_b_schema.class_labels:
            assert label in prompt


class TestOtherPrompts:
    def test_debate_prompt_carries_opinions(self, exist_schema):
        prompt = build_debate_prompt("t", '[{"persona": "Linguist"}]',
                                     load_stage_config("P5"), exist_schema)
        assert "Initial Opinions:" in prompt
        assert "Engage with at least one other persona" in prompt
        assert "JSON array" in prompt

    def test_judge_prompt_sections(self, exist_schema):
        prompt = build_judge_prompt("t", "[]", "panel summary", load_stage_config("P5"),
                                    exist_schema)
        assert prompt.startswith("You are an impartial judge")
        assert "Discussion summary:\npanel summary" in prompt
        assert "Initial opinions:" in prompt

    def test_zero_shot_binary(self, exist_schema):
        prompt = build_zero_shot_prompt("some text", exist_schema)
        assert prompt.startswith("Classify the following text as sexist or not sexist.")
        assert "some text" in prompt

    def test_zero_shot_task_b_categories_verbatim(self, edos_b_schema):
        prompt = build_zero_shot_prompt("t", edos_b_schema)
        assert "1) Threats, plans to harm and incitement" in prompt
        assert "2) Derogation" in prompt
        assert "3) Animosity" in prompt
        assert "4) Prejudiced discussions" in prompt

    def test_zero_shot_task_c_all_eleven(self, edos_c_schema):
        prompt = build_zero_shot_prompt("t", edos_c_schema)
        for head in ("1.1) Threats of harm", "2.3) Dehumanising attacks",
                     "3.4) Condescending explanations", "4.2) Supporting systemic"):
            assert head in prompt
        assert prompt.count(")") >= 11


class TestCoercions:
    def test_label_exact_and_case(self, exist_schema):
        assert coerce_label("YES", exist_schema) == ("YES", False)
        assert coerce_label("yes", exist_schema) == ("YES", True)

    def test_binary_shorthands(self, exist_schema, edos_a_schema):
        assert coerce_label("1", exist_schema)[0] == "YES"
        assert coerce_label("0", exist_schema)[0] == "NO"
        assert coerce_label("sexist", edos_a_schema)[0] == "sexist"
        assert coerce_label("1", edos_a_schema)[0] == "sexist"

    def test_multiclass_by_number_and_name(self, edos_b_schema, edos_c_schema):
        assert coerce_label("2", edos_b_schema)[0] == "2. derogation"
        assert coerce_label("2)", edos_b_schema)[0] == "2. derogation"
        assert coerce_label("Derogation", edos_b_schema)[0] == "2. derogation"
        assert coerce_label("2.3", edos_c_schema)[0].startswith("2.3")
        with pytest.raises(ValueError):
            coerce_label("2", edos_c_schema)  # ambiguous prefix is not a match

    def test_unmappable(self, exist_schema):
        with pytest.raises(ValueError):
            coerce_label("maybe", exist_schema)

    def test_confidence_clamp(self):
        assert coerce_confidence("0.87") == (0.87, False)
        assert coerce_confidence("1.3") == (1.0, True)
        assert coerce_confidence(-0.5) == (0.0, True)
        with pytest.raises(ValueError):
            coerce_confidence("high")


class TestParsing:
    def test_figure_opinion_payload(self, exist_schema):
        opinion = parse_opinion(FIGURE_OPINION, exist_schema, "layperson", ROSTER)
        assert opinion.label == "YES"
        assert opinion.confidence == pytest.approx(0.87)
        assert opinion.justification == "The tweet stereotypes women's intelligence."
        assert not opinion.abstained

    def test_opinion_wrapped_in_prose(self, exist_schema):
        raw = "Here is my answer:\n" + FIGURE_OPINION + "\nHope that helps!"
        opinion = parse_opinion(raw, exist_schema, "layperson", ROSTER)
        assert opinion.label == "YES"

    def test_opinion_confidence_clamped_flag(self, exist_schema):
        raw = json.dumps({"persona": "Linguist", "label": "0",
                          "justification": "", "confidence": "1.3"})
        opinion = parse_opinion(raw, exist_schema, "linguist", ROSTER)
        assert opinion.confidence == 1.0
        assert "confidence_clamped" in opinion.flags

    def test_opinion_persona_mismatch_flagged(self, exist_schema):
        opinion = parse_opinion(FIGURE_OPINION, exist_schema, "linguist", ROSTER)
        assert opinion.persona_id == "linguist"
        assert any(f.startswith("persona_mismatch") for f in opinion.flags)

    def test_unparseable_opinion_raises_with_raw(self, exist_schema):
        with pytest.raises(ParseError) as err:
            parse_opinion("no json here at all", exist_schema, "linguist", ROSTER)
        assert err.value.raw == "no json here at all"

    def test_figure_judgment_payload(self, exist_schema):
        verdict = parse_judgment(FIGURE_JUDGMENT, exist_schema)
        assert verdict.label == "NO"
        assert verdict.confidence == pytest.approx(0.79)

    def test_judgment_label_outside_schema(self, exist_schema):
        raw = json.dumps({"label": "banana", "justification": "", "confidence": 0.5})
        with pytest.raises(ParseError):
            parse_judgment(raw, exist_schema)

    def test_figure_debate_turn_stance_change(self, exist_schema):
        turns = parse_debate(FIGURE_DEBATE_TURN, exist_schema, ROSTER)
        assert len(turns) == 1
        turn = turns[0]
        assert turn.persona_id == "sexism_victim"
        assert turn.final_stance == "YES"
        assert turn.stance_changed
        assert turn.changed_from == "NO"
        assert turn.updated_confidence == pytest.approx(0.72)
        assert turn.engagement_ok  # references the Linguist

    def test_debate_array_payload(self, exist_schema):
        arr = json.dumps([
            {"persona": "Linguist", "intent": "", "reaction": "Disagree with Psychologist.",
             "updated_reasoning": "", "final_stance": "1", "stance_changed": False,
             "updated_confidence": 0.6},
            {"persona": "Psychologist", "intent": "", "reaction": "no references here",
             "updated_reasoning": "", "final_stance": "0", "stance_changed": False,
             "updated_confidence": 0.4},
        ])
        turns = parse_debate(arr, exist_schema, ROSTER)
        assert [t.persona_id for t in turns] == ["linguist", "psychologist"]
        assert turns[0].engagement_ok
        assert not turns[1].engagement_ok

    def test_debate_no_turns_raises(self, exist_schema):
        with pytest.raises(ParseError):
            parse_debate("nothing structured", exist_schema, ROSTER)

    def test_dispatcher(self, exist_schema):
        opinion = parse_structured_output(FIGURE_OPINION, "opinion", exist_schema,
                                          ROSTER, "layperson")
        assert isinstance(opinion, PersonaOpinion)
        verdict = parse_structured_output(FIGURE_JUDGMENT, "judgment", exist_schema)
        assert verdict.label == "NO"
        turns = parse_structured_output(FIGURE_DEBATE_TURN, "debate", exist_schema, ROSTER)
        assert isinstance(turns[0], DebateTurn)
        with pytest.raises(ValueError):
            parse_structured_output("x", "poem", exist_schema)

    @given(st.sampled_from(["YES", "NO"]),
           st.floats(min_value=0.0, max_value=1.0),
           st.text(alphabet=st.characters(blacklist_categories=("Cs", "Cc")), max_size=60))
    def test_opinion_round_trip_idempotent(self, label, confidence, justification):
        schema = builtin_schema("exist-1.1")
        raw = json.dumps({"persona": "Linguist", "label": label,
                          "justification": justification, "confidence": confidence})
        first = parse_opinion(raw, schema, "linguist", ROSTER)
        again = parse_opinion(json.dumps(first.to_json_dict()), schema, "linguist", ROSTER)
        assert again.label == first.label
        assert again.confidence == first.confidence
        assert again.justification == first.justification

    def test_judgment_round_trip_idempotent(self, exist_schema):
        # serialize-of-parse is a fixed point (flags record provenance only
        # and are deliberately not serialized)
        first = parse_judgment(FIGURE_JUDGMENT, exist_schema)
        again = parse_judgment(json.dumps(first.to_json_dict()), exist_schema)
        assert again.to_json_dict() == first.to_json_dict()

from __future__ import annotations

import json

import pytest

from cejroute.core import LogitRecord, builtin_schema, validate_dataset
from cejroute.gateway import MockResponse, MockRule, mock_gateway


def pytest_runtest_logreport(report):
    # One visible pass/fail line per acceptance criterion.
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        print(f"[acceptance] {status}: {name}", flush=True)


@pytest.fixture
def exist_schema():
    return builtin_schema("exist-1.1")


@pytest.fixture
def edos_a_schema():
    return builtin_schema("edos-a")


@pytest.fixture
def edos_b_schema():
    return builtin_schema("edos-b")


@pytest.fixture
def edos_c_schema():
    return builtin_schema("edos-c")


def make_records(logit_rows, gold=None, schema=None, prefix="r"):
    records = []
    for i, logits in enumerate(logit_rows):
        records.append(LogitRecord(
            instance_id=f"{prefix}{i:03d}",
            text=f"synthetic text {i}",
            gold_label=None if gold is None else gold[i],
            logits=tuple(logits),
        ))
    if schema is None:
        return records
    return validate_dataset(records, schema)


def opinion_payload(persona="Normal Person", label="1", confidence="0.87",
                    justification="The tweet stereotypes women's intelligence."):
    return json.dumps({
        "persona": persona,
        "label": label,
        "justification": justification,
        "confidence": confidence,
    })


def debate_payload(roster, schema, stances=None):
    """A parseable debate response: each persona references a peer."""
    turns = []
    names = [p.display_name for p in roster]
    for i, persona in enumerate(roster):
        peer = names[(i + 1) % len(names)]
        stance = "1" if stances is None else stances[i]
        turns.append({
            "persona": persona.display_name,
            "intent": "to assess the tweet",
            "reaction": f"Agree with {peer} because the reasoning is sound.",
            "updated_reasoning": "holding position after review",
            "final_stance": stance,
            "stance_changed": False,
            "updated_confidence": 0.7,
        })
    return json.dumps(turns)


def judgment_payload(label="1", confidence=0.9, justification="panel consensus"):
    return json.dumps({
        "label": label,
        "justification": justification,
        "confidence": confidence,
    })


def clean_cej_rules(roster, schema, judge_label="1"):
    return [
        MockRule(match={"stage": "opinion"}, responses=[MockResponse(content=opinion_payload())]),
        MockRule(match={"stage": "debate"},
                 responses=[MockResponse(content=debate_payload(roster, schema))]),
        MockRule(match={"stage": "summary"},
                 responses=[MockResponse(content="The panel largely agrees the tweet is sexist.")]),
        MockRule(match={"stage": "judge"},
                 responses=[MockResponse(content=judgment_payload(label=judge_label))]),
    ]


@pytest.fixture
def scripted_gateway_factory():
    def factory(rules, **kwargs):
        return mock_gateway(rules, **kwargs)
    return factory

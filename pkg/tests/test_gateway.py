from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from cejroute.errors import ConfigError, GatewayError, UnscriptedRequestError
from cejroute.gateway import (
    BackendConfig,
    ChatRequest,
    Gateway,
    GatewayConfig,
    HttpTransport,
    Message,
    MockResponse,
    MockRule,
    MockTransport,
    RetryConfig,
    SamplingParams,
    apply_env_overrides,
    build_chat_body,
    gateway_config_from_dict,
    mock_gateway,
)


def req(content="hi", role_tag="personas", metadata=None, model=""):
    return ChatRequest(
        model_name=model,
        messages=(Message(role="user", content=content),),
        metadata=metadata or {},
        role_tag=role_tag,
    )


class TestMockGateway:
    def test_single_scripted_response(self):
        gw = mock_gateway([MockRule(match={}, responses=[MockResponse(content="ok")])])
        resp = gw.chat(req())
        assert resp.content == "ok"
        assert resp.attempt == 1
        assert len(gw.ledger) == 1

    def test_fail_fail_succeed(self):
        gw = mock_gateway([MockRule(match={}, responses=[
            MockResponse(error="boom"),
            MockResponse(error="boom again"),
            MockResponse(content="finally"),
        ])])
        resp = gw.chat(req())
        assert resp.content == "finally"
        assert resp.attempt == 3
        assert len(gw.ledger) == 3
        outcomes = [e.outcome for e in gw.ledger.entries()]
        assert outcomes == ["error", "error", "ok"]

    def test_budget_exhausted_raises(self):
        gw = mock_gateway([MockRule(match={}, responses=[MockResponse(error="down", status=503)])])
        with pytest.raises(GatewayError) as err:
            gw.chat(req())
        assert err.value.status == 503
        assert len(gw.ledger) == 3  # max_attempts default

    def test_unscripted_request_is_hard_error(self):
        gw = mock_gateway([MockRule(match={"stage": "judge"},
                                    responses=[MockResponse(content="x")])])
        with pytest.raises(UnscriptedRequestError) as err:
            gw.chat(req("classify this tweet please", metadata={"stage": "opinion"}))
        assert "classify this tweet" in str(err.value)
        assert len(gw.ledger) == 1  # never retried

    def test_metadata_and_prompt_matching(self):
        rules = [
            MockRule(match={"stage": "opinion", "persona": "linguist"},
                     responses=[MockResponse(content="linguist says")]),
            MockRule(match={"prompt_contains": "special marker"},
                     responses=[MockResponse(content="marked")]),
            MockRule(match={}, responses=[MockResponse(content="default")]),
        ]
        gw = mock_gateway(rules)
        assert gw.chat(req(metadata={"stage": "opinion", "persona": "linguist"})).content \
            == "linguist says"
        assert gw.chat(req("with special marker inside")).content == "marked"
        assert gw.chat(req("anything else")).content == "default"

    def test_sticky_last_response(self):
        gw = mock_gateway([MockRule(match={}, responses=[
            MockResponse(content="first"), MockResponse(content="rest")])])
        assert gw.chat(req()).content == "first"
        assert gw.chat(req()).content == "rest"
        assert gw.chat(req()).content == "rest"

    def test_latency_injection(self):
        gw = mock_gateway([MockRule(match={}, responses=[
            MockResponse(content="ok", latency=1.25)])])
        assert gw.chat(req()).latency == 1.25

    def test_backend_routing_by_role_tag(self):
        rules = [
            MockRule(match={"backend": "judge"}, responses=[MockResponse(content="verdict")]),
            MockRule(match={"backend": "personas"}, responses=[MockResponse(content="opinion")]),
        ]
        gw = mock_gateway(rules)
        assert gw.chat(req(role_tag="judge")).content == "verdict"
        assert gw.chat(req(role_tag="personas")).content == "opinion"
        assert {e.backend_id for e in gw.ledger.entries()} == {"judge", "personas"}

    def test_unconfigured_role_tag(self):
        gw = mock_gateway([MockRule(match={}, responses=[MockResponse(content="x")])])
        with pytest.raises(ConfigError):
            gw.chat(req(role_tag="summarizer"))

    def test_script_file_round_trip(self, tmp_path):
        script = {"rules": [
            {"match": {"stage": "judge"},
             "responses": [{"error": "flaky", "status": 500}, {"content": "ok", "latency": 0.5}]},
        ]}
        path = tmp_path / "script.json"
        path.write_text(json.dumps(script), encoding="utf-8")
        transport = MockTransport.from_script_file(path)
        gw = Gateway(
            GatewayConfig(
                backends={"judge": BackendConfig(url="mock://j", model="m")},
                retry=RetryConfig(max_attempts=3, base_backoff_ms=0.0),
            ),
            transport, sleep=lambda _s: None,
        )
        resp = gw.chat(req(role_tag="judge", metadata={"stage": "judge"}))
        assert resp.content == "ok"
        assert resp.attempt == 2
        assert resp.latency == 0.5

    def test_ledger_timestamps_monotone(self):
        gw = mock_gateway([MockRule(match={}, responses=[MockResponse(content="ok")])])
        for _ in range(5):
            gw.chat(req())
        entries = gw.ledger.entries()
        for e in entries:
            assert e.finished_at >= e.started_at
        starts = [e.started_at for e in entries]
        assert starts == sorted(starts)

    def test_thread_safe_ledger_counts_every_attempt(self):
        gw = mock_gateway([MockRule(match={}, responses=[MockResponse(content="ok")])])
        with ThreadPoolExecutor(max_workers=8) as pool:
            list(pool.map(lambda _i: gw.chat(req()), range(40)))
        assert len(gw.ledger) == 40

    def test_backoff_schedule(self):
        sleeps = []
        gw = Gateway(
            GatewayConfig(
                backends={"personas": BackendConfig(url="mock://p", model="m")},
                retry=RetryConfig(max_attempts=3, base_backoff_ms=100.0),
            ),
            MockTransport([MockRule(match={}, responses=[
                MockResponse(error="x"), MockResponse(error="x"), MockResponse(content="ok")])]),
            sleep=sleeps.append,
        )
        gw.chat(req())
        assert sleeps == [0.1, 0.2]  # exponential from the base


class TestWireFormat:
    def test_body_shape_pinned(self):
        r = ChatRequest(
            model_name="",
            messages=(Message(role="system", content="be terse"),
                      Message(role="user", content="hello")),
            sampling=SamplingParams(temperature=0.2, max_tokens=64, seed=11),
        )
        body = build_chat_body(r, "backend-model")
        assert body == {
            "model": "backend-model",
            "messages": [
                {"role": "system", "content": "be terse"},
                {"role": "user", "content": "hello"},
            ],
            "temperature": 0.2,
            "max_tokens": 64,
            "seed": 11,
        }

    def test_request_validation(self):
        with pytest.raises(ConfigError):
            ChatRequest(model_name="m", messages=())
        with pytest.raises(ConfigError):
            Message(role="tool", content="x")
        with pytest.raises(ConfigError):
            Message(role="user", content="")


class _Handler(BaseHTTPRequestHandler):
    canned = "unset"
    seen_bodies: list[dict] = []
    seen_auth: list[str | None] = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        type(self).seen_bodies.append(json.loads(self.rfile.read(length)))
        type(self).seen_auth.append(self.headers.get("Authorization"))
        payload = json.dumps({
            "choices": [{"message": {"role": "assistant", "content": type(self).canned}}]
        }).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):  # keep test output clean
        pass


@pytest.fixture
def http_backend_factory():
    servers = []

    def start(canned: str):
        handler = type("H", (_Handler,), {"canned": canned, "seen_bodies": [], "seen_auth": []})
        server = HTTPServer(("127.0.0.1", 0), handler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        servers.append(server)
        return f"http://127.0.0.1:{server.server_address[1]}/v1/chat/completions", handler

    yield start
    for server in servers:
        server.shutdown()
        server.server_close()


class TestHttpTransport:
    def test_two_live_backends_route_by_role_tag(self, http_backend_factory):
        persona_url, persona_handler = http_backend_factory("persona reply")
        judge_url, judge_handler = http_backend_factory("judge reply")
        cfg = GatewayConfig(
            backends={
                "personas": BackendConfig(url=persona_url, model="small", api_key="tok-a"),
                "judge": BackendConfig(url=judge_url, model="big"),
            },
            retry=RetryConfig(max_attempts=2, base_backoff_ms=0.0),
        )
        gw = Gateway(cfg, HttpTransport(timeout_s=10.0), sleep=lambda _s: None)
        assert gw.chat(req("analyze", role_tag="personas")).content == "persona reply"
        assert gw.chat(req("adjudicate", role_tag="judge")).content == "judge reply"
        assert persona_handler.seen_bodies[0]["model"] == "small"
        assert judge_handler.seen_bodies[0]["model"] == "big"
        assert persona_handler.seen_auth[0] == "Bearer tok-a"
        assert judge_handler.seen_auth[0] is None
        assert len(gw.ledger) == 2


class TestConfig:
    def test_from_dict_and_env_overrides(self, monkeypatch):
        cfg = gateway_config_from_dict({
            "backends": {
                "personas": {"url": "http://a", "model": "m1"},
                "judge": {"url": "http://b", "model": "m2"},
            },
            "sampling": {"temperature": 0.3, "max_tokens": 256, "seed": 5},
            "retry": {"max_attempts": 4, "base_backoff_ms": 10},
            "max_in_flight": 2,
        })
        assert cfg.backends["judge"].model == "m2"
        assert cfg.sampling.seed == 5
        assert cfg.retry.max_attempts == 4

        monkeypatch.setenv("CEJROUTE_BACKEND_JUDGE_MODEL", "override-model")
        monkeypatch.setenv("CEJROUTE_SAMPLING_TEMPERATURE", "0.9")
        monkeypatch.setenv("CEJROUTE_MAX_IN_FLIGHT", "7")
        updated = apply_env_overrides(cfg)
        assert updated.backends["judge"].model == "override-model"
        assert updated.backends["judge"].url == "http://b"
        assert updated.sampling.temperature == 0.9
        assert updated.max_in_flight == 7

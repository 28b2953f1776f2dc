"""Chat-completion gateway: HTTP backend, retry budget, call ledger, and a
fully scriptable mock transport for deterministic tests.

Wire format is the widely implemented chat-completion JSON shape:
request  {"model": ..., "messages": [{"role": ..., "content": ...}], "temperature": ..., "max_tokens": ...}
response {"choices": [{"message": {"content": ...}}]}
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import requests

from .errors import ConfigError, GatewayError, UnscriptedRequestError

PERSONAS_BACKEND = "personas"
JUDGE_BACKEND = "judge"

ENV_PREFIX = "CEJROUTE_"


@dataclass(frozen=True)
class Message:
    role: str  # "system" | "user"
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ConfigError(f"unsupported message role {self.role!r}")
        if not self.content:
            raise ConfigError("message content must be non-empty")


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.0
    max_tokens: int = 1024
    seed: int | None = None


@dataclass(frozen=True)
class ChatRequest:
    model_name: str
    messages: tuple[Message, ...]
    sampling: SamplingParams = SamplingParams()
    role_tag: str = PERSONAS_BACKEND
    # Free-form routing hints for mock scripts (stage, persona, instance_id);
    # never serialized onto the wire.
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.messages:
            raise ConfigError("a chat request needs at least one message")

    def prompt_text(self) -> str:
        return "\n".join(m.content for m in self.messages)


@dataclass(frozen=True)
class ChatResponse:
    content: str
    latency: float
    attempt: int
    backend_id: str


@dataclass(frozen=True)
class LedgerEntry:
    request_fingerprint: str
    response_fingerprint: str | None
    started_at: float
    finished_at: float
    outcome: str  # "ok" | "error"
    attempt: int
    backend_id: str


class CallLedger:
    """Append-only record of every physical call attempt, retries included."""

    def __init__(self):
        self._entries: list[LedgerEntry] = []
        self._lock = threading.Lock()

    def append(self, entry: LedgerEntry) -> None:
        with self._lock:
            self._entries.append(entry)

    def entries(self) -> tuple[LedgerEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


@dataclass(frozen=True)
class BackendConfig:
    url: str
    model: str
    api_key: str | None = None


@dataclass(frozen=True)
class RetryConfig:
    max_attempts: int = 3  # 1 initial call + 2 retries
    base_backoff_ms: float = 1000.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ConfigError("retry.max_attempts must be >= 1")


@dataclass(frozen=True)
class GatewayConfig:
    backends: Mapping[str, BackendConfig]
    sampling: SamplingParams = SamplingParams()
    retry: RetryConfig = RetryConfig()
    max_in_flight: int = 4
    timeout_s: float = 60.0

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")


class TransportError(Exception):
    def __init__(self, message: str, status: int | None = None, body: str | None = None):
        super().__init__(message)
        self.status = status
        self.body = body


class HttpTransport:
    """POSTs the chat-completion body; non-2xx statuses raise for retry."""

    def __init__(self, timeout_s: float = 60.0, session: requests.Session | None = None):
        self.timeout_s = timeout_s
        self._session = session or requests.Session()

    def send(self, req: ChatRequest, backend_id: str, backend: BackendConfig,
             body: dict) -> tuple[str, float | None]:
        headers = {"Content-Type": "application/json"}
        if backend.api_key:
            headers["Authorization"] = f"Bearer {backend.api_key}"
        try:
            resp = self._session.post(backend.url, json=body, headers=headers,
                                      timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise TransportError(f"transport failure: {exc}") from exc
        if not (200 <= resp.status_code < 300):
            raise TransportError(f"backend returned {resp.status_code}",
                                 status=resp.status_code, body=resp.text)
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError) as exc:
            raise TransportError(f"malformed completion body: {exc}",
                                 status=resp.status_code, body=resp.text) from exc
        return str(content), None


@dataclass
class MockResponse:
    content: str | None = None
    error: str | None = None
    status: int | None = None
    latency: float | None = None


@dataclass
class MockRule:
    """First-match rule: all ``match`` keys must hold for the request.

    Supported match keys: any request metadata key (stage, persona,
    instance_id, ...), plus ``backend`` (backend id) and ``prompt_contains``
    (substring of the joined prompt). Responses play back as a queue whose
    last element repeats forever.
    """

    match: dict
    responses: list[MockResponse]

    def matches(self, req: ChatRequest, backend_id: str) -> bool:
        for key, expected in self.match.items():
            if key == "backend":
                if backend_id != expected:
                    return False
            elif key == "prompt_contains":
                if expected not in req.prompt_text():
                    return False
            else:
                if req.metadata.get(key) != expected:
                    return False
        return True


class MockTransport:
    """Deterministic playback of scripted responses; unscripted requests
    are a hard error, never a silent default."""

    def __init__(self, rules: Sequence[MockRule]):
        self._rules = [(rule, deque(rule.responses)) for rule in rules]
        self._lock = threading.Lock()

    @classmethod
    def from_script_file(cls, path: str | Path) -> "MockTransport":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        rules = []
        for raw in doc["rules"]:
            responses = [
                MockResponse(
                    content=r.get("content"),
                    error=r.get("error"),
                    status=r.get("status"),
                    latency=r.get("latency"),
                )
                for r in raw["responses"]
            ]
            rules.append(MockRule(match=dict(raw.get("match", {})), responses=responses))
        return cls(rules)

    def send(self, req: ChatRequest, backend_id: str, backend: BackendConfig,
             body: dict) -> tuple[str, float | None]:
        with self._lock:
            for rule, queue in self._rules:
                if not rule.matches(req, backend_id):
                    continue
                if not queue:
                    raise UnscriptedRequestError(
                        f"script rule {rule.match!r} has no responses left"
                    )
                response = queue.popleft() if len(queue) > 1 else queue[0]
                break
            else:
                prefix = req.prompt_text()[:80].replace("\n", " ")
                raise UnscriptedRequestError(
                    f"unscripted request (stage={req.metadata.get('stage')!r}, "
                    f"prompt prefix: {prefix!r})"
                )
        if response.error is not None:
            raise TransportError(response.error, status=response.status)
        return response.content or "", response.latency


def build_chat_body(req: ChatRequest, model: str) -> dict:
    body = {
        "model": model,
        "messages": [{"role": m.role, "content": m.content} for m in req.messages],
        "temperature": req.sampling.temperature,
        "max_tokens": req.sampling.max_tokens,
    }
    if req.sampling.seed is not None:
        body["seed"] = req.sampling.seed
    return body


def _fingerprint(payload: str) -> str:
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


class Gateway:
    """Routes requests to the backend named by their role tag, retries on
    transport failure with exponential backoff, and records every physical
    attempt in the ledger."""

    def __init__(
        self,
        config: GatewayConfig,
        transport,
        ledger: CallLedger | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self.transport = transport
        self.ledger = ledger if ledger is not None else CallLedger()
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(config.max_in_flight)

    def chat(self, req: ChatRequest) -> ChatResponse:
        try:
            backend = self.config.backends[req.role_tag]
        except KeyError:
            raise ConfigError(f"no backend configured for role tag {req.role_tag!r}") from None
        model = req.model_name or backend.model
        body = build_chat_body(req, model)
        req_fp = _fingerprint(json.dumps(body, sort_keys=True))

        last_error: TransportError | None = None
        for attempt in range(1, self.config.retry.max_attempts + 1):
            started = time.monotonic()
            try:
                with self._slots:
                    content, latency_override = self.transport.send(
                        req, req.role_tag, backend, body
                    )
            except UnscriptedRequestError:
                self.ledger.append(LedgerEntry(
                    request_fingerprint=req_fp, response_fingerprint=None,
                    started_at=started, finished_at=time.monotonic(),
                    outcome="error", attempt=attempt, backend_id=req.role_tag,
                ))
                raise  # a test-script gap, not a flaky backend: never retried
            except TransportError as exc:
                last_error = exc
                self.ledger.append(LedgerEntry(
                    request_fingerprint=req_fp, response_fingerprint=None,
                    started_at=started, finished_at=time.monotonic(),
                    outcome="error", attempt=attempt, backend_id=req.role_tag,
                ))
                if attempt < self.config.retry.max_attempts:
                    self._sleep(self.config.retry.base_backoff_ms / 1000.0 * 2 ** (attempt - 1))
                continue
            finished = time.monotonic()
            self.ledger.append(LedgerEntry(
                request_fingerprint=req_fp,
                response_fingerprint=_fingerprint(content),
                started_at=started, finished_at=finished,
                outcome="ok", attempt=attempt, backend_id=req.role_tag,
            ))
            latency = latency_override if latency_override is not None else finished - started
            return ChatResponse(content=content, latency=latency,
                                attempt=attempt, backend_id=req.role_tag)
        raise GatewayError(
            f"chat call failed after {self.config.retry.max_attempts} attempts: {last_error}",
            status=getattr(last_error, "status", None),
            body=getattr(last_error, "body", None),
        )


def mock_gateway(
    rules: Sequence[MockRule],
    config: GatewayConfig | None = None,
    ledger: CallLedger | None = None,
) -> Gateway:
    """Gateway over a scripted transport; retries do not sleep."""
    if config is None:
        config = GatewayConfig(
            backends={
                PERSONAS_BACKEND: BackendConfig(url="mock://personas", model="mock-personas"),
                JUDGE_BACKEND: BackendConfig(url="mock://judge", model="mock-judge"),
            },
            retry=RetryConfig(max_attempts=3, base_backoff_ms=0.0),
        )
    return Gateway(config, MockTransport(rules), ledger=ledger, sleep=lambda _s: None)


def gateway_config_from_dict(doc: Mapping) -> GatewayConfig:
    """Build a gateway config from the parsed config-file section, then
    apply documented environment overrides (prefix CEJROUTE_)."""
    backends = {}
    for backend_id, entry in (doc.get("backends") or {}).items():
        backends[backend_id] = BackendConfig(
            url=entry.get("url", ""),
            model=entry.get("model", ""),
            api_key=entry.get("api_key"),
        )
    sampling_doc = doc.get("sampling") or {}
    retry_doc = doc.get("retry") or {}
    cfg = GatewayConfig(
        backends=backends,
        sampling=SamplingParams(
            temperature=float(sampling_doc.get("temperature", 0.0)),
            max_tokens=int(sampling_doc.get("max_tokens", 1024)),
            seed=sampling_doc.get("seed"),
        ),
        retry=RetryConfig(
            max_attempts=int(retry_doc.get("max_attempts", 3)),
            base_backoff_ms=float(retry_doc.get("base_backoff_ms", 1000.0)),
        ),
        max_in_flight=int(doc.get("max_in_flight", 4)),
        timeout_s=float(doc.get("timeout_s", 60.0)),
    )
    return apply_env_overrides(cfg)


def apply_env_overrides(cfg: GatewayConfig) -> GatewayConfig:
    """Environment variables override file config. Documented keys:

    CEJROUTE_BACKEND_<ID>_URL / _MODEL / _API_KEY (ID in PERSONAS, JUDGE),
    CEJROUTE_SAMPLING_TEMPERATURE / _MAX_TOKENS / _SEED,
    CEJROUTE_RETRY_MAX_ATTEMPTS / _BASE_BACKOFF_MS, CEJROUTE_MAX_IN_FLIGHT.
    """
    backends = dict(cfg.backends)
    for backend_id in (PERSONAS_BACKEND, JUDGE_BACKEND):
        upper = backend_id.upper()
        url = os.environ.get(f"{ENV_PREFIX}BACKEND_{upper}_URL")
        model = os.environ.get(f"{ENV_PREFIX}BACKEND_{upper}_MODEL")
        api_key = os.environ.get(f"{ENV_PREFIX}BACKEND_{upper}_API_KEY")
        if url or model or api_key:
            base = backends.get(backend_id, BackendConfig(url="", model=""))
            backends[backend_id] = BackendConfig(
                url=url or base.url, model=model or base.model,
                api_key=api_key or base.api_key,
            )

    def _env(name: str, cast, default):
        raw = os.environ.get(f"{ENV_PREFIX}{name}")
        return cast(raw) if raw is not None else default

    sampling = SamplingParams(
        temperature=_env("SAMPLING_TEMPERATURE", float, cfg.sampling.temperature),
        max_tokens=_env("SAMPLING_MAX_TOKENS", int, cfg.sampling.max_tokens),
        seed=_env("SAMPLING_SEED", int, cfg.sampling.seed),
    )
    retry = RetryConfig(
        max_attempts=_env("RETRY_MAX_ATTEMPTS", int, cfg.retry.max_attempts),
        base_backoff_ms=_env("RETRY_BASE_BACKOFF_MS", float, cfg.retry.base_backoff_ms),
    )
    return GatewayConfig(
        backends=backends,
        sampling=sampling,
        retry=retry,
        max_in_flight=_env("MAX_IN_FLIGHT", int, cfg.max_in_flight),
        timeout_s=cfg.timeout_s,
    )

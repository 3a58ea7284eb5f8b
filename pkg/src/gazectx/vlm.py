"""Gaze-context prompts, constrained answers, model clients and baselines.

Every agent, whether a baseline heuristic, a deterministic mock or a live
HTTP model, implements ``answer(payload, seed)`` and returns one of
:class:`AgentAnswer`, :class:`ParseFailure` or :class:`TransportFailure`.
Parse failures are discarded trials; transport failures are infrastructure
problems and are counted separately.
"""

from __future__ import annotations

import base64
import json
import os
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from os import PathLike
from typing import Callable, Protocol, Sequence, Union

import httpx
import numpy as np

from .errors import ConfigError, PreconditionError, UsageError

QUESTIONS = {
    "E1": "What am I looking at?",
    "E2": "What am I going to interact with?",
}


@dataclass(frozen=True)
class PromptTemplate:
    version: str = "gaze-context-v1"
    system: str = (
        "You are an assistant on a pair of smart glasses. You see the wearer's egocentric camera image. "
        "Answer the wearer's question by choosing exactly one of the visible objects listed below. "
        'Respond only with JSON of the form {{"answer": <one of the visible objects>}}.\n'
        "Visible objects: {options}"
    )
    context_header: str = "The wearer's recent gaze fixations, oldest first:"
    context_line: str = "looked at {name} for {duration_ms:.0f} ms, {ago_s:.1f} s ago"
    questions: dict = field(default_factory=lambda: dict(QUESTIONS))


DEFAULT_TEMPLATE = PromptTemplate()


def load_template(path: str | PathLike) -> PromptTemplate:
    """Read a JSON prompt template; missing keys keep their defaults."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    unknown = set(obj) - {"version", "system", "context_header", "context_line", "questions"}
    if unknown:
        raise ConfigError(f"unknown template keys {sorted(unknown)}")
    return PromptTemplate(**obj)


@dataclass(frozen=True)
class PriorFixation:
    name: str
    duration_ms: float
    ended_s_ago: float


@dataclass(frozen=True)
class QueryPayload:
    image_ref: str
    visible_objects: tuple[str, ...]
    prior_fixations: tuple[PriorFixation, ...]
    question: str = "E1"

    def __post_init__(self):
        if not self.visible_objects:
            raise ConfigError("visible_objects must be non-empty")
        if len(set(self.visible_objects)) != len(self.visible_objects):
            raise ConfigError("visible object names must be unique")
        if self.question not in QUESTIONS:
            raise ConfigError(f"question must be E1 or E2, got {self.question!r}")

    @property
    def k(self) -> int:
        return len(self.prior_fixations)


@dataclass(frozen=True)
class MessageBlock:
    kind: str  # system | context | image | question
    text: str = ""
    image_ref: str | None = None


def build_prompt(payload: QueryPayload, template: PromptTemplate = DEFAULT_TEMPLATE) -> list[MessageBlock]:
    """Ordered blocks: system, context (only when k > 0), image, question."""
    options = json.dumps(list(payload.visible_objects), ensure_ascii=False)
    blocks = [MessageBlock("system", template.system.format(options=options))]
    if payload.prior_fixations:
        lines = [template.context_header]
        lines += [
            template.context_line.format(name=p.name, duration_ms=p.duration_ms, ago_s=p.ended_s_ago)
            for p in payload.prior_fixations
        ]
        blocks.append(MessageBlock("context", "\n".join(lines)))
    blocks.append(MessageBlock("image", image_ref=payload.image_ref))
    blocks.append(MessageBlock("question", template.questions[payload.question]))
    return blocks


# --------------------------------------------------------------------------
# Answers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AgentAnswer:
    chosen: str
    raw: str


@dataclass(frozen=True)
class ParseFailure:
    raw: str
    reason: str


@dataclass(frozen=True)
class TransportFailure:
    reason: str
    attempts: int = 1


Outcome = Union[AgentAnswer, ParseFailure, TransportFailure]


def serialize_answer(name: str) -> str:
    return json.dumps({"answer": name}, ensure_ascii=False)


def _first_json_object(text: str):
    dec = json.JSONDecoder()
    i = text.find("{")
    while i != -1:
        try:
            obj, _ = dec.raw_decode(text, i)
        except json.JSONDecodeError:
            i = text.find("{", i + 1)
            continue
        if isinstance(obj, dict):
            return obj
        i = text.find("{", i + 1)
    return None


def parse_answer(raw_text: str, visible_objects: Sequence[str]) -> AgentAnswer | ParseFailure:
    """First JSON object in ``raw_text`` whose ``answer`` names a visible object.

    Matching is exact first, then case-insensitive after trimming; a
    case-insensitive match that is ambiguous is a failure.
    """
    obj = _first_json_object(raw_text)
    if obj is None:
        return ParseFailure(raw_text, "no JSON object")
    if "answer" not in obj:
        return ParseFailure(raw_text, "missing 'answer' key")
    ans = obj["answer"]
    if not isinstance(ans, str):
        return ParseFailure(raw_text, "'answer' is not a string")
    if ans in visible_objects:
        return AgentAnswer(ans, raw_text)
    key = ans.strip().casefold()
    hits = [v for v in visible_objects if v.strip().casefold() == key]
    if len(hits) == 1:
        return AgentAnswer(hits[0], raw_text)
    if len(hits) > 1:
        return ParseFailure(raw_text, f"answer {ans!r} is ambiguous")
    return ParseFailure(raw_text, f"answer {ans!r} is not a visible object")


# --------------------------------------------------------------------------
# Baselines
# --------------------------------------------------------------------------

BASELINES = ("random_visible", "random_prior", "greedy_most_fixated", "previous_fixation")
_NEEDS_CONTEXT = {"random_prior", "greedy_most_fixated", "previous_fixation"}


def greedy_most_fixated(names: Sequence[str]) -> str:
    """Most frequent name; ties go to the one fixated most recently."""
    counts = Counter(names)
    top = max(counts.values())
    for name in reversed(names):
        if counts[name] == top:
            return name
    raise PreconditionError("no prior fixations")


def baseline_answer(strategy: str, payload: QueryPayload, seed: int) -> str:
    if strategy not in BASELINES:
        raise UsageError(f"unknown baseline {strategy!r}; choose from {', '.join(BASELINES)}")
    prior = [p.name for p in payload.prior_fixations]
    if strategy in _NEEDS_CONTEXT and not prior:
        raise PreconditionError(f"{strategy} needs at least one prior fixation (k=0)")
    rng = np.random.default_rng(seed)
    if strategy == "random_visible":
        return payload.visible_objects[int(rng.integers(len(payload.visible_objects)))]
    if strategy == "random_prior":
        return prior[int(rng.integers(len(prior)))]
    if strategy == "greedy_most_fixated":
        return greedy_most_fixated(prior)
    return prior[-1]


# --------------------------------------------------------------------------
# Agents
# --------------------------------------------------------------------------


class Agent(Protocol):
    name: str
    kind: str
    max_in_flight: int
    requires_context: bool

    def answer(self, payload: QueryPayload, seed: int) -> Outcome: ...


@dataclass(frozen=True)
class BaselineAgent:
    strategy: str
    kind: str = "baseline"
    max_in_flight: int = 1_000_000

    def __post_init__(self):
        if self.strategy not in BASELINES:
            raise UsageError(f"unknown baseline {self.strategy!r}; choose from {', '.join(BASELINES)}")

    @property
    def name(self) -> str:
        return self.strategy

    @property
    def requires_context(self) -> bool:
        return self.strategy in _NEEDS_CONTEXT

    def answer(self, payload: QueryPayload, seed: int) -> Outcome:
        name = baseline_answer(self.strategy, payload, seed)
        return AgentAnswer(name, serialize_answer(name))


MOCK_STRATEGIES = {
    "echo-prev": "echo-prev",
    "echo-previous-fixation": "echo-prev",
    "uniform-random": "uniform-random",
    "greedy": "greedy",
    "random-prior": "random-prior",
}

_UNPARSEABLE = "I'm not sure which object you mean."


@dataclass(frozen=True)
class MockClient:
    """Deterministic stand-in for a model: a pure function of payload and seed.

    ``failure_rate`` injects unparseable replies from a random stream that
    is independent of the one used for choosing, so the answers to the
    remaining trials are unaffected.
    """

    strategy: str = "echo-prev"
    seed: int = 0
    failure_rate: float = 0.0
    kind: str = "mock"
    max_in_flight: int = 1_000_000
    requires_context: bool = False

    def __post_init__(self):
        if self.strategy not in MOCK_STRATEGIES:
            raise UsageError(f"unknown mock strategy {self.strategy!r}; choose from {', '.join(MOCK_STRATEGIES)}")
        object.__setattr__(self, "strategy", MOCK_STRATEGIES[self.strategy])
        if not 0.0 <= self.failure_rate <= 1.0:
            raise ConfigError("failure_rate must lie in [0, 1]")

    @property
    def name(self) -> str:
        return f"mock:{self.strategy}"

    def respond(self, payload: QueryPayload, seed: int) -> str:
        choose_ss, fail_ss = np.random.SeedSequence([self.seed, seed]).spawn(2)
        if self.failure_rate > 0 and np.random.default_rng(fail_ss).random() < self.failure_rate:
            return _UNPARSEABLE
        rng = np.random.default_rng(choose_ss)
        prior = [p.name for p in payload.prior_fixations]
        visible = payload.visible_objects
        if self.strategy == "echo-prev" and prior:
            name = prior[-1]
        elif self.strategy == "greedy" and prior:
            name = greedy_most_fixated(prior)
        elif self.strategy == "random-prior" and prior:
            name = prior[int(rng.integers(len(prior)))]
        else:
            name = visible[int(rng.integers(len(visible)))]
        return f"Sure. {serialize_answer(name)}"

    def answer(self, payload: QueryPayload, seed: int) -> Outcome:
        return parse_answer(self.respond(payload, seed), payload.visible_objects)


@dataclass(frozen=True)
class ClientConfig:
    endpoint_url: str = ""
    model_name: str = ""
    api_key_env_var_name: str = "GAZECTX_API_KEY"
    timeout_s: float = 60.0
    max_in_flight: int = 4
    retries: int = 2
    backoff_s: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        if not self.timeout_s > 0:
            raise ConfigError("timeout_s must be > 0")
        if self.retries < 0:
            raise ConfigError("retries must be >= 0")


ImageLoader = Callable[[QueryPayload], bytes]


def default_image_loader(payload: QueryPayload) -> bytes:
    if payload.image_ref.startswith("card:"):
        from .cards import render_label_card

        return render_label_card(payload.visible_objects)
    with open(payload.image_ref, "rb") as fh:
        return fh.read()


def _response_text(resp: httpx.Response) -> str:
    try:
        body = resp.json()
    except ValueError:
        return resp.text
    if isinstance(body, dict):
        choices = body.get("choices")
        if isinstance(choices, list) and choices:
            msg = choices[0].get("message", {}) if isinstance(choices[0], dict) else {}
            content = msg.get("content") if isinstance(msg, dict) else None
            if isinstance(content, str):
                return content
            if isinstance(choices[0], dict) and isinstance(choices[0].get("text"), str):
                return choices[0]["text"]
        for key in ("content", "text", "output"):
            if isinstance(body.get(key), str):
                return body[key]
    return resp.text


class HttpClient:
    """Chat-completion style client with bounded concurrency and retries.

    Retries on HTTP 429, 5xx and connection errors with exponential backoff
    (``backoff_s * 2**attempt``).  At most ``max_in_flight`` requests are
    outstanding at once across threads.
    """

    kind = "http"
    requires_context = False

    def __init__(
        self,
        config: ClientConfig,
        transport: httpx.BaseTransport | None = None,
        image_loader: ImageLoader = default_image_loader,
        template: PromptTemplate = DEFAULT_TEMPLATE,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not config.endpoint_url:
            raise ConfigError("endpoint_url is required for the http client")
        key = os.environ.get(config.api_key_env_var_name)
        if not key:
            raise ConfigError(f"environment variable {config.api_key_env_var_name} is not set")
        self.config = config
        self.template = template
        self.image_loader = image_loader
        self._sleep = sleep
        self._gate = threading.BoundedSemaphore(config.max_in_flight)
        self._client = httpx.Client(
            timeout=config.timeout_s,
            transport=transport,
            headers={"Authorization": f"Bearer {key}"},
        )

    @property
    def name(self) -> str:
        return f"http:{self.config.model_name or 'model'}"

    @property
    def max_in_flight(self) -> int:
        return self.config.max_in_flight

    def request_body(self, payload: QueryPayload) -> dict:
        blocks = build_prompt(payload, self.template)
        system = blocks[0].text
        content = []
        for b in blocks[1:]:
            if b.kind == "image":
                data = base64.b64encode(self.image_loader(payload)).decode("ascii")
                content.append({"type": "image_b64", "data": data})
            else:
                content.append({"type": "text", "text": b.text})
        return {
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": [{"type": "text", "text": system}]},
                {"role": "user", "content": content},
            ],
            "response_format": {"type": "json"},
        }

    def answer(self, payload: QueryPayload, seed: int = 0) -> Outcome:
        body = self.request_body(payload)
        attempts = self.config.retries + 1
        reason = "no attempt made"
        for attempt in range(attempts):
            if attempt:
                self._sleep(self.config.backoff_s * 2 ** (attempt - 1))
            try:
                with self._gate:
                    resp = self._client.post(self.config.endpoint_url, json=body)
            except httpx.HTTPError as exc:
                reason = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                reason = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                return TransportFailure(f"HTTP {resp.status_code}", attempt + 1)
            return parse_answer(_response_text(resp), payload.visible_objects)
        return TransportFailure(reason, attempts)

    def close(self):
        self._client.close()


def query(client: Agent, payload: QueryPayload, seed: int = 0) -> Outcome:
    return client.answer(payload, seed)


def make_agent(spec: str, seed: int = 0, client_config: ClientConfig | None = None, failure_rate: float = 0.0, **http_kwargs) -> Agent:
    """Agent from a CLI-style spec: ``mock:<strategy>``, ``baseline:<name>`` or ``http``."""
    kind, _, arg = spec.partition(":")
    if kind == "mock":
        return MockClient(arg or "echo-prev", seed=seed, failure_rate=failure_rate)
    if kind == "baseline":
        return BaselineAgent(arg)
    if kind == "http":
        return HttpClient(client_config or ClientConfig(), **http_kwargs)
    raise UsageError(f"unknown client {spec!r}; use mock:<strategy>, baseline:<name> or http")

"""Talking to the case designer: prompts, transports, parsing, repair.

The conversation is a growing list of :class:`ChatMessage`; every
request replays the full history (stateless chat-completions
semantics).  Three transports cover the ways a designer can be wired
in: ``http`` posts to a chat-completions endpoint, ``scripted``
replays canned replies from a file (the test backbone, making whole
runs pure functions of seed + script), and ``manual`` writes prompt
bundles to a directory and polls for a pasted reply.

Replies go through a validate-repair loop: a reply that fails to
parse, or whose case is not a valid arena, triggers a repair message
quoting the exact problem; after :data:`MAX_ATTEMPTS` failed attempts
a random arena is substituted so the run always makes progress.
"""

from __future__ import annotations

import base64
import json
import os
import string
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import requests

from .arena import Arena, ArenaError, generate_random_arena, parse_arena
from .feedback import FeedbackPayload, ImageArtifact

MAX_ATTEMPTS = 3


class GatewayError(Exception):
    pass


class ResponseFormatError(GatewayError):
    """The assistant's reply text could not be used."""


class NoJsonFound(ResponseFormatError):
    def __init__(self) -> None:
        super().__init__("no JSON object found in the reply")


class MissingKey(ResponseFormatError):
    def __init__(self, key: str) -> None:
        super().__init__(f'the JSON object is missing the key "{key}"')
        self.key = key


class NonStringValue(ResponseFormatError):
    def __init__(self, key: str) -> None:
        super().__init__(f'the value of "{key}" must be a string')
        self.key = key


class CaseCountMismatch(ResponseFormatError):
    def __init__(self, expected: int, got: int) -> None:
        super().__init__(f'"cases" must list exactly {expected} cases, got {got}')
        self.expected = expected
        self.got = got


class TransportFailure(GatewayError):
    pass


@dataclass(frozen=True)
class ChatMessage:
    role: str
    text: str
    images: tuple[ImageArtifact, ...] = ()

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"bad role {self.role!r}")
        if self.images and self.role != "user":
            raise ValueError("images are only allowed on user messages")


@dataclass(frozen=True)
class CaseResponse:
    case: str
    understood: str
    reasoning: str


def _read_template(name: str) -> str:
    return resources.files("evonav").joinpath("templates").joinpath(name).read_text()


def example_arena_text() -> str:
    return _read_template("example-arena.txt").strip()


def response_recap() -> str:
    return _read_template("response-format.txt").strip()


def contextualization_prompt(n_stage: int, modality: str) -> ChatMessage:
    """Opening message: domain, designer role, quality metric, the
    modality's feedback format, arena constraints, one example, and
    the JSON response format.  Pure template substitution, so two
    renders of the same config are byte-identical."""
    desc = _read_template(f"modality-{modality}.txt").strip()
    text = string.Template(_read_template("contextualization.txt")).substitute(
        feedback_description=desc,
        example_arena=example_arena_text(),
        n_stage=n_stage,
    )
    return ChatMessage("user", text)


def static_contextualization_prompt(n_stage: int) -> ChatMessage:
    text = string.Template(_read_template("static-contextualization.txt")).substitute(
        example_arena=example_arena_text(),
        n_stage=n_stage,
    )
    return ChatMessage("user", text)


def feedback_prompt(payload: FeedbackPayload) -> ChatMessage:
    """Stage report: metrics text, captioned attachments (if any),
    format recap, and the request for the next case."""
    parts = ["The stage finished training. Report:", "", payload.metrics_text]
    images = payload.images()
    if images:
        parts.append("")
        for i, img in enumerate(images, start=1):
            parts.append(f"Attached image {i}: {img.caption}")
    parts.extend(["", response_recap(), "Propose the next case now."])
    return ChatMessage("user", "\n".join(parts), images=images)


def repair_prompt(error: str) -> ChatMessage:
    text = string.Template(_read_template("repair.txt")).substitute(
        error=error, recap=response_recap()
    )
    return ChatMessage("user", text)


def _balanced_objects(text: str):
    """Yield every balanced {...} substring, tolerating nested braces
    and braces inside JSON strings."""
    i = 0
    while True:
        start = text.find("{", i)
        if start == -1:
            return
        depth = 0
        in_str = False
        esc = False
        for j in range(start, len(text)):
            ch = text[j]
            if in_str:
                if esc:
                    esc = False
                elif ch == "\\":
                    esc = True
                elif ch == '"':
                    in_str = False
            elif ch == '"':
                in_str = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    yield text[start : j + 1]
                    break
        i = start + 1


def extract_json_object(text: str) -> dict:
    """First balanced substring that parses as a JSON object; prose
    and code fences around it are ignored."""
    for candidate in _balanced_objects(text):
        try:
            obj = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    raise NoJsonFound()


def parse_response(text: str) -> CaseResponse:
    """Extract a CaseResponse from raw assistant text.

    Arena validity is not checked here; that is request_case's job.
    Extra keys are ignored.
    """
    obj = extract_json_object(text)
    for key in ("case", "understood", "reasoning"):
        if key not in obj:
            raise MissingKey(key)
        if not isinstance(obj[key], str):
            raise NonStringValue(key)
    return CaseResponse(obj["case"], obj["understood"], obj["reasoning"])


def parse_static_response(text: str, expected: int) -> tuple[list[str], str, str]:
    """Parse the static baseline's all-cases-at-once reply."""
    obj = extract_json_object(text)
    if "cases" not in obj:
        raise MissingKey("cases")
    cases = obj["cases"]
    if not isinstance(cases, list) or not all(isinstance(c, str) for c in cases):
        raise NonStringValue("cases")
    if len(cases) != expected:
        raise CaseCountMismatch(expected, len(cases))
    for key in ("understood", "reasoning"):
        if key not in obj:
            raise MissingKey(key)
        if not isinstance(obj[key], str):
            raise NonStringValue(key)
    return list(cases), obj["understood"], obj["reasoning"]


# ---------------------------------------------------------------------------
# transports


class ScriptedTransport:
    """Replays canned assistant replies in order.

    File format: one JSON-encoded string per line, each a full reply.
    skip() lets a resumed run fast-forward past replies already
    consumed by completed stages.
    """

    def __init__(self, replies) -> None:
        self._replies = list(replies)
        self._cursor = 0

    @classmethod
    def from_file(cls, path) -> "ScriptedTransport":
        replies = []
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            value = json.loads(line)
            if not isinstance(value, str):
                raise ValueError(f"script line is not a JSON string: {line[:60]}")
            replies.append(value)
        return cls(replies)

    @property
    def consumed(self) -> int:
        return self._cursor

    def skip(self, count: int) -> None:
        self._cursor += count

    def send(self, messages) -> str:
        if self._cursor >= len(self._replies):
            raise TransportFailure(
                f"script exhausted after {len(self._replies)} replies"
            )
        reply = self._replies[self._cursor]
        self._cursor += 1
        return reply


def _wire_message(message: ChatMessage) -> dict:
    if not message.images:
        return {"role": message.role, "content": message.text}
    parts: list[dict] = [{"type": "text", "text": message.text}]
    for img in message.images:
        data = base64.b64encode(img.png).decode("ascii")
        parts.append(
            {"type": "image_url", "image_url": {"url": "data:image/png;base64," + data}}
        )
    return {"role": message.role, "content": parts}


class HttpTransport:
    """POSTs the conversation to a chat-completions endpoint.

    Images ride along as base64 PNG data URIs.  Transport-level
    failures are retried with exponential backoff; after `attempts`
    tries a TransportFailure is raised.
    """

    def __init__(
        self,
        url: str,
        model: str,
        api_key_env: str = "LLM_API_KEY",
        timeout: float = 120.0,
        attempts: int = 3,
        backoff: float = 2.0,
    ) -> None:
        self.url = url
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.attempts = attempts
        self.backoff = backoff

    def send(self, messages) -> str:
        body = {
            "model": self.model,
            "messages": [_wire_message(m) for m in messages],
        }
        headers = {}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = "Bearer " + key
        last: Exception | str = "no attempt made"
        for attempt in range(self.attempts):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = requests.post(
                    self.url, json=body, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last = exc
                continue
            if resp.status_code != 200:
                last = f"HTTP {resp.status_code}: {resp.text[:200]}"
                continue
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                last = exc
                continue
            if isinstance(content, str):
                return content
            last = f"unexpected content type {type(content).__name__}"
        raise TransportFailure(str(last))


def render_conversation(messages) -> str:
    blocks = []
    for m in messages:
        body = m.text
        if m.images:
            names = ", ".join(img.name + ".png" for img in m.images)
            body += f"\n[attached: {names}]"
        blocks.append(f"=== {m.role} ===\n{body}")
    return "\n\n".join(blocks) + "\n"


class ManualTransport:
    """Copy-paste workflow: each request becomes a numbered directory
    holding prompt.txt plus the new message's images; the reply is
    read from response.json once a human drops it there (raw text is
    fine, parse_response digs the JSON out)."""

    def __init__(self, exchange_dir, poll_interval: float = 2.0,
                 timeout: float = 3600.0) -> None:
        self.dir = Path(exchange_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.poll_interval = poll_interval
        self.timeout = timeout
        # continue numbering past request dirs left by an earlier run,
        # otherwise a resumed run would re-read their stale responses
        self._counter = sum(
            1 for p in self.dir.glob("request-*") if p.is_dir()
        )

    def send(self, messages) -> str:
        self._counter += 1
        d = self.dir / f"request-{self._counter:03d}"
        d.mkdir(parents=True, exist_ok=True)
        (d / "prompt.txt").write_text(render_conversation(messages))
        for img in messages[-1].images:
            (d / (img.name + ".png")).write_bytes(img.png)
            (d / (img.name + ".svg")).write_text(img.svg)
        reply_path = d / "response.json"
        deadline = time.monotonic() + self.timeout
        while time.monotonic() < deadline:
            if reply_path.exists():
                text = reply_path.read_text()
                if text.strip():
                    return text
            time.sleep(self.poll_interval)
        raise TransportFailure(f"no response in {d} after {self.timeout:.0f}s")


def make_transport(settings: dict):
    kind = settings.get("kind")
    if kind == "scripted":
        if "script" in settings:
            return ScriptedTransport.from_file(settings["script"])
        return ScriptedTransport(settings["replies"])
    if kind == "http":
        return HttpTransport(
            settings["url"],
            settings["model"],
            api_key_env=settings.get("api_key_env", "LLM_API_KEY"),
            timeout=settings.get("timeout", 120.0),
            attempts=settings.get("attempts", 3),
            backoff=settings.get("backoff", 2.0),
        )
    if kind == "manual":
        return ManualTransport(
            settings["dir"],
            poll_interval=settings.get("poll_interval", 2.0),
            timeout=settings.get("timeout", 3600.0),
        )
    raise ValueError(f"unknown transport kind {kind!r}")


# ---------------------------------------------------------------------------
# request loops


def _message_record(message: ChatMessage) -> dict:
    return {
        "role": message.role,
        "text": message.text,
        "images": [img.name for img in message.images],
    }


@dataclass(frozen=True)
class RequestOutcome:
    response: CaseResponse | None
    arena: Arena
    transcript: tuple[dict, ...]
    fallback: bool


def request_case(transport, history: list, message: ChatMessage, rng) -> RequestOutcome:
    """Send `message`, parse and validate the reply; on failure send a
    repair message quoting the exact error, up to MAX_ATTEMPTS
    attempts in total; then substitute a random arena.

    Every exchanged message is appended to `history` in place, so the
    next request replays the whole conversation.  The returned
    transcript has one entry per attempt plus a fallback entry when
    the budget ran out.
    """
    transcript: list[dict] = []
    outgoing = message
    for attempt in range(1, MAX_ATTEMPTS + 1):
        history.append(outgoing)
        reply = transport.send(history)
        history.append(ChatMessage("assistant", reply))
        entry = {
            "attempt": attempt,
            "sent": _message_record(outgoing),
            "reply": reply,
            "error": None,
            "accepted": False,
        }
        try:
            response = parse_response(reply)
            arena = parse_arena(response.case)
        except (ResponseFormatError, ArenaError) as exc:
            entry["error"] = str(exc)
            transcript.append(entry)
            outgoing = repair_prompt(str(exc))
            continue
        entry["accepted"] = True
        transcript.append(entry)
        return RequestOutcome(response, arena, tuple(transcript), False)
    arena = generate_random_arena(rng)
    transcript.append({"fallback": True, "case": arena.text})
    return RequestOutcome(None, arena, tuple(transcript), True)


@dataclass(frozen=True)
class StaticOutcome:
    cases: tuple[Arena, ...]
    transcript: tuple[dict, ...]
    fallback_flags: tuple[bool, ...]

    @property
    def fallback(self) -> bool:
        return any(self.fallback_flags)


def request_static_cases(
    transport, history: list, message: ChatMessage, expected: int, rng
) -> StaticOutcome:
    """All-at-once variant for the static baseline: same repair loop,
    but validation and fallback apply per case; only the slots still
    invalid after the attempt budget are replaced by random arenas."""
    transcript: list[dict] = []
    outgoing = message
    best: list[Arena | None] = [None] * expected
    for attempt in range(1, MAX_ATTEMPTS + 1):
        history.append(outgoing)
        reply = transport.send(history)
        history.append(ChatMessage("assistant", reply))
        entry = {
            "attempt": attempt,
            "sent": _message_record(outgoing),
            "reply": reply,
            "error": None,
            "accepted": False,
        }
        try:
            texts, _, _ = parse_static_response(reply, expected)
        except ResponseFormatError as exc:
            entry["error"] = str(exc)
            transcript.append(entry)
            outgoing = repair_prompt(str(exc))
            continue
        errors = []
        parsed: list[Arena | None] = []
        for i, text in enumerate(texts):
            try:
                parsed.append(parse_arena(text))
            except ArenaError as exc:
                parsed.append(None)
                errors.append(f"case {i + 1}: {exc}")
        best = parsed
        if not errors:
            entry["accepted"] = True
            transcript.append(entry)
            return StaticOutcome(
                tuple(parsed), tuple(transcript), (False,) * expected
            )
        entry["error"] = "; ".join(errors)
        transcript.append(entry)
        outgoing = repair_prompt("; ".join(errors))
    cases: list[Arena] = []
    flags: list[bool] = []
    for slot in best:
        if slot is None:
            cases.append(generate_random_arena(rng))
            flags.append(True)
        else:
            cases.append(slot)
            flags.append(False)
    transcript.append(
        {"fallback": True, "cases": [c.text for c, f in zip(cases, flags) if f]}
    )
    return StaticOutcome(tuple(cases), tuple(transcript), tuple(flags))

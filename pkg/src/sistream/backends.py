"""Pluggable translation policies behind one request/response contract.

Three backends share the contract: a ground-truth oracle (emits the sample's
own chunk translations, for testing), a pause heuristic with a word lexicon
(baseline), and an HTTP client speaking the JSON wire protocol to an external
LLM service. An empty translation means "wait": the policy read the window
and chose not to commit anything yet.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Protocol

import requests

from .core import TIME_EPS, KnowledgeItem, SemanticChunk
from .stream import StreamWindow

if TYPE_CHECKING:
    from .agent import RoundRecord, SessionConfig

logger = logging.getLogger("sistream.backends")

AUTH_TOKEN_ENV = "CLASI_LLM_TOKEN"


class BackendError(RuntimeError):
    """Transport-level failure: the backend could not be reached at all."""


class ProtocolError(RuntimeError):
    """The backend answered, but the reply violates the response contract."""


@dataclass(frozen=True)
class BackendRequest:
    window: StreamWindow
    context: tuple  # prior RoundRecords, oldest first
    retrieved: tuple  # KnowledgeItems, best first
    mode: "SessionConfig"
    instruction: str
    is_final: bool
    session_id: str = ""
    round_index: int = 0

    def __init__(
        self,
        window: StreamWindow,
        context,
        retrieved,
        mode,
        instruction: str,
        is_final: bool,
        session_id: str = "",
        round_index: int = 0,
    ):
        object.__setattr__(self, "window", window)
        object.__setattr__(self, "context", tuple(context))
        object.__setattr__(self, "retrieved", tuple(retrieved))
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "instruction", instruction)
        object.__setattr__(self, "is_final", is_final)
        object.__setattr__(self, "session_id", session_id)
        object.__setattr__(self, "round_index", round_index)


@dataclass(frozen=True)
class BackendResponse:
    translation: str  # empty == wait
    cutoff_s: float
    transcription: str | None = None

    @property
    def is_wait(self) -> bool:
        return self.translation == ""


def validate_response(resp: BackendResponse, window: StreamWindow) -> None:
    """Enforce the response contract against the window it answers."""
    if resp.is_wait:
        if abs(resp.cutoff_s - window.window_start_s) > TIME_EPS:
            raise ProtocolError(
                f"wait response must not move the cutoff: got {resp.cutoff_s}, "
                f"window starts at {window.window_start_s}"
            )
        return
    if not (window.window_start_s + TIME_EPS < resp.cutoff_s <= window.window_end_s + TIME_EPS):
        raise ProtocolError(
            f"cutoff {resp.cutoff_s} outside ({window.window_start_s}, "
            f"{window.window_end_s}]"
        )


class Backend(Protocol):
    def respond(self, req: BackendRequest) -> BackendResponse: ...


# ---------------------------------------------------------------------------
# Oracle backend: replays the sample's own chunk translations.


def oracle_respond(
    req: BackendRequest, sample_chunks: list[SemanticChunk], joiner: str = " "
) -> BackendResponse:
    """Emit the targets of every chunk that completed inside the window.

    The window start must sit on a chunk boundary (or 0): it equals the
    committed cutoff, which this backend only ever places at chunk ends.
    On the final window all remaining chunks are flushed.
    """
    start = req.window.window_start_s
    end = req.window.window_end_s
    boundaries = [0.0] + [c.end_s for c in sample_chunks]
    if not any(abs(start - b) <= TIME_EPS for b in boundaries):
        raise ProtocolError(
            f"window start {start} does not sit on a chunk boundary {boundaries}"
        )
    due = [
        c
        for c in sample_chunks
        if c.end_s > start + TIME_EPS and (req.is_final or c.end_s <= end + TIME_EPS)
    ]
    if not due:
        return BackendResponse(translation="", cutoff_s=start)
    return BackendResponse(
        translation=joiner.join(c.target_text for c in due),
        cutoff_s=max(c.end_s for c in due),
    )


class OracleBackend:
    """Ground-truth policy for tests and calibration runs."""

    def __init__(self, chunks, joiner: str = " "):
        self.chunks = list(chunks)
        self.joiner = joiner

    def respond(self, req: BackendRequest) -> BackendResponse:
        return oracle_respond(req, self.chunks, self.joiner)


# ---------------------------------------------------------------------------
# Pause-heuristic baseline: word-by-word lexicon translation at silences.


def pause_respond(
    req: BackendRequest,
    lexicon: dict[str, str],
    gap_threshold_s: float = 0.5,
) -> BackendResponse:
    """Translate up to the last inter-token silence of at least the threshold.

    Deliberately literal word-by-word output; unknown source words pass
    through wrapped in brackets so coverage gaps stay visible downstream.
    """
    tokens = req.window.tokens
    if not tokens:
        return BackendResponse(translation="", cutoff_s=req.window.window_start_s)
    take = 0
    if req.is_final:
        take = len(tokens)
    else:
        for i in range(len(tokens) - 1):
            if tokens[i + 1].start_s - tokens[i].end_s >= gap_threshold_s:
                take = i + 1
    if take == 0:
        return BackendResponse(translation="", cutoff_s=req.window.window_start_s)
    words = [lexicon.get(t.text, f"[{t.text}]") for t in tokens[:take]]
    return BackendResponse(translation=" ".join(words), cutoff_s=tokens[take - 1].end_s)


class PauseBackend:
    def __init__(self, lexicon: dict[str, str], gap_threshold_s: float = 0.5):
        self.lexicon = dict(lexicon)
        self.gap_threshold_s = gap_threshold_s

    def respond(self, req: BackendRequest) -> BackendResponse:
        return pause_respond(req, self.lexicon, self.gap_threshold_s)


# ---------------------------------------------------------------------------
# Prompt construction and the HTTP wire client.


def build_prompt(req: BackendRequest) -> str:
    """Render the request as a byte-stable prompt for a text-in LLM service."""
    mode = req.mode
    lines: list[str] = []
    lines.append("### Instruction")
    lines.append(req.instruction)
    lines.append(
        "Task mode: "
        + ("streaming" if mode.streaming else "offline")
        + ", "
        + ("transcribe-then-translate" if mode.cot_transcription else "direct")
        + "."
    )
    if mode.use_context and req.context:
        lines.append(f"### Context ({len(req.context)} previous rounds)")
        for rec in req.context:
            prefix = f"{rec.transcription} => " if rec.transcription else ""
            lines.append(f"[{rec.round_index}] {prefix}{rec.translation}")
    if req.retrieved:
        lines.append(f"### Knowledge ({len(req.retrieved)} items)")
        for item in req.retrieved:
            lines.append(f"{item.key} == {item.value}")
    final = " (final)" if req.is_final else ""
    lines.append(
        f"### Audio window [{req.window.window_start_s:.3f}s - "
        f"{req.window.window_end_s:.3f}s]{final}"
    )
    lines.append(
        " ".join(f"{t.text}[{t.start_s:.3f}-{t.end_s:.3f}]" for t in req.window.tokens)
    )
    lines.append("### Response schema")
    if mode.cot_transcription:
        lines.append(
            'First transcribe, then translate. Reply with JSON '
            '{"transcription": str, "translation": str, "cutoff_ms": int}.'
        )
    else:
        lines.append('Reply with JSON {"translation": str, "cutoff_ms": int}.')
    lines.append(
        "Translate only the complete semantic chunks; reply with an empty "
        "translation and cutoff_ms unchanged to wait for more speech."
    )
    return "\n".join(lines)


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    auth_token_env: str = AUTH_TOKEN_ENV
    timeout_s: float = 10.0
    max_retries: int = 3
    backoff_base_s: float = 0.5


def wire_request(req: BackendRequest) -> dict:
    mode = req.mode
    payload: dict = {
        "session_id": req.session_id,
        "round": req.round_index,
        "is_final": req.is_final,
        "mode": {
            "cot": mode.cot_transcription,
            "streaming": mode.streaming,
            "use_context": mode.use_context,
        },
        "instruction": req.instruction,
        "context": [],
        "knowledge": [{"key": k.key, "value": k.value} for k in req.retrieved],
        "window": {
            "start_s": req.window.window_start_s,
            "end_s": req.window.window_end_s,
            "tokens": [t.to_dict() for t in req.window.tokens],
        },
    }
    for rec in req.context:
        entry = {"translation": rec.translation}
        if rec.transcription is not None:
            entry["transcription"] = rec.transcription
        payload["context"].append(entry)
    return payload


def _parse_wire_reply(
    body: str, window: StreamWindow, expect_transcription: bool = True
) -> BackendResponse:
    try:
        data = json.loads(body)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"reply is not JSON: {e}; raw body: {body[:500]!r}") from e
    if not isinstance(data, dict) or "translation" not in data:
        raise ProtocolError(f"reply missing 'translation': {body[:500]!r}")
    if "cutoff_ms" not in data:
        raise ProtocolError(f"reply missing 'cutoff_ms': {body[:500]!r}")
    translation = data["translation"]
    if not isinstance(translation, str):
        raise ProtocolError(f"'translation' must be a string: {body[:500]!r}")
    try:
        cutoff_s = int(data["cutoff_ms"]) / 1000.0
    except (TypeError, ValueError):
        raise ProtocolError(f"'cutoff_ms' must be an integer: {body[:500]!r}")
    if translation == "":
        # waits carry no progress; normalize the cutoff to the window start
        cutoff_s = window.window_start_s
    resp = BackendResponse(
        translation=translation,
        cutoff_s=cutoff_s,
        # transcriptions ride along only in transcribe-then-translate mode
        transcription=data.get("transcription") if expect_transcription else None,
    )
    validate_response(resp, window)
    return resp


def llm_respond(
    req: BackendRequest,
    endpoint: EndpointConfig,
    http: requests.Session | None = None,
    sleep=time.sleep,
) -> BackendResponse:
    """POST the wire request and validate the reply.

    Transport faults (connection errors, timeouts, 5xx) are retried with
    exponential backoff; contract violations are raised immediately.
    """
    session = http or requests.Session()
    headers = {"Content-Type": "application/json"}
    token = os.environ.get(endpoint.auth_token_env)
    if token:
        headers["Authorization"] = f"Bearer {token}"
    payload = json.dumps(wire_request(req), ensure_ascii=False)
    attempts = endpoint.max_retries + 1
    delay = endpoint.backoff_base_s
    last_error: Exception | None = None
    for attempt in range(attempts):
        if attempt > 0:
            sleep(delay)
            delay *= 2
        try:
            reply = session.post(
                endpoint.url,
                data=payload.encode("utf-8"),
                headers=headers,
                timeout=endpoint.timeout_s,
            )
        except requests.RequestException as e:
            last_error = e
            logger.warning("transport error on attempt %d: %s", attempt + 1, e)
            continue
        if reply.status_code >= 500:
            last_error = BackendError(f"server error {reply.status_code}")
            logger.warning("server error %d on attempt %d", reply.status_code, attempt + 1)
            continue
        if reply.status_code != 200:
            raise ProtocolError(
                f"unexpected status {reply.status_code}: {reply.text[:500]!r}"
            )
        return _parse_wire_reply(
            reply.text, req.window, expect_transcription=req.mode.cot_transcription
        )
    raise BackendError(
        f"backend unreachable after {attempts} attempts: {last_error}"
    ) from last_error


class LlmBackend:
    """Wire-protocol client; keeps only a connection pool between calls."""

    def __init__(self, endpoint: EndpointConfig, sleep=time.sleep):
        self.endpoint = endpoint
        self._http = requests.Session()
        self._sleep = sleep

    def respond(self, req: BackendRequest) -> BackendResponse:
        return llm_respond(req, self.endpoint, http=self._http, sleep=self._sleep)

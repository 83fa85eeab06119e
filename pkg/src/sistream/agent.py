"""Round-based interpretation loop.

Each round: advance the stream window, optionally retrieve terminology,
load recent memory, ask the backend for a translation and cutoff, then
commit the result. Output is strictly append-only; a round that commits
nothing ("wait") leaves both cutoff and memory untouched.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from .backends import Backend, BackendError, BackendRequest, ProtocolError, validate_response
from .core import LanguageTokenization, StreamingSample
from .metrics import APPEND, EmissionEvent, EmissionLog
from .stream import StreamCursor, StreamWindow, advance, open_stream, set_cutoff

logger = logging.getLogger("sistream.agent")

DEFAULT_INSTRUCTION = (
    "You are a simultaneous interpreter. Translate the speech in the audio "
    "window into the target language, emitting only semantically complete "
    "chunks, and report the cutoff timestamp of the last chunk you translated."
)


class SessionError(RuntimeError):
    """A round failed; carries the partial result accumulated so far."""

    def __init__(self, message: str, partial: "SessionResult | None" = None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class RoundRecord:
    """One committed round: what was heard, what was said, and up to when."""

    round_index: int
    translation: str
    cutoff_s: float
    transcription: str | None = None
    retrieved: tuple[str, ...] = ()  # knowledge keys offered to the backend

    def __init__(
        self,
        round_index: int,
        translation: str,
        cutoff_s: float,
        transcription: str | None = None,
        retrieved=(),
    ):
        object.__setattr__(self, "round_index", round_index)
        object.__setattr__(self, "translation", translation)
        object.__setattr__(self, "cutoff_s", cutoff_s)
        object.__setattr__(self, "transcription", transcription)
        object.__setattr__(self, "retrieved", tuple(retrieved))

    def to_dict(self) -> dict:
        return {
            "round_index": self.round_index,
            "transcription": self.transcription,
            "translation": self.translation,
            "cutoff_s": self.cutoff_s,
            "retrieved": list(self.retrieved),
        }


@dataclass(frozen=True)
class Memory:
    """Stored rounds; context loads are bounded to the most recent ones."""

    records: tuple[RoundRecord, ...] = ()
    max_context_rounds: int = 8

    def __init__(self, records=(), max_context_rounds: int = 8):
        object.__setattr__(self, "records", tuple(records))
        object.__setattr__(self, "max_context_rounds", max_context_rounds)


def load_mem(memory: Memory) -> tuple[RoundRecord, ...]:
    """Most recent records, oldest first, capped at max_context_rounds."""
    if memory.max_context_rounds <= 0:
        return ()
    return memory.records[-memory.max_context_rounds :]


def update_mem(memory: Memory, record: RoundRecord) -> Memory:
    """Append a committed round; wait rounds are never stored."""
    if not record.translation:
        raise ValueError("wait rounds (empty translation) are not stored in memory")
    if memory.records and record.round_index <= memory.records[-1].round_index:
        raise ValueError(
            f"round index {record.round_index} not greater than stored "
            f"{memory.records[-1].round_index}"
        )
    return Memory(
        records=memory.records + (record,),
        max_context_rounds=memory.max_context_rounds,
    )


@dataclass(frozen=True)
class SessionConfig:
    step_s: float = 1.0
    cot_transcription: bool = False
    streaming: bool = True
    use_context: bool = True
    use_retrieval: bool = False
    retriever_k: int = 5
    seed: int = 0
    instruction: str = DEFAULT_INSTRUCTION
    target_tok: LanguageTokenization = field(default_factory=LanguageTokenization)
    processing_latency_s: float = 0.0
    max_context_rounds: int = 8

    def __post_init__(self):
        if self.use_retrieval and self.retriever_k < 1:
            raise ValueError("retriever_k must be >= 1 when retrieval is on")


@dataclass(frozen=True)
class SessionResult:
    final_translation: str
    emission_log: EmissionLog
    memory: Memory
    rounds_run: int

    def to_dict(self) -> dict:
        return {
            "final_translation": self.final_translation,
            "rounds": [r.to_dict() for r in self.memory.records],
            "rounds_run": self.rounds_run,
            "emission_log": {
                "tokenization": self.emission_log.tok.mode,
                "events": [e.to_dict() for e in self.emission_log.events],
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)


def run_round(
    cursor: StreamCursor,
    memory: Memory,
    backend: Backend,
    retriever,
    cfg: SessionConfig,
    round_index: int,
    session_id: str = "",
) -> tuple[RoundRecord | None, StreamWindow]:
    """Execute one read-retrieve-load-generate cycle.

    Returns (record, window); record is None on a wait round. The cursor is
    advanced in place and, when the backend commits, its cutoff moves too.
    """
    window = advance(cursor)
    if window is None:
        raise SessionError("round requested after end of stream")
    retrieved = ()
    if cfg.use_retrieval and retriever is not None:
        retrieved = tuple(
            retriever.retrieve([t.text for t in window.tokens], cfg.retriever_k)
        )
    context = load_mem(memory) if cfg.use_context else ()
    req = BackendRequest(
        window=window,
        context=context,
        retrieved=retrieved,
        mode=cfg,
        instruction=cfg.instruction,
        is_final=window.is_final,
        session_id=session_id,
        round_index=round_index,
    )
    resp = backend.respond(req)
    validate_response(resp, window)
    if resp.is_wait:
        return None, window
    set_cutoff(cursor, resp.cutoff_s)
    record = RoundRecord(
        round_index=round_index,
        translation=resp.translation,
        cutoff_s=resp.cutoff_s,
        transcription=resp.transcription,
        retrieved=tuple(item.key for item in retrieved),
    )
    return record, window


def run_session(
    sample: StreamingSample,
    backend: Backend,
    retriever=None,
    cfg: SessionConfig | None = None,
    session_id: str | None = None,
) -> SessionResult:
    """Run the round loop over a whole sample.

    The last stream window carries is_final, letting the backend flush any
    remaining content; with step_s >= duration this degenerates to a single
    offline round over the complete speech.
    """
    cfg = cfg or SessionConfig()
    session_id = session_id if session_id is not None else sample.id
    cursor = open_stream(sample, cfg.step_s)
    memory = Memory(max_context_rounds=cfg.max_context_rounds)
    events: list[EmissionEvent] = []
    rounds_run = 0

    while True:
        rounds_run += 1
        try:
            record, window = run_round(
                cursor, memory, backend, retriever, cfg, rounds_run, session_id
            )
        except (BackendError, ProtocolError) as e:
            logger.error("session %s round %d failed: %s", session_id, rounds_run, e)
            raise SessionError(
                f"round {rounds_run} failed: {e}",
                partial=_result(memory, events, rounds_run, cfg),
            ) from e
        if record is not None:
            memory = update_mem(memory, record)
            events.append(
                EmissionEvent(
                    time_s=window.window_end_s + cfg.processing_latency_s,
                    kind=APPEND,
                    text=record.translation,
                )
            )
        if window.is_final:
            break
    return _result(memory, events, rounds_run, cfg)


def _result(
    memory: Memory, events: list[EmissionEvent], rounds_run: int, cfg: SessionConfig
) -> SessionResult:
    final = cfg.target_tok.joiner.join(r.translation for r in memory.records)
    return SessionResult(
        final_translation=final,
        emission_log=EmissionLog(events=events, tok=cfg.target_tok),
        memory=memory,
        rounds_run=rounds_run,
    )

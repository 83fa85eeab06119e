"""Core value types for streaming speech translation sessions.

Audio is represented as a word-level timed transcript rather than waveforms;
all timing is in seconds from stream start, stored as float64. Equality
comparisons on times use a 1e-6 tolerance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

TIME_EPS = 1e-6

WHITESPACE = "whitespace"
PER_CHARACTER = "per_character"


class ValidationError(ValueError):
    """Raised when input data violates a structural invariant."""


@dataclass(frozen=True)
class TimedToken:
    """A single spoken word with its time span."""

    text: str
    start_s: float
    end_s: float

    def to_dict(self) -> dict:
        return {"text": self.text, "start_s": self.start_s, "end_s": self.end_s}

    @classmethod
    def from_dict(cls, d: dict) -> "TimedToken":
        return cls(text=d["text"], start_s=d["start_s"], end_s=d["end_s"])


@dataclass(frozen=True)
class TimedTranscript:
    """Ordered, non-overlapping timed tokens standing in for the audio stream."""

    lang: str
    tokens: tuple[TimedToken, ...]
    duration_s: float

    def __init__(self, lang: str, tokens: Iterable[TimedToken], duration_s: float):
        object.__setattr__(self, "lang", lang)
        object.__setattr__(self, "tokens", tuple(tokens))
        object.__setattr__(self, "duration_s", float(duration_s))


@dataclass(frozen=True)
class SemanticChunk:
    """Source span [start_s, end_s) paired with its committed translation."""

    start_s: float
    end_s: float
    source_text: str
    target_text: str

    def to_dict(self) -> dict:
        return {
            "start_s": self.start_s,
            "end_s": self.end_s,
            "source_text": self.source_text,
            "target_text": self.target_text,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SemanticChunk":
        return cls(
            start_s=d["start_s"],
            end_s=d["end_s"],
            source_text=d["source_text"],
            target_text=d["target_text"],
        )


@dataclass(frozen=True)
class StreamingSample:
    """One long-speech sample: transcript, semantic chunks, optional reference."""

    id: str
    source: TimedTranscript
    chunks: tuple[SemanticChunk, ...]
    reference_translation: str | None = None
    domain_tag: str | None = None

    def __init__(
        self,
        id: str,
        source: TimedTranscript,
        chunks: Iterable[SemanticChunk],
        reference_translation: str | None = None,
        domain_tag: str | None = None,
    ):
        object.__setattr__(self, "id", id)
        object.__setattr__(self, "source", source)
        object.__setattr__(self, "chunks", tuple(chunks))
        object.__setattr__(self, "reference_translation", reference_translation)
        object.__setattr__(self, "domain_tag", domain_tag)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "lang": self.source.lang,
            "duration_s": self.source.duration_s,
            "tokens": [t.to_dict() for t in self.source.tokens],
            "chunks": [c.to_dict() for c in self.chunks],
            "reference_translation": self.reference_translation,
            "domain_tag": self.domain_tag,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StreamingSample":
        source = TimedTranscript(
            lang=d["lang"],
            tokens=[TimedToken.from_dict(t) for t in d["tokens"]],
            duration_s=d["duration_s"],
        )
        return cls(
            id=d["id"],
            source=source,
            chunks=[SemanticChunk.from_dict(c) for c in d["chunks"]],
            reference_translation=d.get("reference_translation"),
            domain_tag=d.get("domain_tag"),
        )


@dataclass(frozen=True)
class KnowledgeItem:
    """Terminology entry: a key that may appear in speech and its value text.

    The value may be the key itself, a paired translation, or an explanation.
    """

    key: str
    value: str


@dataclass(frozen=True)
class LanguageTokenization:
    """Target-side token counting rule used by latency metrics."""

    mode: str = WHITESPACE  # "whitespace" or "per_character"

    def __post_init__(self):
        if self.mode not in (WHITESPACE, PER_CHARACTER):
            raise ValueError(f"unknown tokenization mode {self.mode!r}")

    @classmethod
    def for_language(cls, lang: str) -> "LanguageTokenization":
        # Chinese targets count characters; everything else counts
        # whitespace-separated words. Callers may override.
        if lang.lower().startswith("zh"):
            return cls(PER_CHARACTER)
        return cls(WHITESPACE)

    @property
    def joiner(self) -> str:
        return "" if self.mode == PER_CHARACTER else " "


def tokenize_target(text: str, tok: LanguageTokenization) -> list[str]:
    """Split target text into the units counted by the latency metrics."""
    if tok.mode == WHITESPACE:
        return text.split()
    return [ch for ch in text if not ch.isspace()]


def validate_sample(sample: StreamingSample) -> list[str]:
    """Return every invariant violation in the sample; empty means valid."""
    violations: list[str] = []
    tokens = sample.source.tokens
    duration = sample.source.duration_s

    for i, t in enumerate(tokens):
        if not t.text:
            violations.append(f"token {i} has empty text")
        if t.start_s < 0:
            violations.append(f"token {i} start {t.start_s} < 0")
        if t.end_s < t.start_s:
            violations.append(f"token {i} end {t.end_s} < start {t.start_s}")
    for i in range(len(tokens) - 1):
        if tokens[i].end_s > tokens[i + 1].start_s + TIME_EPS:
            violations.append(
                f"token {i} end {tokens[i].end_s} overlaps token {i + 1} "
                f"start {tokens[i + 1].start_s}"
            )
    if tokens and duration < tokens[-1].end_s - TIME_EPS:
        violations.append(
            f"duration {duration} < last token end {tokens[-1].end_s}"
        )

    chunks = sample.chunks
    for j, c in enumerate(chunks):
        if not c.start_s < c.end_s:
            violations.append(f"chunk {j} start {c.start_s} >= end {c.end_s}")
        if not c.target_text:
            violations.append(f"chunk {j} has empty target_text")
        if c.start_s < -TIME_EPS or c.end_s > duration + TIME_EPS:
            violations.append(f"chunk {j} span outside [0, {duration}]")
    for j in range(len(chunks) - 1):
        if abs(chunks[j + 1].start_s - chunks[j].end_s) > TIME_EPS:
            violations.append(
                f"chunk {j + 1} start {chunks[j + 1].start_s} != "
                f"chunk {j} end {chunks[j].end_s}"
            )
    return violations


def sample_to_json(sample: StreamingSample) -> str:
    """One JSONL line for a sample; stable field order, UTF-8 text kept raw."""
    return json.dumps(sample.to_dict(), ensure_ascii=False)


def sample_from_json(line: str) -> StreamingSample:
    return StreamingSample.from_dict(json.loads(line))


def load_samples(path: str) -> list[StreamingSample]:
    """Read a JSONL sample file, skipping blank lines."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                samples.append(sample_from_json(line))
            except (KeyError, json.JSONDecodeError) as e:
                raise ValidationError(f"{path}:{lineno}: bad sample record: {e}") from e
    return samples


def dump_samples(samples: Iterable[StreamingSample]) -> Iterator[str]:
    for s in samples:
        yield sample_to_json(s)

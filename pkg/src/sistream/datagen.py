"""Construction of streaming translation data.

Three stages: rule-based segmentation of a transcript into semantic chunks,
greedy alignment of chunk texts to token time spans, and generation of
random-prefix training pairs (prefix time, translations due by then, cutoff).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import SemanticChunk, StreamingSample, TimedTranscript, ValidationError

DEFAULT_BOUNDARY_PUNCTUATION = "。？！?!.,，；;"

# Which chunks count as complete at prefix time t: "end" requires the chunk's
# audio to have finished (end_s <= t), "start" only that it began (start_s < t).
COMPLETE_BY_END = "end"
COMPLETE_BY_START = "start"


@dataclass(frozen=True)
class SegmentationRules:
    """Syntactic-boundary heuristics: pauses, punctuation, and a length cap."""

    pause_gap_s: float = 0.5
    boundary_punctuation: str = DEFAULT_BOUNDARY_PUNCTUATION
    max_chunk_tokens: int = 30

    def __post_init__(self):
        if self.pause_gap_s <= 0:
            raise ValueError("pause_gap_s must be positive")
        if self.max_chunk_tokens < 1:
            raise ValueError("max_chunk_tokens must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentationRules":
        return cls(
            pause_gap_s=d.get("pause_gap_s", 0.5),
            boundary_punctuation=d.get("boundary_punctuation", DEFAULT_BOUNDARY_PUNCTUATION),
            max_chunk_tokens=d.get("max_chunk_tokens", 30),
        )


@dataclass(frozen=True)
class PrefixPair:
    """Expected engine output for a randomly cut input prefix.

    expected_outputs holds the targets of every chunk complete by
    prefix_end_s; expected_cutoff_s is the end of the last such chunk
    (0.0 when none is complete yet).
    """

    prefix_end_s: float
    expected_outputs: tuple[str, ...]
    expected_cutoff_s: float

    def __init__(self, prefix_end_s: float, expected_outputs, expected_cutoff_s: float):
        object.__setattr__(self, "prefix_end_s", prefix_end_s)
        object.__setattr__(self, "expected_outputs", tuple(expected_outputs))
        object.__setattr__(self, "expected_cutoff_s", expected_cutoff_s)

    def to_dict(self, sample_id: str) -> dict:
        return {
            "sample_id": sample_id,
            "prefix_end_s": self.prefix_end_s,
            "expected_outputs": list(self.expected_outputs),
            "expected_cutoff_s": self.expected_cutoff_s,
        }


def segment_transcript(
    transcript: TimedTranscript, rules: SegmentationRules
) -> list[float]:
    """Place chunk boundaries after pauses, boundary punctuation, or length caps.

    Returns strictly increasing boundary times; the last one is always the
    transcript duration. Boundary time is the midpoint of the inter-token gap
    (the token end when there is no gap).
    """
    tokens = transcript.tokens
    duration = transcript.duration_s
    if not tokens:
        return [duration]

    boundaries: list[float] = []
    chunk_len = 0
    for i, tok in enumerate(tokens):
        chunk_len += 1
        if i == len(tokens) - 1:
            break
        gap = tokens[i + 1].start_s - tok.end_s
        pause = gap >= rules.pause_gap_s
        punct = bool(tok.text) and tok.text[-1] in rules.boundary_punctuation
        full = chunk_len >= rules.max_chunk_tokens
        if pause or punct or full:
            t = tok.end_s + gap / 2.0
            if not boundaries or t > boundaries[-1]:
                boundaries.append(t)
                chunk_len = 0
    if not boundaries or duration > boundaries[-1]:
        boundaries.append(duration)
    return boundaries


def _strip_ws(text: str) -> str:
    return "".join(text.split())


def align_chunks(
    transcript: TimedTranscript, chunk_source_texts: list[str]
) -> list[tuple[float, float]]:
    """Assign tokens to chunk texts left to right and return chunk time spans.

    Chunk texts must concatenate to the transcript token texts in order,
    ignoring whitespace. Spans tile [first token start, duration]: each
    interior span ends at its last token's end, the final span at duration.
    """
    tokens = transcript.tokens
    if not tokens:
        raise ValidationError("cannot align chunks to an empty transcript")
    spans: list[tuple[float, float]] = []
    ti = 0
    span_start = tokens[0].start_s
    for ci, chunk_text in enumerate(chunk_source_texts):
        want = _strip_ws(chunk_text)
        got = ""
        last_end = None
        while len(got) < len(want):
            if ti >= len(tokens):
                raise ValidationError(
                    f"chunk {ci} text {chunk_text!r} extends past the last token"
                )
            piece = _strip_ws(tokens[ti].text)
            if want[len(got) : len(got) + len(piece)] != piece:
                raise ValidationError(
                    f"chunk {ci} diverges from transcript at token {ti} "
                    f"({tokens[ti].text!r})"
                )
            got += piece
            last_end = tokens[ti].end_s
            ti += 1
        if last_end is None:
            raise ValidationError(f"chunk {ci} is empty")
        spans.append((span_start, last_end))
        span_start = last_end
    if ti != len(tokens):
        raise ValidationError(
            f"chunk texts cover only {ti} of {len(tokens)} tokens "
            f"(first uncovered: {tokens[ti].text!r})"
        )
    # Final span absorbs trailing silence up to the end of the stream.
    first_start, _ = spans[-1]
    spans[-1] = (first_start, transcript.duration_s)
    return spans


def complete_outputs_at(
    sample: StreamingSample, t: float, complete_rule: str = COMPLETE_BY_END
) -> tuple[list[str], float]:
    """Targets of all chunks complete at prefix time t, plus the cutoff."""
    outputs: list[str] = []
    cutoff = 0.0
    for chunk in sample.chunks:
        if complete_rule == COMPLETE_BY_END:
            complete = chunk.end_s <= t
            marker = chunk.end_s
        elif complete_rule == COMPLETE_BY_START:
            complete = chunk.start_s < t
            marker = chunk.start_s
        else:
            raise ValueError(f"unknown complete_rule {complete_rule!r}")
        if complete:
            outputs.append(chunk.target_text)
            cutoff = max(cutoff, marker)
    return outputs, cutoff


def make_prefix_pairs(
    sample: StreamingSample,
    n: int,
    seed: int,
    complete_rule: str = COMPLETE_BY_END,
) -> list[PrefixPair]:
    """Draw n prefix times uniformly from (0, duration] and pair each with
    the outputs due by then. Deterministic for a fixed seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    duration = sample.source.duration_s
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        # uniform over (0, duration]: flip [0, duration) around the endpoint
        t = duration - rng.uniform(0.0, duration)
        outputs, cutoff = complete_outputs_at(sample, t, complete_rule)
        pairs.append(PrefixPair(t, outputs, cutoff))
    return pairs


def sample_from_segmentation(
    sample_id: str,
    transcript: TimedTranscript,
    rules: SegmentationRules,
    target_texts: list[str] | None = None,
) -> StreamingSample:
    """Segment a transcript and build a StreamingSample whose chunks tile it.

    Without target_texts the source text of each chunk doubles as its target
    (placeholder until a translation backend fills them in).
    """
    boundaries = segment_transcript(transcript, rules)
    tokens = list(transcript.tokens)
    chunk_tokens: list[list] = [[] for _ in boundaries]
    bi = 0
    for tok in tokens:
        while bi < len(boundaries) - 1 and tok.end_s > boundaries[bi]:
            bi += 1
        chunk_tokens[bi].append(tok)
    chunks = []
    prev = tokens[0].start_s if tokens else 0.0
    for j, (boundary, toks) in enumerate(zip(boundaries, chunk_tokens)):
        if not toks:
            continue
        source_text = " ".join(t.text for t in toks)
        target = target_texts[j] if target_texts else source_text
        chunks.append(
            SemanticChunk(
                start_s=prev, end_s=boundary, source_text=source_text, target_text=target
            )
        )
        prev = boundary
    return StreamingSample(id=sample_id, source=transcript, chunks=chunks)


def dump_prefix_pairs(sample_id: str, pairs: list[PrefixPair]) -> list[str]:
    return [json.dumps(p.to_dict(sample_id), ensure_ascii=False) for p in pairs]

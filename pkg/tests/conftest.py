import numpy as np
import pytest

from sistream.core import SemanticChunk, StreamingSample, TimedToken, TimedTranscript


def make_tokens(spans, words=None):
    """spans: list of (start, end); words default to w0, w1, ..."""
    return [
        TimedToken(text=(words[i] if words else f"w{i}"), start_s=s, end_s=e)
        for i, (s, e) in enumerate(spans)
    ]


def three_chunk_sample(sample_id="s1", duration=10.0):
    """Chunks end at 3, 6, 9 with tokens inside each; 1s of trailing silence."""
    tokens = make_tokens(
        [
            (0.0, 0.8), (1.0, 1.8), (2.0, 2.9),
            (3.0, 3.9), (4.0, 4.9), (5.0, 5.9),
            (6.0, 6.9), (7.0, 7.9), (8.0, 8.9),
        ]
    )
    transcript = TimedTranscript(lang="en", tokens=tokens, duration_s=duration)
    chunks = [
        SemanticChunk(0.0, 3.0, "w0 w1 w2", "y1"),
        SemanticChunk(3.0, 6.0, "w3 w4 w5", "y2"),
        SemanticChunk(6.0, 9.0, "w6 w7 w8", "y3"),
    ]
    return StreamingSample(id=sample_id, source=transcript, chunks=chunks)


def random_sample(rng: np.random.Generator, sample_id: str, n_chunks=None):
    """A valid sample with n_chunks chunks, random token layout."""
    n_chunks = n_chunks or int(rng.integers(2, 21))
    tokens = []
    chunks = []
    t = 0.0
    token_idx = 0
    for j in range(n_chunks):
        chunk_start = t
        chunk_tokens = int(rng.integers(1, 5))
        texts = []
        for _ in range(chunk_tokens):
            t += float(rng.uniform(0.05, 0.4))  # leading gap
            dur = float(rng.uniform(0.1, 0.8))
            tokens.append(TimedToken(f"w{token_idx}", round(t, 6), round(t + dur, 6)))
            texts.append(f"w{token_idx}")
            token_idx += 1
            t += dur
        chunks.append(
            SemanticChunk(
                start_s=chunk_start,
                end_s=round(t, 6),
                source_text=" ".join(texts),
                target_text=f"t{j}",
            )
        )
        t = chunks[-1].end_s
    duration = round(t + float(rng.uniform(0.0, 1.0)), 6)
    transcript = TimedTranscript(lang="en", tokens=tokens, duration_s=duration)
    # final chunk absorbs trailing silence so chunks tile [0, duration]
    last = chunks[-1]
    chunks[-1] = SemanticChunk(last.start_s, duration, last.source_text, last.target_text)
    return StreamingSample(id=sample_id, source=transcript, chunks=chunks)


@pytest.fixture
def sample3():
    return three_chunk_sample()

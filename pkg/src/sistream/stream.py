"""Virtual-time simulation of speech arrival.

Each round exposes a fixed-growth window over the timed transcript, running
from the committed cutoff (exclusive) to the current stream time (inclusive).
A token is "heard" only once it has finished, so a token belongs to a window
iff it ends by the window end and starts after the window start.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

from .core import TIME_EPS, StreamingSample, TimedToken, ValidationError, validate_sample

DEFAULT_STEP_S = 1.0


@dataclass
class StreamCursor:
    """Mutable position of one session inside a sample's stream."""

    sample: StreamingSample
    step_s: float = DEFAULT_STEP_S
    now_s: float = 0.0
    committed_cutoff_s: float = 0.0
    _finished: bool = field(default=False, repr=False)

    @property
    def duration_s(self) -> float:
        return self.sample.source.duration_s


@dataclass(frozen=True)
class StreamWindow:
    """Tokens fully contained in (window_start_s, window_end_s]."""

    tokens: tuple[TimedToken, ...]
    window_start_s: float
    window_end_s: float
    is_final: bool


def open_stream(sample: StreamingSample, step_s: float = DEFAULT_STEP_S) -> StreamCursor:
    """Start a stream at t=0 over a validated sample."""
    if step_s <= 0:
        raise ValueError("step must be positive")
    violations = validate_sample(sample)
    if violations:
        raise ValidationError(
            f"sample {sample.id!r} is invalid: {violations[0]}"
            + (f" (+{len(violations) - 1} more)" if len(violations) > 1 else "")
        )
    return StreamCursor(sample=sample, step_s=step_s)


def _contained(token: TimedToken, start_s: float, end_s: float) -> bool:
    return token.end_s <= end_s + TIME_EPS and token.start_s > start_s - TIME_EPS


def advance(cursor: StreamCursor) -> StreamWindow | None:
    """Grow the stream by one step and return the audible window.

    Returns None once the stream has already delivered its final window.
    """
    if cursor._finished:
        return None
    cursor.now_s = min(cursor.now_s + cursor.step_s, cursor.duration_s)
    is_final = cursor.now_s >= cursor.duration_s - TIME_EPS
    if is_final:
        cursor.now_s = cursor.duration_s
        cursor._finished = True
    start = cursor.committed_cutoff_s
    tokens = tuple(
        t for t in cursor.sample.source.tokens if _contained(t, start, cursor.now_s)
    )
    return StreamWindow(
        tokens=tokens,
        window_start_s=start,
        window_end_s=cursor.now_s,
        is_final=is_final,
    )


def set_cutoff(cursor: StreamCursor, t_cut: float) -> StreamCursor:
    """Commit the stream up to t_cut. Cutoffs only move forward."""
    if t_cut < cursor.committed_cutoff_s - TIME_EPS or t_cut > cursor.now_s + TIME_EPS:
        raise ValueError(
            f"cutoff must be within [prev_cutoff, now] = "
            f"[{cursor.committed_cutoff_s}, {cursor.now_s}], got {t_cut}"
        )
    cursor.committed_cutoff_s = max(cursor.committed_cutoff_s, min(t_cut, cursor.now_s))
    return cursor


def stream_realtime(cursor: StreamCursor, sleep=_time.sleep):
    """Yield windows at wall-clock pace; demo helper, excluded from tests."""
    while True:
        window = advance(cursor)
        if window is None:
            return
        sleep(cursor.step_s)
        yield window

"""Latency and quality metrics over determined translations.

Lagging metrics work on commit times d_1..d_n: the stream time at which each
final output token became definite (never rewritten afterwards). Rewrites
appear only in ingested logs from external systems; the engine in this
package emits append-only logs, for which commit times equal append times.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .core import LanguageTokenization, tokenize_target

APPEND = "append"
REWRITE_FROM = "rewrite_from"


class MalformedLogError(ValueError):
    """Raised when an emission log cannot be replayed."""


@dataclass(frozen=True)
class EmissionEvent:
    """One timestamped output event: append text, or rewrite from a token index."""

    time_s: float
    kind: str  # "append" or "rewrite_from"
    text: str
    rewrite_index: int | None = None

    def to_dict(self) -> dict:
        d = {"time_s": self.time_s, "kind": self.kind, "text": self.text}
        if self.kind == REWRITE_FROM:
            d["rewrite_index"] = self.rewrite_index
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EmissionEvent":
        return cls(
            time_s=d["time_s"],
            kind=d["kind"],
            text=d["text"],
            rewrite_index=d.get("rewrite_index"),
        )


@dataclass(frozen=True)
class EmissionLog:
    """Ordered emission events plus the token-counting rule for the target."""

    events: tuple[EmissionEvent, ...]
    tok: LanguageTokenization

    def __init__(self, events, tok: LanguageTokenization):
        object.__setattr__(self, "events", tuple(events))
        object.__setattr__(self, "tok", tok)

    def to_jsonl(self) -> list[str]:
        return [json.dumps(e.to_dict(), ensure_ascii=False) for e in self.events]


@dataclass(frozen=True)
class FragmentAnnotation:
    """A human judgment of one semantic fragment of the translation."""

    fragment_text: str
    valid: bool
    failure_kind: str | None = None  # "correctness" or "expressiveness"

    def __post_init__(self):
        if self.valid and self.failure_kind is not None:
            raise ValueError("valid fragment must not carry a failure_kind")
        if not self.valid and self.failure_kind not in ("correctness", "expressiveness"):
            raise ValueError("invalid fragment requires failure_kind")


@dataclass(frozen=True)
class AnnotationSet:
    """All fragment judgments of one session by one annotator."""

    session_id: str
    fragments: tuple[FragmentAnnotation, ...]
    annotator_id: str

    def __init__(self, session_id: str, fragments, annotator_id: str):
        object.__setattr__(self, "session_id", session_id)
        object.__setattr__(self, "fragments", tuple(fragments))
        object.__setattr__(self, "annotator_id", annotator_id)

    def to_dict(self) -> dict:
        frags = []
        for f in self.fragments:
            d = {"fragment_text": f.fragment_text, "valid": f.valid}
            if f.failure_kind is not None:
                d["failure_kind"] = f.failure_kind
            frags.append(d)
        return {
            "session_id": self.session_id,
            "annotator_id": self.annotator_id,
            "fragments": frags,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnnotationSet":
        return cls(
            session_id=d["session_id"],
            annotator_id=d["annotator_id"],
            fragments=[
                FragmentAnnotation(
                    fragment_text=f["fragment_text"],
                    valid=f["valid"],
                    failure_kind=f.get("failure_kind"),
                )
                for f in d["fragments"]
            ],
        )


@dataclass(frozen=True)
class LatencyReport:
    al_s: float
    laal_s: float | None
    flal_s: float
    tau: int  # tokens included in the lagging averages
    n_hyp: int
    n_ref: int | None
    tau_fallback: bool  # no commit at/after source end; tau fell back to n_hyp

    def to_dict(self) -> dict:
        return {
            "al_s": self.al_s,
            "laal_s": self.laal_s,
            "flal_s": self.flal_s,
            "tau": self.tau,
            "n_hyp": self.n_hyp,
            "n_ref": self.n_ref,
            "tau_fallback": self.tau_fallback,
        }


def replay(log: EmissionLog) -> list[tuple[float, list[str]]]:
    """Apply events in order, returning (time, token snapshot) after each."""
    snapshots: list[tuple[float, list[str]]] = []
    tokens: list[str] = []
    last_time = -math.inf
    for i, e in enumerate(log.events):
        if e.time_s < last_time:
            raise MalformedLogError(f"event {i} time {e.time_s} decreases")
        last_time = e.time_s
        new = tokenize_target(e.text, log.tok)
        if e.kind == APPEND:
            tokens = tokens + new
        elif e.kind == REWRITE_FROM:
            idx = e.rewrite_index
            if idx is None or idx < 0 or idx > len(tokens):
                raise MalformedLogError(
                    f"event {i} rewrites from {idx} but only {len(tokens)} tokens exist"
                )
            tokens = tokens[:idx] + new
        else:
            raise MalformedLogError(f"event {i} has unknown kind {e.kind!r}")
        snapshots.append((e.time_s, tokens))
    return snapshots


def final_tokens(log: EmissionLog) -> list[str]:
    snapshots = replay(log)
    return snapshots[-1][1] if snapshots else []


def commit_times(log: EmissionLog) -> list[float]:
    """Per final token, the earliest time after which it (and every token
    before it) never changed again."""
    snapshots = replay(log)
    if not snapshots:
        return []
    final = snapshots[-1][1]
    n = len(final)
    # length of the final-prefix each snapshot already agrees with
    match_lens = []
    for _, toks in snapshots:
        m = 0
        while m < min(len(toks), n) and toks[m] == final[m]:
            m += 1
        match_lens.append(m)
    # token i commits at the first snapshot from which agreement never drops
    suffix_min = [0] * len(snapshots)
    running = math.inf
    for k in range(len(snapshots) - 1, -1, -1):
        running = min(running, match_lens[k])
        suffix_min[k] = running
    times: list[float] = []
    k = 0
    for i in range(n):
        while suffix_min[k] <= i:
            k += 1
        times.append(snapshots[k][0])
    # guard: nondecreasing by construction, enforce anyway
    for i in range(1, n):
        times[i] = max(times[i], times[i - 1])
    return times


def _lagging(d: list[float], T: float, denom: int) -> tuple[float, int, bool]:
    if not d:
        raise ValueError("no output: empty commit-time list")
    if T <= 0:
        raise ValueError("source duration must be positive")
    n = len(d)
    tau = next((i + 1 for i in range(n) if d[i] >= T), None)
    fallback = tau is None
    if fallback:
        tau = n
    rate = T / denom
    total = sum(d[i] - i * rate for i in range(tau))
    return total / tau, tau, fallback


def average_lagging(d: list[float], T: float, n_hyp: int) -> float:
    """Mean gap between commit times and an ideal uniform-rate emitter,
    summed up to the first commit at or after the source end."""
    if n_hyp != len(d):
        raise ValueError(f"n_hyp {n_hyp} != len(d) {len(d)}")
    value, _, _ = _lagging(d, T, n_hyp)
    return value


def laal(d: list[float], T: float, n_hyp: int, n_ref: int) -> float:
    """Average lagging with the rate denominator max(n_hyp, n_ref), so
    over-generating short tokens cannot be rewarded."""
    if n_hyp != len(d):
        raise ValueError(f"n_hyp {n_hyp} != len(d) {len(d)}")
    if n_ref < 1:
        raise ValueError("n_ref must be >= 1")
    value, _, _ = _lagging(d, T, max(n_hyp, n_ref))
    return value


def flal(d: list[float]) -> float:
    """Stream time of the first determined output token."""
    if not d:
        raise ValueError("no output: empty commit-time list")
    return d[0]


def latency_report(
    log: EmissionLog, T: float, reference_translation: str | None = None
) -> LatencyReport:
    """Compute AL, LAAL, and FLAL for one session's emission log."""
    d = commit_times(log)
    if not d:
        raise ValueError("no output: emission log is empty")
    n_hyp = len(d)
    al_value, tau, fallback = _lagging(d, T, n_hyp)
    n_ref = None
    laal_value = None
    if reference_translation is not None:
        n_ref = len(tokenize_target(reference_translation, log.tok))
        if n_ref >= 1:
            laal_value = laal(d, T, n_hyp, n_ref)
    return LatencyReport(
        al_s=al_value,
        laal_s=laal_value,
        flal_s=d[0],
        tau=tau,
        n_hyp=n_hyp,
        n_ref=n_ref,
        tau_fallback=fallback,
    )


def vip(ann: AnnotationSet) -> float:
    """Valid information proportion: percent of fragments judged valid."""
    total = len(ann.fragments)
    if total == 0:
        raise ValueError("annotation set has zero fragments")
    valid = sum(1 for f in ann.fragments if f.valid)
    return 100.0 * valid / total


def check_annotation_coverage(ann: AnnotationSet, final_translation: str) -> list[str]:
    """Verify fragments concatenate (whitespace-insensitive) to the translation."""
    joined = "".join("".join(f.fragment_text.split()) for f in ann.fragments)
    target = "".join(final_translation.split())
    if joined != target:
        return [
            f"fragments concatenate to {len(joined)} chars, "
            f"translation has {len(target)}; texts differ"
        ]
    return []


def kendall_tau_b(xs: list[float], ys: list[float]) -> float:
    """Kendall's tau-b over all pairs, with tie corrections on each side."""
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    n = len(xs)
    if n < 2:
        raise ValueError("need at least two observations")
    if all(x == xs[0] for x in xs) or all(y == ys[0] for y in ys):
        raise ValueError("tau-b undefined for a constant series")
    concordant = discordant = ties_x = ties_y = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = xs[i] - xs[j]
            dy = ys[i] - ys[j]
            if dx == 0 and dy == 0:
                continue
            if dx == 0:
                ties_x += 1
            elif dy == 0:
                ties_y += 1
            elif (dx > 0) == (dy > 0):
                concordant += 1
            else:
                discordant += 1
    cd = concordant + discordant
    return (concordant - discordant) / math.sqrt((cd + ties_x) * (cd + ties_y))


def load_emission_log(path: str, tok: LanguageTokenization) -> EmissionLog:
    events = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(EmissionEvent.from_dict(json.loads(line)))
    return EmissionLog(events=events, tok=tok)

#!/usr/bin/env python3
"""Walk through one interpretation session round by round.

The stream grows by a fixed step each round. The backend either commits a
translation with a cutoff timestamp (the stream then resumes after the
cutoff) or waits. Output is append-only: committed text never changes.
"""

import sys

sys.path.insert(0, "demos")

from demo_data import lecture_sample

from sistream.agent import SessionConfig, run_session
from sistream.backends import OracleBackend, PauseBackend
from sistream.core import PER_CHARACTER, LanguageTokenization, validate_sample

sample = lecture_sample()
assert validate_sample(sample) == []

cfg = SessionConfig(step_s=1.0, target_tok=LanguageTokenization(PER_CHARACTER))

print("=== oracle backend (ground-truth read-write policy) ===")
result = run_session(sample, OracleBackend(sample.chunks, joiner=""), cfg=cfg)
print(f"rounds run: {result.rounds_run} (one per second of a 20s stream)")
for rec in result.memory.records:
    print(f"  round {rec.round_index:2d}  cutoff {rec.cutoff_s:5.2f}s  -> {rec.translation}")
print(f"final translation: {result.final_translation}")
print()

print("emission log (stream time of each committed append):")
for event in result.emission_log.events:
    print(f"  t={event.time_s:5.2f}s  {event.text}")
print()

print("=== pause-heuristic baseline (word-by-word at silences) ===")
lexicon = {"ising": "伊辛", "model.": "模型。", "spins": "自旋", "lattice.": "晶格。"}
result2 = run_session(sample, PauseBackend(lexicon, gap_threshold_s=0.8), cfg=cfg)
for rec in result2.memory.records:
    print(f"  round {rec.round_index:2d}  cutoff {rec.cutoff_s:5.2f}s  -> {rec.translation}")
print()
print("unknown words pass through in brackets; the quality gap against the")
print("oracle is what the latency/quality metrics in demo 04 make visible.")

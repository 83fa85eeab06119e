#!/usr/bin/env python3
"""Build streaming training data from a timed transcript.

Three steps: segment the transcript at syntactic boundaries (pauses,
punctuation, length caps), align chunk texts to token time spans, then
sample random prefix times and record which translations are due by each
one. The pairs teach a model when to commit and when to keep listening.
"""

import sys

sys.path.insert(0, "demos")

from demo_data import lecture_sample

from sistream.datagen import (
    SegmentationRules,
    align_chunks,
    dump_prefix_pairs,
    make_prefix_pairs,
    segment_transcript,
)

sample = lecture_sample()
transcript = sample.source

print("=== rule-based segmentation ===")
rules = SegmentationRules(pause_gap_s=0.5, max_chunk_tokens=30)
boundaries = segment_transcript(transcript, rules)
print(f"boundary times: {boundaries}")
print("(sentence-final punctuation and >0.5s pauses both fire here;")
print(" boundaries sit at gap midpoints, the last one at the duration)")
print()

print("=== chunk-to-time alignment ===")
spans = align_chunks(transcript, [c.source_text for c in sample.chunks])
for (start, end), chunk in zip(spans, sample.chunks):
    print(f"  [{start:5.2f}, {end:5.2f})  {chunk.source_text[:40]}...")
print()

print("=== random-prefix pairs ===")
pairs = make_prefix_pairs(sample, n=6, seed=11)
for p in sorted(pairs, key=lambda p: p.prefix_end_s):
    due = len(p.expected_outputs)
    print(f"  heard up to {p.prefix_end_s:5.2f}s -> {due} chunk(s) due, "
          f"cutoff {p.expected_cutoff_s:5.2f}s")
print()
print("as JSONL (the gen-data subcommand writes exactly these records):")
for line in dump_prefix_pairs(sample.id, pairs[:2]):
    print(" ", line)

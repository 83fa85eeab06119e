"""Shared toy data for the demo scripts: a short spoken-lecture sample."""

from sistream.core import SemanticChunk, StreamingSample, TimedToken, TimedTranscript

# A 20-second talk snippet. Word timings are hand-written but realistic:
# small gaps inside phrases, a noticeable pause after each sentence.
WORDS = [
    # sentence 1: 0.0 - 5.2
    ("today", 0.0, 0.4), ("we", 0.5, 0.65), ("look", 0.7, 1.0), ("at", 1.05, 1.15),
    ("the", 1.2, 1.3), ("ising", 1.4, 1.9), ("model.", 1.95, 2.5),
    # sentence 2: 3.4 - 10.8
    ("it", 3.4, 3.5), ("describes", 3.55, 4.2), ("magnetic", 4.3, 4.9),
    ("spins", 5.0, 5.5), ("on", 5.6, 5.7), ("a", 5.75, 5.8), ("lattice.", 5.9, 6.6),
    # sentence 3: 7.8 - 13.0
    ("each", 7.8, 8.1), ("spin", 8.2, 8.6), ("talks", 8.7, 9.1), ("to", 9.15, 9.25),
    ("its", 9.3, 9.5), ("neighbors.", 9.6, 10.4),
    # sentence 4: 11.6 - 19.0
    ("at", 11.6, 11.7), ("low", 11.8, 12.1), ("temperature", 12.2, 13.0),
    ("the", 13.1, 13.2), ("spins", 13.3, 13.8), ("align", 13.9, 14.5),
    ("spontaneously.", 14.6, 15.6),
]

TRANSLATIONS = [
    "今天我们来看伊辛模型。",
    "它描述晶格上的磁自旋。",
    "每个自旋与其近邻相互作用。",
    "在低温下自旋会自发对齐。",
]

SENTENCE_ENDS = [2.95, 7.2, 11.0, 20.0]  # pause midpoints, last = duration


def lecture_sample() -> StreamingSample:
    tokens = [TimedToken(w, s, e) for w, s, e in WORDS]
    transcript = TimedTranscript(lang="en", tokens=tokens, duration_s=20.0)
    chunks = []
    start = 0.0
    token_iter = iter(tokens)
    remaining = list(tokens)
    for end, target in zip(SENTENCE_ENDS, TRANSLATIONS):
        inside = [t for t in remaining if t.end_s <= end]
        remaining = [t for t in remaining if t.end_s > end]
        chunks.append(
            SemanticChunk(
                start_s=start,
                end_s=end,
                source_text=" ".join(t.text for t in inside),
                target_text=target,
            )
        )
        start = end
    return StreamingSample(
        id="lecture-ising",
        source=transcript,
        chunks=chunks,
        reference_translation="".join(TRANSLATIONS),
        domain_tag="science",
    )

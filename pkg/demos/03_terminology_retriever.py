#!/usr/bin/env python3
"""Train the attention-fusion terminology scorer and retrieve top-k items.

Keys and window tokens are hashed-n-gram embeddings. A key queries the
window through multi-head attention; mean-pooled attention output feeds a
logistic head that estimates the probability the key was spoken. Training
is plain mini-batch gradient descent on binary cross entropy.
"""

import numpy as np

from sistream.core import KnowledgeItem
from sistream.retriever import (
    FeatureConfig,
    KnowledgeBase,
    TerminologyRetriever,
    TrainExample,
    TrainHyper,
    eval_recall,
    featurize,
    init_params,
    score,
    train,
)

rng = np.random.default_rng(0)

# synthetic corpus: every window mentions exactly one of 60 technical terms
fillers = [f"word{i}" for i in range(40)]
keys = [f"term{i:02d}" for i in range(60)]
examples, windows = [], []
for i, key in enumerate(keys):
    window = [str(x) for x in rng.choice(fillers, size=6)] + [key]
    rng.shuffle(window)
    windows.append((window, [key]))
    examples.append(TrainExample(window, key, 1))
    for _ in range(5):  # negatives: keys spoken in other windows only
        j = int(rng.integers(0, len(keys) - 1))
        examples.append(TrainExample(window, keys[j if j < i else j + 1], 0))

cfg = FeatureConfig(dim=64, hash_buckets=4096, projection_seed=0)
result = train(init_params(cfg, seed=7, scale=0.3), examples,
               TrainHyper(lr=0.5, epochs=40, batch=16, seed=7))
print(f"trained {len(examples)} examples, final mean BCE {result.final_loss:.5f}")
print(f"epoch losses: {[round(x, 3) for x in result.epoch_losses[::8]]}")
print()

params = result.params
kb = KnowledgeBase([KnowledgeItem(k, f"translation of {k}") for k in keys])

window = windows[17][0]
print(f"window: {' '.join(window)}")
wv = featurize(window, cfg)
present = score(params, featurize("term17", cfg), wv)
absent = score(params, featurize("term03", cfg), wv)
print(f"p(term17 present) = {present:.4f}   p(term03 present) = {absent:.4f}")
print()

retriever = TerminologyRetriever(params, kb)
print("top-5 retrieved for that window:")
for item in retriever.retrieve(window, 5):
    print(f"  {item.key} -> {item.value}")
print()

recall = eval_recall(params, windows, kb, k=10)
print(f"recall@10 over all {len(windows)} windows: {recall:.3f}")

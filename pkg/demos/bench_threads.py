"""Time the pairwise forward pass across worker-thread counts.

The pairwise rounds multiply many independent chi x chi pairs, so slices can
be sharded across threads. Whether that wins wall-clock time depends on the
host (this prints measurements, it asserts nothing; on a single hardware
core the sharding only adds overhead).

Run: python3 demos/bench_threads.py
"""

import os
import time

import numpy as np

from mpsclassify import Strategy, encode_batch, forward_batch, init_model

print(f"host reports {os.cpu_count()} logical cpus")
rng = np.random.default_rng(0)
model = init_model(196, 10, 32, seed=0)
feats = encode_batch(model.feature_map, rng.random((50, 196)))

forward_batch(model, feats, Strategy.PAIRWISE)  # warm up

base = None
print(f"{'threads':>8} {'seconds':>9} {'speedup':>8}")
for threads in (1, 2, 4, 8):
    started = time.perf_counter()
    for _ in range(5):
        logits = forward_batch(model, feats, Strategy.PAIRWISE, threads=threads)
    elapsed = (time.perf_counter() - started) / 5
    if base is None:
        base = elapsed
        reference = logits
    print(f"{threads:>8} {elapsed:>9.4f} {base / elapsed:>7.2f}x")
    assert np.array_equal(logits, reference), "thread count changed the bits"
print("logits are bit-identical at every thread count")

"""
Robustness to corrupted stage-1 labels
======================================

Stage 1 is fed gold training labels, a fraction of which are flipped to
a random other class.  Self-training then runs as usual.  Roughly one
minute per corruption level.
"""

import numpy as np

from cosine_ws import TrainConfig, generate_benchmark, run
from cosine_ws.synthetic import SyntheticSpec

base = dict(T1=75, T2=400, T3=50, xi=0.6, lam=0.1, learning_rate=0.01, batch_size=32,
            init_scale=0.1, supervision="gold")
benchmarks = {seed: generate_benchmark(SyntheticSpec(seed=seed)) for seed in (1, 2, 3)}

print("ratio   init   final")
for ratio in (0.0, 0.1, 0.2, 0.3, 0.4, 0.5):
    init, final = [], []
    for seed, (ds, rules) in benchmarks.items():
        res = run(TrainConfig(**base, seed=seed, corruption_ratio=ratio), ds, rules)
        init.append(res.report["init"]["test"]["accuracy"])
        final.append(res.report["final"]["test"]["accuracy"])
    print(f"{ratio:.1f}   {100 * np.mean(init):5.2f}  {100 * np.mean(final):5.2f}")

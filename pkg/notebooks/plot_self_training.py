"""
Initialization then contrastive self-training
=============================================

Train on the default synthetic benchmark and watch test accuracy across
both stages.  One run takes a few seconds on a laptop CPU.
"""

from cosine_ws import TrainConfig, generate_benchmark, run
from cosine_ws.synthetic import SyntheticSpec

ds, rules = generate_benchmark(SyntheticSpec(seed=1))
config = TrainConfig(T1=75, T2=400, T3=50, xi=0.6, lam=0.1, learning_rate=0.01,
                     batch_size=32, init_scale=0.1, seed=1, eval_every=25)
result = run(config, ds, rules)

print(f"rule coverage {result.report['coverage']['coverage']:.3f}")
for rec in result.state.history:
    if rec["kind"] == "eval":
        print(f"stage {rec['stage']} step {rec['step']:4d}  test accuracy {rec['accuracy']:.3f}")

###############################################################################
# Loss terms of the self-training stage, averaged over each refresh
# period.  ``n_confident`` counts the batch members that pass the
# confidence threshold.

import numpy as np

steps = [r for r in result.state.history if r["kind"] == "step" and r["stage"] == 2
         and not r.get("skipped")]
for start in range(0, len(steps), config.T3 * 2):
    chunk = steps[start:start + config.T3 * 2]
    means = {k: np.mean([r[k] for r in chunk]) for k in ("L_c", "R1", "R2", "n_confident")}
    print(f"steps {chunk[0]['step']:4d}-{chunk[-1]['step']:4d}  "
          + "  ".join(f"{k} {v:.3f}" for k, v in means.items()))

print("init", result.report["init"]["test"]["accuracy"],
      "final", result.report["final"]["test"]["accuracy"])

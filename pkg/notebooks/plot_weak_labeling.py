"""
Weak labels from keyword and pattern rules
==========================================

Build a tiny rule set by hand, vote over a few sentences, then measure
coverage and precision on the synthetic benchmark.
"""

import numpy as np

from cosine_ws.dataset import parse_records
from cosine_ws.synthetic import SyntheticSpec, generate_benchmark
from cosine_ws.weak_rules import ABSTAIN, KEYWORD, PATTERN, LabelSpace, Rule, RuleSet, label_dataset

space = LabelSpace(("positive", "negative"))
rules = RuleSet(space, (
    Rule(KEYWORD, ("terrible", "awful"), 1),
    Rule(PATTERN, r"not recommend", 1),
    Rule(KEYWORD, ("great", "wonderful"), 0),
))

records = [
    {"id": "r1", "text": "a terrible movie", "gold": "negative"},
    {"id": "r2", "text": "I would not recommend it", "gold": "negative"},
    {"id": "r3", "text": "great cast, awful script", "gold": "negative"},
    {"id": "r4", "text": "a wonderful evening", "gold": "positive"},
    {"id": "r5", "text": "two hours long", "gold": "positive"},
]
ds, stats = label_dataset(rules, parse_records(records, space))
for s in ds:
    name = "ABSTAIN" if s.weak == ABSTAIN else space.classes[s.weak]
    print(f"{s.text!r:32} -> {name}")
# r3 is a one-one tie and r5 matches nothing: both abstain
print(f"coverage {stats.coverage:.2f}, precision {stats.precision:.2f}")

###############################################################################
# The synthetic benchmark wires a fraction of its keyword rules to the
# wrong class, so precision is tunable.

for target in (0.9, 0.75, 0.6):
    spec = SyntheticSpec(precision=target, seed=3)
    bench, bench_rules = generate_benchmark(spec)
    _, st = label_dataset(bench_rules, bench)
    hits = np.array(st.per_rule_hits)
    print(f"target precision {target:.2f}: measured {st.precision:.3f}, "
          f"coverage {st.coverage:.3f}, busiest rule fires {hits.max()} times")

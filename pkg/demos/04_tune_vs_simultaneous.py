"""
Tuning two families: one at a time or all together
===================================================

A network family and a nearest-neighbour family can be tuned separately and
their winners compared afterwards, or thrown into a single race. Both ways
share split seeds, so the comparison step reuses cross-validation results
from the tuning step.
"""

from cvrace import (RaceConfig, expand_grid, generate_synthetic, simultaneous_race,
                    tune_then_compare)
from cvrace.metrics import hits_metric

ds = generate_synthetic(n=400, d=4, active_rate=0.1, signal=2.0, seed=2)
nnet = expand_grid("nnet", {"size": [2, 4], "decay": [0.1, 0.01], "epochs": [100]})
knn = expand_grid("knn", {"k": [3, 6, 9, 12]})
cfg = RaceConfig(metric=hits_metric(40), blocking="actives_first", max_splits=8, v=5,
                 base_seed=100, threads=4)

res = tune_then_compare([nnet, knn], ds, cfg, labels=["nnet", "knn"])
for t in res.group_traces:
    print(f"{t.label:5s} winner {t.winner}, survivors per split {t.survival_sequence}")
print(f"final: {res.final.winner}")
print(f"fits: tuning {res.step1_fits}, comparison {res.step2_fits}, total {res.total_fits}")

sim = simultaneous_race(nnet + knn, ds, cfg)
print(f"\nsimultaneous winner {sim.winner}, survivors per split {sim.survival_sequence}")
print(f"fits: {sim.new_fits}")
print("surviving families:", sorted({sim.families[m] for m in sim.survivors}))

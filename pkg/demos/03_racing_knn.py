"""
Racing ten neighbourhood sizes
==============================

Instead of cross-validating every ``k`` on many splits, a race adds one
split at a time and drops the clearly inferior settings after each test.
The first test can also block on the individual actives, which gives the
test many more blocks than the single split it has seen.
"""

from dataclasses import replace

from cvrace import (ModelSpec, RaceConfig, exhaustive_means, fit_count, generate_synthetic,
                    race_algorithm1, race_algorithm2, race_algorithm3)
from cvrace.metrics import hits_metric

ds = generate_synthetic(n=500, d=5, active_rate=0.1, signal=3.0, seed=1)
specs = [ModelSpec("knn", {"k": k}) for k in range(1, 11)]
cfg = RaceConfig(metric=hits_metric(50), max_splits=20, v=10)


def show(name, trace):
    print(f"{name}: winner {trace.winner}, stop '{trace.stop_reason}' after "
          f"{trace.splits_used} splits, survivors per split {trace.survival_sequence}, "
          f"{fit_count(trace)} fits")


show("splits as blocks   ", race_algorithm1(specs, ds, cfg))
show("actives, then splits", race_algorithm2(specs, ds, cfg))

# With a practical margin p0 the race stops once no survivor could beat the
# leader by more than p0 hits.
for p0 in (0.5, 2.0):
    show(f"p0 = {p0:<15}", race_algorithm3(specs, ds, replace(cfg, p0=p0, blocking="actives_first")))

# For reference: every model on all 20 splits, no elimination.
means = exhaustive_means(specs, ds, cfg)
top = sorted(means, key=means.get, reverse=True)[:3]
print("exhaustive top three:", ", ".join(f"{m} {means[m]:.2f}" for m in top))
print(f"exhaustive cost: {fit_count([len(specs)] * cfg.max_splits, cfg.v)} fits")

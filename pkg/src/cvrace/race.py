"""Sequential elimination of models by repeated v-fold cross-validation.

Every surviving model is cross-validated on a common random split per
round, so the split acts as a block in a two-way ANOVA. After each round a
Tukey test drops the models whose mean trails the leader by more than the
Tukey value. With ``blocking="actives_first"`` the first round instead uses
the per-observation contributions of a decomposable metric as blocks, which
can eliminate poor models after a single split. An optional practical
margin ``p0`` stops the race once no survivor can beat the leader by ``p0``.

Minimize-oriented metrics are negated when the score matrix is built, so
the engine itself always maximizes.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset, make_fold_plan
from .exceptions import ConfigError, DataError
from .metrics import MINIMIZE, MetricSpec, PredictionVector, check_compatible, contributions
from .metrics import evaluate as evaluate_metric
from .metrics import hits_metric
from .models import ModelSpec, assemble, cv_fold
from .stats import ScoreMatrix, tukey_eliminate, tukey_value

logger = logging.getLogger(__name__)

SPLITS_ONLY = "splits_only"
ACTIVES_FIRST = "actives_first"

SINGLE_SURVIVOR = "single_survivor"
P0_SATISFIED = "p0_satisfied"
MAX_SPLITS = "max_splits"


@dataclass(frozen=True)
class RaceConfig:
    """Settings shared by every race.

    ``threads`` only sets the worker-pool width; results do not depend on it.
    Split ``j`` (1-based) uses fold-plan seed ``base_seed + j``.
    """

    alpha: float = 0.05
    p0: float | None = None
    max_splits: int = 100
    v: int = 10
    metric: MetricSpec = field(default_factory=hits_metric)
    blocking: str = SPLITS_ONLY
    base_seed: int = 0
    stratified: bool = False
    threads: int = 1
    use_cache: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha={self.alpha} must lie strictly between 0 and 1")
        if self.p0 is not None and not self.p0 > 0:
            raise ConfigError(f"p0={self.p0} must be positive")
        if self.blocking not in (SPLITS_ONLY, ACTIVES_FIRST):
            raise ConfigError(f"unknown blocking {self.blocking!r}")
        min_splits = 2 if self.blocking == SPLITS_ONLY else 1
        if not isinstance(self.max_splits, int) or self.max_splits < min_splits:
            raise ConfigError(f"max_splits must be an integer >= {min_splits} "
                              f"for blocking={self.blocking}")
        if not isinstance(self.v, int) or self.v < 2:
            raise ConfigError("fold count v must be an integer >= 2")
        if not isinstance(self.threads, int) or self.threads < 1:
            raise ConfigError("threads must be a positive integer")
        if self.blocking == ACTIVES_FIRST and not self.metric.decomposable:
            raise ConfigError(f"metric {self.metric.label} cannot use observation blocks")

    def split_seed(self, j: int) -> int:
        return self.base_seed + j


@dataclass(frozen=True)
class CacheEntry:
    value: float
    contributions: object
    predictions: PredictionVector


class CvCache:
    """Cross-validation results keyed by ``(model_id, split_seed)``.

    One cache must only be shared by races with the same dataset, fold
    count and metric.
    """

    def __init__(self):
        self._store: dict[tuple[str, int], CacheEntry] = {}
        self.hits = 0
        self.misses = 0

    def get(self, model_id, split_seed):
        entry = self._store.get((model_id, split_seed))
        if entry is None:
            self.misses += 1
        else:
            self.hits += 1
        return entry

    def put(self, model_id, split_seed, entry: CacheEntry):
        self._store[(model_id, split_seed)] = entry

    def __contains__(self, key):
        return key in self._store

    def __len__(self):
        return len(self._store)


@dataclass(frozen=True)
class SplitEvaluation:
    split: int
    split_seed: int
    model_ids: tuple
    new_fits: int
    values: tuple = ()


@dataclass(frozen=True)
class IterationRecord:
    """One Tukey test. ``means`` and ``tukey_T`` are on the metric's scale;
    ``mse`` is the raw error mean square of the tested matrix."""

    split: int
    block_kind: str
    n_blocks: int
    tested: tuple
    means: dict
    mse: float
    error_df: int
    q: float
    tukey_T: float
    eliminated: tuple
    survivors: tuple
    leader: str
    p0_statistic: float | None
    cum_fits: int
    cum_new_fits: int
    split_seeds: tuple


@dataclass
class RaceTrace:
    iterations: list
    evaluations: list
    winner: str
    survivors: tuple
    stop_reason: str
    v: int
    metric: str
    orientation: str
    alpha: float
    p0: float | None
    families: dict
    leaders: tuple = ()
    label: str = ""

    @property
    def splits_used(self) -> int:
        return len(self.evaluations)

    @property
    def survival_sequence(self) -> list[int]:
        return [len(e.model_ids) for e in self.evaluations]

    @property
    def new_fits(self) -> int:
        return sum(e.new_fits for e in self.evaluations)

    @property
    def final(self) -> IterationRecord | None:
        return self.iterations[-1] if self.iterations else None

    def intervals(self) -> dict:
        """Simultaneous intervals for ``winner - other`` from the last test."""
        last = self.final
        if last is None:
            return {}
        w = last.means.get(self.winner)
        if w is None:
            return {}
        out = {}
        for mid, mean in last.means.items():
            if mid != self.winner:
                diff = w - mean
                out[mid] = (diff - last.tukey_T, diff + last.tukey_T)
        return out


def fit_count(trace, v: int | None = None) -> int:
    """Nominal model fits: ``v`` times the models evaluated at each split.

    ``trace`` is a :class:`RaceTrace` or a plain survival sequence such as
    ``(9, 6, 6, 6, 6)``; sequences need ``v``.
    """
    if isinstance(trace, RaceTrace):
        seq = trace.survival_sequence
        v = trace.v if v is None else v
    else:
        seq = list(trace)
        if v is None:
            raise ValueError("fold count v is required for a survival sequence")
    return int(v) * int(sum(seq))


def check_p0_stop(means, m: int, B: int, mse: float, alpha: float, p0: float) -> bool:
    """True when the runner-up cannot beat the leader by ``p0``.

    ``means`` are the survivors' block means sorted from best to worst.
    """
    if m <= 1:
        return True
    means = np.asarray(means, dtype=np.float64)
    if np.any(np.diff(means) > 0):
        raise ValueError("means must be sorted in nonincreasing order")
    return p0_statistic(means, m, B, mse, alpha) < p0


def p0_statistic(means, m, B, mse, alpha) -> float:
    """``mean(2) - mean(1) + T`` for means sorted best first."""
    return float(means[1] - means[0] + tukey_value(alpha, m, B, mse))


def _unique_ids(specs: Sequence[ModelSpec]) -> list[ModelSpec]:
    seen: dict[str, int] = {}
    out = []
    for spec in specs:
        mid = spec.model_id
        if mid in seen:
            seen[mid] += 1
            spec = spec.relabel(f"{mid}#{seen[mid]}")
        else:
            seen[mid] = 1
        out.append(spec)
    ids = [s.model_id for s in out]
    if len(set(ids)) != len(ids):
        raise ConfigError("could not make model ids unique")
    return out


def _resolve(data, spec: ModelSpec) -> Dataset:
    if isinstance(data, Dataset):
        return data
    key = spec.descriptor_set
    if key not in data:
        raise DataError(f"no dataset for descriptor set {key!r} (model {spec.model_id})")
    return data[key]


def _reference(data) -> Dataset:
    if isinstance(data, Dataset):
        return data
    sets = list(data.values())
    if not sets:
        raise DataError("no datasets supplied")
    ref = sets[0]
    for ds in sets[1:]:
        if ds.n != ref.n or not np.array_equal(ds.y, ref.y):
            raise DataError("descriptor sets must describe the same observations and responses")
    return ref


class _Evaluator:
    """Runs (model x fold) fits for one split and fills the cache."""

    def __init__(self, data, config: RaceConfig, cache: CvCache | None, pool=None):
        self.data = data
        self.ref = _reference(data)
        self.config = config
        self.cache = cache if cache is not None else CvCache()
        self.pool = pool
        self._plans = {}

    def plan(self, j):
        seed = self.config.split_seed(j)
        if seed not in self._plans:
            self._plans[seed] = make_fold_plan(self.ref, self.config.v, seed,
                                               stratified=self.config.stratified)
        return self._plans[seed]

    def run(self, specs: Sequence[ModelSpec], j: int) -> tuple[dict, int]:
        cfg = self.config
        plan = self.plan(j)
        seed = plan.split_seed
        missing = [s for s in specs if self.cache.get(s.model_id, seed) is None]
        tasks = [(s, f) for s in missing for f in range(cfg.v)]

        def work(task):
            spec, f = task
            return cv_fold(spec, _resolve(self.data, spec), plan, f)

        if self.pool is not None and len(tasks) > 1:
            parts = list(self.pool.map(work, tasks))
        else:
            parts = [work(t) for t in tasks]
        for i, spec in enumerate(missing):
            chunk = parts[i * cfg.v:(i + 1) * cfg.v]
            pv = PredictionVector(assemble(chunk, self.ref.n), spec.model_id, seed)
            ds = _resolve(self.data, spec)
            value = evaluate_metric(cfg.metric, pv, ds)
            contrib = contributions(cfg.metric, pv, ds) if cfg.metric.decomposable else None
            self.cache.put(spec.model_id, seed, CacheEntry(value, contrib, pv))
        out = {s.model_id: self.cache._store[(s.model_id, seed)] for s in specs}
        return out, len(missing) * cfg.v


def _sorted_best_first(ids, signed_means):
    order = sorted(range(len(ids)), key=lambda i: (-signed_means[i], ids[i]))
    return [ids[i] for i in order], np.array([signed_means[i] for i in order])


def _run_race(specs, data, config: RaceConfig, cache: CvCache | None = None,
              label: str = "") -> RaceTrace:
    specs = _unique_ids(specs)
    ref = _reference(data)
    for ds in ([data] if isinstance(data, Dataset) else data.values()):
        check_compatible(config.metric, ds)
    if config.v > ref.n:
        raise ConfigError(f"fold count v={config.v} exceeds n={ref.n}")
    if config.blocking == ACTIVES_FIRST and config.metric.block_scheme == "actives":
        if ref.A < 2:
            raise DataError("observation blocks need at least 2 actives")
    sign = -1.0 if config.metric.orientation == MINIMIZE else 1.0
    families = {s.model_id: s.family for s in specs}
    alive = list(specs)
    iterations, evaluations = [], []
    history: dict[str, list[float]] = {s.model_id: [] for s in specs}
    cum_fits = cum_new = 0

    if len(alive) == 1:
        only = alive[0].model_id
        return RaceTrace([], [], only, (only,), SINGLE_SURVIVOR, config.v,
                         config.metric.label, config.metric.orientation, config.alpha,
                         config.p0, families, (only,), label)

    pool = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    try:
        evaluator = _Evaluator(data, config, cache, pool)

        def evaluate_split(j):
            nonlocal cum_fits, cum_new
            results, new = evaluator.run(alive, j)
            ids = tuple(s.model_id for s in alive)
            evaluations.append(SplitEvaluation(j, config.split_seed(j), ids, new,
                                               tuple(results[i].value for i in ids)))
            cum_fits += config.v * len(alive)
            cum_new += new
            for mid in ids:
                history[mid].append(results[mid].value)
            return results

        def test(j, matrix: ScoreMatrix, block_kind: str):
            nonlocal alive
            outcome = tukey_eliminate(matrix, config.alpha)
            ids = list(matrix.model_ids)
            signed = list(outcome.means)
            ranked, ranked_means = _sorted_best_first(ids, signed)
            stat = None
            if config.p0 is not None and len(ids) >= 2:
                stat = float(ranked_means[1] - ranked_means[0] + outcome.tukey_T)
            survivors = tuple(i for i in ids if i not in outcome.eliminated)
            alive = [s for s in alive if s.model_id in survivors]
            iterations.append(IterationRecord(
                split=j, block_kind=block_kind, n_blocks=matrix.B, tested=tuple(ids),
                means={i: sign * v for i, v in zip(ids, signed)},
                mse=outcome.mse, error_df=outcome.error_df, q=outcome.q_value,
                tukey_T=outcome.tukey_T,
                eliminated=tuple(i for i in ids if i in outcome.eliminated),
                survivors=survivors, leader=ranked[0], p0_statistic=stat,
                cum_fits=cum_fits, cum_new_fits=cum_new,
                split_seeds=tuple(config.split_seed(k) for k in range(1, j + 1))))
            logger.debug("split %d (%s): %d tested, eliminated %s, T=%.4g",
                         j, block_kind, len(ids), iterations[-1].eliminated, outcome.tukey_T)
            if len(survivors) == 1:
                return SINGLE_SURVIVOR
            if stat is not None and stat < config.p0:
                return P0_SATISFIED
            return None

        stop = None
        j = 1
        first = evaluate_split(1)
        if config.blocking == ACTIVES_FIRST:
            ids = [s.model_id for s in alive]
            blocks = first[ids[0]].contributions.block_ids
            B = len(blocks)
            if B < 2:
                raise DataError("observation blocks need at least 2 blocks")
            # scale by B so row means equal the metric value itself
            rows = [sign * B * first[i].contributions.contributions for i in ids]
            stop = test(1, ScoreMatrix(np.vstack(rows), ids, "observations", tuple(blocks)),
                        "observations")
            if stop is None and j >= config.max_splits:
                stop = MAX_SPLITS
        while stop is None:
            j += 1
            evaluate_split(j)
            ids = [s.model_id for s in alive]
            values = np.array([history[i][-j:] for i in ids]) * sign
            stop = test(j, ScoreMatrix(values, ids, "splits", tuple(range(1, j + 1))), "splits")
            if stop is None and j >= config.max_splits:
                stop = MAX_SPLITS
    finally:
        if pool is not None:
            pool.shutdown()

    last = iterations[-1]
    surv = last.survivors
    best = max(sign * last.means[i] for i in surv)
    leaders = tuple(sorted(i for i in surv if sign * last.means[i] == best))
    return RaceTrace(iterations, evaluations, leaders[0], surv, stop, config.v,
                     config.metric.label, config.metric.orientation, config.alpha,
                     config.p0, families, leaders, label)


def race(specs: Sequence[ModelSpec], data, config: RaceConfig,
         cache: CvCache | None = None) -> RaceTrace:
    """Race ``specs`` with the blocking and stopping rule set in ``config``.

    ``data`` is a :class:`Dataset`, or a mapping from descriptor-set label to
    datasets over the same observations (selected by each spec's
    ``descriptor_set``).
    """
    if len(specs) < 2:
        raise ConfigError("a race needs at least 2 models")
    return _run_race(list(specs), data, config, cache)


def race_algorithm1(specs, data, config: RaceConfig, cache=None) -> RaceTrace:
    """Splits as blocks; stop at one survivor or ``max_splits``."""
    return race(specs, data, replace(config, blocking=SPLITS_ONLY, p0=None), cache)


def race_algorithm2(specs, data, config: RaceConfig, cache=None) -> RaceTrace:
    """Observation blocks on the first split, then splits as blocks."""
    return race(specs, data, replace(config, blocking=ACTIVES_FIRST, p0=None), cache)


def race_algorithm3(specs, data, config: RaceConfig, cache=None) -> RaceTrace:
    """Either blocking scheme plus the ``p0`` practical-margin stop."""
    if config.p0 is None:
        raise ConfigError("the p0-stopping race needs config.p0")
    return race(specs, data, config, cache)


@dataclass
class CompareResult:
    group_traces: list
    final: RaceTrace
    total_fits: int
    step1_fits: int
    step2_fits: int


def tune_then_compare(groups: Sequence[Sequence[ModelSpec]], data, config: RaceConfig,
                      labels: Sequence[str] | None = None) -> CompareResult:
    """Tune each group by its own race, then race the group winners.

    All races share split seeds, so with ``config.use_cache`` the second
    step reuses every (model, split) result computed in the first.
    ``total_fits`` counts fits actually performed.
    """
    if len(groups) < 2:
        raise ConfigError("tune-then-compare needs at least 2 groups")
    labels = list(labels) if labels is not None else [f"group{i + 1}" for i in range(len(groups))]
    cache = CvCache()
    traces, winners = [], []
    for label, group in zip(labels, groups):
        group = list(group)
        if not group:
            raise ConfigError(f"group {label!r} is empty")
        trace = _run_race(group, data, config, cache if config.use_cache else None, label)
        traces.append(trace)
        spec = {s.model_id: s for s in _unique_ids(group)}[trace.winner]
        winners.append(spec)
    step1 = sum(t.new_fits for t in traces)
    final = _run_race(winners, data, config, cache if config.use_cache else None, "compare")
    step2 = final.new_fits
    return CompareResult(traces, final, step1 + step2, step1, step2)


def simultaneous_race(specs: Sequence[ModelSpec], data, config: RaceConfig,
                      cache: CvCache | None = None) -> RaceTrace:
    """One race over the union of all groups' models."""
    trace = race(specs, data, config, cache)
    trace.label = "simultaneous"
    return trace


def exhaustive_means(specs: Sequence[ModelSpec], data, config: RaceConfig,
                     n_splits: int | None = None, return_values: bool = False):
    """Mean metric over ``n_splits`` shared splits for every model, no elimination.

    With ``return_values=True`` also returns the per-split values as a
    ``{model_id: ndarray}`` mapping.
    """
    specs = _unique_ids(specs)
    n_splits = config.max_splits if n_splits is None else n_splits
    pool = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    try:
        ev = _Evaluator(data, config, None, pool)
        totals = {s.model_id: [] for s in specs}
        for j in range(1, n_splits + 1):
            res, _ = ev.run(specs, j)
            for mid, entry in res.items():
                totals[mid].append(entry.value)
                ev.cache._store.pop((mid, config.split_seed(j)), None)
    finally:
        if pool is not None:
            pool.shutdown()
    means = {mid: math.fsum(vals) / len(vals) for mid, vals in totals.items()}
    if return_values:
        return means, {mid: np.array(vals) for mid, vals in totals.items()}
    return means

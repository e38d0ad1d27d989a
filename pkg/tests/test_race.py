import dataclasses

import numpy as np
import pytest

from cvrace import (ConfigError, DataError, Dataset, ModelSpec, RaceConfig, check_p0_stop,
                    exhaustive_means, fit_count, generate_synthetic, race, race_algorithm1,
                    race_algorithm2, race_algorithm3, simultaneous_race,
                    studentized_range_quantile, tukey_value, tune_then_compare)
from cvrace._rng import CounterRNG
from cvrace.metrics import hits_metric, mse_metric
from cvrace.race import MAX_SPLITS, P0_SATISFIED, SINGLE_SURVIVOR

import lookup
from oracles import (KNN_TUNE_TRACE, NN_STEP1_SHORT, NN_TUNE_TRACE, SIMULTANEOUS_TRACE)


def knn(k, descriptor_set=None):
    return ModelSpec("knn", {"k": k}, descriptor_set)


@pytest.fixture(scope="module")
def planted():
    """Same observations described twice: informative and pure noise."""
    ds = generate_synthetic(300, 4, 0.15, 3.0, seed=17, descriptor_set_name="signal")
    noise = CounterRNG(4242).normal(300 * 4).reshape(300, 4)
    return {"signal": ds, "null": Dataset(noise, ds.y, "null")}


@pytest.fixture(scope="module")
def knn_data():
    return generate_synthetic(300, 4, 0.1, 1.5, seed=5)


def test_planted_gap_eliminated_at_first_test(planted):
    cfg = RaceConfig(metric=hits_metric(45), max_splits=10)
    trace = race_algorithm1([knn(10, "signal"), knn(10, "null")], planted, cfg)
    first = trace.iterations[0]
    assert first.split == 2 and first.block_kind == "splits"
    assert first.eliminated == ("knn(k=10)/null",)
    assert trace.winner == "knn(k=10)/signal"
    assert trace.stop_reason == SINGLE_SURVIVOR
    means = exhaustive_means([knn(10, "signal"), knn(10, "null")], planted, cfg, n_splits=20)
    assert means["knn(k=10)/signal"] > means["knn(k=10)/null"]


def test_identical_models_never_separated(knn_data):
    cfg = RaceConfig(metric=hits_metric(30), max_splits=5)
    trace = race_algorithm1([knn(5), knn(5)], knn_data, cfg)
    assert trace.stop_reason == MAX_SPLITS
    assert trace.survivors == ("knn(k=5)", "knn(k=5)#2")
    assert trace.splits_used == 5
    assert all(rec.eliminated == () for rec in trace.iterations)
    # exact tie: the lowest id is reported and the tie is recorded
    assert trace.winner == "knn(k=5)" and len(trace.leaders) == 2


def test_trace_invariants(knn_data):
    cfg = RaceConfig(metric=hits_metric(30), max_splits=12, base_seed=100)
    specs = [knn(k) for k in range(1, 11)]
    trace = race_algorithm1(specs, knn_data, cfg)
    prev = set(s.model_id for s in specs)
    for rec in trace.iterations:
        assert set(rec.tested) == prev
        assert set(rec.survivors) <= set(rec.tested)
        assert rec.leader in rec.survivors
        best = max(rec.means.values())
        assert all(rec.means[i] < best for i in rec.eliminated)
        assert rec.tukey_T == pytest.approx(rec.q * np.sqrt(rec.mse / rec.n_blocks), rel=1e-12)
        assert rec.split_seeds == tuple(100 + j for j in range(1, rec.split + 1))
        prev = set(rec.survivors)
    seq = trace.survival_sequence
    assert all(a >= b for a, b in zip(seq, seq[1:]))
    assert trace.iterations[-1].cum_fits == fit_count(trace) == cfg.v * sum(seq)
    assert trace.winner in trace.survivors


def test_shared_fold_plan_per_split(knn_data):
    cfg = RaceConfig(metric=hits_metric(30), max_splits=3, base_seed=7)
    trace = race_algorithm1([knn(1), knn(3), knn(9)], knn_data, cfg)
    for ev in trace.evaluations:
        assert ev.split_seed == 7 + ev.split
    # the race's per-split values equal fresh cross-validation on the same seeds
    _, values = exhaustive_means([knn(1), knn(3), knn(9)], knn_data, cfg, n_splits=2,
                                 return_values=True)
    for ev in trace.evaluations[:2]:
        for mid, val in zip(ev.model_ids, ev.values):
            assert val == values[mid][ev.split - 1]


def test_algorithm2_first_test_uses_observation_blocks():
    ds = generate_synthetic(600, 4, 0.1, 2.0, seed=8)
    assert ds.A == 60
    cfg = RaceConfig(metric=hits_metric(60), max_splits=4)
    trace = race_algorithm2([knn(k) for k in range(1, 10)], ds, cfg)
    first = trace.iterations[0]
    assert first.split == 1 and first.block_kind == "observations"
    assert first.n_blocks == 60 and first.error_df == 472
    assert first.q == pytest.approx(studentized_range_quantile(0.05, 9, 472), rel=1e-12)
    assert all(rec.block_kind == "splits" for rec in trace.iterations[1:])


@pytest.mark.parametrize("gap_factor,expect", [(1.2, ("lookup(row=3)",)), (0.8, ())])
def test_algorithm2_single_split_power(gap_factor, expect):
    C, T = lookup.contribution_fixture(gap_factor)
    specs = [ModelSpec("lookup", {"row": i}) for i in range(4)]
    cfg = RaceConfig(metric=lookup.table_metric(C), max_splits=1, blocking="actives_first")
    trace = race_algorithm2(specs, lookup.lookup_data(), cfg)
    assert len(trace.iterations) == 1
    rec = trace.iterations[0]
    assert rec.tukey_T == pytest.approx(T, rel=1e-10)
    assert rec.eliminated == expect


def test_algorithm2_identical_rows_eliminate_nothing():
    C = np.tile(np.linspace(0, 1, 20), (4, 1)) / 20
    specs = [ModelSpec("lookup", {"row": i}) for i in range(4)]
    cfg = RaceConfig(metric=lookup.table_metric(C), max_splits=1, blocking="actives_first")
    assert race_algorithm2(specs, lookup.lookup_data(), cfg).iterations[0].eliminated == ()


def test_algorithm2_needs_two_actives():
    y = np.zeros(30)
    y[0] = 1
    ds = Dataset(np.random.default_rng(0).normal(size=(30, 2)), y)
    with pytest.raises(DataError):
        race_algorithm2([knn(1), knn(3)], ds, RaceConfig(metric=hits_metric(5), v=3))


def test_p0_extremes(knn_data):
    specs = [knn(k) for k in range(1, 11)]
    base = RaceConfig(metric=hits_metric(30), max_splits=8)
    big = race_algorithm3(specs, knn_data, dataclasses.replace(base, p0=1e9))
    assert big.stop_reason == P0_SATISFIED and big.splits_used == 2
    assert big.winner == big.iterations[0].leader
    tiny = race_algorithm3(specs, knn_data, dataclasses.replace(base, p0=1e-12))
    plain = race_algorithm1(specs, knn_data, base)
    assert tiny.survival_sequence == plain.survival_sequence
    assert tiny.winner == plain.winner and tiny.stop_reason == plain.stop_reason


def test_p0_monotone_stopping(knn_data):
    specs = [knn(k) for k in range(1, 11)]
    used = []
    for p0 in (0.5, 1.0, 2.0, 4.0, 8.0):
        cfg = RaceConfig(metric=hits_metric(30), max_splits=30, p0=p0, base_seed=3)
        used.append(race_algorithm3(specs, knn_data, cfg).splits_used)
    assert all(a >= b for a, b in zip(used, used[1:]))
    assert used[0] > used[-1]


def test_check_p0_stop_basics():
    assert check_p0_stop([5.0], 1, 10, 1.0, 0.05, 1.0)
    T = tukey_value(0.05, 3, 10, 2.0)
    assert check_p0_stop([5.0, 4.0, 1.0], 3, 10, 2.0, 0.05, T - 1.0 + 1e-9)
    assert not check_p0_stop([5.0, 4.0, 1.0], 3, 10, 2.0, 0.05, T - 1.0)
    with pytest.raises(ValueError):
        check_p0_stop([1.0, 2.0], 2, 10, 1.0, 0.05, 1.0)


def test_fit_count_sequences():
    assert fit_count(NN_TUNE_TRACE, 10) == 530
    assert fit_count(KNN_TUNE_TRACE, 10) == 290
    assert fit_count(SIMULTANEOUS_TRACE, 10) == 550
    assert fit_count(NN_STEP1_SHORT, 10) == 330
    assert fit_count((), 10) == 0
    with pytest.raises(ValueError):
        fit_count((3, 2))


def test_tune_then_compare_reuses_cache(knn_data):
    # duplicated specs cannot separate, so both groups run all S splits and
    # the comparison of their winners is answered from the cache
    cfg = RaceConfig(metric=hits_metric(30), max_splits=4)
    groups = [[knn(5), knn(5)], [knn(7), knn(7)]]
    res = tune_then_compare(groups, knn_data, cfg, labels=["a", "b"])
    assert [t.splits_used for t in res.group_traces] == [4, 4]
    assert res.step2_fits == 0
    assert res.step1_fits == 2 * fit_count((2, 2, 2, 2), 10)
    assert res.total_fits == res.step1_fits
    no_cache = tune_then_compare(groups, knn_data, dataclasses.replace(cfg, use_cache=False))
    assert no_cache.step2_fits > 0
    assert no_cache.final.winner == res.final.winner
    assert no_cache.final.final.means == res.final.final.means


def test_simultaneous_uses_fewer_fits_under_dominance(planted):
    cfg = RaceConfig(metric=hits_metric(45), max_splits=10)
    good = [knn(k, "signal") for k in (5, 10, 15)]
    noise = [knn(k, "null") for k in (5, 10, 15)]
    ttc = tune_then_compare([good, noise], planted, cfg)
    sim = simultaneous_race(good + noise, planted, cfg)
    assert sim.new_fits < ttc.total_fits
    assert sim.families == {s.model_id: "knn" for s in good + noise}
    assert all(s.endswith("/signal") for s in sim.survivors)


def test_simultaneous_single_group_matches_algorithm3(knn_data):
    cfg = RaceConfig(metric=hits_metric(30), max_splits=10, p0=3.0)
    specs = [knn(k) for k in (2, 4, 8)]
    a = simultaneous_race(specs, knn_data, cfg)
    b = race_algorithm3(specs, knn_data, cfg)
    assert a.iterations == b.iterations and a.winner == b.winner


def test_minimize_metric_race(knn_data):
    cfg = RaceConfig(metric=mse_metric(), max_splits=6)
    trace = race_algorithm1([knn(1), knn(15)], knn_data, cfg)
    means = trace.iterations[-1].means
    assert trace.winner == min(trace.survivors, key=lambda i: means[i])
    assert trace.orientation == "minimize"


def test_thread_count_does_not_change_trace(knn_data):
    cfg = RaceConfig(metric=hits_metric(30), max_splits=6, p0=1.0, blocking="actives_first")
    specs = [knn(k) for k in range(1, 8)]
    one = race(specs, knn_data, cfg)
    four = race(specs, knn_data, dataclasses.replace(cfg, threads=4))
    assert one.iterations == four.iterations


@pytest.mark.parametrize("kwargs", [
    dict(alpha=0.0), dict(alpha=1.0), dict(p0=0.0), dict(p0=-1.0), dict(max_splits=1),
    dict(v=1), dict(threads=0), dict(blocking="both"),
    dict(blocking="actives_first", metric=dataclasses.replace(hits_metric(5), block_scheme=None)),
])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        RaceConfig(**kwargs)


def test_race_needs_two_models_and_matching_sets(knn_data, planted):
    with pytest.raises(ConfigError):
        race([knn(1)], knn_data, RaceConfig())
    with pytest.raises(ConfigError):
        race_algorithm3([knn(1), knn(2)], knn_data, RaceConfig())
    with pytest.raises(DataError):
        race([knn(1, "missing"), knn(2, "signal")], planted, RaceConfig(metric=hits_metric(10)))
    other = generate_synthetic(300, 4, 0.2, 1.0, seed=99)
    with pytest.raises(DataError):
        race([knn(1, "a"), knn(2, "b")], {"a": knn_data, "b": other},
             RaceConfig(metric=hits_metric(10)))

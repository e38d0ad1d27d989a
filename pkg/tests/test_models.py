import numpy as np
import pytest

from cvrace import (ConfigError, DataError, Dataset, ModelSpec, cross_validate, expand_grid,
                    fit, generate_synthetic, make_fold_plan, predict)
from cvrace._rng import CounterRNG

from oracles import central_difference, gradient_fixtures
from cvrace.models import (NNetAdapter, _nearest_mask, derive_fit_seed, nnet_n_weights,
                           nnet_objective, nnet_objective_and_gradient)


def knn_oracle(Xt, yt, Xq, k, manhattan=False):
    """Brute force: stable sort of distances, ties to the lower index."""
    out = []
    for q in Xq:
        diff = np.abs(Xt - q) if manhattan else (Xt - q) ** 2
        d = diff.sum(axis=1)
        nn = sorted(range(len(d)), key=lambda i: (d[i], i))[:k]
        out.append(sum(yt[i] for i in nn) / k)
    return np.array(out)


def test_model_ids():
    assert ModelSpec("knn", {"k": 3}, "set_a").model_id == "knn(k=3)/set_a"
    assert ModelSpec("nnet", {"decay": 0.01, "size": 5}).model_id == "nnet(size=5,decay=0.01)"
    assert ModelSpec("knn", {"k": 3}, label="mine").model_id == "mine"
    assert ModelSpec("knn", {"k": 3.0}) == ModelSpec("knn", {"k": 3})


@pytest.mark.parametrize("family,params", [
    ("knn", {"k": 0}), ("knn", {"k": 2.5}), ("knn", {"k": 3, "p": 2}),
    ("knn", {"k": 3, "distance": "cosine"}), ("nnet", {"size": 0, "decay": 0.1}),
    ("nnet", {"size": 3, "decay": 0.0}), ("nnet", {"size": 3}), ("svm", {}),
])
def test_invalid_specs(family, params):
    with pytest.raises(ConfigError):
        ModelSpec(family, params)


@pytest.mark.parametrize("manhattan", [False, True])
def test_knn_matches_brute_force(manhattan):
    rng = np.random.default_rng(3)
    # integer grid coordinates force many exact distance ties
    X = rng.integers(0, 4, size=(60, 3)).astype(float)
    y = (rng.random(60) < 0.3).astype(float)
    ds = Dataset(X, y)
    train, query = np.arange(40), np.arange(40, 60)
    for k in (1, 3, 7, 40):
        params = {"k": k, "distance": "manhattan"} if manhattan else {"k": k}
        model = fit(ModelSpec("knn", params), ds, train, 0)
        got = predict(model, ds, query)
        np.testing.assert_array_equal(got, knn_oracle(X[train], y[train], X[query], k, manhattan))


def test_nearest_mask_against_stable_argsort():
    rng = np.random.default_rng(0)
    for _ in range(100):
        d = rng.integers(0, 5, size=(4, 12)).astype(float)
        k = int(rng.integers(1, 13))
        expect = np.zeros_like(d, dtype=bool)
        idx = np.argsort(d, axis=1, kind="stable")[:, :k]
        np.put_along_axis(expect, idx, True, axis=1)
        np.testing.assert_array_equal(_nearest_mask(d, k), expect)


def test_knn_k_too_large():
    ds = generate_synthetic(20, 2, 0.2, 1.0, seed=0)
    with pytest.raises(DataError):
        fit(ModelSpec("knn", {"k": 11}), ds, np.arange(10), 0)


def test_nnet_gradient_small_sample():
    worst = 0.0
    for i, (X, y, size, decay, theta) in enumerate(gradient_fixtures()):
        if i % 10:
            continue
        _, g = nnet_objective_and_gradient(theta, X, y, size, decay)
        fd = central_difference(lambda t: nnet_objective(t, X, y, size, decay), theta)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))
    assert worst < 1e-4


def test_nnet_objective_excludes_biases_from_penalty():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(10, 2))
    y = (rng.random(10) < 0.5).astype(float)
    # all-zero weights: every output is 0.5, so CE = log 2 per point
    assert nnet_objective(np.zeros(nnet_n_weights(2, 3)), X, y, 3, 5.0) == pytest.approx(np.log(2.0))

    def penalty(theta):
        return nnet_objective(theta, X, y, 3, 5.0) - nnet_objective(theta, X, y, 3, 0.0)

    theta = rng.normal(size=nnet_n_weights(2, 3))
    W1, W2 = theta[:6], theta[9:12]
    assert penalty(theta) == pytest.approx(5.0 * (W1 @ W1 + W2 @ W2) / 10, rel=1e-9)
    moved = theta.copy()
    moved[6:9] += 3.0
    moved[-1] -= 2.0
    assert penalty(moved) == pytest.approx(penalty(theta), rel=1e-9)


def test_nnet_training_decreases_objective_and_is_deterministic():
    ds = generate_synthetic(200, 4, 0.2, 2.0, seed=4)
    idx = np.arange(150)
    adapter = NNetAdapter()
    params = adapter.validate({"size": 3, "decay": 0.01})
    state = adapter.fit(params, ds.X[idx], ds.y[idx], 99, record=True)
    hist = state["info"]["history"]
    assert all(b <= a for a, b in zip(hist, hist[1:]))
    assert hist[-1] < hist[0]
    again = adapter.fit(params, ds.X[idx], ds.y[idx], 99)
    np.testing.assert_array_equal(state["theta"], again["theta"])
    other = adapter.fit(params, ds.X[idx], ds.y[idx], 100)
    assert not np.array_equal(state["theta"], other["theta"])


def test_nnet_predictions_are_probabilities():
    ds = generate_synthetic(120, 3, 0.25, 3.0, seed=6)
    model = fit(ModelSpec("nnet", {"size": 2, "decay": 0.1}), ds, np.arange(80), 7)
    p = predict(model, ds, np.arange(80, 120))
    assert np.all((p >= 0) & (p <= 1))
    assert model.info["epochs"] >= 1 and "converged" in model.info


def test_nnet_rejects_single_class_and_continuous():
    X = np.random.default_rng(0).normal(size=(10, 2))
    with pytest.raises(DataError):
        fit(ModelSpec("nnet", {"size": 2, "decay": 0.1}), Dataset(X, np.zeros(10)), np.arange(10), 0)
    cont = Dataset(X, np.linspace(0, 3, 10))
    with pytest.raises(DataError):
        fit(ModelSpec("nnet", {"size": 2, "decay": 0.1}), cont, np.arange(10), 0)


def test_fit_seed_is_stable_and_distinct():
    a = derive_fit_seed("knn(k=3)", 12, 0)
    assert a == derive_fit_seed("knn(k=3)", 12, 0)
    assert len({a, derive_fit_seed("knn(k=3)", 12, 1), derive_fit_seed("knn(k=3)", 13, 0),
                derive_fit_seed("knn(k=4)", 12, 0)}) == 4
    assert 0 <= a < 2**64


def test_cross_validate_covers_every_row_once():
    ds = generate_synthetic(103, 3, 0.1, 1.0, seed=1)
    plan = make_fold_plan(ds, 10, 5)
    pv = cross_validate(ModelSpec("knn", {"k": 5}), ds, plan)
    assert len(pv) == 103 and np.all(np.isfinite(pv.scores))
    # each prediction used a model that never saw that row
    for f in range(10):
        test = plan.fold_indices(f)
        train = np.flatnonzero(plan.assignment != f)
        m = fit(ModelSpec("knn", {"k": 5}), ds, train, 0)
        np.testing.assert_array_equal(pv.scores[test], predict(m, ds, test))


def test_cross_validate_parallel_map_is_identical():
    from concurrent.futures import ThreadPoolExecutor

    ds = generate_synthetic(150, 3, 0.2, 2.0, seed=2)
    plan = make_fold_plan(ds, 5, 8)
    spec = ModelSpec("nnet", {"size": 2, "decay": 0.05, "epochs": 50})
    serial = cross_validate(spec, ds, plan)
    with ThreadPoolExecutor(4) as ex:
        par = cross_validate(spec, ds, plan, map_fn=ex.map)
    assert serial.scores.tobytes() == par.scores.tobytes()


def test_cross_validate_plan_mismatch():
    ds = generate_synthetic(50, 2, 0.2, 1.0, seed=0)
    with pytest.raises(DataError):
        cross_validate(ModelSpec("knn", {"k": 1}), ds, make_fold_plan(40, 5, 0))


def test_expand_grid_order():
    specs = expand_grid("nnet", {"size": [1, 3], "decay": [0.1, 0.01]}, "set1")
    assert [s.model_id for s in specs] == [
        "nnet(size=1,decay=0.1)/set1", "nnet(size=1,decay=0.01)/set1",
        "nnet(size=3,decay=0.1)/set1", "nnet(size=3,decay=0.01)/set1"]
    assert len(expand_grid("knn", {"k": 4})) == 1


def test_uniform_range_init_bounds():
    w = CounterRNG(5).uniform_range(-0.5, 0.5, 1000)
    assert w.min() >= -0.5 and w.max() < 0.5

"""Model adapters: k-nearest neighbors and a one-hidden-layer neural network.

A family adapter is any object with

* ``validate(params) -> dict``: checked, normalised parameters
* ``fit(params, X, y, seed) -> state``: fitted state, deterministic per seed
* ``predict(params, state, X) -> ndarray``: scores for query rows

Register new families with :func:`register_family`.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from ._rng import CounterRNG
from .data import Dataset, FoldPlan
from .exceptions import ConfigError, DataError
from .metrics import PredictionVector

_FAMILIES: dict[str, Any] = {}


def register_family(name: str, adapter) -> None:
    _FAMILIES[name] = adapter


def get_family(name: str):
    try:
        return _FAMILIES[name]
    except KeyError:
        raise ConfigError(f"unknown model family {name!r}; "
                          f"known: {sorted(_FAMILIES)}") from None


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


@dataclass(frozen=True)
class ModelSpec:
    """A model family with fixed tuning parameters on one descriptor set.

    ``params`` is stored as a sorted tuple of ``(name, value)`` pairs; pass a
    dict and it is validated and normalised by the family adapter.
    """

    family: str
    params: Any = ()
    descriptor_set: str | None = None
    label: str | None = None

    def __post_init__(self):
        raw = dict(self.params)
        checked = get_family(self.family).validate(raw)
        object.__setattr__(self, "params", tuple(sorted(checked.items())))

    @property
    def param_dict(self) -> dict:
        return dict(self.params)

    @property
    def model_id(self) -> str:
        if self.label:
            return self.label
        order = getattr(get_family(self.family), "param_order", ())
        keys = [k for k in order if k in self.param_dict]
        keys += sorted(k for k in self.param_dict if k not in keys)
        inner = ",".join(f"{k}={_fmt(self.param_dict[k])}" for k in keys)
        mid = f"{self.family}({inner})"
        return f"{mid}/{self.descriptor_set}" if self.descriptor_set else mid

    def relabel(self, label: str) -> "ModelSpec":
        return ModelSpec(self.family, self.params, self.descriptor_set, label)


@dataclass(frozen=True, eq=False)
class FittedModel:
    spec: ModelSpec
    training_indices: np.ndarray
    state: Any
    info: dict = field(default_factory=dict)


class KNNAdapter:
    """Class-probability (or mean response) of the ``k`` nearest training
    points. Distance ties go to the lower training index."""

    param_order = ("k", "distance")

    def validate(self, params):
        params = dict(params)
        unknown = set(params) - {"k", "distance"}
        if unknown:
            raise ConfigError(f"knn: unknown parameters {sorted(unknown)}")
        k = params.get("k")
        if isinstance(k, float) and k.is_integer():
            k = int(k)
        if not isinstance(k, (int, np.integer)) or isinstance(k, bool) or k < 1:
            raise ConfigError(f"knn: k must be an integer >= 1, got {k!r}")
        params["k"] = int(k)
        dist = params.get("distance", "euclidean")
        if dist not in ("euclidean", "manhattan"):
            raise ConfigError(f"knn: unknown distance {dist!r}")
        if dist == "euclidean":
            params.pop("distance", None)
        else:
            params["distance"] = dist
        return params

    def fit(self, params, X, y, seed):
        if params["k"] > len(y):
            raise DataError(f"knn: k={params['k']} exceeds the {len(y)} training points")
        return (X, y)

    def predict(self, params, state, Xq, chunk=512):
        Xt, yt = state
        k = params["k"]
        if k > len(yt):
            raise DataError(f"knn: k={k} exceeds the {len(yt)} training points")
        manhattan = params.get("distance") == "manhattan"
        out = np.empty(len(Xq))
        for start in range(0, len(Xq), chunk):
            block = Xq[start:start + chunk]
            d = np.zeros((len(block), len(Xt)))
            # accumulate one descriptor at a time, in column order
            for j in range(Xt.shape[1]):
                diff = block[:, j, None] - Xt[None, :, j]
                d += np.abs(diff) if manhattan else diff * diff
            out[start:start + chunk] = (_nearest_mask(d, k) @ yt) / k
        return out


def _nearest_mask(d, k):
    """Boolean mask of the ``k`` smallest entries per row; among entries equal
    to the k-th smallest, the lowest column indices win."""
    kth = np.partition(d, k - 1, axis=1)[:, k - 1:k]
    closer = d < kth
    tied = d == kth
    need = k - closer.sum(axis=1, keepdims=True)
    return closer | (tied & (np.cumsum(tied, axis=1) <= need))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softplus(z):
    return np.logaddexp(0.0, z)


def nnet_unpack(theta, d, size):
    i = 0
    W1 = theta[i:i + d * size].reshape(d, size)
    i += d * size
    b1 = theta[i:i + size]
    i += size
    W2 = theta[i:i + size]
    i += size
    return W1, b1, W2, theta[i]


def nnet_n_weights(d, size):
    return d * size + 2 * size + 1


def nnet_objective(theta, X, y, size, decay):
    """Penalised cross-entropy per training point.

    ``(sum_i CE_i + decay * (||W1||^2 + ||W2||^2)) / n``; biases are not
    penalised.
    """
    W1, b1, W2, b2 = nnet_unpack(theta, X.shape[1], size)
    H = _sigmoid(X @ W1 + b1)
    z = H @ W2 + b2
    ce = np.sum(_softplus(z) - y * z)
    return (ce + decay * (np.sum(W1 * W1) + np.sum(W2 * W2))) / len(y)


def nnet_objective_and_gradient(theta, X, y, size, decay):
    """Objective of :func:`nnet_objective` and its analytic gradient."""
    n, d = X.shape
    W1, b1, W2, b2 = nnet_unpack(theta, d, size)
    H = _sigmoid(X @ W1 + b1)
    z = H @ W2 + b2
    ce = np.sum(_softplus(z) - y * z)
    obj = (ce + decay * (np.sum(W1 * W1) + np.sum(W2 * W2))) / n
    r = _sigmoid(z) - y
    gW2 = H.T @ r + 2.0 * decay * W2
    gb2 = r.sum()
    dH = np.outer(r, W2) * H * (1.0 - H)
    gW1 = X.T @ dH + 2.0 * decay * W1
    gb1 = dH.sum(axis=0)
    grad = np.concatenate([gW1.ravel(), gb1, gW2, [gb2]]) / n
    return obj, grad


class NNetAdapter:
    """Logistic hidden layer and logistic output trained by full-batch
    gradient descent with a halving line search. Inputs are standardised
    with the training-fold mean and standard deviation."""

    param_order = ("size", "decay", "epochs", "step", "tol")
    defaults = {"epochs": 500, "step": 0.1, "tol": 1e-5}

    def validate(self, params):
        params = dict(params)
        unknown = set(params) - {"size", "decay", "epochs", "step", "tol"}
        if unknown:
            raise ConfigError(f"nnet: unknown parameters {sorted(unknown)}")
        size = params.get("size")
        if isinstance(size, float) and size.is_integer():
            size = int(size)
        if not isinstance(size, (int, np.integer)) or isinstance(size, bool) or size < 1:
            raise ConfigError(f"nnet: size must be an integer >= 1, got {size!r}")
        params["size"] = int(size)
        try:
            decay = float(params.get("decay"))
        except (TypeError, ValueError):
            raise ConfigError("nnet: decay must be a positive number") from None
        if not decay > 0 or not math.isfinite(decay):
            raise ConfigError(f"nnet: decay must be positive, got {decay!r}")
        params["decay"] = decay
        for key, default in self.defaults.items():
            if key in params and params[key] == default:
                del params[key]
        if "epochs" in params and (int(params["epochs"]) != params["epochs"] or params["epochs"] < 1):
            raise ConfigError("nnet: epochs must be a positive integer")
        for key in ("step", "tol"):
            if key in params and not float(params[key]) > 0:
                raise ConfigError(f"nnet: {key} must be positive")
        return params

    def fit(self, params, X, y, seed, record=False):
        if not np.all((y == 0.0) | (y == 1.0)):
            raise DataError("nnet: only binary responses are supported")
        if y.min() == y.max():
            raise DataError("nnet: training fold contains a single class")
        size, decay = params["size"], params["decay"]
        epochs = int(params.get("epochs", self.defaults["epochs"]))
        step = float(params.get("step", self.defaults["step"]))
        tol = float(params.get("tol", self.defaults["tol"]))
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        Z = (X - mu) / sd
        theta = CounterRNG(seed).uniform_range(-0.5, 0.5, nnet_n_weights(X.shape[1], size))
        obj, grad = nnet_objective_and_gradient(theta, Z, y, size, decay)
        history = [obj] if record else None
        gnorm = float(np.linalg.norm(grad))
        done = 0
        for done in range(1, epochs + 1):
            if gnorm < tol:
                break
            while True:
                cand = theta - step * grad
                c_obj, c_grad = nnet_objective_and_gradient(cand, Z, y, size, decay)
                if c_obj <= obj:
                    break
                step *= 0.5
                if step < 1e-14:
                    break
            if c_obj > obj:
                break
            theta, obj, grad = cand, c_obj, c_grad
            gnorm = float(np.linalg.norm(grad))
            if record:
                history.append(obj)
        info = {"epochs": done, "objective": float(obj), "grad_norm": gnorm,
                "converged": gnorm < tol, "final_step": step}
        if record:
            info["history"] = history
        return {"theta": theta, "mu": mu, "sd": sd, "info": info}

    def predict(self, params, state, Xq):
        Z = (Xq - state["mu"]) / state["sd"]
        W1, b1, W2, b2 = nnet_unpack(state["theta"], Z.shape[1], params["size"])
        return _sigmoid(_sigmoid(Z @ W1 + b1) @ W2 + b2)


register_family("knn", KNNAdapter())
register_family("nnet", NNetAdapter())


def fit(spec: ModelSpec, dataset: Dataset, train_indices, fit_seed: int) -> FittedModel:
    """Fit ``spec`` on the rows ``train_indices`` of ``dataset``."""
    idx = np.sort(np.asarray(train_indices, dtype=np.int64))
    if idx.size == 0:
        raise DataError("empty training set")
    adapter = get_family(spec.family)
    params = spec.param_dict
    state = adapter.fit(params, dataset.X[idx], dataset.y[idx], int(fit_seed))
    info = state.get("info", {}) if isinstance(state, dict) else {}
    return FittedModel(spec, idx, state, info)


def predict(model: FittedModel, dataset: Dataset, query_indices) -> np.ndarray:
    """Scores for the rows ``query_indices``, in the order given."""
    q = np.asarray(query_indices, dtype=np.int64)
    adapter = get_family(model.spec.family)
    Xq = dataset.X[q]
    if model.spec.family == "nnet" and Xq.shape[1] != model.state["mu"].shape[0]:
        raise DataError("query descriptors do not match the fitted dimension")
    return np.asarray(adapter.predict(model.spec.param_dict, model.state, Xq), dtype=np.float64)


def derive_fit_seed(model_id: str, split_seed: int, fold: int) -> int:
    """64-bit seed: first 8 bytes (little endian) of BLAKE2b over
    ``"<model_id>|<split_seed>|<fold>"``."""
    key = f"{model_id}|{int(split_seed)}|{int(fold)}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def cv_fold(spec: ModelSpec, dataset: Dataset, plan: FoldPlan, fold: int):
    """Fit on every fold but ``fold`` and predict ``fold``.

    Returns ``(test_indices, scores)``.
    """
    test = plan.fold_indices(fold)
    train = np.flatnonzero(plan.assignment != fold)
    model = fit(spec, dataset, train, derive_fit_seed(spec.model_id, plan.split_seed, fold))
    return test, predict(model, dataset, test)


def assemble(parts, n: int) -> np.ndarray:
    scores = np.full(n, np.nan)
    for test, s in parts:
        scores[test] = s
    return scores


def cross_validate(spec: ModelSpec, dataset: Dataset, plan: FoldPlan,
                   map_fn: Callable | None = None) -> PredictionVector:
    """Out-of-fold predictions for every observation under ``plan``.

    ``map_fn`` (e.g. ``executor.map``) may run the ``v`` fold fits in
    parallel; the result does not depend on execution order.
    """
    if plan.n != dataset.n:
        raise DataError(f"fold plan covers {plan.n} observations, dataset has {dataset.n}")
    mapper = map_fn or map
    parts = list(mapper(lambda f: cv_fold(spec, dataset, plan, f), range(plan.v)))
    return PredictionVector(assemble(parts, dataset.n), spec.model_id, plan.split_seed)


def expand_grid(family: str, grid: Mapping[str, Any], descriptor_set: str | None = None) -> list[ModelSpec]:
    """Cross product of parameter lists, first key varying slowest."""
    keys = list(grid)
    values = [v if isinstance(v, (list, tuple)) else [v] for v in grid.values()]
    specs = []

    def rec(i, acc):
        if i == len(keys):
            specs.append(ModelSpec(family, dict(acc), descriptor_set))
            return
        for v in values[i]:
            rec(i + 1, acc + [(keys[i], v)])

    rec(0, [])
    return specs

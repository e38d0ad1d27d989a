"""Predictive-performance measures on assembled cross-validation predictions.

The hit count at selection size ``T`` credits ties at the cutoff by their
expected value: when the score at rank ``T`` is shared by ``a + b`` items, of
which ``a`` fall inside the selection, each tied item counts ``a / (a + b)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import Dataset
from .exceptions import ConfigError, DataError

MAXIMIZE = "maximize"
MINIMIZE = "minimize"

#: significant digits kept when comparing scores for ties
TIE_DIGITS = 12


@dataclass(frozen=True, eq=False)
class PredictionVector:
    scores: np.ndarray
    model_id: str = ""
    split_seed: int = 0

    def __post_init__(self):
        s = np.array(self.scores, dtype=np.float64, copy=True)
        if s.ndim != 1:
            raise DataError("scores must be one-dimensional")
        if not np.all(np.isfinite(s)):
            raise DataError(f"non-finite prediction in {self.model_id or 'scores'}")
        s.flags.writeable = False
        object.__setattr__(self, "scores", s)

    def __len__(self):
        return len(self.scores)


@dataclass(frozen=True, eq=False)
class ContributionVector:
    contributions: np.ndarray
    block_ids: np.ndarray

    def total(self) -> float:
        return math.fsum(self.contributions)


@dataclass(frozen=True)
class MetricSpec:
    """Which measure to compute and how it behaves in a race.

    ``kind`` is one of ``hits``, ``ie``, ``mse``, ``misclass`` or ``custom``.
    Custom metrics supply ``func(scores, dataset) -> float`` and, when
    decomposable, ``contrib_func(scores, dataset) -> ContributionVector``.
    """

    kind: str
    T_sel: int | None = None
    orientation: str = MAXIMIZE
    block_scheme: str | None = None
    func: Callable | None = None
    contrib_func: Callable | None = None
    name: str | None = None

    @property
    def decomposable(self) -> bool:
        return self.block_scheme is not None

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind in ("hits", "ie"):
            return f"{self.kind}@{self.T_sel}"
        return self.kind

    def __str__(self):
        return self.label


def hits_metric(T_sel: int = 300) -> MetricSpec:
    return MetricSpec("hits", int(T_sel), MAXIMIZE, "actives")


def ie_metric(T_sel: int = 300) -> MetricSpec:
    return MetricSpec("ie", int(T_sel), MAXIMIZE, "actives")


def mse_metric() -> MetricSpec:
    return MetricSpec("mse", None, MINIMIZE, "all_observations")


def misclass_metric() -> MetricSpec:
    return MetricSpec("misclass", None, MINIMIZE, "all_observations")


def custom_metric(name: str, func: Callable, orientation: str = MAXIMIZE,
                  contrib_func: Callable | None = None,
                  block_scheme: str | None = None) -> MetricSpec:
    """User-supplied measure. Pass ``contrib_func`` and ``block_scheme`` to
    make it usable with observation blocks."""
    if orientation not in (MAXIMIZE, MINIMIZE):
        raise ConfigError(f"orientation must be {MAXIMIZE!r} or {MINIMIZE!r}")
    if (contrib_func is None) != (block_scheme is None):
        raise ConfigError("contrib_func and block_scheme go together")
    return MetricSpec("custom", None, orientation, block_scheme, func, contrib_func, name)


_METRIC_RE = re.compile(r"^(hits|ie)@(\d+)$")


def parse_metric(text: str) -> MetricSpec:
    """Parse ``hits@T``, ``ie@T``, ``mse`` or ``misclass``."""
    text = text.strip()
    m = _METRIC_RE.match(text)
    if m:
        T = int(m.group(2))
        if T < 1:
            raise ConfigError("selection size must be positive")
        return hits_metric(T) if m.group(1) == "hits" else ie_metric(T)
    if text == "mse":
        return mse_metric()
    if text == "misclass":
        return misclass_metric()
    raise ConfigError(f"unknown metric {text!r}; expected hits@T, ie@T, mse or misclass")


def tie_keys(scores, digits: int = TIE_DIGITS) -> np.ndarray:
    """Scores rounded to ``digits`` significant digits, for tie detection."""
    scores = np.asarray(scores, dtype=np.float64)
    fmt = f"{{:.{digits - 1}e}}"
    return np.array([float(fmt.format(s)) for s in scores.tolist()])


def _scores(predictions) -> np.ndarray:
    if isinstance(predictions, PredictionVector):
        return predictions.scores
    return np.asarray(predictions, dtype=np.float64)


def _check_hits_args(scores, dataset: Dataset, T_sel: int):
    if not dataset.is_binary:
        raise DataError("hit counts need a binary response")
    if len(scores) != dataset.n:
        raise DataError(f"{len(scores)} predictions for {dataset.n} observations")
    if not 1 <= T_sel <= dataset.n:
        raise DataError(f"selection size {T_sel} must lie in [1, n={dataset.n}]")


def _cutoff(keys: np.ndarray, T_sel: int):
    """Return (above-mask, tie-mask, tie credit a/(a+b))."""
    c = np.sort(keys)[::-1][T_sel - 1]
    above = keys > c
    tied = keys == c
    a = T_sel - int(above.sum())
    return above, tied, a / int(tied.sum())


def hits_at_T(predictions, dataset: Dataset, T_sel: int = 300,
              digits: int = TIE_DIGITS) -> float:
    """Expected hits among the top ``T_sel`` scores, ties credited fractionally.

    Parameters
    ----------
    predictions : PredictionVector or array
        One score per observation; larger means more likely active.
    dataset : Dataset
        Binary dataset supplying the responses.
    T_sel : int
        Selection size.
    digits : int
        Significant digits used to decide that two scores tie.

    Returns
    -------
    float
        ``h_{T-a} + a/(a+b) * h_tie``; the plain top-``T_sel`` count when the
        cutoff score is unique.
    """
    scores = _scores(predictions)
    _check_hits_args(scores, dataset, T_sel)
    above, tied, credit = _cutoff(tie_keys(scores, digits), T_sel)
    active = dataset.y == 1.0
    h_above = int(np.count_nonzero(above & active))
    h_tie = int(np.count_nonzero(tied & active))
    return h_above + credit * h_tie


def hit_contributions(predictions, dataset: Dataset, T_sel: int = 300,
                      digits: int = TIE_DIGITS) -> ContributionVector:
    """Per-active share of :func:`hits_at_T`: 1 above the tie region,
    ``a/(a+b)`` inside it, 0 below. Blocks are the active indices."""
    scores = _scores(predictions)
    _check_hits_args(scores, dataset, T_sel)
    above, tied, credit = _cutoff(tie_keys(scores, digits), T_sel)
    act = dataset.actives
    contrib = np.where(above[act], 1.0, np.where(tied[act], credit, 0.0))
    return ContributionVector(contrib, act.copy())


def initial_enhancement(h: float, T_sel: int, dataset: Dataset) -> float:
    """Hit rate among ``T_sel`` selected over the base activity rate."""
    if not dataset.is_binary:
        raise DataError("initial enhancement needs a binary response")
    if dataset.A == 0:
        raise DataError("initial enhancement is undefined with no actives")
    r = dataset.A / dataset.n
    return (h / T_sel) / r


def _check_length(scores, dataset):
    if len(scores) != dataset.n:
        raise DataError(f"{len(scores)} predictions for {dataset.n} observations")


def mean_squared_error(predictions, dataset: Dataset) -> float:
    scores = _scores(predictions)
    _check_length(scores, dataset)
    return float(np.mean((scores - dataset.y) ** 2))


def misclassification_rate(predictions, dataset: Dataset, threshold: float = 0.5) -> float:
    """Error rate when ``score > threshold`` predicts class 1."""
    if not dataset.is_binary:
        raise DataError("misclassification needs a binary response")
    scores = _scores(predictions)
    _check_length(scores, dataset)
    return float(np.mean((scores > threshold) != (dataset.y == 1.0)))


def evaluate(metric: MetricSpec, predictions, dataset: Dataset) -> float:
    """Scalar value of ``metric`` for one assembled prediction vector."""
    kind = metric.kind
    if kind == "hits":
        return hits_at_T(predictions, dataset, metric.T_sel)
    if kind == "ie":
        return initial_enhancement(hits_at_T(predictions, dataset, metric.T_sel),
                                   metric.T_sel, dataset)
    if kind == "mse":
        return mean_squared_error(predictions, dataset)
    if kind == "misclass":
        return misclassification_rate(predictions, dataset)
    if kind == "custom":
        return float(metric.func(_scores(predictions), dataset))
    raise ConfigError(f"unknown metric kind {kind!r}")


def contributions(metric: MetricSpec, predictions, dataset: Dataset) -> ContributionVector:
    """Per-block decomposition whose sum is :func:`evaluate`'s value."""
    if not metric.decomposable:
        raise ConfigError(f"metric {metric.label} is not decomposable")
    kind = metric.kind
    if kind == "hits":
        return hit_contributions(predictions, dataset, metric.T_sel)
    if kind == "ie":
        cv = hit_contributions(predictions, dataset, metric.T_sel)
        scale = dataset.n / (metric.T_sel * dataset.A)
        return ContributionVector(cv.contributions * scale, cv.block_ids)
    scores = _scores(predictions)
    _check_length(scores, dataset)
    ids = np.arange(dataset.n)
    if kind == "mse":
        return ContributionVector((scores - dataset.y) ** 2 / dataset.n, ids)
    if kind == "misclass":
        if not dataset.is_binary:
            raise DataError("misclassification needs a binary response")
        wrong = (scores > 0.5) != (dataset.y == 1.0)
        return ContributionVector(wrong / dataset.n, ids)
    if kind == "custom":
        return metric.contrib_func(scores, dataset)
    raise ConfigError(f"unknown metric kind {kind!r}")


def check_compatible(metric: MetricSpec, dataset: Dataset) -> None:
    if metric.kind in ("hits", "ie", "misclass") and not dataset.is_binary:
        raise ConfigError(f"metric {metric.label} needs a binary response")
    if metric.kind in ("hits", "ie") and metric.T_sel > dataset.n:
        raise ConfigError(f"selection size {metric.T_sel} exceeds n={dataset.n}")

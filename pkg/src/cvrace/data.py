"""Datasets, CSV ingestion, fold plans and synthetic assay data."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ._rng import CounterRNG
from .exceptions import DataError

BINARY = "binary"
CONTINUOUS = "continuous"


class Observation(NamedTuple):
    id: int
    descriptors: np.ndarray
    response: float


def _readonly(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Descriptor matrix plus response vector.

    Parameters
    ----------
    X : array, shape (n, d)
        Descriptor values, one row per observation.
    y : array, shape (n,)
        Responses. Binary datasets hold 0.0/1.0.
    descriptor_set_name : str
        Label of the descriptor family, e.g. ``"set_a"``.
    response_kind : {"binary", "continuous"}, optional
        Inferred from ``y`` when omitted.
    """

    X: np.ndarray
    y: np.ndarray
    descriptor_set_name: str = "default"
    response_kind: str | None = None
    actives: np.ndarray | None = field(init=False, default=None)

    def __post_init__(self):
        X = _readonly(self.X)
        y = _readonly(self.y)
        if X.ndim == 1:
            X = _readonly(X.reshape(-1, 1))
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise DataError(f"descriptor matrix {X.shape} does not match response {y.shape}")
        if X.shape[0] < 2:
            raise DataError("a dataset needs at least 2 observations")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("descriptors and responses must be finite")
        is_binary = bool(np.all((y == 0.0) | (y == 1.0)))
        kind = self.response_kind
        if kind is None:
            kind = BINARY if is_binary else CONTINUOUS
        if kind not in (BINARY, CONTINUOUS):
            raise DataError(f"unknown response kind {kind!r}")
        if kind == BINARY and not is_binary:
            raise DataError("binary dataset has responses outside {0, 1}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "response_kind", kind)
        if kind == BINARY:
            act = np.flatnonzero(y == 1.0)
            act.flags.writeable = False
            object.__setattr__(self, "actives", act)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def A(self) -> int:
        """Number of actives (binary datasets only)."""
        if self.actives is None:
            raise DataError("active count is undefined for a continuous response")
        return len(self.actives)

    @property
    def is_binary(self) -> bool:
        return self.response_kind == BINARY

    @property
    def observations(self) -> list[Observation]:
        return [Observation(i, self.X[i], float(self.y[i])) for i in range(self.n)]

    def __repr__(self):
        extra = f", A={self.A}" if self.is_binary else ""
        return (f"Dataset(n={self.n}, d={self.d}, set={self.descriptor_set_name!r}, "
                f"{self.response_kind}{extra})")


def load_csv(path, response_column: str, descriptor_set_name: str | None = None) -> Dataset:
    """Read a header-first, comma-separated file into a :class:`Dataset`.

    Every column other than ``response_column`` is a numeric descriptor.
    Rows keep file order. Problems are reported with 1-based line numbers.
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if response_column not in header:
            raise DataError(f"{path}: response column {response_column!r} not in header")
        r_idx = header.index(response_column)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {line_no} has {len(row)} fields, "
                                f"expected {len(header)}")
            vals = []
            for col, cell in zip(header, row):
                cell = cell.strip()
                if cell == "":
                    raise DataError(f"{path}: line {line_no}, column {col!r}: missing value")
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: line {line_no}, column {col!r}: "
                                    f"non-numeric value {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: line {line_no}, column {col!r}: non-finite value")
                vals.append(v)
            rows.append(vals)
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 data rows, found {len(rows)}")
    table = np.array(rows, dtype=np.float64)
    y = table[:, r_idx]
    X = np.delete(table, r_idx, axis=1)
    if X.shape[1] == 0:
        raise DataError(f"{path}: no descriptor columns")
    return Dataset(X, y, descriptor_set_name or path.stem)


def write_csv(dataset: Dataset, path, response_column: str = "active") -> None:
    """Write ``dataset`` in the format :func:`load_csv` reads."""
    header = [f"x{j + 1}" for j in range(dataset.d)] + [response_column]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        binary = dataset.is_binary
        for xi, yi in zip(dataset.X, dataset.y):
            w.writerow([repr(float(v)) for v in xi] + [str(int(yi)) if binary else repr(float(yi))])


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Assignment of ``n`` observations to ``v`` folds for one data split."""

    split_seed: int
    v: int
    assignment: np.ndarray

    @property
    def n(self) -> int:
        return len(self.assignment)

    def fold_indices(self, f: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == f)

    def folds(self) -> list[np.ndarray]:
        return [self.fold_indices(f) for f in range(self.v)]

    def fold_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.v)


def make_fold_plan(dataset: Dataset | int, v: int, split_seed: int,
                   stratified: bool = False) -> FoldPlan:
    """Deal a seeded random permutation of the observations into ``v`` folds.

    Position ``i`` of the permutation goes to fold ``i mod v``, so fold sizes
    differ by at most one. With ``stratified=True`` the actives are dealt
    first (in their own permuted order), then the inactives, which spreads the
    actives as evenly as possible over folds.

    ``dataset`` may also be the observation count ``n`` (unstratified only).
    """
    n = dataset if isinstance(dataset, (int, np.integer)) else dataset.n
    n = int(n)
    if not isinstance(v, (int, np.integer)) or not 2 <= v <= n:
        raise DataError(f"fold count v={v} must satisfy 2 <= v <= n={n}")
    rng = CounterRNG(split_seed)
    if stratified:
        if isinstance(dataset, (int, np.integer)) or not dataset.is_binary:
            raise DataError("stratified folds need a binary dataset")
        act = dataset.actives
        inact = np.flatnonzero(dataset.y == 0.0)
        order = np.concatenate([act[rng.permutation(len(act))],
                                inact[rng.permutation(len(inact))]])
    else:
        order = rng.permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[order] = np.arange(n) % v
    assignment.flags.writeable = False
    return FoldPlan(int(split_seed), int(v), assignment)


def generate_synthetic(n: int = 500, d: int = 5, active_rate: float = 0.1,
                       signal: float = 1.0, seed: int = 0,
                       descriptor_set_name: str = "synthetic") -> Dataset:
    """Binary assay-like data with a planted active/inactive shift.

    Descriptors are standard normal. Exactly ``round(n * active_rate)``
    observations, chosen at random, are active, and their descriptors are
    moved by ``signal`` along a random unit direction. ``signal=0`` plants
    a null dataset.
    """
    if n < 10:
        raise DataError("n must be at least 10")
    if d < 1:
        raise DataError("d must be at least 1")
    if not 0.0 < active_rate < 1.0:
        raise DataError("active_rate must lie strictly between 0 and 1")
    if not math.isfinite(signal):
        raise DataError("signal must be finite")
    n_act = int(math.floor(n * active_rate + 0.5))
    if not 1 <= n_act <= n - 1:
        raise DataError(f"active_rate={active_rate} plants {n_act} actives out of {n}")
    rng = CounterRNG(seed)
    act = rng.permutation(n)[:n_act]
    X = rng.normal(n * d).reshape(n, d)
    direction = rng.normal(d)
    direction /= np.linalg.norm(direction)
    y = np.zeros(n)
    y[act] = 1.0
    X[act] += signal * direction
    return Dataset(X, y, descriptor_set_name, BINARY)

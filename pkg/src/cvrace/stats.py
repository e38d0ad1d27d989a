"""Randomized-block ANOVA, the studentized range distribution and Tukey tests.

The studentized range CDF is evaluated as

    P(Q <= q) = int_0^inf f_df(s) W_m(q s) ds
    W_m(w)    = m int phi(z) [Phi(z) - Phi(z - w)]^(m-1) dz

where ``f_df`` is the density of ``sqrt(chi2_df / df)``. The inner integral
uses fixed 64-node Gauss-Legendre panels on [-8, 0] and [0, 8]; the outer integral is
adaptive Gauss-Legendre over a finite window holding all but ~1e-16 of the
scale density. ``df >= 1e4`` (or ``inf``) uses ``W_m(q)`` directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, ndtr

from .exceptions import ConvergenceError, DataError

MAXIMIZE = "maximize"
MINIMIZE = "minimize"

LARGE_DF = 1.0e4
_GL64 = np.polynomial.legendre.leggauss(64)
# one 64-node panel on each of [-8, 0] and [0, 8]
_Z_NODES = np.concatenate([4.0 * (_GL64[0] - 1.0), 4.0 * (_GL64[0] + 1.0)])
_Z_WEIGHTS = np.concatenate([4.0 * _GL64[1], 4.0 * _GL64[1]])
_PHI_Z = np.exp(-0.5 * _Z_NODES**2) / math.sqrt(2.0 * math.pi)
_Z_POS = _Z_NODES > 0
_S_NODES, _S_WEIGHTS = np.polynomial.legendre.leggauss(20)


def _range_prob(w, m: int) -> np.ndarray:
    """P(range of m iid standard normals <= w), vectorized over ``w``."""
    w = np.atleast_1d(np.asarray(w, dtype=np.float64))
    z = _Z_NODES[None, :]
    ww = w[:, None]
    # Phi(z) - Phi(z - w), written in upper tails for z > 0 to avoid cancellation
    lower = ndtr(z) - ndtr(z - ww)
    upper = ndtr(ww - z) - ndtr(-z)
    diff = np.where(_Z_POS[None, :], upper, lower)
    diff = np.clip(diff, 0.0, 1.0)
    vals = m * (diff ** (m - 1)) @ (_Z_WEIGHTS * _PHI_Z)
    vals = np.where(w > 0, vals, 0.0)
    return np.clip(vals, 0.0, 1.0)


def _scale_logpdf(s, df):
    s = np.asarray(s, dtype=np.float64)
    h = 0.5 * df
    with np.errstate(divide="ignore"):
        return (h * math.log(df) - gammaln(h) - (h - 1.0) * math.log(2.0)
                + (df - 1.0) * np.log(s) - h * s * s)


def _scale_window(df):
    centre = math.sqrt(max(df - 1.0, 0.0) / df)
    spread = 1.0 / math.sqrt(2.0 * df)
    return max(0.0, centre - 14.0 * spread), centre + 14.0 * spread + 2.0 / math.sqrt(df)


def _gl(func, a, b):
    half = 0.5 * (b - a)
    x = a + half * (_S_NODES + 1.0)
    return half * float(np.dot(_S_WEIGHTS, func(x)))


def _adaptive(func, a, b, tol=1e-11, max_depth=40):
    total = 0.0
    stack = [(a, b, _gl(func, a, b), 0)]
    worst = 0.0
    while stack:
        lo, hi, whole, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        left, right = _gl(func, lo, mid), _gl(func, mid, hi)
        err = abs(left + right - whole)
        if err <= tol or depth >= max_depth:
            total += left + right
            worst = max(worst, err)
            continue
        stack.append((lo, mid, left, depth + 1))
        stack.append((mid, hi, right, depth + 1))
    return total, worst


def _check_params(m, df):
    if not (isinstance(m, (int, np.integer)) and m >= 2):
        raise ValueError(f"group count m={m} must be an integer >= 2")
    if not (df >= 1 or math.isinf(df)):
        raise ValueError(f"degrees of freedom df={df} must be >= 1")


def studentized_range_cdf(q: float, m: int, df: float) -> float:
    """P(Q <= q) for the studentized range of ``m`` means with ``df`` error
    degrees of freedom. ``df=math.inf`` gives the known-variance limit."""
    _check_params(m, df)
    if q <= 0:
        return 0.0
    if df >= LARGE_DF:
        return float(_range_prob(q, m)[0])

    def integrand(s):
        return np.exp(_scale_logpdf(s, df)) * _range_prob(q * s, m)

    lo, hi = _scale_window(df)
    # split at the scale density's mode so the adaptive rule sees the peak
    mode = math.sqrt(max(df - 1.0, 0.0) / df)
    pieces = [lo, hi] if not lo < mode < hi else [lo, mode, hi]
    total = sum(_adaptive(integrand, a, b)[0] for a, b in zip(pieces[:-1], pieces[1:]))
    return min(max(total, 0.0), 1.0)


@lru_cache(maxsize=4096)
def _quantile_cached(alpha, m, df, ptol):
    target = 1.0 - alpha

    def f(q):
        return studentized_range_cdf(q, m, df) - target

    lo, hi = 0.0, 4.0
    f_hi = f(hi)
    while f_hi < 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e8:
            raise ConvergenceError(f"could not bracket the quantile for alpha={alpha}, "
                                   f"m={m}, df={df}", achieved=abs(f_hi))
        f_hi = f(hi)
    q = 0.5 * (lo + hi)
    fq = f(q)
    for _ in range(200):
        if abs(fq) <= ptol:
            break
        if fq < 0:
            lo = q
        else:
            hi = q
        q = 0.5 * (lo + hi)
        fq = f(q)
    # Newton polish with a central-difference slope, kept inside the bracket
    for _ in range(8):
        if abs(fq) <= 1e-12:
            break
        h = 1e-6 * max(q, 1.0)
        slope = (f(q + h) - f(q - h)) / (2.0 * h)
        if not slope > 0:
            break
        step = q - fq / slope
        if not lo <= step <= hi:
            break
        f_step = f(step)
        if abs(f_step) >= abs(fq):
            break
        if f_step < 0:
            lo = step
        else:
            hi = step
        q, fq = step, f_step
    if abs(fq) > ptol:
        raise ConvergenceError(f"studentized range quantile did not converge for alpha={alpha}, "
                               f"m={m}, df={df}", achieved=abs(fq))
    return q


def studentized_range_quantile(alpha: float, m: int, df: float, ptol: float = 1e-6) -> float:
    """Upper-``alpha`` critical value ``q`` with ``P(Q <= q) = 1 - alpha``.

    Parameters
    ----------
    alpha : float
        Upper tail probability, ``0 < alpha < 1``.
    m : int
        Number of means compared.
    df : float
        Error degrees of freedom; ``math.inf`` for the known-variance case.
    ptol : float
        Maximum absolute error in probability accepted from the root finder.

    Raises
    ------
    ConvergenceError
        If the tolerance cannot be met.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha={alpha} must lie strictly between 0 and 1")
    _check_params(m, df)
    return _quantile_cached(float(alpha), int(m), float(df), float(ptol))


def tukey_value(alpha: float, m: int, B: int, mse: float) -> float:
    """Tukey threshold ``q_alpha(m, (m-1)(B-1)) * sqrt(mse / B)``."""
    if mse < 0:
        raise ValueError("mse must be non-negative")
    if B < 2:
        raise ValueError("need at least 2 blocks")
    q = studentized_range_quantile(alpha, m, (m - 1) * (B - 1))
    return q * math.sqrt(mse / B)


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Metric values indexed by (model, block), a complete two-way layout."""

    values: np.ndarray
    model_ids: tuple
    block_kind: str = "splits"
    block_ids: tuple | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 2:
            raise DataError("score matrix must be two-dimensional")
        m, B = v.shape
        ids = tuple(self.model_ids)
        if len(ids) != m:
            raise DataError(f"{len(ids)} model ids for {m} rows")
        if len(set(ids)) != m:
            raise DataError("model ids must be unique")
        if not np.all(np.isfinite(v)):
            raise DataError("score matrix has missing or non-finite cells")
        blocks = tuple(range(B)) if self.block_ids is None else tuple(self.block_ids)
        if len(blocks) != B:
            raise DataError(f"{len(blocks)} block ids for {B} columns")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "model_ids", ids)
        object.__setattr__(self, "block_ids", blocks)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def B(self) -> int:
        return self.values.shape[1]

    def negated(self) -> "ScoreMatrix":
        return ScoreMatrix(-self.values, self.model_ids, self.block_kind, self.block_ids)


def _require_testable(matrix: ScoreMatrix):
    if matrix.m < 2 or matrix.B < 2:
        raise DataError(f"a block test needs m >= 2 and B >= 2, got {matrix.m} x {matrix.B}")


def block_means(matrix: ScoreMatrix) -> np.ndarray:
    """Row means over blocks."""
    return matrix.values.mean(axis=1)


def block_anova_mse(matrix: ScoreMatrix) -> tuple[float, int]:
    """Error mean square and degrees of freedom of the additive two-way model."""
    _require_testable(matrix)
    y = matrix.values
    resid = y - y.mean(axis=1, keepdims=True) - y.mean(axis=0, keepdims=True) + y.mean()
    df = (matrix.m - 1) * (matrix.B - 1)
    return float(np.sum(resid**2) / df), df


@dataclass(frozen=True, eq=False)
class TukeyOutcome:
    model_ids: tuple
    means: np.ndarray
    mse: float
    error_df: int
    q_value: float
    tukey_T: float
    eliminated: frozenset
    orientation: str = MAXIMIZE
    n_blocks: int = 0
    block_kind: str = "splits"
    leaders: tuple = field(default=())

    @property
    def ci_half_width(self) -> float:
        return self.tukey_T

    @property
    def survivors(self) -> tuple:
        return tuple(i for i in self.model_ids if i not in self.eliminated)

    def mean_of(self, model_id) -> float:
        return float(self.means[self.model_ids.index(model_id)])

    def interval(self, a, b) -> tuple[float, float]:
        """Simultaneous confidence interval for effect(a) - effect(b)."""
        diff = self.mean_of(a) - self.mean_of(b)
        return diff - self.tukey_T, diff + self.tukey_T

    def intervals(self) -> dict:
        ids = self.model_ids
        return {(a, b): self.interval(a, b)
                for i, a in enumerate(ids) for b in ids[i + 1:]}


def tukey_eliminate(matrix: ScoreMatrix, alpha: float = 0.05,
                    orientation: str = MAXIMIZE) -> TukeyOutcome:
    """Drop every model whose mean trails the best mean by more than ``T``.

    For ``orientation="minimize"`` the values are negated internally, so
    "best" means smallest. Models tied for best are always kept.
    """
    if orientation not in (MAXIMIZE, MINIMIZE):
        raise ValueError(f"unknown orientation {orientation!r}")
    _require_testable(matrix)
    means = block_means(matrix)
    mse, df = block_anova_mse(matrix)
    q = studentized_range_quantile(alpha, matrix.m, df)
    T = q * math.sqrt(mse / matrix.B)
    signed = means if orientation == MAXIMIZE else -means
    best = signed.max()
    eliminated = frozenset(mid for mid, v in zip(matrix.model_ids, signed) if best - v > T)
    leaders = tuple(mid for mid, v in zip(matrix.model_ids, signed) if v == best)
    return TukeyOutcome(matrix.model_ids, means, mse, df, q, T, eliminated,
                        orientation, matrix.B, matrix.block_kind, leaders)

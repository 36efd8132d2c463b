"""Locally weighted polynomial regression with derivative estimates.

Every fit is a weighted least-squares polynomial in ``t - t0`` using tricube
weights over the ``ceil(span * n)`` nearest sample times. The bandwidth at
``t0`` is the distance to the farthest of those neighbours, so it follows
the local sampling density.
"""

import math
from dataclasses import dataclass

import numba
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import AllFailed, InsufficientData, SingularFit
from .validation import check_signal, check_span, check_times

_OK, _INSUFFICIENT, _SINGULAR = 0, 1, 2
_PIVOT_TOL = 1e-12


@dataclass(frozen=True)
class LwprConfig:
    span: float = 0.05
    degree: int = 2

    def __post_init__(self):
        check_span(self.span)
        if int(self.degree) != self.degree or self.degree < 0:
            raise ValueError(f"degree must be a nonnegative integer, got {self.degree!r}")

    def n_neighbors(self, n):
        return min(n, max(1, int(math.ceil(self.span * n - 1e-9))))


@dataclass
class SmoothedSignal:
    times: np.ndarray
    y_hat: np.ndarray
    dy_hat: np.ndarray
    d2y_hat: np.ndarray
    config: LwprConfig
    hat_diag: np.ndarray = None


def tricube_weight(u):
    """``(1 - |u|^3)^3`` on ``|u| < 1`` and zero elsewhere."""
    a = np.abs(np.asarray(u, dtype=float))
    w = np.where(a < 1.0, (1.0 - np.minimum(a, 1.0) ** 3) ** 3, 0.0)
    return w if w.ndim else float(w)


@numba.njit(cache=True, nogil=True)
def _window(t, t0, k):
    """Half-open index range of the `k` samples nearest to `t0` (t sorted)."""
    n = t.size
    hi = np.searchsorted(t, t0)
    lo = hi
    while hi - lo < k:
        if lo == 0:
            hi += 1
        elif hi == n:
            lo -= 1
        elif t0 - t[lo - 1] <= t[hi] - t0:
            lo -= 1
        else:
            hi += 1
    return lo, hi


@numba.njit(cache=True, nogil=True)
def _solve_spd(A, b, p):
    """Cholesky solve of the leading p x p block; returns (x, ok)."""
    L = np.zeros((p, p))
    scale = 0.0
    for i in range(p):
        if A[i, i] > scale:
            scale = A[i, i]
    for j in range(p):
        s = A[j, j]
        for m in range(j):
            s -= L[j, m] * L[j, m]
        if s <= _PIVOT_TOL * scale:
            return np.zeros(p), False
        L[j, j] = math.sqrt(s)
        for i in range(j + 1, p):
            s = A[i, j]
            for m in range(j):
                s -= L[i, m] * L[j, m]
            L[i, j] = s / L[j, j]
    z = np.empty(p)
    for i in range(p):
        s = b[i]
        for m in range(i):
            s -= L[i, m] * z[m]
        z[i] = s / L[i, i]
    x = np.empty(p)
    for i in range(p - 1, -1, -1):
        s = z[i]
        for m in range(i + 1, p):
            s -= L[m, i] * x[m]
        x[i] = s / L[i, i]
    return x, True


@numba.njit(cache=True, nogil=True)
def _fit_many(t, y, queries, k, degree, out, hat):
    """Local fits at each query; out[:, j] holds the j-th derivative (j <= 2).

    Returns (status, index of the failing query).
    """
    p = degree + 1
    A = np.empty((p, p))
    rhs = np.empty(p)
    e0 = np.zeros(p)
    e0[0] = 1.0
    mom = np.empty(2 * degree + 1)
    for q in range(queries.size):
        t0 = queries[q]
        lo, hi = _window(t, t0, k)
        h = max(t0 - t[lo], t[hi - 1] - t0)
        if not h > 0.0:
            return _INSUFFICIENT, q
        mom[:] = 0.0
        rhs[:] = 0.0
        nnz = 0
        distinct = 0
        last = np.nan
        for i in range(lo, hi):
            u = (t[i] - t0) / h
            a = abs(u)
            if a >= 1.0:
                continue
            c = 1.0 - a * a * a
            w = c * c * c
            nnz += 1
            if t[i] != last:
                distinct += 1
                last = t[i]
            xp = w
            for m in range(2 * degree + 1):
                mom[m] += xp
                if m < p:
                    rhs[m] += xp * y[i]
                xp *= u
        if nnz < p:
            return _INSUFFICIENT, q
        if distinct < p:
            return _SINGULAR, q
        for i in range(p):
            for j in range(p):
                A[i, j] = mom[i + j]
        coef, ok = _solve_spd(A, rhs, p)
        if not ok:
            return _SINGULAR, q
        out[q, 0] = coef[0]
        if degree >= 1:
            out[q, 1] = coef[1] / h
        else:
            out[q, 1] = 0.0
        if degree >= 2:
            out[q, 2] = 2.0 * coef[2] / (h * h)
        else:
            out[q, 2] = 0.0
        z, ok = _solve_spd(A, e0, p)
        hat[q] = z[0]
    return _OK, -1


def _run(times, values, queries, config):
    n = times.size
    k = config.n_neighbors(n)
    if k < config.degree + 1:
        raise InsufficientData(
            f"span {config.span} gives {k} neighbours; degree {config.degree} needs "
            f"at least {config.degree + 1}")
    out = np.empty((queries.size, 3))
    hat = np.empty(queries.size)
    status, where = _fit_many(times, values, queries, k, int(config.degree), out, hat)
    if status == _INSUFFICIENT:
        raise InsufficientData(
            f"fewer than {config.degree + 1} points carry weight at t0={queries[where]!r}")
    if status == _SINGULAR:
        raise SingularFit(f"weighted normal equations are singular at t0={queries[where]!r}")
    return out, hat


def _prepare(times, values):
    t = check_times(times, min_len=1, strict=False)
    y = check_signal(values, t.size)
    return t, y


def lwpr_eval(times, values, t0, config=LwprConfig()):
    """Local fit at a single time; returns ``(y, dy, d2y)``."""
    t, y = _prepare(times, values)
    out, _ = _run(t, y, np.array([float(t0)]), config)
    return float(out[0, 0]), float(out[0, 1]), float(out[0, 2])


def smooth_trace(times, values, config=LwprConfig()):
    """Local fit at every sample time. Spacing may be uneven."""
    t, y = _prepare(times, values)
    out, hat = _run(t, y, t, config)
    return SmoothedSignal(t, out[:, 0].copy(), out[:, 1].copy(), out[:, 2].copy(),
                          config, hat)


def gcv_score(times, values, span, degree=2):
    """``n * RSS / (n - tr(H))**2``; infinite when tr(H) >= n."""
    t, y = _prepare(times, values)
    out, hat = _run(t, y, t, LwprConfig(span, degree))
    n = t.size
    rss = float(np.sum((y - out[:, 0]) ** 2))
    dof = n - float(np.sum(hat))
    if dof <= 0:
        return math.inf
    return n * rss / dof ** 2


def gcv_scores(times, values, candidate_spans, degree=2):
    """GCV score per candidate; failed fits score ``nan``."""
    t, y = _prepare(times, values)
    scores = []
    for span in candidate_spans:
        try:
            scores.append(gcv_score(t, y, span, degree))
        except (SingularFit, InsufficientData):
            scores.append(math.nan)
    return np.array(scores, dtype=float)


def gcv_select(times, values, candidate_spans, degree=2):
    """Span minimising GCV; near-ties go to the larger span."""
    spans = [check_span(s) for s in candidate_spans]
    if len(spans) < 2:
        raise ValueError("need at least two candidate spans")
    t, y = _prepare(times, values)
    scores = gcv_scores(t, y, spans, degree)
    ok = np.isfinite(scores)
    if not ok.any():
        raise AllFailed("every candidate span produced a singular or empty fit")
    best = scores[ok].min()
    # roundoff-level differences count as ties
    atol = 1e-20 * max(1.0, float(np.mean(y ** 2)))
    tied = ok & (scores <= best * (1.0 + 1e-9) + atol)
    return max(s for s, keep in zip(spans, tied) if keep)


def default_span_grid(n, degree=2, max_span=1.0, num=12):
    """Geometric span grid from the smallest usable neighbourhood upward."""
    lo = (degree + 3) / n
    if lo >= max_span:
        return [max_span]
    return list(np.unique(np.geomspace(lo, max_span, num)))


class LocalPolynomialRegression(RegressorMixin, BaseEstimator):
    """Scikit-learn style wrapper around the local polynomial smoother.

    Parameters
    ----------
    span : float or None
        Nearest-neighbour fraction. ``None`` selects it by GCV over
        `candidate_spans` during :meth:`fit`.
    degree : int
        Local polynomial degree.
    candidate_spans : sequence of float or None
        GCV grid; defaults to :func:`default_span_grid`.

    Attributes
    ----------
    span_ : float
        Span actually used.
    gcv_scores_ : ndarray or None
        Scores over the candidate grid when GCV ran.
    """

    def __init__(self, span=None, degree=2, candidate_spans=None):
        self.span = span
        self.degree = degree
        self.candidate_spans = candidate_spans

    def fit(self, X, y):
        t = _column(X)
        order = np.argsort(t, kind="stable")
        t = check_times(t[order], min_len=self.degree + 1, strict=False)
        y = check_signal(np.asarray(y, dtype=float)[order], t.size, name="y")
        self.gcv_scores_ = None
        if self.span is None:
            grid = self.candidate_spans or default_span_grid(t.size, self.degree)
            self.span_ = gcv_select(t, y, grid, self.degree)
            self.gcv_scores_ = gcv_scores(t, y, grid, self.degree)
        else:
            self.span_ = check_span(self.span)
        self.times_ = t
        self.values_ = y
        self.n_features_in_ = 1
        return self

    def predict(self, X, deriv=0):
        """Smoothed value (``deriv=0``) or first/second derivative at X."""
        check_is_fitted(self, "span_")
        if deriv not in (0, 1, 2):
            raise ValueError("deriv must be 0, 1 or 2")
        q = _column(X)
        out, _ = _run(self.times_, self.values_, q, LwprConfig(self.span_, self.degree))
        return out[:, deriv].copy()


def _column(X):
    a = np.asarray(X, dtype=float)
    if a.ndim == 2:
        if a.shape[1] != 1:
            raise ValueError(f"expected a single time column, got shape {a.shape}")
        a = a[:, 0]
    if a.ndim != 1:
        raise ValueError(f"expected 1-D times, got shape {a.shape}")
    return a

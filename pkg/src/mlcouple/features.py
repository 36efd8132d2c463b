"""Cumulative power, mean voltage, and the conditioned likelihood built on them."""

import math
from dataclasses import dataclass, fields

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DegenerateTimes, LengthMismatch, NonFinite, NonPositiveSd, SimulationFailed
from .sim import DEFAULT_IC, MLParams, simulate_on_grid
from .smooth import LwprConfig, default_span_grid, gcv_select, smooth_trace
from .validation import check_positive, check_times, check_trace_array

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class PowerCurve:
    times: np.ndarray
    P: np.ndarray
    channel: int = 0

    def __len__(self):
        return self.times.size


@dataclass(frozen=True)
class Theta:
    """The eight sampled quantities, all strictly positive."""

    I_app: float
    g_syn: float
    pscale1: float = 1.0
    pscale2: float = 1.0
    pleak1: float = 1.0
    pleak2: float = 1.0
    mstd1: float = 10.0
    mstd2: float = 10.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{f.name} must be finite and > 0, got {v!r}")

    @classmethod
    def names(cls):
        return tuple(f.name for f in fields(cls))

    def to_array(self):
        return np.array([getattr(self, n) for n in self.names()], dtype=float)

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=float).ravel()
        if a.size != 8:
            raise ValueError(f"theta has 8 components, got {a.size}")
        return cls(*map(float, a))

    def to_dict(self):
        return {n: getattr(self, n) for n in self.names()}


def cumulative_power(times, d2y, channel=0):
    """Running Riemann sum of ``dt * d2y**2``; the first term reuses the first step."""
    t = np.asarray(times, dtype=float)
    d2 = np.asarray(d2y, dtype=float)
    if t.shape != d2.shape or t.ndim != 1:
        raise LengthMismatch(f"times {t.shape} and d2y {d2.shape} differ")
    t = check_times(t, min_len=2)
    dt = np.empty_like(t)
    dt[1:] = np.diff(t)
    dt[0] = dt[1]
    return PowerCurve(t, np.cumsum(dt * d2 * d2), channel)


def model_power(raw, pleak):
    check_positive(pleak, "pleak")
    return PowerCurve(raw.times, raw.P * pleak, raw.channel)


def p0_estimate(P_data):
    """RMS residual of the least-squares line of P on t (divisor n)."""
    t = np.asarray(P_data.times, dtype=float)
    P = np.asarray(P_data.P, dtype=float)
    if t.size < 3:
        raise ValueError("p0 needs at least 3 points")
    tc = t - t.mean()
    sxx = float(tc @ tc)
    if sxx == 0:
        raise DegenerateTimes("all times are equal")
    slope = float(tc @ (P - P.mean())) / sxx
    resid = P - P.mean() - slope * tc
    return math.sqrt(float(resid @ resid) / t.size)


def power_log_likelihood(P_data, P_model, p0, pscale):
    """Sum of Gaussian log-densities of the power residuals.

    The standard deviation at each time is ``p0 + pscale * P_data``.
    """
    if len(P_data) != len(P_model):
        raise LengthMismatch("power curves differ in length")
    sd = p0 + pscale * np.asarray(P_data.P)
    if not np.all(sd > 0):
        raise NonPositiveSd("p0 + pscale * P_data must be positive everywhere")
    z = (np.asarray(P_data.P) - np.asarray(P_model.P)) / sd
    return float(-np.sum(np.log(sd)) - 0.5 * float(z @ z) - sd.size * _LOG_SQRT_2PI)


def mean_log_likelihood(vbar_data, vbar_model, mstd):
    if not mstd > 0:
        raise NonPositiveSd(f"mstd must be positive, got {mstd!r}")
    z = (vbar_data - vbar_model) / mstd
    return -math.log(mstd) - _LOG_SQRT_2PI - 0.5 * z * z


def fourier_power_slope(coeffs):
    """Asymptotic slope of the cumulative power of a finite Fourier series.

    `coeffs` is an iterable of ``(a_k, b_k, phi_k)`` with frequencies in
    cycles per unit time; the constant term does not contribute.
    """
    total = 0.0
    for a, b, phi in coeffs:
        total += phi ** 4 * (a * a + b * b)
    return 8.0 * math.pi ** 4 * total


# ---------------------------------------------------------------------------
# data-side cache and the conditioned likelihood


@dataclass(frozen=True)
class ChannelFeatures:
    power: PowerCurve
    p0: float
    mean: float
    span: float


@dataclass(frozen=True)
class LikelihoodConfig:
    """Simulation and smoothing settings used on the model side.

    ``data_spans``/``model_spans`` of ``None`` select spans by GCV over
    `candidate_spans` (default: :func:`default_span_grid` up to 5%).
    """

    params: MLParams = MLParams()
    ic: tuple = tuple(DEFAULT_IC.to_array())
    dt: float = 0.05
    degree: int = 2
    data_spans: tuple = None
    model_spans: tuple = None
    candidate_spans: tuple = None


def _channel_spans(times, channels, spans, config):
    if spans is not None:
        spans = tuple(float(s) for s in spans)
        if len(spans) != 2:
            raise ValueError("need one span per channel")
        return spans
    grid = config.candidate_spans or default_span_grid(times.size, config.degree,
                                                       max_span=0.05, num=12)
    return tuple(gcv_select(times, y, grid, config.degree) for y in channels)


def channel_features(times, values, span, degree=2, channel=0):
    sm = smooth_trace(times, values, LwprConfig(span, degree))
    power = cumulative_power(times, sm.d2y_hat, channel)
    return power, float(np.mean(values))


class DataFeatures:
    """Immutable per-channel power curves, p0 values and means of the data."""

    def __init__(self, times, v1, v2, config=LikelihoodConfig()):
        self.times = check_times(times, min_len=3)
        self.config = config
        volts = (np.asarray(v1, dtype=float), np.asarray(v2, dtype=float))
        spans = _channel_spans(self.times, volts, config.data_spans, config)
        chans = []
        for k, (y, span) in enumerate(zip(volts, spans)):
            power, mean = channel_features(self.times, y, span, config.degree, k)
            chans.append(ChannelFeatures(power, p0_estimate(power), mean, span))
        self.channels = tuple(chans)

    @classmethod
    def from_trace(cls, trace, config=LikelihoodConfig()):
        arr = check_trace_array(trace)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], config)

    @property
    def spans(self):
        return tuple(c.span for c in self.channels)


class ConditionedLikelihood:
    """Log of the product of power and mean-voltage likelihoods of both neurons.

    The model is simulated on the data time grid with the configured
    parameters except ``I_app`` and ``g_syn``, which come from theta.
    """

    def __init__(self, data, config=LikelihoodConfig(), model_spans=None):
        self.data = data
        self.config = config
        self.model_spans = tuple(model_spans or config.model_spans or data.spans)

    def model_features(self, I_app, g_syn):
        """Unscaled model power curves and means, or SimulationFailed."""
        params = self.config.params.replace(I_app=float(I_app), g_syn=float(g_syn))
        try:
            tr = simulate_on_grid(params, self.data.times, self.config.ic, self.config.dt)
        except NonFinite as exc:
            raise SimulationFailed(str(exc)) from exc
        out = []
        for k, (y, span) in enumerate(zip((tr.v1, tr.v2), self.model_spans)):
            out.append(channel_features(self.data.times, y, span, self.config.degree, k))
        return out

    def components(self, theta):
        """The four log-likelihood terms: power_1, power_2, mean_1, mean_2."""
        model = self.model_features(theta.I_app, theta.g_syn)
        pscale = (theta.pscale1, theta.pscale2)
        pleak = (theta.pleak1, theta.pleak2)
        mstd = (theta.mstd1, theta.mstd2)
        power_terms = []
        mean_terms = []
        for k, (ch, (raw, mean)) in enumerate(zip(self.data.channels, model)):
            pm = model_power(raw, pleak[k])
            power_terms.append(power_log_likelihood(ch.power, pm, ch.p0, pscale[k]))
            mean_terms.append(mean_log_likelihood(ch.mean, mean, mstd[k]))
        return {"power1": power_terms[0], "power2": power_terms[1],
                "mean1": mean_terms[0], "mean2": mean_terms[1]}

    def __call__(self, theta):
        c = self.components(theta)
        return (c["power1"] + c["power2"]) + (c["mean1"] + c["mean2"])


def conditioned_log_likelihood(data, theta, config=LikelihoodConfig()):
    """One-shot conditioned log-likelihood of `theta` given a voltage trace."""
    feats = data if isinstance(data, DataFeatures) else DataFeatures.from_trace(data, config)
    return ConditionedLikelihood(feats, config)(theta)


class CumulativePowerTransformer(TransformerMixin, BaseEstimator):
    """Map a two-channel voltage trace to its two cumulative power curves.

    ``fit`` fixes one smoothing span per channel (GCV when `spans` is None);
    ``transform`` returns an ``(n, 2)`` array of cumulative power.
    """

    def __init__(self, spans=None, degree=2, candidate_spans=None):
        self.spans = spans
        self.degree = degree
        self.candidate_spans = candidate_spans

    def fit(self, X, y=None):
        arr = check_trace_array(X)
        cfg = LikelihoodConfig(degree=self.degree, candidate_spans=self.candidate_spans)
        self.spans_ = _channel_spans(arr[:, 0], (arr[:, 1], arr[:, 2]), self.spans, cfg)
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        check_is_fitted(self, "spans_")
        arr = check_trace_array(X)
        cols = []
        for k, span in enumerate(self.spans_):
            power, _ = channel_features(arr[:, 0], arr[:, k + 1], span, self.degree, k)
            cols.append(power.P)
        return np.column_stack(cols)

    def get_feature_names_out(self, input_features=None):
        return np.array(["P1", "P2"], dtype=object)

"""Two reciprocally coupled Morris-Lecar neurons.

State ordering everywhere is ``(v1, v2, w1, w2, s1, s2)``. The synaptic
variable ``s1`` is driven by neuron 2 and ``s2`` by neuron 1.
"""

import dataclasses
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.signal import find_peaks
from scipy.special import expit

from .exceptions import NonFinite, TooShort
from .validation import check_positive

GUARD_MV = 500.0

# JSON key -> dataclass field; the JSON names follow the printed symbols.
_PARAM_KEYS = {
    "C": "C",
    "g_Ca": "g_Ca",
    "g_K": "g_K",
    "g_L": "g_L",
    "v_Ca": "v_Ca",
    "v_K": "v_K",
    "v_L": "v_L",
    "v_syn": "v_syn",
    "v11": "v11",
    "v22": "v22",
    "v3": "v3",
    "v4": "v4",
    "v_t": "v_t",
    "v_s": "v_s",
    "phi": "phi",
    "tau": "tau",
    "I_app": "I_app",
    "g_syn": "g_syn",
    "delta": "delta",
    "paper_literal_leak": "paper_literal_leak",
}


@dataclass(frozen=True)
class MLParams:
    """Model constants. Defaults are the standard Type II set."""

    C: float = 20.0
    g_Ca: float = 4.0
    g_K: float = 8.0
    g_L: float = 2.0
    v_Ca: float = 120.0
    v_K: float = -84.0
    v_L: float = -60.0
    v_syn: float = 70.0
    v11: float = -1.2
    v22: float = 18.0
    v3: float = 2.0
    v4: float = 30.0
    v_t: float = 15.0
    v_s: float = 5.0
    phi: float = 0.04
    tau: float = 8.0
    I_app: float = 120.0
    g_syn: float = 7.5
    delta: float = 0.0
    # gate the leak by w1 in both voltage equations, as printed
    paper_literal_leak: bool = False

    def __post_init__(self):
        for name in ("C", "tau"):
            check_positive(getattr(self, name), name)
        for name in ("g_Ca", "g_K", "g_L", "g_syn", "I_app", "delta"):
            check_positive(getattr(self, name), name, allow_zero=True)
        for name in ("v22", "v4", "v_s"):
            v = getattr(self, name)
            if v == 0 or not math.isfinite(v):
                raise ValueError(f"{name} must be finite and nonzero, got {v!r}")
        for f in dataclasses.fields(self):
            if f.name != "paper_literal_leak" and not math.isfinite(getattr(self, f.name)):
                raise ValueError(f"{f.name} must be finite")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_array(self):
        return np.array([
            self.C, self.g_Ca, self.g_K, self.g_L, self.v_Ca, self.v_K,
            self.v_L, self.v_syn, self.v11, self.v22, self.v3, self.v4,
            self.v_t, self.v_s, self.phi, self.tau, self.I_app, self.g_syn,
        ], dtype=float)

    def to_dict(self):
        return {key: getattr(self, attr) for key, attr in _PARAM_KEYS.items()}

    @classmethod
    def from_dict(cls, d, base=None):
        unknown = set(d) - set(_PARAM_KEYS)
        if unknown:
            raise ValueError(f"unknown parameter keys: {sorted(unknown)}")
        base = base if base is not None else cls()
        changes = {}
        for key, value in d.items():
            attr = _PARAM_KEYS[key]
            changes[attr] = bool(value) if attr == "paper_literal_leak" else float(value)
        return base.replace(**changes)


@dataclass(frozen=True)
class NetworkState:
    v1: float
    v2: float
    w1: float
    w2: float
    s1: float
    s2: float

    def to_array(self):
        return np.array([self.v1, self.v2, self.w1, self.w2, self.s1, self.s2], dtype=float)

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=float).ravel()
        if a.size != 6:
            raise ValueError(f"a network state has 6 components, got {a.size}")
        return cls(*map(float, a))

    def swapped(self):
        """Exchange the roles of neuron 1 and neuron 2."""
        return NetworkState(self.v2, self.v1, self.w2, self.w1, self.s2, self.s1)


DEFAULT_IC = NetworkState(-20.0, 20.0, 0.3, 0.5, 0.2, 0.1)


def _as_state_array(state):
    if isinstance(state, NetworkState):
        return state.to_array()
    return NetworkState.from_array(state).to_array()


@dataclass
class VoltageTrace:
    """Sampled voltages of both neurons, optionally with the gating channels."""

    times: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    w1: np.ndarray = None
    w2: np.ndarray = None
    s1: np.ndarray = None
    s2: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or self.times.size == 0:
            raise ValueError("times must be a nonempty 1-D array")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        for name in ("v1", "v2", "w1", "w2", "s1", "s2"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=float)
            if arr.shape != self.times.shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {self.times.shape}")
            setattr(self, name, arr)

    def __len__(self):
        return self.times.size

    @property
    def has_gating(self):
        return self.w1 is not None

    def voltages(self):
        return np.column_stack([self.v1, self.v2])

    def states(self):
        if not self.has_gating:
            raise ValueError("trace carries voltages only")
        return np.column_stack([self.v1, self.v2, self.w1, self.w2, self.s1, self.s2])

    def window(self, start, stop=None):
        """Return the sub-trace with ``start <= t <= stop``."""
        stop = self.times[-1] if stop is None else stop
        m = (self.times >= start) & (self.times <= stop)
        kw = {n: (None if getattr(self, n) is None else getattr(self, n)[m])
              for n in ("v1", "v2", "w1", "w2", "s1", "s2")}
        return VoltageTrace(self.times[m], meta=dict(self.meta), **kw)


@dataclass(frozen=True)
class DynamicsLabel:
    kind: str
    amplitudes: tuple
    phase_relation: str
    period: float = float("nan")
    zero_lag_correlation: float = float("nan")


# ---------------------------------------------------------------------------
# right-hand side


def gating_functions(v, params):
    """Return ``(m_inf, w_inf, lam, s_inf)`` evaluated at voltage(s) `v`."""
    v = np.asarray(v, dtype=float)
    # 0.5 * (1 + tanh(x)) == expit(2x); expit keeps the lower tail positive
    m_inf = expit(2.0 * (v - params.v11) / params.v22)
    w_inf = expit(2.0 * (v - params.v3) / params.v4)
    lam = params.phi * np.cosh((v - params.v3) / (2.0 * params.v4))
    s_inf = expit((v - params.v_t) / params.v_s)
    return m_inf, w_inf, lam, s_inf


def ml_derivatives(state, params):
    """Deterministic right-hand side at `state`, returned as a NetworkState."""
    y = _as_state_array(state)
    v = y[:2]
    w = y[2:4]
    s = y[4:]
    m_inf, w_inf, lam, s_inf = gating_functions(v, params)
    leak_gate = y[2] if params.paper_literal_leak else 1.0
    dv = (-params.g_Ca * m_inf * (v - params.v_Ca)
          - params.g_K * w * (v - params.v_K)
          - params.g_L * leak_gate * (v - params.v_L)
          + params.I_app
          - params.g_syn * s * (v - params.v_syn)) / params.C
    dw = lam * (w_inf - w)
    ds = (s_inf[::-1] - s) / params.tau
    return NetworkState.from_array(np.concatenate([dv, dw, ds]))


@numba.njit(cache=True, nogil=True)
def _rhs(y, p, literal, out):
    C, gCa, gK, gL, vCa, vK, vL, vsyn = p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]
    v11, v22, v3, v4, vt, vs, phi, tau = p[8], p[9], p[10], p[11], p[12], p[13], p[14], p[15]
    iapp, gsyn = p[16], p[17]
    gate = y[2] if literal else 1.0
    for k in range(2):
        v = y[k]
        w = y[2 + k]
        s = y[4 + k]
        m_inf = 0.5 * (1.0 + math.tanh((v - v11) / v22))
        out[k] = (-gCa * m_inf * (v - vCa) - gK * w * (v - vK) - gL * gate * (v - vL)
                  + iapp - gsyn * s * (v - vsyn)) / C
        x = (v - v3) / v4
        out[2 + k] = phi * math.cosh(0.5 * x) * (0.5 * (1.0 + math.tanh(x)) - w)
    s_inf1 = 0.5 * (1.0 + math.tanh((y[1] - vt) / (2.0 * vs)))
    s_inf2 = 0.5 * (1.0 + math.tanh((y[0] - vt) / (2.0 * vs)))
    out[4] = (s_inf1 - y[4]) / tau
    out[5] = (s_inf2 - y[5]) / tau


@numba.njit(cache=True, nogil=True)
def _rk4(y0, p, literal, counts, steps, guard, out):
    """RK4 with ``counts[i]`` steps of size ``steps[i]`` between records.

    Returns the record index at which the guard tripped, or -1.
    """
    y = y0.copy()
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    tmp = np.empty(6)
    out[0, :] = y
    for i in range(counts.size):
        h = steps[i]
        for _ in range(counts[i]):
            _rhs(y, p, literal, k1)
            for j in range(6):
                tmp[j] = y[j] + 0.5 * h * k1[j]
            _rhs(tmp, p, literal, k2)
            for j in range(6):
                tmp[j] = y[j] + 0.5 * h * k2[j]
            _rhs(tmp, p, literal, k3)
            for j in range(6):
                tmp[j] = y[j] + h * k3[j]
            _rhs(tmp, p, literal, k4)
            for j in range(6):
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            if not (abs(y[0]) <= guard and abs(y[1]) <= guard):
                return i + 1
            for j in range(2, 6):
                if not math.isfinite(y[j]):
                    return i + 1
        out[i + 1, :] = y
    return -1


@numba.njit(cache=True, nogil=True)
def _euler_maruyama(y0, p, literal, dt, record_every, noise, delta, guard, out):
    y = y0.copy()
    f = np.empty(6)
    out[0, :] = y
    sq = math.sqrt(dt)
    rec = 1
    for i in range(noise.shape[0]):
        _rhs(y, p, literal, f)
        for j in range(6):
            y[j] += dt * f[j]
        y[0] += delta * sq * noise[i, 0]
        y[1] += delta * sq * noise[i, 1]
        if not (abs(y[0]) <= guard and abs(y[1]) <= guard):
            return rec
        if (i + 1) % record_every == 0:
            out[rec, :] = y
            rec += 1
    return -1


def _n_steps(t_end, dt):
    check_positive(t_end, "t_end")
    check_positive(dt, "dt")
    n = int(round(t_end / dt))
    if abs(n * dt - t_end) > 1e-9 * max(1.0, t_end):
        n = int(math.ceil(t_end / dt))
    return n


def _trace_from_states(times, states, meta):
    return VoltageTrace(times, states[:, 0], states[:, 1], states[:, 2], states[:, 3],
                        states[:, 4], states[:, 5], meta=meta)


def simulate_deterministic(params, ic=DEFAULT_IC, t_end=1000.0, dt=0.05, record_every=1,
                           guard=GUARD_MV):
    """Fixed-step RK4 trajectory of the noise-free network.

    Samples are taken every `record_every` steps starting at ``t = 0``.
    Raises NonFinite if a voltage leaves ``[-guard, guard]``.
    """
    if params.delta != 0:
        raise ValueError("simulate_deterministic requires delta == 0; "
                         "use simulate_stochastic")
    n = _n_steps(t_end, dt)
    record_every = int(record_every)
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    n_rec = n // record_every
    counts = np.full(n_rec, record_every, dtype=np.int64)
    steps = np.full(n_rec, float(dt))
    out = np.empty((n_rec + 1, 6))
    bad = _rk4(_as_state_array(ic), params.to_array(), params.paper_literal_leak,
               counts, steps, float(guard), out)
    if bad >= 0:
        raise NonFinite(f"voltage left the +/-{guard} mV guard before sample {bad}")
    times = np.arange(n_rec + 1) * (record_every * dt)
    meta = {"params": params.to_dict(), "integrator": "rk4", "dt": dt,
            "record_every": record_every}
    return _trace_from_states(times, out, meta)


def simulate_on_grid(params, times, ic=DEFAULT_IC, dt=0.05, guard=GUARD_MV):
    """RK4 trajectory recorded exactly at `times` (which need not be uniform).

    The state at ``times[0]`` is `ic`. Each gap between consecutive sample
    times is covered by the fewest equal steps no longer than `dt`.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 1:
        raise ValueError("times must be a nonempty 1-D array")
    gaps = np.diff(times)
    if np.any(gaps <= 0):
        raise ValueError("times must be strictly increasing")
    check_positive(dt, "dt")
    counts = np.maximum(1, np.ceil(gaps / dt - 1e-9)).astype(np.int64)
    steps = gaps / counts
    out = np.empty((times.size, 6))
    bad = _rk4(_as_state_array(ic), params.to_array(), params.paper_literal_leak,
               counts, steps, float(guard), out)
    if bad >= 0:
        raise NonFinite(f"voltage left the +/-{guard} mV guard before sample {bad}")
    meta = {"params": params.to_dict(), "integrator": "rk4", "dt": dt}
    return _trace_from_states(times, out, meta)


def simulate_stochastic(params, ic=DEFAULT_IC, t_end=1000.0, dt=0.05, seed=0,
                        record_every=1, guard=GUARD_MV):
    """Euler-Maruyama trajectory with independent voltage noise per neuron.

    Each step adds ``delta * sqrt(dt) * N(0, 1)`` to both voltages. With
    ``delta == 0`` this is plain explicit Euler and the seed is irrelevant.
    """
    check_positive(params.delta, "delta", allow_zero=True)
    n = _n_steps(t_end, dt)
    record_every = int(record_every)
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    if params.delta > 0:
        noise = np.random.default_rng(seed).standard_normal((n, 2))
    else:
        noise = np.zeros((n, 2))
    n_rec = n // record_every
    out = np.empty((n_rec + 1, 6))
    bad = _euler_maruyama(_as_state_array(ic), params.to_array(), params.paper_literal_leak,
                          float(dt), record_every, noise, float(params.delta), float(guard), out)
    if bad >= 0:
        raise NonFinite(f"voltage left the +/-{guard} mV guard before sample {bad}")
    times = np.arange(n_rec + 1) * (record_every * dt)
    meta = {"params": params.to_dict(), "integrator": "euler-maruyama", "dt": dt,
            "record_every": record_every, "seed": seed}
    return _trace_from_states(times, out, meta)


# ---------------------------------------------------------------------------
# regime classification

SS_THRESHOLD = 5.0
AAS_RATIO = 2.0
TRANSIENT_FRACTION = 0.3


def classify_dynamics(trace, transient_fraction=TRANSIENT_FRACTION, ss_threshold=SS_THRESHOLD,
                      aas_ratio=AAS_RATIO, min_periods=10):
    """Label the long-run behaviour of `trace` as SS, AAS or EAS.

    The phase relation is read off at the spikes of the larger-amplitude
    neuron: if its partner sits, on average, below its own mean over a
    quarter-period neighbourhood of those spikes the pair is anti-phase.
    """
    if not 0.0 <= transient_fraction < 1.0:
        raise ValueError("transient_fraction must lie in [0, 1)")
    n = len(trace)
    start = int(math.floor(transient_fraction * n))
    v = trace.voltages()[start:]
    if v.shape[0] < 16:
        raise TooShort(f"only {v.shape[0]} samples after discarding the transient")
    amps = np.ptp(v, axis=0)
    amplitudes = (float(amps[0]), float(amps[1]))
    a = v[:, 0] - v[:, 0].mean()
    b = v[:, 1] - v[:, 1].mean()
    denom = math.sqrt(float(a @ a) * float(b @ b))
    corr = float(a @ b) / denom if denom > 0 else float("nan")
    if amps.max() < ss_threshold:
        return DynamicsLabel("SS", amplitudes, "n/a", zero_lag_correlation=corr)

    big = int(np.argmax(amps))
    partner = 1 - big
    peaks, _ = find_peaks(v[:, big], prominence=0.5 * amps[big])
    if peaks.size < min_periods + 1:
        raise TooShort(f"found {max(peaks.size - 1, 0)} periods after the transient, "
                       f"need {min_periods}")
    t = trace.times[start:]
    period = float(np.median(np.diff(t[peaks])))
    q = max(1, int(np.median(np.diff(peaks)) // 4))
    peaks = peaks[(peaks >= q) & (peaks < v.shape[0] - q)]
    y = v[:, partner]
    dev = np.mean([y[p] - y[p - q:p + q + 1].mean() for p in peaks])
    phase = "in-phase" if dev >= 0 else "anti-phase"

    lo = amps.min()
    ratio = amps.max() / lo if lo > 0 else math.inf
    kind = "AAS" if ratio > aas_ratio else "EAS"
    return DynamicsLabel(kind, amplitudes, phase, period, corr)

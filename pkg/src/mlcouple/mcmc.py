"""Random-walk Metropolis-Hastings over log-parameters with region rejection."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import EmptyWindow, InitialOutsideRegion, SimulationFailed
from .features import ConditionedLikelihood, DataFeatures, LikelihoodConfig, Theta
from .region import builtin_region
from .sim import DEFAULT_IC, MLParams, simulate_deterministic, simulate_on_grid
from .smooth import default_span_grid, gcv_select
from .validation import check_trace_array

N_THETA = 8
AUTO_WINDOW = 100
AUTO_TOL = 0.01


@dataclass(frozen=True)
class McmcConfig:
    """Sampler settings.

    `burn_in` is an iteration index or ``"auto"``; at that index the
    proposal scale switches from `mixing` to `post_burnin_mixing`.
    """

    initial_theta: Theta = Theta(220.0, 1.0)
    mixing: object = 0.01
    post_burnin_mixing: object = 0.001
    iterations: int = 1000
    burn_in: object = 450
    seed: int = 0
    use_rejection_region: bool = True
    region: object = None
    greedy: bool = False
    jacobian: bool = True
    likelihood: LikelihoodConfig = field(default_factory=LikelihoodConfig)

    def __post_init__(self):
        for name in ("mixing", "post_burnin_mixing"):
            m = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (N_THETA,))
            if not np.all(m > 0):
                raise ValueError(f"{name} components must be > 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.burn_in != "auto":
            if int(self.burn_in) != self.burn_in or self.burn_in < 0:
                raise ValueError("burn_in must be a nonnegative integer or 'auto'")
            if self.iterations and self.burn_in >= self.iterations:
                raise ValueError("burn_in must be smaller than iterations")

    def mixing_vector(self, post_burnin=False):
        m = self.post_burnin_mixing if post_burnin else self.mixing
        return np.broadcast_to(np.asarray(m, dtype=float), (N_THETA,)).copy()

    def get_region(self):
        return self.region if self.region is not None else builtin_region()


@dataclass(frozen=True)
class ChainRecord:
    theta: Theta
    log_posterior: float
    accepted: bool
    in_region: bool


@dataclass
class Chain:
    records: list
    config: McmcConfig
    burn_in: int = 0
    model_spans: tuple = None
    data_spans: tuple = None

    def __len__(self):
        return len(self.records)

    @property
    def acceptance_rate(self):
        moves = self.records[1:]
        if not moves:
            return math.nan
        return sum(r.accepted for r in moves) / len(moves)

    def thetas(self):
        return np.array([r.theta.to_array() for r in self.records])

    def log_posteriors(self):
        return np.array([r.log_posterior for r in self.records])

    def accepted(self):
        return np.array([r.accepted for r in self.records])


def propose(current, mixing, rng):
    """Gaussian step in log space for every component."""
    step = rng.standard_normal(N_THETA) * np.broadcast_to(mixing, (N_THETA,))
    return Theta.from_array(np.exp(np.log(current.to_array()) + step))


def log_posterior(theta, log_likelihood, region=None, use_region=True, jacobian=True):
    """Prior + likelihood (+ log-parameter Jacobian); -inf on any failure.

    With `use_region` off the prior is flat over the positive quadrant.
    Out-of-region candidates return without evaluating the likelihood.
    """
    if use_region:
        lp = region.log_prior(theta.g_syn, theta.I_app)
        if lp == -math.inf:
            return -math.inf
    else:
        lp = 0.0
    try:
        ll = log_likelihood(theta)
    except SimulationFailed:
        return -math.inf
    if not math.isfinite(ll):
        return -math.inf
    if jacobian:
        lp += float(np.sum(np.log(theta.to_array())))
    return lp + ll


def accept(delta, u, greedy=False):
    """MH acceptance with ``u ~ U(0, 1)``; strict improvements always pass."""
    if delta > 0:
        return True
    if greedy or delta == -math.inf or math.isnan(delta):
        return False
    return math.log(u) < delta if u > 0 else False


def mh_step(current, config, rng, log_post, region, mixing):
    """One proposal/accept cycle; a rejection repeats the current theta."""
    cand = propose(current.theta, mixing, rng)
    u = rng.random()  # always drawn so runs with and without the region stay aligned
    cand_lp = log_post(cand)
    inside = bool(region.contains(cand.g_syn, cand.I_app))
    if accept(cand_lp - current.log_posterior, u, config.greedy):
        return ChainRecord(cand, cand_lp, True, inside)
    return ChainRecord(current.theta, current.log_posterior, False, current.in_region)


def _auto_burned_in(log_iapp):
    n = len(log_iapp)
    if n < 2 * AUTO_WINDOW or n % AUTO_WINDOW:
        return False
    a = np.mean(log_iapp[n - 2 * AUTO_WINDOW:n - AUTO_WINDOW])
    b = np.mean(log_iapp[n - AUTO_WINDOW:])
    return abs(b - a) < AUTO_TOL


def select_model_spans(likelihood, theta):
    """GCV spans for the model voltages at `theta` (falls back to data spans)."""
    cfg = likelihood.config
    params = cfg.params.replace(I_app=theta.I_app, g_syn=theta.g_syn)
    times = likelihood.data.times
    try:
        tr = simulate_on_grid(params, times, cfg.ic, cfg.dt)
    except Exception:
        return likelihood.data.spans
    grid = cfg.candidate_spans or default_span_grid(times.size, cfg.degree, max_span=0.05, num=12)
    spans = []
    for y, fallback in zip((tr.v1, tr.v2), likelihood.data.spans):
        try:
            spans.append(gcv_select(times, y, grid, cfg.degree))
        except Exception:
            spans.append(fallback)
    return tuple(spans)


def build_likelihood(data, config):
    """Data-side cache plus a likelihood with GCV-chosen model spans."""
    lcfg = config.likelihood
    feats = data if isinstance(data, DataFeatures) else DataFeatures.from_trace(data, lcfg)
    lik = ConditionedLikelihood(feats, lcfg)
    if lcfg.model_spans is None:
        lik = ConditionedLikelihood(feats, lcfg, select_model_spans(lik, config.initial_theta))
    return lik


def run_chain(data, config, log_likelihood=None):
    """Run `config.iterations` MH steps from `config.initial_theta`.

    `data` may be a VoltageTrace, an ``(n, 3)`` array or prebuilt
    DataFeatures. Passing `log_likelihood` (a callable on Theta) replaces
    the conditioned likelihood, in which case `data` is ignored.
    """
    region = config.get_region()
    lik = log_likelihood if log_likelihood is not None else build_likelihood(data, config)
    init = config.initial_theta
    init_inside = bool(region.contains(init.g_syn, init.I_app))
    if config.use_rejection_region and not init_inside:
        raise InitialOutsideRegion(
            f"initial (g_syn, I_app) = ({init.g_syn}, {init.I_app}) lies outside the region")

    def log_post(theta):
        return log_posterior(theta, lik, region, config.use_rejection_region, config.jacobian)

    rng = np.random.default_rng(config.seed)
    current = ChainRecord(init, log_post(init), True, init_inside)
    records = [current]
    log_iapp = [math.log(init.I_app)]
    burn_in = config.burn_in
    post = False
    mixing = config.mixing_vector()
    for i in range(1, config.iterations + 1):
        if not post:
            if burn_in == "auto":
                if _auto_burned_in(log_iapp):
                    burn_in = i - 1
                    post = True
            elif i > burn_in:
                post = True
            if post:
                mixing = config.mixing_vector(post_burnin=True)
        current = mh_step(current, config, rng, log_post, region, mixing)
        records.append(current)
        log_iapp.append(math.log(current.theta.I_app))
    if burn_in == "auto":
        burn_in = len(records) - 1 if not post else burn_in
    chain = Chain(records, config, int(burn_in))
    if isinstance(lik, ConditionedLikelihood):
        chain.model_spans = lik.model_spans
        chain.data_spans = lik.data.spans
    return chain


def run_chains(data, config, seeds, log_likelihood=None, jobs=1):
    """Independent chains differing only in seed; the data cache is shared.

    With ``jobs > 1`` chains run in a thread pool (the compiled kernels
    release the GIL). Results do not depend on `jobs`.
    """
    lik = log_likelihood if log_likelihood is not None else build_likelihood(data, config)
    configs = [replace(config, seed=int(s)) for s in seeds]
    if jobs <= 1 or len(configs) <= 1:
        return [run_chain(None, c, lik) for c in configs]
    with ThreadPoolExecutor(max_workers=int(jobs)) as pool:
        return list(pool.map(lambda c: run_chain(None, c, lik), configs))


# Synthetic-data windows: "full" is 1000 ms recorded at every 0.05 ms step,
# "fast" is 500 ms recorded every 0.5 ms.
PROFILES = {
    "full": {"t_end": 1000.0, "dt": 0.05, "record_every": 1},
    "fast": {"t_end": 500.0, "dt": 0.05, "record_every": 10},
}


def synthetic_trace(I_app=120.0, g_syn=7.5, profile="full", params=None, ic=DEFAULT_IC):
    """Noise-free data trace for one of the named :data:`PROFILES`."""
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    params = (params or MLParams()).replace(I_app=float(I_app), g_syn=float(g_syn))
    return simulate_deterministic(params, ic, **PROFILES[profile])


def summarize(chain, burn_in=None, truth=None):
    """Post-burn-in mean and sd of every component (natural units).

    Also reports the sd of the log-parameters and, when `truth` maps
    parameter names to values, the percent error of the mean.
    """
    burn_in = chain.burn_in if burn_in is None else int(burn_in)
    n = len(chain)
    if burn_in >= n or burn_in < 0:
        raise EmptyWindow(f"burn_in={burn_in} leaves no records out of {n}")
    x = chain.thetas()[burn_in:]
    truth = _truth_dict(truth)
    out = {}
    for j, name in enumerate(Theta.names()):
        col = x[:, j]
        entry = {
            "mean": float(np.mean(col)),
            "sd": float(np.std(col, ddof=1)) if col.size > 1 else 0.0,
            "log_sd": float(np.std(np.log(col), ddof=1)) if col.size > 1 else 0.0,
        }
        if name in truth:
            entry["truth"] = truth[name]
            entry["percent_error"] = abs(entry["mean"] - truth[name]) / truth[name] * 100.0
        out[name] = entry
    return out


def combine_summaries(chains, burn_in=None, truth=None):
    """Overall summary: average of the per-chain post-burn-in means."""
    per = [summarize(c, burn_in, truth) for c in chains]
    truth = _truth_dict(truth)
    overall = {}
    for name in Theta.names():
        means = np.array([s[name]["mean"] for s in per])
        entry = {"mean": float(means.mean()),
                 "sd": float(np.mean([s[name]["sd"] for s in per])),
                 "between_chain_sd": float(means.std(ddof=1)) if means.size > 1 else 0.0}
        if name in truth:
            entry["truth"] = truth[name]
            entry["percent_error"] = abs(entry["mean"] - truth[name]) / truth[name] * 100.0
        overall[name] = entry
    return {"chains": per, "overall": overall}


def _truth_dict(truth):
    if truth is None:
        return {}
    if isinstance(truth, Theta):
        return truth.to_dict()
    return {k: float(v) for k, v in dict(truth).items()}


class ConditionedMCMCEstimator(BaseEstimator):
    """Estimate ``I_app`` and ``g_syn`` from a two-neuron voltage trace.

    Parameters mirror :class:`McmcConfig`; model constants and initial
    conditions come from `params` and `ic`. After :meth:`fit`, ``theta_``
    holds the post-burn-in mean and ``chain_`` the full chain.
    """

    def __init__(self, initial_I_app=220.0, initial_g_syn=1.0, mixing=0.01,
                 post_burnin_mixing=0.001, iterations=1000, burn_in=450, seed=0,
                 use_rejection_region=True, greedy=False, jacobian=True, params=None,
                 ic=None, dt=0.05, data_spans=None, model_spans=None):
        self.initial_I_app = initial_I_app
        self.initial_g_syn = initial_g_syn
        self.mixing = mixing
        self.post_burnin_mixing = post_burnin_mixing
        self.iterations = iterations
        self.burn_in = burn_in
        self.seed = seed
        self.use_rejection_region = use_rejection_region
        self.greedy = greedy
        self.jacobian = jacobian
        self.params = params
        self.ic = ic
        self.dt = dt
        self.data_spans = data_spans
        self.model_spans = model_spans

    def _config(self):
        lk = {"dt": self.dt, "data_spans": self.data_spans, "model_spans": self.model_spans}
        if self.params is not None:
            lk["params"] = self.params
        if self.ic is not None:
            lk["ic"] = tuple(np.asarray(self.ic, dtype=float))
        return McmcConfig(
            initial_theta=Theta(self.initial_I_app, self.initial_g_syn),
            mixing=self.mixing, post_burnin_mixing=self.post_burnin_mixing,
            iterations=self.iterations, burn_in=self.burn_in, seed=self.seed,
            use_rejection_region=self.use_rejection_region, greedy=self.greedy,
            jacobian=self.jacobian, likelihood=LikelihoodConfig(**lk))

    def fit(self, X, y=None):
        arr = check_trace_array(X)
        config = self._config()
        self.chain_ = run_chain(arr, config)
        self.summary_ = summarize(self.chain_)
        self.theta_ = Theta(**{k: v["mean"] for k, v in self.summary_.items()})
        self.I_app_ = self.theta_.I_app
        self.g_syn_ = self.theta_.g_syn
        self.n_features_in_ = 3
        return self

    def predict(self, X):
        """Voltages ``(n, 2)`` simulated at the posterior-mean parameters.

        X holds the sample times (1-D, or the first column of a trace).
        """
        check_is_fitted(self, "theta_")
        t = np.asarray(X, dtype=float)
        if t.ndim == 2:
            t = t[:, 0]
        cfg = self.chain_.config.likelihood
        params = (self.params or MLParams()).replace(I_app=self.I_app_, g_syn=self.g_syn_)
        tr = simulate_on_grid(params, t, cfg.ic, cfg.dt)
        return tr.voltages()

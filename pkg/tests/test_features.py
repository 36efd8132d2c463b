import math

import numpy as np
import pytest
from scipy.stats import norm
from sklearn.base import clone

from mlcouple import (ConditionedLikelihood, CumulativePowerTransformer, DataFeatures,
                      LikelihoodConfig, LwprConfig, MLParams, PowerCurve, SimulationFailed,
                      Theta, conditioned_log_likelihood, cumulative_power,
                      fourier_power_slope, mean_log_likelihood, model_power, p0_estimate,
                      power_log_likelihood, smooth_trace)
from mlcouple.exceptions import LengthMismatch, NonPositiveSd


def test_theta_validation_and_round_trip():
    th = Theta(120.0, 7.5)
    assert th.to_array().tolist() == [120, 7.5, 1, 1, 1, 1, 10, 10]
    assert Theta.from_array(th.to_array()) == th
    assert Theta.names()[-2:] == ("mstd1", "mstd2")
    with pytest.raises(ValueError):
        Theta(0.0, 1.0)
    with pytest.raises(ValueError):
        Theta(1.0, math.nan)
    with pytest.raises(ValueError):
        Theta.from_array([1, 2, 3])


def test_cumulative_power_riemann_sum():
    t = np.array([0.0, 0.5, 1.5, 2.0])
    d2 = np.array([1.0, 2.0, -1.0, 3.0])
    P = cumulative_power(t, d2).P
    np.testing.assert_allclose(P, np.cumsum([0.5 * 1, 0.5 * 4, 1.0 * 1, 0.5 * 9]))
    with pytest.raises(LengthMismatch):
        cumulative_power(t, d2[:3])


def test_linear_signal_has_zero_power():
    t = np.linspace(0, 10, 200)
    sm = smooth_trace(t, 3 * t - 2, LwprConfig(0.05))
    P = cumulative_power(t, sm.d2y_hat).P
    assert np.abs(P).max() < 1e-12


def test_sinusoid_power_slope():
    # P(t) of a sin(2 pi f t) grows at 8 pi^4 f^4 a^2
    f, a = 0.5, 2.0
    t = np.linspace(0, 40, 8001)
    sm = smooth_trace(t, a * np.sin(2 * np.pi * f * t), LwprConfig(7 / t.size))
    P = cumulative_power(t, sm.d2y_hat).P
    slope = np.polyfit(t, P, 1)[0]
    assert slope == pytest.approx(fourier_power_slope([(0.0, a, f)]), rel=5e-3)
    assert fourier_power_slope([(1.0, 0.0, f)]) == pytest.approx(8 * np.pi ** 4 * f ** 4)


def test_model_power_scales():
    c = PowerCurve(np.arange(3.0), np.array([0.0, 1.0, 3.0]))
    np.testing.assert_allclose(model_power(c, 2.5).P, [0, 2.5, 7.5])
    with pytest.raises(ValueError):
        model_power(c, 0.0)


def test_p0_matches_polyfit(rng):
    t = np.linspace(0, 10, 101)
    P = 2 * t + rng.normal(size=101)
    coef = np.polyfit(t, P, 1)
    r = P - np.polyval(coef, t)
    assert p0_estimate(PowerCurve(t, P)) == pytest.approx(np.sqrt(np.mean(r ** 2)), rel=1e-10)
    assert p0_estimate(PowerCurve(t, 3 * t + 1)) == pytest.approx(0.0, abs=1e-12)


def test_power_likelihood_matches_scipy(rng):
    t = np.linspace(0, 1, 50)
    data = PowerCurve(t, np.cumsum(rng.uniform(0, 1, 50)))
    mod = PowerCurve(t, data.P + rng.normal(size=50))
    p0, ps = 0.3, 0.7
    ref = norm.logpdf(data.P, loc=mod.P, scale=p0 + ps * data.P).sum()
    assert power_log_likelihood(data, mod, p0, ps) == pytest.approx(ref, rel=1e-12)
    with pytest.raises(NonPositiveSd):
        power_log_likelihood(PowerCurve(t, 0 * t), mod, 0.0, 1.0)
    with pytest.raises(LengthMismatch):
        power_log_likelihood(data, PowerCurve(t[:3], t[:3]), p0, ps)


def test_mean_likelihood_matches_scipy():
    assert mean_log_likelihood(1.0, -3.0, 10.0) == pytest.approx(
        norm.logpdf(1.0, loc=-3.0, scale=10.0), rel=1e-12)
    with pytest.raises(NonPositiveSd):
        mean_log_likelihood(1.0, 1.0, 0.0)


@pytest.fixture(scope="module")
def likelihood(short_data):
    return ConditionedLikelihood(DataFeatures.from_trace(short_data))


def test_data_cache(short_data, likelihood):
    feats = likelihood.data
    assert len(feats.channels) == 2
    for ch, v in zip(feats.channels, (short_data.v1, short_data.v2)):
        assert ch.mean == pytest.approx(np.mean(v))
        assert ch.p0 > 0 and ch.power.P[-1] > 0
        assert 0 < ch.span <= 0.05


def test_components_sum(likelihood):
    th = Theta(130.0, 6.0, 0.8, 1.2, 0.9, 1.1, 5.0, 12.0)
    c = likelihood.components(th)
    assert set(c) == {"power1", "power2", "mean1", "mean2"}
    assert likelihood(th) == pytest.approx(sum(c.values()), rel=1e-13)


def test_truth_beats_distant_point(likelihood):
    assert likelihood(Theta(120.0, 7.5)) > likelihood(Theta(220.0, 7.5))
    assert likelihood(Theta(120.0, 7.5)) > likelihood(Theta(220.0, 1.0))


def test_nuisance_parameters_enter_as_documented(likelihood):
    base = Theta(125.0, 7.0)
    c0 = likelihood.components(base)
    c1 = likelihood.components(Theta(125.0, 7.0, mstd1=4.0))
    assert c1["power1"] == c0["power1"] and c1["mean2"] == c0["mean2"]
    assert c1["mean1"] != c0["mean1"]
    ch = likelihood.data.channels[0]
    raw, _ = likelihood.model_features(125.0, 7.0)[0]
    ref = norm.logpdf(ch.power.P, loc=2.0 * raw.P, scale=ch.p0 + 0.5 * ch.power.P).sum()
    c2 = likelihood.components(Theta(125.0, 7.0, pscale1=0.5, pleak1=2.0))
    assert c2["power1"] == pytest.approx(ref, rel=1e-12)


def test_simulation_failure_surfaces(likelihood):
    with pytest.raises(SimulationFailed):
        likelihood(Theta(1e7, 1.0))


def test_one_shot_helper(short_data, likelihood):
    th = Theta(110.0, 8.0)
    assert conditioned_log_likelihood(short_data, th) == pytest.approx(likelihood(th))


def test_explicit_spans(short_data):
    cfg = LikelihoodConfig(data_spans=(0.01, 0.02))
    feats = DataFeatures.from_trace(short_data, cfg)
    assert feats.spans == (0.01, 0.02)
    with pytest.raises(ValueError):
        DataFeatures.from_trace(short_data, LikelihoodConfig(data_spans=(0.01,)))


def test_literal_leak_changes_likelihood(short_data):
    cfg = LikelihoodConfig(params=MLParams(paper_literal_leak=True))
    feats = DataFeatures.from_trace(short_data)
    a = ConditionedLikelihood(feats)(Theta(120.0, 7.5))
    b = ConditionedLikelihood(feats, cfg)(Theta(120.0, 7.5))
    assert a != b


def test_transformer_api(short_data):
    tf = CumulativePowerTransformer(spans=(0.02, 0.02))
    assert clone(tf).get_params()["spans"] == (0.02, 0.02)
    X = np.column_stack([short_data.times, short_data.v1, short_data.v2])
    out = tf.fit_transform(X)
    assert out.shape == (len(short_data), 2)
    assert np.all(np.diff(out, axis=0) >= 0)
    assert tf.get_feature_names_out().tolist() == ["P1", "P2"]
    auto = CumulativePowerTransformer().fit(short_data)
    assert len(auto.spans_) == 2
    with pytest.raises(ValueError):
        tf.transform(X[:, :2])

import json
import math

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from asepkpz import observables as obs
from asepkpz.report import Report, observables, report_schema, write_csv

finite = st.floats(-1e3, 1e3)


def test_constant_samples():
    est = obs.weighted_variance(np.full(50, 2.5))
    assert est.estimate == 0.0 and est.stderr == 0.0
    rep = observables(np.full((10, 3), 1.0), [("var", 1)])
    assert rep.observables[0].estimate == 0.0 and rep.observables[0].stderr == 0.0


@given(arrays(float, st.integers(2, 60), elements=finite))
def test_uniform_weights_reduce_exactly(x):
    lw = np.full(len(x), -3.7)
    for f in (obs.weighted_mean, obs.weighted_variance):
        assert f(x, lw) == f(x, None)
    assert obs.weighted_covariance(x, x[::-1], lw) == obs.weighted_covariance(x, x[::-1])


@given(arrays(float, st.integers(2, 60), elements=finite))
def test_unweighted_estimators_match_numpy(x):
    n = len(x)
    mean = obs.weighted_mean(x)
    assert mean.estimate == pytest.approx(x.mean(), abs=1e-9)
    assert mean.stderr == pytest.approx(x.std() / math.sqrt(n), abs=1e-9)
    assert mean.n_effective == n
    assert obs.weighted_variance(x).estimate == pytest.approx(x.var(), abs=1e-6)


def test_importance_reweighting_gamma():
    gen = np.random.default_rng(1)
    g = gen.gamma(2.0, 1.0, 100_000)
    est = obs.weighted_mean(g, np.log(g))  # Gamma(2) * g is proportional to Gamma(3)
    assert abs(est.estimate - 3.0) < 4 * est.stderr
    assert est.n_effective < len(g)


def test_kish_ess():
    lw = np.log(np.array([1.0, 1.0, 2.0]))
    assert obs.effective_sample_size(lw) == pytest.approx(16 / 6)
    assert obs.weighted_mean([1.0, 2.0, 3.0], lw).n_effective == pytest.approx(16 / 6)


def test_empty_inputs():
    with pytest.raises(ValueError):
        obs.weighted_mean([])
    with pytest.raises(ValueError):
        obs.weighted_mean([], [])
    with pytest.raises(ValueError):
        observables(np.zeros((0, 4)), [("mean", 0)])
    with pytest.raises(ValueError):
        obs.normalized_weights([0.0, np.inf])


def test_covariance_and_correlation():
    gen = np.random.default_rng(2)
    x = gen.normal(size=50_000)
    y = 0.6 * x + 0.8 * gen.normal(size=50_000)
    cov = obs.weighted_covariance(x, y)
    assert abs(cov.estimate - 0.6) < 4 * cov.stderr
    r = obs.weighted_correlation(x, y)
    assert abs(r.estimate - 0.6) < 4 * r.stderr


def test_histogram():
    gen = np.random.default_rng(3)
    x = gen.uniform(size=40_000)
    edges, mass, se = obs.weighted_histogram(x, 4, (0.0, 1.0))
    assert np.allclose(edges, [0, 0.25, 0.5, 0.75, 1.0])
    assert mass.sum() == pytest.approx(1.0)
    assert np.all(np.abs(mass - 0.25) < 4 * se)
    counts, _ = np.histogram(x, edges)
    assert np.allclose(mass, counts / len(x))


def test_weighted_ks_reduces_to_scipy():
    x = np.random.default_rng(4).normal(size=500)
    d, n_eff, p = obs.weighted_ks(x, stats.norm.cdf)
    ref = stats.kstest(x, "norm", method="exact")
    assert d == pytest.approx(ref.statistic, abs=1e-14)
    assert n_eff == 500 and p == pytest.approx(ref.pvalue, rel=1e-9)


def test_weighted_ks_detects_mismatch():
    g = np.random.default_rng(5).gamma(2.0, 1.0, 20_000)
    assert obs.weighted_ks(g, stats.gamma(3).cdf, np.log(g))[2] > 1e-3
    assert obs.weighted_ks(g, stats.gamma(2).cdf, np.log(g))[2] < 1e-6


@settings(deadline=None)
@given(a=finite, b=finite, ses=arrays(float, 4, elements=st.floats(0.01, 1)))
def test_linear_extrapolation_matches_polyfit(a, b, ses):
    xs = np.array([0.4, 0.2, 0.1, 0.05])
    ys = a + b * xs + np.array([0.01, -0.02, 0.005, 0.0])
    a_hat, se_a, b_hat, se_b = obs.linear_extrapolation(xs, ys, ses)
    coef, cov = np.polyfit(xs, ys, 1, w=1 / ses, cov="unscaled")
    assert a_hat == pytest.approx(coef[1], abs=1e-8) and b_hat == pytest.approx(coef[0], abs=1e-8)
    assert se_a == pytest.approx(math.sqrt(cov[1, 1]), rel=1e-8)
    assert se_b == pytest.approx(math.sqrt(cov[0, 0]), rel=1e-8)


def test_observables_specs_on_grid():
    gen = np.random.default_rng(6)
    data = np.cumsum(gen.normal(size=(2000, 3)), axis=1)
    grid = np.array([0.0, 0.5, 1.0])
    rep = observables(data, [("mean", 0.5), ("var", 1.0), ("cov", 0.5, 1.0), ("hist", 1.0, 3, -3.0, 3.0)],
                      grid=grid)
    names = [o.name for o in rep.observables]
    assert names[:3] == ["mean@0.5", "var@1", "cov@0.5,1"]
    assert len(names) == 6
    assert rep.observables[0].estimate == pytest.approx(data[:, 1].mean())
    with pytest.raises(ValueError):
        observables(data, [("median", 0.5)], grid=grid)


def test_report_json_is_stable_and_valid():
    rep = Report(command="demo", params={"b": 1, "a": np.float64(0.5)}, seed=3)
    rep.add(obs.weighted_mean([1.0, 2.0], name="m"))
    rep.results["Z"] = np.inf
    rep.results["profile"] = np.array([0.25, 0.75])
    text = rep.to_json()
    assert text == rep.to_json()
    data = json.loads(text)
    jsonschema.validate(data, report_schema())
    assert data["Z"] is None and data["diagnostics"]["runtime_seconds"] is None
    assert list(data) == sorted(data)
    with pytest.raises(KeyError):
        Report(command="x", params={}, results={"seed": 1}).to_dict()


def test_csv_header_and_floats():
    text = write_csv([(0, 0.1, None), (1, np.float64(1 / 3), "x")], ["a", "b", "c"])
    lines = text.splitlines()
    assert lines[0] == "a,b,c"
    assert lines[1] == "0,0.1," and lines[2] == "1,0.3333333333333333,x"

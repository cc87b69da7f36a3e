import logging
import math

import numpy as np
import pytest
from scipy import integrate, stats

from asepkpz import continuum
from asepkpz.continuum import PathSample
from asepkpz.observables import weighted_correlation, weighted_mean, weighted_variance
from asepkpz.params import ParameterError
from asepkpz.rng import RandomStream


def test_path_sample_validation():
    with pytest.raises(ValueError):
        PathSample(np.array([0.0, 1.0]), np.array([0.0]))
    with pytest.raises(ValueError):
        PathSample(np.array([0.0, 0.0]), np.array([0.0, 1.0]))


def test_sample_brownian():
    path = continuum.sample_brownian(64, 2.0, 1.0, RandomStream(1))
    assert path.values[0] == 0.0 and path.dx == pytest.approx(2.0 / 64)
    gen = RandomStream(2).generator()
    paths = continuum.brownian_paths(gen, 40_000, 16, 2.0, 1.0)
    var = paths[:, -1].var()
    assert abs(var - 2.0) < 4 * 2.0 * math.sqrt(2 / 40_000)
    half = continuum.brownian_paths(gen, 40_000, 16, 2.0, 0.5)
    assert abs(half[:, 8].var() - 0.5) < 4 * 0.5 * math.sqrt(2 / 40_000)


def test_trivial_weight():
    path = continuum.sample_brownian(32, 1.0, 0.5, 3)
    assert continuum.rn_log_weight_X(path, 0.0, 0.0) == 0.0


def test_constant_path_weight():
    L = 2.5
    path = PathSample(np.linspace(0, L, 11), np.zeros(11))
    assert continuum.rn_log_weight_X(path, 1.3, 0.4) == pytest.approx(-1.7 * math.log(L), rel=1e-14)


def test_weight_needs_path_from_zero():
    with pytest.raises(ParameterError):
        continuum.rn_log_weight_X(PathSample(np.linspace(0, 1, 5), np.ones(5)), 1.0, 1.0)


def test_quadrature_is_second_order():
    u, v, L = 1.2, 0.7, 1.0
    s1 = integrate.quad(lambda x: math.exp(-2 * math.sin(x)), 0, L, epsabs=1e-14)[0]
    s2 = integrate.quad(lambda x: math.exp(2 * math.sin(L) - 2 * math.sin(x)), 0, L, epsabs=1e-14)[0]
    exact = -u * math.log(s1) - v * math.log(s2)
    errs = []
    for M in (32, 64, 128):
        grid = np.linspace(0, L, M + 1)
        errs.append(abs(continuum.rn_log_weight_X(PathSample(grid, np.sin(grid)), u, v) - exact))
    assert 3.5 < errs[0] / errs[1] < 4.5 and 3.5 < errs[1] / errs[2] < 4.5


def test_batch_weight_matches_single_path_weight():
    gen = RandomStream(4).generator()
    x = continuum.brownian_paths(gen, 20, 128, 1.5, 0.5)
    lw, _ = continuum._batch_log_weight(x, 1.5, 0.8, 1.9)
    grid = continuum.uniform_grid(128, 1.5)
    single = [continuum.rn_log_weight_X(PathSample(grid, row), 0.8, 1.9) for row in x]
    assert np.allclose(lw, single, rtol=1e-12, atol=1e-12)


def test_trivial_ensemble_covariance():
    ens = continuum.sample_X_ensemble(0.0, 0.0, 1.0, 250, 20_000, RandomStream(5), keep=[0.2, 0.4, 0.6, 0.8, 1.0])
    assert np.all(ens.log_weights == 0.0) and ens.ess == pytest.approx(20_000)
    for i, s in enumerate(ens.grid):
        for t in ens.grid[i:]:
            xs, xt = ens.column("X", s), ens.column("X", t)
            prod = (xs - xs.mean()) * (xt - xt.mean())
            se = prod.std() / math.sqrt(len(prod))
            assert abs(prod.mean() - min(s, t) / 2) < 4 * se


def test_h_ensemble_trivial_case():
    ens = continuum.sample_H_ensemble(0.0, 0.0, 1.0, 128, 20_000, RandomStream(6))
    assert np.all(ens.fields["H"][:, 0] == 0.0)
    est = weighted_variance(ens.column("H", 1.0))
    assert abs(est.estimate - 1.0) < 4 * est.stderr
    assert np.allclose(ens.fields["V"], ens.fields["W"] / math.sqrt(2))


def test_h_summands_uncorrelated():
    ens = continuum.sample_H_ensemble(1.0, 1.0, 1.0, 128, 20_000, RandomStream(7), keep=[1.0])
    r = weighted_correlation(ens.column("W", 1.0), ens.column("X", 1.0), ens.log_weights)
    assert abs(r.estimate) < 4 * r.stderr


def test_symmetric_parameters_have_centred_endpoint():
    ens = continuum.sample_X_ensemble(1.0, 1.0, 1.0, 128, 20_000, RandomStream(8), keep=[1.0])
    est = weighted_mean(ens.column("X", 1.0), ens.log_weights)
    assert abs(est.estimate) < 4 * est.stderr
    assert 1.0 <= ens.ess <= ens.count


def test_space_reversal():
    # Y(x) = X(L - x) - X(L) under (u, v) has the law of X under (v, u)
    keep = [0.5, 1.0]
    a = continuum.sample_X_ensemble(2.0, 0.5, 1.0, 128, 40_000, RandomStream(9), keep=keep)
    b = continuum.sample_X_ensemble(0.5, 2.0, 1.0, 128, 40_000, RandomStream(10), keep=keep)
    y_end = -a.column("X", 1.0)
    y_mid = a.column("X", 0.5) - a.column("X", 1.0)
    for ya, xb in ((y_end, b.column("X", 1.0)), (y_mid, b.column("X", 0.5))):
        for stat in (weighted_mean, weighted_variance):
            ea, eb = stat(ya, a.log_weights), stat(xb, b.log_weights)
            assert abs(ea.estimate - eb.estimate) < 4 * math.hypot(ea.stderr, eb.stderr)
    # the drift is visible: without the sign the endpoint means disagree
    ma = weighted_mean(a.column("X", 1.0), a.log_weights)
    mb = weighted_mean(b.column("X", 1.0), b.log_weights)
    assert abs(ma.estimate - mb.estimate) > 4 * math.hypot(ma.stderr, mb.stderr)


def test_invalid_boundary_parameters():
    with pytest.raises(ParameterError, match="u\\+v must be positive"):
        continuum.sample_X_ensemble(1.0, -2.0, 1.0, 16, 10, 0)
    with pytest.raises(ParameterError, match="u\\+v must be positive"):
        continuum.sample_U_ensemble(0.0, 0.0, 1.0, 16, 10, 0)
    with pytest.raises(ParameterError):
        continuum.sample_H_ensemble(1.0, 1.0, 1.0, 16, 0, 0)
    with pytest.raises(ParameterError):
        continuum.sample_X_ensemble(1.0, 1.0, 1.0, 16, 10, 0, keep=[0.03])


def test_zero_mode_identity_per_sample():
    ens = continuum.sample_U_ensemble(1.5, 0.5, 1.0, 128, 5000, RandomStream(11))
    u0 = ens.fields["U"][:, 0]
    g = np.exp(-2 * u0 + ens.scalars["log_S1"])
    assert np.allclose(g, ens.scalars["G"], rtol=1e-12)
    assert np.allclose(ens.fields["U"] - u0[:, None], ens.fields["X"])
    est = weighted_mean(ens.scalars["G"], ens.log_weights)
    assert abs(est.estimate - 2.0) < 4 * est.stderr


def test_exponential_zero_mode():
    ens = continuum.sample_U_ensemble(0.25, 0.75, 1.0, 64, 20_000, RandomStream(12), keep=[0.0])
    assert stats.kstest(ens.scalars["G"], "expon").pvalue > 1e-3


def test_zero_mode_conditional_law():
    # for a fixed shape, a = U(0) has density proportional to exp(-2 k a - exp(-2a) S1)
    u, v = 1.5, 0.5
    k = u + v
    path = continuum.sample_brownian(256, 1.0, 0.5, RandomStream(13))
    s1 = math.exp(float(continuum.log_exp_integral(path.values, 1.0)))
    gen = RandomStream(14).generator()
    draws = np.array([continuum.resample_zero_mode(path, u, v, gen).values[0] for _ in range(5000)])
    a = np.linspace(-6, 6, 20001)
    dens = np.exp(-2 * k * a - np.exp(-2 * a) * s1)
    cdf = integrate.cumulative_trapezoid(dens, a, initial=0.0)
    cdf /= cdf[-1]
    assert stats.kstest(draws, lambda x: np.interp(x, a, cdf)).pvalue > 1e-3


def test_zero_mode_requires_positive_sum():
    path = continuum.sample_brownian(16, 1.0, 0.5, 0)
    with pytest.raises(ParameterError):
        continuum.resample_zero_mode(path, 0.5, -0.5, 0)


def test_grid_refinement_consistency():
    keep = [0.5, 1.0]
    coarse = continuum.sample_H_ensemble(1.0, 1.0, 1.0, 256, 20_000, RandomStream(15), keep=keep)
    fine = continuum.sample_H_ensemble(1.0, 1.0, 1.0, 512, 20_000, RandomStream(16), keep=keep)
    for x in keep:
        for stat in (weighted_mean, weighted_variance):
            a = stat(coarse.column("H", x), coarse.log_weights)
            b = stat(fine.column("H", x), fine.log_weights)
            assert abs(a.estimate - b.estimate) < 4 * math.hypot(a.stderr, b.stderr)


def test_low_ess_warning(caplog):
    with caplog.at_level(logging.WARNING, logger="asepkpz.continuum"):
        ens = continuum.sample_X_ensemble(40.0, 0.0, 4.0, 64, 4000, RandomStream(17))
    assert ens.ess_warning
    assert any("effective sample size" in r.message for r in caplog.records)


def test_thread_count_does_not_change_results(monkeypatch):
    monkeypatch.setenv("ASEP_KPZ_THREADS", "1")
    a = continuum.sample_U_ensemble(1.0, 1.0, 1.0, 64, 5000, RandomStream(18))
    monkeypatch.setenv("ASEP_KPZ_THREADS", "3")
    b = continuum.sample_U_ensemble(1.0, 1.0, 1.0, 64, 5000, RandomStream(18))
    assert np.array_equal(a.values, b.values) and np.array_equal(a.log_weights, b.log_weights)


def test_samples_view():
    ens = continuum.sample_X_ensemble(1.0, 0.0, 1.0, 8, 3, 0)
    paths = ens.samples()
    assert len(paths) == 3 and paths[0].log_weight == ens.log_weights[0]

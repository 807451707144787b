import logging
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from lagflm.errors import (
    EmptyPairingError,
    NumericError,
    RankDeficientError,
    SingularDesignError,
)
from lagflm.sim import SimConfig, beta0, beta2, generate_dataset
from lagflm.smoothing import (
    CovarianceSurface,
    DenseFunctionalPanel,
    SmoothingConfig,
    SparseFunctionalSample,
    center_panel,
    cross_covariance,
    dense_covariance,
    estimate_noise_variance,
    local_linear_1d,
    pooled,
    sparse_covariance,
)

G = np.linspace(0.0, 1.0, 100)


def centered_x2(samples):
    t, v = pooled(samples)
    mu = local_linear_1d(t, v, t, None)
    out, off = [], 0
    for s in samples:
        out.append(s.with_values(s.values - mu[off : off + len(s)]))
        off += len(s)
    return out


# local linear curves


@given(
    a=st.floats(-5, 5),
    b=st.floats(-5, 5),
    h=st.floats(0.02, 2.0),
    times=st.lists(st.floats(0, 1), min_size=2, max_size=40, unique=True),
)
def test_local_linear_reproduces_lines(a, b, h, times):
    t = np.array(times)
    if np.ptp(t) < 1e-3:
        return
    cfg = SmoothingConfig(bandwidth_1d=max(h, 1.01 * np.max(np.diff(np.sort(t)))))
    grid = np.linspace(t.min(), t.max(), 25)
    got = local_linear_1d(t, a * t + b, grid, cfg)
    np.testing.assert_allclose(got, a * grid + b, atol=1e-10 * (1 + abs(a) + abs(b)))


def test_line_exact_at_default_bandwidth(rng):
    t = rng.uniform(0, 1, 300)
    got = local_linear_1d(t, 2 * t + 1, G, None)
    np.testing.assert_allclose(got, 2 * G + 1, atol=1e-10)


def test_single_time_is_singular():
    with pytest.raises(SingularDesignError):
        local_linear_1d(np.full(5, 0.3), np.arange(5.0), G, None)


def test_pooled_response_tracks_intercept(sim100):
    t, v = pooled(sim100.data.y)
    g = np.linspace(0.45, 0.95, 50)
    got = local_linear_1d(t, v, g, None)
    # the response mean is the intercept because the scores have mean zero;
    # the tolerance covers the sampling spread of 100 subjects
    assert np.max(np.abs(got - beta0(g))) < 0.1


def test_noiseless_intercept_recovery():
    sim = generate_dataset(SimConfig(n=100, snr=np.inf))
    ys = [s.with_values(beta0(s.times)) for s in sim.data.y]
    t, v = pooled(ys)
    g = np.linspace(t.min(), t.max(), 100)
    assert np.max(np.abs(local_linear_1d(t, v, g, None) - beta0(g))) < 2e-2


# dense covariance


def x1_truth(s, u):
    return np.sin(2 * np.pi * s) * np.sin(2 * np.pi * u) + s**2 * u**2


def dense_error(n, seed):
    sim = generate_dataset(SimConfig(n=n, seed=seed, snr=np.inf))
    panel, _ = center_panel(sim.data.x1)
    c = dense_covariance(panel)
    return np.max(np.abs(c.surface - x1_truth(G[:, None], G[None, :])))


def test_dense_covariance_converges_to_analytic_surface():
    big = dense_error(2000, 1)
    small = np.mean([dense_error(50, s) for s in range(5)])
    assert big < 0.15
    assert big < small


def test_dense_covariance_zero_and_symmetric(sim100):
    zero = DenseFunctionalPanel(G, np.zeros((4, G.size)))
    assert np.all(dense_covariance(zero).surface == 0.0)
    panel, _ = center_panel(sim100.data.x1)
    C = dense_covariance(panel).surface
    assert np.max(np.abs(C - C.T)) < 1e-12
    assert np.all(C == C.T)


def test_dense_covariance_undersmoothing_warning(sim100):
    panel, _ = center_panel(sim100.data.x1)
    c = dense_covariance(panel, SmoothingConfig(bandwidth_2d=0.001))
    assert c.meta.get("warnings")


def test_nonfinite_panel_rejected():
    v = np.zeros((3, 5))
    v[1, 2] = np.inf
    with pytest.raises(NumericError):
        DenseFunctionalPanel(np.linspace(0, 1, 5), v)


# sparse covariance


def x2_truth(s, u):
    return np.cos(2 * np.pi * s) * np.cos(2 * np.pi * u)


def test_sparse_covariance_large_sample_oracle():
    def err(n):
        sim = generate_dataset(SimConfig(n=n, seed=3, snr=np.inf))
        c = sparse_covariance(centered_x2(sim.data.x2), None, G)
        # realized score variance removes the sampling error of the oracle itself
        truth = np.mean(sim.scores[:, 2] ** 2) * x2_truth(G[:, None], G[None, :])
        return np.abs(c.surface - truth)

    big = err(2000)
    # what is left is the curvature bias of the plane fit, largest at the edges
    assert big.max() < 0.15
    assert big[10:90, 10:90].max() < 0.08
    assert big.max() < err(200).max()


def test_sparse_covariance_symmetric(sim100):
    c = sparse_covariance(centered_x2(sim100.data.x2), None, G)
    assert np.max(np.abs(c.surface - c.surface.T)) < 1e-12


def test_sparse_covariance_all_zero():
    rng = np.random.default_rng(0)
    samples = [
        SparseFunctionalSample(str(i), np.sort(rng.choice(G, 10, replace=False)), np.zeros(10))
        for i in range(30)
    ]
    c = sparse_covariance(samples, None, G)
    assert np.all(c.surface == 0.0)
    assert np.all(c.raw_diagonal == 0.0)


def test_sparse_covariance_single_observation_rank_deficient():
    with pytest.raises(RankDeficientError):
        sparse_covariance([SparseFunctionalSample("a", [0.5], [1.0])], None, G)


def test_rank_deficiency_names_location():
    samples = [SparseFunctionalSample(str(i), [0.1, 0.2], [1.0, 2.0]) for i in range(3)]
    with pytest.raises(RankDeficientError) as info:
        sparse_covariance(samples, SmoothingConfig(bandwidth_2d=0.05), G)
    assert info.value.location is not None


def test_consistency_trend_sparse_surface():
    def err(n, rep):
        sim = generate_dataset(SimConfig(n=n, replication=rep, snr=np.inf))
        c = sparse_covariance(centered_x2(sim.data.x2), None, G)
        return np.max(np.abs(c.surface - x2_truth(G[:, None], G[None, :])))

    e50 = np.mean([err(50, r) for r in range(10)])
    e400 = np.mean([err(400, r) for r in range(10)])
    assert e400 < e50


def test_diagonal_exclusion_keeps_noise_out():
    reps = 10
    noisy, clean, raw_gap = [], [], []
    for r in range(reps):
        cfg = SimConfig(n=200, replication=r)
        a = generate_dataset(cfg)
        b = generate_dataset(replace(cfg, snr=np.inf))
        ca = sparse_covariance(centered_x2(a.data.x2), None, G)
        cb = sparse_covariance(centered_x2(b.data.x2), None, G)
        mid = slice(25, 75)
        noisy.append(np.mean(np.diag(ca.surface)[mid]))
        clean.append(np.mean(np.diag(cb.surface)[mid]))
        raw_gap.append(np.mean(ca.raw_diagonal[mid] - cb.raw_diagonal[mid]) / a.noise_sd["x2"] ** 2)
    d = np.array(noisy) - np.array(clean)
    se = d.std(ddof=1) / np.sqrt(reps)
    assert abs(d.mean()) < 3 * se + 1e-12
    # the same-index smooth does carry the noise variance
    assert np.mean(raw_gap) == pytest.approx(1.0, abs=0.3)


# cross covariance


def test_cross_covariance_of_same_variable_matches_sparse(sim100):
    x2 = centered_x2(sim100.data.x2)
    c = sparse_covariance(x2, None, G)
    x = cross_covariance(x2, x2, None, G, G)
    # the cross version also uses the j = k products, which sit on the diagonal
    off = np.abs(G[:, None] - G[None, :]) > 0.3
    assert np.max(np.abs(x.surface - x.surface.T)) < 1e-10
    assert np.max(np.abs((x.surface - c.surface)[off])) < 0.05


def test_cross_covariance_independent_predictors_vanish():
    def err(n):
        sim = generate_dataset(SimConfig(n=n, seed=5, snr=np.inf))
        x1, _ = center_panel(sim.data.x1)
        x = cross_covariance(x1, centered_x2(sim.data.x2), None, G, G)
        return np.max(np.abs(x.surface[10:90, 10:90]))

    e_small, e_big = err(50), err(1000)
    assert e_big < e_small
    assert e_big < 0.15


def test_cross_covariance_with_response_matches_integral():
    sim = generate_dataset(SimConfig(n=1500, seed=2, snr=np.inf))
    data = sim.data
    t_y, v_y = pooled(data.y)
    yc = centered_x2(data.y)
    ug = np.linspace(0.45, 0.95, 11)
    x = cross_covariance(centered_x2(data.x2), yc, None, G, ug)

    def a3(u):
        return integrate.quad(lambda v: beta2(v, u) * np.cos(2 * np.pi * (u - v)), 0.1, 0.4)[0]

    truth = np.cos(2 * np.pi * G)[:, None] * np.array([a3(u) for u in ug])[None, :]
    err = np.abs(x.surface - truth)[10:90]
    assert err.max() < 0.05


def test_cross_covariance_needs_common_subjects():
    a = [SparseFunctionalSample("a", [0.1, 0.5], [1.0, 2.0])]
    b = [SparseFunctionalSample("b", [0.1, 0.5], [1.0, 2.0])]
    with pytest.raises(EmptyPairingError):
        cross_covariance(a, b, None, G, G)


# noise variance


def test_noise_variance_trivial_cases():
    raw = np.linspace(1, 2, 50)
    g = np.linspace(0, 1, 50)
    assert estimate_noise_variance(raw, raw, g) == 0.0
    assert estimate_noise_variance(raw + 0.04, raw, g) == pytest.approx(0.04, abs=1e-15)
    assert estimate_noise_variance(raw - 0.5, raw, g) == 0.0


@given(st.floats(0, 10), st.lists(st.floats(-3, 3), min_size=4, max_size=40))
def test_noise_variance_constant_offset_property(offset, base):
    base = np.array(base)
    g = np.linspace(0, 1, base.size)
    assert estimate_noise_variance(base + offset, base, g) == pytest.approx(offset, abs=1e-9)


def test_noise_variance_on_simulated_sparse_predictor():
    # var(zeta cos(2 pi t)) averages to 1/2, so SNR 20 puts the noise near 0.025
    est = []
    for r in range(10):
        sim = generate_dataset(SimConfig(n=200, replication=r))
        c = sparse_covariance(centered_x2(sim.data.x2), None, G)
        est.append(estimate_noise_variance(c.raw_diagonal, c.signal_diagonal, G))
    assert np.mean(est) == pytest.approx(0.025, rel=0.30)


def test_surface_interpolation_exact_at_nodes(rng):
    S = rng.normal(size=(7, 5))
    gs, gu = np.linspace(0, 1, 7), np.linspace(0.2, 0.9, 5)
    c = CovarianceSurface(gs, gu, S)
    np.testing.assert_array_equal(c(gs[:, None], gu[None, :]), S)

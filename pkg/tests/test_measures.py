"""Tests for Gaussian measures, probability metrics, and moment bounds."""

import numpy as np
import pytest

from bip.measures import (
    DiscreteMeasure,
    FerniqueReport,
    GaussianMeasure,
    check_metric_relation,
    fernique_check,
    hellinger_discrete,
    hellinger_from_histograms,
    hellinger_gaussian,
    marginal_histogram_distance,
    moment_difference_bound,
    sample_gaussian,
    tv_discrete,
)
from bip.spectral import Geometry, IndexSetMismatchError, SpectralField, sobolev_norm

RNG = np.random.default_rng

# frozen from the 1-D quadrature oracle below; they equal the closed forms
# sqrt(1 - e^{-1/8}) and sqrt(1 - (4/5)^{1/2})
HELL_N01_N11 = 0.34278724803499416
HELL_N01_N04 = 0.32491969623290634


def hellinger_quadrature(m1, s1, m2, s2, span=30.0, n=400_001):
    """Independent oracle: trapezoid rule on 0.5 * (sqrt p - sqrt q)^2."""
    x = np.linspace(-span, span, n)
    p = np.exp(-(((x - m1) / s1) ** 2) / 2) / (s1 * np.sqrt(2 * np.pi))
    q = np.exp(-(((x - m2) / s2) ** 2) / 2) / (s2 * np.sqrt(2 * np.pi))
    return np.sqrt(0.5 * np.trapezoid((np.sqrt(p) - np.sqrt(q)) ** 2, x))


def scalar_measure(mean, std):
    g = Geometry.dirichlet_box(1, 1)
    return GaussianMeasure(g, SpectralField(g, np.array([mean])), np.array([std**2]))


# -- sampling ---------------------------------------------------------------


def test_sample_variance_matches_spectrum():
    g = Geometry.dirichlet_box(1, 8)
    m = GaussianMeasure.power_law(g, 2.0, 1.5)
    rng = RNG(42)
    n = 10_000
    draws = np.array([sample_gaussian(m, rng).coeffs for _ in range(n)])
    emp = draws.var(axis=0)
    rel_se = np.sqrt(2.0 / n)
    assert np.all(np.abs(emp / m.variance_spectrum - 1.0) < 5 * rel_se)


def test_sample_torus_variance_and_conjugate_pairing():
    g = Geometry.torus2d(2)
    m = GaussianMeasure.power_law(g, 4.0, 2.0)
    rng = RNG(7)
    n = 20_000
    draws = np.array([sample_gaussian(m, rng).coeffs for _ in range(n)])
    emp = np.mean(np.abs(draws) ** 2, axis=0)
    rel_se = np.sqrt(2.0 / n)
    assert np.all(np.abs(emp / m.variance_spectrum - 1.0) < 5 * rel_se)


def test_sample_degenerate_variance_returns_mean():
    g = Geometry.dirichlet_box(1, 4)
    mean = SpectralField(g, np.array([1.0, -2.0, 0.5, 0.0]))
    m = GaussianMeasure(g, mean, np.full(4, 1e-30))
    f = sample_gaussian(m, RNG(0))
    np.testing.assert_allclose(f.coeffs, mean.coeffs, atol=1e-13)


def test_prior_norm_tail_behaviour():
    # E ||u||_s^2 = sum_k 2 beta lambda_k^{s-alpha}: finite for s < alpha - 1
    # on the 2-D torus, divergent for s > alpha - 1.  Tail sums computed
    # directly; one Monte Carlo spot check against the exact value.
    beta, alpha = 1.0, 2.0
    exact = {}
    for res in (4, 8, 16, 32):
        g = Geometry.torus2d(res)
        lam = g.eigenvalues
        for s in (0.5, 1.5):
            exact[(res, s)] = 2 * beta * np.sum(lam ** (s - alpha))
    # s = 0.5: increments shrink to nothing
    assert exact[(32, 0.5)] < 1.05 * exact[(16, 0.5)]
    # s = 1.5: still growing fast
    assert exact[(32, 1.5)] > 1.4 * exact[(16, 1.5)]

    g = Geometry.torus2d(16)
    m = GaussianMeasure.power_law(g, beta, alpha)
    rng = RNG(3)
    n = 400
    vals = np.array([sobolev_norm(sample_gaussian(m, rng), 0.5) ** 2 for _ in range(n)])
    se = vals.std() / np.sqrt(n)
    assert abs(vals.mean() - exact[(16, 0.5)]) < 5 * se


# -- Gaussian Hellinger -----------------------------------------------------


def test_hellinger_gaussian_identical_is_zero():
    g = Geometry.torus2d(3)
    m = GaussianMeasure.power_law(g, 2.0, 2.0)
    assert hellinger_gaussian(m, m) == 0.0


def test_hellinger_gaussian_mean_shift_oracle():
    q = hellinger_quadrature(0, 1, 1, 1)
    assert q == pytest.approx(HELL_N01_N11, abs=1e-9)
    d = hellinger_gaussian(scalar_measure(0, 1), scalar_measure(1, 1))
    assert d == pytest.approx(HELL_N01_N11, abs=1e-12)


def test_hellinger_gaussian_variance_change_oracle():
    q = hellinger_quadrature(0, 1, 0, 2)
    assert q == pytest.approx(HELL_N01_N04, abs=1e-9)
    d = hellinger_gaussian(scalar_measure(0, 1), scalar_measure(0, 2))
    assert d == pytest.approx(HELL_N01_N04, abs=1e-12)


def test_hellinger_gaussian_index_mismatch():
    m1 = GaussianMeasure.power_law(Geometry.dirichlet_box(1, 4), 1.0, 2.0)
    m2 = GaussianMeasure.power_law(Geometry.dirichlet_box(1, 5), 1.0, 2.0)
    with pytest.raises(IndexSetMismatchError):
        hellinger_gaussian(m1, m2)


def test_hellinger_gaussian_tiny_distances_survive():
    g = Geometry.dirichlet_box(1, 2)
    m1 = GaussianMeasure(g, SpectralField(g, np.zeros(2)), np.ones(2))
    m2 = GaussianMeasure(g, SpectralField(g, np.array([1e-60, 0.0])), np.ones(2))
    d = hellinger_gaussian(m1, m2)
    assert d == pytest.approx(np.sqrt(1e-120 / 8.0), rel=1e-6)


def test_hellinger_gaussian_matches_binned_densities():
    # invariant: closed form agrees with the discrete metric applied to
    # finely bin-integrated 1-D densities
    m1, s1, m2, s2 = 0.2, 1.0, -0.3, 1.7
    edges = np.linspace(-20, 20, 4001)

    def cdf(x, mu, sig):
        from math import erf

        return 0.5 * (1 + erf((x - mu) / (sig * np.sqrt(2))))

    c1 = np.array([cdf(e, m1, s1) for e in edges])
    c2 = np.array([cdf(e, m2, s2) for e in edges])
    p = DiscreteMeasure.from_weights(np.diff(c1))
    q = DiscreteMeasure.from_weights(np.diff(c2))
    exact = hellinger_gaussian(scalar_measure(m1, s1), scalar_measure(m2, s2))
    assert hellinger_discrete(p, q) == pytest.approx(exact, abs=1e-3)


# -- discrete metrics -------------------------------------------------------


def test_discrete_metrics_identical():
    p = DiscreteMeasure(np.array([0.3, 0.7]))
    assert hellinger_discrete(p, p) == 0.0
    assert tv_discrete(p, p) == 0.0


def test_discrete_metrics_disjoint():
    p = DiscreteMeasure(np.array([1.0, 0.0]))
    q = DiscreteMeasure(np.array([0.0, 1.0]))
    assert tv_discrete(p, q) == 1.0
    assert hellinger_discrete(p, q) == 1.0


def test_discrete_metrics_example():
    p = DiscreteMeasure(np.array([0.5, 0.5]))
    q = DiscreteMeasure(np.array([0.25, 0.75]))
    assert tv_discrete(p, q) == pytest.approx(0.25, abs=1e-15)
    # direct arithmetic oracle
    expect = np.sqrt(0.5 * ((np.sqrt(0.5) - np.sqrt(0.25)) ** 2 + (np.sqrt(0.5) - np.sqrt(0.75)) ** 2))
    assert expect == pytest.approx(0.1845919112825145, abs=1e-15)
    assert hellinger_discrete(p, q) == pytest.approx(expect, abs=1e-15)


def test_discrete_metrics_length_mismatch():
    with pytest.raises(ValueError):
        hellinger_discrete(DiscreteMeasure(np.array([1.0])), DiscreteMeasure(np.array([0.5, 0.5])))


def test_discrete_metric_properties_random():
    rng = RNG(11)
    for _ in range(200):
        n = rng.integers(2, 12)
        p = DiscreteMeasure(rng.dirichlet(np.ones(n)))
        q = DiscreteMeasure(rng.dirichlet(np.ones(n)))
        r = DiscreteMeasure(rng.dirichlet(np.ones(n)))
        dh = hellinger_discrete(p, q)
        assert 0.0 <= dh <= 1.0
        assert 0.0 <= tv_discrete(p, q) <= 1.0
        assert dh == pytest.approx(hellinger_discrete(q, p), abs=1e-15)
        assert dh <= hellinger_discrete(p, r) + hellinger_discrete(r, q) + 1e-12


# -- histogram estimator ----------------------------------------------------


def test_histograms_identical_zero():
    h = np.array([3, 5, 2])
    assert hellinger_from_histograms(h, h) == 0.0


def test_histograms_reject_empty():
    with pytest.raises(ValueError):
        hellinger_from_histograms(np.zeros(3), np.ones(3))


def test_histograms_same_distribution_small():
    rng = RNG(5)
    a = rng.standard_normal(100_000)
    b = rng.standard_normal(100_000)
    assert marginal_histogram_distance(a, b, bins=50) < 0.03


def test_histograms_recover_gaussian_shift():
    rng = RNG(6)
    a = rng.standard_normal(100_000)
    b = rng.standard_normal(100_000) + 1.0
    d = marginal_histogram_distance(a, b, bins=50)
    assert d == pytest.approx(HELL_N01_N11, abs=0.03)


# -- metric relation --------------------------------------------------------


def test_metric_relation_trivial_cases():
    p = DiscreteMeasure(np.array([0.5, 0.5]))
    assert check_metric_relation(p, p).passed
    q = DiscreteMeasure(np.array([1.0, 0.0]))
    r = DiscreteMeasure(np.array([0.0, 1.0]))
    rep = check_metric_relation(q, r)
    assert rep.passed and rep.d_tv == 1.0 and rep.d_hell == 1.0


def test_metric_relation_random_pairs():
    rng = RNG(12)
    for _ in range(1000):
        n = rng.integers(2, 20)
        p = DiscreteMeasure(rng.dirichlet(np.full(n, 0.4)))
        q = DiscreteMeasure(rng.dirichlet(np.full(n, 0.4)))
        assert check_metric_relation(p, q).passed


# -- moment difference bound ------------------------------------------------


def test_moment_bound_identical():
    p = DiscreteMeasure(np.array([0.4, 0.6]))
    f = np.array([[1.0, 2.0], [0.0, -1.0]])
    rep = moment_difference_bound(p, p, f)
    assert rep.passed and rep.mean_gap == 0.0


def test_moment_bound_two_point_example():
    p = DiscreteMeasure(np.array([1.0, 0.0]))
    q = DiscreteMeasure(np.array([0.0, 1.0]))
    f = np.array([0.0, 1.0])
    rep = moment_difference_bound(p, q, f)
    assert rep.mean_gap == pytest.approx(1.0)
    assert rep.mean_bound == pytest.approx(2.0)
    assert rep.passed


def test_moment_bound_random_pairs():
    rng = RNG(13)
    for _ in range(1000):
        n = rng.integers(2, 10)
        d = rng.integers(1, 4)
        p = DiscreteMeasure(rng.dirichlet(np.ones(n)))
        q = DiscreteMeasure(rng.dirichlet(np.ones(n)))
        f = rng.standard_normal((n, d)) * 3.0
        assert moment_difference_bound(p, q, f).passed


# -- Fernique smoke test ----------------------------------------------------


def test_fernique_a_zero_exact():
    m = scalar_measure(0.0, 1.0)
    rep = fernique_check(m, 0.0, 500, RNG(1))
    assert rep.mean == 1.0 and not rep.flagged


def test_fernique_small_a_matches_integral():
    # oracle: E exp(a x^2) = (1 - 2a)^{-1/2} for x ~ N(0,1)
    m = scalar_measure(0.0, 1.0)
    rep = fernique_check(m, 0.1, 200_000, RNG(2))
    assert not rep.flagged
    assert rep.mean == pytest.approx((1 - 0.2) ** -0.5, rel=0.02)


def test_fernique_supercritical_flagged():
    m = scalar_measure(0.0, 1.0)
    rep = fernique_check(m, 0.6, 20_000, RNG(3))
    assert rep.flagged

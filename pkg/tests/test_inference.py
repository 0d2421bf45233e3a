"""Tests for the pCN sampler, chain diagnostics, quadrature oracle,
assumption audit, and convergence study driver."""

import numpy as np
import pytest

from bip.heat import HeatProblem, analytic_posterior, heat_potential, synth_observation, truncated_posterior
from bip.inference import (
    ChainDivergenceError,
    ChainSettings,
    Posterior,
    audit_assumptions,
    effective_sample_size,
    gaussian_convergence_study,
    mcmc_convergence_study,
    pcn_acceptance_probability,
    pcn_step,
    quadrature_expectation,
    run_chain,
)
from bip.measures import GaussianMeasure, field_to_real, sample_gaussian
from bip.spectral import Geometry, SpectralField

RNG = np.random.default_rng


def flat_posterior(resolution=6, beta=1.0, alpha=2.0):
    prior = GaussianMeasure.power_law(Geometry.dirichlet_box(1, resolution), beta, alpha)
    return Posterior(prior, lambda u: 0.0)


def heat_posterior(resolution=2, seed=0):
    p = HeatProblem.default(resolution=resolution)
    rng = RNG(seed)
    data = synth_observation(p, sample_gaussian(p.prior, rng), rng)
    post = Posterior(p.prior, lambda u: heat_potential(p, u, data))
    return p, data, post


# -- acceptance probability ---------------------------------------------------


def test_acceptance_probability_formula():
    assert pcn_acceptance_probability(1.0, 2.0) == pytest.approx(np.exp(-1.0), rel=1e-15)
    assert pcn_acceptance_probability(2.0, 1.0) == 1.0
    assert pcn_acceptance_probability(0.0, 1e10) == 0.0
    assert pcn_acceptance_probability(0.0, -1e10) == 1.0  # no overflow


def test_acceptance_probability_exchange_symmetry():
    # min{1, r} * min{1, 1/r} = min{r, 1/r}
    rng = RNG(0)
    for _ in range(100):
        pu, pw = rng.standard_normal(2) * 3
        a = pcn_acceptance_probability(pu, pw)
        b = pcn_acceptance_probability(pw, pu)
        r = np.exp(pu - pw)
        assert a * b == pytest.approx(min(r, 1.0 / r), rel=1e-12)


# -- single step ----------------------------------------------------------------


def test_pcn_step_small_beta_stays_close():
    post = flat_posterior()
    rng = RNG(1)
    state = sample_gaussian(post.prior, rng)
    res = pcn_step(state, 1e-8, post, rng)
    assert res.accepted
    assert np.max(np.abs(field_to_real(res.state) - field_to_real(state))) < 1e-6


def test_pcn_step_validates_beta():
    post = flat_posterior()
    state = sample_gaussian(post.prior, RNG(2))
    with pytest.raises(ValueError):
        pcn_step(state, 0.0, post, RNG(3))
    with pytest.raises(ValueError):
        pcn_step(state, 1.5, post, RNG(3))


def test_pcn_flat_potential_preserves_prior_variance():
    post = flat_posterior(resolution=4)
    rng = RNG(4)
    rec = run_chain(post, 100_000, 0, 0.2, {"all": lambda u: 0.0}, rng)
    assert rec.acceptance_rate == 1.0
    # per-mode variance against the AR(1)-corrected standard error:
    # rho = sqrt(1 - beta^2), var inflation (1 + rho^2) / (1 - rho^2)
    beta = 0.2
    rho = np.sqrt(1 - beta**2)
    infl = (1 + rho**2) / (1 - rho**2)
    rng2 = np.random.default_rng(4)
    states = np.empty((100_000, 4))
    state = sample_gaussian(post.prior, rng2)
    from bip.inference import pcn_step as step

    phi = 0.0
    for i in range(100_000):
        res = step(state, beta, post, rng2, phi_state=phi)
        state, phi = res.state, res.phi
        states[i] = state.coeffs
    emp = states.var(axis=0)
    rel_se = np.sqrt(2.0 * infl / 100_000)
    assert np.all(np.abs(emp / post.prior.variance_spectrum - 1.0) < 5 * rel_se)


def test_pcn_flat_potential_marginals_ks():
    # two-sample KS between thinned chain output and direct prior draws,
    # 20 repetitions at significance 1e-3: at most one failure
    post = flat_posterior(resolution=3)
    sig = 1e-3
    c_alpha = np.sqrt(-np.log(sig / 2.0) / 2.0)
    failures = 0
    for rep in range(20):
        rng = RNG(100 + rep)
        rec_states = []
        state = sample_gaussian(post.prior, rng)
        phi = 0.0
        for i in range(4000):
            res = pcn_step(state, 0.9, post, rng, phi_state=phi)
            state, phi = res.state, res.phi
            if i % 8 == 0:
                rec_states.append(state.coeffs.copy())
        chain = np.array(rec_states)
        direct = np.array([sample_gaussian(post.prior, rng).coeffs for _ in range(500)])
        n, m = len(chain), len(direct)
        bound = c_alpha * np.sqrt((n + m) / (n * m))
        worst = 0.0
        for k in range(3):
            a = np.sort(chain[:, k])
            b = np.sort(direct[:, k])
            grid = np.concatenate([a, b])
            cdf_a = np.searchsorted(a, grid, side="right") / n
            cdf_b = np.searchsorted(b, grid, side="right") / m
            worst = max(worst, np.max(np.abs(cdf_a - cdf_b)))
        if worst > bound:
            failures += 1
    assert failures <= 1


# -- full chains -----------------------------------------------------------------


def test_chain_requires_valid_lengths():
    post = flat_posterior()
    with pytest.raises(ValueError):
        run_chain(post, 10, 10, 0.2, {}, RNG(0))


def test_chain_deterministic_given_seed():
    _, _, post = heat_posterior()
    rec1 = run_chain(post, 500, 50, 0.3, {"m1": lambda u: u.coeffs[0]}, RNG(7))
    rec2 = run_chain(post, 500, 50, 0.3, {"m1": lambda u: u.coeffs[0]}, RNG(7))
    np.testing.assert_array_equal(rec1.functionals["m1"], rec2.functionals["m1"])
    np.testing.assert_array_equal(rec1.accepted, rec2.accepted)


def test_chain_record_length_contract():
    post = flat_posterior()
    rec = run_chain(post, 123, 23, 0.5, {"f": lambda u: u.coeffs[0]}, RNG(8))
    assert rec.steps == 123
    assert len(rec.functionals["f"]) == 123
    assert 0.0 <= rec.acceptance_rate <= 1.0


def test_chain_mean_matches_analytic_posterior():
    p, data, post = heat_posterior(resolution=2, seed=11)
    exact = analytic_posterior(p, data)
    rec = run_chain(
        post,
        60_000,
        10_000,
        0.25,
        {"m1": lambda u: u.coeffs[0], "m2": lambda u: u.coeffs[1]},
        RNG(12),
    )
    for name, idx in (("m1", 0), ("m2", 1)):
        mean, se = rec.mean_and_se(name)
        assert abs(mean - exact.mean.coeffs[idx]) < 3 * se


def test_chain_aborts_on_nonfinite_potential():
    prior = GaussianMeasure.power_law(Geometry.dirichlet_box(1, 2), 1.0, 2.0)

    def bad_potential(u):
        return np.inf if abs(u.coeffs[0]) > 0.2 else 0.0

    post = Posterior(prior, bad_potential, check_draws=0)
    with pytest.raises(ChainDivergenceError):
        run_chain(post, 2000, 0, 0.5, {}, RNG(13))


def test_ess_reasonable_for_iid_and_correlated():
    rng = RNG(14)
    iid = rng.standard_normal(5000)
    assert effective_sample_size(iid) > 2500
    ar = np.empty(5000)
    ar[0] = 0.0
    for i in range(1, 5000):
        ar[i] = 0.95 * ar[i - 1] + rng.standard_normal()
    assert effective_sample_size(ar) < 1000


# -- quadrature oracle -------------------------------------------------------------


def test_quadrature_flat_potential():
    post = flat_posterior(resolution=3)
    z, ef = quadrature_expectation(post, [0], lambda u: u.coeffs[0])
    assert z == pytest.approx(1.0, rel=1e-12)
    assert abs(ef[0]) < 1e-12


def test_quadrature_matches_conjugate_posterior():
    p, data, post = heat_posterior(resolution=1, seed=15)
    exact = analytic_posterior(p, data)
    z, moments = quadrature_expectation(
        post, [0], lambda u: np.array([u.coeffs[0], u.coeffs[0] ** 2])
    )
    mean = moments[0]
    var = moments[1] - mean**2
    assert mean == pytest.approx(exact.mean.coeffs[0], abs=1e-8)
    assert var == pytest.approx(exact.variance_spectrum[0], abs=1e-8)
    assert z > 0


def test_quadrature_odd_functional_vanishes():
    prior = GaussianMeasure.power_law(Geometry.dirichlet_box(1, 2), 1.0, 2.0)
    post = Posterior(prior, lambda u: u.coeffs[0] ** 2)  # even potential
    _, ef = quadrature_expectation(post, [0], lambda u: u.coeffs[0] ** 3)
    assert abs(ef[0]) < 1e-10


def test_quadrature_agrees_with_two_mode_chain():
    p, data, post = heat_posterior(resolution=2, seed=16)
    _, ef = quadrature_expectation(post, [0, 1], lambda u: u.coeffs.copy())
    rec = run_chain(
        post, 40_000, 8_000, 0.25,
        {"m1": lambda u: u.coeffs[0], "m2": lambda u: u.coeffs[1]}, RNG(17),
    )
    for name, idx in (("m1", 0), ("m2", 1)):
        mean, se = rec.mean_and_se(name)
        assert abs(mean - ef[idx]) < 3 * se


# -- assumption audit ----------------------------------------------------------------


def test_audit_flat_potential():
    post = flat_posterior()
    audit = audit_assumptions(post, [0.1, 1.0], 200, RNG(18))
    assert audit.finite
    for eps, m_fit in audit.lower_offset.items():
        assert m_fit >= 0.0  # M = 0 suffices
    assert all(v == 0.0 for v in audit.local_upper.values())


def test_audit_heat_potential_stable():
    p, data, post = heat_posterior(resolution=16, seed=19)
    a1 = audit_assumptions(post, [0.1, 1.0], 250, RNG(20))
    a2 = audit_assumptions(post, [0.1, 1.0], 500, RNG(20))
    assert a1.finite and a2.finite
    for eps in (0.1, 1.0):
        # nested draws: the fitted minimum can only move down, and not by much
        assert a2.lower_offset[eps] <= a1.lower_offset[eps] + 1e-12
        assert abs(a2.lower_offset[eps] - a1.lower_offset[eps]) <= 0.5 * (
            1.0 + abs(a1.lower_offset[eps])
        )


# -- convergence studies ----------------------------------------------------------------


def test_gaussian_study_distances_decrease():
    p = HeatProblem.default(resolution=32)
    rng = RNG(21)
    data = synth_observation(p, sample_gaussian(p.prior, rng), rng)
    rows = gaussian_convergence_study(
        lambda n: truncated_posterior(p, data, n), [2, 4, 6, 8], 32
    )
    d = [r.distance for r in rows]
    assert all(a > b for a, b in zip(d, d[1:]))
    assert all(r.bound_ok for r in rows)


def test_mcmc_study_constant_family_is_degenerate():
    # if the potential ignores the level, common-seed chains coincide and
    # every distance is exactly zero
    p, data, post = heat_posterior(resolution=4, seed=22)

    def make_post(n):
        return Posterior(p.prior, post.potential, check_draws=0)

    rows, samples = mcmc_convergence_study(
        make_post, [1, 2], 4, lambda u: u.coeffs[0],
        ChainSettings(steps=2000, beta_pcn=0.3), seed=23,
    )
    assert all(r.distance == 0.0 for r in rows)
    assert all(r.mean_gap == 0.0 for r in rows)


def test_convergence_study_dispatch():
    from bip.inference import MetricPlan, convergence_study

    p = HeatProblem.default(resolution=16)
    rng = RNG(26)
    data = synth_observation(p, sample_gaussian(p.prior, rng), rng)
    rows = convergence_study(
        lambda n: truncated_posterior(p, data, n), [2, 4], 16, MetricPlan("gaussian-exact")
    )
    assert rows[0].distance > rows[1].distance

    def make_post(n):
        return Posterior(p.prior, lambda u: 0.0, check_draws=0)

    plan = MetricPlan(
        "histogram-mcmc",
        functional=lambda u: u.coeffs[0],
        settings=ChainSettings(steps=1500, beta_pcn=0.4),
        seed=9,
    )
    rows = convergence_study(make_post, [2, 4], 16, plan)
    assert all(r.distance == 0.0 for r in rows)  # level-independent family
    with pytest.raises(ValueError):
        convergence_study(make_post, [4, 2], 16, plan)
    with pytest.raises(ValueError):
        MetricPlan("histogram-mcmc")


def test_mcmc_study_heat_family_decreases():
    # truncated potentials Phi(P^N u): distance to the reference shrinks
    p = HeatProblem.default(resolution=8, delta=1e-4)
    rng = RNG(24)
    data = synth_observation(p, sample_gaussian(p.prior, rng), rng)

    def make_post(n):
        from bip.spectral import project

        return Posterior(
            p.prior, lambda u: heat_potential(p, project(u, n), data), check_draws=0
        )

    rows, _ = mcmc_convergence_study(
        make_post, [1, 3], 8, lambda u: u.coeffs[0],
        ChainSettings(steps=20_000, beta_pcn=0.3), seed=25,
    )
    assert rows[0].distance > rows[1].distance
    assert all(r.bound_ok for r in rows)

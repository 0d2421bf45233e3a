"""Posterior construction, function-space random-walk MCMC, quadrature
oracles for low-dimensional checks, assumption audits, and the convergence
study driver.

The sampler is the preconditioned Crank-Nicolson proposal: reversible for the
prior, with an acceptance ratio depending only on the potential, so chains at
different truncation levels can share one proposal noise stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .measures import GaussianMeasure, field_to_real, hellinger_gaussian
from .spectral import SpectralField


class ChainDivergenceError(RuntimeError):
    """A chain hit a non-finite potential value."""


class Posterior:
    """Prior Gaussian plus potential; density exp(-potential)/Z against the
    prior.  The potential is checked to be finite on a few prior draws at
    construction time."""

    def __init__(
        self,
        prior: GaussianMeasure,
        potential: Callable[[SpectralField], float],
        check_draws: int = 10,
    ):
        self.prior = prior
        self.potential = potential
        if check_draws:
            rng = np.random.default_rng(20250809)
            from .measures import sample_gaussian

            for _ in range(check_draws):
                val = potential(sample_gaussian(prior, rng))
                if not np.isfinite(val):
                    raise ValueError("potential is not finite on prior draws")


def pcn_acceptance_probability(phi_current: float, phi_proposed: float) -> float:
    """min{1, exp(phi_current - phi_proposed)}, overflow-safe."""
    diff = phi_current - phi_proposed
    if diff >= 0.0:
        return 1.0
    return float(np.exp(diff))


@dataclass
class PcnStepResult:
    state: SpectralField
    accepted: bool
    phi: float


def pcn_step(
    state: SpectralField,
    beta_pcn: float,
    post: Posterior,
    rng: np.random.Generator,
    phi_state: float | None = None,
    proposal_dim: int | None = None,
) -> PcnStepResult:
    """One preconditioned Crank-Nicolson step.

    Proposal: w = m0 + sqrt(1 - beta^2) (u - m0) + beta * xi, xi ~ N(0, C0);
    accept with probability min{1, exp(Phi(u) - Phi(w))}.

    ``proposal_dim`` (>= the state's real dimension) fixes how many normals
    are consumed per step so chains of different dimension can share a
    common random number stream.
    """
    if not 0.0 < beta_pcn <= 1.0:
        raise ValueError("beta_pcn must lie in (0, 1]")
    prior = post.prior
    m = prior.real_means()
    x = field_to_real(state)
    dim = len(x)
    draw = rng.standard_normal(proposal_dim if proposal_dim else dim)
    xi = draw[:dim]
    w = m + np.sqrt(1.0 - beta_pcn**2) * (x - m) + beta_pcn * prior.real_stds() * xi
    u_accept = rng.random()

    if phi_state is None:
        phi_state = post.potential(state)
    proposal = prior.field_from_real(w)
    phi_prop = post.potential(proposal)
    if not np.isfinite(phi_prop) or not np.isfinite(phi_state):
        raise ChainDivergenceError(
            f"non-finite potential (current {phi_state}, proposal {phi_prop})"
        )
    if u_accept <= pcn_acceptance_probability(phi_state, phi_prop):
        return PcnStepResult(proposal, True, float(phi_prop))
    return PcnStepResult(state, False, float(phi_state))


@dataclass
class ChainRecord:
    """Recorded functional traces over a full chain plus diagnostics."""

    functionals: dict
    accepted: np.ndarray
    beta_pcn: float
    burn_in: int
    seed_info: str = ""

    @property
    def steps(self) -> int:
        return len(self.accepted)

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted))

    def kept(self, name: str) -> np.ndarray:
        return self.functionals[name][self.burn_in :]

    def ess(self, name: str) -> float:
        return effective_sample_size(self.kept(name))

    def mean_and_se(self, name: str) -> tuple[float, float]:
        x = self.kept(name)
        n_eff = max(self.ess(name), 1.0)
        return float(np.mean(x)), float(np.std(x) / np.sqrt(n_eff))


def autocorrelation(x: np.ndarray, max_lag: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = len(x)
    x = x - x.mean()
    var = np.dot(x, x)
    if var == 0:
        return np.ones(1)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n]
    rho = acov / var
    if max_lag is not None:
        rho = rho[: max_lag + 1]
    return rho


def integrated_autocorr_time(x: np.ndarray) -> float:
    """Geyer initial-positive-sequence estimate of the integrated
    autocorrelation time (>= 1 for i.i.d. samples)."""
    rho = autocorrelation(x)
    n = len(rho)
    tau = -1.0
    m = 0
    while 2 * m + 1 < n:
        gamma = rho[2 * m] + rho[2 * m + 1]
        if gamma <= 0.0:
            break
        tau += 2.0 * gamma
        m += 1
    return max(tau, 1.0)


def effective_sample_size(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if len(x) < 4 or np.std(x) == 0:
        return float(len(x))
    return float(len(x) / integrated_autocorr_time(x))


def run_chain(
    post: Posterior,
    steps: int,
    burn_in: int,
    beta_pcn: float,
    functionals: Mapping[str, Callable[[SpectralField], float]],
    rng: np.random.Generator,
    initial: SpectralField | None = None,
    proposal_dim: int | None = None,
) -> ChainRecord:
    """Run a pCN chain, recording the given functionals at every step.

    Deterministic given the generator seed.  The initial state (when not
    supplied) is a prior draw taken from the same stream, through the same
    ``proposal_dim`` window, so chains at different truncations but a common
    seed start from nested draws.
    """
    if not steps > burn_in >= 0:
        raise ValueError("need steps > burn_in >= 0")
    prior = post.prior
    dim = prior.real_dim
    if proposal_dim is not None and proposal_dim < dim:
        raise ValueError("proposal_dim must cover the state dimension")
    if initial is None:
        draw = rng.standard_normal(proposal_dim if proposal_dim else dim)
        initial = prior.field_from_real(prior.real_means() + prior.real_stds() * draw[:dim])
    state = initial
    phi = post.potential(state)
    if not np.isfinite(phi):
        raise ChainDivergenceError(f"non-finite potential at the initial state: {phi}")
    traces = {name: np.empty(steps) for name in functionals}
    accepted = np.zeros(steps, dtype=bool)
    for i in range(steps):
        res = pcn_step(state, beta_pcn, post, rng, phi_state=phi, proposal_dim=proposal_dim)
        state, phi = res.state, res.phi
        accepted[i] = res.accepted
        for name, fn in functionals.items():
            traces[name][i] = fn(state)
    return ChainRecord(traces, accepted, beta_pcn, burn_in)


# ---------------------------------------------------------------------------
# quadrature oracle
# ---------------------------------------------------------------------------


def quadrature_expectation(
    post: Posterior,
    active_coords: Sequence[int],
    f: Callable[[SpectralField], float],
    nodes: int = 64,
) -> tuple[float, np.ndarray]:
    """Normalization constant and posterior expectation by tensor
    Gauss-Hermite quadrature over the active real coordinates.

    Both the potential and ``f`` must depend on the active coordinates only;
    the remaining coordinates integrate out against the prior and are held at
    the prior mean during evaluation.
    """
    if len(active_coords) > 3:
        raise ValueError("quadrature oracle supports at most 3 active coordinates")
    prior = post.prior
    x_nodes, w = np.polynomial.hermite.hermgauss(nodes)
    means = prior.real_means()
    stds = prior.real_stds()
    grids = np.meshgrid(*[x_nodes] * len(active_coords), indexing="ij")
    weights = np.ones_like(grids[0])
    for wg in np.meshgrid(*[w] * len(active_coords), indexing="ij"):
        weights = weights * wg
    weights = (weights / np.pi ** (len(active_coords) / 2.0)).ravel()
    pts = np.stack([gr.ravel() for gr in grids], axis=1)

    z_acc = 0.0
    f_acc = None
    base = means.copy()
    for wt, pt in zip(weights, pts):
        x = base.copy()
        for j, c in enumerate(active_coords):
            x[c] = means[c] + np.sqrt(2.0) * stds[c] * pt[j]
        u = prior.field_from_real(x)
        dens = np.exp(-post.potential(u))
        if not np.isfinite(dens):
            raise ValueError("non-finite integrand in quadrature")
        z_acc += wt * dens
        val = np.atleast_1d(np.asarray(f(u), dtype=float))
        f_acc = wt * dens * val if f_acc is None else f_acc + wt * dens * val
    if z_acc <= 0:
        raise ValueError("normalization constant must be positive")
    return float(z_acc), f_acc / z_acc


# ---------------------------------------------------------------------------
# assumption audit
# ---------------------------------------------------------------------------


@dataclass
class AssumptionAudit:
    """Tightest empirical constants for the potential growth bounds.

    ``lower_offset[eps]`` is the largest M with Phi >= M - eps ||u||^2 over
    the draws; ``local_upper[r]`` the smallest L with Phi <= L on ||u|| <= r;
    ``forward_log_offset[eps]`` the smallest M with
    |G(u)| <= exp(eps ||u||^2 + M).
    """

    lower_offset: dict
    local_upper: dict
    forward_log_offset: dict
    finite: bool


def audit_assumptions(
    post: Posterior,
    eps_list: Sequence[float],
    n_samples: int,
    rng: np.random.Generator,
    forward: Callable[[SpectralField], np.ndarray] | None = None,
    radii: Sequence[float] | None = None,
) -> AssumptionAudit:
    from .measures import sample_gaussian
    from .spectral import sobolev_norm

    draws = [sample_gaussian(post.prior, rng) for _ in range(n_samples)]
    norms = np.array([sobolev_norm(u) for u in draws])
    phis = np.array([post.potential(u) for u in draws])
    finite = bool(np.all(np.isfinite(phis)))

    lower = {eps: float(np.min(phis + eps * norms**2)) for eps in eps_list}
    if radii is None:
        radii = [float(np.quantile(norms, q)) for q in (0.5, 0.9, 1.0)]
    local_upper = {}
    for r in radii:
        inside = phis[norms <= r]
        local_upper[float(r)] = float(np.max(inside)) if len(inside) else float("-inf")
    forward_off = {}
    if forward is not None:
        gnorms = np.array([np.linalg.norm(forward(u)) for u in draws])
        finite = finite and bool(np.all(np.isfinite(gnorms)))
        loggs = np.log(np.maximum(gnorms, 1e-300))
        forward_off = {eps: float(np.max(loggs - eps * norms**2)) for eps in eps_list}
    return AssumptionAudit(lower, local_upper, forward_off, finite)


# ---------------------------------------------------------------------------
# convergence study
# ---------------------------------------------------------------------------


@dataclass
class ChainSettings:
    steps: int = 10_000
    burn_in_fraction: float = 0.2
    beta_pcn: float = 0.2

    @property
    def burn_in(self) -> int:
        return int(self.steps * self.burn_in_fraction)


@dataclass
class MetricPlan:
    """How a convergence study measures distances between levels.

    ``gaussian-exact`` treats the family as exact Gaussian measures;
    ``histogram-mcmc`` samples each level with common-seed pCN chains and
    compares binned marginals of ``functional``.
    """

    kind: str = "gaussian-exact"
    functional: Callable[[SpectralField], float] | None = None
    settings: ChainSettings = field(default_factory=ChainSettings)
    seed: int = 0
    bins: int = 50

    def __post_init__(self):
        if self.kind not in ("gaussian-exact", "histogram-mcmc"):
            raise ValueError(f"unknown metric plan kind {self.kind!r}")
        if self.kind == "histogram-mcmc" and self.functional is None:
            raise ValueError("histogram-mcmc plans need a recorded functional")


@dataclass
class StudyRow:
    n: int
    distance: float
    mean_gap: float
    cov_gap: float
    bound_rhs: float
    bound_ok: bool
    acceptance: float | None = None
    ess: float | None = None


def _gaussian_l2_moments(m: GaussianMeasure) -> tuple[float, float]:
    """(E ||u||^2, mean vector norm squared) for a diagonal Gaussian."""
    mult = 2.0 if m.geometry.is_torus else 1.0
    mean2 = mult * np.sum(np.abs(m.mean.coeffs) ** 2)
    return float(mult * np.sum(m.variance_spectrum) + mean2), float(mean2)


def gaussian_convergence_study(
    make_measure: Callable[[int], GaussianMeasure],
    n_list: Sequence[int],
    reference_n: int,
) -> list[StudyRow]:
    """Exact-Gaussian study: Hellinger distance of each truncation level to
    the reference, plus the moment-gap bound checked with exact moments."""
    ref = make_measure(reference_n)
    rows = []
    for n in n_list:
        mn = make_measure(n)
        d = hellinger_gaussian(mn, ref)
        mean_gap = float(np.sqrt((2.0 if mn.geometry.is_torus else 1.0)
                                 * np.sum(np.abs(mn.mean.coeffs - ref.mean.coeffs) ** 2)))
        second_a, _ = _gaussian_l2_moments(mn)
        second_b, _ = _gaussian_l2_moments(ref)
        rhs = 2.0 * np.sqrt(second_a + second_b) * d
        cov_gap = float(np.max(np.abs(mn.variance_spectrum - ref.variance_spectrum)))
        rows.append(StudyRow(n, d, mean_gap, cov_gap, rhs, bool(mean_gap <= rhs + 1e-300)))
    return rows


def marginal_comparison(samples_a, samples_b, bins=50):
    """Compare two marginal sample populations on shared bins.

    Returns (hellinger, mean_gap, variance_gap, moment_bound_rhs), all
    computed from the binned measures so the expectation-gap bound is a
    finite-measure identity rather than an estimate."""
    a = np.asarray(samples_a, float)
    b = np.asarray(samples_b, float)
    lo, hi = min(a.min(), b.min()), max(a.max(), b.max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    ha, _ = np.histogram(a, bins=edges)
    hb, _ = np.histogram(b, bins=edges)
    pa, pb = ha / ha.sum(), hb / hb.sum()
    d = np.sqrt(0.5 * np.sum((np.sqrt(pa) - np.sqrt(pb)) ** 2))
    gap = abs(pa @ centers - pb @ centers)
    second = pa @ centers**2 + pb @ centers**2
    rhs = 2.0 * np.sqrt(second) * d
    cov_gap = abs(pa @ centers**2 - (pa @ centers) ** 2 - (pb @ centers**2 - (pb @ centers) ** 2))
    return float(d), float(gap), float(cov_gap), float(rhs)


def mcmc_convergence_study(
    make_posterior: Callable[[int], Posterior],
    n_list: Sequence[int],
    reference_n: int,
    functional: Callable[[SpectralField], float],
    settings: ChainSettings,
    seed: int,
    bins: int = 50,
    functional_name: str = "marginal",
) -> tuple[list[StudyRow], dict]:
    """Sampled study: common-seed pCN chains at each level, histogram
    Hellinger distance of the recorded marginal to the reference chain.

    Returns the rows plus the kept marginal samples per level (reference
    included) for downstream plotting.
    """
    levels = list(n_list) + [reference_n]
    posts = {n: make_posterior(n) for n in levels}
    proposal_dim = max(p.prior.real_dim for p in posts.values())
    records = {}
    for n in levels:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
        records[n] = run_chain(
            posts[n],
            settings.steps,
            settings.burn_in,
            settings.beta_pcn,
            {functional_name: functional},
            rng,
            proposal_dim=proposal_dim,
        )
    ref_samples = records[reference_n].kept(functional_name)
    rows = []
    for n in n_list:
        samples = records[n].kept(functional_name)
        d, gap, cov_gap, rhs = marginal_comparison(samples, ref_samples, bins)
        rows.append(
            StudyRow(
                n,
                d,
                gap,
                cov_gap,
                rhs,
                bool(gap <= rhs + 1e-12),
                records[n].acceptance_rate,
                records[n].ess(functional_name),
            )
        )
    samples_by_level = {n: records[n].kept(functional_name) for n in levels}
    return rows, samples_by_level


def convergence_study(
    family: Callable[[int], GaussianMeasure | Posterior],
    n_list: Sequence[int],
    reference_n: int,
    plan: MetricPlan,
) -> list[StudyRow]:
    """Distance of each truncation level to the reference, per the plan.

    ``family`` maps a level to a GaussianMeasure (exact plan) or a Posterior
    (sampled plan).  Levels must ascend and stay below the reference.
    """
    if list(n_list) != sorted(n_list) or (n_list and max(n_list) >= reference_n):
        raise ValueError("levels must ascend and lie below the reference")
    if plan.kind == "gaussian-exact":
        return gaussian_convergence_study(family, n_list, reference_n)
    rows, _ = mcmc_convergence_study(
        family,
        n_list,
        reference_n,
        plan.functional,
        plan.settings,
        plan.seed,
        bins=plan.bins,
    )
    return rows

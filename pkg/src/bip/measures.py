"""Gaussian measures on coefficient space, probability metrics, and the
moment-bound checks used by the convergence studies.

A Gaussian measure stores one variance per stored mode.  On the torus a mode
is a conjugate pair; its complex amplitude a_k splits into two real
coordinates with variance sigma_k^2 / 2 each, so that E|a_k|^2 = sigma_k^2.
All sampling and metric computations happen on that real coordinate vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import Geometry, IndexSetMismatchError, SpectralField

_SQRT2 = np.sqrt(2.0)


@dataclass
class GaussianMeasure:
    """Mean field plus diagonal covariance spectrum on a fixed geometry."""

    geometry: Geometry
    mean: SpectralField
    variance_spectrum: np.ndarray
    beta: float | None = None
    alpha: float | None = None

    def __post_init__(self):
        self.variance_spectrum = np.asarray(self.variance_spectrum, dtype=float)
        if self.variance_spectrum.shape != (self.geometry.n_modes,):
            raise ValueError("variance spectrum length must match the index set")
        if not np.all(self.variance_spectrum > 0.0):
            raise ValueError("all per-mode variances must be positive")
        if not np.isfinite(self.trace):
            raise ValueError("covariance trace must be finite")
        if self.mean.geometry != self.geometry:
            raise IndexSetMismatchError("mean field lives on a different geometry")

    @classmethod
    def power_law(
        cls,
        geometry: Geometry,
        beta: float,
        alpha: float,
        mean: SpectralField | None = None,
    ) -> "GaussianMeasure":
        """Prior N(m0, beta * A^{-alpha}) on the given geometry."""
        if beta <= 0:
            raise ValueError("beta must be positive")
        if mean is None:
            mean = SpectralField.zeros(geometry)
        var = beta * geometry.eigenvalues ** (-alpha)
        return cls(geometry, mean, var, beta=beta, alpha=alpha)

    @property
    def trace(self) -> float:
        mult = 2.0 if self.geometry.is_torus else 1.0
        return float(mult * np.sum(self.variance_spectrum))

    # -- real coordinate view ------------------------------------------------

    @property
    def real_dim(self) -> int:
        return 2 * self.geometry.n_modes if self.geometry.is_torus else self.geometry.n_modes

    def real_stds(self) -> np.ndarray:
        sig = np.sqrt(self.variance_spectrum)
        if not self.geometry.is_torus:
            return sig
        return np.repeat(sig / _SQRT2, 2)

    def real_means(self) -> np.ndarray:
        return field_to_real(self.mean)

    def field_from_real(self, x: np.ndarray) -> SpectralField:
        return real_to_field(self.geometry, x)


def field_to_real(f: SpectralField) -> np.ndarray:
    if not f.geometry.is_torus:
        return f.coeffs.copy()
    out = np.empty(2 * f.geometry.n_modes)
    out[0::2] = f.coeffs.real
    out[1::2] = f.coeffs.imag
    return out


def real_to_field(g: Geometry, x: np.ndarray) -> SpectralField:
    x = np.asarray(x, dtype=float)
    if not g.is_torus:
        return SpectralField(g, x.copy())
    return SpectralField(g, x[0::2] + 1j * x[1::2])


def sample_gaussian(m: GaussianMeasure, rng: np.random.Generator) -> SpectralField:
    """One draw via the coefficient-space Karhunen-Loeve expansion;
    deterministic given the generator state."""
    xi = rng.standard_normal(m.real_dim)
    return m.field_from_real(m.real_means() + m.real_stds() * xi)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def _log_affinity_1d(m1, s1, m2, s2):
    # log int sqrt(p q) for scalar Gaussians, stable when s1 ~ s2 and the
    # mean gap is tiny
    v1, v2 = s1 * s1, s2 * s2
    tot = v1 + v2
    ratio_term = 0.5 * np.log1p(-((s1 - s2) ** 2) / tot)
    return ratio_term - (m1 - m2) ** 2 / (4.0 * tot)


def hellinger_gaussian(m1: GaussianMeasure, m2: GaussianMeasure) -> float:
    """Exact Hellinger distance between two diagonal Gaussians on the same
    index set.  Computed in log space so distances down to ~1e-150 survive."""
    if m1.geometry != m2.geometry:
        raise IndexSetMismatchError("measures live on different index sets")
    la = _log_affinity_1d(m1.real_means(), m1.real_stds(), m2.real_means(), m2.real_stds())
    d2 = -np.expm1(np.sum(la))
    return float(np.sqrt(min(max(d2, 0.0), 1.0)))


@dataclass
class DiscreteMeasure:
    """Finite probability vector (nonnegative, sums to one within 1e-12)."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.ndim != 1 or len(self.probs) == 0:
            raise ValueError("probability vector must be 1-D and nonempty")
        if np.any(self.probs < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1 within 1e-12")

    @classmethod
    def from_weights(cls, w) -> "DiscreteMeasure":
        w = np.asarray(w, dtype=float)
        total = w.sum()
        if total <= 0:
            raise ValueError("weights must have positive total mass")
        return cls(w / total)


def _check_lengths(p: DiscreteMeasure, q: DiscreteMeasure):
    if len(p.probs) != len(q.probs):
        raise ValueError("measures must have equal support size")


def hellinger_discrete(p: DiscreteMeasure, q: DiscreteMeasure) -> float:
    _check_lengths(p, q)
    d2 = 0.5 * np.sum((np.sqrt(p.probs) - np.sqrt(q.probs)) ** 2)
    return float(np.sqrt(min(d2, 1.0)))


def tv_discrete(p: DiscreteMeasure, q: DiscreteMeasure) -> float:
    _check_lengths(p, q)
    return float(0.5 * np.sum(np.abs(p.probs - q.probs)))


def hellinger_from_histograms(h1, h2, edges1=None, edges2=None) -> float:
    """Hellinger distance between two binned sample populations.

    Counts must come from identical bin edges (validated when edges are
    passed); empty histograms are rejected.
    """
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    if edges1 is not None and edges2 is not None and not np.array_equal(edges1, edges2):
        raise ValueError("histograms use different bin edges")
    if h1.sum() <= 0 or h2.sum() <= 0:
        raise ValueError("empty histogram")
    return hellinger_discrete(DiscreteMeasure.from_weights(h1), DiscreteMeasure.from_weights(h2))


def marginal_histogram_distance(samples_a, samples_b, bins: int = 50) -> float:
    """Histogram Hellinger estimator with ``bins`` equal-width bins spanning
    the pooled sample range."""
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    ha, _ = np.histogram(a, bins=edges)
    hb, _ = np.histogram(b, bins=edges)
    return hellinger_from_histograms(ha, hb)


@dataclass
class MetricRelationReport:
    d_tv: float
    d_hell: float
    passed: bool


def check_metric_relation(p: DiscreteMeasure, q: DiscreteMeasure) -> MetricRelationReport:
    """Check (1/sqrt 2) d_TV <= d_Hell <= sqrt(d_TV); slack 1e-12 for
    roundoff at the degenerate endpoints."""
    dtv = tv_discrete(p, q)
    dh = hellinger_discrete(p, q)
    ok = (dtv / np.sqrt(2.0) <= dh + 1e-12) and (dh <= np.sqrt(dtv) + 1e-12)
    return MetricRelationReport(dtv, dh, bool(ok))


@dataclass
class MomentBoundReport:
    mean_gap: float
    mean_bound: float
    second_gap: float
    second_bound: float
    passed: bool


def moment_difference_bound(
    p: DiscreteMeasure, q: DiscreteMeasure, f: np.ndarray
) -> MomentBoundReport:
    """Check the expectation-gap bounds controlled by the Hellinger distance.

    ``f`` has one vector value per support point (shape (n, d) or (n,)).
    The first-moment gap uses second moments; the f (x) f operator gap uses
    fourth moments and the spectral norm.
    """
    _check_lengths(p, q)
    f = np.atleast_2d(np.asarray(f, dtype=float).T).T  # (n, d)
    if f.shape[0] != len(p.probs):
        raise ValueError("one f value per support point required")
    dh = hellinger_discrete(p, q)
    norms2 = np.sum(f * f, axis=1)

    mean_gap = float(np.linalg.norm(p.probs @ f - q.probs @ f))
    mean_bound = 2.0 * np.sqrt(p.probs @ norms2 + q.probs @ norms2) * dh

    outer = f[:, :, None] * f[:, None, :]
    op_p = np.tensordot(p.probs, outer, axes=1)
    op_q = np.tensordot(q.probs, outer, axes=1)
    second_gap = float(np.linalg.norm(op_p - op_q, ord=2))
    second_bound = 2.0 * np.sqrt(p.probs @ norms2**2 + q.probs @ norms2**2) * dh

    ok = mean_gap <= mean_bound + 1e-12 and second_gap <= second_bound + 1e-12
    return MomentBoundReport(mean_gap, mean_bound, second_gap, second_bound, bool(ok))


@dataclass
class FerniqueReport:
    a: float
    mean: float
    finite: bool
    integrable: bool
    stable: bool
    flagged: bool = field(init=False)

    def __post_init__(self):
        self.flagged = not (self.finite and self.integrable and self.stable)


def fernique_check(
    m: GaussianMeasure, a: float, n: int, rng: np.random.Generator
) -> FerniqueReport:
    """Empirical mean of exp(a ||x||^2) over n draws.

    Smoke test only: small a should give a stable average.  Failure is
    flagged on overflow, on a split-half mean discrepancy above 50%, or when
    a reaches 1 / (2 max_i var_i), the exact integrability boundary for a
    diagonal Gaussian.
    """
    if a < 0:
        raise ValueError("a must be nonnegative")
    means = m.real_means()
    stds = m.real_stds()
    integrable = a < 1.0 / (2.0 * float(np.max(stds)) ** 2)
    with np.errstate(over="ignore"):
        xi = rng.standard_normal((n, m.real_dim))
        sq = np.sum((means + stds * xi) ** 2, axis=1)
        terms = np.exp(a * sq)
        mean = float(np.mean(terms))
    finite = bool(np.isfinite(mean))
    if finite and a > 0:
        half = n // 2
        m1, m2 = np.mean(terms[:half]), np.mean(terms[half:])
        stable = bool(abs(m1 - m2) <= 0.5 * (m1 + m2) / 2.0 + 1e-30)
    else:
        stable = finite
    return FerniqueReport(a, mean, finite, integrable, stable)

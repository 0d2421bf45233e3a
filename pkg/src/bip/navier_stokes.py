"""Eulerian data assimilation forward machinery: pseudo-spectral Galerkin
solver for 2-D Navier-Stokes on the torus and pointwise velocity
observations.

The quadratic term is evaluated in rotational form on a dealiased grid, so
the computed P^N B(v, v) is the exact Galerkin nonlinearity for the stored
modes.  Time stepping is integrating-factor Euler: the stiff linear part is
handled by the exact mode-wise decay factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import (
    Geometry,
    SpectralField,
    point_eval,
    restrict,
    vector_coefficients,
)

BLOWUP_NORM = 1e6


class DivergenceError(RuntimeError):
    """Solver state exceeded the blow-up threshold."""


@dataclass
class NSProblem:
    """Navier-Stokes flow observed pointwise at time ``t_obs``."""

    geometry: Geometry
    viscosity: float
    cutoff: int
    dt: float
    t_obs: float
    obs_points: np.ndarray
    forcing: SpectralField | None = None

    def __post_init__(self):
        if not self.geometry.is_torus:
            raise ValueError("Navier-Stokes problem lives on the torus")
        if self.viscosity <= 0:
            raise ValueError("viscosity must be positive")
        if not 1 <= self.cutoff <= self.geometry.resolution:
            raise ValueError("cutoff must lie in [1, resolution]")
        if self.dt <= 0 or self.t_obs <= 0:
            raise ValueError("dt and t_obs must be positive")
        self.obs_points = np.mod(np.atleast_2d(np.asarray(self.obs_points, float)), 1.0)
        if self.obs_points.shape[1] != 2:
            raise ValueError("observation points must be (K, 2)")
        if self.forcing is not None and self.forcing.geometry != self.geometry:
            raise ValueError("forcing must share the problem geometry")

    @property
    def n_points(self) -> int:
        return len(self.obs_points)


@dataclass
class EulerianData:
    """Velocity observations, length 2K with interleaved components."""

    y: np.ndarray
    noise_var: float

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.noise_var <= 0:
            raise ValueError("noise variance must be positive")


def dealias_grid_size(resolution: int) -> int:
    """Smallest multiple of four that keeps quadratic products alias-free
    for modes up to ``resolution`` (the 2/3-rule headroom)."""
    return int(4 * np.ceil((3 * resolution + 2) / 4))


class NonlinearWorkspace:
    """Per-solve buffers for the pseudo-spectral quadratic term.

    Rotational form: with amplitudes a_k along perp(k)/|k| the vorticity
    spectrum is simply 2 pi i |k| a_k, and the two product components pack
    into one complex grid, n1 + i n2 = i omega (u1 + i u2).  Three complex
    transforms per evaluation.
    """

    def __init__(self, g: Geometry, M: int):
        if M < 3 * g.resolution + 1:
            raise ValueError("grid too small to dealias quadratic products")
        self.geometry = g
        self.M = M
        k = g.modes
        self.pos = np.ravel_multi_index((np.mod(k[:, 0], M), np.mod(k[:, 1], M)), (M, M))
        self.neg = np.ravel_multi_index((np.mod(-k[:, 0], M), np.mod(-k[:, 1], M)), (M, M))
        self.omega_mult = 2j * np.pi * np.linalg.norm(k.astype(float), axis=1)
        self.e = g.perp_units
        self.f_vel = np.zeros((M, M), dtype=np.complex128)
        self.f_om = np.zeros((M, M), dtype=np.complex128)

    def apply(self, amp: np.ndarray) -> np.ndarray:
        """Amplitudes of P^N P((v . grad) v) for amplitude vector ``amp``."""
        M2 = self.M**2
        c1 = amp * self.e[:, 0]
        c2 = amp * self.e[:, 1]
        fv = self.f_vel
        fv.flat[self.pos] = (c1 + 1j * c2) * M2
        fv.flat[self.neg] = np.conj(c1 - 1j * c2) * M2
        w = np.fft.ifft2(fv)  # u1 + i u2 on the grid
        om_hat = self.omega_mult * amp
        fo = self.f_om
        fo.flat[self.pos] = om_hat * M2
        fo.flat[self.neg] = np.conj(om_hat) * M2
        om = np.fft.ifft2(fo).real
        prod = np.fft.fft2(1j * om * w) / M2  # spectra of (n1, n2) interleaved
        npos = prod.flat[self.pos]
        nneg = np.conj(prod.flat[self.neg])
        n1_hat = 0.5 * (npos + nneg)
        n2_hat = -0.5j * (npos - nneg)
        return n1_hat * self.e[:, 0] + n2_hat * self.e[:, 1]


def nonlinear_term(v: SpectralField, workspace: NonlinearWorkspace | None = None) -> SpectralField:
    """Galerkin nonlinearity P^N P((v . grad) v) with 2/3-rule dealiasing.

    The workspace buffers are not shareable across concurrent callers; pass
    one per solve (or leave None for a throwaway)."""
    g = v.geometry
    if workspace is None:
        workspace = NonlinearWorkspace(g, dealias_grid_size(g.resolution))
    elif workspace.geometry != g:
        raise ValueError("workspace geometry mismatch")
    return SpectralField(g, workspace.apply(v.coeffs))


def ns_solve_galerkin(p: NSProblem, u: SpectralField) -> SpectralField:
    """Integrate the Galerkin system to ``t_obs`` from P^N u.

    Scheme: v <- e^{-nu lam h} (v + h (psi - B(v, v))) with h chosen so the
    stepping lands exactly on the observation time.
    """
    if u.geometry != p.geometry:
        raise ValueError("initial field must share the problem geometry")
    v = restrict(u, p.cutoff)
    g = v.geometry
    psi = (
        restrict(p.forcing, p.cutoff).coeffs
        if p.forcing is not None
        else np.zeros(g.n_modes, complex)
    )
    n_steps = max(1, int(np.ceil(p.t_obs / p.dt - 1e-12)))
    h = p.t_obs / n_steps
    decay = np.exp(-p.viscosity * g.eigenvalues * h)
    ws = NonlinearWorkspace(g, dealias_grid_size(g.resolution))
    amp = v.coeffs
    for i in range(n_steps):
        b = ws.apply(amp)
        amp = decay * (amp + h * (psi - b))
        if i % 16 == 0 or i == n_steps - 1:
            norm2 = 2.0 * float(np.sum(np.abs(amp) ** 2))
            if not np.isfinite(norm2) or norm2 > BLOWUP_NORM**2:
                raise DivergenceError(
                    f"solver norm {np.sqrt(max(norm2, 0.0)):.3e} exceeded "
                    f"{BLOWUP_NORM:.0e} at step {i + 1}/{n_steps}"
                )
    return SpectralField(g, amp)


def eulerian_forward(p: NSProblem, u: SpectralField) -> np.ndarray:
    """Observation map: velocity at the observation points and time, by
    exact spectral summation; length 2K, components interleaved."""
    v = ns_solve_galerkin(p, u)
    return point_eval(v, p.obs_points).ravel()


def eulerian_potential(p: NSProblem, u: SpectralField, data: EulerianData) -> float:
    """0.5 |y - G(u)|^2 / noise_var."""
    g = eulerian_forward(p, u)
    if g.shape != data.y.shape:
        raise ValueError(f"data length {data.y.shape} vs forward {g.shape}")
    r = data.y - g
    return float(0.5 * np.dot(r, r) / data.noise_var)


def synth_eulerian_data(
    p: NSProblem, u_true: SpectralField, noise_std: float, rng: np.random.Generator
) -> EulerianData:
    clean = eulerian_forward(p, u_true)
    return EulerianData(clean + noise_std * rng.standard_normal(clean.shape), noise_std**2)


def taylor_green(geometry: Geometry, amplitude: float = 1.0) -> SpectralField:
    """The cellular field (sin 2 pi x cos 2 pi y, -cos 2 pi x sin 2 pi y):
    its self-advection is a pure gradient, so the Galerkin nonlinearity
    vanishes and the flow decays by exp(-8 pi^2 nu t) exactly."""
    f = SpectralField.zeros(geometry)
    c = 1j * np.sqrt(2.0) / 4.0 * amplitude
    f.coeffs[geometry.index_of((1, 1))] = c
    f.coeffs[geometry.index_of((1, -1))] = -c
    return f


def divergence_residual(v: SpectralField) -> float:
    """max_k |k . vhat_k| / |k|; structurally zero for amplitude storage."""
    k = v.geometry.modes.astype(float)
    vhat = vector_coefficients(v)
    return float(np.max(np.abs(np.sum(k * vhat, axis=1)) / np.linalg.norm(k, axis=1)))

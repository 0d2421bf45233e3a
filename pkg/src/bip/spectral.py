"""Eigenbasis bookkeeping for the Dirichlet Laplacian on the unit box and the
Stokes operator on the unit torus.

Fields are stored as coefficient vectors against a fixed, deterministically
enumerated eigenbasis.  Torus fields are divergence-free by construction: each
wavevector k in a half lattice carries one complex amplitude along the unit
vector perp(k)/|k|, and the conjugate mode -k is implied.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

DIRICHLET = "dirichlet"
TORUS = "torus"


class InvalidWavevectorError(ValueError):
    """Wavevector outside the geometry's index set."""


class AliasingError(ValueError):
    """Grid too small to represent the requested modes."""


class IndexSetMismatchError(ValueError):
    """Operands live on different geometries."""


@dataclass(frozen=True)
class Geometry:
    """Domain plus truncation level.

    kind: ``dirichlet`` (unit box, d in {1, 2}) or ``torus`` (unit 2-torus,
    divergence-free vector fields).  ``resolution`` is the largest wavenumber
    per axis kept in the index set.
    """

    kind: str
    dim: int
    resolution: int

    def __post_init__(self):
        if self.kind not in (DIRICHLET, TORUS):
            raise ValueError(f"unknown geometry kind {self.kind!r}")
        if self.kind == DIRICHLET and self.dim not in (1, 2):
            raise ValueError("Dirichlet box supports dimension 1 or 2")
        if self.kind == TORUS and self.dim != 2:
            raise ValueError("torus geometry is two-dimensional")
        if self.resolution < 1:
            raise ValueError("resolution must be >= 1")

    @classmethod
    def dirichlet_box(cls, dim: int, resolution: int) -> "Geometry":
        return cls(DIRICHLET, dim, resolution)

    @classmethod
    def torus2d(cls, resolution: int) -> "Geometry":
        return cls(TORUS, 2, resolution)

    @property
    def is_torus(self) -> bool:
        return self.kind == TORUS

    @cached_property
    def modes(self) -> np.ndarray:
        """Wavevectors, shape (n_modes, dim), in enumeration order.

        Enumeration is lexicographic by (|k|_inf, k) so that lower-resolution
        index sets are prefixes of higher-resolution ones.
        """
        r = self.resolution
        if self.kind == DIRICHLET:
            if self.dim == 1:
                ks = [(k,) for k in range(1, r + 1)]
            else:
                ks = [(k1, k2) for k1 in range(1, r + 1) for k2 in range(1, r + 1)]
        else:
            # half lattice of Z^2 \ {0}: k1 > 0, or k1 == 0 and k2 > 0
            ks = [
                (k1, k2)
                for k1 in range(0, r + 1)
                for k2 in range(-r, r + 1)
                if (k1 > 0 or k2 > 0)
            ]
        ks.sort(key=lambda k: (max(abs(c) for c in k),) + k)
        return np.array(ks, dtype=np.int64)

    @cached_property
    def sup_norms(self) -> np.ndarray:
        return np.max(np.abs(self.modes), axis=1)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Operator eigenvalues per mode: pi^2 |k|^2 (Dirichlet box),
        4 pi^2 |k|^2 (torus Stokes)."""
        k2 = np.sum(self.modes.astype(float) ** 2, axis=1)
        if self.kind == DIRICHLET:
            return np.pi**2 * k2
        return 4.0 * np.pi**2 * k2

    @cached_property
    def perp_units(self) -> np.ndarray:
        """Unit vectors perp(k)/|k| spanning the divergence-free direction
        of each torus mode; shape (n_modes, 2)."""
        if not self.is_torus:
            raise ValueError("perp_units is defined for torus geometries only")
        k = self.modes.astype(float)
        perp = np.stack([-k[:, 1], k[:, 0]], axis=1)
        return perp / np.linalg.norm(perp, axis=1, keepdims=True)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @cached_property
    def _mode_index(self) -> dict:
        return {tuple(k): i for i, k in enumerate(self.modes.tolist())}

    def index_of(self, k) -> int:
        key = (int(k),) if np.isscalar(k) else tuple(int(c) for c in k)
        if self.is_torus and key not in self._mode_index:
            # accept the conjugate representative for lookups
            neg = tuple(-c for c in key)
            if neg in self._mode_index:
                raise InvalidWavevectorError(
                    f"wavevector {key} is stored via its conjugate {neg}"
                )
        try:
            return self._mode_index[key]
        except KeyError:
            raise InvalidWavevectorError(f"wavevector {key} not in index set") from None

    def coeff_dtype(self):
        return np.complex128 if self.is_torus else np.float64

    def restricted(self, resolution: int) -> "Geometry":
        return Geometry(self.kind, self.dim, resolution)


def eigenvalue(k, g: Geometry) -> float:
    """Eigenvalue of the operator at wavevector k (k=0 is never indexed)."""
    return float(g.eigenvalues[g.index_of(k)])


@dataclass
class SpectralField:
    """A function (scalar on the box, divergence-free vector field on the
    torus) represented by its eigenbasis coefficient vector."""

    geometry: Geometry
    coeffs: np.ndarray

    def __post_init__(self):
        want = self.geometry.coeff_dtype()
        self.coeffs = np.ascontiguousarray(self.coeffs, dtype=want)
        if self.coeffs.shape != (self.geometry.n_modes,):
            raise ValueError(
                f"expected {self.geometry.n_modes} coefficients, "
                f"got shape {self.coeffs.shape}"
            )

    @classmethod
    def zeros(cls, geometry: Geometry) -> "SpectralField":
        return cls(geometry, np.zeros(geometry.n_modes, geometry.coeff_dtype()))

    @classmethod
    def unit_mode(cls, geometry: Geometry, k, value=1.0) -> "SpectralField":
        f = cls.zeros(geometry)
        f.coeffs[geometry.index_of(k)] = value
        return f

    def copy(self) -> "SpectralField":
        return SpectralField(self.geometry, self.coeffs.copy())

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_geometry(self, other)
        return SpectralField(self.geometry, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_geometry(self, other)
        return SpectralField(self.geometry, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.geometry, self.coeffs * scalar)

    __rmul__ = __mul__


def _check_same_geometry(a, b):
    ga = a.geometry if isinstance(a, SpectralField) else a
    gb = b.geometry if isinstance(b, SpectralField) else b
    if ga != gb:
        raise IndexSetMismatchError(f"geometry mismatch: {ga} vs {gb}")


def mode_multiplicity(g: Geometry) -> float:
    """Weight of one stored mode in norms: torus modes stand for a
    conjugate pair."""
    return 2.0 if g.is_torus else 1.0


def apply_fractional_power(f: SpectralField, a: float) -> SpectralField:
    """Multiply each coefficient by lambda_k^a."""
    if a == 0.0:
        return f.copy()
    return SpectralField(f.geometry, f.coeffs * f.geometry.eigenvalues**a)


def sobolev_norm(f: SpectralField, s: float = 0.0) -> float:
    """(sum_k lambda_k^s |<u, phi_k>|^2)^(1/2); s=0 is the L2 norm."""
    w = f.geometry.eigenvalues**s if s != 0.0 else 1.0
    total = np.sum(w * np.abs(f.coeffs) ** 2) * mode_multiplicity(f.geometry)
    return float(np.sqrt(total))


def project(f: SpectralField, cutoff: int) -> SpectralField:
    """Zero all coefficients with |k|_inf > cutoff (orthogonal projection)."""
    if cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    out = f.coeffs.copy()
    out[f.geometry.sup_norms > cutoff] = 0.0
    return SpectralField(f.geometry, out)


def n_modes_at(g: Geometry, cutoff: int) -> int:
    return int(np.sum(g.sup_norms <= cutoff))


def restrict(f: SpectralField, resolution: int) -> SpectralField:
    """Re-home a field on the resolution-``resolution`` index set, dropping
    higher modes.  Relies on the prefix property of the enumeration."""
    if resolution > f.geometry.resolution:
        raise ValueError("restrict target must not exceed current resolution")
    g = f.geometry.restricted(resolution)
    return SpectralField(g, f.coeffs[: g.n_modes].copy())


def extend(f: SpectralField, resolution: int) -> SpectralField:
    """Embed a field into a finer index set (new modes zero)."""
    if resolution < f.geometry.resolution:
        raise ValueError("extend target must not be below current resolution")
    g = f.geometry.restricted(resolution)
    out = np.zeros(g.n_modes, g.coeff_dtype())
    out[: f.geometry.n_modes] = f.coeffs
    return SpectralField(g, out)


def vector_coefficients(f: SpectralField) -> np.ndarray:
    """Complex 2-vector Fourier coefficients of the stored half-lattice
    modes, shape (n_modes, 2)."""
    if not f.geometry.is_torus:
        raise ValueError("vector coefficients are defined on the torus")
    return f.coeffs[:, None] * f.geometry.perp_units


def leray_project(g: Geometry, vhat: np.ndarray, atol: float = 0.0) -> SpectralField:
    """Project per-mode 2-vector coefficients onto divergence-free fields.

    Per mode k the projector is I - k k^T / |k|^2; in 2-D its range is the
    span of perp(k)/|k|, so the output is the amplitude along that direction.
    """
    if not g.is_torus:
        raise ValueError("Leray projection is defined on the torus")
    vhat = np.asarray(vhat, dtype=np.complex128)
    if vhat.shape != (g.n_modes, 2):
        raise ValueError(f"expected shape ({g.n_modes}, 2), got {vhat.shape}")
    amp = np.sum(vhat * g.perp_units, axis=1)
    return SpectralField(g, amp)


# ---------------------------------------------------------------------------
# grid transforms
# ---------------------------------------------------------------------------


@dataclass
class GridField:
    """Collocation values of a field: (M,) or (M, M) for the box,
    (M, M, 2) velocity samples for the torus, at x_i = i/M (torus) or
    x_i = (i+1)/(M+1) (box interior)."""

    geometry: Geometry
    grid_size: int
    values: np.ndarray


def _check_grid_size(g: Geometry, M: int):
    if M < 2 * g.resolution + 2:
        raise AliasingError(
            f"grid size {M} aliases modes up to {g.resolution}; "
            f"need at least {2 * g.resolution + 2}"
        )


@lru_cache(maxsize=None)
def _dirichlet_sine_matrix(resolution: int, M: int) -> np.ndarray:
    # rows: grid points (i+1)/(M+1); columns: sqrt(2) sin(pi k x)
    x = (np.arange(M) + 1.0) / (M + 1.0)
    k = np.arange(1, resolution + 1)
    return np.sqrt(2.0) * np.sin(np.pi * np.outer(x, k))


class TorusTransform:
    """Packs half-lattice amplitudes into numpy rfft2 layout and back.

    Modes with k2 > 0 rely on irfft2's implied Hermitian symmetry; modes on
    the k2 = 0 line get their conjugate partner written explicitly.
    """

    def __init__(self, g: Geometry, M: int):
        _check_grid_size(g, M)
        self.geometry = g
        self.M = M
        k = g.modes
        self.rows = np.mod(k[:, 0], M)
        self.cols = k[:, 1].copy()
        line = k[:, 1] == 0  # then k1 > 0 by the half-lattice convention
        self.line_mask = line
        self.mirror_rows = np.mod(-k[line, 0], M)
        neg = self.cols < 0
        # k2 < 0 modes map to the conjugate entry (-k1 mod M, -k2)
        self.rows[neg] = np.mod(-k[neg, 0], M)
        self.cols[neg] = -k[neg, 1]
        self.conj_mask = neg
        # wavenumber grids aligned with the rfft2 layout, for derivatives
        kk1 = np.fft.fftfreq(M, d=1.0 / M)
        kk2 = np.arange(M // 2 + 1)
        self.k1_grid = kk1[:, None] * np.ones(M // 2 + 1)[None, :]
        self.k2_grid = np.ones(M)[:, None] * kk2[None, :]

    def pack(self, comp: np.ndarray) -> np.ndarray:
        c = np.where(self.conj_mask, np.conj(comp), comp) * self.M**2
        R = np.zeros((self.M, self.M // 2 + 1), dtype=np.complex128)
        R[self.rows, self.cols] = c
        R[self.mirror_rows, 0] = np.conj(c[self.line_mask])
        return R

    def synth(self, comp: np.ndarray) -> np.ndarray:
        return np.fft.irfft2(self.pack(comp), s=(self.M, self.M))

    def synth_packed(self, R: np.ndarray) -> np.ndarray:
        return np.fft.irfft2(R, s=(self.M, self.M))

    def analyze(self, values: np.ndarray) -> np.ndarray:
        A = np.fft.rfft2(values) / self.M**2
        c = A[self.rows, self.cols]
        return np.where(self.conj_mask, np.conj(c), c)


@lru_cache(maxsize=None)
def torus_transform(g: Geometry, M: int) -> TorusTransform:
    return TorusTransform(g, M)


def to_grid(f: SpectralField, M: int) -> GridField:
    """Exact synthesis of a band-limited field on an M (or M x M) grid."""
    g = f.geometry
    _check_grid_size(g, M)
    if g.kind == DIRICHLET:
        if g.dim == 1:
            S = _dirichlet_sine_matrix(g.resolution, M)
            return GridField(g, M, S @ f.coeffs)
        S = _dirichlet_sine_matrix(g.resolution, M)
        C = f.coeffs.reshape(g.resolution, g.resolution)
        return GridField(g, M, S @ C @ S.T)
    tt = torus_transform(g, M)
    vhat = vector_coefficients(f)
    vals = np.stack([tt.synth(vhat[:, 0]), tt.synth(vhat[:, 1])], axis=-1)
    return GridField(g, M, vals)


def from_grid(grid: GridField, div_tol: float = 1e-8) -> SpectralField:
    """Inverse of :func:`to_grid` for band-limited data.

    Torus input must be (numerically) divergence-free; the residual along k
    is compared against ``div_tol`` times the field scale.
    """
    g = grid.geometry
    M = grid.grid_size
    _check_grid_size(g, M)
    if g.kind == DIRICHLET:
        S = _dirichlet_sine_matrix(g.resolution, M)
        w = 1.0 / (M + 1.0)
        if g.dim == 1:
            return SpectralField(g, w * (S.T @ grid.values))
        C = w**2 * (S.T @ grid.values @ S)
        return SpectralField(g, C.reshape(-1))
    tt = torus_transform(g, M)
    vhat = np.stack(
        [tt.analyze(grid.values[..., 0]), tt.analyze(grid.values[..., 1])], axis=1
    )
    khat = g.modes.astype(float)
    scale = np.max(np.abs(vhat)) + 1e-300
    div = np.abs(np.sum(vhat * khat, axis=1)) / np.linalg.norm(khat, axis=1)
    if np.max(div) > div_tol * scale:
        raise ValueError(
            f"grid data is not divergence-free (residual {np.max(div):.3e})"
        )
    return leray_project(g, vhat)


def point_eval(f: SpectralField, points: np.ndarray) -> np.ndarray:
    """Evaluate the field at arbitrary points by direct spectral summation.

    Box: returns (P,) scalars. Torus: returns (P, 2) velocities.  This is the
    interpolation-free oracle route; cost O(P * n_modes).
    """
    g = f.geometry
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if g.kind == DIRICHLET:
        if g.dim == 1:
            k = g.modes[:, 0].astype(float)
            basis = np.sqrt(2.0) * np.sin(np.pi * pts[:, :1] * k[None, :])
            return basis @ f.coeffs
        k = g.modes.astype(float)
        basis = 2.0 * np.sin(np.pi * np.outer(pts[:, 0], k[:, 0]).reshape(len(pts), -1))
        basis *= np.sin(np.pi * np.outer(pts[:, 1], k[:, 1]).reshape(len(pts), -1))
        return basis @ f.coeffs
    phase = np.exp(2j * np.pi * (pts @ g.modes.T.astype(float)))
    vhat = vector_coefficients(f)
    u1 = 2.0 * np.real(phase @ vhat[:, 0])
    u2 = 2.0 * np.real(phase @ vhat[:, 1])
    return np.stack([u1, u2], axis=-1)

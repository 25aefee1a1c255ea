"""Aperture geometry, PSF evaluation, spatial-mode bases, and overlap coefficients.

The imaging model is one-dimensional.  A single hard aperture of length
``delta`` has the unit-normalized sinc point-spread function

    psf(x) = sqrt(delta / 2 pi) * sin(delta x / 2) / (delta x / 2),

and the two telescopes sit at aperture-plane positions -beta and +beta, so a
point source at object angle ``x_s`` imprints phases ``exp(-i beta x_s)``
(site A) and ``exp(+i beta x_s)`` (site B) on the collected photon.  Derived
scales: ``sigma = 2 pi / delta`` is the single-aperture Rayleigh angle and
``r = 2 beta / delta`` the baseline-to-aperture ratio.

Mode bases are represented by their sampled values on a fixed composite
Gauss-Legendre quadrature grid; all inner products below are grid inner
products, i.e. the modes are implicitly windowed to the quadrature domain
(which stays a legitimate orthonormal family).  Overlap coefficients are
correlations against the unit-norm shifted PSF:

    gamma_q(x_s) = <phi_q, psf(. - x_s)> / ||psf(. - x_s)||,

so gamma_0(0) = 1 and sum_q gamma_q^2 -> 1 as K grows.  The normalized
coefficients eta_q = gamma_q / sqrt(sum_r gamma_r^2) are what every
downstream probability consumes; they are unchanged by the PSF-norm
convention.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BasisDegenerateError, ConfigError, ProjectionDegenerateError

PSF_ADAPTED = "psf-adapted"
GAUSSIAN_HG = "gaussian-hg"
BASIS_KINDS = (PSF_ADAPTED, GAUSSIAN_HG)

# Gram-Schmidt residual below this (inputs pre-normalized) means degeneracy.
_GS_RESIDUAL_TOL = 1e-10
# Total K-mode support below this means the photon missed the sorter.
_PROJECTION_TOL = 1e-14


@dataclass(frozen=True)
class ApertureConfig:
    """Two-telescope geometry: aperture length ``delta``, half-baseline ``beta``."""

    delta: float
    beta: float = 0.0

    def __post_init__(self):
        if not (self.delta > 0.0) or not math.isfinite(self.delta):
            raise ConfigError(f"aperture length must be positive, got {self.delta}")
        if self.beta < 0.0 or not math.isfinite(self.beta):
            raise ConfigError(f"half-baseline must be >= 0, got {self.beta}")

    @property
    def sigma(self) -> float:
        """Rayleigh angle 2 pi / delta."""
        return 2.0 * math.pi / self.delta

    @property
    def r(self) -> float:
        """Baseline-to-aperture ratio 2 beta / delta."""
        return 2.0 * self.beta / self.delta

    @classmethod
    def from_ratio(cls, delta: float, r: float) -> "ApertureConfig":
        return cls(delta=delta, beta=0.5 * r * delta)


@dataclass(frozen=True)
class Scene:
    """Point-source scene: tuple of (object angle, relative brightness)."""

    sources: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.sources) < 1:
            raise ConfigError("scene needs at least one source")
        total = 0.0
        for x, b in self.sources:
            if not (b > 0.0):
                raise ConfigError(f"brightness must be positive, got {b} at x={x}")
            total += b
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"brightnesses must sum to 1 within 1e-12, got {total!r}")

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    @property
    def positions(self) -> np.ndarray:
        return np.array([x for x, _ in self.sources])

    @property
    def brightnesses(self) -> np.ndarray:
        return np.array([b for _, b in self.sources])

    @classmethod
    def two_point(cls, theta: float, split: float = 0.5) -> "Scene":
        """Equal-or-weighted pair at +/- theta; ``split`` is the +theta weight."""
        return cls(sources=((theta, split), (-theta, 1.0 - split)))

    @classmethod
    def single(cls, x: float) -> "Scene":
        return cls(sources=((x, 1.0),))


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Gauss-Legendre rule on |x| <= half_width_scale / delta."""

    half_width_scale: float = 40.0
    panels: int = 4096
    nodes_per_panel: int = 4

    def __post_init__(self):
        if self.half_width_scale <= 0 or self.panels < 1 or self.nodes_per_panel < 2:
            raise ConfigError(f"invalid quadrature spec {self}")

    def build(self, delta: float) -> "QuadratureGrid":
        half_width = self.half_width_scale / delta
        edges = np.linspace(-half_width, half_width, self.panels + 1)
        nodes, weights = np.polynomial.legendre.leggauss(self.nodes_per_panel)
        centers = 0.5 * (edges[:-1] + edges[1:])
        halves = 0.5 * (edges[1:] - edges[:-1])
        x = (centers[:, None] + halves[:, None] * nodes[None, :]).ravel()
        w = (halves[:, None] * weights[None, :]).ravel()
        return QuadratureGrid(spec=self, half_width=half_width, x=x, w=w)


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    spec: QuadratureSpec
    half_width: float
    x: np.ndarray
    w: np.ndarray

    @property
    def n_points(self) -> int:
        return self.x.size

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(np.dot(self.w * f, g))


def psf_eval(aperture: ApertureConfig, x) -> np.ndarray | float:
    """Unit-norm sinc PSF of a length-delta aperture; total function of x."""
    arr = np.asarray(x, dtype=float)
    out = math.sqrt(aperture.delta / (2.0 * math.pi)) * np.sinc(aperture.delta * arr / (2.0 * math.pi))
    if np.isscalar(x) or arr.ndim == 0:
        return float(out)
    return out


def _gaussian_width(delta: float) -> float:
    # Matches the sinc PSF's rms aperture wavenumber: int |psf'|^2 = delta^2/12
    # for the sinc, 1/(4 s^2) for the Gaussian, equal at s = sqrt(3)/delta.
    return math.sqrt(3.0) / delta


def _gaussian_psf(width: float, x: np.ndarray) -> np.ndarray:
    norm = (2.0 * math.pi * width * width) ** -0.25
    return norm * np.exp(-np.square(x) / (4.0 * width * width))


def _hermite_gauss_rows(width: float, K: int, x: np.ndarray) -> np.ndarray:
    u = x / (width * math.sqrt(2.0))
    envelope = (2.0 * math.pi * width * width) ** -0.25 * np.exp(-0.5 * u * u)
    rows = np.empty((K, x.size))
    coeff = np.zeros(K)
    for q in range(K):
        coeff[:] = 0.0
        coeff[q] = 1.0
        norm = 1.0 / math.sqrt(2.0**q * math.factorial(q))
        rows[q] = norm * np.polynomial.hermite.hermval(u, coeff[: q + 1]) * envelope
    return rows


def _psf_derivative_rows(aperture: ApertureConfig, x: np.ndarray, n_max: int, n_nodes: int = 192) -> np.ndarray:
    """Rows n = 0..n_max of d^n psf / dx^n, evaluated through the aperture profile.

    The sinc PSF is the transform of a flat profile on |y| <= delta/2, so each
    derivative is an exact smooth integral (i y)^n * profile, which composite
    oscillation-free Gauss-Legendre nails to machine precision.
    """
    half = 0.5 * aperture.delta
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    y = half * nodes
    wy = half * weights
    scale = math.sqrt(aperture.delta / (2.0 * math.pi)) / aperture.delta
    phase = np.exp(1j * np.outer(x, y))
    rows = np.empty((n_max + 1, x.size))
    iy_pow = np.ones(n_nodes, dtype=complex)
    for n in range(n_max + 1):
        rows[n] = scale * (phase @ (wy * iy_pow)).real
        iy_pow = iy_pow * (1j * y)
    return rows


def _gram_schmidt(rows: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Modified Gram-Schmidt with a re-orthogonalization pass.

    Returns (values, coeffs) with values = coeffs @ rows, rows assumed
    unit-norm under the weight w.
    """
    K = rows.shape[0]
    values = np.empty_like(rows)
    coeffs = np.zeros((K, K))
    for q in range(K):
        v = rows[q].copy()
        c = np.zeros(K)
        c[q] = 1.0
        for _ in range(2):
            for p in range(q):
                ov = float(np.dot(w * values[p], v))
                v -= ov * values[p]
                c -= ov * coeffs[p]
        nrm = math.sqrt(float(np.dot(w * v, v)))
        if nrm < _GS_RESIDUAL_TOL:
            raise BasisDegenerateError(q, nrm)
        values[q] = v / nrm
        coeffs[q] = c / nrm
    return values, coeffs


@dataclass(frozen=True, eq=False)
class ModeBasis:
    """K orthonormal spatial modes sampled on a quadrature grid.

    ``psf-adapted``: Gram-Schmidt on the PSF and its derivatives, so mode 0 is
    the normalized sinc PSF and mode q has parity (-1)^q.
    ``gaussian-hg``: closed-form Hermite-Gauss ladder whose mode 0 is a
    Gaussian PSF (the analytic cross-check path).
    """

    kind: str
    K: int
    aperture: ApertureConfig
    grid: QuadratureGrid
    values: np.ndarray  # (K, n_points)
    psf_grid: np.ndarray = field(repr=False)  # model PSF sampled on the grid
    deriv_norms: np.ndarray | None = field(default=None, repr=False)
    coeffs: np.ndarray | None = field(default=None, repr=False)
    hg_width: float | None = None

    def gram(self) -> np.ndarray:
        weighted = self.values * self.grid.w[None, :]
        return weighted @ self.values.T

    def psf(self, x) -> np.ndarray | float:
        """Model PSF underlying this basis (sinc or Gaussian)."""
        if self.kind == GAUSSIAN_HG:
            arr = np.asarray(x, dtype=float)
            out = _gaussian_psf(self.hg_width, arr)
            return float(out) if arr.ndim == 0 else out
        return psf_eval(self.aperture, x)

    def sample(self, x: np.ndarray) -> np.ndarray:
        """Evaluate all K modes at arbitrary points (K, len(x))."""
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == GAUSSIAN_HG:
            return _hermite_gauss_rows(self.hg_width, self.K, arr)
        raw = _psf_derivative_rows(self.aperture, arr, self.K - 1)
        raw /= self.deriv_norms[:, None]
        return self.coeffs @ raw


def build_basis(
    aperture: ApertureConfig,
    K: int,
    kind: str = PSF_ADAPTED,
    quad: QuadratureSpec | None = None,
) -> ModeBasis:
    """Construct a K-mode orthonormal basis of the requested kind."""
    if K < 1:
        raise ConfigError(f"mode count must be >= 1, got {K}")
    if kind not in BASIS_KINDS:
        raise ConfigError(f"unknown basis kind {kind!r}, expected one of {BASIS_KINDS}")
    spec = quad if quad is not None else QuadratureSpec()
    grid = spec.build(aperture.delta)

    if kind == GAUSSIAN_HG:
        width = _gaussian_width(aperture.delta)
        values = _hermite_gauss_rows(width, K, grid.x)
        return ModeBasis(
            kind=kind, K=K, aperture=aperture, grid=grid,
            values=values, psf_grid=_gaussian_psf(width, grid.x), hg_width=width,
        )

    raw = _psf_derivative_rows(aperture, grid.x, K - 1)
    norms = np.sqrt(np.einsum("ng,g,ng->n", raw, grid.w, raw))
    if np.any(norms < 1e-300):
        raise BasisDegenerateError(int(np.argmin(norms)), float(norms.min()))
    raw /= norms[:, None]
    values, coeffs = _gram_schmidt(raw, grid.w)
    return ModeBasis(
        kind=kind, K=K, aperture=aperture, grid=grid,
        values=values, psf_grid=psf_eval(aperture, grid.x),
        deriv_norms=norms, coeffs=coeffs,
    )


@dataclass(frozen=True, eq=False)
class OverlapTable:
    """Per-source overlap rows gamma_q(x_s) and normalized eta_q(x_s)."""

    positions: tuple[float, ...]
    gamma: np.ndarray  # (n_sources, K)
    eta: np.ndarray  # (n_sources, K)

    def __post_init__(self):
        sums = np.sum(self.eta * self.eta, axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-12):
            raise ConfigError(f"eta rows must be unit-norm, got sums {sums}")

    @property
    def K(self) -> int:
        return self.gamma.shape[1]


def _gamma_rows(basis: ModeBasis, xs: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Grid correlations of every mode against unit-norm shifted PSFs."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    out = np.empty((xs.size, basis.K))
    gx = basis.grid.x
    w = basis.grid.w
    for lo in range(0, xs.size, chunk):
        hi = min(lo + chunk, xs.size)
        shifted = basis.psf(gx[None, :] - xs[lo:hi, None])
        weighted = shifted * w[None, :]
        norms = np.sqrt(np.einsum("sg,sg->s", weighted, shifted))
        out[lo:hi] = (weighted @ basis.values.T) / norms[:, None]
    return out


def eta_squared_rows(basis: ModeBasis, xs: np.ndarray) -> np.ndarray:
    """eta_q^2(x) for an array of positions, (len(xs), K); rows sum to 1."""
    gamma = _gamma_rows(basis, xs)
    totals = np.sum(gamma * gamma, axis=1)
    if np.any(totals < _PROJECTION_TOL):
        bad = float(np.asarray(xs).ravel()[int(np.argmin(totals))])
        raise ProjectionDegenerateError(
            f"photon from x={bad} has no support in the first {basis.K} modes"
        )
    return gamma * gamma / totals[:, None]


def overlaps(basis: ModeBasis, scene: Scene) -> OverlapTable:
    """Overlap table for every source in the scene."""
    xs = scene.positions
    gamma = _gamma_rows(basis, xs)
    totals = np.sum(gamma * gamma, axis=1)
    for s, total in enumerate(totals):
        if total < _PROJECTION_TOL:
            raise ProjectionDegenerateError(
                f"source {s} at x={xs[s]} has no support in the first {basis.K} modes"
            )
    eta = gamma / np.sqrt(totals)[:, None]
    return OverlapTable(positions=tuple(float(v) for v in xs), gamma=gamma, eta=eta)


def export_overlaps_csv(table: OverlapTable, path) -> None:
    """Write the overlap table as CSV with columns q,x,gamma,eta."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["q", "x", "gamma", "eta"])
        for s, x in enumerate(table.positions):
            for q in range(table.K):
                writer.writerow([q, f"{x:.17g}", f"{table.gamma[s, q]:.17g}", f"{table.eta[s, q]:.17g}"])


def export_basis_csv(basis: ModeBasis, path, stride: int = 1) -> None:
    """Write sampled mode values as CSV with columns q,x,phi."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["q", "x", "phi"])
        xs = basis.grid.x[::stride]
        for q in range(basis.K):
            vals = basis.values[q, ::stride]
            for x, v in zip(xs, vals):
                writer.writerow([q, f"{x:.17g}", f"{v:.17g}"])

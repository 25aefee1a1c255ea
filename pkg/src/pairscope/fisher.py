"""Analytic outcome probabilities, classical/quantum Fisher information, chart data.

A detected photon from a source at x lands in spatial mode q with probability
eta_q^2(x) and reports sign +/- with probabilities cos^2(beta x) / sin^2(beta x),
so the full conditional law is

    P_{q,+}(x) = cos^2(beta x) eta_q^2(x),   P_{q,-}(x) = sin^2(beta x) eta_q^2(x),

mixed over sources with their brightnesses.  The per-photon quantum limit for
the two-point separation problem is qfi = (4 pi^2 / 3 sigma^2)(3 r^2 + 1).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DerivativeFailureError, PairscopeError
from .modes import (
    PSF_ADAPTED,
    ApertureConfig,
    ModeBasis,
    QuadratureSpec,
    Scene,
    build_basis,
    eta_squared_rows,
)

_ZERO_PROB = 1e-14  # below this an outcome is treated as locally vanishing
_RATIO_SLACK = 1e-6  # Cramer-Rao headroom; a larger excess is a numerics bug


def outcome_index(q: int, sign: int) -> int:
    """Flat index for outcome (q, sign): q ascending, + before -."""
    return 2 * q + (0 if sign > 0 else 1)


def outcome_list(K: int) -> list[tuple[int, int]]:
    return [(q, s) for q in range(K) for s in (1, -1)]


@dataclass(frozen=True)
class OutcomeDistribution:
    """Probabilities over (q, sign), flat-indexed via outcome_index."""

    K: int
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.probs) != 2 * self.K:
            raise ConfigError(f"expected {2 * self.K} probabilities, got {len(self.probs)}")
        if any(p < -1e-12 for p in self.probs):
            raise ConfigError(f"negative probability in {self.probs}")
        total = sum(self.probs)
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"probabilities must sum to 1 within 1e-12, got {total!r}")

    def prob(self, q: int, sign: int) -> float:
        return self.probs[outcome_index(q, sign)]

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {(q, s): self.prob(q, s) for q, s in outcome_list(self.K)}

    def total_variation(self, other: "OutcomeDistribution") -> float:
        if other.K != self.K:
            raise ConfigError(f"mode counts differ: {self.K} vs {other.K}")
        return 0.5 * sum(abs(a - b) for a, b in zip(self.probs, other.probs))

    def max_abs_diff(self, other: "OutcomeDistribution") -> float:
        return max(abs(a - b) for a, b in zip(self.probs, other.probs))

    @classmethod
    def from_dict(cls, K: int, mapping: dict[tuple[int, int], float]) -> "OutcomeDistribution":
        probs = [0.0] * (2 * K)
        for (q, s), p in mapping.items():
            probs[outcome_index(q, s)] = p
        return cls(K=K, probs=tuple(probs))


def _prob_vector(aperture: ApertureConfig, eta2_by_source: np.ndarray, scene: Scene) -> np.ndarray:
    """Assemble the flat (2K,) outcome vector from per-source eta^2 rows."""
    K = eta2_by_source.shape[1]
    out = np.zeros(2 * K)
    for row, (x, b) in zip(eta2_by_source, scene.sources):
        c = math.cos(aperture.beta * x) ** 2
        out[0::2] += b * c * row
        out[1::2] += b * (1.0 - c) * row
    return out


def outcome_probs(aperture: ApertureConfig, basis: ModeBasis, scene: Scene) -> OutcomeDistribution:
    """Analytic conditional law over (q, sign) for a detected photon."""
    eta2 = eta_squared_rows(basis, scene.positions)
    vec = _prob_vector(aperture, eta2, scene)
    return OutcomeDistribution(K=basis.K, probs=tuple(float(v) for v in vec))


def qfi(aperture: ApertureConfig) -> float:
    """Per-photon quantum Fisher information for the two-point separation."""
    sigma = aperture.sigma
    r = aperture.r
    return (4.0 * math.pi**2 / (3.0 * sigma**2)) * (3.0 * r * r + 1.0)


def _fisher_from_samples(
    p0: np.ndarray,
    p_ph: np.ndarray,
    p_mh: np.ndarray,
    p_ph2: np.ndarray,
    p_mh2: np.ndarray,
    h: float,
    d_floor: float,
) -> float:
    """Fisher sum from probability samples at theta, theta +/- h, theta +/- h/2.

    Richardson-extrapolated central differences; outcomes with vanishing
    probability contribute through the curvature limit (P')^2/P -> 2 P'',
    which is what the exact law tends to at interior sign-measurement nulls.
    """
    d_full = (p_ph - p_mh) / (2.0 * h)
    d_half = (p_ph2 - p_mh2) / h
    deriv = (4.0 * d_half - d_full) / 3.0

    fi = 0.0
    for o in range(p0.size):
        p = p0[o]
        if p > _ZERO_PROB:
            fi += deriv[o] ** 2 / p
            continue
        if abs(deriv[o]) > d_floor:
            raise DerivativeFailureError(
                f"outcome {o}: probability {p:.3e} but derivative {deriv[o]:.3e}; "
                "finite-difference step too large near a zero"
            )
        a_full = (p_ph[o] + p_mh[o]) / (2.0 * h * h)
        a_half = (p_ph2[o] + p_mh2[o]) / (0.5 * h * h)
        curvature = (4.0 * a_half - a_full) / 3.0
        fi += 4.0 * max(curvature, 0.0)
    return fi


def _two_point_prob_samples(
    aperture: ApertureConfig, basis: ModeBasis, theta: float, h: float
) -> dict[float, np.ndarray]:
    """Outcome vectors for the equal two-point scene at theta offsets {0, +-h, +-h/2}."""
    offsets = (0.0, h, -h, 0.5 * h, -0.5 * h)
    xs = []
    for off in offsets:
        xs.extend([theta + off, -(theta + off)])
    eta2 = eta_squared_rows(basis, np.array(xs))
    samples = {}
    for n, off in enumerate(offsets):
        scene = Scene.two_point(theta + off)
        samples[off] = _prob_vector(aperture, eta2[2 * n : 2 * n + 2], scene)
    return samples


def cfi(aperture: ApertureConfig, basis: ModeBasis, theta: float, step: float | None = None) -> float:
    """Per-photon classical Fisher information of the (q, sign) measurement
    for the equal-brightness two-point scene at +/- theta."""
    if not (theta > 0.0):
        raise ConfigError(f"theta must be positive, got {theta}")
    sigma = aperture.sigma
    h = step if step is not None else 1e-6 * sigma
    s = _two_point_prob_samples(aperture, basis, theta, h)
    d_floor = 1e-6 * max(1.0, 1.0 / sigma)
    return _fisher_from_samples(s[0.0], s[h], s[-h], s[0.5 * h], s[-0.5 * h], h, d_floor)


@dataclass(frozen=True)
class FisherResult:
    """One chart row: CFI, QFI, and their ratio at (theta/sigma, r, K)."""

    theta_over_sigma: float
    r: float
    K: int
    cfi_per_photon: float
    qfi_per_photon: float
    ratio: float

    def __post_init__(self):
        if not (-1e-12 <= self.ratio <= 1.0 + _RATIO_SLACK):
            raise PairscopeError(
                f"CFI/QFI ratio {self.ratio!r} outside [0, 1+{_RATIO_SLACK}] at "
                f"theta/sigma={self.theta_over_sigma}, r={self.r}, K={self.K}; numerics bug"
            )


def ratio_chart(
    delta: float,
    thetas_over_sigma,
    rs,
    k_values,
    kind: str = PSF_ADAPTED,
    quad: QuadratureSpec | None = None,
    step: float | None = None,
) -> list[FisherResult]:
    """CFI/QFI rows on the (theta/sigma, r, K) grid, theta outer, r middle, K inner.

    The spatial-mode factor eta_q^2 is baseline-independent, so each (K, theta)
    pair is sampled once and reused across every r.
    """
    thetas = [float(t) for t in thetas_over_sigma]
    rs = [float(r) for r in rs]
    ks = [int(k) for k in k_values]
    if not thetas or not rs or not ks:
        raise ConfigError("chart grids must be nonempty")
    if any(t <= 0.0 for t in thetas):
        raise ConfigError("theta/sigma grid must be strictly positive")

    sigma = 2.0 * math.pi / delta
    h = step if step is not None else 1e-6 * sigma
    d_floor = 1e-6 * max(1.0, 1.0 / sigma)
    offsets = (0.0, h, -h, 0.5 * h, -0.5 * h)

    # eta^2 averaged over the +/- pair, per (K, theta, offset)
    g: dict[tuple[int, int, float], np.ndarray] = {}
    for K in ks:
        basis = build_basis(ApertureConfig.from_ratio(delta, 0.0), K, kind=kind, quad=quad)
        xs = []
        for t_idx, t in enumerate(thetas):
            theta = t * sigma
            for off in offsets:
                xs.extend([theta + off, -(theta + off)])
        eta2 = eta_squared_rows(basis, np.array(xs))
        pos = 0
        for t_idx in range(len(thetas)):
            for off in offsets:
                g[(K, t_idx, off)] = 0.5 * (eta2[pos] + eta2[pos + 1])
                pos += 2

    results = []
    for t_idx, t in enumerate(thetas):
        theta = t * sigma
        for r in rs:
            aperture = ApertureConfig.from_ratio(delta, r)
            qfi_val = qfi(aperture)
            trig = {}
            for off in offsets:
                c = math.cos(aperture.beta * (theta + off)) ** 2
                trig[off] = (c, 1.0 - c)
            for K in ks:
                vecs = {}
                for off in offsets:
                    c, sn = trig[off]
                    gv = g[(K, t_idx, off)]
                    vec = np.empty(2 * K)
                    vec[0::2] = c * gv
                    vec[1::2] = sn * gv
                    vecs[off] = vec
                fi = _fisher_from_samples(
                    vecs[0.0], vecs[h], vecs[-h], vecs[0.5 * h], vecs[-0.5 * h], h, d_floor
                )
                results.append(
                    FisherResult(
                        theta_over_sigma=t,
                        r=r,
                        K=K,
                        cfi_per_photon=fi,
                        qfi_per_photon=qfi_val,
                        ratio=fi / qfi_val,
                    )
                )
    return results


CHART_HEADER = ["theta_over_sigma", "r", "K", "cfi", "qfi", "ratio"]


def write_chart_csv(results, fh) -> None:
    """Chart CSV at full double precision, deterministic row order."""
    writer = csv.writer(fh)
    writer.writerow(CHART_HEADER)
    for row in results:
        writer.writerow(
            [
                f"{row.theta_over_sigma:.17g}",
                f"{row.r:.17g}",
                row.K,
                f"{row.cfi_per_photon:.17g}",
                f"{row.qfi_per_photon:.17g}",
                f"{row.ratio:.17g}",
            ]
        )

"""Monte Carlo separation estimation and Cramer-Rao attainment experiments.

Counts over the (q, sign) outcomes are the sufficient statistic; the
estimator maximizes the multinomial likelihood over the half-separation
theta on (0, theta_max], with a coarse grid scan guarding against secondary
lobes before golden-section refinement.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EstimationImpossibleError
from .fisher import OutcomeDistribution, cfi, outcome_index, outcome_list
from .modes import Scene, eta_squared_rows
from .protocol import ProtocolConfig, run_protocol_once
from .seeds import substream

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class CountTable:
    """Observed counts n_{q,sign}, flat-indexed like OutcomeDistribution."""

    K: int
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts) != 2 * self.K:
            raise ConfigError(f"expected {2 * self.K} count cells, got {len(self.counts)}")
        if any(c < 0 for c in self.counts):
            raise ConfigError("counts must be nonnegative")

    @property
    def n(self) -> int:
        return sum(self.counts)

    def count(self, q: int, sign: int) -> int:
        return self.counts[outcome_index(q, sign)]

    @classmethod
    def from_records(cls, K: int, records) -> "CountTable":
        cells = [0] * (2 * K)
        for rec in records:
            cells[outcome_index(rec.q, rec.sign)] += 1
        return cls(K=K, counts=tuple(cells))


def _scene_at(config: ProtocolConfig, theta: float) -> Scene:
    """Two-point scene at +/- theta with the config's brightness split."""
    if config.scene.n_sources == 2:
        split = config.scene.sources[0][1]
    else:
        split = 0.5
    return Scene.two_point(theta, split=split)


def _config_at(config: ProtocolConfig, theta: float) -> ProtocolConfig:
    return dataclasses.replace(config, scene=_scene_at(config, theta))


def _prob_matrix(config: ProtocolConfig, thetas: np.ndarray) -> np.ndarray:
    """P(theta_j) rows over the flat outcome index, vectorized over thetas."""
    beta = config.aperture.beta
    split = _scene_at(config, float(thetas[0])).sources[0][1]
    xs = np.concatenate([thetas, -thetas])
    eta2 = eta_squared_rows(config.basis, xs)
    n = thetas.size
    c = np.cos(beta * thetas)[:, None] ** 2
    plus = split * c * eta2[:n] + (1.0 - split) * c * eta2[n:]
    minus = split * (1.0 - c) * eta2[:n] + (1.0 - split) * (1.0 - c) * eta2[n:]
    out = np.empty((n, 2 * config.K))
    out[:, 0::2] = plus
    out[:, 1::2] = minus
    return out


def sample_photons(config: ProtocolConfig, theta_true: float, n: int, rng, mode: str = "fast") -> CountTable:
    """N i.i.d. conditional-on-detection draws at the true separation.

    ``fast`` draws from the analytic law; ``full`` runs the qubit-level
    protocol per photon.  The two agree in distribution.
    """
    if n < 1:
        raise ConfigError(f"need n >= 1 photons, got {n}")
    cfg = _config_at(config, theta_true)
    if mode == "fast":
        probs = np.array(_prob_matrix(cfg, np.array([theta_true]))[0])
        probs = np.clip(probs, 0.0, None)
        probs /= probs.sum()
        cells = rng.multinomial(n, probs)
        return CountTable(K=config.K, counts=tuple(int(c) for c in cells))
    if mode == "full":
        cells = [0] * (2 * config.K)
        for _ in range(n):
            rec = run_protocol_once(cfg, rng)
            cells[outcome_index(rec.q, rec.sign)] += 1
        return CountTable(K=config.K, counts=tuple(cells))
    raise ConfigError(f"sampling mode must be fast or full, got {mode!r}")


def log_likelihood(config: ProtocolConfig, theta: float, counts: CountTable) -> float:
    """Multinomial log likelihood; -inf when an observed outcome is impossible."""
    probs = _prob_matrix(config, np.array([float(theta)]))[0]
    total = 0.0
    for n_o, p_o in zip(counts.counts, probs):
        if n_o == 0:
            continue
        if p_o <= 0.0:
            return -math.inf
        total += n_o * math.log(p_o)
    return total


def _loglik_rows(counts: CountTable, probs: np.ndarray) -> np.ndarray:
    n_vec = np.array(counts.counts, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.where(probs > 0.0, np.log(np.clip(probs, 1e-300, None)), -np.inf)
        terms = np.where(n_vec[None, :] > 0, n_vec[None, :] * logp, 0.0)
    return terms.sum(axis=1)


class LikelihoodGrid:
    """Precomputed coarse-scan table, shareable across trials of one config."""

    def __init__(self, config: ProtocolConfig, theta_max: float, grid_points: int):
        self.thetas = theta_max * np.arange(1, grid_points + 1) / grid_points
        self.probs = _prob_matrix(config, self.thetas)


def mle(
    config: ProtocolConfig,
    counts: CountTable,
    theta_max: float | None = None,
    grid_points: int = 512,
    tol: float | None = None,
    grid: LikelihoodGrid | None = None,
) -> float:
    """Maximum-likelihood half-separation on (0, theta_max].

    Coarse grid scan, then golden-section refinement to the absolute
    tolerance; exact ties break toward smaller theta.
    """
    sigma = config.aperture.sigma
    t_max = theta_max if theta_max is not None else 0.5 * sigma
    tol_abs = tol if tol is not None else 1e-6 * sigma
    if counts.n < 1:
        raise ConfigError("count table is empty")

    if grid is None:
        grid = LikelihoodGrid(config, t_max, grid_points)
    thetas = grid.thetas
    ll = _loglik_rows(counts, grid.probs)
    if not np.any(np.isfinite(ll)):
        raise EstimationImpossibleError("observed counts impossible at every candidate theta")
    best_idx = int(np.argmax(ll))  # first max: tie toward smaller theta

    lo = thetas[best_idx - 1] if best_idx > 0 else 0.5 * thetas[0]
    hi = thetas[best_idx + 1] if best_idx < thetas.size - 1 else thetas[-1]

    def f(theta: float) -> float:
        return float(_loglik_rows(counts, _prob_matrix(config, np.array([theta])))[0])

    best_theta, best_ll = float(thetas[best_idx]), float(ll[best_idx])

    def consider(theta: float, value: float):
        nonlocal best_theta, best_ll
        if value > best_ll or (value == best_ll and theta < best_theta):
            best_theta, best_ll = theta, value

    a, b = float(lo), float(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    consider(c, fc)
    consider(d, fd)
    while b - a > tol_abs:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
            consider(c, fc)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
            consider(d, fd)
    return best_theta


@dataclass(frozen=True)
class EstimationReport:
    """Trial summary of a Cramer-Rao attainment experiment."""

    theta_true: float
    theta_hat_mean: float
    sample_variance: float
    predicted_variance: float
    trials: int
    photons_per_trial: int
    seed: int
    estimates: tuple[float, ...]

    def to_json_dict(self) -> dict:
        return {
            "theta_true": self.theta_true,
            "theta_hat_mean": self.theta_hat_mean,
            "sample_variance": self.sample_variance,
            "predicted_crb_variance": self.predicted_variance,
            "variance_ratio": self.sample_variance / self.predicted_variance,
            "trials": self.trials,
            "photons_per_trial": self.photons_per_trial,
            "seed": self.seed,
        }


def crb_experiment(
    config: ProtocolConfig,
    theta_true: float,
    n_photons: int,
    trials: int,
    seed: int,
    mode: str = "fast",
) -> EstimationReport:
    """Repeated sample-then-estimate trials against the 1/(N*CFI) floor.

    Deterministic given (config, seed): each trial draws from its own named
    substream, so the aggregate is order-independent.
    """
    if trials < 30:
        raise ConfigError(f"need at least 30 trials for a variance estimate, got {trials}")
    predicted = 1.0 / (n_photons * cfi(config.aperture, config.basis, theta_true))
    grid = LikelihoodGrid(config, 0.5 * config.aperture.sigma, 512)
    estimates = []
    for t in range(trials):
        rng = substream(seed, "trial", t)
        counts = sample_photons(config, theta_true, n_photons, rng, mode=mode)
        estimates.append(mle(config, counts, grid=grid))
    arr = np.array(estimates)
    return EstimationReport(
        theta_true=theta_true,
        theta_hat_mean=float(arr.mean()),
        sample_variance=float(arr.var(ddof=1)),
        predicted_variance=predicted,
        trials=trials,
        photons_per_trial=n_photons,
        seed=seed,
        estimates=tuple(float(v) for v in arr),
    )


def empirical_distribution(counts: CountTable) -> OutcomeDistribution:
    """Counts normalized to a distribution (requires at least one photon)."""
    n = counts.n
    if n < 1:
        raise ConfigError("cannot normalize an empty count table")
    return OutcomeDistribution(K=counts.K, probs=tuple(c / n for c in counts.counts))


def write_trials_csv(report: EstimationReport, fh) -> None:
    fh.write("trial,theta_hat\n")
    for t, est in enumerate(report.estimates):
        fh.write(f"{t},{est:.17g}\n")

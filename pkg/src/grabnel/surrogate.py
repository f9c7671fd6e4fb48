"""Sparse Bayesian linear regression with a per-dimension relevance prior.

Feature columns are min-max normalised to [0, 1] and then centred, targets are
standardised; an explicit intercept is never modelled (the centring plus the
target shift play that role). Per-dimension weight precisions carry a broad
Gamma prior and are set, together with the noise variance, by maximising the
log marginal likelihood with accepted steps that never decrease it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

_LAMBDA_MIN = 1e-12
_LAMBDA_MAX = 1e10
_STD_FLOOR = 1e-8
_JITTERS = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


class SingularFit(RuntimeError):
    """Posterior precision stayed numerically singular after jitter."""


class DimensionMismatch(ValueError):
    pass


@dataclass
class SurrogateConfig:
    gamma_shape: float = 1e-6
    gamma_rate: float = 1e-6
    max_evidence_iterations: int = 300
    convergence_tolerance: float = 1e-9

    def __post_init__(self) -> None:
        if min(self.gamma_shape, self.gamma_rate, self.convergence_tolerance) <= 0:
            raise ValueError("config values must be positive")
        if self.max_evidence_iterations < 0:
            raise ValueError("max_evidence_iterations must be non-negative")


@dataclass
class SurrogatePosterior:
    weight_mean: np.ndarray           # in normalised/standardised space
    weight_covariance: np.ndarray
    noise_variance: float             # standardised-target units
    precisions: np.ndarray
    col_min: np.ndarray
    col_max: np.ndarray
    col_center: np.ndarray            # mean of each normalised column
    target_mean: float
    target_std: float
    config: SurrogateConfig
    evidence_path: list[float] = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return self.weight_mean.shape[0]

    def normalise_rows(self, features: np.ndarray) -> np.ndarray:
        span = self.col_max - self.col_min
        scale = np.where(span > 0, span, 1.0)
        out = (features - self.col_min) / scale
        out[..., span <= 0] = 0.0
        return out - self.col_center


def _posterior_solve(x: np.ndarray, y: np.ndarray, precisions: np.ndarray,
                     noise_variance: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Weight mean, covariance, and log|A| for fixed hyperparameters."""
    a = x.T @ x / noise_variance + np.diag(precisions)
    for jitter in _JITTERS:
        try:
            factor = cho_factor(a + jitter * np.eye(a.shape[0]), lower=True)
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise SingularFit("posterior precision not positive definite")
    identity = np.eye(a.shape[0])
    covariance = cho_solve(factor, identity)
    mean = cho_solve(factor, x.T @ y) / noise_variance
    log_det_a = 2.0 * np.sum(np.log(np.diag(factor[0])))
    return mean, covariance, float(log_det_a)


def _log_evidence_value(x: np.ndarray, y: np.ndarray, precisions: np.ndarray,
                        noise_variance: float, cfg: SurrogateConfig) -> float:
    """Log marginal likelihood of y plus the Gamma log-prior on the precisions."""
    n = x.shape[0]
    mean, _, log_det_a = _posterior_solve(x, y, precisions, noise_variance)
    residual = y - x @ mean
    fit_term = residual @ residual / noise_variance + np.sum(precisions * mean * mean)
    log_marginal = 0.5 * (
        np.sum(np.log(precisions))
        - n * math.log(2.0 * math.pi)
        - n * math.log(noise_variance)
        - log_det_a
        - fit_term
    )
    a, b = cfg.gamma_shape, cfg.gamma_rate
    log_prior = np.sum(a * math.log(b) - math.lgamma(a) + (a - 1) * np.log(precisions)
                       - b * precisions)
    return float(log_marginal + log_prior)


def fit(features: np.ndarray, losses: np.ndarray, cfg: SurrogateConfig | None = None,
        fixed_precisions: np.ndarray | None = None,
        fixed_noise_variance: float | None = None) -> SurrogatePosterior:
    """Fit the regression; fixed_* freeze the hyperparameters (no optimisation)."""
    cfg = cfg or SurrogateConfig()
    x_raw = np.asarray(features, dtype=float)
    y_raw = np.asarray(losses, dtype=float)
    if x_raw.ndim != 2 or x_raw.shape[1] == 0:
        raise ValueError("features must be a non-empty 2-D matrix")
    if x_raw.shape[0] != y_raw.shape[0]:
        raise DimensionMismatch("row count mismatch between features and losses")
    if x_raw.shape[0] < 2:
        raise ValueError("need at least two observations")
    if not (np.isfinite(x_raw).all() and np.isfinite(y_raw).all()):
        raise ValueError("features and losses must be finite")

    col_min = x_raw.min(axis=0)
    col_max = x_raw.max(axis=0)
    span = col_max - col_min
    degenerate = span <= 0
    scale = np.where(degenerate, 1.0, span)
    x_norm = (x_raw - col_min) / scale
    x_norm[:, degenerate] = 0.0
    col_center = x_norm.mean(axis=0)
    x = x_norm - col_center

    target_mean = float(y_raw.mean())
    target_std = float(max(y_raw.std(), _STD_FLOOR))
    y = (y_raw - target_mean) / target_std

    n, d = x.shape
    frozen = fixed_precisions is not None or fixed_noise_variance is not None
    precisions = (np.full(d, 1.0) if fixed_precisions is None
                  else np.asarray(fixed_precisions, dtype=float).copy())
    if precisions.shape != (d,):
        raise DimensionMismatch("fixed_precisions has wrong length")
    noise_variance = (max(0.1 * float(y.var()), 1e-10) if fixed_noise_variance is None
                      else float(fixed_noise_variance))

    evidence = _log_evidence_value(x, y, precisions, noise_variance, cfg)
    path = [evidence]
    if not frozen:
        for _ in range(cfg.max_evidence_iterations):
            mean, covariance, _ = _posterior_solve(x, y, precisions, noise_variance)
            gamma = 1.0 - precisions * np.diag(covariance)
            prop_prec = (gamma + 2.0 * cfg.gamma_shape) / (mean ** 2 + 2.0 * cfg.gamma_rate)
            prop_prec = np.clip(prop_prec, _LAMBDA_MIN, _LAMBDA_MAX)
            prop_prec[degenerate] = precisions[degenerate]  # pinned, column is all zero
            residual = y - x @ mean
            denom = max(n - float(gamma.sum()), 1e-10)
            prop_noise = max(float(residual @ residual) / denom, 1e-10)

            # Accept the re-estimate only if the evidence does not decrease,
            # backing off toward the current point in log-space otherwise.
            accepted = None
            step = 1.0
            for _ in range(12):
                trial_prec = np.exp((1 - step) * np.log(precisions) + step * np.log(prop_prec))
                trial_prec[degenerate] = precisions[degenerate]
                trial_noise = math.exp((1 - step) * math.log(noise_variance)
                                       + step * math.log(prop_noise))
                trial_evidence = _log_evidence_value(x, y, trial_prec, trial_noise, cfg)
                if trial_evidence >= evidence:
                    accepted = (trial_prec, trial_noise, trial_evidence)
                    break
                step *= 0.5
            if accepted is None:
                break
            precisions, noise_variance, new_evidence = accepted
            path.append(new_evidence)
            if abs(new_evidence - evidence) < cfg.convergence_tolerance:
                evidence = new_evidence
                break
            evidence = new_evidence

    mean, covariance, _ = _posterior_solve(x, y, precisions, noise_variance)
    return SurrogatePosterior(
        weight_mean=mean,
        weight_covariance=covariance,
        noise_variance=noise_variance,
        precisions=precisions,
        col_min=col_min,
        col_max=col_max,
        col_center=col_center,
        target_mean=target_mean,
        target_std=target_std,
        config=cfg,
        evidence_path=path,
    )


def predict(post: SurrogatePosterior, phi: np.ndarray) -> tuple[float, float]:
    """Predictive mean and variance at one raw feature vector, in target units."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (post.dimension,):
        raise DimensionMismatch(f"expected {post.dimension} features, got {phi.shape}")
    x = post.normalise_rows(phi[None, :])[0]
    mean = float(x @ post.weight_mean)
    variance = float(x @ post.weight_covariance @ x) + post.noise_variance
    return (mean * post.target_std + post.target_mean,
            variance * post.target_std ** 2)


def predict_batch(post: SurrogatePosterior, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised predict over rows."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[1] != post.dimension:
        raise DimensionMismatch(f"expected (N, {post.dimension}) features")
    x = post.normalise_rows(features)
    mean = x @ post.weight_mean
    variance = np.einsum("ij,jk,ik->i", x, post.weight_covariance, x) + post.noise_variance
    return (mean * post.target_std + post.target_mean,
            variance * post.target_std ** 2)


def log_evidence(post: SurrogatePosterior, features: np.ndarray, losses: np.ndarray) -> float:
    """Evidence of the given data at the posterior's hyperparameters."""
    x_raw = np.asarray(features, dtype=float)
    y_raw = np.asarray(losses, dtype=float)
    if x_raw.ndim != 2 or x_raw.shape[1] != post.dimension:
        raise DimensionMismatch("feature dimension mismatch")
    x = post.normalise_rows(x_raw)
    y = (y_raw - post.target_mean) / post.target_std
    return _log_evidence_value(x, y, post.precisions, post.noise_variance, post.config)

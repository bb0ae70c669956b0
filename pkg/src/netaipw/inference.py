"""Network HAC variance, normal confidence intervals and the nuisance
influence-function correction of the unit scores."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .automodel import FittedNuisance
from .chainsim import Dataset, expit
from .estimator import EstimandRequest, score_jacobians
from .netgraph import Network

log = logging.getLogger(__name__)


def default_bandwidth(K: int = 1) -> float:
    """Scores of nodes closer than ``2(K + 1)`` hops share inputs; cover those lags."""
    return 2 * (K + 1) + 1


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "bartlett"
    bandwidth: float = 5.0

    def __post_init__(self):
        if self.kind not in ("bartlett", "truncated"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.bandwidth < 0:
            raise ValueError("bandwidth must be >= 0")

    def weight(self, s: int) -> float:
        if s == 0:
            return 1.0
        if s >= self.bandwidth:
            return 0.0
        return 1.0 - s / self.bandwidth if self.kind == "bartlett" else 1.0

    @property
    def max_lag(self) -> int:
        """Largest lag with nonzero weight."""
        return max(0, math.ceil(self.bandwidth) - 1)


@dataclass(frozen=True)
class HACResult:
    lambda_hat: float
    omegas: tuple[float, ...]
    floored: bool


def hac_variance(scores, net: Network, kernel: KernelSpec = KernelSpec()) -> HACResult:
    """Kernel-weighted sum of distance-shell autocovariances of the scores."""
    w = np.asarray(scores, dtype=float)
    if w.size == 0:
        raise ValueError("no scores")
    if w.size != net.n:
        raise ValueError("scores must be aligned with the network")
    e = w - w.mean()
    omegas = []
    for rows, cols in net.shell_pairs(kernel.max_lag):
        omegas.append(float(np.dot(e[rows], e[cols]) / w.size))
    lam = sum(kernel.weight(s) * om for s, om in enumerate(omegas))
    # exact cancellations can land a hair below zero
    scale = sum(abs(kernel.weight(s) * om) for s, om in enumerate(omegas))
    if -1e-12 * scale <= lam < 0:
        lam = 0.0
    floored = lam < 0
    if floored:
        log.warning("negative HAC variance %.3g floored at the lag-0 term", lam)
        lam = omegas[0]
    return HACResult(float(lam), tuple(omegas), bool(floored))


def confidence_interval(mu_hat: float, lambda_hat: float, n: int,
                        level: float = 0.95) -> tuple[float, float]:
    if lambda_hat < 0:
        raise ValueError("lambda_hat must be >= 0")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    half = float(norm.ppf((1 + level) / 2)) * math.sqrt(lambda_hat / n)
    return float(mu_hat - half), float(mu_hat + half)


@dataclass(frozen=True, eq=False)
class IFCorrection:
    corrected: np.ndarray = field(repr=False)
    M1: np.ndarray
    M2: np.ndarray
    M3: np.ndarray
    M4: np.ndarray
    if_theta: np.ndarray = field(repr=False)
    if_eta: np.ndarray = field(repr=False)
    applied: bool


def logistic_score_jacobian(X: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """Mean derivative of ``(y - p) x`` in the coefficients."""
    p = expit(X @ coef)
    return -(X * (p * (1 - p))[:, None]).T @ X / X.shape[0]


def if_corrected_scores(net: Network, data: Dataset, nuisance: FittedNuisance, scores,
                        request: EstimandRequest) -> IFCorrection:
    """Add the first-order effect of estimating both nuisance models to each score.

    ``W_i - M1 . IF_eta,i + M2 . IF_theta,i`` where ``M2`` is the mean score
    derivative in the outcome coefficients, ``M1`` minus that in the treatment
    coefficients, and ``IF = -M^{-1} g`` from the logistic score equations.
    """
    scores = np.asarray(scores, dtype=float)
    d_theta, d_eta = score_jacobians(net, data, nuisance, request)
    M2 = d_theta.mean(axis=0)
    M1 = -d_eta.mean(axis=0)
    M3 = logistic_score_jacobian(nuisance.outcome_design, nuisance.theta_hat)
    M4 = logistic_score_jacobian(nuisance.treatment_design, nuisance.eta_hat)
    try:
        if_theta = -np.linalg.solve(M3, nuisance.outcome_scores.T).T
        if_eta = -np.linalg.solve(M4, nuisance.treatment_scores.T).T
    except np.linalg.LinAlgError:
        log.warning("singular score Jacobian; returning uncorrected scores")
        zeros_t = np.zeros_like(nuisance.outcome_scores)
        zeros_e = np.zeros_like(nuisance.treatment_scores)
        return IFCorrection(scores.copy(), M1, M2, M3, M4, zeros_t, zeros_e, False)
    corrected = scores - if_eta @ M1 + if_theta @ M2
    return IFCorrection(corrected, M1, M2, M3, M4, if_theta, if_eta, True)

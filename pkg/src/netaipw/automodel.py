"""Auto-logistic nuisance models: feature maps, pseudo-likelihood fits, outcome means.

Features are declared by name:

``intercept``
    constant 1
``a_own`` / ``a_nbr``
    own treatment / number of treated nodes in ``N(i, K) \\ {i}``
``y_nbr``
    number of neighbors with ``Y = 1``
``l_own:k`` / ``l_nbr:k``
    covariate column ``k`` of the node / summed over its neighbors
``noise:k``
    column ``k`` of a noise matrix carried by the spec
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .chainsim import Dataset, expit
from .netgraph import Network

log = logging.getLogger(__name__)

TREATMENT_FEATURES = ("a_own", "a_nbr")


def _parse(name: str) -> tuple[str, int | None]:
    if ":" in name:
        kind, col = name.split(":", 1)
        return kind, int(col)
    return name, None


_KNOWN = {"intercept", "a_own", "a_nbr", "y_nbr", "l_own", "l_nbr", "noise"}


@dataclass(frozen=True, eq=False)
class ModelSpec:
    kind: str
    features: tuple[str, ...]
    K: int = 1
    noise: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("outcome", "treatment"):
            raise ValueError(f"kind must be 'outcome' or 'treatment', got {self.kind!r}")
        object.__setattr__(self, "features", tuple(self.features))
        if "intercept" not in self.features:
            raise ValueError("spec must include an intercept")
        if len(set(self.features)) != len(self.features):
            raise ValueError("duplicate feature names")
        for f in self.features:
            base, col = _parse(f)
            if base not in _KNOWN:
                raise ValueError(f"unknown feature {f!r}")
            if base in ("l_own", "l_nbr", "noise") and col is None:
                raise ValueError(f"feature {f!r} needs a column index")
            if base == "noise" and (self.noise is None or col >= self.noise.shape[1]):
                raise ValueError(f"feature {f!r} has no backing noise column")
        if self.kind == "treatment" and any(f in ("a_own", "y_nbr") for f in self.features):
            raise ValueError("treatment spec cannot use own treatment or outcomes")
        if self.K < 1:
            raise ValueError("K must be >= 1")

    @property
    def dim(self) -> int:
        return len(self.features)

    def index(self, name: str) -> int | None:
        try:
            return self.features.index(name)
        except ValueError:
            return None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "features": list(self.features), "K": self.K}


def outcome_spec(n_cov: int = 3, K: int = 1) -> ModelSpec:
    """Outcome features in the simulator's theta order."""
    feats = ["intercept", "a_own", "a_nbr"]
    for k in range(n_cov):
        feats += [f"l_own:{k}", f"l_nbr:{k}"]
    return ModelSpec("outcome", tuple(feats + ["y_nbr"]), K)


def treatment_spec(n_cov: int = 3, K: int = 1) -> ModelSpec:
    """Treatment features in the simulator's eta order."""
    feats = ["intercept"]
    for k in range(n_cov):
        feats += [f"l_own:{k}", f"l_nbr:{k}"]
    return ModelSpec("treatment", tuple(feats + ["a_nbr"]), K)


def with_noise_covariates(spec: ModelSpec, n: int, rng) -> ModelSpec:
    """Swap every covariate-derived feature for an independent Bern(0.5) column."""
    rng = np.random.default_rng(rng)
    cov = [f for f in spec.features if _parse(f)[0] in ("l_own", "l_nbr")]
    noise = (rng.random((n, len(cov))) < 0.5).astype(float)
    feats, q = [], 0
    for f in spec.features:
        if _parse(f)[0] in ("l_own", "l_nbr"):
            feats.append(f"noise:{q}")
            q += 1
        else:
            feats.append(f)
    return ModelSpec(spec.kind, tuple(feats), spec.K, noise)


# -- design construction -------------------------------------------------------

def _check(net: Network, data: Dataset, spec: ModelSpec) -> None:
    data.check_network(net)
    for f in spec.features:
        base, col = _parse(f)
        if base in ("l_own", "l_nbr") and col >= data.L.shape[1]:
            raise ValueError(f"feature {f!r} needs covariate column {col}, data has "
                             f"{data.L.shape[1]}")
    if spec.noise is not None and spec.noise.shape[0] != net.n:
        raise ValueError("noise matrix row count does not match the network")


def build_features(net: Network, data: Dataset, spec: ModelSpec, i: int,
                   a_override: Mapping[int, int] | None = None) -> np.ndarray:
    """Feature row of node ``i`` computed directly from its BFS neighborhood.

    ``a_override`` replaces treatments of the listed nodes.
    """
    _check(net, data, spec)
    nbrs = [j for j in net.distances_from(i, spec.K) if j != i]
    A = data.A
    if a_override:
        def a(j):
            return a_override.get(j, A[j])
    else:
        def a(j):
            return A[j]
    row = np.empty(spec.dim)
    for c, f in enumerate(spec.features):
        base, col = _parse(f)
        if base == "intercept":
            row[c] = 1.0
        elif base == "a_own":
            row[c] = a(i)
        elif base == "a_nbr":
            row[c] = sum(float(a(j)) for j in nbrs)
        elif base == "y_nbr":
            row[c] = sum(float(data.Y[j]) for j in nbrs)
        elif base == "l_own":
            row[c] = data.L[i, col]
        elif base == "l_nbr":
            row[c] = sum(float(data.L[j, col]) for j in nbrs)
        else:
            row[c] = spec.noise[i, col]
    return row


def build_design(net: Network, data: Dataset, spec: ModelSpec) -> np.ndarray:
    """All feature rows at once via sparse neighbor sums."""
    _check(net, data, spec)
    adj = net.khop_matrix(spec.K)
    X = np.empty((net.n, spec.dim))
    L = np.asarray(data.L, dtype=float)
    Lsum = adj @ L
    for c, f in enumerate(spec.features):
        base, col = _parse(f)
        if base == "intercept":
            X[:, c] = 1.0
        elif base == "a_own":
            X[:, c] = data.A
        elif base == "a_nbr":
            X[:, c] = adj @ data.A.astype(float)
        elif base == "y_nbr":
            X[:, c] = adj @ data.Y.astype(float)
        elif base == "l_own":
            X[:, c] = L[:, col]
        elif base == "l_nbr":
            X[:, c] = Lsum[:, col]
        else:
            X[:, c] = spec.noise[:, col]
    return X


# -- fitting -----------------------------------------------------------------

@dataclass(frozen=True)
class LogisticFit:
    coef: np.ndarray
    converged: bool
    separated: bool
    ridge: bool
    n_iter: int
    grad_max: float


def _loglik(X, y, b):
    z = X @ b
    return float(np.mean(y * z - np.logaddexp(0.0, z)))


def fit_logistic_pl(X, y, max_iter: int = 100, tol: float = 1e-8) -> LogisticFit:
    """Maximize the mean logistic log-likelihood by damped Newton steps.

    Rank-deficient designs get a 1e-8 ridge on the Newton system only, so the
    returned point still solves the unpenalized score equations on the
    identified directions.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if y.shape != (n,):
        raise ValueError("labels must align with design rows")
    if n < d:
        raise ValueError(f"need at least {d} rows, got {n}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    ridge = bool(np.linalg.matrix_rank(X) < d)
    if ridge:
        log.warning("rank-deficient design (%d columns); applying 1e-8 ridge", d)
    b = np.zeros(d)
    ll = _loglik(X, y, b)
    converged = False
    steps = 0
    while steps < max_iter:
        p = expit(X @ b)
        g = X.T @ (y - p) / n
        if np.max(np.abs(g)) < tol:
            converged = True
            break
        H = (X * (p * (1 - p))[:, None]).T @ X / n
        if ridge:
            H = H + 1e-8 * np.eye(d)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H + 1e-8 * np.eye(d), g, rcond=None)[0]
        t = 1.0
        while t > 1e-10:
            cand = b + t * step
            ll_c = _loglik(X, y, cand)
            if ll_c >= ll:
                break
            t *= 0.5
        else:
            break  # no ascent direction left
        b, ll = cand, ll_c
        steps += 1
    g = X.T @ (y - expit(X @ b)) / n
    grad_max = float(np.max(np.abs(g)))
    if not converged and grad_max < tol:
        converged = True
    # fitted probabilities pinned at 0/1 mean the optimum is at infinity
    separated = bool(y.min() == y.max() or np.max(np.abs(X @ b)) > 15.0)
    if separated:
        log.warning("logistic fit hit (quasi-)separation; returning best iterate")
        converged = False
    return LogisticFit(b, converged, separated, ridge, steps, grad_max)


@dataclass(frozen=True, eq=False)
class FittedNuisance:
    theta_hat: np.ndarray
    eta_hat: np.ndarray
    outcome_spec: ModelSpec
    treatment_spec: ModelSpec
    outcome_fit: LogisticFit
    treatment_fit: LogisticFit
    outcome_design: np.ndarray = field(repr=False)
    treatment_design: np.ndarray = field(repr=False)
    outcome_scores: np.ndarray = field(repr=False)
    treatment_scores: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.theta_hat.shape != (self.outcome_spec.dim,):
            raise ValueError("theta_hat length does not match the outcome spec")
        if self.eta_hat.shape != (self.treatment_spec.dim,):
            raise ValueError("eta_hat length does not match the treatment spec")

    @property
    def converged(self) -> dict:
        return {"outcome": self.outcome_fit.converged, "treatment": self.treatment_fit.converged}

    def summary(self) -> dict:
        return {
            "outcome": {"features": list(self.outcome_spec.features),
                        "coef": self.theta_hat.tolist(),
                        "converged": self.outcome_fit.converged,
                        "ridge": self.outcome_fit.ridge,
                        "separated": self.outcome_fit.separated},
            "treatment": {"features": list(self.treatment_spec.features),
                          "coef": self.eta_hat.tolist(),
                          "converged": self.treatment_fit.converged,
                          "ridge": self.treatment_fit.ridge,
                          "separated": self.treatment_fit.separated},
        }


def score_vectors(X: np.ndarray, y: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """Per-row logistic scores ``(y_i - p_i) x_i``."""
    return (np.asarray(y, float) - expit(X @ coef))[:, None] * X


def nuisance_from_coefficients(net: Network, data: Dataset, theta, eta,
                               out_spec: ModelSpec, trt_spec: ModelSpec) -> FittedNuisance:
    """Wrap externally chosen coefficients (e.g. the truth) as a nuisance object."""
    theta = np.asarray(theta, dtype=float)
    eta = np.asarray(eta, dtype=float)
    Xy = build_design(net, data, out_spec)
    Xa = build_design(net, data, trt_spec)
    gy = score_vectors(Xy, data.Y, theta)
    ga = score_vectors(Xa, data.A, eta)
    fy = LogisticFit(theta, False, False, False, 0, float(np.abs(gy.mean(0)).max()))
    fa = LogisticFit(eta, False, False, False, 0, float(np.abs(ga.mean(0)).max()))
    return FittedNuisance(theta, eta, out_spec, trt_spec, fy, fa, Xy, Xa, gy, ga)


def fit_nuisance(net: Network, data: Dataset, out_spec: ModelSpec,
                 trt_spec: ModelSpec) -> FittedNuisance:
    """Pooled pseudo-likelihood fits of the outcome and treatment auto-models."""
    Xy = build_design(net, data, out_spec)
    Xa = build_design(net, data, trt_spec)
    fy = fit_logistic_pl(Xy, data.Y)
    fa = fit_logistic_pl(Xa, data.A)
    return FittedNuisance(fy.coef, fa.coef, out_spec, trt_spec, fy, fa, Xy, Xa,
                          score_vectors(Xy, data.Y, fy.coef),
                          score_vectors(Xa, data.A, fa.coef))


# -- outcome means under hypothetical treatments -------------------------------

def outcome_offset(X: np.ndarray, theta, spec: ModelSpec) -> np.ndarray:
    """Linear predictor with every treatment feature zeroed."""
    theta = np.asarray(theta, dtype=float)
    mask = np.array([f not in TREATMENT_FEATURES for f in spec.features])
    return X[:, mask] @ theta[mask]


def treatment_coefficients(theta, spec: ModelSpec) -> tuple[float, float]:
    """(own, neighbor-count) treatment coefficients, 0 when the feature is absent."""
    own = spec.index("a_own")
    nbr = spec.index("a_nbr")
    return (float(theta[own]) if own is not None else 0.0,
            float(theta[nbr]) if nbr is not None else 0.0)


def eval_outcome_mean(net: Network, data: Dataset, theta_hat, spec: ModelSpec, i: int,
                      a_local: Mapping[int, int]) -> float:
    """``expit(theta . x_i)`` with treatments on ``N(i, K)`` taken from ``a_local``."""
    if spec.kind != "outcome":
        raise ValueError("eval_outcome_mean needs an outcome spec")
    missing = set(net.distances_from(i, spec.K)) - set(a_local)
    if missing:
        raise ValueError(f"a_local misses nodes {sorted(missing)}")
    x = build_features(net, data, spec, i, a_override=a_local)
    return float(expit(x @ np.asarray(theta_hat, dtype=float)))


def local_nodes(net: Network, i: int, K: int) -> np.ndarray:
    """Sorted node ids of ``N(i, K)``."""
    return np.array(sorted(net.distances_from(i, K)), dtype=np.int64)


def as_assignment(nodes: Sequence[int], values: Sequence[int]) -> dict[int, int]:
    return {int(j): int(v) for j, v in zip(nodes, values)}

"""Gibbs simulator for the binary chain-graph model (covariates -> treatments -> outcomes).

Within each layer nodes interact with everyone in ``N(i, K) \\ {i}``. All
sweeps visit nodes in ascending order; covariates of a node are updated in
column order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import _kernels
from .netgraph import Network

N_COV = 3

# The benchmark outcome coefficients are a list of ten numbers. "shifted" reads
# them in order as intercept, own treatment, treated-neighbor count, ...,
# neighbor outcome; "zero_intercept" prepends a zero intercept and drops the
# last entry.
OUTCOME_MAPPINGS = ("shifted", "zero_intercept")


def expit(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class SimParams:
    """Parameters of the chain-graph data-generating process.

    eta: intercept, then (own, neighbor-sum) pairs for each covariate, then
    the treated-neighbor coupling. theta: intercept, own treatment,
    treated-neighbor count, (own, neighbor-sum) pairs per covariate,
    neighbor-outcome coupling.
    """

    tau: np.ndarray
    rho: np.ndarray
    nu: np.ndarray
    eta: np.ndarray
    theta: np.ndarray
    K: int = 1

    def __post_init__(self):
        for name, shape in [("tau", (N_COV,)), ("rho", (N_COV, N_COV)), ("nu", (N_COV, N_COV)),
                            ("eta", (2 * N_COV + 2,)), ("theta", (2 * N_COV + 4,))]:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, arr)
        rho = self.rho.copy()
        np.fill_diagonal(rho, 0.0)
        if not np.allclose(rho, rho.T):
            raise ValueError("rho must be symmetric")
        object.__setattr__(self, "rho", rho)
        if self.K < 1:
            raise ValueError("K must be >= 1")

    @classmethod
    def benchmark(cls, m: int, outcome_mapping: str = "shifted", K: int = 1) -> "SimParams":
        """Benchmark simulation design; ``m`` scales the intercept and own-treatment effect."""
        tau = [-1.0, 0.5, -0.5]
        rho = [[0.0, 0.1, 0.2], [0.1, 0.0, 0.1], [0.2, 0.1, 0.0]]
        nu = [[0.1, 0.0, 0.0], [0.1, 0.0, 0.0], [0.1, 0.0, 0.0]]
        eta = [-1.0, 2.0, 0.1, -2.0, 0.1, 2.0, 0.1, 0.1]
        panel_c = [-m, -2.0 * m, 2.0, 2.0, 0.1, -1.0, 0.1, 2.0, 0.1, 0.0]
        if outcome_mapping == "shifted":
            theta = panel_c
        elif outcome_mapping == "zero_intercept":
            theta = [0.0] + panel_c[:-1]
        else:
            raise ValueError(f"unknown outcome_mapping {outcome_mapping!r}")
        return cls(np.array(tau), np.array(rho), np.array(nu), np.array(eta),
                   np.array(theta, dtype=float), K)

    def to_dict(self) -> dict:
        out = {f"tau{k + 1}": float(self.tau[k]) for k in range(N_COV)}
        for k in range(N_COV):
            for l in range(k + 1, N_COV):
                out[f"rho{k + 1}{l + 1}"] = float(self.rho[k, l])
        for k in range(N_COV):
            for l in range(N_COV):
                out[f"nu{k + 1}{l + 1}"] = float(self.nu[k, l])
        out.update({f"eta{k}": float(v) for k, v in enumerate(self.eta)})
        out.update({f"theta{k}": float(v) for k, v in enumerate(self.theta)})
        out["K"] = self.K
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SimParams":
        tau = [d[f"tau{k + 1}"] for k in range(N_COV)]
        rho = np.zeros((N_COV, N_COV))
        for k in range(N_COV):
            for l in range(k + 1, N_COV):
                rho[k, l] = rho[l, k] = d[f"rho{k + 1}{l + 1}"]
        nu = [[d[f"nu{k + 1}{l + 1}"] for l in range(N_COV)] for k in range(N_COV)]
        eta = [d[f"eta{k}"] for k in range(2 * N_COV + 2)]
        theta = [d[f"theta{k}"] for k in range(2 * N_COV + 4)]
        return cls(np.array(tau, float), rho, np.array(nu, float), np.array(eta, float),
                   np.array(theta, float), int(d.get("K", 1)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "SimParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Dataset:
    """Observed ``(Y, A, L)`` for every node of one network."""

    Y: np.ndarray
    A: np.ndarray
    L: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        L = np.asarray(self.L)
        if L.ndim == 1:
            L = L[:, None]
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "Y", np.asarray(self.Y))
        object.__setattr__(self, "A", np.asarray(self.A))
        if not (self.Y.shape == self.A.shape == (L.shape[0],)):
            raise ValueError("Y, A and L must be aligned on the same node count")

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    def check_network(self, net: Network) -> None:
        if net.n != self.n:
            raise ValueError(f"dataset has {self.n} nodes, network has {net.n}")


def _csr(net: Network, K: int):
    mat = net.khop_matrix(K)
    return mat.indptr.astype(np.int64), mat.indices.astype(np.int64), mat


# -- conditional probabilities (vectorized, for checks and fitting) --------

def treatment_linear_static(net: Network, params: SimParams, L) -> np.ndarray:
    """Covariate part of the treatment logit, i.e. everything but the coupling."""
    _, _, adj = _csr(net, params.K)
    Lf = np.asarray(L, dtype=float)
    S = adj @ Lf
    eta = params.eta
    return eta[0] + Lf @ eta[1:2 * N_COV:2] + S @ eta[2:2 * N_COV + 1:2]


def outcome_linear_static(net: Network, params: SimParams, L, A) -> np.ndarray:
    """Outcome logit without the neighbor-outcome term."""
    _, _, adj = _csr(net, params.K)
    Lf = np.asarray(L, dtype=float)
    Af = np.asarray(A, dtype=float)
    S = adj @ Lf
    th = params.theta
    return (th[0] + th[1] * Af + th[2] * (adj @ Af)
            + Lf @ th[3:3 + 2 * N_COV:2] + S @ th[4:4 + 2 * N_COV:2])


def covariate_conditionals(net: Network, params: SimParams, L, i: int) -> np.ndarray:
    """P(L[i, k] = 1 | rest) for each covariate column k, at the current state."""
    _, _, adj = _csr(net, params.K)
    Lf = np.asarray(L, dtype=float)
    s = adj[i] @ Lf
    s = np.asarray(s).ravel()
    z = params.tau + params.rho @ Lf[i] + params.nu @ s
    return expit(z)


def treatment_conditionals(net: Network, params: SimParams, L, A) -> np.ndarray:
    _, _, adj = _csr(net, params.K)
    return expit(treatment_linear_static(net, params, L)
                 + params.eta[-1] * (adj @ np.asarray(A, dtype=float)))


def outcome_conditionals(net: Network, params: SimParams, L, A, Y) -> np.ndarray:
    _, _, adj = _csr(net, params.K)
    return expit(outcome_linear_static(net, params, L, A)
                 + params.theta[-1] * (adj @ np.asarray(Y, dtype=float)))


# -- sweeps ------------------------------------------------------------------

def gibbs_sweep_covariates(net: Network, params: SimParams, L: np.ndarray, rng) -> np.ndarray:
    """One sequential sweep over nodes x covariates, updating ``L`` in place."""
    if L.dtype != np.int8:
        raise TypeError("L must be an int8 array for in-place sweeps")
    indptr, indices, _ = _csr(net, params.K)
    u = rng.random(L.size)
    _kernels.covariate_sweep(L, indptr, indices, params.tau, params.rho, params.nu, u)
    return L


def gibbs_sweep_treatments(net: Network, params: SimParams, L, A: np.ndarray, rng) -> np.ndarray:
    indptr, indices, _ = _csr(net, params.K)
    static = treatment_linear_static(net, params, L)
    _kernels.autologistic_sweep(A, static, float(params.eta[-1]), indptr, indices,
                                rng.random(net.n))
    return A


def gibbs_sweep_outcomes(net: Network, params: SimParams, L, A, Y: np.ndarray, rng) -> np.ndarray:
    indptr, indices, _ = _csr(net, params.K)
    static = outcome_linear_static(net, params, L, A)
    _kernels.autologistic_sweep(Y, static, float(params.theta[-1]), indptr, indices,
                                rng.random(net.n))
    return Y


def simulate_stream(net: Network, params: SimParams, n_iter: int, burn_in: int,
                    seed=None, thin: int = 1) -> Iterator[Dataset]:
    """Yield one dataset snapshot per retained post-burn-in iteration.

    Every iteration is a covariate sweep, a treatment sweep and an outcome
    sweep. States start from independent fair coin flips.
    """
    if not (0 <= burn_in < n_iter):
        raise ValueError("need 0 <= burn_in < n_iter")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    rng = np.random.default_rng(seed)
    n = net.n
    L = (rng.random((n, N_COV)) < 0.5).astype(np.int8)
    A = (rng.random(n) < 0.5).astype(np.int8)
    Y = (rng.random(n) < 0.5).astype(np.int8)
    for it in range(n_iter):
        gibbs_sweep_covariates(net, params, L, rng)
        gibbs_sweep_treatments(net, params, L, A, rng)
        gibbs_sweep_outcomes(net, params, L, A, Y, rng)
        if it >= burn_in and (it - burn_in) % thin == 0:
            yield Dataset(Y.copy(), A.copy(), L.copy(), meta={"iteration": it})


# -- counterfactual outcomes ---------------------------------------------------

def counterfactual_draws(net: Network, offset, own_coef: float, nbr_coef: float,
                         y_coef: float, allocation, burn: int, keep: int,
                         replications: int, rng, K: int = 1):
    """Simulate the outcome layer under treatment vectors drawn from ``allocation``.

    The outcome logit is ``offset_i + own_coef * a_i + nbr_coef * sum_j a_j +
    y_coef * sum_j Y_j`` over ``N(i, K) \\ {i}``. Returns ``(alloc, means)``,
    both ``(replications, n)``: the drawn treatment vectors and per-node
    Rao-Blackwellized outcome means over the ``keep`` retained sweeps.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    if keep < 1:
        raise ValueError("keep must be >= 1")
    indptr, indices, adj = _csr(net, K)
    n = net.n
    offset = np.broadcast_to(np.asarray(offset, dtype=float), (n,))
    alloc = np.empty((replications, n), dtype=np.int8)
    means = np.empty((replications, n))
    for r in range(replications):
        a = np.asarray(allocation.draw(n, rng), dtype=np.int8)
        alloc[r] = a
        static = offset + own_coef * a + nbr_coef * (adj @ a.astype(float))
        y = (rng.random(n) < 0.5).astype(np.int8)
        u = rng.random((burn + keep) * n)
        means[r] = _kernels.autologistic_rb_mean(y, static, float(y_coef), indptr, indices,
                                                 burn, keep, u)
    return alloc, means


def counterfactual_outcome_mean(net: Network, theta, L, allocation, sweeps=(10, 10),
                                replications: int = 20, rng=None, K: int = 1) -> np.ndarray:
    """Per-node mean of ``Y_i(a)`` with ``a`` drawn from ``allocation``.

    ``theta`` follows the simulator's outcome layout; ``sweeps`` is
    ``(burn_in, retained)`` per replication.
    """
    rng = np.random.default_rng(rng)
    theta = np.asarray(theta, dtype=float)
    _, _, adj = _csr(net, K)
    Lf = np.asarray(L, dtype=float)
    offset = theta[0] + Lf @ theta[3:3 + 2 * N_COV:2] + (adj @ Lf) @ theta[4:4 + 2 * N_COV:2]
    burn, keep = sweeps
    _, means = counterfactual_draws(net, offset, theta[1], theta[2], theta[-1], allocation,
                                    burn, keep, replications, rng, K)
    return means.mean(axis=0)

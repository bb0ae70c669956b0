"""Brute-force reference computations for tiny graphs.

Written directly from the model definitions with plain edge lists, so they
share no code with the package beyond ``SimParams`` as a parameter holder.
"""

from __future__ import annotations

import itertools

import numpy as np

from netaipw.chainsim import SimParams


def expit(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def adjacency(n: int, edges) -> np.ndarray:
    M = np.zeros((n, n))
    for u, v in edges:
        M[u, v] = M[v, u] = 1.0
    return M


def bit_table(n_bits: int) -> np.ndarray:
    """Row s holds the binary digits of s, least significant first."""
    return ((np.arange(1 << n_bits)[:, None] >> np.arange(n_bits)) & 1).astype(np.int64)


def random_params(rng, y_coupling: float = 0.0) -> SimParams:
    tau = rng.uniform(-1, 1, 3)
    r = rng.uniform(-0.5, 0.5, 3)
    rho = np.array([[0, r[0], r[1]], [r[0], 0, r[2]], [r[1], r[2], 0]])
    nu = rng.uniform(-0.3, 0.3, (3, 3))
    eta = rng.uniform(-1, 1, 8)
    theta = rng.uniform(-1, 1, 10)
    theta[-1] = y_coupling
    return SimParams(tau, rho, nu, eta, theta)


def covariate_stationary_law(n: int, edges, params: SimParams, tol: float = 1e-15,
                             max_sweeps: int = 10_000) -> tuple[np.ndarray, np.ndarray]:
    """Stationary law of the ascending systematic-scan covariate Gibbs chain.

    Returns states of shape (2^(3n), n, 3) and their probabilities.
    """
    M = adjacency(n, edges)
    bits = bit_table(3 * n)
    states = bits.reshape(-1, n, 3)
    nbr_sums = np.einsum("ij,sjk->sik", M, states)
    v = np.full(bits.shape[0], 1.0 / bits.shape[0])
    for _ in range(max_sweeps):
        old = v.copy()
        for i in range(n):
            for k in range(3):
                z = (params.tau[k] + states[:, i, :] @ params.rho[k]
                     + nbr_sums[:, i, :] @ params.nu[k])
                p = expit(z)
                site = 1 << (3 * i + k)
                zero = np.flatnonzero(bits[:, 3 * i + k] == 0)
                one = zero + site
                mass = v[zero] + v[one]
                v[one] = mass * p[one]
                v[zero] = mass * (1 - p[zero])
        if np.abs(v - old).max() < tol:
            break
    return states, v


def ising_law(h: np.ndarray, M: np.ndarray, coupling: float) -> tuple[np.ndarray, np.ndarray]:
    """P(x) ∝ exp(x.h + coupling * sum_{u<v} M_uv x_u x_v) over all binary x."""
    X = bit_table(h.size)
    e = X @ h + coupling * 0.5 * np.einsum("si,ij,sj->s", X, M, X)
    p = np.exp(e - e.max())
    return X, p / p.sum()


def treatment_fields(M: np.ndarray, eta, L: np.ndarray) -> np.ndarray:
    S = M @ L
    return eta[0] + L @ eta[1:6:2] + S @ eta[2:7:2]


def outcome_logit(M: np.ndarray, theta, L: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Outcome logit without the neighbor-outcome term; ``A`` may hold one state per column."""
    S = M @ L
    cov = L @ theta[3:9:2] + S @ theta[4:9:2]
    if A.ndim == 2:
        cov = cov[:, None]
    return theta[0] + theta[1] * A + theta[2] * (M @ A) + cov


def treatment_law(M: np.ndarray, params: SimParams, L: np.ndarray):
    return ising_law(treatment_fields(M, params.eta, L), M, params.eta[-1])


def outcome_law(M: np.ndarray, params: SimParams, L: np.ndarray, A: np.ndarray):
    return ising_law(outcome_logit(M, params.theta, L, A), M, params.theta[-1])


def block_conditional(M: np.ndarray, eta, L: np.ndarray, A: np.ndarray, block) -> dict:
    """P(A_block = a | A outside, L) from the full treatment joint law."""
    X, p = ising_law(treatment_fields(M, eta, L), M, eta[-1])
    block = list(block)
    outside = [j for j in range(M.shape[0]) if j not in block]
    keep = np.all(X[:, outside] == A[outside], axis=1)
    p = p * keep
    p /= p.sum()
    out = {}
    for a in itertools.product((0, 1), repeat=len(block)):
        sel = np.all(X[:, block] == np.array(a), axis=1)
        out[a] = float(p[sel].sum())
    return out


def _site_update(v: np.ndarray, codes: np.ndarray, bit: int, prob: np.ndarray) -> np.ndarray:
    zero = np.flatnonzero(((codes >> bit) & 1) == 0)
    one = zero + (1 << bit)
    mass = v[zero] + v[one]
    out = v.copy()
    out[one] = mass * prob[one]
    out[zero] = mass * (1 - prob[zero])
    return out


def layered_chain_stationary_law(n: int, edges, params: SimParams, tol: float = 1e-15,
                                 max_sweeps: int = 10_000) -> np.ndarray:
    """Stationary law of one covariate sweep, one treatment sweep, one outcome sweep.

    States are coded with outcome bits 0..n-1, treatment bits n..2n-1 and
    covariate bit ``2n + 3i + k`` for ``L[i, k]``.
    """
    M = adjacency(n, edges)
    codes = np.arange(1 << (5 * n))
    Y = (codes[:, None] >> np.arange(n)) & 1
    A = (codes[:, None] >> (n + np.arange(n))) & 1
    L = ((codes[:, None] >> (2 * n + np.arange(3 * n))) & 1).reshape(-1, n, 3)
    S = np.einsum("ij,sjk->sik", M, L)
    th, eta = params.theta, params.eta
    v = np.full(codes.size, 1.0 / codes.size)
    for _ in range(max_sweeps):
        old = v
        for i in range(n):
            for k in range(3):
                z = params.tau[k] + L[:, i, :] @ params.rho[k] + S[:, i, :] @ params.nu[k]
                v = _site_update(v, codes, 2 * n + 3 * i + k, expit(z))
        for i in range(n):
            z = (eta[0] + L[:, i, :] @ eta[1:6:2] + S[:, i, :] @ eta[2:7:2]
                 + eta[7] * (A @ M[i]))
            v = _site_update(v, codes, n + i, expit(z))
        for i in range(n):
            z = (th[0] + th[1] * A[:, i] + th[2] * (A @ M[i]) + L[:, i, :] @ th[3:9:2]
                 + S[:, i, :] @ th[4:9:2] + th[9] * (Y @ M[i]))
            v = _site_update(v, codes, i, expit(z))
        if np.abs(v - old).max() < tol:
            break
    return v


def chain_graph_joint(n: int, edges, params: SimParams) -> np.ndarray:
    """p(L) P(A | L) P(Y | A, L) in the coding of :func:`layered_chain_stationary_law`,
    with p(L) the stationary law of the covariate chain."""
    M = adjacency(n, edges)
    states, law_l = covariate_stationary_law(n, edges, params)
    out = np.zeros(1 << (5 * n))
    for s, (L, pl) in enumerate(zip(states, law_l)):
        A_states, pa = treatment_law(M, params, L)
        for a_code, (A, qa) in enumerate(zip(A_states, pa)):
            _, py = outcome_law(M, params, L, A)
            out[(s << (2 * n)) + (a_code << n) + np.arange(1 << n)] = pl * qa * py
    return out

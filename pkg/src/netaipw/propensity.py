"""Joint neighborhood propensities of the auto-logistic treatment layer.

With per-node fields ``G_k`` (everything in the treatment logit except the
treated-neighbor term) and coupling ``c``, the treatments on a block ``S``
given the treatments outside it follow

    P(a_S) ∝ exp( sum_{k in S} a_k (G_k + c * sum_{j ~ k, j not in S} A_j)
                  + c * sum_{k < j in S, j ~ k} a_k a_j )

where ``j ~ k`` means ``1 <= d(j, k) <= K`` for the treatment model's radius.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping

import numpy as np

from . import _kernels
from .automodel import ModelSpec, build_design, local_nodes
from .chainsim import Dataset
from .netgraph import Network

log = logging.getLogger(__name__)

ENUM_CAP = 20
CLIP_FLOOR = 1e-6


class EnumerationCapError(ValueError):
    """Block too large for exact enumeration; use the Gibbs estimate instead."""


@dataclass(frozen=True, eq=False)
class EnergySpec:
    """Treatment-model coefficients split into node fields and the pair coupling."""

    eta_hat: np.ndarray
    spec: ModelSpec

    def __post_init__(self):
        object.__setattr__(self, "eta_hat", np.asarray(self.eta_hat, dtype=float))
        if self.spec.kind != "treatment":
            raise ValueError("energy needs a treatment spec")
        if self.eta_hat.shape != (self.spec.dim,):
            raise ValueError("eta_hat length does not match the treatment spec")

    @property
    def K(self) -> int:
        return self.spec.K

    @property
    def coupling(self) -> float:
        c = self.spec.index("a_nbr")
        return 0.0 if c is None else float(self.eta_hat[c])

    @property
    def static_mask(self) -> np.ndarray:
        return np.array([f != "a_nbr" for f in self.spec.features])

    def fields(self, net: Network, L, A_obs) -> np.ndarray:
        """``G_k`` for every node."""
        data = Dataset(np.zeros(net.n, dtype=np.int8), np.asarray(A_obs), L)
        X = build_design(net, data, self.spec)
        return self.fields_from_design(X)

    def fields_from_design(self, X: np.ndarray) -> np.ndarray:
        mask = self.static_mask
        return X[:, mask] @ self.eta_hat[mask]


@dataclass(frozen=True)
class AllocationPolicy:
    """Hypothetical treatment law: iid Bernoulli(alpha), a fixed vector, or
    Bernoulli(alpha) with some coordinates pinned."""

    kind: str = "bernoulli"
    alpha: float = 0.5
    vector: tuple[int, ...] | None = None
    pins: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("bernoulli", "fixed", "pinned"):
            raise ValueError(f"unknown allocation kind {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.kind == "fixed" and self.vector is None:
            raise ValueError("fixed allocation needs a vector")
        for j, v in self.pins.items():
            if j < 0 or v not in (0, 1):
                raise ValueError(f"bad pin {j}->{v}")
        if self.kind != "pinned" and self.pins:
            raise ValueError("pins are only meaningful for kind='pinned'")

    @classmethod
    def bernoulli(cls, alpha: float) -> "AllocationPolicy":
        return cls("bernoulli", alpha)

    @classmethod
    def pinned(cls, alpha: float, pins: Mapping[int, int]) -> "AllocationPolicy":
        return cls("pinned", alpha, pins=dict(pins))

    @classmethod
    def fixed(cls, vector) -> "AllocationPolicy":
        return cls("fixed", 0.0, vector=tuple(int(v) for v in vector))

    def draw(self, n: int, rng) -> np.ndarray:
        if self.kind == "fixed":
            if len(self.vector) != n:
                raise ValueError("fixed vector length does not match n")
            return np.array(self.vector, dtype=np.int8)
        a = (rng.random(n) < self.alpha).astype(np.int8)
        for j, v in self.pins.items():
            if j >= n:
                raise ValueError(f"pin {j} outside node range")
            a[j] = v
        return a


def allocation_weight(a_local: Mapping[int, int], policy: AllocationPolicy) -> float:
    """Probability the policy assigns exactly ``a_local`` on its nodes."""
    w = 1.0
    for j, v in a_local.items():
        if policy.kind == "fixed":
            if j >= len(policy.vector):
                raise ValueError(f"node {j} not covered by the fixed vector")
            if policy.vector[j] != v:
                return 0.0
        elif j in policy.pins:
            if policy.pins[j] != v:
                return 0.0
        else:
            w *= policy.alpha if v else 1.0 - policy.alpha
    return w


# -- single-block routes -------------------------------------------------------

@dataclass(frozen=True)
class Block:
    nodes: np.ndarray       # sorted global ids
    h: np.ndarray           # node fields including clamped outside treatments
    pairs: np.ndarray       # (p, 2) local index pairs
    coupling: float


def local_block(net: Network, energy: EnergySpec, L, A_obs, i: int,
                K: int | None = None, G: np.ndarray | None = None) -> Block:
    K = energy.K if K is None else K
    nodes = local_nodes(net, i, K)
    pos = {int(j): t for t, j in enumerate(nodes)}
    if G is None:
        G = energy.fields(net, L, A_obs)
    A_obs = np.asarray(A_obs)
    c = energy.coupling
    h = np.empty(nodes.size)
    pairs = []
    for t, k in enumerate(nodes):
        outside = 0.0
        for j, d in net.distances_from(int(k), energy.K).items():
            if d == 0:
                continue
            if j in pos:
                if pos[j] > t:
                    pairs.append((t, pos[j]))
            else:
                outside += A_obs[j]
        h[t] = G[k] + c * outside
    return Block(nodes, h, np.array(pairs, dtype=np.int64).reshape(-1, 2), c)


def block_logprobs(block: Block, cap: int = ENUM_CAP) -> tuple[np.ndarray, np.ndarray]:
    """All ``2^m`` configurations (rows, bit ``t`` = node ``t``) and their log-probabilities."""
    m = block.nodes.size
    if m > cap:
        raise EnumerationCapError(f"block of {m} nodes exceeds the enumeration cap {cap}")
    configs = ((np.arange(1 << m)[:, None] >> np.arange(m)) & 1).astype(np.int8)
    energy = configs @ block.h
    if block.pairs.size:
        energy = energy + block.coupling * (
            configs[:, block.pairs[:, 0]] * configs[:, block.pairs[:, 1]]).sum(axis=1)
    top = energy.max()
    return configs, energy - (top + np.log(np.exp(energy - top).sum()))


def _config_code(block: Block, a_target: Mapping[int, int]) -> int:
    keys = set(a_target)
    expected = set(int(j) for j in block.nodes)
    if keys != expected:
        raise ValueError(f"assignment must cover exactly nodes {sorted(expected)}")
    code = 0
    for t, j in enumerate(block.nodes):
        if a_target[int(j)] not in (0, 1):
            raise ValueError("assignments must be binary")
        code |= int(a_target[int(j)]) << t
    return code


def joint_propensity_exact(net: Network, energy: EnergySpec, L, A_obs, i: int,
                           a_target: Mapping[int, int], K: int | None = None,
                           cap: int = ENUM_CAP) -> float:
    """P(A on N(i, K) = a_target | treatments outside, L), by enumeration."""
    block = local_block(net, energy, L, A_obs, i, K)
    _, logp = block_logprobs(block, cap)
    return float(np.exp(logp[_config_code(block, a_target)]))


@dataclass(frozen=True)
class MCEstimate:
    value: float
    se: float
    reliable: bool


def joint_propensity_mc(net: Network, energy: EnergySpec, L, A_obs, i: int,
                        a_target: Mapping[int, int], sweeps: int, rng,
                        K: int | None = None, burn_in: int = 100,
                        n_batches: int = 20, G: np.ndarray | None = None) -> MCEstimate:
    """Gibbs frequency of ``a_target`` with the outside clamped at ``A_obs``.

    The standard error is the batch-means SE, never below the iid binomial
    SE. A target never visited gets value 0, a rule-of-three error bar and
    ``reliable=False``. Precomputed node fields ``G`` make ``L`` unused.
    """
    if sweeps <= 0:
        raise ValueError("sweeps must be positive")
    rng = np.random.default_rng(rng)
    block = local_block(net, energy, L, A_obs, i, K, G=G)
    m = block.nodes.size
    target = np.array([a_target[int(j)] for j in block.nodes], dtype=np.int8)
    if set(a_target) != set(int(j) for j in block.nodes):
        raise ValueError("assignment must cover exactly the block nodes")
    nbr = [[] for _ in range(m)]
    for u, v in block.pairs:
        nbr[u].append(v)
        nbr[v].append(u)
    ptr = np.zeros(m + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(x) for x in nbr])
    idx = np.array([v for x in nbr for v in x], dtype=np.int64)
    x0 = np.asarray(A_obs)[block.nodes].astype(np.int8)
    total = burn_in + sweeps
    hits = _kernels.local_gibbs_hits(block.h, ptr, idx, block.coupling, target, x0, total,
                                     rng.random(total * m))[burn_in:].astype(float)
    p = hits.mean()
    if p == 0.0:
        return MCEstimate(0.0, 3.0 / sweeps, False)
    se = math.sqrt(p * (1 - p) / sweeps)
    nb = min(n_batches, sweeps // 2)
    if nb >= 2:
        means = np.array([c.mean() for c in np.array_split(hits, nb)])
        se = max(se, means.std(ddof=1) / math.sqrt(nb))
    return MCEstimate(float(p), float(se), True)


def exposure_distribution(net: Network, energy: EnergySpec, L, A_obs, i: int,
                          T: Callable[[Mapping[int, int]], Hashable],
                          K: int | None = None, cap: int = ENUM_CAP) -> dict:
    """Law of the exposure ``T(a)`` for ``a`` drawn from the block's joint law."""
    block = local_block(net, energy, L, A_obs, i, K)
    configs, logp = block_logprobs(block, cap)
    out: dict = {}
    nodes = [int(j) for j in block.nodes]
    for row, lp in zip(configs, logp):
        t = T(dict(zip(nodes, row.tolist())))
        out.setdefault(t, []).append(lp)
    return {t: float(np.sum(np.exp(v))) for t, v in out.items()}


def exposure_propensity(net: Network, energy: EnergySpec, L, A_obs, i: int,
                        T: Callable[[Mapping[int, int]], Hashable], t: Hashable,
                        K: int | None = None, cap: int = ENUM_CAP) -> float:
    """Total joint propensity of block configurations mapped to ``t`` (0 if none)."""
    return exposure_distribution(net, energy, L, A_obs, i, T, K, cap).get(t, 0.0)


def own_and_count(net: Network, i: int) -> Callable[[Mapping[int, int]], tuple[int, int]]:
    """Exposure map ``a -> (a_i, treated count among the direct neighbors of i)``."""
    nbrs = [int(j) for j in net.neighbors(i)]

    def T(a: Mapping[int, int]) -> tuple[int, int]:
        return int(a[i]), int(sum(a[j] for j in nbrs))

    return T


def identity_exposure(a: Mapping[int, int]) -> tuple:
    return tuple(sorted(a.items()))


# -- batched route over all nodes ------------------------------------------------

@dataclass(frozen=True)
class BlockLayout:
    """Flattened ``N(i, K)`` blocks for every node and their internal pairs."""

    s_ptr: np.ndarray
    s_idx: np.ndarray
    p_ptr: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.s_ptr)


def block_layout(net: Network, K: int, pair_radius: int) -> BlockLayout:
    key = ("blocks", K, pair_radius)
    if key in net._memo:
        return net._memo[key]
    pair_adj = net.khop_matrix(pair_radius)
    s_ptr, s_idx, p_ptr, pi, pj = [0], [], [0], [], []
    for i in range(net.n):
        nodes = local_nodes(net, i, K)
        pos = {int(j): t for t, j in enumerate(nodes)}
        for t, k in enumerate(nodes):
            for j in pair_adj.indices[pair_adj.indptr[k]:pair_adj.indptr[k + 1]]:
                u = pos.get(int(j))
                if u is not None and u > t:
                    pi.append(t)
                    pj.append(u)
        s_idx.extend(nodes.tolist())
        s_ptr.append(len(s_idx))
        p_ptr.append(len(pi))
    layout = BlockLayout(*(np.asarray(x, dtype=np.int64) for x in (s_ptr, s_idx, p_ptr, pi, pj)))
    net._memo[key] = layout
    return layout


@dataclass(frozen=True, eq=False)
class ObservedPropensities:
    """Joint propensity of the observed block configuration, node by node."""

    layout: BlockLayout
    log_pi: np.ndarray
    marginals: np.ndarray     # aligned with layout.s_idx
    boundary: np.ndarray      # outside treated pair-neighbor counts, aligned with s_idx
    expected_pairs: np.ndarray
    observed_pairs: np.ndarray
    mc_se: np.ndarray         # 0 where exact
    above_cap: np.ndarray

    @property
    def pi(self) -> np.ndarray:
        return np.exp(self.log_pi)


def observed_propensities(net: Network, energy: EnergySpec, X_treat: np.ndarray, A_obs,
                          K: int, cap: int = ENUM_CAP, mc_sweeps: int = 5000,
                          rng=None) -> ObservedPropensities:
    """``pi_i(A_obs on N(i, K))`` for every node in one compiled pass.

    Blocks above ``cap`` fall back to the Gibbs estimate with a warning.
    """
    layout = block_layout(net, K, energy.K)
    A = np.asarray(A_obs).astype(np.int64)
    G = energy.fields_from_design(X_treat)
    T = net.khop_matrix(energy.K) @ A.astype(float)
    logp, marg, bnd, epair, opairs = _kernels.observed_block_logprob(
        layout.s_ptr, layout.s_idx, layout.p_ptr, layout.pair_i, layout.pair_j,
        G, T, A, energy.coupling, cap)
    above = layout.sizes > cap
    mc_se = np.zeros(net.n)
    if above.any():
        log.warning("%d blocks exceed the enumeration cap; using Gibbs estimates",
                    int(above.sum()))
        rng = np.random.default_rng(rng)
        for i in np.flatnonzero(above):
            nodes = layout.s_idx[layout.s_ptr[i]:layout.s_ptr[i + 1]]
            est = joint_propensity_mc(net, energy, None, A, int(i),
                                      {int(j): int(A[j]) for j in nodes}, mc_sweeps, rng, K,
                                      G=G)
            logp[i] = np.log(est.value) if est.value > 0 else -np.inf
            mc_se[i] = est.se
    return ObservedPropensities(layout, logp, marg, bnd, epair, opairs, mc_se, above)


def log_propensity_gradient(obs: ObservedPropensities, X_treat: np.ndarray, A_obs,
                            energy: EnergySpec) -> np.ndarray:
    """``d log pi_i(A_obs) / d eta`` for every node, ``(n, d)``.

    Field coefficients give ``sum_k (A_k - E a_k) x_k``; the coupling gives
    the same with the outside count plus observed-minus-expected pair count.
    """
    lay = obs.layout
    A = np.asarray(A_obs, dtype=float)
    resid = A[lay.s_idx] - obs.marginals
    starts = lay.s_ptr[:-1]
    n, d = X_treat.shape[0], energy.spec.dim
    grad = np.zeros((n, d))
    nonempty = lay.sizes > 0

    def block_sum(v):
        out = np.zeros(n)
        out[nonempty] = np.add.reduceat(v, starts[nonempty])
        return out

    for c, f in enumerate(energy.spec.features):
        if f == "a_nbr":
            grad[:, c] = block_sum(resid * obs.boundary) + obs.observed_pairs - obs.expected_pairs
        else:
            grad[:, c] = block_sum(resid * X_treat[lay.s_idx, c])
    return grad


def clip_propensity(pi: np.ndarray, floor: float = CLIP_FLOOR) -> tuple[np.ndarray, np.ndarray]:
    """Raise values below ``floor`` to it; returns ``(clipped, mask)``."""
    pi = np.asarray(pi, dtype=float)
    mask = pi < floor
    return np.where(mask, floor, pi), mask

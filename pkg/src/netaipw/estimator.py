"""Augmented IPW unit scores, allocation-averaged effect estimates and the
outcome-model-only (Auto-G) baseline."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping

import numpy as np
from scipy.stats import binom

from .automodel import (FittedNuisance, TREATMENT_FEATURES, eval_outcome_mean, local_nodes,
                        treatment_coefficients)
from .chainsim import Dataset, counterfactual_draws, expit
from .netgraph import Network
from .propensity import (CLIP_FLOOR, ENUM_CAP, AllocationPolicy, EnergySpec,
                         allocation_weight, exposure_propensity, joint_propensity_exact,
                         log_propensity_gradient, observed_propensities)

log = logging.getLogger(__name__)

KINDS = ("gamma", "de", "ie", "ie2")


@dataclass(frozen=True)
class UnitScore:
    i: int
    w: float
    ipw_part: float
    reg_part: float
    clipped: bool


@dataclass(frozen=True)
class EstimandRequest:
    kind: str
    alpha: float
    alpha_prime: float | None = None
    K: int = 1
    mode: str = "exact"
    mc_draws: int = 200

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        for a in (self.alpha, self.alpha_prime):
            if a is not None and not 0.0 < a < 1.0:
                raise ValueError("alphas must lie in (0, 1)")
        if self.kind == "ie2" and self.alpha_prime is None:
            raise ValueError("ie2 needs alpha_prime")
        if self.mode not in ("exact", "mc"):
            raise ValueError("mode must be 'exact' or 'mc'")
        if self.mode == "mc" and self.mc_draws < 1:
            raise ValueError("mc mode needs mc_draws >= 1")
        if self.K < 1:
            raise ValueError("K must be >= 1")

    @property
    def label(self) -> str:
        if self.kind == "ie2":
            return f"ie2({self.alpha:g},{self.alpha_prime:g})"
        return f"{self.kind}({self.alpha:g})"


@dataclass(frozen=True)
class Arm:
    """Bernoulli(alpha) allocation with optional own-treatment pin; ``alpha=None``
    is the point mass on all-untreated."""

    alpha: float | None
    own: int | None = None

    def policy(self, i: int) -> AllocationPolicy:
        if self.alpha is None:
            return AllocationPolicy.pinned(0.0, {i: 0})
        if self.own is None:
            return AllocationPolicy.bernoulli(self.alpha)
        return AllocationPolicy.pinned(self.alpha, {i: self.own})


def arms(request: EstimandRequest) -> list[tuple[float, Arm]]:
    a, ap = request.alpha, request.alpha_prime
    return {
        "gamma": [(1.0, Arm(a))],
        "de": [(1.0, Arm(a, 1)), (-1.0, Arm(a, 0))],
        "ie": [(1.0, Arm(a, 0)), (-1.0, Arm(None, 0))],
        "ie2": [(1.0, Arm(a, 0)), (-1.0, Arm(ap, 0))],
    }[request.kind]


def _unit(i, indicator, pi, y, beta, floor):
    clipped = pi < floor
    pi_c = floor if clipped else pi
    ipw = indicator / pi_c * (y - beta)
    return UnitScore(int(i), ipw + beta, ipw, beta, bool(clipped))


def _full_assignment(net, data, i, K_model, a_local):
    full = {int(j): int(data.A[j]) for j in net.distances_from(i, K_model)}
    full.update(a_local)
    return full


def aaipw_score(net: Network, data: Dataset, nuisance: FittedNuisance, i: int,
                a_local: Mapping[int, int], K: int = 1,
                clip: float = CLIP_FLOOR) -> UnitScore:
    """Score of node ``i`` at one configuration of ``N(i, K)``, node by node."""
    nodes = local_nodes(net, i, K)
    if set(a_local) != set(int(j) for j in nodes):
        raise ValueError(f"a_local must assign exactly N({i}, {K})")
    energy = EnergySpec(nuisance.eta_hat, nuisance.treatment_spec)
    pi = joint_propensity_exact(net, energy, data.L, data.A, i, a_local, K)
    beta = eval_outcome_mean(net, data, nuisance.theta_hat, nuisance.outcome_spec, i,
                             _full_assignment(net, data, i, nuisance.outcome_spec.K, a_local))
    indicator = float(all(int(data.A[j]) == v for j, v in a_local.items()))
    return _unit(i, indicator, pi, float(data.Y[i]), beta, clip)


def exposure_aaipw_score(net: Network, data: Dataset, nuisance: FittedNuisance, i: int,
                         T: Callable[[Mapping[int, int]], Hashable], t: Hashable,
                         a_ref: Mapping[int, int], K: int = 1,
                         clip: float = CLIP_FLOOR) -> UnitScore:
    """Score with the exposure indicator and exposure propensity in place of the
    full configuration; the outcome mean is evaluated at ``a_ref``."""
    if T(a_ref) != t:
        raise ValueError("a_ref does not map to the requested exposure value")
    nodes = local_nodes(net, i, K)
    observed = {int(j): int(data.A[j]) for j in nodes}
    energy = EnergySpec(nuisance.eta_hat, nuisance.treatment_spec)
    pi = exposure_propensity(net, energy, data.L, data.A, i, T, t, K)
    if pi == 0.0:
        log.warning("node %d: exposure %r has zero propensity", i, t)
    beta = eval_outcome_mean(net, data, nuisance.theta_hat, nuisance.outcome_spec, i,
                             _full_assignment(net, data, i, nuisance.outcome_spec.K, a_ref))
    indicator = float(T(observed) == t)
    return _unit(i, indicator, pi, float(data.Y[i]), beta, clip)


# -- vectorized building blocks ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class _Context:
    """Per-dataset quantities shared by every arm."""

    n: int
    Y: np.ndarray
    A: np.ndarray
    block_size: np.ndarray     # |N(i, K)|
    block_treated: np.ndarray  # treated count on N(i, K)
    inner: np.ndarray          # outcome-model neighbors inside N(i, K)
    fixed: np.ndarray          # treated outcome-model neighbors outside N(i, K)
    inner_adj: object          # sparse: outcome neighbors restricted to the block
    offset: np.ndarray
    c_own: float
    c_nbr: float
    beta_obs: np.ndarray
    pi: np.ndarray
    pi_clipped: np.ndarray
    clipped: np.ndarray
    mc_se: np.ndarray
    above_cap: np.ndarray
    obs: object


def _context(net: Network, data: Dataset, nuisance: FittedNuisance, K: int,
             clip: float, rng=None) -> _Context:
    data.check_network(net)
    spec = nuisance.outcome_spec
    adj_k = net.khop_matrix(K)
    adj_f = net.khop_matrix(spec.K)
    inner_adj = adj_f.multiply(adj_k).tocsr()
    A = data.A.astype(float)
    block_treated = adj_k @ A + A
    block_size = np.asarray(adj_k.sum(axis=1)).ravel() + 1
    inner = np.asarray(inner_adj.sum(axis=1)).ravel()
    fixed = adj_f @ A - inner_adj @ A
    theta = nuisance.theta_hat
    mask = np.array([f not in TREATMENT_FEATURES for f in spec.features])
    offset = nuisance.outcome_design[:, mask] @ theta[mask]
    c_own, c_nbr = treatment_coefficients(theta, spec)
    beta_obs = expit(nuisance.outcome_design @ theta)
    energy = EnergySpec(nuisance.eta_hat, nuisance.treatment_spec)
    obs = observed_propensities(net, energy, nuisance.treatment_design, data.A, K,
                                ENUM_CAP, rng=rng)
    pi = obs.pi
    clipped = pi < clip
    return _Context(net.n, data.Y.astype(float), A, block_size, block_treated,
                    inner.astype(np.int64), fixed, inner_adj, offset, c_own, c_nbr, beta_obs,
                    pi, np.where(clipped, clip, pi), clipped, obs.mc_se, obs.above_cap, obs)


def _q_observed(ctx: _Context, arm: Arm) -> np.ndarray:
    """Allocation probability of each node's observed block configuration."""
    if arm.alpha is None:
        return (ctx.block_treated == 0).astype(float)
    treated, size = ctx.block_treated, ctx.block_size
    if arm.own is None:
        return arm.alpha ** treated * (1 - arm.alpha) ** (size - treated)
    own_ok = (ctx.A == arm.own).astype(float)
    t_rest = treated - ctx.A
    return own_ok * arm.alpha ** t_rest * (1 - arm.alpha) ** (size - 1 - t_rest)


def _grid(ctx: _Context, arm: Arm):
    """Weights and outcome means over (own treatment, inner treated count).

    Returns ``(w, beta, own, count)`` with shape ``(n, 2, M + 1)``.
    """
    M = int(ctx.inner.max()) if ctx.n else 0
    s = np.arange(M + 1)
    own = np.array([0.0, 1.0])[None, :, None]
    if arm.alpha is None:
        w_cnt = (s[None, :] == 0).astype(float) * np.ones((ctx.n, 1))
        p_own = np.array([1.0, 0.0])
    else:
        w_cnt = binom.pmf(s[None, :], ctx.inner[:, None], arm.alpha)
        if arm.own is None:
            p_own = np.array([1 - arm.alpha, arm.alpha])
        else:
            p_own = np.array([1.0 - arm.own, float(arm.own)])
    w = p_own[None, :, None] * w_cnt[:, None, :]
    count = s[None, None, :] + ctx.fixed[:, None, None]
    beta = expit(ctx.offset[:, None, None] + ctx.c_own * own + ctx.c_nbr * count)
    return w, beta, np.broadcast_to(own, w.shape), np.broadcast_to(count, w.shape)


@dataclass
class ArmTerms:
    q_obs: np.ndarray
    ipw: np.ndarray
    reg: np.ndarray


def _arm_exact(ctx: _Context, arm: Arm) -> ArmTerms:
    q = _q_observed(ctx, arm)
    w, beta, _, _ = _grid(ctx, arm)
    reg = (w * beta).sum(axis=(1, 2))
    ipw = q / ctx.pi_clipped * (ctx.Y - ctx.beta_obs)
    return ArmTerms(q, ipw, reg)


def _arm_mc(ctx: _Context, arm: Arm, draws: np.ndarray, adj_k) -> np.ndarray:
    """Scores per draw, ``(R, n)``, sharing allocation draws across units."""
    n = ctx.n
    if arm.alpha is None:
        raise ValueError("the all-untreated arm is evaluated exactly")
    out = np.empty((draws.shape[0], n))
    resid = (ctx.Y - ctx.beta_obs) / ctx.pi_clipped
    for r, a in enumerate(draws):
        a = a.astype(float)
        own = a if arm.own is None else np.full(n, float(arm.own))
        mismatch = adj_k @ (a != ctx.A).astype(float) + (own != ctx.A)
        count = ctx.inner_adj @ a + ctx.fixed
        beta = expit(ctx.offset + ctx.c_own * own + ctx.c_nbr * count)
        out[r] = (mismatch == 0) * resid + beta
    return out


@dataclass
class EstimateReport:
    kind: str
    alpha: float
    alpha_prime: float | None
    K: int
    mode: str
    point: float
    scores: np.ndarray = field(repr=False)
    ipw: np.ndarray = field(repr=False)
    reg: np.ndarray = field(repr=False)
    variance: float | None = None
    ci: tuple[float, float] | None = None
    level: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        if self.kind == "ie2":
            return f"ie2({self.alpha:g},{self.alpha_prime:g})"
        return f"{self.kind}({self.alpha:g})"

    @property
    def se(self) -> float | None:
        if self.variance is None:
            return None
        return float(np.sqrt(self.variance / self.scores.size))

    def to_dict(self) -> dict:
        return {
            "estimand": self.label,
            "kind": self.kind,
            "alpha": self.alpha,
            "alpha_prime": self.alpha_prime,
            "K": self.K,
            "mode": self.mode,
            "point": self.point,
            "variance": self.variance,
            "se": self.se,
            "ci": list(self.ci) if self.ci is not None else None,
            "level": self.level,
            "diagnostics": self.diagnostics,
        }


def estimate(net: Network, data: Dataset, nuisance: FittedNuisance,
             request: EstimandRequest, rng=None, clip: float = CLIP_FLOOR) -> EstimateReport:
    """Allocation-averaged scores and their mean for one estimand."""
    return estimate_many(net, data, nuisance, [request], rng, clip)[0]


def estimate_many(net: Network, data: Dataset, nuisance: FittedNuisance,
                  requests, rng=None, clip: float = CLIP_FLOOR) -> list[EstimateReport]:
    """Like :func:`estimate` for several requests, sharing propensity work."""
    rng = np.random.default_rng(rng)
    contexts: dict[int, _Context] = {}
    out = []
    for request in requests:
        if request.K not in contexts:
            contexts[request.K] = _context(net, data, nuisance, request.K, clip, rng)
        out.append(_estimate(net, contexts[request.K], request, rng))
    return out


def _estimate(net: Network, ctx: _Context, request: EstimandRequest, rng) -> EstimateReport:
    scores = np.zeros(ctx.n)
    ipw = np.zeros(ctx.n)
    reg = np.zeros(ctx.n)
    used_clip = np.zeros(ctx.n, dtype=bool)
    max_weight = 0.0
    mc_se = 0.0
    if request.mode == "exact":
        for sign, arm in arms(request):
            t = _arm_exact(ctx, arm)
            scores += sign * (t.ipw + t.reg)
            ipw += sign * t.ipw
            reg += sign * t.reg
            used_clip |= ctx.clipped & (t.q_obs > 0)
            max_weight = max(max_weight, float(np.max(t.q_obs / ctx.pi_clipped, initial=0.0)))
    else:
        adj_k = net.khop_matrix(request.K)
        per_draw = np.zeros(request.mc_draws)
        for sign, arm in arms(request):
            if arm.alpha is None:
                t = _arm_exact(ctx, arm)
                arm_scores = (t.ipw + t.reg)[None, :]
                used_clip |= ctx.clipped & (t.q_obs > 0)
            else:
                draws = (rng.random((request.mc_draws, ctx.n)) < arm.alpha).astype(np.int8)
                arm_scores = _arm_mc(ctx, arm, draws, adj_k)
                used_clip |= ctx.clipped
            scores += sign * arm_scores.mean(axis=0)
            per_draw = per_draw + sign * arm_scores.mean(axis=1)
        if request.mc_draws > 1:
            mc_se = float(per_draw.std(ddof=1) / np.sqrt(request.mc_draws))
    diagnostics = {
        "clipped": int(used_clip.sum()),
        "max_weight": max_weight,
        "above_cap": int(ctx.above_cap.sum()),
        "mc_se": mc_se,
        "propensity_mc_se_max": float(ctx.mc_se.max(initial=0.0)),
    }
    return EstimateReport(request.kind, request.alpha, request.alpha_prime, request.K,
                          request.mode, float(scores.mean()), scores, ipw, reg,
                          diagnostics=diagnostics)


def score_jacobians(net: Network, data: Dataset, nuisance: FittedNuisance,
                    request: EstimandRequest, clip: float = CLIP_FLOOR):
    """Analytic per-node derivatives of the exact-mode scores.

    Returns ``(dW/dtheta, dW/deta)`` with shapes ``(n, dim theta)`` and
    ``(n, dim eta)``. Clipped propensities are treated as constants.
    """
    ctx = _context(net, data, nuisance, request.K, clip)
    spec = nuisance.outcome_spec
    X = nuisance.outcome_design
    energy = EnergySpec(nuisance.eta_hat, nuisance.treatment_spec)
    dlogpi = log_propensity_gradient(ctx.obs, nuisance.treatment_design, data.A, energy)
    dlogpi[ctx.clipped] = 0.0
    d_theta = np.zeros((ctx.n, spec.dim))
    d_eta = np.zeros((ctx.n, nuisance.treatment_spec.dim))
    bo = ctx.beta_obs
    for sign, arm in arms(request):
        w, beta, own, count = _grid(ctx, arm)
        slope = w * beta * (1 - beta)
        s_tot = slope.sum(axis=(1, 2))
        q_over_pi = _q_observed(ctx, arm) / ctx.pi_clipped
        for c, f in enumerate(spec.features):
            if f == "a_own":
                reg_part = (slope * own).sum(axis=(1, 2))
            elif f == "a_nbr":
                reg_part = (slope * count).sum(axis=(1, 2))
            else:
                reg_part = s_tot * X[:, c]
            d_theta[:, c] += sign * (reg_part - q_over_pi * bo * (1 - bo) * X[:, c])
        d_eta += sign * (-(q_over_pi * (ctx.Y - bo))[:, None] * dlogpi)
    return d_theta, d_eta


# -- Auto-G baseline -----------------------------------------------------------------

@dataclass(frozen=True)
class GibbsControls:
    burn: int = 5
    keep: int = 5
    replications: int = 50


def auto_g_estimate(net: Network, data: Dataset, nuisance: FittedNuisance,
                    request: EstimandRequest, controls: GibbsControls = GibbsControls(),
                    rng=None) -> float:
    """Plug-in estimate from re-simulating outcomes under the fitted outcome model."""
    return auto_g_estimates(net, data, nuisance, [request], controls, rng)[0]


def auto_g_estimates(net: Network, data: Dataset, nuisance: FittedNuisance, requests,
                     controls: GibbsControls = GibbsControls(), rng=None) -> list[float]:
    """Auto-G points for several requests; arms with equal allocations share runs."""
    rng = np.random.default_rng(rng)
    spec = nuisance.outcome_spec
    theta = nuisance.theta_hat
    keep_mask = np.array([f not in TREATMENT_FEATURES + ("y_nbr",) for f in spec.features])
    offset = nuisance.outcome_design[:, keep_mask] @ theta[keep_mask]
    c_own, c_nbr = treatment_coefficients(theta, spec)
    y_idx = spec.index("y_nbr")
    c_y = float(theta[y_idx]) if y_idx is not None else 0.0
    runs: dict = {}

    def run(alpha):
        if alpha not in runs:
            policy = (AllocationPolicy.fixed(np.zeros(net.n, dtype=np.int8)) if alpha is None
                      else AllocationPolicy.bernoulli(alpha))
            runs[alpha] = counterfactual_draws(net, offset, c_own, c_nbr, c_y, policy,
                                               controls.burn, controls.keep,
                                               controls.replications, rng, spec.K)
        return runs[alpha]

    def arm_mean(arm: Arm) -> np.ndarray:
        alloc, means = run(arm.alpha)
        if arm.own is None or arm.alpha is None:
            return means.mean(axis=0)
        sel = alloc == arm.own
        den = sel.sum(axis=0)
        # a node never drawn at the pinned value keeps its pooled mean
        return np.where(den > 0, (means * sel).sum(axis=0) / np.maximum(den, 1),
                        means.mean(axis=0))

    return [float(sum(sign * arm_mean(arm) for sign, arm in arms(r)).mean()) for r in requests]

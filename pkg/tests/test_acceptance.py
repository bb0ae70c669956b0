"""Acceptance suite: one verdict line per criterion in the terminal summary.

Criteria 3-5 run full Monte Carlo experiments (about four minutes on one core);
select them with ``-m slow`` or skip them with ``-m "not slow"``.
"""

import itertools

import numpy as np
import pytest

import oracles
from netaipw.automodel import (fit_nuisance,
                               nuisance_from_coefficients, outcome_spec, treatment_spec)
from netaipw.chainsim import Dataset, SimParams, simulate_stream
from netaipw.estimator import (EstimandRequest, aaipw_score, estimate_many,
                               exposure_aaipw_score, score_jacobians)
from netaipw.harness import ScenarioConfig, run_experiment
from netaipw.inference import KernelSpec, hac_variance, logistic_score_jacobian
from netaipw.netgraph import Network, generate_ba_capped
from netaipw.propensity import (EnergySpec, exposure_distribution, identity_exposure,
                                joint_propensity_exact, joint_propensity_mc, own_and_count)

PATH4 = [(0, 1), (1, 2), (2, 3)]
FOUR_NODE_GRAPHS = [
    PATH4,
    [(0, 1), (0, 2), (0, 3)],
    [(0, 1), (1, 2), (2, 3), (3, 0)],
    [(0, 1), (1, 2), (2, 0), (2, 3)],
]

# -- 1. double robustness by exact enumeration --------------------------------------------

DR_TOL = 1e-10


def _dr_sides(params: SimParams, nuisance, i: int, a_local: dict, law) -> tuple[float, float]:
    """Exact E[W_i] and E[Y_i(a on N(i,1), A elsewhere)] under the model's joint law."""
    net = Network.from_edges(4, PATH4)
    M = oracles.adjacency(4, PATH4)
    block = sorted(a_local)
    a_vals = np.array([a_local[j] for j in block])
    states, probs = law
    e_w = truth = 0.0
    for L, p_l in zip(states, probs):
        A_states, p_a = oracles.treatment_law(M, params, L)
        A_cf = A_states.copy()
        A_cf[:, block] = a_vals
        m_obs = oracles.expit(oracles.outcome_logit(M, params.theta, L, A_states.T))[i]
        m_cf = oracles.expit(oracles.outcome_logit(M, params.theta, L, A_cf.T))[i]
        truth += p_l * (p_a @ m_cf)
        for A, q, m in zip(A_states, p_a, m_obs):
            # W is affine in Y_i and ignores other outcomes when the neighbor-outcome
            # coefficient is zero, so plugging in E[Y_i | L, A] gives E[W | L, A].
            y = np.zeros(4)
            y[i] = m
            e_w += p_l * q * aaipw_score(net, Dataset(y, A, L), nuisance, i, a_local).w
    return e_w, truth


def _affine_in_own_outcome(params: SimParams, nuisance, i: int, a_local: dict, rng) -> float:
    """Largest departure from the affine-in-Y_i / other-outcomes-ignored structure."""
    net = Network.from_edges(4, PATH4)
    worst = 0.0
    for _ in range(20):
        L = rng.integers(0, 2, (4, 3))
        A = rng.integers(0, 2, 4)
        A[sorted(a_local)] = [a_local[j] for j in sorted(a_local)]
        Y = rng.integers(0, 2, 4)
        m = rng.uniform()
        w = {}
        for yi in (0.0, 1.0, m):
            y = Y.astype(float)
            y[i] = yi
            w[yi] = aaipw_score(net, Dataset(y, A, L), nuisance, i, a_local).w
        Y2 = 1 - Y
        Y2[i] = Y[i]
        w_other = aaipw_score(net, Dataset(Y2.astype(float), A, L), nuisance, i, a_local).w
        w_same = aaipw_score(net, Dataset(Y.astype(float), A, L), nuisance, i, a_local).w
        worst = max(worst, abs(w[m] - ((1 - m) * w[0.0] + m * w[1.0])), abs(w_other - w_same))
    return worst


def test_criterion1_double_robustness_oracle(report):
    rng = np.random.default_rng(11)
    net = Network.from_edges(4, PATH4)
    dummy = Dataset(np.zeros(4), np.zeros(4, int), np.zeros((4, 3), int))
    gaps = []
    for seed in range(5):
        r = np.random.default_rng([2024, seed])
        params = oracles.random_params(r)
        law = oracles.covariate_stationary_law(4, PATH4, params)
        i = int(r.integers(4))
        nodes = sorted(net.distances_from(i, 1))
        a_local = {j: int(v) for j, v in zip(nodes, r.integers(0, 2, len(nodes)))}
        theta_bad = params.theta + r.normal(0, 0.5, 10)
        theta_bad[-1] = 0.0
        eta_bad = params.eta + r.normal(0, 0.5, 8)
        for theta, eta in [(theta_bad, params.eta), (params.theta, eta_bad)]:
            nuis = nuisance_from_coefficients(net, dummy, theta, eta, outcome_spec(),
                                              treatment_spec())
            assert _affine_in_own_outcome(params, nuis, i, a_local, rng) < 1e-12
            e_w, truth = _dr_sides(params, nuis, i, a_local, law)
            gaps.append(abs(e_w - truth))
    worst = max(gaps)
    passed = worst <= DR_TOL
    report(1, passed, f"max |E[W_i] - E[Y_i(a)]| = {worst:.2e} over 5 draws x 2 cases "
                      f"(tol {DR_TOL:.0e})")
    assert passed


# -- 2. propensity correctness -----------------------------------------------------------

SUM_TOL = 1e-12
MC_SWEEPS = 20_000
Z_MAX = 3.0


def test_criterion2_propensity_correctness(report):
    worst_sum = worst_z = worst_oracle = 0.0
    for d in range(20):
        r = np.random.default_rng([77, d])
        edges = FOUR_NODE_GRAPHS[d % 4]
        net = Network.from_edges(4, edges)
        params = oracles.random_params(r)
        energy = EnergySpec(params.eta, treatment_spec())
        L = r.integers(0, 2, (4, 3))
        A = r.integers(0, 2, 4)
        i = int(r.integers(4))
        nodes = sorted(net.distances_from(i, 1))
        ref = oracles.block_conditional(oracles.adjacency(4, edges), params.eta, L, A, nodes)
        total = 0.0
        for a in itertools.product((0, 1), repeat=len(nodes)):
            p = joint_propensity_exact(net, energy, L, A, i, dict(zip(nodes, a)))
            total += p
            worst_oracle = max(worst_oracle, abs(p - ref[a]))
        worst_sum = max(worst_sum, abs(total - 1.0))
        target = dict(zip(nodes, (int(v) for v in r.integers(0, 2, len(nodes)))))
        exact = joint_propensity_exact(net, energy, L, A, i, target)
        mc = joint_propensity_mc(net, energy, L, A, i, target, MC_SWEEPS, r)
        worst_z = max(worst_z, abs(mc.value - exact) / mc.se)
    passed = worst_sum <= SUM_TOL and worst_z <= Z_MAX and worst_oracle <= 1e-12
    report(2, passed, f"sum-to-one error {worst_sum:.1e} (tol {SUM_TOL:.0e}); "
                      f"max |exact - MC| / SE = {worst_z:.2f} (tol {Z_MAX}); "
                      f"exact vs brute-force joint {worst_oracle:.1e}")
    assert passed


# -- 3-5. Monte Carlo reproduction -------------------------------------------------------

_RUNS: dict = {}


def _run(scenario: str, m: int, max_degree: int):
    key = (scenario, m, max_degree)
    if key not in _RUNS:
        _RUNS[key] = run_experiment(ScenarioConfig(n=800, m=m, max_degree=max_degree,
                                                   scenario=scenario, replicates=500))
    return _RUNS[key]


REPORTED_TRUTH_GAMMA = 0.702
REPORTED_TRUTH_DE = -0.230
ROUNDING = 0.0005


@pytest.mark.slow
def test_criterion3_bias_and_rmse_cell_1_2(report):
    mo = _run("misspecified-outcome", 1, 2)
    mp = _run("misspecified-propensity", 1, 2)
    g = mo.summary("gamma")
    de = mp.summary("de")
    checks = {
        "|bias gamma| <= 0.03": abs(g["aaipw_bias"]) <= 0.03,
        "RMSE gamma in [0.03, 0.08]": 0.03 <= g["aaipw_rmse"] <= 0.08,
        "Auto-G bias gamma >= 0.05": g["autog_bias"] >= 0.05,
        "|bias DE| <= 0.02": abs(de["aaipw_bias"]) <= 0.02,
        "truth gamma": abs(g["truth"] - REPORTED_TRUTH_GAMMA) <= g["truth_se"] + ROUNDING,
        "truth DE": abs(de["truth"] - REPORTED_TRUTH_DE) <= de["truth_se"] + ROUNDING,
    }
    failed = [k for k, ok in checks.items() if not ok]
    report(3, not failed,
           f"gamma bias {g['aaipw_bias']:+.4f} RMSE {g['aaipw_rmse']:.4f} "
           f"Auto-G bias {g['autog_bias']:+.4f}; DE bias {de['aaipw_bias']:+.4f}; "
           f"truths {g['truth']:.4f}+-{g['truth_se']:.4f} / {de['truth']:.4f}+-"
           f"{de['truth_se']:.4f}" + (f"; failed: {failed}" if failed else ""))
    assert not failed


@pytest.mark.slow
def test_criterion4_coverage_cell_1_2(report):
    bc = _run("both-correct", 1, 2)
    cg = bc.summary("gamma")["coverage"]
    ci = bc.summary("ie2")["coverage"]
    passed = 0.86 <= cg <= 0.96 and 0.89 <= ci <= 0.98
    report(4, passed, f"coverage gamma {cg:.3f} (band [0.86, 0.96]), "
                      f"IE(a, a') {ci:.3f} (band [0.89, 0.98]), both-correct scenario")
    assert passed


@pytest.mark.slow
def test_criterion5_dense_cell_degradation(report):
    sparse = _run("misspecified-outcome", 1, 2).summary("ie")
    dense = _run("misspecified-outcome", 3, 10).summary("ie")
    ratio = dense["aaipw_rmse"] / sparse["aaipw_rmse"]
    passed = ratio >= 2.0 and dense["clipped_total"] > 0
    report(5, passed, f"IE RMSE (3,10) {dense['aaipw_rmse']:.3f} vs (1,2) "
                      f"{sparse['aaipw_rmse']:.3f}, ratio {ratio:.2f} (need >= 2); "
                      f"clipped weights at (3,10): {dense['clipped_total']}")
    assert passed


# -- 6. HAC sanity -----------------------------------------------------------------------

def test_criterion6_hac_sanity(report):
    rng = np.random.default_rng(5)
    net = generate_ba_capped(60, 2, 6, seed=1)
    w = rng.normal(size=60)
    bw1 = hac_variance(w, net, KernelSpec("bartlett", 1.0)).lambda_hat
    err_bw1 = abs(bw1 - w.var())
    const = hac_variance(np.full(60, 3.7), net, KernelSpec("bartlett", 5.0)).lambda_hat
    empty = Network.from_edges(60, [])
    err_edgeless = max(abs(hac_variance(w, empty, KernelSpec(kind, b)).lambda_hat - w.var())
                       for kind in ("bartlett", "truncated") for b in (1.0, 2.0, 7.5, 40.0))
    path3 = Network.from_edges(3, [(0, 1), (1, 2)])
    # centered (1,3,2) -> (-1,1,0): omega0 = 2/3, omega1 = -2/3, weight 1/2 at lag 1
    err_hand = max(
        abs(hac_variance([1, 3, 2], path3, KernelSpec("bartlett", 2.0)).lambda_hat - 1 / 3),
        abs(hac_variance([1, 2, 3], path3, KernelSpec("bartlett", 3.0)).lambda_hat - 4 / 9),
    )
    passed = err_bw1 <= 1e-12 and abs(const) <= 1e-12 and err_edgeless <= 1e-12 \
        and err_hand <= 1e-12
    report(6, passed, f"bandwidth-1 {err_bw1:.1e}, constant {abs(const):.1e}, "
                      f"edgeless {err_edgeless:.1e}, 3-node hand example {err_hand:.1e} "
                      f"(tol 1e-12)")
    assert passed


# -- 7. gradient checks ------------------------------------------------------------------

def _simulated(n: int = 150, seed: int = 3):
    net = generate_ba_capped(n, 1, 3, seed=seed)
    data = next(simulate_stream(net, SimParams.benchmark(1), 301, 300, seed=seed))
    return net, data


def _rel(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a) - b) / max(np.linalg.norm(b), 1e-300))


def test_criterion7_gradient_checks(report):
    net, data = _simulated()
    nuis = fit_nuisance(net, data, outcome_spec(), treatment_spec())
    grad_y = np.abs(nuis.outcome_scores.mean(axis=0)).max()
    grad_a = np.abs(nuis.treatment_scores.mean(axis=0)).max()

    h = 1e-6
    rel = []
    for X, y, coef in [(nuis.outcome_design, data.Y, nuis.theta_hat),
                       (nuis.treatment_design, data.A, nuis.eta_hat)]:
        fd = np.empty((coef.size, coef.size))
        for k in range(coef.size):
            e = np.zeros(coef.size)
            e[k] = h
            up = ((y - oracles.expit(X @ (coef + e)))[:, None] * X).mean(0)
            dn = ((y - oracles.expit(X @ (coef - e)))[:, None] * X).mean(0)
            fd[:, k] = (up - dn) / (2 * h)
        rel.append(_rel(logistic_score_jacobian(X, coef), fd))

    req = EstimandRequest("ie2", 0.7, 0.3)
    d_theta, d_eta = score_jacobians(net, data, nuis, req)

    def scores(theta, eta):
        nu = nuisance_from_coefficients(net, data, theta, eta, nuis.outcome_spec,
                                        nuis.treatment_spec)
        return estimate_many(net, data, nu, [req])[0].scores

    for analytic, base, which in [(d_theta, nuis.theta_hat, 0), (d_eta, nuis.eta_hat, 1)]:
        fd = np.empty_like(analytic)
        for k in range(base.size):
            e = np.zeros(base.size)
            e[k] = h
            args_up = [nuis.theta_hat, nuis.eta_hat]
            args_dn = [nuis.theta_hat, nuis.eta_hat]
            args_up[which] = base + e
            args_dn[which] = base - e
            fd[:, k] = (scores(*args_up) - scores(*args_dn)) / (2 * h)
        rel.append(_rel(analytic, fd))
    worst = max(rel)
    passed = max(grad_y, grad_a) < 1e-6 and worst < 1e-5
    report(7, passed, f"pseudo-likelihood gradient at optimum {max(grad_y, grad_a):.1e} "
                      f"(tol 1e-6); analytic vs finite-difference Jacobians max rel "
                      f"{worst:.1e} (tol 1e-5)")
    assert passed


# -- 8. exposure mapping -----------------------------------------------------------------

def test_criterion8_exposure_consistency(report):
    mismatches = 0
    worst_sum = 0.0
    count = 0
    for d, edges in enumerate(FOUR_NODE_GRAPHS + [[(0, 1), (1, 2), (3, 4)]]):
        r = np.random.default_rng([8, d])
        n = 1 + max(max(e) for e in edges)
        net = Network.from_edges(n, edges)
        params = oracles.random_params(r)
        data = Dataset(r.integers(0, 2, n), r.integers(0, 2, n), r.integers(0, 2, (n, 3)))
        nuis = nuisance_from_coefficients(net, data, params.theta, params.eta,
                                          outcome_spec(), treatment_spec())
        energy = EnergySpec(nuis.eta_hat, nuis.treatment_spec)
        for i in range(n):
            nodes = sorted(net.distances_from(i, 1))
            for a in itertools.product((0, 1), repeat=len(nodes)):
                a_local = dict(zip(nodes, a))
                plain = aaipw_score(net, data, nuis, i, a_local)
                expo = exposure_aaipw_score(net, data, nuis, i, identity_exposure,
                                            identity_exposure(a_local), a_local)
                mismatches += plain != expo
                count += 1
            for T in (identity_exposure, own_and_count(net, i)):
                dist = exposure_distribution(net, energy, data.L, data.A, i, T)
                worst_sum = max(worst_sum, abs(sum(dist.values()) - 1.0))
    passed = mismatches == 0 and worst_sum <= 1e-10
    report(8, passed, f"identity-exposure scores differing from plain scores: "
                      f"{mismatches}/{count} (bitwise); exposure propensity sum error "
                      f"{worst_sum:.1e} (tol 1e-10)")
    assert passed

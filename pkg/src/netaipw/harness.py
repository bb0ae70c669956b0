"""Monte Carlo experiments: oracle truths, replicate loop, bias/RMSE/coverage tables."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .automodel import fit_nuisance, outcome_spec, treatment_spec, with_noise_covariates
from .chainsim import N_COV, Dataset, SimParams, counterfactual_draws, simulate_stream
from .estimator import (EstimandRequest, GibbsControls, arms, auto_g_estimates,
                        estimate_many)
from .inference import (KernelSpec, confidence_interval, default_bandwidth, hac_variance,
                        if_corrected_scores)
from .netgraph import InfeasibleGraphError, Network, generate_ba_capped
from .propensity import AllocationPolicy

log = logging.getLogger(__name__)

SCENARIOS = ("both-correct", "misspecified-outcome", "misspecified-propensity")
ESTIMANDS = ("gamma", "de", "ie2", "ie")


@dataclass(frozen=True)
class TruthControls:
    draws: int = 2000
    burn: int = 5
    keep: int = 5
    covariate_burn: int = 200
    covariate_thin: int = 2
    batches: int = 20
    seed: int = 12345


@dataclass(frozen=True)
class ScenarioConfig:
    n: int = 800
    m: int = 1
    max_degree: int = 2
    scenario: str = "misspecified-outcome"
    alpha: float = 0.7
    alpha_prime: float = 0.3
    estimands: tuple[str, ...] = ESTIMANDS
    replicates: int = 500
    burn_in: int = 2000
    thin: int = 1
    graph_seed: int = 0
    seed: int = 0
    K: int = 1
    kernel: str = "bartlett"
    bandwidth: float | None = None
    level: float = 0.95
    mode: str = "exact"
    mc_draws: int = 200
    if_correction: bool = False
    autog: bool = True
    autog_controls: GibbsControls = GibbsControls()
    truth: TruthControls = TruthControls()
    outcome_mapping: str = "shifted"
    redraw_graph: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.burn_in < 0 or self.thin < 1:
            raise ValueError("need burn_in >= 0 and thin >= 1")
        bad = set(self.estimands) - set(ESTIMANDS)
        if bad:
            raise ValueError(f"unknown estimands {sorted(bad)}")
        object.__setattr__(self, "estimands", tuple(self.estimands))

    @property
    def n_iter(self) -> int:
        return self.burn_in + self.replicates * self.thin

    @property
    def kernel_spec(self) -> KernelSpec:
        b = default_bandwidth(self.K) if self.bandwidth is None else self.bandwidth
        return KernelSpec(self.kernel, b)

    def requests(self) -> list[EstimandRequest]:
        return [EstimandRequest(k, self.alpha, self.alpha_prime if k == "ie2" else None,
                                self.K, self.mode, self.mc_draws) for k in self.estimands]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["estimands"] = list(self.estimands)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if "autog_controls" in d:
            d["autog_controls"] = GibbsControls(**d["autog_controls"])
        if "truth" in d:
            d["truth"] = TruthControls(**d["truth"])
        if "estimands" in d:
            d["estimands"] = tuple(d["estimands"])
        return cls(**d)


# -- truth oracle ---------------------------------------------------------------------

_TRUTH_CACHE: dict = {}


def _net_key(net: Network) -> str:
    h = hashlib.sha1(np.int64(net.n).tobytes())
    h.update(net.edge_array().astype(np.int64).tobytes())
    return h.hexdigest()


def compute_truth(net: Network, params: SimParams, estimands=ESTIMANDS, alpha: float = 0.7,
                  alpha_prime: float = 0.3,
                  controls: TruthControls = TruthControls()) -> dict[str, tuple[float, float]]:
    """Estimand values under the true outcome model, with batch-means MC errors.

    Each draw refreshes covariates from their own Gibbs chain, draws an
    allocation and averages the Rao-Blackwellized outcome probabilities.
    """
    key = (_net_key(net), json.dumps(params.to_dict(), sort_keys=True), tuple(estimands),
           alpha, alpha_prime, controls)
    if key in _TRUTH_CACHE:
        return _TRUTH_CACHE[key]
    rng = np.random.default_rng(controls.seed)
    n, th, K = net.n, params.theta, params.K
    adj = net.khop_matrix(K)
    indptr, indices = adj.indptr.astype(np.int64), adj.indices.astype(np.int64)
    L = (rng.random((n, N_COV)) < 0.5).astype(np.int8)

    def sweep_L(times):
        for _ in range(times):
            _kernels.covariate_sweep(L, indptr, indices, params.tau, params.rho, params.nu,
                                     rng.random(L.size))

    sweep_L(controls.covariate_burn)
    allocs = {alpha: AllocationPolicy.bernoulli(alpha),
              alpha_prime: AllocationPolicy.bernoulli(alpha_prime),
              None: AllocationPolicy.fixed(np.zeros(n, dtype=np.int8))}
    needed = {arm.alpha for k in estimands
              for _, arm in arms(EstimandRequest(k, alpha, alpha_prime))}
    R = controls.draws
    stats = {a: {"all": np.zeros((R, n)), "alloc": np.zeros((R, n), dtype=np.int8)}
             for a in needed}
    for r in range(R):
        sweep_L(controls.covariate_thin)
        Lf = L.astype(float)
        offset = th[0] + Lf @ th[3:3 + 2 * N_COV:2] + (adj @ Lf) @ th[4:4 + 2 * N_COV:2]
        for a in needed:
            alloc, means = counterfactual_draws(net, offset, th[1], th[2], th[-1], allocs[a],
                                                controls.burn, controls.keep, 1, rng, K)
            stats[a]["all"][r] = means[0]
            stats[a]["alloc"][r] = alloc[0]

    def value(kind, rows):
        total = np.zeros(n)
        for sign, arm in arms(EstimandRequest(kind, alpha, alpha_prime)):
            means = stats[arm.alpha]["all"][rows]
            if arm.own is None or arm.alpha is None:
                total += sign * means.mean(axis=0)
            else:
                sel = stats[arm.alpha]["alloc"][rows] == arm.own
                total += sign * (means * sel).sum(axis=0) / np.maximum(sel.sum(axis=0), 1)
        return float(total.mean())

    out = {}
    batches = np.array_split(np.arange(R), controls.batches)
    for kind in estimands:
        point = value(kind, slice(None))
        per_batch = np.array([value(kind, b) for b in batches])
        out[kind] = (point, float(per_batch.std(ddof=1) / np.sqrt(len(batches))))
    _TRUTH_CACHE[key] = out
    return out


# -- experiment loop --------------------------------------------------------------------

@dataclass
class MCResult:
    config: ScenarioConfig
    truth: dict[str, float]
    truth_se: dict[str, float]
    traces: dict[str, dict[str, np.ndarray]] = field(repr=False)
    n_failed: int = 0

    @property
    def n_success(self) -> int:
        return len(next(iter(self.traces.values()))["aaipw"]) if self.traces else 0

    def summary(self, estimand: str) -> dict:
        tr = self.traces[estimand]
        truth = self.truth[estimand]
        est = tr["aaipw"]
        row = {
            "estimand": estimand,
            "scenario": self.config.scenario,
            "m": self.config.m,
            "max_degree": self.config.max_degree,
            "n": self.config.n,
            "replicates": self.n_success,
            "failed": self.n_failed,
            "truth": truth,
            "truth_se": self.truth_se[estimand],
            "aaipw_mean": float(est.mean()),
            "aaipw_bias": float(est.mean() - truth),
            "aaipw_rmse": float(np.sqrt(np.mean((est - truth) ** 2))),
            "aaipw_sd": float(est.std(ddof=1)) if est.size > 1 else 0.0,
            "mean_se": float(tr["se"].mean()),
            "coverage": float(tr["covered"].mean()),
            "clipped_total": int(tr["clipped"].sum()),
            "clipped_replicates": int((tr["clipped"] > 0).sum()),
            "max_weight": float(tr["max_weight"].max()),
        }
        if "autog" in tr:
            g = tr["autog"]
            row.update(autog_mean=float(g.mean()), autog_bias=float(g.mean() - truth),
                       autog_rmse=float(np.sqrt(np.mean((g - truth) ** 2))))
        return row

    def rows(self) -> list[dict]:
        return [self.summary(k) for k in self.config.estimands]


def _specs(config: ScenarioConfig, n: int, rng):
    out_s, trt_s = outcome_spec(N_COV, config.K), treatment_spec(N_COV, config.K)
    if config.scenario == "misspecified-outcome":
        out_s = with_noise_covariates(out_s, n, rng)
    elif config.scenario == "misspecified-propensity":
        trt_s = with_noise_covariates(trt_s, n, rng)
    return out_s, trt_s


def analyze_replicate(net: Network, data: Dataset, config: ScenarioConfig, seed) -> dict:
    """Fit, estimate and build intervals for one dataset."""
    rng = np.random.default_rng(seed)
    out_s, trt_s = _specs(config, net.n, rng)
    nuisance = fit_nuisance(net, data, out_s, trt_s)
    requests = config.requests()
    reports = estimate_many(net, data, nuisance, requests, rng)
    kernel = config.kernel_spec
    res = {}
    autog = (auto_g_estimates(net, data, nuisance, requests, config.autog_controls, rng)
             if config.autog else [np.nan] * len(requests))
    for req, rep, g in zip(requests, reports, autog):
        scores = rep.scores
        if config.if_correction:
            scores = if_corrected_scores(net, data, nuisance, scores, req).corrected
        lam = hac_variance(scores, net, kernel).lambda_hat
        lo, hi = confidence_interval(float(scores.mean()), lam, net.n, config.level)
        res[req.kind] = {"aaipw": float(scores.mean()), "lo": lo, "hi": hi,
                         "se": float(np.sqrt(lam / net.n)), "autog": g,
                         "clipped": rep.diagnostics["clipped"],
                         "max_weight": rep.diagnostics["max_weight"]}
    return res


def _analyze_chunk(args):
    net, config, items = args
    out = []
    for r, data, seed in items:
        try:
            out.append((r, analyze_replicate(net, data, config, seed)))
        except Exception as exc:  # replicate-level isolation
            log.warning("replicate %d failed: %s", r, exc)
            out.append((r, None))
    return out


def build_network(config: ScenarioConfig, seed=None, attempts: int = 50) -> Network:
    base = config.graph_seed if seed is None else seed
    for k in range(attempts):
        try:
            return generate_ba_capped(config.n, config.m, config.max_degree,
                                      seed=np.random.SeedSequence([base, k]) if k else base)
        except InfeasibleGraphError as exc:
            log.info("graph attempt %d infeasible: %s", k, exc)
    raise InfeasibleGraphError(f"no feasible graph after {attempts} attempts")


def run_experiment(config: ScenarioConfig) -> MCResult:
    params = SimParams.benchmark(config.m, config.outcome_mapping, config.K)
    root = np.random.SeedSequence(config.seed)
    stream_seq, rep_seq = root.spawn(2)
    rep_seeds = rep_seq.spawn(config.replicates)
    if config.redraw_graph:
        jobs = []
        truths = []
        for r in range(config.replicates):
            net = build_network(config, seed=np.random.SeedSequence([config.graph_seed, r]))
            data = list(simulate_stream(net, params, config.burn_in + 1, config.burn_in,
                                        stream_seq.spawn(1)[0]))[0]
            truths.append(compute_truth(net, params, config.estimands, config.alpha,
                                        config.alpha_prime, config.truth))
            jobs.append((net, config, [(r, data, rep_seeds[r])]))
        truth = {k: float(np.mean([t[k][0] for t in truths])) for k in config.estimands}
        truth_se = {k: float(np.sqrt(np.mean([t[k][1] ** 2 for t in truths])))
                    for k in config.estimands}
    else:
        net = build_network(config)
        t = compute_truth(net, params, config.estimands, config.alpha, config.alpha_prime,
                          config.truth)
        truth = {k: v[0] for k, v in t.items()}
        truth_se = {k: v[1] for k, v in t.items()}
        stream = simulate_stream(net, params, config.n_iter, config.burn_in, stream_seq,
                                 config.thin)
        items = [(r, data, rep_seeds[r]) for r, data in enumerate(stream)]
        nchunks = max(1, config.workers) * 4
        jobs = [(net, config, items[c::nchunks]) for c in range(nchunks) if items[c::nchunks]]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            done = [x for chunk in pool.map(_analyze_chunk, jobs) for x in chunk]
    else:
        done = [x for job in jobs for x in _analyze_chunk(job)]
    done.sort(key=lambda x: x[0])
    ok = [res for _, res in done if res is not None]
    traces = {}
    for k in config.estimands:
        tr = {
            "aaipw": np.array([o[k]["aaipw"] for o in ok]),
            "se": np.array([o[k]["se"] for o in ok]),
            "lo": np.array([o[k]["lo"] for o in ok]),
            "hi": np.array([o[k]["hi"] for o in ok]),
            "clipped": np.array([o[k]["clipped"] for o in ok], dtype=np.int64),
            "max_weight": np.array([o[k]["max_weight"] for o in ok]),
        }
        tr["covered"] = (tr["lo"] <= truth[k]) & (truth[k] <= tr["hi"])
        if config.autog:
            tr["autog"] = np.array([o[k]["autog"] for o in ok])
        traces[k] = tr
    return MCResult(config, truth, truth_se, traces, len(done) - len(ok))


TABLE_COLUMNS = ("estimand", "scenario", "m", "max_degree", "n", "replicates", "failed",
                 "truth", "truth_se", "aaipw_mean", "aaipw_bias", "aaipw_rmse", "aaipw_sd",
                 "mean_se", "coverage", "autog_mean", "autog_bias", "autog_rmse",
                 "clipped_total", "clipped_replicates", "max_weight")


def write_tables(results: list[MCResult], out_dir) -> tuple[Path, Path]:
    """Write ``mc_results.csv`` and ``mc_results.json`` (one row per estimand x cell)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [row for res in results for row in res.rows()]
    csv_path = out_dir / "mc_results.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c, "") for c in TABLE_COLUMNS})
    json_path = out_dir / "mc_results.json"
    payload = {"rows": [{c: row.get(c) for c in TABLE_COLUMNS} for row in rows],
               "configs": [res.config.to_dict() for res in results]}
    json_path.write_text(json.dumps(payload, indent=2) + "\n")
    return csv_path, json_path


def smoke_config(**overrides) -> ScenarioConfig:
    """Tiny configuration for pipeline checks."""
    base = ScenarioConfig(n=20, replicates=1, burn_in=20,
                          truth=TruthControls(draws=40, covariate_burn=10, batches=4),
                          autog_controls=GibbsControls(2, 2, 4))
    return replace(base, **overrides)

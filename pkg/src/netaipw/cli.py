"""Command-line entry points: ``simulate``, ``mc`` and ``analyze``.

Each subcommand reads an optional JSON config whose keys mirror the
dataclass fields; command-line flags override config values.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .automodel import fit_nuisance, outcome_spec, treatment_spec
from .chainsim import N_COV, Dataset, SimParams, simulate_stream
from .estimator import (EstimandRequest, GibbsControls, KINDS, auto_g_estimates,
                        estimate_many)
from .harness import ScenarioConfig, run_experiment, write_tables, build_network
from .inference import (KernelSpec, confidence_interval, default_bandwidth, hac_variance,
                        if_corrected_scores)
from .netgraph import Network, read_edge_list, write_edge_list

log = logging.getLogger("netaipw")


class ConfigError(ValueError):
    pass


def _load_json(path) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def _merge(base: dict, args: argparse.Namespace, keys) -> dict:
    out = dict(base)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


# -- simulate ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SimulateConfig:
    out: str = "sim_out"
    n: int = 800
    m: int = 1
    max_degree: int = 2
    graph_seed: int = 0
    seed: int = 0
    n_iter: int = 2001
    burn_in: int = 2000
    thin: int = 1
    outcome_mapping: str = "shifted"
    params: dict | None = None

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iter:
            raise ConfigError(f"need 0 <= burn_in < n_iter, got burn_in={self.burn_in}, "
                              f"n_iter={self.n_iter}")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")


def write_node_csv(path, data: Dataset, ids=None) -> None:
    ids = [str(i) for i in range(data.n)] if ids is None else ids
    p = data.L.shape[1]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "y", "a"] + [f"l{k + 1}" for k in range(p)])
        for i in range(data.n):
            row = [ids[i], int(data.Y[i]), int(data.A[i])]
            row += [_fmt(v) for v in data.L[i]]
            w.writerow(row)


def _fmt(v) -> str:
    f = float(v)
    return str(int(f)) if f.is_integer() else repr(f)


def cmd_simulate(cfg: SimulateConfig) -> list[Path]:
    params = (SimParams.from_dict(cfg.params) if cfg.params is not None
              else SimParams.benchmark(cfg.m, cfg.outcome_mapping))
    net = build_network(ScenarioConfig(n=cfg.n, m=cfg.m, max_degree=cfg.max_degree,
                                       graph_seed=cfg.graph_seed))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_edge_list(net, out / "network.edges")
    params.save(out / "params.json")
    written = [out / "network.edges", out / "params.json"]
    for k, data in enumerate(simulate_stream(net, params, cfg.n_iter, cfg.burn_in, cfg.seed,
                                             cfg.thin)):
        path = out / f"nodes_{k:04d}.csv"
        write_node_csv(path, data)
        written.append(path)
    return written


# -- mc ------------------------------------------------------------------------------------

def cmd_mc(base: ScenarioConfig, cells, scenarios, out) -> list:
    results = []
    for m, max_degree in cells:
        for sc in scenarios:
            cfg = replace(base, m=m, max_degree=max_degree, scenario=sc)
            log.info("running cell (%d,%d) %s with %d replicates", m, max_degree, sc,
                     cfg.replicates)
            results.append(run_experiment(cfg))
    write_tables(results, out)
    return results


# -- analyze -------------------------------------------------------------------------------

@dataclass(frozen=True)
class AnalysisConfig:
    edges: str
    nodes: str
    out: str = "report.json"
    alpha: float = 0.5
    alpha_prime: float = 0.2
    estimands: tuple[str, ...] = ("gamma", "de", "ie2", "ie")
    K: int = 1
    kernel: str = "bartlett"
    bandwidth: float | None = None
    level: float = 0.95
    covariates: tuple[str, ...] | None = None
    mode: str = "exact"
    mc_draws: int = 200
    if_correction: bool = False
    autog: bool = True
    autog_controls: GibbsControls = field(default_factory=GibbsControls)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "estimands", tuple(self.estimands))
        bad = set(self.estimands) - set(KINDS)
        if bad:
            raise ConfigError(f"unknown estimands {sorted(bad)}")
        if self.covariates is not None:
            object.__setattr__(self, "covariates", tuple(self.covariates))
        if isinstance(self.autog_controls, dict):
            object.__setattr__(self, "autog_controls", GibbsControls(**self.autog_controls))

    def requests(self) -> list[EstimandRequest]:
        return [EstimandRequest(k, self.alpha, self.alpha_prime if k == "ie2" else None,
                                self.K, self.mode, self.mc_draws) for k in self.estimands]


def read_node_csv(path, covariates=None) -> tuple[list[str], Dataset, list[str]]:
    """Parse ``id,y,a,<covariates>``; returns ids, dataset and covariate names."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in ("id", "y", "a"):
            if col not in header:
                raise ConfigError(f"{path}: missing required column {col!r}")
        covs = list(covariates) if covariates is not None else [
            c for c in header if c not in ("id", "y", "a")]
        for c in covs:
            if c not in header:
                raise ConfigError(f"{path}: missing covariate column {c!r}")
        ids, Y, A, L = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            for col in ("y", "a"):
                if row[col] not in ("0", "1"):
                    raise ConfigError(f"{path}:{lineno}: column {col!r} must be 0 or 1, "
                                      f"got {row[col]!r}")
            ids.append(row["id"])
            Y.append(int(row["y"]))
            A.append(int(row["a"]))
            try:
                L.append([float(row[c]) for c in covs])
            except (TypeError, ValueError):
                raise ConfigError(f"{path}:{lineno}: non-numeric covariate") from None
    if len(set(ids)) != len(ids):
        raise ConfigError(f"{path}: duplicate node ids")
    L_arr = np.asarray(L, dtype=float).reshape(len(ids), len(covs))
    return ids, Dataset(np.array(Y, np.int8), np.array(A, np.int8), L_arr), covs


def analyze(net: Network, data: Dataset, cfg: AnalysisConfig, covariate_names=None) -> dict:
    """Fit both auto-models, estimate every requested effect and build HAC intervals."""
    p = data.L.shape[1]
    nuisance = fit_nuisance(net, data, outcome_spec(p, cfg.K), treatment_spec(p, cfg.K))
    requests = cfg.requests()
    rng = np.random.default_rng(cfg.seed)
    reports = estimate_many(net, data, nuisance, requests, rng)
    autog = (auto_g_estimates(net, data, nuisance, requests, cfg.autog_controls, rng)
             if cfg.autog else [None] * len(requests))
    b = default_bandwidth(cfg.K) if cfg.bandwidth is None else cfg.bandwidth
    kernel = KernelSpec(cfg.kernel, b)
    rows = []
    for req, rep, g in zip(requests, reports, autog):
        scores = rep.scores
        if cfg.if_correction:
            corr = if_corrected_scores(net, data, nuisance, scores, req)
            scores = corr.corrected
            rep.diagnostics["if_correction_applied"] = corr.applied
            rep.point = float(scores.mean())
        hac = hac_variance(scores, net, kernel)
        rep.variance = hac.lambda_hat
        rep.ci = confidence_interval(rep.point, hac.lambda_hat, net.n, cfg.level)
        rep.level = cfg.level
        rep.diagnostics["hac_floored"] = hac.floored
        rep.diagnostics["hac_omegas"] = list(hac.omegas)
        row = rep.to_dict()
        row["autog"] = g
        rows.append(row)
    summary = nuisance.summary()
    if covariate_names is not None:
        summary["covariates"] = list(covariate_names)
    return {
        "n": net.n,
        "n_edges": net.n_edges,
        "config": {k: v for k, v in _jsonable(asdict(cfg)).items()},
        "kernel": {"kind": kernel.kind, "bandwidth": kernel.bandwidth},
        "nuisance": summary,
        "estimates": rows,
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


SUMMARY_COLUMNS = ("estimand", "point", "se", "ci_lo", "ci_hi", "autog", "clipped",
                   "max_weight")


def cmd_analyze(cfg: AnalysisConfig) -> dict:
    ids, data, covs = read_node_csv(cfg.nodes, cfg.covariates)
    id_map = {s: k for k, s in enumerate(ids)}
    net = read_edge_list(cfg.edges, n=len(ids), id_map=id_map)
    report = analyze(net, data, cfg, covs)
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(_jsonable(report), indent=2) + "\n")
    with out.with_suffix(".csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in report["estimates"]:
            w.writerow([r["estimand"], repr(r["point"]), repr(r["se"]), repr(r["ci"][0]),
                        repr(r["ci"][1]), "" if r["autog"] is None else repr(r["autog"]),
                        r["diagnostics"]["clipped"], repr(r["diagnostics"]["max_weight"])])
    return report


# -- argument parsing -----------------------------------------------------------------------

def _cell(text: str) -> tuple[int, int]:
    try:
        m, d = text.split(",")
        return int(m), int(d)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cell must look like 'm,max_degree', got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netaipw",
                                     description="Doubly robust effect estimation on a network")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker processes for replicate estimation (default: all cores)")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate datasets from the chain-graph model")
    s.add_argument("--config")
    s.add_argument("--out")
    for name, typ in [("n", int), ("m", int), ("max_degree", int), ("graph_seed", int),
                      ("seed", int), ("n_iter", int), ("burn_in", int), ("thin", int)]:
        s.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ)
    s.add_argument("--outcome-mapping", dest="outcome_mapping",
                   choices=("shifted", "zero_intercept"))

    mc = sub.add_parser("mc", help="Monte Carlo bias/RMSE/coverage tables")
    mc.add_argument("--config")
    mc.add_argument("--out", default="mc_out")
    mc.add_argument("--cells", nargs="+", type=_cell, default=None,
                    help="cells as m,max_degree (default: 1,2 2,5 3,10)")
    mc.add_argument("--scenarios", nargs="+", default=None,
                    choices=("both-correct", "misspecified-outcome", "misspecified-propensity"))
    for name, typ in [("replicates", int), ("n", int), ("seed", int), ("graph_seed", int),
                      ("burn_in", int), ("alpha", float), ("alpha_prime", float),
                      ("bandwidth", float)]:
        mc.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ)
    mc.add_argument("--no-autog", dest="autog", action="store_false", default=None)
    mc.add_argument("--if-correction", dest="if_correction", action="store_true", default=None)
    mc.add_argument("--redraw-graph", dest="redraw_graph", action="store_true", default=None)

    a = sub.add_parser("analyze", help="estimate effects on observed network data")
    a.add_argument("--config")
    a.add_argument("--edges")
    a.add_argument("--nodes")
    a.add_argument("--out")
    for name, typ in [("alpha", float), ("alpha_prime", float), ("K", int),
                      ("bandwidth", float), ("level", float), ("seed", int)]:
        a.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ)
    a.add_argument("--estimands", nargs="+", choices=KINDS)
    a.add_argument("--covariates", nargs="+")
    a.add_argument("--kernel", choices=("bartlett", "truncated"))
    a.add_argument("--if-correction", dest="if_correction", action="store_true", default=None)
    a.add_argument("--no-autog", dest="autog", action="store_false", default=None)
    return parser


def _names(cls) -> list[str]:
    return [f.name for f in fields(cls)]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = args.threads or os.cpu_count() or 1
    try:
        if args.command == "simulate":
            cfg = SimulateConfig(**_merge(_load_json(args.config), args, _names(SimulateConfig)))
            paths = cmd_simulate(cfg)
            print(f"wrote {len(paths)} files to {cfg.out}")
        elif args.command == "mc":
            raw = _load_json(args.config)
            cells = args.cells or [tuple(c) for c in raw.pop("cells", [(1, 2), (2, 5), (3, 10)])]
            scenarios = args.scenarios or raw.pop("scenarios", ["misspecified-outcome",
                                                                "misspecified-propensity"])
            raw.pop("cells", None)
            raw.pop("scenarios", None)
            raw = _merge(raw, args, _names(ScenarioConfig))
            raw.setdefault("workers", threads)
            base = ScenarioConfig.from_dict(raw)
            cmd_mc(base, cells, scenarios, args.out)
            print(f"wrote {Path(args.out) / 'mc_results.csv'}")
        else:
            raw = _merge(_load_json(args.config), args, _names(AnalysisConfig))
            for key in ("edges", "nodes"):
                if key not in raw:
                    raise ConfigError(f"analyze needs --{key} (or '{key}' in the config)")
            report = cmd_analyze(AnalysisConfig(**raw))
            for r in report["estimates"]:
                lo, hi = r["ci"]
                print(f"{r['estimand']:>14}  {r['point']: .4f}  ({lo: .4f}, {hi: .4f})")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

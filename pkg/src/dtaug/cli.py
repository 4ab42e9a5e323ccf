"""Command-line interface: ``dtaug fit | diagnose | simulate``.

Exit status is 0 on success, 1 for invalid input and 2 when a sampler aborts
numerically.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import betabin, diagnostics, lmm_multi, lmm_uni
from .data import (BinData, ChainOutput, DataError, EmConfig, GibbsConfig, MultiData, UniData,
                   load_dataset, write_dataset)
from .fixtures import FIXTURES, simulate_uni
from .stats import NumericalAbort, make_rng


@dataclass(frozen=True)
class RunConfig:
    data: object
    scheme: str
    algorithm: str
    iters: int
    burn_in: int
    seed: int
    tol: float
    criterion: str
    m1: int
    m2: int
    c: float
    gamma: float
    out: Path
    safe_mode: bool
    chains: int

    def __post_init__(self):
        if not self.iters > self.burn_in >= 0:
            raise ValueError("need iters > burnin >= 0")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.chains < 1:
            raise ValueError("chains must be at least 1")


# --------------------------------------------------------------------------
# engines
# --------------------------------------------------------------------------

def _run_chain(cfg: RunConfig, chain: int | None) -> tuple[ChainOutput, float]:
    rng = make_rng(cfg.seed, chain)
    gcfg = GibbsConfig(cfg.iters, cfg.burn_in, cfg.seed)
    start = time.perf_counter()
    data = cfg.data
    if isinstance(data, UniData):
        out = lmm_uni.run_gibbs_uni(data, cfg.scheme, gcfg, rng=rng)
    elif isinstance(data, MultiData):
        out = lmm_multi.run_gibbs_multi(data, cfg.scheme, gcfg, safe_mode=cfg.safe_mode, rng=rng)
    else:
        if cfg.scheme != "dta":
            raise ValueError("the Beta-Binomial sampler only supports --scheme dta")
        out = betabin.run_gibbs_betabin(data, betabin.PriorHyper(cfg.c, cfg.gamma), cfg.m1, cfg.m2, gcfg, rng=rng)
    return out, time.perf_counter() - start


def _safe_ess(x: np.ndarray):
    try:
        return diagnostics.ess(x)
    except ValueError:
        return None


def chain_summary(chain: ChainOutput, seconds: float) -> dict:
    params = {}
    for j, name in enumerate(chain.names):
        x = chain.draws[:, j]
        q05, q50, q95 = np.quantile(x, [0.05, 0.5, 0.95])
        params[name] = {"mean": float(x.mean()), "q05": float(q05), "q50": float(q50),
                        "q95": float(q95), "ess": _safe_ess(x)}
    return {"scheme": chain.scheme, "seed": chain.seed, "burn_in": chain.burn_in,
            "draws": len(chain), "rejections": chain.rejection_counts,
            "timings": {"sampling_seconds": seconds}, "params": params}


def write_draws(chain: ChainOutput, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iter"] + chain.names)
        for t, row in enumerate(chain.draws):
            w.writerow([chain.burn_in + t + 1] + [repr(float(v)) for v in row])


def _fit_gibbs(cfg: RunConfig) -> dict:
    if cfg.chains == 1:
        chain, secs = _run_chain(cfg, None)
        write_draws(chain, cfg.out / "draws.csv")
        return chain_summary(chain, secs)
    with ProcessPoolExecutor(max_workers=cfg.chains) as pool:
        results = list(pool.map(_run_chain, [cfg] * cfg.chains, range(1, cfg.chains + 1)))
    summaries = []
    for c, (chain, secs) in enumerate(results, start=1):
        write_draws(chain, cfg.out / f"draws_chain{c}.csv")
        summaries.append(dict(chain_summary(chain, secs), chain=c))
    return {"seed": cfg.seed, "chains": summaries}


def _fit_em(cfg: RunConfig) -> dict:
    data = cfg.data
    ecfg = EmConfig(cfg.tol, criterion=cfg.criterion)
    start = time.perf_counter()
    if isinstance(data, UniData):
        trace = lmm_uni.run_em_uni(data, cfg.scheme, ecfg)
        names = lmm_uni.param_names(data.m)
        rows = [it.as_vector() for it in trace.iterates]
    elif isinstance(data, MultiData):
        trace = lmm_multi.run_em_multi(data, cfg.scheme, ecfg, safe_mode=cfg.safe_mode)
        names = lmm_multi.param_names(data.p, data.m)
        tri = np.triu_indices(data.p)
        rows = [np.concatenate([it.beta, it.A[tri]]) for it in trace.iterates]
    else:
        raise ValueError("EM is not available for Beta-Binomial data")
    secs = time.perf_counter() - start
    with open(cfg.out / "trace.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration"] + names + ["loglik", "converged"])
        for t in range(1, len(rows)):
            done = trace.converged and t == len(rows) - 1
            w.writerow([t] + [repr(float(v)) for v in rows[t]] + [repr(trace.loglik[t]), int(done)])
    return {"scheme": cfg.scheme, "seed": cfg.seed, "algorithm": "em", "tol": cfg.tol,
            "criterion": cfg.criterion, "iterations": trace.n_iter, "converged": trace.converged,
            "loglik": trace.loglik[-1], "estimate": dict(zip(names, map(float, rows[-1]))),
            "timings": {"em_seconds": secs}}


def run_fit(cfg: RunConfig, grid_out: Path | None = None) -> dict:
    cfg.out.mkdir(parents=True, exist_ok=True)
    summary = _fit_em(cfg) if cfg.algorithm == "em" else _fit_gibbs(cfg)
    if grid_out is not None:
        if not isinstance(cfg.data, BinData):
            raise ValueError("--grid-out is only available for Beta-Binomial data")
        prior = betabin.PriorHyper(cfg.c, cfg.gamma)
        la, lb = betabin.default_grid(cfg.data, prior)
        betabin.write_grid_csv(betabin.exact_grid_posterior(cfg.data, prior, la, lb), grid_out)
    with open(cfg.out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    return summary


# --------------------------------------------------------------------------
# diagnose
# --------------------------------------------------------------------------

def read_draws(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty draws file") from None
        if not header or header[0] != "iter" or len(header) < 2:
            raise DataError(f"{path}: header must be iter,<param names>")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}")
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise DataError(f"{path}: line {lineno} is not numeric") from None
    if not rows:
        raise DataError(f"{path}: no draws")
    return header[1:], np.array(rows)


def run_diagnose(draws_path, max_lag: int, out: Path) -> dict:
    names, draws = read_draws(draws_path)
    if not 1 <= max_lag < draws.shape[0]:
        raise ValueError(f"max-lag must lie in [1, {draws.shape[0] - 1}]")
    out.mkdir(parents=True, exist_ok=True)
    cols = [diagnostics.acf(draws[:, j], max_lag).rho for j in range(len(names))]
    with open(out / "acf.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["lag"] + names)
        for lag in range(max_lag + 1):
            w.writerow([lag] + [repr(float(c[lag])) for c in cols])
    result = {"draws": int(draws.shape[0]),
              "ess": {name: _safe_ess(draws[:, j]) for j, name in enumerate(names)}}
    with open(out / "diag.json", "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2)
    return result


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dtaug", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="run a Gibbs sampler or EM on a dataset")
    src = fit.add_mutually_exclusive_group(required=True)
    src.add_argument("--fixture", choices=sorted(FIXTURES))
    src.add_argument("--data", type=Path)
    fit.add_argument("--kind", choices=["uni", "multi", "bin"], help="layout of --data")
    fit.add_argument("--scheme", choices=["dta", "da"], default="dta")
    fit.add_argument("--algo", choices=["gibbs", "em"], default="gibbs")
    fit.add_argument("--iters", type=int, default=5100)
    fit.add_argument("--burnin", type=int, default=100)
    fit.add_argument("--seed", type=int, required=True)
    fit.add_argument("--tol", type=float, default=1e-10)
    fit.add_argument("--criterion", choices=["loglik", "param"], default="loglik")
    fit.add_argument("--m1", type=int, default=30)
    fit.add_argument("--m2", type=int, default=30)
    fit.add_argument("--c", type=float, default=3.0)
    fit.add_argument("--gamma", type=float, default=0.0)
    fit.add_argument("--safe-mode", action="store_true", help="floor V_min at 0.999 lambda_min")
    fit.add_argument("--chains", type=int, default=1)
    fit.add_argument("--grid-out", type=Path, help="write the exact Beta-Binomial grid density here")
    fit.add_argument("--out", type=Path, default=Path("."))

    diag = sub.add_parser("diagnose", help="ACF and ESS for a draws.csv")
    diag.add_argument("--draws", type=Path, required=True)
    diag.add_argument("--max-lag", type=int, default=50)
    diag.add_argument("--out", type=Path, default=Path("."))

    sim = sub.add_parser("simulate", help="write a simulated univariate dataset")
    sim.add_argument("--k", type=int, default=50)
    sim.add_argument("--beta", type=float, default=0.0)
    sim.add_argument("--A", type=float, default=5.0)
    sim.add_argument("--v-mean", type=float, default=10.0)
    sim.add_argument("--v-sd", type=float, default=2.0)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--out", type=Path, required=True)
    return parser


def _load(args):
    if args.fixture:
        return FIXTURES[args.fixture]()
    if args.kind is None:
        raise ValueError("--data needs --kind")
    return load_dataset(args.data, args.kind)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "fit":
            cfg = RunConfig(_load(args), args.scheme, args.algo, args.iters, args.burnin, args.seed,
                            args.tol, args.criterion, args.m1, args.m2, args.c, args.gamma, args.out,
                            args.safe_mode, args.chains)
            run_fit(cfg, args.grid_out)
        elif args.command == "diagnose":
            run_diagnose(args.draws, args.max_lag, args.out)
        else:
            data = simulate_uni(args.k, args.beta, args.A, args.v_mean, args.v_sd, args.seed)
            write_dataset(data, args.out)
    except NumericalAbort as exc:
        print(f"dtaug: numerical abort: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"dtaug: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

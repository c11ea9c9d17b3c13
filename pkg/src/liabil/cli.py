"""Command-line interface: ``liabil {fit,simulate,replicate,timegrid,censoring}``.

Every command writes its resolved settings to ``run_config.json`` in the
output directory. A JSON file passed with ``--config`` supplies defaults
(keys are the long option names with dashes replaced by underscores);
explicit flags override it.

Exit codes: 0 success, 1 usage/IO/validation error, 2 non-convergence
(outputs are still written and flagged).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .biprobit import (FitError, IdentifiabilityError, ModelSpec, aic_ipcw, fit as fit_model,
                       test_genetic_effect, test_marginal_homogeneity)
from .censoring import ConvergenceError, NoCensoring, fit_km, fit_weibull_ph, load_censoring, save_censoring
from .data import MODES, DataError, PositivityError, Schema, load_dataset
from .measures import fmt, measures_from_fit, timegrid, write_curve_csv
from .polygenic import polygenic_estimate
from .simulate import DESIGNS, ESTIMATORS, SimConfig, run_replication_study, simulate_cohort

log = logging.getLogger("liabil")

EXIT_OK, EXIT_USAGE, EXIT_NONCONV = 0, 1, 2
MODELS = ("biprobit", "ace", "ade", "ae", "ce", "de", "e", "ac", "ad")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# helpers


def parse_taus(spec: str) -> list[float]:
    """``"60:100:2"`` (inclusive range) or a comma-separated list."""
    spec = str(spec).strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise UsageError("tau range must be start:stop:step")
        a, b, s = map(float, parts)
        if s <= 0 or b < a:
            raise UsageError("tau range needs step > 0 and stop >= start")
        k = int(math.floor((b - a) / s + 1e-9))
        return [a + i * s for i in range(k + 1)]
    return [float(v) for v in spec.split(",") if v.strip()]


def _tau(v) -> float:
    if v is None:
        raise UsageError("--tau is required")
    t = math.inf if str(v).lower() in ("inf", "infinity") else float(v)
    if not t > 0:
        raise UsageError("--tau must be positive")
    return t


def resolve_threads(v) -> int:
    if v is None:
        v = os.environ.get("LIABIL_THREADS", "1")
    try:
        n = int(v)
    except ValueError:
        raise UsageError(f"invalid thread count {v!r}") from None
    return max(1, n)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, np.generic):
        return v.item()
    return v


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=False)
        fh.write("\n")


def _write_run_config(out: Path, args) -> None:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func",)}
    write_json(out / "run_config.json", cfg)


def _load(args):
    schema = Schema.from_dict(getattr(args, "schema", None))
    data = load_dataset(args.data, schema)
    if len(data) == 0:
        raise DataError(f"{args.data}: no complete pairs")
    return data


def _censoring(args, data):
    kind = args.censoring
    if kind == "none":
        return NoCensoring()
    if kind == "km":
        return fit_km(data, "none")
    if kind == "km-zyg":
        return fit_km(data, "by_zygosity")
    if kind == "weibull":
        return fit_weibull_ph(data, tuple(args.cens_covariates or ()))
    if kind.endswith(".json"):
        return load_censoring(kind)
    raise UsageError(f"unknown censoring model {kind!r}")


def _spec(model: str, tau: float, covariates, marginals="shared", rho="zygosity") -> ModelSpec:
    if model == "biprobit":
        return ModelSpec.biprobit(tau, covariates, marginals, rho)
    return ModelSpec.polygenic(model.upper() if model.upper().endswith("E") else model.upper() + "E", tau, covariates)


def _measure_csv(path, rows, digits=6):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "quantity", "zygosity", "estimate", "lower", "upper", "se"])
        for model, q, z, e in rows:
            w.writerow([model, q, z] + [fmt(float(v), digits) for v in (e.value, e.lower, e.upper, e.se)])


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args) -> int:
    tau = _tau(args.tau)
    args.tau = tau
    out = _outdir(args)
    _write_run_config(out, args)
    data = _load(args)
    cens = _censoring(args, data)
    covs = tuple(args.covariates or ())
    report = {"n_pairs": len(data), "rejected_pairs": data.rejected, "censoring": cens.to_dict(), "models": {}}
    rows, ok = [], True
    for model in args.model:
        spec = _spec(model, tau, covs, args.marginals, args.rho)
        f = fit_model(spec, data, cens, args.mode, weight_cap=args.weight_cap)
        ok &= f.converged
        entry = {"fit": f.to_dict(), "aic_ipcw": aic_ipcw(f), "tests": {}}
        ms = measures_from_fit(f)
        entry["measures"] = ms.to_dict()
        rows += [(spec.label, q, z, e) for q, z, e in ms.rows()]
        if spec.kind == "flexible":
            if spec.rho == "zygosity":
                entry["tests"]["genetic_effect"] = test_genetic_effect(f).to_dict()
            full = f if spec.marginals == "zygosity" else fit_model(
                ModelSpec.biprobit(tau, covs, "zygosity", spec.rho), data, cens, args.mode, weight_cap=args.weight_cap)
            ok &= full.converged
            entry["tests"]["marginal_homogeneity"] = test_marginal_homogeneity(full).to_dict()
        else:
            pe = polygenic_estimate(f)
            entry["polygenic"] = pe.to_dict()
            rows += [(spec.label, q, z, e) for q, z, e in pe.rows()]
        report["models"][spec.label] = entry
        log.info("%s: loglik=%.6g AIC_IPCW=%.6g converged=%s", spec.label, f.loglik, f.aic, f.converged)
    if len(report["models"]) > 1:
        aics = {k: v["aic_ipcw"] for k, v in report["models"].items()}
        report["aic_preferred"] = min(aics, key=aics.get)
    report["converged"] = bool(ok)
    write_json(out / "fit.json", report)
    _measure_csv(out / "measures.csv", rows)
    with open(out / "tests.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "test", "statistic", "df", "p_value"])
        for label, entry in report["models"].items():
            for name, t in entry["tests"].items():
                w.writerow([label, name, fmt(float(t["statistic"])), t["df"], fmt(float(t["p_value"]))])
    if not ok:
        log.error("at least one fit did not converge; outputs are flagged")
        return EXIT_NONCONV
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _sim_config(args)
    out = _outdir(args)
    args.resolved = cfg.to_dict()
    _write_run_config(out, args)
    info = {}
    data = simulate_cohort(cfg, info=info)
    data.to_csv(out / "data.csv")
    write_json(out / "simulation.json", {"config": cfg.to_dict(), **info})
    log.info("simulated %d pairs; censored fraction %.3f; clamped times %d", len(data),
             info["censored_fraction"], info["clamped"])
    return EXIT_OK


def _sim_config(args) -> SimConfig:
    base = dict(DESIGNS[args.design]) if args.design else {}
    if args.sim:
        base.update(args.sim)
    for k in ("n_mz", "n_dz", "seed", "log_nu", "tau"):
        v = getattr(args, k, None)
        if v is not None:
            base[k] = _tau(v) if k == "tau" else v
    try:
        return SimConfig.from_dict(base)
    except TypeError as exc:
        raise UsageError(str(exc)) from None


def cmd_replicate(args) -> int:
    cfg = _sim_config(args)
    out = _outdir(args)
    args.resolved = cfg.to_dict()
    threads = resolve_threads(args.threads)
    args.threads = threads
    _write_run_config(out, args)
    est = tuple(args.estimators)
    bad = set(est) - set(ESTIMATORS)
    if bad:
        raise UsageError(f"unknown estimators {sorted(bad)}")
    summary = run_replication_study(cfg, est, args.reps, threads)
    summary.write_csv(out / "summary.csv")
    summary.write_json(out / "summary.json")
    for arm, k in summary.failures.items():
        if k:
            log.warning("%s: %d/%d replicates failed", arm, k, args.reps)
    return EXIT_OK


def cmd_timegrid(args) -> int:
    taus = parse_taus(args.taus)
    out = _outdir(args)
    threads = resolve_threads(args.threads)
    args.threads = threads
    _write_run_config(out, args)
    data = _load(args)
    cens = _censoring(args, data)
    spec = ModelSpec.biprobit(taus[-1], tuple(args.covariates or ()), args.marginals, "zygosity")
    comps = tuple(m.upper() for m in args.polygenic)
    grid = timegrid(spec, data, cens, taus, comps, args.mode, args.min_concordant, threads)
    write_curve_csv(out / "curve.csv", grid)
    write_json(out / "grid.json", [
        {"tau": g.tau, "error": g.error, "flags": g.flags, "aic_ipcw": g.aic,
         "measures": None if g.measures is None else g.measures.to_dict(),
         "polygenic": {k: v.to_dict() for k, v in g.polygenic.items()}}
        for g in grid
    ])
    failed = [g.tau for g in grid if g.error]
    if failed:
        log.warning("%d grid point(s) failed: %s", len(failed), failed)
    nonconv = any(any("not converged" in f for f in g.flags) for g in grid)
    return EXIT_NONCONV if nonconv else EXIT_OK


def cmd_censoring(args) -> int:
    out = _outdir(args)
    _write_run_config(out, args)
    data = _load(args)
    cens = _censoring(args, data)
    save_censoring(cens, out / "censoring.json")
    frac = float((data.status == 0).mean())
    log.info("censoring model %s fitted on %d pairs (censored fraction %.3f)", cens.kind, len(data), frac)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common(p, data=True):
    p.add_argument("--config", help="JSON file with default option values")
    p.add_argument("--out", default="liabil_out", help="output directory")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    if data:
        p.add_argument("--data", help="one-row-per-individual CSV")
        p.add_argument("--censoring", default="weibull",
                       help="none, km, km-zyg, weibull, or a saved censoring JSON file")
        p.add_argument("--cens-covariates", nargs="*", default=[], help="covariates of the Weibull censoring model")
        p.add_argument("--mode", default="cap_at_tau", choices=MODES)


def _sim_options(p):
    p.add_argument("--design", choices=sorted(DESIGNS), help="named simulation design")
    p.add_argument("--n-mz", type=int)
    p.add_argument("--n-dz", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--log-nu", type=float)
    p.add_argument("--tau")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="liabil", description="IPCW liability-threshold models for censored twin data")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("fit", help="fit bivariate probit or polygenic models at one horizon")
    _common(p)
    p.add_argument("--tau", help="horizon (number or 'inf')")
    p.add_argument("--model", nargs="+", default=["biprobit"], choices=MODELS)
    p.add_argument("--marginals", default="shared", choices=["shared", "zygosity"])
    p.add_argument("--rho", default="zygosity", choices=["zygosity", "common", "additive"])
    p.add_argument("--covariates", nargs="*", default=[])
    p.add_argument("--weight-cap", type=float)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="simulate a twin cohort to CSV")
    _common(p, data=False)
    _sim_options(p)
    p.set_defaults(func=cmd_simulate, sim=None)

    p = sub.add_parser("replicate", help="replication study with Av./Cv./MSE summaries")
    _common(p, data=False)
    _sim_options(p)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--estimators", nargs="+", default=list(ESTIMATORS))
    p.add_argument("--threads", type=int, help="worker processes (default: LIABIL_THREADS or 1)")
    p.set_defaults(func=cmd_replicate, sim=None)

    p = sub.add_parser("timegrid", help="fits over a grid of horizons, curve CSV output")
    _common(p)
    p.add_argument("--taus", required=False, help="start:stop:step or comma list")
    p.add_argument("--polygenic", nargs="*", default=["ACE", "ADE"])
    p.add_argument("--marginals", default="shared", choices=["shared", "zygosity"])
    p.add_argument("--covariates", nargs="*", default=[])
    p.add_argument("--min-concordant", type=int, default=5)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_timegrid)

    p = sub.add_parser("censoring", help="fit and save a censoring model")
    _common(p)
    p.set_defaults(func=cmd_censoring)
    return parser


def _apply_config(parser, argv):
    """Parse twice: once to find ``--config`` and once with its values as defaults."""
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions} | {"schema", "sim"}
        unknown = set(cfg) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        subparser.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if not getattr(args, "command", None):
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
        if args.command in ("fit", "timegrid", "censoring") and not args.data:
            raise UsageError("--data is required")
        if args.command == "timegrid" and not args.taus:
            raise UsageError("--taus is required")
        if args.command == "fit" and args.tau is None:
            raise UsageError("--tau is required")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, PositivityError, IdentifiabilityError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FitError, ConvergenceError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONV


if __name__ == "__main__":
    sys.exit(main())

"""Prevalence, concordance and related dependence measures at a horizon and over a grid."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .biprobit import FitResult, ModelSpec, fit as fit_model
from .data import TwinData, classify
from .intervals import Estimate, delta_interval
from .normal import Phi, Phi_inv, bvn_cdf_derivs, phi
from .polygenic import PolygenicEstimate, polygenic_estimate

log = logging.getLogger(__name__)

ZYG = ("MZ", "DZ")


@dataclass
class MeasureSet:
    """Dependence measures at ``tau``; each field maps zygosity to an estimate."""

    tau: float
    F1: dict[str, Estimate]
    C: dict[str, Estimate]
    casewise: dict[str, Estimate]
    lambdaR: dict[str, Estimate]
    logOR: dict[str, Estimate]
    rho: dict[str, Estimate]
    shared_marginals: bool = True

    def rows(self):
        out = []
        if self.shared_marginals:
            out.append(("F1", "all", self.F1["MZ"]))
        else:
            out += [("F1", z, self.F1[z]) for z in ZYG]
        for q in ("C", "casewise", "lambdaR", "logOR", "rho"):
            out += [(q, z, getattr(self, q)[z]) for z in ZYG]
        return out

    def to_dict(self):
        return {
            "tau": self.tau if math.isfinite(self.tau) else "inf",
            **{q if z == "all" else f"{q}_{z}": {"estimate": e.value, "lower": e.lower, "upper": e.upper, "se": e.se}
               for q, z, e in self.rows()},
        }


def concordance_measures(F1: float, rho: float):
    """Closed-form ``(C, casewise, lambdaR, logOR)`` for exchangeable margins."""
    if not 0.0 < F1 < 1.0:
        raise ValueError("F1 must lie in (0, 1); lambdaR is undefined otherwise")
    m = float(Phi_inv(F1))
    C = float(bvn_cdf_derivs(np.array([m]), np.array([m]), np.array([rho]))[0][0])
    return C, C / F1, C / F1**2, _log_odds_ratio(F1, C)


def _log_odds_ratio(F1, C):
    if C <= 0.0:
        return -math.inf
    if C >= F1:
        return math.inf
    return math.log(C) + math.log(1 - 2 * F1 + C) - 2 * math.log(F1 - C)


def measures_from_fit(fit: FitResult, x_ref=None, vcov=None, level: float = 0.95) -> MeasureSet:
    """Measures at the reference covariate vector (default: sample mean)."""
    V = fit.vcov if vcov is None else vcov
    model = fit.model
    xr = fit.x_ref if x_ref is None else np.concatenate([[1.0], np.asarray(x_ref, float)])
    X = xr[None, :]
    out = {k: {} for k in ("F1", "C", "casewise", "lambdaR", "logOR", "rho")}
    for z in ZYG:
        mu, rho, J, _ = model.natural(fit.theta, X, X, np.array([z == "MZ"]), second=False)
        m, r = float(mu[0, 0]), float(rho[0])
        dmu, drho = J[0, 0], J[0, 2]
        F1 = float(Phi(m))
        if not F1 > 0.0:
            raise ValueError("estimated F1 is zero; lambdaR is undefined")
        dF = phi(m) * dmu
        p, g, _ = bvn_cdf_derivs(np.array([m]), np.array([m]), np.array([r]))
        C = float(p[0])
        dC = (g[0, 0] + g[0, 1]) * dmu + g[0, 2] * drho
        out["F1"][z] = delta_interval(F1, dF, V, "logit", level)
        out["C"][z] = delta_interval(C, dC, V, "logit", level)
        out["casewise"][z] = delta_interval(C / F1, dC / F1 - C * dF / F1**2, V, "logit", level)
        out["lambdaR"][z] = delta_interval(C / F1**2, dC / F1**2 - 2 * C * dF / F1**3, V, "log", level)
        D = 1.0 - 2.0 * F1 + C
        lor = _log_odds_ratio(F1, C)
        dlor = dC / C + (dC - 2.0 * dF) / D - 2.0 * (dF - dC) / (F1 - C) if math.isfinite(lor) else np.zeros_like(dC)
        out["logOR"][z] = delta_interval(lor, dlor, V, "identity", level)
        out["rho"][z] = delta_interval(r, drho, V, "atanh", level)
    shared = not (fit.spec.kind == "flexible" and fit.spec.marginals == "zygosity")
    return MeasureSet(fit.spec.tau, shared_marginals=shared, **out)


@dataclass
class GridRow:
    tau: float
    measures: MeasureSet | None = None
    polygenic: dict[str, PolygenicEstimate] = field(default_factory=dict)
    aic: dict[str, float] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    error: str | None = None


def _concordant_counts(data: TwinData, tau: float, censoring, mode: str):
    cls = classify(data, tau, censoring, mode)
    both = cls.usable & (cls.y.sum(1) == 2)
    return {"MZ": int((both & data.mz).sum()), "DZ": int((both & ~data.mz).sum())}


def _grid_point(spec, data, censoring, tau, polygenic, mode, min_concordant):
    row = GridRow(tau)
    try:
        counts = _concordant_counts(data, tau, censoring, mode)
        low = [z for z, k in counts.items() if k < min_concordant]
        if low:
            row.error = f"fewer than {min_concordant} usable concordant pairs ({', '.join(low)})"
            return row
        f = fit_model(replace(spec, tau=tau), data, censoring, mode)
        if not f.converged:
            row.flags.append(f"{f.spec.label}: not converged")
        row.measures = measures_from_fit(f)
        row.aic[f.spec.label] = f.aic
        for comps in polygenic:
            ps = ModelSpec.polygenic(comps, tau, spec.covariates)
            pf = fit_model(ps, data, censoring, mode)
            if not pf.converged:
                row.flags.append(f"{ps.label}: not converged")
            if pf.boundary:
                row.flags.append(f"{ps.label}: boundary {','.join(pf.boundary)}")
            row.polygenic[ps.label] = polygenic_estimate(pf)
            row.aic[ps.label] = pf.aic
    except Exception as exc:  # a failing grid point must not stop the grid
        log.warning("tau=%g: %s", tau, exc)
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def timegrid(spec: ModelSpec, data: TwinData, censoring, taus, polygenic=("ACE", "ADE"),
             mode: str = "cap_at_tau", min_concordant: int = 5, threads: int = 1) -> list[GridRow]:
    """Independent fits at each horizon in ``taus`` (strictly increasing).

    ``spec`` supplies the flexible model (its ``tau`` is replaced);
    each polygenic component set in ``polygenic`` is fitted as well.
    Failures are recorded per row and never abort the grid.
    """
    taus = [float(t) for t in taus]
    if not taus:
        raise ValueError("empty tau grid")
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise ValueError("taus must be strictly increasing")
    if spec.kind != "flexible":
        raise ValueError("timegrid needs a flexible model spec; polygenic fits are requested via `polygenic`")

    def one(t):
        return _grid_point(spec, data, censoring, t, polygenic, mode, min_concordant)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(one, taus))
    return [one(t) for t in taus]


def curve_rows(grid: list[GridRow]):
    """Long-format rows ``(tau, estimate, lower, upper, quantity, zygosity)``."""
    out = []
    for row in grid:
        items = []
        if row.measures is not None:
            items += row.measures.rows()
        for label, pe in row.polygenic.items():
            items += [(f"{q}[{label}]", z, e) for q, z, e in pe.rows()]
        out += [(row.tau, e.value, e.lower, e.upper, q, z) for q, z, e in items]
    return out


def fmt(v, digits: int = 6) -> str:
    if isinstance(v, (float, np.floating)):
        return "inf" if v == math.inf else ("-inf" if v == -math.inf else f"{v:.{digits}g}")
    return str(v)


def write_curve_csv(path, grid: list[GridRow], digits: int = 6) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "estimate", "lower", "upper", "quantity", "zygosity"])
        for r in curve_rows(grid):
            w.writerow([fmt(v, digits) for v in r])

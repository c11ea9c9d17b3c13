"""Synthetic twin cohorts with competing risks and replication studies.

Cause 1 follows a liability threshold model with random effects
``eta_1 = eta_A + eta_C (+ eta_D)``; the competing cause (death) shares the
C component. Event times are drawn by exact inversion of the conditional
cumulative incidence functions.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .biprobit import ModelSpec, fit as fit_model
from .censoring import fit_km, fit_weibull_ph
from .data import TwinData
from .measures import concordance_measures, fmt, measures_from_fit
from .normal import Phi, Phi_inv
from .polygenic import polygenic_estimate

log = logging.getLogger(__name__)

ESTIMATORS = ("naive", "weibull1", "weibull2", "km")
ESTIMANDS = ("F1", "C_MZ", "C_DZ", "rho_MZ", "rho_DZ", "lambdaR_MZ", "lambdaR_DZ",
             "logOR_MZ", "logOR_DZ", "var_A", "var_C", "var_D", "var_E", "H2")


@dataclass(frozen=True)
class SimConfig:
    """Generator settings. Variance components are on the unit-total liability scale."""

    n_mz: int = 2000
    n_dz: int = 2000
    var_a: float = 1 / 3
    var_c: float = 1 / 3
    var_d: float = 0.0
    p1: float = 0.065
    alpha_const: tuple[float, float] = (10.0, 0.15)
    death_const: tuple[float, float] = (0.1, 85.0)
    sigma_e2_death: float | None = None
    censoring: str = "weibull"
    log_lambda: float = -4.5
    log_nu: float = 0.5
    birth_mz: tuple[float, float] = (1900.0, 1982.0)
    birth_dz: tuple[float, float] = (1900.0, 1982.0)
    follow_up: float = 2009.0
    covariate: bool = False
    var_x: float = 0.25
    x_on_c: float = 0.5
    x_on_death: float = -0.25
    x_on_cens: float = -1.0
    t_max: float = 120.0
    tau: float = math.inf
    seed: int = 1

    def __post_init__(self):
        comps = (self.var_a, self.var_c, self.var_d)
        if min(comps) < 0:
            raise ValueError("variance components must be nonnegative")
        if not sum(comps) < 1:
            raise ValueError("var_a + var_c + var_d must be below 1 (sigma_E1^2 > 0)")
        if not 0 < self.p1 < 1:
            raise ValueError("p1 must lie in (0, 1)")
        if self.n_mz < 0 or self.n_dz < 0:
            raise ValueError("pair counts must be nonnegative")
        if self.covariate and self.var_c < self.x_on_c**2 * self.var_x:
            raise ValueError("var_c is too small for the covariate loading on the C component")
        if self.censoring not in ("weibull", "administrative", "none"):
            raise ValueError("censoring must be 'weibull', 'administrative' or 'none'")
        if not self.sigma_e1_sq > 0 or not self.sigma_e2_sq > 0:
            raise ValueError("residual variances must be positive")

    @property
    def var_e(self) -> float:
        return 1.0 - self.var_a - self.var_c - self.var_d

    @property
    def sigma_e1_sq(self) -> float:
        return 1.0 - (self.var_a + self.var_c + self.var_d)

    @property
    def var_eta2(self) -> float:
        if not self.covariate:
            return self.var_c
        c0 = self.var_c - self.x_on_c**2 * self.var_x
        return c0 + (self.x_on_c + self.x_on_death) ** 2 * self.var_x

    @property
    def sigma_e2_sq(self) -> float:
        return self.sigma_e2_death if self.sigma_e2_death is not None else 1.0 - self.var_eta2

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown simulation settings: {sorted(unknown)}")
        kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()}
        if kw.get("tau") in ("inf", "Inf", None) and "tau" in kw:
            kw["tau"] = math.inf
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tau"] = "inf" if math.isinf(self.tau) else self.tau
        return d


def _components(a, c, log_nu):
    return dict(var_a=a, var_c=c, log_nu=log_nu)


DESIGNS = {
    "baseline-equal": _components(1 / 3, 1 / 3, 0.5),
    "baseline-half": _components(1 / 2, 1 / 4, 0.5),
    "baseline-three-fifths": _components(3 / 5, 1 / 5, 0.5),
    "late-equal": _components(1 / 3, 1 / 3, 2.0),
    "late-half": _components(1 / 2, 1 / 4, 2.0),
    "late-three-fifths": _components(3 / 5, 1 / 5, 2.0),
    "covariate-equal": dict(var_a=1 / 3, var_c=1 / 3, covariate=True),
    "covariate-half": dict(var_a=1 / 2, var_c=1 / 4, covariate=True),
    "covariate-three-fifths": dict(var_a=3 / 5, var_c=1 / 5, covariate=True),
    # dominance-heavy registry: heavy administrative censoring, more DZ than MZ pairs
    "registry": dict(n_mz=5488, n_dz=10021, var_a=0.30, var_c=0.0, var_d=0.33, p1=0.055,
                     censoring="administrative", birth_mz=(1900.0, 1982.0), birth_dz=(1915.0, 1982.0)),
}


def design(name: str, **overrides) -> SimConfig:
    if name not in DESIGNS:
        raise ValueError(f"unknown design {name!r}; choose from {sorted(DESIGNS)}")
    return SimConfig(**{**DESIGNS[name], **overrides})


def true_values(config: SimConfig, tau: float | None = None) -> dict[str, float]:
    """Closed-form values of every estimand under ``config`` at horizon ``tau``."""
    tau = config.tau if tau is None else tau
    c = float(Phi_inv(config.p1))
    a0, a1 = config.alpha_const
    alpha = 0.0 if math.isinf(tau) else -math.exp(a0 - a1 * tau)
    F1 = float(Phi(alpha + c))
    A, C, D = config.var_a, config.var_c, config.var_d
    rho = {"MZ": A + C + D, "DZ": 0.5 * A + C + 0.25 * D}
    out = {"F1": F1}
    for z, r in rho.items():
        Cz, cw, lam, lor = concordance_measures(F1, r)
        out.update({f"C_{z}": Cz, f"casewise_{z}": cw, f"lambdaR_{z}": lam, f"logOR_{z}": lor, f"rho_{z}": r})
    out.update(var_A=A, var_C=C, var_D=D, var_E=config.var_e, H2=A + D)
    return out


def _pair_effects(rng, n, mz, var, share_dz):
    """Twin-pair normal effects of variance ``var``: identical in MZ, correlation ``share_dz`` in DZ."""
    if var == 0.0:
        return np.zeros((n, 2))
    s = math.sqrt(var)
    common = rng.standard_normal(n)
    own = rng.standard_normal((n, 2))
    w = math.sqrt(share_dz)
    dz = w * common[:, None] + math.sqrt(1.0 - share_dz) * own
    return s * np.where(mz[:, None], common[:, None], dz)


def cause1_times(u, eta1, c, s1, alpha_const=(10.0, 0.15), t_max=120.0):
    """Invert ``t -> Phi((alpha(t) + c + eta1) / s1) / Phi((c + eta1) / s1)`` at ``u``.

    ``alpha(t) = -exp(a0 - a1 t)``. Draws that land beyond the range of
    alpha map to ``t_max``.
    """
    a0, a1 = alpha_const
    f_inf = Phi((eta1 + c) / s1)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = s1 * Phi_inv(np.clip(u * f_inf, 1e-300, 1 - 1e-16))
        t = (a0 - np.log(c + eta1 - v)) / a1
    return np.where(np.isfinite(t), t, t_max)


def death_times(u, eta2, s2, death_const=(0.1, 85.0)):
    """Invert ``t -> Phi((b1 (t - b0) + eta2) / s2)`` at ``u``."""
    b1, b0 = death_const
    return b0 + (s2 * Phi_inv(np.clip(u, 1e-16, 1 - 1e-16)) - eta2) / b1


def simulate_cohort(config: SimConfig, rng: np.random.Generator | None = None, info: dict | None = None) -> TwinData:
    """Draw ``n_mz`` MZ followed by ``n_dz`` DZ pairs.

    Event times outside [0, t_max] are clamped and counted in
    ``info["clamped"]`` when a dict is supplied.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    n = config.n_mz + config.n_dz
    mz = np.arange(n) < config.n_mz
    cfg = config

    x = rng.normal(0.0, math.sqrt(cfg.var_x), n) if cfg.covariate else np.zeros(n)
    eta_a = _pair_effects(rng, n, mz, cfg.var_a, 0.5)
    eta_d = _pair_effects(rng, n, mz, cfg.var_d, 0.25)
    if cfg.covariate:
        c0 = _pair_effects(rng, n, np.ones(n, bool), cfg.var_c - cfg.x_on_c**2 * cfg.var_x, 1.0)
        eta_c = cfg.x_on_c * x[:, None] + c0
    else:
        eta_c = _pair_effects(rng, n, np.ones(n, bool), cfg.var_c, 1.0)
    eta1 = eta_a + eta_c + eta_d
    eta2 = eta_c + (cfg.x_on_death * x[:, None] if cfg.covariate else 0.0)

    c = float(Phi_inv(cfg.p1))
    s1 = math.sqrt(cfg.sigma_e1_sq)
    s2 = math.sqrt(cfg.sigma_e2_sq)
    f_inf = Phi((eta1 + c) / s1)
    cause = np.where(rng.random((n, 2)) < f_inf, 1, 2)

    t1 = cause1_times(rng.random((n, 2)), eta1, c, s1, cfg.alpha_const, cfg.t_max)
    t2 = death_times(rng.random((n, 2)), eta2, s2, cfg.death_const)
    t = np.where(cause == 1, t1, t2)
    clamped = (t < 0) | (t > cfg.t_max)
    t = np.clip(t, 0.0, cfg.t_max)

    if cfg.censoring == "weibull":
        lam, nu = math.exp(cfg.log_lambda), math.exp(cfg.log_nu)
        cens = (-np.log(rng.random(n))) ** (1.0 / nu) / lam
        if cfg.covariate:
            cens = cens * np.exp(-cfg.x_on_cens * x / nu)
    elif cfg.censoring == "administrative":
        lo = np.where(mz, cfg.birth_mz[0], cfg.birth_dz[0])
        hi = np.where(mz, cfg.birth_mz[1], cfg.birth_dz[1])
        cens = cfg.follow_up - (lo + (hi - lo) * rng.random(n))
    else:
        cens = np.full(n, np.inf)
    observed = t <= cens[:, None]
    time = np.where(observed, t, cens[:, None])
    status = np.where(observed, cause, 0)

    if info is not None:
        info["clamped"] = int(clamped.sum())
        info["censored_fraction"] = float((status == 0).mean()) if n else math.nan
    if clamped.any():
        log.debug("%d simulated event times clamped to [0, %g]", int(clamped.sum()), cfg.t_max)
    xs = np.repeat(x[:, None, None], 2, axis=1)
    return TwinData(
        pair_id=np.array([f"p{i + 1}" for i in range(n)]),
        mz=mz,
        time=time,
        status=status.astype(int),
        x=xs if cfg.covariate else np.zeros((n, 2, 0)),
        z=xs.copy() if cfg.covariate else np.zeros((n, 2, 0)),
        x_names=("X",) if cfg.covariate else (),
        z_names=("X",) if cfg.covariate else (),
    )


# ---------------------------------------------------------------------------
# replication


def _estimates(data, config, censoring, mode, vcovs):
    """Estimates for each variance choice in ``vcovs`` (a list of 'if2'/'if3'/'model')."""
    comps = "ADE" if config.var_d > 0 and config.var_c == 0 else "ACE"
    flex = fit_model(ModelSpec.biprobit(config.tau), data, censoring, mode)
    poly = fit_model(ModelSpec.polygenic(comps, config.tau), data, censoring, mode)
    if not (flex.converged and poly.converged):
        raise RuntimeError("fit did not converge")
    pick = {"if2": lambda f: f.vcov_if2, "if3": lambda f: f.vcov_if3, "model": lambda f: f.vcov_model}
    out = []
    for v in vcovs:
        ms = measures_from_fit(flex, vcov=pick[v](flex))
        pe = polygenic_estimate(poly, vcov=pick[v](poly))
        est = {"F1": ms.F1["MZ"]}
        for z in ("MZ", "DZ"):
            est[f"C_{z}"] = ms.C[z]
            est[f"rho_{z}"] = ms.rho[z]
            est[f"lambdaR_{z}"] = ms.lambdaR[z]
            est[f"logOR_{z}"] = ms.logOR[z]
        for k in "ACDE":
            est[f"var_{k}"] = pe.proportions[k]
        est["H2"] = pe.H2
        out.append(est)
    return out


def run_replicate(config: SimConfig, estimators, seed_seq: np.random.SeedSequence):
    """One replicate: ``{arm: {estimand: (value, lower, upper)} or error string}``."""
    data = simulate_cohort(config, np.random.default_rng(seed_seq))
    res = {}
    arms = set(estimators)
    if "naive" in arms:
        try:
            res["naive"] = _estimates(data, config, None, "naive", ["if2"])[0]
        except Exception as exc:
            res["naive"] = f"{type(exc).__name__}: {exc}"
    if arms & {"weibull1", "weibull2"}:
        try:
            z = ("X",) if config.covariate else ()
            cens = fit_weibull_ph(data, z)
            want = [a for a in ("weibull1", "weibull2") if a in arms]
            ests = _estimates(data, config, cens, "cap_at_tau", ["if2" if a == "weibull1" else "if3" for a in want])
            res.update(zip(want, ests))
        except Exception as exc:
            for a in arms & {"weibull1", "weibull2"}:
                res[a] = f"{type(exc).__name__}: {exc}"
    if "km" in arms:
        try:
            res["km"] = _estimates(data, config, fit_km(data), "cap_at_tau", ["if2"])[0]
        except Exception as exc:
            res["km"] = f"{type(exc).__name__}: {exc}"
    return {a: (r if isinstance(r, str) else {k: e.as_tuple() for k, e in r.items()}) for a, r in res.items()}


@dataclass
class SummaryRow:
    estimator: str
    estimand: str
    true: float
    mean: float
    coverage: float
    mse100: float
    n_ok: int
    n_failed: int


@dataclass
class ReplicationSummary:
    config: SimConfig
    n_reps: int
    rows: list[SummaryRow]
    failures: dict[str, int] = field(default_factory=dict)
    errors: dict[str, list[str]] = field(default_factory=dict)

    def get(self, estimator: str, estimand: str) -> SummaryRow:
        for r in self.rows:
            if r.estimator == estimator and r.estimand == estimand:
                return r
        raise KeyError((estimator, estimand))

    def write_csv(self, path, digits: int = 6) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["estimator", "estimand", "true", "Av.", "Cv.", "MSEx100", "n_ok", "n_failed"])
            for r in self.rows:
                w.writerow([r.estimator, r.estimand] + [fmt(float(v), digits) for v in (r.true, r.mean, r.coverage, r.mse100)]
                           + [r.n_ok, r.n_failed])

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "n_reps": self.n_reps,
            "failures": self.failures,
            "errors": self.errors,
            "rows": [asdict(r) for r in self.rows],
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _run_one(args):
    config, estimators, ss = args
    return run_replicate(config, estimators, ss)


def run_replication_study(config: SimConfig, estimators=ESTIMATORS, n_reps: int = 200,
                          threads: int = 1, progress=None) -> ReplicationSummary:
    """Average estimate, CI coverage and MSE x 100 per estimator and estimand.

    Replicate ``r`` uses the ``r``-th child of ``SeedSequence(config.seed)``,
    so results do not depend on ``threads``.
    """
    if n_reps < 2:
        raise ValueError("n_reps must be at least 2")
    estimators = tuple(e for e in ESTIMATORS if e in set(estimators))
    bad = set(estimators) - set(ESTIMATORS)
    if bad or not estimators:
        raise ValueError(f"estimators must be a subset of {ESTIMATORS}")
    seeds = np.random.SeedSequence(config.seed).spawn(n_reps)
    jobs = [(config, estimators, s) for s in seeds]
    if threads > 1:
        with ProcessPoolExecutor(threads) as ex:
            reps = list(ex.map(_run_one, jobs, chunksize=max(1, n_reps // (4 * threads))))
    else:
        reps = []
        for i, j in enumerate(jobs):
            reps.append(_run_one(j))
            if progress:
                progress(i + 1, n_reps)
    truth = true_values(config)
    rows, failures, errors = [], {}, {}
    for arm in estimators:
        ok = [r[arm] for r in reps if isinstance(r.get(arm), dict)]
        errs = [r[arm] for r in reps if isinstance(r.get(arm), str)]
        failures[arm] = len(errs)
        if errs:
            errors[arm] = sorted(set(errs))[:5]
            log.warning("%s: %d of %d replicates failed", arm, len(errs), n_reps)
        for k in ESTIMANDS:
            t = truth[k]
            if ok:
                vals = np.array([r[k][0] for r in ok])
                cov = np.mean([r[k][1] <= t <= r[k][2] for r in ok])
                mean, mse = float(vals.mean()), float(100.0 * np.mean((vals - t) ** 2))
            else:
                mean = cov = mse = math.nan
            rows.append(SummaryRow(arm, k, t, mean, float(cov), mse, len(ok), len(errs)))
    return ReplicationSummary(config, n_reps, rows, failures, errors)


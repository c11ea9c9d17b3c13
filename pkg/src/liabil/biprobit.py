"""IPCW bivariate probit and polygenic liability-threshold models.

Parameters enter the pair likelihood only through the natural quantities
``(mu_1, mu_2, rho)``: the probit-scale marginal thresholds of the two
twins and their tetrachoric correlation. Each model maps ``theta`` to
those quantities and supplies first and second derivatives, so score and
observed information are assembled exactly by the chain rule.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import Classified, TwinData, classify
from .normal import Phi, bvn_cdf_derivs, phi

log = logging.getLogger(__name__)

P_FLOOR = 1e-300
LOGVAR_BOUNDARY = -15.0
ATANH_BOUNDARY = 7.0

# kinship (MZ, DZ) multipliers of each variance component in the twin covariance
KINSHIP = {"A": (1.0, 0.5), "C": (1.0, 1.0), "D": (1.0, 0.25)}


class IdentifiabilityError(ValueError):
    pass


class FitError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# model specifications


@dataclass(frozen=True)
class ModelSpec:
    """What to fit at horizon ``tau``.

    ``kind`` is ``"flexible"`` (bivariate probit with zygosity-specific
    tetrachoric correlations) or ``"polygenic"`` (variance components
    from ``components``, a subset of "ACD"; E is implicit with variance 1).
    ``marginals`` ("shared"/"zygosity") and ``rho`` ("zygosity", "common",
    "additive" meaning rho_DZ = rho_MZ / 2) apply to flexible models.
    """

    kind: str = "flexible"
    tau: float = math.inf
    covariates: tuple[str, ...] = ()
    marginals: str = "shared"
    rho: str = "zygosity"
    components: str = "ACE"

    def __post_init__(self):
        if self.kind not in ("flexible", "polygenic"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.kind == "flexible":
            if self.marginals not in ("shared", "zygosity"):
                raise ValueError("marginals must be 'shared' or 'zygosity'")
            if self.rho not in ("zygosity", "common", "additive"):
                raise ValueError("rho must be 'zygosity', 'common' or 'additive'")
        else:
            comps = self.components.upper()
            if not set(comps) <= set("ACDE"):
                raise ValueError(f"unknown variance components {self.components!r}")
            if {"A", "C", "D"} <= set(comps):
                raise IdentifiabilityError(
                    "A, C and D cannot be estimated jointly from twin pairs; drop one component"
                )

    @classmethod
    def biprobit(cls, tau=math.inf, covariates=(), marginals="shared", rho="zygosity"):
        return cls("flexible", tau, tuple(covariates), marginals, rho)

    @classmethod
    def polygenic(cls, components="ACE", tau=math.inf, covariates=()):
        return cls("polygenic", tau, tuple(covariates), components=components.upper())

    @property
    def variance_components(self) -> tuple[str, ...]:
        return tuple(c for c in "ACD" if c in self.components.upper())

    @property
    def label(self) -> str:
        if self.kind == "polygenic":
            return "".join(self.variance_components) + "E"
        label = "biprobit"
        if self.marginals == "zygosity":
            label += "-zygmarg"
        if self.rho != "zygosity":
            label += f"-rho{self.rho}"
        return label

    def build(self, x_names):
        return (_Flexible if self.kind == "flexible" else _Polygenic)(self, tuple(x_names))


@dataclass
class Design:
    """Model inputs for the usable pairs."""

    X1: np.ndarray
    X2: np.ndarray
    mz: np.ndarray
    y: np.ndarray
    w: np.ndarray


class _Flexible:
    def __init__(self, spec: ModelSpec, x_names):
        self.spec = spec
        self.x_names = ("(Intercept)", *x_names)
        p = len(self.x_names)
        if spec.marginals == "shared":
            self.names = [f"beta:{n}" for n in self.x_names]
            self.beta_idx = {True: np.arange(p), False: np.arange(p)}
        else:
            self.names = [f"beta_MZ:{n}" for n in self.x_names] + [f"beta_DZ:{n}" for n in self.x_names]
            self.beta_idx = {True: np.arange(p), False: np.arange(p, 2 * p)}
        k = len(self.names)
        if spec.rho == "zygosity":
            self.names += ["atanh_rho_MZ", "atanh_rho_DZ"]
            self.rho_idx = {True: k, False: k + 1}
        else:
            self.names += ["atanh_rho"]
            self.rho_idx = {True: k, False: k}
        self.n_params = len(self.names)

    def initial(self, beta0):
        theta = np.zeros(self.n_params)
        theta[self.beta_idx[True]] = beta0
        theta[self.beta_idx[False]] = beta0
        return theta

    def rho_of(self, theta, mz: bool):
        t = math.tanh(theta[self.rho_idx[mz]])
        return t / 2.0 if (self.spec.rho == "additive" and not mz) else t

    def natural(self, theta, X1, X2, mz, second=True):
        n, P = len(mz), self.n_params
        mu = np.empty((n, 2))
        rho = np.empty(n)
        J = np.zeros((n, 3, P))
        Hn = np.zeros((n, 3, P, P)) if second else None
        for zyg in (True, False):
            m = mz == zyg
            if not np.any(m):
                continue
            bi = self.beta_idx[zyg]
            mu[m, 0] = X1[m] @ theta[bi]
            mu[m, 1] = X2[m] @ theta[bi]
            J[np.ix_(m, [0], bi)] = X1[m][:, None, :]
            J[np.ix_(m, [1], bi)] = X2[m][:, None, :]
            ri = self.rho_idx[zyg]
            t = math.tanh(theta[ri])
            scale = 0.5 if (self.spec.rho == "additive" and not zyg) else 1.0
            rho[m] = scale * t
            J[m, 2, ri] = scale * (1.0 - t * t)
            if second:
                Hn[m, 2, ri, ri] = scale * (-2.0 * t * (1.0 - t * t))
        return mu, rho, J, Hn


class _Polygenic:
    def __init__(self, spec: ModelSpec, x_names):
        self.spec = spec
        self.x_names = ("(Intercept)", *x_names)
        self.comps = spec.variance_components
        p = len(self.x_names)
        self.names = [f"beta:{n}" for n in self.x_names] + [f"log_var_{c}" for c in self.comps]
        self.beta_idx = np.arange(p)
        self.var_idx = np.arange(p, p + len(self.comps))
        self.n_params = len(self.names)

    def initial(self, beta0):
        theta = np.zeros(self.n_params)
        theta[self.var_idx] = math.log(0.5)
        q = (1.0 + 0.5 * len(self.comps)) ** -0.5
        theta[self.beta_idx] = np.asarray(beta0) / q
        return theta

    def variances(self, theta):
        return {c: math.exp(theta[i]) for c, i in zip(self.comps, self.var_idx)}

    def rho_of(self, theta, mz: bool):
        v = self.variances(theta)
        k = 0 if mz else 1
        return sum(KINSHIP[c][k] * v[c] for c in self.comps) / (1.0 + sum(v.values()))

    def natural(self, theta, X1, X2, mz, second=True):
        n, P = len(mz), self.n_params
        bi, vi = self.beta_idx, self.var_idx
        v = np.exp(theta[vi])
        D = 1.0 + v.sum()
        q = D ** -0.5
        beta = theta[bi]
        u = np.stack([X1 @ beta, X2 @ beta], axis=1)
        mu = u * q
        cmat = np.array([[KINSHIP[c][0] for c in self.comps], [KINSHIP[c][1] for c in self.comps]])
        c = np.where(mz[:, None], cmat[0][None, :], cmat[1][None, :]) if len(self.comps) else np.zeros((n, 0))
        rho = (c * v[None, :]).sum(1) / D
        J = np.zeros((n, 3, P))
        J[:, 0, bi] = X1 * q
        J[:, 1, bi] = X2 * q
        for j in range(2):
            J[:, j, vi] = -0.5 * mu[:, j, None] * q * q * v[None, :]
        J[:, 2, vi] = v[None, :] * (c - rho[:, None]) / D
        Hn = None
        if second:
            Hn = np.zeros((n, 3, P, P))
            nv = len(vi)
            for j, X in enumerate((X1, X2)):
                cross = -0.5 * X[:, :, None] * q**3 * v[None, None, :]
                Hn[:, j, bi[:, None], vi[None, :]] = cross
                Hn[:, j, vi[:, None], bi[None, :]] = np.transpose(cross, (0, 2, 1))
                vv = 0.75 * q**4 * np.outer(v, v) - 0.5 * q * q * np.diag(v)
                Hn[:, j, vi[:, None], vi[None, :]] = mu[:, j, None, None] * vv[None, :, :]
            cr = c - rho[:, None]
            blk = (np.eye(nv)[None] * (v * cr)[:, :, None] / D
                   - v[None, :, None] * v[None, None, :] * (cr[:, None, :] + cr[:, :, None]) / D**2)
            Hn[:, 2, vi[:, None], vi[None, :]] = blk
        return mu, rho, J, Hn


# ---------------------------------------------------------------------------
# likelihood pieces


def pair_loglik_terms(model, theta, design: Design, second=True):
    """Per-pair log-likelihood, score rows and Hessians (unweighted).

    Returns ``(ll, U, H, n_floored)`` with shapes (n,), (n, P), (n, P, P).
    """
    mu, rho, J, Hn = model.natural(theta, design.X1, design.X2, design.mz, second=second)
    s = 2.0 * design.y - 1.0
    sgn = np.stack([s[:, 0], s[:, 1], s[:, 0] * s[:, 1]], axis=1)
    p, g, H = bvn_cdf_derivs(s[:, 0] * mu[:, 0], s[:, 1] * mu[:, 1], sgn[:, 2] * rho)
    floored = p < P_FLOOR
    p = np.maximum(p, P_FLOOR)
    ge = sgn * g / p[:, None]
    U = np.einsum("nk,nkp->np", ge, J)
    Hs = None
    if second:
        He = sgn[:, :, None] * sgn[:, None, :] * (H / p[:, None, None] - g[:, :, None] * g[:, None, :] / p[:, None, None] ** 2)
        Hs = np.einsum("nkp,nkl,nlq->npq", J, He, J) + np.einsum("nk,nkpq->npq", ge, Hn)
    return np.log(p), U, Hs, int(floored.sum())


def expected_information(model, theta, design: Design):
    """Weighted expected information, summing over the four outcome cells of every pair."""
    mu, rho, J, _ = model.natural(theta, design.X1, design.X2, design.mz, second=False)
    info = np.zeros((model.n_params, model.n_params))
    for y1 in (0, 1):
        for y2 in (0, 1):
            s1, s2 = 2 * y1 - 1, 2 * y2 - 1
            sg = np.array([s1, s2, s1 * s2], dtype=float)
            p, g, _ = bvn_cdf_derivs(s1 * mu[:, 0], s2 * mu[:, 1], s1 * s2 * rho)
            dp = np.einsum("nk,nkp->np", g * sg, J)
            info += np.einsum("n,np,nq->pq", design.w / np.maximum(p, P_FLOOR), dp, dp)
    return info


def loglik_and_score(model, theta, design: Design, second=True):
    """Weighted log-likelihood, score vector and Hessian matrix."""
    ll, U, H, nfl = pair_loglik_terms(model, theta, design, second)
    w = design.w
    hess = np.einsum("n,npq->pq", w, H) if second else None
    return float(w @ ll), w @ U, hess


# ---------------------------------------------------------------------------
# fitting


@dataclass
class WaldResult:
    statistic: float
    df: int
    p_value: float
    label: str = ""

    def to_dict(self):
        return {"label": self.label, "statistic": self.statistic, "df": self.df, "p_value": self.p_value}


@dataclass
class FitResult:
    spec: ModelSpec
    names: list[str]
    theta: np.ndarray
    vcov_model: np.ndarray
    vcov_if2: np.ndarray
    vcov_if3: np.ndarray | None
    loglik: float
    aic: float
    n_used: int
    n_total: int
    iterations: int
    converged: bool
    boundary: list[str]
    if_rows: np.ndarray
    score_rows: np.ndarray
    information: np.ndarray
    x_ref: np.ndarray
    mode: str
    censoring_kind: str
    n_floored: int = 0
    history: list[float] = field(default_factory=list)
    model: object = field(default=None, repr=False)

    @property
    def vcov(self) -> np.ndarray:
        """Preferred covariance: two-stage when available, otherwise known-weights sandwich."""
        return self.vcov_if3 if self.vcov_if3 is not None else self.vcov_if2

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov), 0, None))

    @property
    def n_params(self) -> int:
        return len(self.theta)

    def coef(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.theta)))

    def to_dict(self) -> dict:
        def mat(m):
            return None if m is None else np.asarray(m).tolist()

        return {
            "model": self.spec.label,
            "spec": {
                "kind": self.spec.kind, "tau": self.spec.tau if math.isfinite(self.spec.tau) else "inf",
                "covariates": list(self.spec.covariates), "marginals": self.spec.marginals,
                "rho": self.spec.rho, "components": self.spec.components,
            },
            "names": list(self.names),
            "theta": self.theta.tolist(),
            "se": self.se.tolist(),
            "vcov_model": mat(self.vcov_model),
            "vcov_if2": mat(self.vcov_if2),
            "vcov_if3": mat(self.vcov_if3),
            "loglik_weighted": self.loglik,
            "aic_ipcw": self.aic,
            "n_used": self.n_used,
            "n_total": self.n_total,
            "iterations": self.iterations,
            "converged": self.converged,
            "boundary": self.boundary,
            "mode": self.mode,
            "censoring": self.censoring_kind,
            "x_ref": self.x_ref.tolist(),
            "n_floored": self.n_floored,
        }


def make_design(data: TwinData, cls: Classified, covariates=()) -> tuple[Design, np.ndarray]:
    """Design for usable pairs plus the index of those pairs in ``data``."""
    idx = np.flatnonzero(cls.usable & (cls.weight > 0))
    xc = data.x_columns(covariates) if covariates else np.zeros((len(data), 2, 0))
    ones = np.ones((len(idx), 1))
    X1 = np.hstack([ones, xc[idx, 0, :]])
    X2 = np.hstack([ones, xc[idx, 1, :]])
    return Design(X1, X2, data.mz[idx], cls.y[idx], cls.weight[idx]), idx


def _univariate_probit(X, y, w, iters=50):
    beta = np.zeros(X.shape[1])
    ybar = np.clip((w @ y) / max(w.sum(), 1e-300), 1e-4, 1 - 1e-4)
    beta[0] = stats.norm.ppf(ybar)
    for _ in range(iters):
        eta = X @ beta
        P = np.clip(Phi(eta), 1e-12, 1 - 1e-12)
        d = phi(eta)
        g = X.T @ (w * d * (y - P) / (P * (1 - P)))
        W = w * d * d / (P * (1 - P))
        info = X.T @ (W[:, None] * X)
        try:
            step = np.linalg.solve(info + 1e-10 * np.eye(len(beta)), g)
        except np.linalg.LinAlgError:
            break
        beta = np.clip(beta + step, -8, 8)
        if np.max(np.abs(step)) < 1e-10:
            break
    return beta


def _newton(model, theta, design, max_iter=100, max_halvings=20, gtol=1e-8, rtol=1e-10):
    ll, U, H = loglik_and_score(model, theta, design)
    history = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(U)) < gtol:
            converged = True
            it -= 1
            break
        info = -H
        try:
            np.linalg.cholesky(info)
            step = np.linalg.solve(info, U)
        except np.linalg.LinAlgError:
            info = expected_information(model, theta, design)
            info = info + 1e-8 * max(1.0, np.max(np.abs(np.diag(info)))) * np.eye(len(theta))
            step = np.linalg.solve(info, U)
        big = np.max(np.abs(step))
        if big > 5.0:
            step *= 5.0 / big
        # near the optimum ll is flat to rounding; then a step that shrinks the score is taken
        flat = 64 * np.finfo(float).eps * max(1.0, abs(ll))
        for _ in range(max_halvings + 1):
            cand = theta + step
            ll_c, U_c, H_c = loglik_and_score(model, cand, design)
            if np.isfinite(ll_c) and (ll_c >= ll or (ll_c >= ll - flat and np.max(np.abs(U_c)) < np.max(np.abs(U)))):
                break
            step = step / 2.0
        else:
            # no ascent possible along the Newton direction: stationary to working precision
            converged = np.max(np.abs(U)) < 1e-5 * max(1.0, abs(ll))
            break
        theta, ll, U, H = cand, ll_c, U_c, H_c
        history.append(ll)
        if np.max(np.abs(U)) < gtol or np.max(np.abs(step)) / (1.0 + np.max(np.abs(theta))) < rtol:
            converged = True
            break
    return theta, ll, U, H, it, converged, history


def fit(spec: ModelSpec, data: TwinData, censoring=None, mode: str = "cap_at_tau",
        classified: Classified | None = None, x_ref=None, weight_cap=None,
        max_iter: int = 100, theta0=None, compute_if3: bool | None = None) -> FitResult:
    """Solve the IPCW-weighted score equation for ``spec`` by Newton-Raphson.

    ``censoring`` is a fitted censoring model (``None`` for G_c = 1).
    Variances: model-based inverse information, the known-weights
    sandwich, and, for parametric censoring models with influence
    functions, the two-stage sandwich.
    """
    cls = classified if classified is not None else classify(data, spec.tau, censoring, mode, weight_cap)
    model = spec.build(spec.covariates)
    design, idx = make_design(data, cls, spec.covariates)
    if design.w.size == 0:
        raise FitError("no usable pairs at this horizon")
    for zyg, lab in ((True, "MZ"), (False, "DZ")):
        if spec.kind == "flexible" and spec.rho == "zygosity" and not np.any(design.mz == zyg):
            raise FitError(f"no usable {lab} pairs")
    if theta0 is None:
        Xs = np.vstack([design.X1, design.X2])
        ys = np.concatenate([design.y[:, 0], design.y[:, 1]]).astype(float)
        ws = np.concatenate([design.w, design.w])
        theta0 = model.initial(_univariate_probit(Xs, ys, ws))
    theta, ll, U, H, it, converged, history = _newton(model, np.asarray(theta0, float), design, max_iter)
    if not converged:
        log.warning("%s: Newton-Raphson did not converge (max|score|=%.3g)", spec.label, np.max(np.abs(U)))

    _, U_i, H_i, nfl = pair_loglik_terms(model, theta, design)
    info = -np.einsum("n,npq->pq", design.w, H_i)
    try:
        info_inv = np.linalg.inv(info)
        if not np.all(np.isfinite(info_inv)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        log.warning("%s: singular information; using pseudo-inverse", spec.label)
        info_inv = np.linalg.pinv(info)
    n = len(data)
    score_rows = np.zeros((n, model.n_params))
    score_rows[idx] = design.w[:, None] * U_i

    boundary = []
    if spec.kind == "polygenic":
        boundary = [nm for nm, v in zip(model.names, theta) if nm.startswith("log_var") and v < LOGVAR_BOUNDARY]
    else:
        boundary = [nm for nm, v in zip(model.names, theta) if nm.startswith("atanh") and abs(v) > ATANH_BOUNDARY]
    if boundary:
        log.info("%s: parameters at the boundary: %s", spec.label, boundary)

    xs = data.x_columns(spec.covariates) if spec.covariates else np.zeros((n, 2, 0))
    if x_ref is None:
        x_ref = xs.reshape(2 * n, -1).mean(0) if n else np.zeros(xs.shape[2])
    res = FitResult(
        spec=spec, names=list(model.names), theta=theta, vcov_model=info_inv,
        vcov_if2=np.zeros_like(info), vcov_if3=None, loglik=ll, aic=-2.0 * ll + 2 * model.n_params,
        n_used=int(design.w.size), n_total=n, iterations=it, converged=bool(converged),
        boundary=boundary, if_rows=np.zeros_like(score_rows), score_rows=score_rows,
        information=info, x_ref=np.concatenate([[1.0], np.asarray(x_ref, float)]), mode=cls.mode,
        censoring_kind=getattr(censoring, "kind", "none"), n_floored=nfl, history=history, model=model,
    )
    res.vcov_if2 = variance_if2(res)
    res.if_rows = n * score_rows @ info_inv.T
    want_if3 = getattr(censoring, "has_if", False) and getattr(censoring, "if1", None) is not None
    if compute_if3 is None:
        compute_if3 = want_if3 and cls.mode != "naive"
    if compute_if3:
        res.vcov_if3 = variance_if3(res, data, censoring, cls)
    return res


def _inv_info(fit: FitResult):
    try:
        return np.linalg.inv(fit.information)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(fit.information)


def variance_if2(fit: FitResult) -> np.ndarray:
    """Sandwich covariance treating the censoring weights as known."""
    Ji = _inv_info(fit)
    B = fit.score_rows.T @ fit.score_rows
    V = Ji @ B @ Ji.T
    return 0.5 * (V + V.T)


def variance_if3(fit: FitResult, data: TwinData, censoring, classified: Classified | None = None) -> np.ndarray:
    """Two-stage sandwich covariance accounting for the estimated censoring parameters.

    Also stores the two-stage influence rows in ``fit.if_rows``.
    """
    if not getattr(censoring, "has_if", False) or getattr(censoring, "if1", None) is None:
        raise NotImplementedError(
            f"two-stage variance needs a parametric censoring model with influence functions, got {getattr(censoring, 'kind', censoring)!r}"
        )
    if censoring.if1.shape[0] != len(data):
        raise ValueError("censoring influence functions do not match the data (fit the censoring model on the same pairs)")
    cls = classified if classified is not None else classify(data, fit.spec.tau, censoring, fit.mode)
    n = len(data)
    te = _eval_times(data, cls)
    dlogw = censoring.log_weight_grad(te[:, 0], te[:, 1], data=data)
    usable = cls.usable & (cls.weight > 0)
    dlogw[~usable] = 0.0
    D = fit.score_rows.T @ dlogw / n
    Ji = _inv_info(fit)
    rows = n * (fit.score_rows + censoring.if1 @ D.T) @ Ji.T
    fit.if_rows = rows
    V = rows.T @ rows / n**2
    return 0.5 * (V + V.T)


def _eval_times(data: TwinData, cls: Classified):
    if cls.mode == "cap_at_tau":
        return np.minimum(data.time, cls.tau)
    return data.time


# ---------------------------------------------------------------------------
# tests and information criteria


def wald_test(fit: FitResult, R, r=None, vcov=None, label: str = "") -> WaldResult:
    """Wald chi-square test of ``R @ theta = r``."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.size == 0 or R.shape[0] == 0:
        raise ValueError("restriction matrix has no rows")
    if R.shape[1] != fit.n_params:
        raise ValueError(f"restriction matrix needs {fit.n_params} columns")
    df = int(np.linalg.matrix_rank(R))
    if df < R.shape[0]:
        raise ValueError("restriction matrix must have full row rank")
    r = np.zeros(R.shape[0]) if r is None else np.asarray(r, dtype=float)
    V = fit.vcov if vcov is None else vcov
    d = R @ fit.theta - r
    M = R @ V @ R.T
    try:
        stat = float(d @ np.linalg.solve(M, d))
    except np.linalg.LinAlgError:
        raise ValueError("singular R V R' in Wald test") from None
    return WaldResult(stat, df, float(stats.chi2.sf(stat, df)), label)


def test_genetic_effect(fit: FitResult) -> WaldResult:
    """Wald test of equal tetrachoric correlations in MZ and DZ pairs."""
    if "atanh_rho_MZ" not in fit.names:
        raise ValueError("needs a flexible model with zygosity-specific correlations")
    R = np.zeros(fit.n_params)
    R[fit.names.index("atanh_rho_MZ")] = 1.0
    R[fit.names.index("atanh_rho_DZ")] = -1.0
    return wald_test(fit, R, label="rho_MZ = rho_DZ")


def test_marginal_homogeneity(fit: FitResult) -> WaldResult:
    """Wald test of identical marginal regressions in MZ and DZ pairs."""
    mz = [i for i, nm in enumerate(fit.names) if nm.startswith("beta_MZ:")]
    dz = [i for i, nm in enumerate(fit.names) if nm.startswith("beta_DZ:")]
    if not mz:
        raise ValueError("needs a flexible model with zygosity-specific marginals")
    R = np.zeros((len(mz), fit.n_params))
    for row, (i, j) in enumerate(zip(mz, dz)):
        R[row, i], R[row, j] = 1.0, -1.0
    return wald_test(fit, R, label="beta_MZ = beta_DZ")


def aic_ipcw(fit: FitResult) -> float:
    """-2 x weighted log-likelihood + 2 x number of parameters (lower is better)."""
    return -2.0 * fit.loglik + 2.0 * fit.n_params

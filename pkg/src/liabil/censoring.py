"""Marginal censoring survival models used for IPCW weights.

Censoring is the "event" here: rows with status 0 are censorings and
both causes censor the censoring time. Twins are assumed to share their
censoring time, so a pair is weighted by the marginal survival at the
larger of the two (capped) times.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import TwinData


class ConvergenceError(RuntimeError):
    pass


@dataclass
class StepFunction:
    """Right-continuous step function with value ``start`` before the first knot."""

    knots: np.ndarray
    values: np.ndarray
    start: float = 0.0

    def __call__(self, t, left: bool = False):
        t = np.asarray(t, dtype=float)
        side = "left" if left else "right"
        idx = np.searchsorted(self.knots, t, side=side)
        vals = np.concatenate([[self.start], self.values])
        out = vals[idx]
        return float(out) if out.ndim == 0 else out


def _product_limit(time, is_event):
    """Product-limit survival for ``is_event`` with other rows removed from the risk set after their time."""
    time = np.asarray(time, dtype=float)
    is_event = np.asarray(is_event, dtype=bool)
    uniq = np.unique(time[is_event])
    if uniq.size == 0:
        return StepFunction(np.array([]), np.array([]), 1.0)
    ts = np.sort(time)
    at_risk = ts.size - np.searchsorted(ts, uniq, side="left")
    ev = np.sort(time[is_event])
    d = np.searchsorted(ev, uniq, side="right") - np.searchsorted(ev, uniq, side="left")
    surv = np.cumprod(1.0 - d / at_risk)
    return StepFunction(uniq, surv, 1.0)


class NoCensoring:
    """Degenerate model with G_c identically one."""

    kind = "none"
    has_if = False

    def survival(self, t, data=None, left=True):
        return np.ones_like(np.asarray(t, dtype=float))

    def eval_gc_pair(self, t1, t2, data=None, z=None, stratum=None):
        return np.ones(np.broadcast(np.asarray(t1), np.asarray(t2)).shape)

    def to_dict(self):
        return {"kind": self.kind}


@dataclass
class KaplanMeierCensoring:
    """Stratified reverse Kaplan-Meier estimate of the censoring survival.

    With ``ties="events_first"`` an individual failing at a censoring
    atom is weighted by the left limit G_c(t-); ``"censorings_first"``
    uses G_c(t).
    """

    curves: dict[str, StepFunction]
    strata: str = "none"
    ties: str = "events_first"
    kind: str = field(default="KaplanMeier", init=False)
    has_if = False

    def _stratum(self, data, n):
        if self.strata == "none":
            return np.full(n, "all", dtype=object)
        return data.zygosity.astype(object)

    def survival(self, t, stratum="all", left=None):
        left = (self.ties == "events_first") if left is None else left
        return self.curves[stratum](t, left=left)

    def eval_gc_pair(self, t1, t2, data=None, z=None, stratum=None):
        t = np.maximum(np.asarray(t1, dtype=float), np.asarray(t2, dtype=float))
        if stratum is None:
            stratum = self._stratum(data, t.size) if data is not None else np.full(t.size, "all", dtype=object)
        stratum = np.broadcast_to(np.asarray(stratum, dtype=object), t.shape)
        out = np.empty(t.shape)
        for s in np.unique(stratum):
            m = stratum == s
            out[m] = self.survival(t[m], s)
        return out

    def to_dict(self):
        return {
            "kind": self.kind,
            "strata": self.strata,
            "ties": self.ties,
            "curves": {k: {"knots": c.knots.tolist(), "values": c.values.tolist()} for k, c in self.curves.items()},
        }


def fit_km(data: TwinData, strata: str = "none", ties: str = "events_first") -> KaplanMeierCensoring:
    """Reverse product-limit estimate of P(C > t), optionally by zygosity."""
    if strata not in ("none", "by_zygosity"):
        raise ValueError("strata must be 'none' or 'by_zygosity'")
    if ties not in ("events_first", "censorings_first"):
        raise ValueError("ties must be 'events_first' or 'censorings_first'")
    groups = {"all": np.ones(len(data), dtype=bool)} if strata == "none" else {"MZ": data.mz, "DZ": ~data.mz}
    curves = {}
    for name, m in groups.items():
        if not np.any(m):
            raise ValueError(f"empty censoring stratum {name!r}")
        t = data.time[m].ravel()
        curves[name] = _product_limit(t, data.status[m].ravel() == 0)
    return KaplanMeierCensoring(curves, "none" if strata == "none" else "by_zygosity", ties)


@dataclass
class WeibullCensoring:
    """Weibull proportional-hazards censoring model.

    Cumulative hazard ``(lam * t)**nu * exp(coef @ z)`` with parameter
    vector ``gamma = (log lam, log nu, coef...)``. ``if1`` holds one
    influence-function row per pair (members summed), scaled so that
    ``gamma_hat - gamma ~ mean(if1)``-type expansions use ``if1 / n``.
    """

    gamma: np.ndarray
    z_names: tuple[str, ...] = ()
    vcov: np.ndarray | None = None
    if1: np.ndarray | None = None
    iterations: int = 0
    kind: str = field(default="WeibullPH", init=False)
    has_if = True

    @property
    def names(self):
        return ("log_lambda", "log_nu", *self.z_names)

    def cumhaz(self, t, z=None):
        t = np.asarray(t, dtype=float)
        lam, nu = math.exp(self.gamma[0]), math.exp(self.gamma[1])
        lp = 0.0 if z is None or len(self.z_names) == 0 else np.asarray(z, dtype=float) @ self.gamma[2:]
        return (lam * t) ** nu * np.exp(lp)

    def survival(self, t, z=None, left=True):
        return np.exp(-self.cumhaz(t, z))

    def _pair_z(self, data, z):
        if z is not None:
            z = np.asarray(z, dtype=float)
            return z, z
        if data is None or not self.z_names:
            return None, None
        zz = data.z_columns(self.z_names)
        return zz[:, 0, :], zz[:, 1, :]

    def eval_gc_pair(self, t1, t2, data=None, z=None, stratum=None):
        z1, z2 = self._pair_z(data, z)
        return np.minimum(self.survival(t1, z1), self.survival(t2, z2))

    def log_weight_grad(self, t1, t2, data=None, z=None):
        """Gradient in gamma of log(1/G_c) at the pair evaluation point, shape (n, q)."""
        z1, z2 = self._pair_z(data, z)
        h1, h2 = self.cumhaz(t1, z1), self.cumhaz(t2, z2)
        first = h1 >= h2
        t = np.where(first, t1, t2)
        lam_h = np.where(first, h1, h2)
        nu = math.exp(self.gamma[1])
        with np.errstate(divide="ignore", invalid="ignore"):
            logt = np.where(t > 0, np.log(np.where(t > 0, t, 1.0)), 0.0)
        cols = [nu * lam_h, nu * (self.gamma[0] + logt) * lam_h]
        if self.z_names:
            zsel = np.where(first[:, None], z1, z2)
            cols += [lam_h * zsel[:, j] for j in range(zsel.shape[1])]
        return np.stack(cols, axis=1)

    def to_dict(self):
        return {
            "kind": self.kind,
            "names": list(self.names),
            "gamma": self.gamma.tolist(),
            "vcov": None if self.vcov is None else self.vcov.tolist(),
        }


def _weibull_terms(gamma, t, d, z):
    """Per-individual log-likelihood, score and Hessian of the Weibull PH model."""
    a, k = gamma[0], gamma[1]
    nu = math.exp(k)
    pos = t > 0
    logt = np.log(np.where(pos, t, 1.0))
    u = nu * (a + logt) + (z @ gamma[2:] if z.shape[1] else 0.0)
    lam = np.where(pos, np.exp(np.where(pos, u, 0.0)), 0.0)
    ll = d * (k - logt + u) - lam
    n, q = t.size, gamma.size
    du = np.empty((n, q))
    du[:, 0] = nu
    du[:, 1] = nu * (a + logt)
    du[:, 2:] = z
    dk = np.zeros(q)
    dk[1] = 1.0
    score = d[:, None] * (du + dk) - lam[:, None] * du
    d2u = np.zeros((n, q, q))
    d2u[:, 0, 1] = d2u[:, 1, 0] = nu
    d2u[:, 1, 1] = nu * (a + logt)
    hess = (d - lam)[:, None, None] * d2u - lam[:, None, None] * du[:, :, None] * du[:, None, :]
    return ll, score, hess


def fit_weibull_ph(data: TwinData, z_columns=(), max_iter: int = 100, tol: float = 1e-9) -> WeibullCensoring:
    """Fit the censoring Weibull PH model with working independence over twins.

    Returns the estimate with pair-clustered sandwich covariance and
    per-pair influence functions.
    """
    z_columns = tuple(z_columns)
    t = data.time.ravel()
    d = (data.status == 0).ravel().astype(float)
    if d.sum() == 0:
        raise ValueError("no censoring events; the Weibull censoring model is not identified")
    if np.any((t <= 0) & (d > 0)):
        raise ValueError("censoring at time zero is not supported by the Weibull model")
    z = data.z_columns(z_columns).reshape(len(t), len(z_columns)) if z_columns else np.zeros((len(t), 0))
    gamma = np.zeros(2 + len(z_columns))
    gamma[0] = math.log(d.sum() / t.sum())
    ll, score, hess = _weibull_terms(gamma, t, d, z)
    obj = ll.sum()
    for it in range(1, max_iter + 1):
        g = score.sum(0)
        H = hess.sum(0)
        try:
            step = np.linalg.solve(-H, g)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular information in Weibull censoring fit") from None
        if np.max(np.abs(step)) > 2.0:
            step *= 2.0 / np.max(np.abs(step))
        for _ in range(30):
            new = gamma + step
            ll2, s2, h2 = _weibull_terms(new, t, d, z)
            if ll2.sum() >= obj - 1e-12 * abs(obj):
                break
            step = step / 2.0
        gamma, obj, score, hess = new, ll2.sum(), s2, h2
        if np.max(np.abs(score.sum(0))) < tol or np.max(np.abs(step)) < 1e-12:
            break
    else:
        raise ConvergenceError(f"Weibull censoring fit did not converge in {max_iter} iterations")
    n = len(data)
    q = gamma.size
    pair_score = score.reshape(n, 2, q).sum(1)
    info = -hess.sum(0) / n
    try:
        info_inv = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise ConvergenceError("singular information in Weibull censoring fit") from None
    if1 = pair_score @ info_inv.T
    vcov = if1.T @ if1 / n**2
    return WeibullCensoring(gamma, z_columns, vcov, if1, it)


def censoring_from_dict(d: dict):
    """Rebuild a fitted censoring model from :meth:`to_dict` output."""
    kind = d["kind"]
    if kind == "none":
        return NoCensoring()
    if kind == "KaplanMeier":
        curves = {k: StepFunction(np.asarray(v["knots"], float), np.asarray(v["values"], float), 1.0)
                  for k, v in d["curves"].items()}
        return KaplanMeierCensoring(curves, d["strata"], d.get("ties", "events_first"))
    if kind == "WeibullPH":
        vc = d.get("vcov")
        return WeibullCensoring(np.asarray(d["gamma"], float), tuple(d["names"][2:]),
                                None if vc is None else np.asarray(vc, float))
    raise ValueError(f"unknown censoring model kind {kind!r}")


def save_censoring(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=2)


def load_censoring(path):
    with open(path, encoding="utf-8") as fh:
        return censoring_from_dict(json.load(fh))


def aalen_johansen_cif(time, status, cause: int = 1) -> StepFunction:
    """Cumulative incidence of ``cause`` under competing risks.

    At tied times all events are counted before censorings.
    """
    time = np.asarray(time, dtype=float).ravel()
    status = np.asarray(status, dtype=int).ravel()
    if time.size == 0:
        raise ValueError("no observations")
    uniq = np.unique(time[status != 0])
    if uniq.size == 0:
        return StepFunction(np.array([]), np.array([]), 0.0)
    ts = np.sort(time)
    at_risk = ts.size - np.searchsorted(ts, uniq, side="left")

    def count(mask):
        ev = np.sort(time[mask])
        return np.searchsorted(ev, uniq, side="right") - np.searchsorted(ev, uniq, side="left")

    d_all = count(status != 0)
    d_k = count(status == cause)
    surv = np.cumprod(1.0 - d_all / at_risk)
    surv_left = np.concatenate([[1.0], surv[:-1]])
    cif = np.cumsum(surv_left * d_k / at_risk)
    return StepFunction(uniq, cif, 0.0)

"""Variance components, twin correlations and heritability from polygenic fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .biprobit import KINSHIP, FitResult
from .intervals import Estimate, delta_interval, fixed


def components_to_correlations(log_var, components):
    """Map log-variances (E fixed at 1) to ``(rho_MZ, rho_DZ, proportions)``.

    ``log_var`` is a sequence aligned with ``components`` (e.g. "AC")
    or a mapping from component letter to log-variance. Proportions are
    returned for all of A, C, D and E.
    """
    comps = [c for c in str(components).upper() if c in "ACD"]
    if isinstance(log_var, dict):
        lv = [float(log_var[c]) for c in comps]
    else:
        lv = [float(v) for v in np.atleast_1d(log_var)]
    if len(lv) != len(comps):
        raise ValueError("one log-variance per component is required")
    v = dict(zip(comps, np.exp(lv)))
    total = 1.0 + sum(v.values())
    props = {c: v.get(c, 0.0) / total for c in "ACD"}
    props["E"] = 1.0 / total
    rho_mz = sum(KINSHIP[c][0] * props[c] for c in "ACD")
    rho_dz = sum(KINSHIP[c][1] * props[c] for c in "ACD")
    return rho_mz, rho_dz, props


def _grads(theta_var):
    """Proportions and their gradients in the log-variances."""
    v = np.exp(theta_var)
    p = v / (1.0 + v.sum())
    pe = 1.0 - p.sum()
    dp = np.diag(p) - np.outer(p, p)
    dpe = -pe * p
    return p, dp, pe, dpe


@dataclass
class PolygenicEstimate:
    model: str
    proportions: dict[str, Estimate]
    H2: Estimate
    rho_MZ: Estimate
    rho_DZ: Estimate

    def rows(self):
        out = [(f"var_{k}", "all", e) for k, e in self.proportions.items()]
        out += [("H2", "all", self.H2), ("rho", "MZ", self.rho_MZ), ("rho", "DZ", self.rho_DZ)]
        return out

    def to_dict(self):
        return {
            "model": self.model,
            **{q if z == "all" else f"{q}_{z}": {"estimate": e.value, "lower": e.lower, "upper": e.upper, "se": e.se}
               for q, z, e in self.rows()},
        }


def polygenic_estimate(fit: FitResult, vcov=None, level: float = 0.95) -> PolygenicEstimate:
    """Normalized variance proportions, H^2 and twin correlations with delta-method CIs."""
    if fit.spec.kind != "polygenic":
        raise ValueError("polygenic_estimate needs a polygenic model fit")
    V = fit.vcov if vcov is None else vcov
    comps = fit.spec.variance_components
    idx = [fit.names.index(f"log_var_{c}") for c in comps]
    th = fit.theta[idx]
    p, dp, pe, dpe = _grads(th)
    P = fit.n_params

    def embed(g):
        full = np.zeros(P)
        full[idx] = g
        return full

    props = {}
    for c in "ACD":
        if c in comps:
            k = comps.index(c)
            props[c] = delta_interval(p[k], embed(dp[k]), V, "logit", level)
        else:
            props[c] = fixed(0.0)
    props["E"] = delta_interval(pe, embed(dpe), V, "logit", level)

    gen = [k for k, c in enumerate(comps) if c in "AD"]
    if gen:
        h2 = delta_interval(p[gen].sum(), embed(dp[gen].sum(0)), V, "logit", level)
    else:
        h2 = fixed(0.0)

    rhos = []
    for z in (0, 1):
        c = np.array([KINSHIP[x][z] for x in comps])
        val = float(c @ p)
        rhos.append(delta_interval(val, embed(c @ dp), V, "atanh", level) if comps else fixed(0.0))
    return PolygenicEstimate(fit.spec.label, props, h2, rhos[0], rhos[1])


def heritability(fit: FitResult, vcov=None, level: float = 0.95) -> Estimate:
    """Broad-sense heritability (A + D share of liability variance) with CI."""
    return polygenic_estimate(fit, vcov, level).H2

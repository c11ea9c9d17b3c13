"""Independent reference computations used by several test modules."""

import math

import numpy as np
from scipy import integrate, optimize, stats

from liabil.data import classify


def saturated_counts(data, tau):
    c = classify(data, tau)
    out = {}
    for z, m in (("MZ", data.mz), ("DZ", ~data.mz)):
        y = c.y[m & c.usable]
        k = y.sum(1)
        out[z] = np.array([(k == 2).sum(), (k == 1).sum(), (k == 0).sum()], dtype=float)
    return out


def saturated_mle(counts):
    """Closed-form MLE of (mu, atanh rho) per zygosity for exchangeable twin tables."""
    res = {}
    for z, (n11, nd, n00) in counts.items():
        n = n11 + nd + n00
        F = (n11 + nd / 2) / n
        mu = stats.norm.ppf(F)
        target = n11 / n
        rho = optimize.brentq(lambda r: p11_quad(mu, r) - target, -0.999, 0.999, xtol=1e-15)
        res[z] = (mu, math.atanh(rho))
    return res


def p11_quad(mu, rho):
    """P(X<=mu, Y<=mu) by 1-d quadrature."""
    from scipy import integrate

    s = math.sqrt(1 - rho * rho)
    f = lambda x: stats.norm.pdf(x) * stats.norm.cdf((mu - rho * x) / s)
    return integrate.quad(f, -np.inf, mu, epsabs=1e-15, epsrel=1e-14, limit=200)[0]


def _cells(theta):
    mu, z = theta
    rho = math.tanh(z)
    p11 = p11_quad(mu, rho)
    F = stats.norm.cdf(mu)
    return np.array([p11, 2 * (F - p11), 1 - 2 * F + p11])


def saturated_loglik(counts, mle):
    ll = 0.0
    for z, n in counts.items():
        p = _cells(mle[z])
        ll += float(np.sum(n * np.log(p)) - (n[1] * math.log(2.0)))
    return ll


def saturated_vcov(counts, mle, h=1e-4):
    """Inverse Fisher information for each zygosity block (equals the sandwich at a saturated MLE)."""
    out = {}
    for z, n in counts.items():
        th = np.array(mle[z], dtype=float)
        p = _cells(th)
        grads = []
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            # 4th-order central difference
            d = (-_cells(th + 2 * e) + 8 * _cells(th + e) - 8 * _cells(th - e) + _cells(th - 2 * e)) / (12 * h)
            grads.append(d)
        G = np.array(grads).T  # cells x params
        info = sum(n[c] * np.outer(G[c], G[c]) / p[c] ** 2 for c in range(3))
        out[z] = np.linalg.inv(info)
    return out


def five_point(f, x, h):
    """Gradient of scalar ``f`` by a 5-point central stencil."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h)
    return g


def quad_bvn(a, b, r):
    """P(X<=a, Y<=b) by adaptive quadrature; the inner integral over y is Phi in closed form."""
    s = math.sqrt(1 - r * r)
    f = lambda x: stats.norm.pdf(x) * stats.norm.cdf((b - r * x) / s)
    val, _ = integrate.quad(f, -np.inf, a, epsabs=0.0, epsrel=1e-13, limit=500)
    return val


def naive_product_limit(time, cens, t):
    """Explicit product over distinct censoring times <= t of (1 - d_j / n_j)."""
    out = 1.0
    for u in np.unique(time[cens]):
        if u <= t:
            out *= 1 - np.sum((time == u) & cens) / np.sum(time >= u)
    return out

"""Univariate and bivariate standard normal kernels.

The bivariate CDF follows Genz's Gauss-Legendre reduction of the
Drezner-Wesolowsky integral, vectorised over numpy arrays. Derivatives
with respect to the limits and the correlation are closed form.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri, roots_legendre

RHO_MAX = 1.0 - 1e-12
X_INF = 8.5
TWO_PI = 2.0 * math.pi
_SQRT_2PI = math.sqrt(TWO_PI)

# node sets used for |rho| < 0.3, < 0.75 and above
_GL = {n: roots_legendre(n) for n in (6, 12, 20)}

# composite rule on [0, 64] for the negative-correlation lower tail
_TAIL_EDGES = np.array([0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0])
_x20, _w20 = roots_legendre(20)
_TAIL_Y = np.concatenate([lo + (hi - lo) * (_x20 + 1) / 2 for lo, hi in zip(_TAIL_EDGES, _TAIL_EDGES[1:])])
_TAIL_W = np.concatenate([(hi - lo) / 2 * _w20 for lo, hi in zip(_TAIL_EDGES, _TAIL_EDGES[1:])])


def phi(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / _SQRT_2PI


def Phi(x):
    """Standard normal CDF."""
    return ndtr(np.asarray(x, dtype=float))


def Phi_inv(p):
    """Standard normal quantile; raises ``ValueError`` outside (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise ValueError("Phi_inv is defined on the open interval (0, 1)")
    return ndtri(p)


def _prep(a, b, rho):
    a, b, rho = np.broadcast_arrays(
        np.asarray(a, dtype=float), np.asarray(b, dtype=float), np.asarray(rho, dtype=float)
    )
    shape = a.shape
    a = np.where(a > X_INF, np.inf, np.where(a < -X_INF, -np.inf, a)).ravel()
    b = np.where(b > X_INF, np.inf, np.where(b < -X_INF, -np.inf, b)).ravel()
    rho = np.clip(rho, -RHO_MAX, RHO_MAX).ravel()
    return a, b, rho, shape


def _bvnu(h, k, r):
    """Upper orthant probability P(X > h, Y > k) for finite h, k."""
    out = np.empty_like(h)
    ar = np.abs(r)
    low = ar < 0.925
    for n, sel in ((6, ar < 0.3), (12, (ar >= 0.3) & (ar < 0.75)), (20, ar >= 0.75)):
        x, w = _GL[n]
        s = sel & low
        if np.any(s):
            hh, kk, rr = h[s], k[s], r[s]
            hk = hh * kk
            hs = 0.5 * (hh * hh + kk * kk)
            asr = 0.5 * np.arcsin(rr)
            sn = np.sin(asr[:, None] * (1.0 + x[None, :]))
            val = np.exp((sn * hk[:, None] - hs[:, None]) / (1.0 - sn * sn)) @ w
            out[s] = val * asr / TWO_PI + ndtr(-hh) * ndtr(-kk)
        s = sel & ~low
        if np.any(s):
            out[s] = _bvnu_high(h[s], k[s], r[s], x, w)
    return np.clip(out, 0.0, 1.0)


def _bvnu_high(h, k, r, x, w):
    k = np.where(r < 0, -k, k)
    hk = h * k
    ras = (1.0 - r) * (1.0 + r)
    a = np.sqrt(ras)
    bs = (h - k) ** 2
    c = (4.0 - hk) / 8.0
    d = (12.0 - hk) / 16.0
    ex = -(bs / ras + hk) / 2.0
    with np.errstate(under="ignore"):
        bvn = np.where(
            ex > -100.0,
            a * np.exp(ex) * (1.0 - c * (bs - ras) * (1.0 - d * bs / 5.0) / 3.0 + c * d * ras * ras / 5.0),
            0.0,
        )
        b = np.sqrt(bs)
        tail = np.exp(-hk / 2.0) * _SQRT_2PI * ndtr(-b / a) * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
        bvn = bvn - np.where(hk > -160.0, tail, 0.0)
        a2 = a / 2.0
        xs = (a2[:, None] * (1.0 + x[None, :])) ** 2
        rs = np.sqrt(1.0 - xs)
        asr = -(bs[:, None] / xs + hk[:, None]) / 2.0
        term = np.exp(asr) * (
            np.exp(-hk[:, None] * xs / (2.0 * (1.0 + rs) ** 2)) / rs - (1.0 + c[:, None] * xs * (1.0 + d[:, None] * xs))
        )
        term = np.where(asr > -100.0, term, 0.0)
    bvn = -(bvn + a2 * (term @ w)) / TWO_PI
    pos = r > 0
    res = np.where(pos, bvn + ndtr(-np.maximum(h, k)), -bvn)
    # negative correlation with h < k: subtract from the strip probability
    neg = (~pos) & (h < k)
    strip = np.where(h < 0, ndtr(k) - ndtr(h), ndtr(-h) - ndtr(-k))
    return np.where(neg, strip - bvn, res)


def _lower_tail(a, b, rho):
    """P(X <= a, Y <= b) for rho < 0 and min(a, b) < 0, accurate in relative terms.

    Integrates phi(m - t) Phi((o - rho (m - t)) / s) over t >= 0 with
    m = min(a, b), o = max(a, b). The integrand is log-concave and
    decreasing, so after scaling t by its initial decay rate the
    remainder is bounded by exp(-y) and a fixed composite rule suffices.
    """
    m, o = np.minimum(a, b), np.maximum(a, b)
    s = np.sqrt(1.0 - rho * rho)
    u0 = (o - rho * m) / s
    lp0 = log_ndtr(u0)
    mills = np.exp(-0.5 * u0 * u0 - 0.5 * math.log(TWO_PI) - lp0)
    k = -m - rho / s * mills
    t = _TAIL_Y[None, :] / k[:, None]
    log_ratio = (-0.5 * (m[:, None] - t) ** 2 + 0.5 * m[:, None] ** 2
                 + log_ndtr(u0[:, None] + (rho / s)[:, None] * t) - lp0[:, None])
    return phi(m) * np.exp(lp0) / k * (np.exp(log_ratio) @ _TAIL_W)


def bvn_cdf(a, b, rho):
    """P(X <= a, Y <= b) for a standard bivariate normal with correlation rho.

    Limits beyond +-8.5 are treated as infinite and rho is clamped to
    +-(1 - 1e-12). Broadcasts over array arguments.
    """
    a, b, rho, shape = _prep(a, b, rho)
    out = np.empty_like(a)
    fin = np.isfinite(a) & np.isfinite(b)
    out[fin] = _bvnu(-a[fin], -b[fin], rho[fin])
    # with rho < 0 the Genz form subtracts from Phi(min(a, b)); redo small results directly
    tail = fin & (rho < 0) & (np.minimum(a, b) < 0)
    tail[tail] = out[tail] < 1e-3 * ndtr(np.minimum(a[tail], b[tail]))
    if np.any(tail):
        out[tail] = _lower_tail(a[tail], b[tail], rho[tail])
    nf = ~fin
    if np.any(nf):
        aa, bb = a[nf], b[nf]
        v = np.where(aa == np.inf, ndtr(bb), np.where(bb == np.inf, ndtr(aa), 0.0))
        v = np.where((aa == -np.inf) | (bb == -np.inf), 0.0, v)
        out[nf] = v
    return out.reshape(shape) if shape else float(out[0])


def bvn_pdf(a, b, rho):
    """Standard bivariate normal density."""
    a, b, rho = (np.asarray(v, dtype=float) for v in (a, b, rho))
    rho = np.clip(rho, -RHO_MAX, RHO_MAX)
    om = 1.0 - rho * rho
    with np.errstate(invalid="ignore", over="ignore"):
        q = (a * a - 2.0 * rho * a * b + b * b) / om
        out = np.exp(-0.5 * q) / (TWO_PI * np.sqrt(om))
    return np.where(np.isfinite(q), out, 0.0)


def _cond_cdf(a, b, rho):
    # Phi((b - rho a) / sqrt(1 - rho^2)) with the infinite-limit cases resolved
    s = np.sqrt(1.0 - rho * rho)
    with np.errstate(invalid="ignore"):
        u = (b - rho * a) / s
    u = np.where(np.isnan(u), np.where(b == np.inf, np.inf, -np.inf), u)
    return ndtr(u), u


def bvn_cdf_grad(a, b, rho):
    """Partial derivatives of :func:`bvn_cdf` with respect to (a, b, rho)."""
    a, b, rho, shape = _prep(a, b, rho)
    pa = phi(a) * _cond_cdf(a, b, rho)[0]
    pb = phi(b) * _cond_cdf(b, a, rho)[0]
    pr = bvn_pdf(a, b, rho)
    pa = np.where(np.isfinite(a), pa, 0.0)
    pb = np.where(np.isfinite(b), pb, 0.0)
    if not shape:
        return float(pa[0]), float(pb[0]), float(pr[0])
    return pa.reshape(shape), pb.reshape(shape), pr.reshape(shape)


def bvn_cdf_derivs(a, b, rho):
    """Value, gradient and Hessian of the bivariate CDF in (a, b, rho).

    Inputs are 1-d arrays; infinite limits give zero derivatives. Returns ``(p, g, H)`` with
    ``g`` of shape (n, 3) and ``H`` of shape (n, 3, 3).
    """
    a, b, rho, _ = _prep(a, b, rho)
    p = np.atleast_1d(bvn_cdf(a, b, rho))
    om = 1.0 - rho * rho
    s = np.sqrt(om)
    Fa, ua = _cond_cdf(a, b, rho)
    Fb, ub = _cond_cdf(b, a, rho)
    fa, fb = phi(a), phi(b)
    f2 = bvn_pdf(a, b, rho)
    with np.errstate(invalid="ignore", over="ignore"):
        g = np.stack([fa * Fa, fb * Fb, f2], axis=1)
        H = np.empty((a.size, 3, 3))
        H[:, 0, 0] = -a * fa * Fa - fa * phi(ua) * rho / s
        H[:, 1, 1] = -b * fb * Fb - fb * phi(ub) * rho / s
        H[:, 0, 1] = H[:, 1, 0] = f2
        H[:, 0, 2] = H[:, 2, 0] = -f2 * (a - rho * b) / om
        H[:, 1, 2] = H[:, 2, 1] = -f2 * (b - rho * a) / om
        q = (a * a - 2.0 * rho * a * b + b * b) / om
        H[:, 2, 2] = f2 * (rho + a * b - rho * q) / om
    # infinite limits give 0 * inf products whose limit is zero
    return p, np.nan_to_num(g, nan=0.0), np.nan_to_num(H, nan=0.0, posinf=0.0, neginf=0.0)

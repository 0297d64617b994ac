"""Asymptotic ridge risk under the Marchenko-Pastur law (isotropic features).

Quantities are functions of the aspect ratio ``gamma = lim d/n``, the
signal-to-noise ratio ``snr = ||beta||^2 / sigma2`` and the noise variance
``sigma2``.  Two independent routes are provided for the variance and the
risk: through the Stieltjes transform and its derivative, and through the
explicit algebraic closed forms.  The point ``gamma == 1, lam == 0`` is a
genuine divergence and evaluates to ``inf``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GOLDEN_TOL = 1e-8


def _disc(z, gamma):
    return (1.0 - gamma - z) ** 2 - 4.0 * gamma * z


def stieltjes_mp(z, gamma):
    """Stieltjes transform ``m_F(z)`` of the Marchenko-Pastur law, ``z < 0``."""
    z = np.asarray(z, dtype=float)
    if np.any(z >= 0):
        raise ValueError("the closed form is used on the negative real axis only")
    return (1.0 - gamma - z - np.sqrt(_disc(z, gamma))) / (2.0 * gamma * z)


def stieltjes_mp_prime(z, gamma):
    """Derivative ``d m_F / dz`` for ``z < 0``."""
    z = np.asarray(z, dtype=float)
    if np.any(z >= 0):
        raise ValueError("the closed form is used on the negative real axis only")
    r = np.sqrt(_disc(z, gamma))
    return (z * (1.0 + gamma - z) / r - 1.0 + gamma + r) / (2.0 * gamma * z**2)


def is_divergent(lam, gamma) -> np.ndarray:
    return (np.asarray(lam) == 0) & (np.asarray(gamma) == 1)


def _root(lam, gamma):
    return np.sqrt((1.0 - gamma + lam) ** 2 + 4.0 * gamma * lam)


def asym_variance(lam, gamma, sigma2: float = 1.0):
    """``sigma2 / 2 * ((1 + gamma + lam) / sqrt((1 - gamma + lam)^2 + 4 gamma lam) - 1)``."""
    lam = np.asarray(lam, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = 0.5 * sigma2 * ((1.0 + gamma + lam) / _root(lam, gamma) - 1.0)
    v = np.where(is_divergent(lam, gamma), np.inf, v)
    return v[()] if v.ndim == 0 else v


def _lam2_mprime(lam, gamma):
    # lam^2 m'(-lam), continuous down to lam = 0
    r = _root(lam, gamma)
    return (gamma - 1.0 + r - lam * (1.0 + gamma + lam) / r) / (2.0 * gamma)


def asym_bias(lam, gamma, snr: float, sigma2: float = 1.0):
    """Bias part ``sigma2 * snr * lam^2 * m'(-lam)``; equals ``risk - variance``."""
    lam = np.asarray(lam, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        b = sigma2 * snr * _lam2_mprime(lam, np.asarray(gamma, dtype=float))
    return b[()] if np.ndim(b) == 0 else b


def asym_risk(lam, gamma, snr: float, sigma2: float = 1.0):
    """Asymptotic out-of-sample risk of ridge with penalty ``n * lam``."""
    return asym_variance(lam, gamma, sigma2) + asym_bias(lam, gamma, snr, sigma2)


def asym_variance_stieltjes(lam, gamma, sigma2: float = 1.0):
    """``sigma2 * gamma * (m(-lam) - lam m'(-lam))``, ``lam > 0``."""
    lam = np.asarray(lam, dtype=float)
    z = -lam
    return sigma2 * gamma * (stieltjes_mp(z, gamma) - lam * stieltjes_mp_prime(z, gamma))


def asym_risk_stieltjes(lam, gamma, snr: float, sigma2: float = 1.0):
    """``sigma2 * gamma * (m(-lam) - lam (1 - snr lam / gamma) m'(-lam))``, ``lam > 0``."""
    lam = np.asarray(lam, dtype=float)
    z = -lam
    m = stieltjes_mp(z, gamma)
    mp = stieltjes_mp_prime(z, gamma)
    return sigma2 * gamma * (m - lam * (1.0 - snr * lam / gamma) * mp)


def asym_risk_zero(gamma, snr: float, sigma2: float = 1.0):
    """Risk of the minimum-norm interpolator / least squares (``lam = 0``)."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma == 1):
        raise ValueError("the risk at lam = 0 diverges for gamma = 1")
    with np.errstate(divide="ignore"):
        r = np.where(gamma < 1, gamma / (1.0 - gamma), snr * (1.0 - 1.0 / gamma) + 1.0 / (gamma - 1.0))
    r = sigma2 * r
    return r[()] if r.ndim == 0 else r


def asym_risk_opt(gamma, snr: float, sigma2: float = 1.0):
    """Risk at the optimal penalty ``lam = gamma / snr``."""
    gamma = np.asarray(gamma, dtype=float)
    a = snr - snr / gamma
    r = 0.5 * sigma2 * (a - 1.0 + np.sqrt(4.0 * snr + (1.0 - a) ** 2))
    return r[()] if r.ndim == 0 else r


def lambda_T(gamma):
    """Penalty at which the asymptotic variance equals the noise variance.

    ``3 sqrt(gamma / 2) - gamma - 1`` on ``(1/2, 2)``, zero elsewhere.
    """
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise ValueError("gamma must be positive")
    inside = (gamma > 0.5) & (gamma < 2.0)
    lt = np.where(inside, 3.0 * np.sqrt(gamma / 2.0) - gamma - 1.0, 0.0)
    lt = np.maximum(lt, 0.0)
    return lt[()] if lt.ndim == 0 else lt


def lambda_opt(gamma, snr):
    return np.asarray(gamma, dtype=float) / snr if np.ndim(gamma) else float(gamma) / snr


def asym_risk_T(gamma, snr: float, sigma2: float = 1.0):
    """Closed form of the risk at ``lambda_T``; falls back to ``lam = 0`` outside ``(1/2, 2)``."""
    gamma = np.asarray(gamma, dtype=float)
    inside = (gamma > 0.5) & (gamma < 2.0)
    r_in = sigma2 * (1.0 + snr * (np.sqrt(2.0 * gamma) - 1.0) ** 2 / gamma)
    r_out = asym_risk(0.0, np.where(inside, 0.5, gamma), snr, sigma2)
    r = np.where(inside, r_in, r_out)
    return r[()] if r.ndim == 0 else r


def golden_section(f, a: float, b: float, tol: float = GOLDEN_TOL) -> float:
    """Minimize a unimodal ``f`` on ``[a, b]`` to bracket width ``tol``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


@dataclass(frozen=True)
class RiskCurvePoint:
    gamma: float
    snr: float
    lam_T: float
    lam_opt: float
    v_bar: float
    r_bar: float
    r_zero: float
    r_opt: float
    ratio: float
    divergent: bool


def ratio_scan(gammas, snrs, sigma2: float = 1.0):
    """Evaluate ``R(lambda_T) / R(lambda*)`` on the product grid.

    Returns ``(max_ratio, argmax, table)``, where ``argmax`` is a
    ``(gamma, snr)`` pair and ``table`` maps column names to flat arrays
    ordered gamma-major.  Points with a divergent ``R(0)`` carry ``inf`` in
    ``r_zero`` and ``divergent=True``; they still have a finite ratio because
    ``lambda_T > 0`` there.
    """
    g = np.asarray(gammas, dtype=float).ravel()
    s = np.asarray(snrs, dtype=float).ravel()
    G, Sn = np.meshgrid(g, s, indexing="ij")
    G, Sn = G.ravel(), Sn.ravel()
    lt = lambda_T(G)
    lo = G / Sn
    r_T = asym_risk(lt, G, Sn, sigma2)
    r_opt = asym_risk_opt(G, Sn, sigma2)
    div = G == 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        r_zero = np.where(div, np.inf, asym_risk(0.0, np.where(div, 2.0, G), Sn, sigma2))
    ratio = r_T / r_opt
    table = {
        "gamma": G, "snr": Sn, "lambda_T": lt, "lambda_opt": lo,
        "v_T": asym_variance(lt, G, sigma2), "r_T": r_T, "r_opt": r_opt,
        "r_zero": r_zero, "ratio": ratio, "divergent": is_divergent(lt, G) | div,
    }
    i = int(np.nanargmax(ratio))
    return float(ratio[i]), (float(G[i]), float(Sn[i])), table


def table_points(table) -> list[RiskCurvePoint]:
    return [
        RiskCurvePoint(float(table["gamma"][i]), float(table["snr"][i]), float(table["lambda_T"][i]),
                       float(table["lambda_opt"][i]), float(table["v_T"][i]), float(table["r_T"][i]),
                       float(table["r_zero"][i]), float(table["r_opt"][i]), float(table["ratio"][i]),
                       bool(table["divergent"][i]))
        for i in range(len(table["gamma"]))
    ]

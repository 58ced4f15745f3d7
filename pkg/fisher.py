# fisher.py: scaled Fisher information, its limit under thinning, Poincaré check
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

import config
from charlier import charlier_coeffs, find_kappa
from classes import is_ub
from distcore import Pmf, ksum, mean
from errors import HypothesisViolation, ParameterDomainError, require
from thinning import check_alpha, thin


@dataclass(frozen=True)
class ScoreVector:
    """rho_P(x) = (x+1) P(x+1) / (lam P(x)) - 1 on the points with P(x) > 0."""

    lam: float
    xs: np.ndarray
    rho: np.ndarray
    weights: np.ndarray
    gaps: Tuple[int, ...] = ()

    @property
    def contiguous(self) -> bool:
        return not self.gaps


def _positive_mean(P: Pmf) -> float:
    lam = mean(P)
    if not lam > 0:
        raise ParameterDomainError(f"scaled score needs a positive mean, got {lam}")
    return lam


def score(P: Pmf) -> ScoreVector:
    lam = _positive_mean(P)
    p = P.padded(len(P) + 1)
    xs = np.flatnonzero(p > 0)
    rho = (xs + 1) * p[xs + 1] / (lam * p[xs]) - 1.0
    inside = np.arange(int(xs[0]), int(xs[-1]) + 1)
    gaps = tuple(int(x) for x in inside[p[inside] == 0.0])
    return ScoreVector(lam=lam, xs=xs, rho=rho, weights=p[xs], gaps=gaps)


def k_info(P: Pmf) -> float:
    """K(P) = lam E_P[rho_P(X)^2]; zero exactly for Poisson laws."""
    s = score(P)
    return s.lam * ksum(s.weights * s.rho * s.rho)


def s_info(P: Pmf) -> float:
    """
    S(P) = (1/mu) sum_y (y+1) P(y+1) (f(y) - f(y+1))^2 with
    f(y) = (y+1) P(y+1) / P(y). Vanishes for Poisson laws.
    """
    mu = _positive_mean(P)
    p = P.padded(len(P) + 2)
    ys = np.arange(p.size - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(p[:-1] > 0, (ys + 1) * p[1:] / p[:-1], 0.0)
    y = np.arange(p.size - 2)
    active = (p[y] > 0) & (p[y + 1] > 0)
    diff = f[y] - f[y + 1]
    terms = np.where(active, (y + 1) * p[y + 1] * diff * diff, 0.0)
    return ksum(terms) / mu


def k_info_derivative(P: Pmf, alpha: float, h: float = 1e-5) -> float:
    """d/dalpha [K(T_alpha P) / alpha] by central differences."""
    alpha = check_alpha(alpha)
    require(h < alpha < 1.0 - h, f"alpha must lie in ({h}, {1.0 - h}) for the difference step")

    def scaled(a: float) -> float:
        return k_info(thin(P, a)) / a

    return (scaled(alpha + h) - scaled(alpha - h)) / (2.0 * h)


def k_rate_limit(P: Pmf, lam: float, alpha_grid: Sequence[float],
                 workers: Optional[int] = None) -> List[Dict[str, float]]:
    """
    Rows (alpha, k_info, k_ratio, kappa, limit) with k_ratio = K(T_alpha P)/alpha^kappa,
    which tends to kappa c_kappa^2 as alpha -> 0. Requires mean(P) = lam and UB(lam).
    """
    require(lam > 0, f"lambda must be > 0, got {lam}")
    alphas = [check_alpha(a) for a in alpha_grid]
    if not alphas:
        raise ParameterDomainError("alpha_grid is empty")
    if alphas[-1] <= 0.0 or any(b >= a for a, b in zip(alphas, alphas[1:])):
        raise ParameterDomainError("alpha_grid must decrease strictly toward 0 and stay > 0")
    m = mean(P)
    if abs(m - lam) > config.MEAN_MATCH_RTOL * lam:
        raise HypothesisViolation(f"mean(P)={m:.10g} does not match lambda={lam:.10g}")
    cert = is_ub(P, lam)
    if not cert.holds:
        raise HypothesisViolation(f"P is not ultra bounded at lambda={lam:g}", cert)
    coeffs = charlier_coeffs(P, lam)
    kappa = find_kappa(coeffs)
    limit = 0.0 if kappa is None else kappa * coeffs.coeffs[kappa] ** 2
    power = 0 if kappa is None else kappa

    def row(alpha: float) -> Dict[str, float]:
        k_val = k_info(thin(P, alpha))
        return {
            "alpha": alpha,
            "k_info": k_val,
            "k_ratio": k_val / alpha ** power,
            "kappa": float(power) if kappa is not None else math.nan,
            "limit": limit,
        }

    with ThreadPoolExecutor(max_workers=workers or config.WORKERS) as pool:
        return list(pool.map(row, alphas))


def poincare_gap(P: Pmf, g: Sequence[float]) -> float:
    """
    sum_y P(y+1)(y+1)(g(y+1)-g(y))^2 - Var_P(g), for g given on P's stored
    support. Nonnegative when P is ultra log-concave.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.size != len(P):
        raise ParameterDomainError(f"g needs {len(P)} values, got {g.size}")
    p = P.probs
    mu_g = ksum(p * g) / ksum(p)
    lhs = ksum(p * (g - mu_g) ** 2)
    y = np.arange(len(P) - 1)
    rhs = ksum(p[y + 1] * (y + 1) * (g[y + 1] - g[y]) ** 2)
    return rhs - lhs

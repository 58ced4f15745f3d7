# divergences.py: KL / chi^2 / TV against a reference, plus the closed-form upper bounds
from __future__ import annotations

import math
from typing import Dict, NamedTuple, Union

import msgspec
import numpy as np
from scipy import special

import config
from distcore import Estimate, FamilySpec, Pmf, ksum, log_masses, summary_stats
from errors import ParameterDomainError, require

Reference = Union[Pmf, FamilySpec]

# below this a reference mass is handled through its logarithm
_TINY = 1e-280


class _Aligned(NamedTuple):
    p: np.ndarray
    q: np.ndarray
    logq: np.ndarray
    beyond: float    # reference mass past P's stored support
    unknown: float   # reference mass with no known location (a Pmf reference's tail)


def _align(P: Pmf, Q: Reference) -> _Aligned:
    n = len(P)
    if isinstance(Q, Pmf):
        q = Q.padded(n)
        beyond = float(q[n:].sum())
        q = q[:n]
        with np.errstate(divide="ignore"):
            logq = np.log(q)
        return _Aligned(P.probs, q, logq, beyond, Q.tail)
    logq, beyond = log_masses(Q, n)
    return _Aligned(P.probs, np.exp(logq), logq, beyond, 0.0)


def _impossible(a: _Aligned) -> bool:
    return bool(np.any((a.p > 0) & np.isneginf(a.logq)))


def _tail_error(P: Pmf, a: _Aligned) -> float:
    t = P.tail
    if t == 0.0 and a.unknown == 0.0:
        return 0.0
    spread = t * abs(math.log(t)) if t > 0 else 0.0
    return spread + t + a.beyond + a.unknown


# ===== Divergences ============================================================
def kl(P: Pmf, Q: Reference, with_error: bool = False):
    """
    D(P||Q) in nats over P's stored support. Reference mass outside that
    support is added when P is exact (P.tail == 0); otherwise the unstored
    region is left out and reported through the error estimate.
    """
    a = _align(P, Q)
    if _impossible(a):
        value = math.inf
    else:
        terms = np.zeros(a.p.size)
        normal = a.q > _TINY
        terms[normal] = special.kl_div(a.p[normal], a.q[normal])
        small = ~normal & (a.p > 0)
        ps = a.p[small]
        terms[small] = special.xlogy(ps, ps) - ps * a.logq[small] - ps + a.q[small]
        zero = ~normal & (a.p == 0)
        terms[zero] = a.q[zero]
        value = ksum(terms)
        if P.tail == 0.0:
            value += a.beyond + a.unknown
        value = max(value, 0.0)
    if not with_error:
        return value
    return Estimate(value, _tail_error(P, a))


def chi2(P: Pmf, Q: Reference, with_error: bool = False):
    """chi^2(P||Q) = sum (P-Q)^2 / Q, same tail convention as kl."""
    a = _align(P, Q)
    if _impossible(a):
        value = math.inf
    else:
        terms = np.zeros(a.p.size)
        normal = a.q > _TINY
        diff = a.p[normal] - a.q[normal]
        terms[normal] = diff * diff / a.q[normal]
        small = ~normal & (a.p > 0)
        with np.errstate(over="ignore"):
            terms[small] = np.exp(2.0 * np.log(a.p[small]) - a.logq[small])
        zero = ~normal & (a.p == 0)
        terms[zero] = a.q[zero]
        value = ksum(terms)
        if P.tail == 0.0:
            value += a.beyond + a.unknown
    if not with_error:
        return value
    return Estimate(value, _tail_error(P, a))


def tv(P: Pmf, Q: Reference, with_error: bool = False):
    """
    (1/2) sum |P - Q|. The unstored regions are compared as lumps, which is
    exact when both tails sit past the stored support; the error bound is
    (tail_P + tail_Q) / 2.
    """
    a = _align(P, Q)
    inside = ksum(np.abs(a.p - a.q))
    value = 0.5 * (inside + abs(P.tail - a.beyond - a.unknown))
    if not with_error:
        return value
    return Estimate(value, 0.5 * (P.tail + a.unknown))


# ===== Bounds =================================================================
class BoundReport(msgspec.Struct, frozen=True):
    value: float
    components: Dict[str, float] = msgspec.field(default_factory=dict)
    applicable: bool = True
    reason: str = ""


def _report(**components: float) -> BoundReport:
    return BoundReport(value=float(sum(components.values())), components=components)


def not_applicable(reason: str) -> BoundReport:
    return BoundReport(value=math.nan, applicable=False, reason=reason)


def _min_term(lam: float) -> float:
    return min(1.0, 1.0 / (2.0 * math.sqrt(lam)))


def _alpha_scaled_check(P: Pmf, alpha: float, lam: float):
    if not (0.0 <= alpha <= 1.0):
        raise ParameterDomainError(f"alpha must lie in [0,1], got {alpha}")
    require(lam > 0, f"lambda must be > 0, got {lam}")
    if alpha in (0.0, 1.0):
        return None, not_applicable("bound needs alpha strictly inside (0,1)")
    m, var = summary_stats(P)
    target = lam / alpha
    if abs(m - target) > config.MEAN_MATCH_RTOL * target:
        return None, not_applicable(f"mean(P)={m:.10g} differs from lambda/alpha={target:.10g}")
    return var, None


def bound_llogl(P: Pmf, alpha: float, lam: float) -> BoundReport:
    """D(T_alpha P || Po(lam)) <= alpha^2/(2(1-alpha)) + E[aX log(aX/lam)], mean(P) = lam/alpha."""
    _, skip = _alpha_scaled_check(P, alpha, lam)
    if skip is not None:
        return skip
    xs = np.arange(len(P), dtype=np.float64)
    y = alpha * xs / lam
    llogl = lam * ksum(P.probs * special.xlogy(y, y))
    return _report(alpha_sq_term=alpha * alpha / (2.0 * (1.0 - alpha)), llogl_term=llogl)


def bound_variance(P: Pmf, alpha: float, lam: float) -> BoundReport:
    """D(T_alpha P || Po(lam)) <= alpha^2/(2(1-alpha)) + alpha^2 Var(P)/lam, mean(P) = lam/alpha."""
    var, skip = _alpha_scaled_check(P, alpha, lam)
    if skip is not None:
        return skip
    return _report(alpha_sq_term=alpha * alpha / (2.0 * (1.0 - alpha)),
                   variance_term=alpha * alpha * var / lam)


def bound_compound_variance(P: Pmf, alpha: float, lam: float) -> BoundReport:
    """Same right-hand side, for D(C_Q T_alpha P || CPo(lam, Q)) with any compounder Q."""
    return bound_variance(P, alpha, lam)


def bound_tv(P: Pmf, n: int) -> BoundReport:
    """||T_{1/n} P^{*n} - Po(lam)|| <= 1/(n sqrt 2) + sigma/sqrt(n) min(1, 1/(2 sqrt lam))."""
    if n < 2:
        raise ParameterDomainError(f"bound_tv needs n >= 2, got {n}")
    lam, var = summary_stats(P)
    require(lam > 0, "bound_tv needs a positive mean")
    sigma = math.sqrt(max(var, 0.0))
    return _report(binomial_term=1.0 / (n * math.sqrt(2.0)),
                   spread_term=sigma / math.sqrt(n) * _min_term(lam))


def bound_tv_pinsker(P: Pmf, n: int) -> BoundReport:
    """Pinsker applied to the variance bound at alpha = 1/n."""
    if n < 2:
        raise ParameterDomainError(f"bound_tv_pinsker needs n >= 2, got {n}")
    lam, var = summary_stats(P)
    require(lam > 0, "bound_tv_pinsker needs a positive mean")
    inner = 1.0 / (2.0 * n * n * (1.0 - 1.0 / n)) + var / (n * lam)
    return _report(pinsker_root=math.sqrt(inner))


def bound_yannaros(m: int, t: float, lam: float) -> BoundReport:
    """||T_t P^{*m} - Po(lam)|| <= t/sqrt 2 + |m t - lam| min(1, 1/(2 sqrt lam)), P supported on {0,1,...}."""
    require(m >= 1, f"m must be >= 1, got {m}")
    require(0.0 < t <= 0.5, f"t must lie in (0, 1/2], got {t}")
    require(lam > 0, f"lambda must be > 0, got {lam}")
    return _report(t_term=t / math.sqrt(2.0), mean_gap_term=abs(m * t - lam) * _min_term(lam))


def bound_poisson_tv(lam: float, mu: float, constant: float = 2.0) -> BoundReport:
    """||Po(lam) - Po(mu)|| <= constant * (1 - exp(-|lam - mu|))."""
    require(lam > 0 and mu > 0, f"Poisson means must be > 0, got {lam}, {mu}")
    return _report(coupling_term=constant * -math.expm1(-abs(lam - mu)))


def bound_bernoulli_tv(a_n: float, b_n: float, c_n: float, lam: float) -> BoundReport:
    """
    Non-identical law of thin numbers:
    ||T_{1/n}(P_1 * ... * P_n) - Po(lam)|| <= c_n + lam_n a_n + 2(1 - exp(-|lam_n - lam|)),
    lam_n = b_n - c_n.
    """
    require(lam > 0, f"lambda must be > 0, got {lam}")
    lam_n = b_n - c_n
    return _report(multiple_term=c_n, poisson_term=lam_n * a_n,
                   mean_shift_term=2.0 * -math.expm1(-abs(lam_n - lam)))

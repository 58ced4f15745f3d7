# thinning.py: Rényi thinning, compound thinning and compound Poisson laws
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import stats

from distcore import Pmf, delta, trim_trailing, check_eps_tail, tail_cutoff
from errors import ParameterDomainError, require


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 <= alpha <= 1.0):
        raise ParameterDomainError(f"thinning parameter must lie in [0,1], got {alpha}")
    return alpha


def check_compounder(Q: Pmf) -> None:
    if Q.probs[0] != 0.0:
        raise ParameterDomainError("compounding law must put zero mass at 0")
    if len(Q) < 2:
        raise ParameterDomainError("compounding law needs mass above 0")


def thin(P: Pmf, alpha: float) -> Pmf:
    """
    T_alpha P(z) = sum_x P(x) C(x,z) alpha^z (1-alpha)^(x-z).

    Each binomial kernel row is built in log space from the ratio recurrence
    C(x,z+1)/C(x,z) = (x-z)/(z+1), so no factorial is ever formed. The tail
    is carried over unchanged.
    """
    alpha = check_alpha(alpha)
    if alpha == 1.0:
        return P
    if alpha == 0.0:
        return delta(0)
    p = P.probs
    size = p.size
    out = np.zeros(size)
    log_keep = math.log1p(-alpha)
    log_odds = math.log(alpha) - log_keep
    logs = np.log(np.arange(1, max(size, 2), dtype=np.float64))  # logs[i] = log(i+1)
    for x in np.flatnonzero(p):
        w = p[x]
        if x == 0:
            out[0] += w
            continue
        z = np.arange(x)
        steps = logs[x - z - 1] - logs[z] + log_odds
        logk = np.empty(x + 1)
        logk[0] = x * log_keep
        logk[1:] = logk[0] + np.cumsum(steps)
        out[: x + 1] += w * np.exp(logk)
    return Pmf(out, P.tail)


def _mix_powers(weights: np.ndarray, weights_tail: float,
                step: np.ndarray, step_tail: float) -> Tuple[np.ndarray, float]:
    """
    sum_l weights[l] * step^{*l}, with step^{*l} grown one convolution at a
    time. Returns (masses, unstored mass).
    """
    top = weights.size - 1
    out = np.zeros(1 + top * (step.size - 1))
    tail = weights_tail
    cur = np.array([1.0])
    cur_tail = 0.0
    for ell in range(weights.size):
        if ell:
            cur = np.convolve(cur, step)
            cur_tail = cur_tail + step_tail - cur_tail * step_tail
            cur, dropped = trim_trailing(cur)
            cur_tail += dropped
        w = weights[ell]
        if w:
            out[: cur.size] += w * cur
            tail += w * cur_tail
    return out, tail


def compound_thin(P: Pmf, alpha: float, Q: Pmf) -> Pmf:
    """
    Compound thinning: each of the X units survives with probability alpha
    and a survivor contributes an independent Q-distributed amount.
    Q = point mass at 1 reduces to thin(P, alpha).
    """
    alpha = check_alpha(alpha)
    check_compounder(Q)
    if alpha == 0.0:
        return delta(0)
    step = alpha * Q.probs.copy()
    step[0] = 1.0 - alpha
    out, tail = _mix_powers(P.probs, P.tail, step, alpha * Q.tail)
    return Pmf(out, tail)


def compound_binomial(n: int, alpha: float, Q: Pmf) -> Pmf:
    require(n >= 0, f"compound binomial needs n >= 0, got {n}")
    return compound_thin(delta(n), alpha, Q)


def compound_poisson(lam: float, Q: Pmf, eps_tail: float = None, min_len: int = 0) -> Pmf:
    """
    CPo(lam, Q) = sum_k Po(lam)(k) Q^{*k}, truncated at the first K with
    Poisson upper tail <= eps_tail; K grows when min_len asks for more
    stored masses than K-fold sums of Q reach.
    """
    require(lam > 0, f"compound Poisson needs lambda > 0, got {lam}")
    check_compounder(Q)
    eps = check_eps_tail(eps_tail)
    dist = stats.poisson(lam)
    reach = len(Q) - 1
    need = math.ceil((min_len - 1) / reach) if min_len > 1 else 0
    k_cut = max(tail_cutoff(dist, eps, 0), need)
    ks = np.arange(k_cut + 1)
    weights = np.exp(dist.logpmf(ks))
    out, tail = _mix_powers(weights, max(float(dist.sf(k_cut)), 0.0), Q.probs, Q.tail)
    return Pmf(out, min(tail, 1.0))


@dataclass(frozen=True)
class ThinParams:
    """Thinning parameter, with an optional compounding law (None = plain)."""

    alpha: float
    compounder: Optional[Pmf] = None

    def __post_init__(self):
        check_alpha(self.alpha)
        if self.compounder is not None:
            check_compounder(self.compounder)

    def apply(self, P: Pmf) -> Pmf:
        if self.compounder is None:
            return thin(P, self.alpha)
        return compound_thin(P, self.alpha, self.compounder)


def unit_compounder() -> Pmf:
    return delta(1)

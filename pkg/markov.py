# markov.py: the Poisson-reverting chain U_alpha (alpha = e^{-t}) and its trajectories
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import config
from distcore import Pmf, Poisson, convolve, delta, materialize
from divergences import chi2, kl, tv
from errors import ParameterDomainError, require
from logs import timed
from thinning import check_alpha, thin


def alpha_of_t(t: float) -> float:
    require(t >= 0, f"time must be >= 0, got {t}")
    return math.exp(-t)


def t_of_alpha(alpha: float) -> float:
    require(0.0 < alpha <= 1.0, f"alpha must lie in (0,1], got {alpha}")
    return -math.log(alpha)


def u_operator(P: Pmf, alpha: float, lam: float, eps_tail: float = None) -> Pmf:
    """U_alpha P = T_alpha P * Po((1 - alpha) lam); fixes Po(lam), U_1 = identity."""
    alpha = check_alpha(alpha)
    require(lam > 0, f"lambda must be > 0, got {lam}")
    thinned = thin(P, alpha)
    if alpha == 1.0:
        return thinned
    return convolve(thinned, materialize(Poisson((1.0 - alpha) * lam), eps_tail))


def transition_row(i: int, t: float, lam: float, eps_tail: float = None) -> Pmf:
    """Law of X_t given X_0 = i."""
    require(i >= 0, f"start state must be >= 0, got {i}")
    return u_operator(delta(i), alpha_of_t(t), lam, eps_tail)


@dataclass(frozen=True)
class ChainPoint:
    t: float
    alpha: float
    dist: Pmf
    functionals: Dict[str, float] = field(default_factory=dict)


def chain_point(P0: Pmf, lam: float, t: float, eps_tail: float = None) -> ChainPoint:
    alpha = alpha_of_t(t)
    law = u_operator(P0, alpha, lam, eps_tail)
    ref = Poisson(lam)
    funcs = {"chi2_to_po": chi2(law, ref), "kl_to_po": kl(law, ref), "tv_to_po": tv(law, ref)}
    return ChainPoint(t=t, alpha=alpha, dist=law, functionals=funcs)


def chain_trajectory(P0: Pmf, lam: float, t_grid: Sequence[float],
                     eps_tail: float = None, workers: Optional[int] = None) -> List[ChainPoint]:
    """One ChainPoint per t in a nondecreasing grid of times >= 0."""
    ts = [float(t) for t in t_grid]
    if not ts:
        raise ParameterDomainError("t_grid is empty")
    if ts[0] < 0 or any(b < a for a, b in zip(ts, ts[1:])):
        raise ParameterDomainError("t_grid must be nondecreasing and >= 0")
    with timed("chain_trajectory", points=len(ts), lam=lam):
        with ThreadPoolExecutor(max_workers=workers or config.WORKERS) as pool:
            return list(pool.map(lambda t: chain_point(P0, lam, t, eps_tail), ts))

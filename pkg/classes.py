# classes.py: ULC / PB / UB / Bernoulli-sum certificates with explicit witnesses
from __future__ import annotations

import math
from typing import List, Optional, Sequence, Tuple, Union

import msgspec
import numpy as np
from scipy import special

import config
from distcore import (
    Bernoulli, BernoulliSum, Binomial, FamilySpec, Pmf, PointMass,
    ksum, log_factorial_moment, mean,
)
from errors import ParameterDomainError, require

COMPLETE = "complete"
UP_TO_KMAX = "up to kmax"


class Witness(msgspec.Struct, frozen=True):
    """A failing inequality `lhs <relation> rhs` at `index` (j for ULC, k for moments)."""

    index: int
    lhs: float
    rhs: float
    relation: str = ">="
    note: str = ""


class ClassCertificate(msgspec.Struct, frozen=True):
    class_name: str
    holds: bool
    ratio: Optional[float] = None
    witness: Optional[Witness] = None
    kmax_checked: int = 0
    scope: str = COMPLETE


def is_ulc(P: Pmf) -> ClassCertificate:
    """
    Ultra log-concave: j P(j)^2 >= (j+1) P(j-1) P(j+1) wherever P(j-1) > 0,
    and no internal zeros.
    """
    p = P.padded(len(P) + 1)
    top = len(P) - 1
    pos = np.flatnonzero(p > 0)
    if pos.size == 0:
        raise ParameterDomainError("no stored mass to certify: every mass sits in the tail")
    first, last = int(pos[0]), int(pos[-1])
    for j in range(first + 1, last):
        if p[j] == 0.0:
            return ClassCertificate(
                "ULC", False,
                witness=Witness(j, 0.0, float(p[last]), ">", "internal zero in the support"),
                kmax_checked=top)
    j = np.arange(1, top + 1)
    lhs = j * p[j] ** 2
    rhs = (j + 1) * p[j - 1] * p[j + 1]
    active = p[j - 1] > 0
    bad = active & (lhs < rhs - config.CLASS_SLACK * np.maximum(np.abs(lhs), np.abs(rhs)))
    scope = COMPLETE if P.exact else UP_TO_KMAX
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        return ClassCertificate(
            "ULC", False,
            witness=Witness(int(j[i]), float(lhs[i]), float(rhs[i]), ">=",
                            "j P(j)^2 >= (j+1) P(j-1) P(j+1)"),
            kmax_checked=top, scope=scope)
    return ClassCertificate("ULC", True, kmax_checked=top, scope=scope)


def _moment_range(P: Pmf, kmax: Optional[int]) -> Tuple[int, str]:
    kmax = config.CLASS_KMAX if kmax is None else int(kmax)
    require(kmax >= 1, f"kmax must be >= 1, got {kmax}")
    if P.exact:
        # factorial moments of order past the support are all zero
        return max(kmax, len(P)), COMPLETE
    return kmax, UP_TO_KMAX


def is_pb(P: Pmf, lam: float, kmax: Optional[int] = None) -> ClassCertificate:
    """Poisson-bounded: E[X^(k falling)] <= lam^k for every k >= 1."""
    require(lam > 0, f"lambda must be > 0, got {lam}")
    top, scope = _moment_range(P, kmax)
    log_lam = math.log(lam)
    for k in range(1, top + 1):
        lm = log_factorial_moment(P, k)
        bound = k * log_lam
        if lm > bound + config.CLASS_SLACK:
            return ClassCertificate(
                "PB", False, ratio=lam,
                witness=Witness(k, math.exp(min(lm, 700.0)), math.exp(min(bound, 700.0)), "<=",
                                "E[X^(k falling)] <= lambda^k"),
                kmax_checked=k, scope=scope)
    return ClassCertificate("PB", True, ratio=lam, kmax_checked=top, scope=scope)


def is_ub(P: Pmf, lam: float, kmax: Optional[int] = None) -> ClassCertificate:
    """Ultra bounded: E[X^(k+1 falling)] <= lam E[X^(k falling)] for every k >= 0."""
    require(lam > 0, f"lambda must be > 0, got {lam}")
    top, scope = _moment_range(P, kmax)
    log_lam = math.log(lam)
    prev = log_factorial_moment(P, 0)
    for k in range(0, top):
        nxt = log_factorial_moment(P, k + 1)
        if prev == -math.inf:
            break
        if nxt > log_lam + prev + config.CLASS_SLACK:
            return ClassCertificate(
                "UB", False, ratio=lam,
                witness=Witness(k, math.exp(min(nxt, 700.0)), lam * math.exp(min(prev, 700.0)), "<=",
                                "E[X^(k+1 falling)] <= lambda E[X^(k falling)]"),
                kmax_checked=k, scope=scope)
        prev = nxt
    return ClassCertificate("UB", True, ratio=lam, kmax_checked=top, scope=scope)


BernoulliSource = Union[FamilySpec, Sequence[FamilySpec]]


def _bernoulli_mean(spec: FamilySpec) -> Optional[float]:
    if isinstance(spec, Bernoulli):
        return spec.p
    if isinstance(spec, Binomial):
        return spec.n * spec.p
    if isinstance(spec, PointMass):
        return float(spec.k)
    if isinstance(spec, BernoulliSum):
        return float(sum(spec.ps))
    return None


def is_bernoulli_sum(source: BernoulliSource) -> ClassCertificate:
    """
    Constructive check: holds when every listed law is a Bernoulli, binomial,
    point mass or explicit Bernoulli sum. Other families are reported as not
    certified (they may still be Bernoulli sums in disguise).
    """
    specs = list(source) if isinstance(source, (list, tuple)) else [source]
    total = 0.0
    for i, spec in enumerate(specs):
        m = _bernoulli_mean(spec)
        if m is None:
            return ClassCertificate(
                "BernoulliSum", False,
                witness=Witness(i, math.nan, math.nan, "is",
                                f"{type(spec).__name__} is not constructively a Bernoulli sum"),
                kmax_checked=0, scope=UP_TO_KMAX)
        total += m
    return ClassCertificate("BernoulliSum", True, ratio=total, kmax_checked=0)


def classify(P: Pmf, lam: Optional[float] = None, kmax: Optional[int] = None) -> List[ClassCertificate]:
    """ULC, PB and UB certificates at lam (default: the mean of P)."""
    lam = mean(P) if lam is None else lam
    require(lam > 0, "classification needs lambda > 0")
    return [is_ulc(P), is_pb(P, lam, kmax), is_ub(P, lam, kmax)]


def pb_envelope(P: Pmf, mu: float) -> np.ndarray:
    """Po(mu)(x) e^mu = mu^x / x! on P's stored support; P(x) sits below it when PB(mu)."""
    require(mu > 0, f"mu must be > 0, got {mu}")
    xs = np.arange(len(P), dtype=np.float64)
    return np.exp(xs * math.log(mu) - special.gammaln(xs + 1.0))


def altsum_pmf(fact_moments: Sequence[float], x: int, m: int) -> Tuple[float, str]:
    """
    (1/x!) sum_{l=0}^{m} (-1)^l E[X^(x+l falling)] / l!. An upper bound on
    P(x) when m is even, a lower bound when m is odd.
    """
    require(x >= 0 and m >= 0, f"x and m must be >= 0, got {x}, {m}")
    if len(fact_moments) < x + m + 1:
        raise ParameterDomainError(f"need {x + m + 1} factorial moments, got {len(fact_moments)}")
    ls = np.arange(m + 1)
    signs = np.where(ls % 2 == 0, 1.0, -1.0)
    moments = np.asarray(fact_moments[x: x + m + 1], dtype=np.float64)
    terms = signs * moments * np.exp(-special.gammaln(ls + 1.0))
    value = ksum(terms) * math.exp(-special.gammaln(x + 1.0))
    return value, "upper" if m % 2 == 0 else "lower"

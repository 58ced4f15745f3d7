# charlier.py: orthonormal Poisson-Charlier polynomials and the likelihood-ratio expansion
from __future__ import annotations

import math
from typing import List, Optional, Sequence

import msgspec
import numpy as np
from scipy import special, stats

import config
from classes import is_pb
from distcore import Pmf, factorial_moment, ksum, tail_envelope
from errors import HypothesisViolation, ParameterDomainError, require


class CharlierCoeffs(msgspec.Struct, frozen=True):
    """
    c_k = E_P[P_k^lam(X)], k = 0..kmax. `trunc_bound` bounds the omitted
    sum_{k > kmax} c_k^2 under the PB(lam) hypothesis. `tail_errors[k]`
    bounds what P's unstored mass could add to c_k.
    """

    lam: float = msgspec.field(name="lambda")
    coeffs: List[float] = msgspec.field(default_factory=list)
    kmax: int = 0
    trunc_bound: float = math.nan
    trunc_note: str = ""
    tail_errors: List[float] = msgspec.field(default_factory=list)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coeffs, dtype=np.float64)

    def error(self, k: int) -> float:
        return self.tail_errors[k] if k < len(self.tail_errors) else 0.0


def _check(lam: float, k: int) -> None:
    require(lam > 0, f"lambda must be > 0, got {lam}")
    require(k >= 0, f"polynomial order must be >= 0, got {k}")


def charlier_table(kmax: int, lam: float, xmax: int) -> np.ndarray:
    """
    Rows P_0..P_kmax evaluated at x = 0..xmax, from
    P_{k+1}(x) = (x P_k(x-1) - lam P_k(x)) / sqrt(lam (k+1)).
    """
    _check(lam, kmax)
    require(xmax >= 0, f"xmax must be >= 0, got {xmax}")
    xs = np.arange(xmax + 1, dtype=np.float64)
    table = np.empty((kmax + 1, xmax + 1))
    table[0] = 1.0
    for k in range(kmax):
        prev = table[k]
        shifted = np.zeros_like(prev)
        shifted[1:] = prev[:-1]
        table[k + 1] = (xs * shifted - lam * prev) / math.sqrt(lam * (k + 1))
    return table


def charlier_eval(k: int, lam: float, x: int) -> float:
    require(x >= 0, f"x must be >= 0, got {x}")
    return float(charlier_table(k, lam, x)[k, x])


def charlier_moment(P: Pmf, lam: float, k: int, method: str = "moments") -> float:
    """
    E_P[P_k^lam(X)]. "moments" expands through factorial moments,
    (lam^k k!)^{-1/2} sum_l C(k,l) (-lam)^(k-l) E[X^(l falling)];
    "pointwise" sums P(x) P_k(x) over the stored support.
    """
    _check(lam, k)
    if method == "pointwise":
        table = charlier_table(k, lam, len(P) - 1)
        return ksum(P.probs * table[k])
    if method != "moments":
        raise ParameterDomainError(f"unknown method {method!r}")
    ls = np.arange(k + 1)
    moments = np.array([factorial_moment(P, int(ell)) for ell in ls])
    weights = special.comb(k, ls) * (-lam) ** (k - ls)
    norm = math.exp(-0.5 * (k * math.log(lam) + special.gammaln(k + 1.0)))
    return ksum(weights * moments) * norm


def _trunc_bound(lam: float, kmax: int) -> float:
    # under PB(lam), |c_k| <= 2^k lam^(k/2) / sqrt(k!), so the remainder is
    # at most e^{4 lam} P(Po(4 lam) > kmax)
    return math.exp(4.0 * lam) * float(stats.poisson.sf(kmax, 4.0 * lam))


def tail_errors(P: Pmf, lam: float, kmax: int) -> np.ndarray:
    """
    sum_x w(x) max_{N <= y <= x} |P_k(y)| over the geometric tail envelope w.
    Bounds |c_k(P + tail) - c_k(P)| when the tail decays no slower than the envelope.
    """
    _check(lam, kmax)
    if P.exact:
        return np.zeros(kmax + 1)
    xs, w = tail_envelope(P, extra=kmax)
    table = charlier_table(kmax, lam, int(xs[-1]))[:, xs[0]:]
    with np.errstate(invalid="ignore", over="ignore"):
        reach = np.maximum.accumulate(np.abs(table), axis=1)
        live = w > 0
        return reach[:, live] @ w[live]


def charlier_coeffs(P: Pmf, lam: float, kmax: Optional[int] = None) -> CharlierCoeffs:
    """Coefficients without the PB gate (used where UB or mean match is checked elsewhere)."""
    kmax = config.CHARLIER_KMAX if kmax is None else int(kmax)
    _check(lam, kmax)
    coeffs = [charlier_moment(P, lam, k) for k in range(kmax + 1)]
    bound = _trunc_bound(lam, kmax)
    note = f"remainder sum_(k>{kmax}) c_k^2 <= {bound:.3g} under PB({lam:g})"
    return CharlierCoeffs(lam=lam, coeffs=coeffs, kmax=kmax, trunc_bound=bound, trunc_note=note,
                          tail_errors=tail_errors(P, lam, kmax).tolist())


def lr_coefficients(P: Pmf, lam: float, kmax: Optional[int] = None) -> CharlierCoeffs:
    """
    Charlier coefficients of P / Po(lam). The expansion converges in L^2(Po)
    under PB(lam); any other input is refused with HypothesisViolation.
    """
    cert = is_pb(P, lam)
    if not cert.holds:
        raise HypothesisViolation(f"P is not Poisson-bounded at lambda={lam:g}", cert)
    return charlier_coeffs(P, lam, kmax)


def lr_reconstruct(coeffs: CharlierCoeffs, xs: Sequence[int]) -> np.ndarray:
    """Po(lam)(x) * sum_k c_k P_k(x): the truncated likelihood-ratio expansion of P(x)."""
    xs = np.asarray(xs, dtype=np.int64)
    require(xs.size > 0 and xs.min() >= 0, "xs must be nonempty and >= 0")
    table = charlier_table(coeffs.kmax, coeffs.lam, int(xs.max()))
    ratio = coeffs.array @ table[:, xs]
    return ratio * stats.poisson.pmf(xs, coeffs.lam)


def chi2_series(coeffs: CharlierCoeffs, alpha: float) -> float:
    """sum_{k>=1} alpha^{2k} c_k^2 = chi^2(U_alpha P || Po(lam)), truncated at kmax."""
    if not (0.0 <= alpha <= 1.0):
        raise ParameterDomainError(f"alpha must lie in [0,1], got {alpha}")
    c = coeffs.array[1:]
    ks = np.arange(1, c.size + 1)
    return ksum(alpha ** (2 * ks) * c * c)


def find_kappa(coeffs: CharlierCoeffs, tol: float = None) -> Optional[int]:
    """
    Smallest k >= 1 with |c_k| above both tol and its tail error, or None
    (P is Poisson up to kmax, as far as the stored masses can tell).
    """
    tol = config.KAPPA_TOL if tol is None else tol
    for k, c in enumerate(coeffs.coeffs[1:], start=1):
        if abs(c) > max(tol, coeffs.error(k)):
            return k
    return None


def edgeworth_term(coeffs: CharlierCoeffs, x: int, tol: float = None) -> float:
    """c_kappa P_kappa(x): the first non-trivial correction at x, 0 when kappa is undefined."""
    kappa = find_kappa(coeffs, tol)
    if kappa is None:
        return 0.0
    return coeffs.coeffs[kappa] * charlier_eval(kappa, coeffs.lam, x)

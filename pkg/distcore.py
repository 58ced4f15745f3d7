# distcore.py: finite-support PMFs on {0,1,...} with an explicit tail residual
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, NamedTuple, Tuple, Union

import msgspec
import numpy as np
from scipy import special, stats

import config
from errors import ParameterDomainError, ResourceLimitError, require


# ===== Numerics helpers =======================================================
def ksum(values: Iterable[float]) -> float:
    """Compensated sum; non-finite inputs propagate (inf stays inf)."""
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        return 0.0
    if not np.all(np.isfinite(arr)):
        return float(np.sum(arr))
    return math.fsum(arr.tolist())


def falling_factorial(x: np.ndarray, k: int) -> np.ndarray:
    """x(x-1)...(x-k+1) elementwise; zero for integer x < k."""
    x = np.asarray(x, dtype=np.float64)
    out = np.ones_like(x)
    for j in range(k):
        out *= x - j
    return out


def trim_trailing(arr: np.ndarray) -> Tuple[np.ndarray, float]:
    """Cut trailing masses below TRIM_BELOW; return (kept, dropped mass)."""
    keep = np.flatnonzero(arr >= config.TRIM_BELOW)
    last = int(keep[-1]) if keep.size else 0
    if last + 1 >= arr.size:
        return arr, 0.0
    return arr[: last + 1], float(arr[last + 1:].sum())


class Estimate(NamedTuple):
    value: float
    error: float


# ===== Pmf ====================================================================
@dataclass(frozen=True, eq=False)
class Pmf:
    """
    Masses on {0, ..., len-1} plus `tail`, the mass not stored (it sits past
    the last index for truncated families; for derived laws it is simply the
    unaccounted mass). Canonical: trailing masses below 1e-300 are folded
    into the tail. Immutable; `probs` is a read-only float64 array.
    """

    probs: np.ndarray
    tail: float = 0.0

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64, copy=True).ravel()
        tail = float(self.tail)
        if p.size == 0:
            raise ParameterDomainError("a Pmf needs at least one stored mass")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ParameterDomainError("Pmf masses must be finite and nonnegative")
        if not math.isfinite(tail) or tail < 0:
            raise ParameterDomainError(f"Pmf tail must be finite and nonnegative, got {tail}")
        p, dropped = trim_trailing(p)
        tail += dropped
        if p.size > config.MAX_SUPPORT:
            raise ResourceLimitError(f"support length {p.size} exceeds cap {config.MAX_SUPPORT}")
        total = float(np.sum(p)) + tail
        if abs(total - 1.0) > config.MASS_TOL:
            raise ParameterDomainError(f"masses plus tail sum to {total!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "tail", tail)

    def __len__(self) -> int:
        return int(self.probs.size)

    @property
    def exact(self) -> bool:
        return self.tail == 0.0

    def at(self, x: int) -> float:
        return float(self.probs[x]) if 0 <= x < self.probs.size else 0.0

    def padded(self, n: int) -> np.ndarray:
        """Masses on 0..max(n, len)-1, zero filled."""
        out = np.zeros(max(n, self.probs.size))
        out[: self.probs.size] = self.probs
        return out

    def __repr__(self) -> str:
        head = ", ".join(f"{v:.6g}" for v in self.probs[:6])
        more = ", ..." if self.probs.size > 6 else ""
        return f"Pmf([{head}{more}], len={self.probs.size}, tail={self.tail:.3g})"


def delta(k: int = 0) -> Pmf:
    require(k >= 0, f"point mass needs k >= 0, got {k}")
    p = np.zeros(k + 1)
    p[k] = 1.0
    return Pmf(p)


# ===== Family specs ===========================================================
class _Family(msgspec.Struct, frozen=True, tag_field="family"):
    pass


class PointMass(_Family, tag="point"):
    k: int


class Bernoulli(_Family, tag="bernoulli"):
    p: float


class Binomial(_Family, tag="binomial"):
    n: int
    p: float


class Geometric(_Family, tag="geometric"):
    mean: float


class NegativeBinomial(_Family, tag="negbin"):
    r: float
    mean: float


class Poisson(_Family, tag="poisson"):
    lam: float = msgspec.field(name="lambda")


class CompoundPoisson(_Family, tag="compound_poisson"):
    lam: float = msgspec.field(name="lambda")
    q: List[float] = msgspec.field(default_factory=list)


class BernoulliSum(_Family, tag="bernoulli_sum"):
    ps: List[float] = msgspec.field(default_factory=list)


class Empirical(_Family, tag="empirical"):
    probs: List[float] = msgspec.field(default_factory=list)
    tail: float = 0.0


FamilySpec = Union[
    PointMass, Bernoulli, Binomial, Geometric, NegativeBinomial,
    Poisson, CompoundPoisson, BernoulliSum, Empirical,
]

_ANALYTIC = (PointMass, Bernoulli, Binomial, Geometric, NegativeBinomial, Poisson)


def _is_prob(p: float) -> bool:
    return 0.0 <= p <= 1.0


def validate_family(spec: FamilySpec) -> None:
    if isinstance(spec, PointMass):
        require(spec.k >= 0, f"PointMass needs k >= 0, got {spec.k}")
    elif isinstance(spec, Bernoulli):
        require(_is_prob(spec.p), f"Bernoulli needs p in [0,1], got {spec.p}")
    elif isinstance(spec, Binomial):
        require(spec.n >= 0 and _is_prob(spec.p), f"Binomial needs n >= 0, p in [0,1], got {spec}")
    elif isinstance(spec, Geometric):
        require(spec.mean > 0, f"Geometric needs mean > 0, got {spec.mean}")
    elif isinstance(spec, NegativeBinomial):
        require(spec.r >= 1 and spec.mean > 0, f"NegativeBinomial needs r >= 1, mean > 0, got {spec}")
    elif isinstance(spec, Poisson):
        require(spec.lam > 0, f"Poisson needs lambda > 0, got {spec.lam}")
    elif isinstance(spec, CompoundPoisson):
        require(spec.lam > 0, f"CompoundPoisson needs lambda > 0, got {spec.lam}")
        require(len(spec.q) >= 2 and spec.q[0] == 0.0,
                "CompoundPoisson compounding law needs zero mass at 0 and some mass above")
    elif isinstance(spec, BernoulliSum):
        require(all(_is_prob(p) for p in spec.ps), f"BernoulliSum needs every p in [0,1], got {spec.ps}")
    elif isinstance(spec, Empirical):
        require(len(spec.probs) > 0, "Empirical needs at least one mass")
    else:
        raise ParameterDomainError(f"unknown family spec {spec!r}")


def _frozen(spec: FamilySpec):
    if isinstance(spec, Poisson):
        return stats.poisson(spec.lam)
    if isinstance(spec, Binomial):
        return stats.binom(spec.n, spec.p)
    if isinstance(spec, Bernoulli):
        return stats.binom(1, spec.p)
    if isinstance(spec, Geometric):
        return stats.nbinom(1, 1.0 / (1.0 + spec.mean))
    if isinstance(spec, NegativeBinomial):
        return stats.nbinom(spec.r, spec.r / (spec.r + spec.mean))
    return None


def tail_cutoff(dist, eps_tail: float, min_len: int) -> int:
    """Smallest N with P(X > N) <= eps_tail, raised to min_len - 1."""
    hi = max(int(dist.mean() + 12.0 * dist.std()) + 16, min_len, 16)
    while dist.sf(hi) > eps_tail:
        hi *= 2
        if hi > config.MAX_SUPPORT:
            raise ResourceLimitError(f"truncation at eps_tail={eps_tail} needs support beyond {config.MAX_SUPPORT}")
    sf = dist.sf(np.arange(hi + 1))
    n_cut = int(np.argmax(sf <= eps_tail))
    return max(n_cut, min_len - 1)


def check_eps_tail(eps_tail: float) -> float:
    eps = config.EPS_TAIL if eps_tail is None else float(eps_tail)
    require(0.0 < eps <= config.MAX_EPS_TAIL, f"eps_tail must lie in (0, {config.MAX_EPS_TAIL}], got {eps}")
    return eps


def _bernoulli_sum_masses(ps: List[float]) -> np.ndarray:
    # coefficients of prod(1 - p + p z)
    out = np.array([1.0])
    for p in ps:
        nxt = np.zeros(out.size + 1)
        nxt[:-1] = out * (1.0 - p)
        nxt[1:] += out * p
        out = nxt
    return out


def materialize(spec: FamilySpec, eps_tail: float = None, min_len: int = 0) -> Pmf:
    """
    Truncated Pmf of a family. Infinite families stop at the first N whose
    upper tail is <= eps_tail (or later, to reach `min_len` stored masses);
    masses come from log-space evaluation.
    """
    eps = check_eps_tail(eps_tail)
    validate_family(spec)
    if isinstance(spec, PointMass):
        return delta(spec.k)
    if isinstance(spec, BernoulliSum):
        return Pmf(_bernoulli_sum_masses(spec.ps))
    if isinstance(spec, Empirical):
        return Pmf(np.asarray(spec.probs, dtype=np.float64), spec.tail)
    if isinstance(spec, CompoundPoisson):
        from thinning import compound_poisson
        return compound_poisson(spec.lam, Pmf(np.asarray(spec.q, dtype=np.float64)), eps, min_len)
    if isinstance(spec, Bernoulli):
        return Pmf([1.0 - spec.p, spec.p])
    dist = _frozen(spec)
    if isinstance(spec, Binomial):
        xs = np.arange(spec.n + 1)
        return Pmf(np.exp(dist.logpmf(xs)))
    n_cut = tail_cutoff(dist, eps, min_len)
    xs = np.arange(n_cut + 1)
    return Pmf(np.exp(dist.logpmf(xs)), max(float(dist.sf(n_cut)), 0.0))


def log_masses(spec: FamilySpec, n: int, eps_tail: float = None) -> Tuple[np.ndarray, float]:
    """
    (log masses on 0..n-1, mass beyond n-1) of a reference family. Analytic
    families are evaluated in closed form, so nothing underflows to -inf
    where the true mass is positive.
    """
    validate_family(spec)
    xs = np.arange(n)
    if isinstance(spec, PointMass):
        logq = np.where(xs == spec.k, 0.0, -np.inf)
        return logq, 1.0 if spec.k >= n else 0.0
    dist = _frozen(spec)
    if dist is not None:
        return dist.logpmf(xs), max(float(dist.sf(n - 1)), 0.0)
    ref = materialize(spec, eps_tail, min_len=n)
    q = ref.padded(n)
    with np.errstate(divide="ignore"):
        logq = np.log(q[:n])
    return logq, float(q[n:].sum()) + ref.tail


# ===== Operations =============================================================
def convolve(P: Pmf, Q: Pmf) -> Pmf:
    """Exact Cauchy product; the unstored mass is 1 - (1-tP)(1-tQ)."""
    tail = P.tail + Q.tail - P.tail * Q.tail
    return Pmf(np.convolve(P.probs, Q.probs), tail)


def n_fold(P: Pmf, n: int) -> Pmf:
    """P^{*n} by binary splitting; n = 0 gives the point mass at 0."""
    require(n >= 0, f"n_fold needs n >= 0, got {n}")
    result = None
    base = P
    k = int(n)
    while k:
        if k & 1:
            result = base if result is None else convolve(result, base)
        k >>= 1
        if k:
            base = convolve(base, base)
    return delta(0) if result is None else result


def tail_ratio(P: Pmf) -> float:
    """Decay ratio of the last two stored masses, capped at TAIL_RATIO_CAP."""
    p = P.probs
    if p.size < 2 or p[-2] <= 0:
        return config.TAIL_RATIO_CAP
    return min(float(p[-1] / p[-2]), config.TAIL_RATIO_CAP)


def tail_envelope(P: Pmf, extra: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    The unstored mass spread geometrically past the support: points N, N+1, ...
    with weights tail (1-r) r^j, r = tail_ratio(P). It dominates the true tail
    whenever the ratios P(x+1)/P(x) keep decreasing past the support.
    """
    n = len(P)
    r = tail_ratio(P)
    width = int(math.ceil(40.0 / (1.0 - r))) + int(extra)
    xs = np.arange(n, n + width)
    w = np.zeros(width)
    if P.tail == 0.0:
        return xs, w
    if r == 0.0:
        w[0] = P.tail
        return xs, w
    return xs, P.tail * (1.0 - r) * r ** np.arange(width, dtype=np.float64)


def factorial_moment(P: Pmf, k: int, with_error: bool = False):
    """
    E[X^(k falling)] over the stored support. The unstored tail is not added;
    with_error=True returns Estimate whose error is the k-th factorial moment
    of `tail_envelope`, a bound on the missing part for tails that decay at
    least geometrically at the last stored ratio.
    """
    require(k >= 0, f"factorial moment order must be >= 0, got {k}")
    xs = np.arange(len(P))
    value = ksum(P.probs * falling_factorial(xs, k))
    if not with_error:
        return value
    txs, w = tail_envelope(P, extra=k)
    keep = (w > 0) & (txs >= k)
    if not np.any(keep):
        return Estimate(value, 0.0)
    x = txs[keep].astype(np.float64)
    terms = np.log(w[keep]) + special.gammaln(x + 1.0) - special.gammaln(x - k + 1.0)
    return Estimate(value, float(np.exp(special.logsumexp(terms))))


def log_factorial_moment(P: Pmf, k: int) -> float:
    """log E[X^(k falling)]; -inf when the moment vanishes. Overflow-free."""
    xs = np.arange(k, len(P))
    if xs.size == 0:
        return -math.inf
    p = P.probs[k:]
    pos = p > 0
    if not np.any(pos):
        return -math.inf
    terms = np.log(p[pos]) + special.gammaln(xs[pos] + 1.0) - special.gammaln(xs[pos] - k + 1.0)
    return float(special.logsumexp(terms))


def summary_stats(P: Pmf) -> Tuple[float, float]:
    m1 = factorial_moment(P, 1)
    m2 = factorial_moment(P, 2)
    return m1, m2 + m1 - m1 * m1


def mean(P: Pmf) -> float:
    return factorial_moment(P, 1)


def entropy(P: Pmf, with_error: bool = False):
    """Natural-log entropy with 0 log 0 = 0."""
    value = ksum(special.entr(P.probs))
    if not with_error:
        return value
    t = P.tail
    err = 0.0 if t == 0 else t * (1.0 + abs(math.log(t)))
    return Estimate(value, err)


# ===== PMF JSON ===============================================================
class PmfDoc(msgspec.Struct):
    probs: List[float]
    tail: float = 0.0


def pmf_to_json(P: Pmf) -> bytes:
    return msgspec.json.encode(PmfDoc(probs=P.probs.tolist(), tail=P.tail))


def pmf_from_json(data: Union[bytes, str]) -> Pmf:
    """
    Readers accept |sum + tail - 1| <= 1e-9; a deficit is added to the tail,
    a surplus is removed by rescaling the stored masses.
    """
    try:
        doc = msgspec.json.decode(data, type=PmfDoc)
    except msgspec.DecodeError as e:
        raise ParameterDomainError(f"bad PMF JSON: {e}") from e
    p = np.asarray(doc.probs, dtype=np.float64)
    if p.size == 0 or np.any(~np.isfinite(p)) or np.any(p < 0) or doc.tail < 0:
        raise ParameterDomainError("PMF JSON has negative, non-finite or missing masses")
    s = ksum(p)
    gap = s + doc.tail - 1.0
    if abs(gap) > config.JSON_MASS_TOL:
        raise ParameterDomainError(f"PMF JSON masses plus tail sum to {s + doc.tail!r}")
    tail = doc.tail
    if gap < -config.MASS_TOL:
        tail = 1.0 - s
    elif gap > config.MASS_TOL:
        p = p * ((1.0 - tail) / s)
    return Pmf(p, tail)


def read_pmf_file(path: Union[str, Path]) -> Pmf:
    return pmf_from_json(Path(path).read_bytes())


def write_pmf_file(P: Pmf, path: Union[str, Path]) -> None:
    Path(path).write_bytes(pmf_to_json(P))

# harness.py
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, Iterable, List, Literal, Optional, Sequence, Union

import msgspec

import config
from charlier import charlier_coeffs, chi2_series, find_kappa
from classes import classify, is_pb, is_ub, is_ulc
from distcore import (
    CompoundPoisson, FamilySpec, Pmf, Poisson, convolve, delta, entropy,
    materialize, n_fold, summary_stats,
)
from divergences import (
    bound_bernoulli_tv, bound_compound_variance, bound_llogl, bound_tv,
    bound_tv_pinsker, bound_variance, chi2, kl, tv,
)
from errors import HypothesisViolation, ParameterDomainError, ResourceLimitError, require
from fisher import k_info, score
from logs import jlog, timed
from markov import chain_trajectory
from thinning import check_compounder, compound_thin, thin

Experiment = Literal["ltn_iid", "ltn_niid", "rate", "chain", "bounds", "compound"]
Source = Union[FamilySpec, Pmf]

LTN_IID_COLUMNS = [
    "n", "tv", "kl", "entropy", "entropy_po", "bound_variance", "bound_tv",
    "bound_pinsker", "bound_fisher", "tail_error",
]
LTN_NIID_COLUMNS = [
    "n", "a_n", "b_n", "c_n", "lambda_n", "tv", "kl", "tv_bound", "second_moment_series",
]
LTN_NIID_ALPHA_COLUMNS = ["alpha_n", "kl_alpha", "bound_alpha"]
RATE_COLUMNS = ["n", "kl", "kl_scaled", "chi2", "kl_over_chi2", "k_thin", "k_thin_scaled", "limit"]
CHAIN_COLUMNS = ["t", "alpha", "chi2", "chi2_scaled", "kl", "kl_over_chi2", "tv", "chi2_series"]
BOUNDS_COLUMNS = ["alpha", "lambda", "kl", "bound_llogl", "bound_variance"]
COMPOUND_COLUMNS = ["n", "kl_to_cpo", "compound_variance_bound"]


# ===== Config / report types ==================================================
class ExperimentConfig(msgspec.Struct, frozen=True, forbid_unknown_fields=True):
    """One experiment; exactly the grid that matches `experiment` is nonempty."""

    experiment: Experiment
    source: Union[FamilySpec, List[FamilySpec]]
    lam: Optional[float] = msgspec.field(default=None, name="lambda")
    n_grid: List[int] = msgspec.field(default_factory=list)
    t_grid: List[float] = msgspec.field(default_factory=list)
    alpha_grid: List[float] = msgspec.field(default_factory=list)
    eps_tail: float = config.EPS_TAIL
    compounder: Optional[List[float]] = None
    alpha_variant: bool = False
    output: Optional[str] = None
    format: Literal["csv", "json"] = "csv"

    def validate(self) -> None:
        wanted = {
            "ltn_iid": "n_grid", "ltn_niid": "n_grid", "rate": "n_grid",
            "compound": "n_grid", "chain": "t_grid", "bounds": "alpha_grid",
        }[self.experiment]
        for name in ("n_grid", "t_grid", "alpha_grid"):
            filled = bool(getattr(self, name))
            if name == wanted and not filled:
                raise ParameterDomainError(f"{self.experiment} needs a nonempty {name}")
            if name != wanted and filled:
                raise ParameterDomainError(f"{self.experiment} does not take {name}")
        if self.experiment == "compound" and not self.compounder:
            raise ParameterDomainError("compound needs a compounder")
        if isinstance(self.source, list) and self.experiment != "ltn_niid":
            raise ParameterDomainError(f"{self.experiment} takes a single source law")


class ExperimentReport(msgspec.Struct):
    experiment: str
    columns: List[str]
    rows: List[Dict[str, Any]]
    metadata: Dict[str, Any] = msgspec.field(default_factory=dict)


# ===== Helpers ================================================================
def _check_n(n: int) -> int:
    n = int(n)
    if n < 1:
        raise ParameterDomainError(f"n must be >= 1, got {n}")
    if n > config.MAX_N:
        raise ResourceLimitError(f"n={n} exceeds cap {config.MAX_N}")
    return n


def _law(source: Source, eps_tail: float) -> Pmf:
    return source if isinstance(source, Pmf) else materialize(source, eps_tail)


def _sweep(fn: Callable[[Any], Dict[str, Any]], grid: Iterable[Any],
           workers: Optional[int] = None) -> List[Dict[str, Any]]:
    with ThreadPoolExecutor(max_workers=workers or config.WORKERS) as pool:
        return list(pool.map(fn, grid))


def _value(report) -> float:
    return report.value if report.applicable else math.nan


def _ratio(a: float, b: float) -> float:
    return a / b if b > 0 and math.isfinite(b) else math.nan


def _finish(name: str, columns: List[str], rows: List[Dict[str, Any]],
            metadata: Dict[str, Any]) -> ExperimentReport:
    rows = [{c: row[c] for c in columns} for row in rows]
    notes = metadata.setdefault("notes", [])
    if any(isinstance(v, float) and math.isinf(v) for row in rows for v in row.values()):
        notes.append("infinite divergence: the reference has zero mass where the law does not")
        jlog("experiment_infinite_divergence", experiment=name)
    return ExperimentReport(experiment=name, columns=list(columns), rows=rows, metadata=metadata)


def _positive_mean(P: Pmf) -> float:
    lam, _ = summary_stats(P)
    if not lam > 0:
        raise ParameterDomainError(f"source law needs a positive mean, got {lam}")
    return lam


# ===== Experiments ============================================================
def ltn_iid(source: Source, n_grid: Sequence[int], eps_tail: float = None,
            workers: Optional[int] = None) -> ExperimentReport:
    """D, TV and entropy of T_{1/n} P^{*n} against Po(lam), lam = mean(P), with the bounds."""
    base = _law(source, eps_tail)
    lam = _positive_mean(base)
    ref = Poisson(lam)
    h_po = entropy(materialize(ref, eps_tail))
    fisher_ok = is_ulc(base).holds and score(base).contiguous
    k_base = k_info(base) if fisher_ok else math.nan
    grid = [_check_n(n) for n in n_grid]

    def row(n: int) -> Dict[str, Any]:
        summed = n_fold(base, n)
        law = thin(summed, 1.0 / n)
        d = kl(law, ref, with_error=True)
        t = tv(law, ref, with_error=True)
        return {
            "n": n,
            "tv": t.value,
            "kl": d.value,
            "entropy": entropy(law),
            "entropy_po": h_po,
            "bound_variance": _value(bound_variance(summed, 1.0 / n, lam)),
            "bound_tv": _value(bound_tv(base, n)) if n >= 2 else math.nan,
            "bound_pinsker": _value(bound_tv_pinsker(base, n)) if n >= 2 else math.nan,
            "bound_fisher": k_base / (n * n) if n >= 2 else math.nan,
            "tail_error": max(d.error, t.error),
        }

    with timed("ltn_iid", points=len(grid), lam=lam) as extra:
        rows = _sweep(row, grid, workers)
        extra["rows"] = len(rows)
    meta = {
        "lambda": lam,
        "tail_error_max": max(r["tail_error"] for r in rows),
        "fisher_bound": "on" if fisher_ok else "off: P is not ULC with contiguous support",
    }
    return _finish("ltn_iid", LTN_IID_COLUMNS, rows, meta)


def _pattern_counts(length: int, n: int) -> List[int]:
    # laws cycle: X_i ~ pattern[(i-1) mod length]
    return [(n - j + length - 1) // length for j in range(length)]


def ltn_niid(pattern: Sequence[Source], n_grid: Sequence[int], lam: Optional[float] = None,
             alpha_variant: bool = False, eps_tail: float = None,
             workers: Optional[int] = None) -> ExperimentReport:
    """
    Non-identical sums S_n = X_1 + ... + X_n with the X_i cycling through
    `pattern`, thinned by 1/n and compared with Po(lam) (lam defaults to the
    average pattern mean).
    """
    if not pattern:
        raise ParameterDomainError("ltn_niid needs at least one law in the pattern")
    bases = [_law(s, eps_tail) for s in pattern]
    stats = [summary_stats(b) for b in bases]
    means = [m for m, _ in stats]
    second = [v + m * m for m, v in stats]
    target = sum(means) / len(means) if lam is None else float(lam)
    require(target > 0, f"lambda must be > 0, got {target}")
    ref = Poisson(target)
    grid = [_check_n(n) for n in n_grid]
    length = len(bases)

    def row(n: int) -> Dict[str, Any]:
        counts = _pattern_counts(length, n)
        summed = delta(0)
        a_n = b_n = c_n = 0.0
        for base, count in zip(bases, counts):
            if count == 0:
                continue
            summed = convolve(summed, n_fold(base, count))
            one = thin(base, 1.0 / n)
            miss = 1.0 - one.at(0)
            a_n = max(a_n, miss)
            b_n += count * miss
            c_n += count * (miss - one.at(1))
        law = thin(summed, 1.0 / n)
        series = sum(second[(i - 1) % length] / (i * i) for i in range(1, n + 1))
        out = {
            "n": n, "a_n": a_n, "b_n": b_n, "c_n": c_n, "lambda_n": b_n - c_n,
            "tv": tv(law, ref), "kl": kl(law, ref),
            "tv_bound": bound_bernoulli_tv(a_n, b_n, c_n, target).value,
            "second_moment_series": series,
        }
        if alpha_variant:
            total = sum(c * m for c, m in zip(counts, means))
            alpha_n = target / total if total > 0 else math.nan
            if 0.0 < alpha_n < 1.0:
                out["alpha_n"] = alpha_n
                out["kl_alpha"] = kl(thin(summed, alpha_n), ref)
                out["bound_alpha"] = _value(bound_variance(summed, alpha_n, target))
            else:
                out.update(alpha_n=alpha_n, kl_alpha=math.nan, bound_alpha=math.nan)
        return out

    columns = LTN_NIID_COLUMNS + (LTN_NIID_ALPHA_COLUMNS if alpha_variant else [])
    with timed("ltn_niid", points=len(grid), pattern=length, lam=target):
        rows = _sweep(row, grid, workers)
    return _finish("ltn_niid", columns, rows, {"lambda": target, "pattern_means": means})


def rate_experiment(source: Source, n_grid: Sequence[int], eps_tail: float = None,
                    workers: Optional[int] = None) -> ExperimentReport:
    """n^kappa D(T_{1/n} P^{*n} || Po(lam)) and n^kappa K(T_{1/n} P) against kappa c^2 (UB inputs)."""
    base = _law(source, eps_tail)
    lam = _positive_mean(base)
    cert = is_ub(base, lam)
    if not cert.holds:
        raise HypothesisViolation(f"rate experiment needs an ultra bounded law at lambda={lam:g}", cert)
    coeffs = charlier_coeffs(base, lam)
    kappa = find_kappa(coeffs)
    power = 0 if kappa is None else kappa
    limit = 0.0 if kappa is None else kappa * coeffs.coeffs[kappa] ** 2
    ref = Poisson(lam)
    grid = [_check_n(n) for n in n_grid]

    def row(n: int) -> Dict[str, Any]:
        law = thin(n_fold(base, n), 1.0 / n)
        d = kl(law, ref)
        c2 = chi2(law, ref)
        k_thin = k_info(thin(base, 1.0 / n))
        scale = float(n) ** power
        return {
            "n": n, "kl": d, "kl_scaled": scale * d, "chi2": c2,
            "kl_over_chi2": _ratio(d, c2), "k_thin": k_thin,
            "k_thin_scaled": scale * k_thin, "limit": limit,
        }

    with timed("rate_experiment", points=len(grid), lam=lam, kappa=kappa):
        rows = _sweep(row, grid, workers)
    meta = {"lambda": lam, "kappa": kappa, "c_kappa": None if kappa is None else coeffs.coeffs[kappa]}
    return _finish("rate", RATE_COLUMNS, rows, meta)


def chain_experiment(source: Source, lam: Optional[float], t_grid: Sequence[float], eps_tail: float = None,
                     workers: Optional[int] = None) -> ExperimentReport:
    """chi^2, D and TV of U_{e^-t} P against Po(lam) along the chain, next to the Charlier series."""
    base = _law(source, eps_tail)
    lam = _positive_mean(base) if lam is None else lam
    require(lam > 0, f"lambda must be > 0, got {lam}")
    cert = is_pb(base, lam)
    if not cert.holds:
        raise HypothesisViolation(f"chain experiment needs a Poisson-bounded law at lambda={lam:g}", cert)
    coeffs = charlier_coeffs(base, lam)
    kappa = find_kappa(coeffs)
    power = 0 if kappa is None else 2 * kappa
    points = chain_trajectory(base, lam, t_grid, eps_tail, workers)
    rows = []
    for pt in points:
        c2 = pt.functionals["chi2_to_po"]
        d = pt.functionals["kl_to_po"]
        rows.append({
            "t": pt.t, "alpha": pt.alpha, "chi2": c2,
            "chi2_scaled": c2 / pt.alpha ** power if pt.alpha > 0 else math.nan,
            "kl": d, "kl_over_chi2": _ratio(d, c2), "tv": pt.functionals["tv_to_po"],
            "chi2_series": chi2_series(coeffs, pt.alpha),
        })
    meta = {
        "lambda": lam, "kappa": kappa,
        "limit_chi2_scaled": 0.0 if kappa is None else coeffs.coeffs[kappa] ** 2,
        "series_trunc_bound": coeffs.trunc_bound,
    }
    return _finish("chain", CHAIN_COLUMNS, rows, meta)


def bounds_experiment(source: Source, alpha_grid: Sequence[float], eps_tail: float = None,
                      workers: Optional[int] = None) -> ExperimentReport:
    """D(T_alpha P || Po(alpha mean)) next to the l log l and variance bounds."""
    base = _law(source, eps_tail)
    m = _positive_mean(base)

    def row(alpha: float) -> Dict[str, Any]:
        alpha = float(alpha)
        lam = alpha * m
        return {
            "alpha": alpha, "lambda": lam,
            "kl": kl(thin(base, alpha), Poisson(lam)),
            "bound_llogl": _value(bound_llogl(base, alpha, lam)),
            "bound_variance": _value(bound_variance(base, alpha, lam)),
        }

    for a in alpha_grid:
        if not (0.0 < float(a) <= 1.0):
            raise ParameterDomainError(f"alpha grid values must lie in (0,1], got {a}")
    with timed("bounds_experiment", points=len(alpha_grid)):
        rows = _sweep(row, list(alpha_grid), workers)
    return _finish("bounds", BOUNDS_COLUMNS, rows, {"mean": m})


def compound_experiment(source: Source, compounder: Pmf, n_grid: Sequence[int],
                        eps_tail: float = None, workers: Optional[int] = None) -> ExperimentReport:
    """D(C_Q T_{1/n} P^{*n} || CPo(lam, Q)) against the compound variance bound."""
    check_compounder(compounder)
    base = _law(source, eps_tail)
    lam = _positive_mean(base)
    ref = CompoundPoisson(lam, compounder.probs.tolist())
    grid = [_check_n(n) for n in n_grid]

    def row(n: int) -> Dict[str, Any]:
        summed = n_fold(base, n)
        law = compound_thin(summed, 1.0 / n, compounder)
        return {
            "n": n,
            "kl_to_cpo": kl(law, ref),
            "compound_variance_bound": _value(bound_compound_variance(summed, 1.0 / n, lam)),
        }

    with timed("compound_experiment", points=len(grid), lam=lam):
        rows = _sweep(row, grid, workers)
    return _finish("compound", COMPOUND_COLUMNS, rows, {"lambda": lam})


def classes_report(source: Source, lam: Optional[float] = None, kmax: Optional[int] = None,
                   eps_tail: float = None) -> ExperimentReport:
    base = _law(source, eps_tail)
    certs = classify(base, lam, kmax)
    rows = [{
        "class": c.class_name, "holds": c.holds, "scope": c.scope,
        "kmax_checked": c.kmax_checked,
        "witness_index": c.witness.index if c.witness else None,
        "witness_lhs": c.witness.lhs if c.witness else None,
        "witness_rhs": c.witness.rhs if c.witness else None,
    } for c in certs]
    columns = ["class", "holds", "scope", "kmax_checked", "witness_index", "witness_lhs", "witness_rhs"]
    return _finish("classes", columns, rows, {"lambda": certs[1].ratio})


# ===== Dispatch ===============================================================
def run(cfg: ExperimentConfig, workers: Optional[int] = None) -> ExperimentReport:
    cfg.validate()
    eps = cfg.eps_tail
    src = cfg.source
    if cfg.experiment == "ltn_niid":
        pattern = src if isinstance(src, list) else [src]
        report = ltn_niid(pattern, cfg.n_grid, cfg.lam, cfg.alpha_variant, eps, workers)
    elif cfg.experiment == "ltn_iid":
        report = ltn_iid(src, cfg.n_grid, eps, workers)
    elif cfg.experiment == "rate":
        report = rate_experiment(src, cfg.n_grid, eps, workers)
    elif cfg.experiment == "chain":
        report = chain_experiment(src, cfg.lam, cfg.t_grid, eps, workers)
    elif cfg.experiment == "bounds":
        report = bounds_experiment(src, cfg.alpha_grid, eps, workers)
    else:
        report = compound_experiment(src, Pmf(cfg.compounder), cfg.n_grid, eps, workers)
    report.metadata["config"] = msgspec.to_builtins(cfg)
    return report

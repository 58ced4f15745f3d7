import math

import msgspec
import numpy as np
import pytest

import config
from charlier import charlier_coeffs, charlier_moment, chi2_series
from distcore import (
    Bernoulli, Binomial, CompoundPoisson, Geometric, Pmf, PointMass, Poisson,
    convolve, delta, entropy, materialize, mean, n_fold,
)
from divergences import (
    bound_compound_variance, bound_llogl, bound_tv, bound_tv_pinsker,
    bound_variance, chi2, kl, tv,
)
from errors import HypothesisViolation, ParameterDomainError, ResourceLimitError
from fisher import k_info
from harness import (
    BOUNDS_COLUMNS, CHAIN_COLUMNS, LTN_IID_COLUMNS, RATE_COLUMNS,
    ExperimentConfig, ExperimentReport, bounds_experiment, chain_experiment,
    classes_report, compound_experiment, ltn_iid, ltn_niid, rate_experiment, run,
)
from markov import alpha_of_t, u_operator
from reports import preview, render, report_frame, to_csv, to_json
from thinning import compound_thin, thin

UNIFORM_123 = Pmf([0.0, 1 / 3, 1 / 3, 1 / 3])


def _col(report: ExperimentReport, name: str):
    return [row[name] for row in report.rows]


# ===== i.i.d. laws of thin numbers =====
def test_geometric_decay_under_variance_bound():
    grid = list(range(2, 65))
    report = ltn_iid(Geometric(1.0), grid, workers=4)
    assert report.columns == LTN_IID_COLUMNS
    assert _col(report, "n") == grid
    for row in report.rows:
        n = row["n"]
        limit = 2 / n + 1 / (2 * n * n * (1 - 1 / n))
        assert row["kl"] <= limit
        assert row["bound_variance"] == pytest.approx(limit, rel=1e-9)
        assert math.isnan(row["bound_fisher"])
    kls = _col(report, "kl")
    assert kls[-1] < kls[0] / 10
    assert report.metadata["fisher_bound"].startswith("off")


def test_geometric_tv_bound_at_100():
    report = ltn_iid(Geometric(1.0), [100])
    (row,) = report.rows
    assert row["bound_tv"] == pytest.approx(0.07778, abs=1e-5)
    assert row["tv"] <= row["bound_tv"]


@pytest.mark.parametrize("spec", [Geometric(1.0), Bernoulli(0.3), Binomial(2, 0.5), Poisson(2.0), Geometric(0.5)])
def test_tv_bounds_hold_across_the_corpus(spec):
    report = ltn_iid(spec, [2, 10])
    for row in report.rows:
        assert row["tv"] <= row["bound_tv"]
        assert row["tv"] <= row["bound_pinsker"]


def test_fisher_bound_for_ulc_sources():
    report = ltn_iid(Binomial(2, 0.5), [2, 8, 16])
    assert report.metadata["fisher_bound"] == "on"
    for row in report.rows:
        assert row["kl"] <= row["bound_fisher"] + 1e-15
        assert row["bound_fisher"] == pytest.approx(0.5 / row["n"] ** 2)


def test_entropy_approaches_poisson():
    report = ltn_iid(Bernoulli(0.5), [4, 64])
    gaps = [abs(r["entropy"] - r["entropy_po"]) for r in report.rows]
    assert gaps[1] < gaps[0]


def test_n_one_has_no_tv_bound():
    (row,) = ltn_iid(Bernoulli(0.3), [1]).rows
    assert math.isnan(row["bound_tv"])
    assert row["kl"] > 0


def test_n_limits():
    with pytest.raises(ParameterDomainError):
        ltn_iid(Bernoulli(0.3), [0])
    with pytest.raises(ResourceLimitError):
        ltn_iid(Bernoulli(0.3), [config.MAX_N + 1])


def test_zero_mean_source_is_rejected():
    with pytest.raises(ParameterDomainError):
        ltn_iid(PointMass(0), [2])


def test_pmf_source_is_accepted(corpus):
    a = ltn_iid(corpus["bin_3_0.4"], [4])
    b = ltn_iid(Binomial(3, 0.4), [4])
    assert a.rows == b.rows


# ===== non-identical sums =====
def test_alternating_pattern():
    report = ltn_niid([Bernoulli(0.4), Binomial(2, 0.3)], [8, 16, 32, 64])
    assert report.metadata["lambda"] == pytest.approx(0.5)
    tvs = _col(report, "tv")
    assert all(b < a for a, b in zip(tvs, tvs[1:]))
    last = report.rows[-1]
    assert last["b_n"] == pytest.approx(0.5, abs=0.02)
    assert last["a_n"] < 0.01
    assert last["c_n"] < 1e-3
    assert last["tv"] <= last["tv_bound"]
    assert _col(report, "a_n") == sorted(_col(report, "a_n"), reverse=True)


def test_pattern_counts_cover_odd_n():
    report = ltn_niid([Bernoulli(0.4), Binomial(2, 0.3)], [3])
    # X_1, X_3 ~ Bern(0.4), X_2 ~ Bin(2, 0.3)
    assert report.rows[0]["b_n"] == pytest.approx(2 * 0.4 / 3 + (1 - (1 - 0.1) ** 2), rel=1e-12)


def test_alpha_variant_columns():
    report = ltn_niid([Bernoulli(0.4), Binomial(2, 0.3)], [16], alpha_variant=True)
    assert report.columns[-3:] == ["alpha_n", "kl_alpha", "bound_alpha"]
    row = report.rows[0]
    assert row["alpha_n"] == pytest.approx(0.5 / 8.0)
    assert row["kl_alpha"] <= row["bound_alpha"]


def test_empty_pattern():
    with pytest.raises(ParameterDomainError):
        ltn_niid([], [4])


# ===== rates =====
def test_binomial_rate_constant():
    report = rate_experiment(Binomial(2, 0.5), [32, 64])
    assert report.columns == RATE_COLUMNS
    assert report.metadata["kappa"] == 2
    for row in report.rows:
        assert row["kl_scaled"] <= 0.25 * 1.05
        assert row["limit"] == pytest.approx(0.25)
    assert 0.45 <= report.rows[-1]["kl_over_chi2"] <= 0.55


def test_rate_needs_ultra_bounded_law():
    with pytest.raises(HypothesisViolation):
        rate_experiment(Geometric(1.0), [4])


# ===== chain =====
def test_chain_on_point_mass():
    ts = [0.0, 1.0, -math.log(1e-3)]
    report = chain_experiment(delta(2), 2.0, ts)
    assert report.columns == CHAIN_COLUMNS
    assert report.metadata["kappa"] == 2
    assert report.metadata["limit_chi2_scaled"] == pytest.approx(0.5)
    first, _, last = report.rows
    assert first["chi2"] == pytest.approx(math.exp(2) / 2 - 1)
    assert first["chi2_series"] == pytest.approx(first["chi2"], abs=1e-8)
    assert 0.495 <= last["chi2_scaled"] <= 0.505


def test_chain_on_truncated_poisson_has_no_scaling():
    report = chain_experiment(Poisson(2.0), None, [0.0, 2.0, -math.log(1e-3)])
    assert report.metadata["kappa"] is None
    assert report.metadata["limit_chi2_scaled"] == 0.0
    for row in report.rows:
        assert abs(row["chi2"]) < 1e-10
        assert row["chi2_scaled"] == row["chi2"]
        assert row["chi2_series"] < 1e-10


def test_rate_on_truncated_poisson_has_no_scaling():
    report = rate_experiment(Poisson(1.0), [4, 16])
    assert report.metadata["kappa"] is None
    for row in report.rows:
        assert row["limit"] == 0.0
        assert row["kl_scaled"] == row["kl"]
        assert abs(row["kl"]) < 1e-10
        assert row["k_thin_scaled"] < 1e-10


def test_chain_lambda_defaults_to_mean():
    report = chain_experiment(Binomial(3, 0.4), None, [0.5])
    assert report.metadata["lambda"] == pytest.approx(1.2)


def test_chain_needs_poisson_bounded_law():
    with pytest.raises(HypothesisViolation):
        chain_experiment(Geometric(1.0), 1.0, [0.5])


# ===== bounds =====
def test_bounds_experiment():
    report = bounds_experiment(Geometric(2.0), [0.1, 0.5, 1.0])
    assert report.columns == BOUNDS_COLUMNS
    for row in report.rows:
        assert row["lambda"] == pytest.approx(2.0 * row["alpha"])
    for row in report.rows[:2]:
        assert row["kl"] <= row["bound_llogl"]
        assert row["kl"] <= row["bound_variance"]
    with pytest.raises(ParameterDomainError):
        bounds_experiment(Geometric(2.0), [0.0])


# ===== compound =====
def test_compound_ltn_decays_below_bound():
    report = compound_experiment(Bernoulli(0.5), UNIFORM_123, [4, 32])
    small, large = report.rows
    assert large["kl_to_cpo"] < small["kl_to_cpo"]
    assert large["kl_to_cpo"] <= large["compound_variance_bound"]


def test_compound_bound_uses_the_summed_law():
    (row,) = compound_experiment(Geometric(1.0), UNIFORM_123, [10]).rows
    assert row["compound_variance_bound"] == pytest.approx(0.01 / 1.8 + 0.2, rel=1e-6)
    assert row["compound_variance_bound"] == pytest.approx(0.2056, abs=1e-4)


def test_compound_rejects_mass_at_zero():
    with pytest.raises(ParameterDomainError):
        compound_experiment(Bernoulli(0.5), Pmf([0.5, 0.5]), [4])


# ===== classes =====
def test_classes_report():
    report = classes_report(Geometric(1.0), 1.0)
    assert _col(report, "class") == ["ULC", "PB", "UB"]
    assert _col(report, "holds") == [False, False, False]
    assert _col(report, "witness_index") == [1, 2, 1]


# ===== config dispatch =====
def test_config_round_trip_and_run():
    raw = {
        "experiment": "ltn_iid",
        "source": {"family": "binomial", "n": 2, "p": 0.5},
        "n_grid": [2, 4],
    }
    cfg = msgspec.convert(raw, ExperimentConfig)
    report = run(cfg, workers=2)
    assert _col(report, "n") == [2, 4]
    assert report.metadata["config"]["source"]["family"] == "binomial"


@pytest.mark.parametrize("raw", [
    {"experiment": "chain", "source": {"family": "point", "k": 2}, "n_grid": [2]},
    {"experiment": "bounds", "source": {"family": "point", "k": 2}},
    {"experiment": "compound", "source": {"family": "bernoulli", "p": 0.5}, "n_grid": [2]},
    {"experiment": "rate", "source": [{"family": "bernoulli", "p": 0.5}], "n_grid": [2]},
])
def test_config_validation(raw):
    cfg = msgspec.convert(raw, ExperimentConfig)
    with pytest.raises(ParameterDomainError):
        cfg.validate()


def test_config_rejects_unknown_fields():
    with pytest.raises(msgspec.ValidationError):
        msgspec.convert({"experiment": "rate", "source": {"family": "point", "k": 1}, "nn": [1]},
                        ExperimentConfig)


def test_run_dispatches_niid_and_compound():
    cfg = msgspec.convert({
        "experiment": "ltn_niid",
        "source": [{"family": "bernoulli", "p": 0.4}, {"family": "binomial", "n": 2, "p": 0.3}],
        "n_grid": [8],
        "lambda": 0.5,
    }, ExperimentConfig)
    assert run(cfg).rows[0]["n"] == 8
    cfg = msgspec.convert({
        "experiment": "compound",
        "source": {"family": "bernoulli", "p": 0.5},
        "n_grid": [4],
        "compounder": [0.0, 0.5, 0.5],
    }, ExperimentConfig)
    assert run(cfg).columns == ["n", "kl_to_cpo", "compound_variance_bound"]


# ===== reports =====
def test_csv_is_byte_stable_across_worker_counts():
    a = to_csv(ltn_iid(Geometric(1.0), [2, 3, 4, 5], workers=1))
    b = to_csv(ltn_iid(Geometric(1.0), [2, 3, 4, 5], workers=4))
    assert a == b
    assert a.splitlines()[0] == ",".join(LTN_IID_COLUMNS)


def test_nan_cells_are_empty_in_csv_and_null_in_json():
    report = ltn_iid(Bernoulli(0.3), [1])
    line = to_csv(report).splitlines()[1]
    assert ",," in line
    doc = msgspec.json.decode(to_json(report))
    assert doc["rows"][0]["bound_tv"] is None


def test_render_and_preview():
    report = rate_experiment(Binomial(2, 0.5), [2, 4])
    assert render(report, "json").startswith(b"{")
    with pytest.raises(ValueError):
        render(report, "xml")
    text = preview(report, max_rows=1)
    assert "kl_scaled" in text
    assert text.endswith("... 1 more rows")
    frame = report_frame(report)
    assert list(frame.columns) == RATE_COLUMNS
    np.testing.assert_array_equal(frame["n"].to_numpy(), [2, 4])


# ===== rows recomputed from library calls =====
def test_ltn_iid_row_from_library_calls():
    P = materialize(Binomial(2, 0.5))
    lam = mean(P)
    (row,) = ltn_iid(Binomial(2, 0.5), [4]).rows
    law = thin(n_fold(P, 4), 0.25)
    assert row["kl"] == pytest.approx(kl(law, Poisson(lam)), rel=1e-12)
    assert row["tv"] == pytest.approx(tv(law, Poisson(lam)), rel=1e-12)
    assert row["entropy"] == pytest.approx(entropy(law), rel=1e-12)
    assert row["bound_variance"] == pytest.approx(bound_variance(n_fold(P, 4), 0.25, lam).value, rel=1e-12)
    assert row["bound_tv"] == pytest.approx(bound_tv(P, 4).value, rel=1e-12)
    assert row["bound_pinsker"] == pytest.approx(bound_tv_pinsker(P, 4).value, rel=1e-12)
    assert row["bound_fisher"] == pytest.approx(k_info(P) / 16, rel=1e-12)


def test_ltn_niid_row_from_library_calls():
    bern, bino = materialize(Bernoulli(0.4)), materialize(Binomial(2, 0.3))
    (row,) = ltn_niid([Bernoulli(0.4), Binomial(2, 0.3)], [3]).rows
    law = thin(convolve(n_fold(bern, 2), bino), 1.0 / 3)
    assert row["tv"] == pytest.approx(tv(law, Poisson(0.5)), rel=1e-12)
    assert row["kl"] == pytest.approx(kl(law, Poisson(0.5)), rel=1e-12)
    misses = [1.0 - thin(bern, 1.0 / 3).at(0), 1.0 - thin(bino, 1.0 / 3).at(0)]
    assert row["a_n"] == pytest.approx(max(misses), rel=1e-12)


def test_rate_row_from_library_calls():
    P = materialize(Binomial(2, 0.5))
    lam = mean(P)
    (row,) = rate_experiment(Binomial(2, 0.5), [8]).rows
    d = kl(thin(n_fold(P, 8), 0.125), Poisson(lam))
    assert row["kl"] == pytest.approx(d, rel=1e-12)
    assert row["kl_scaled"] == pytest.approx(64 * d, rel=1e-12)
    assert row["k_thin"] == pytest.approx(k_info(thin(P, 0.125)), rel=1e-12)
    assert row["limit"] == pytest.approx(2 * charlier_moment(P, lam, 2) ** 2, rel=1e-12)


def test_chain_row_from_library_calls():
    P = delta(2)
    (row,) = chain_experiment(P, 2.0, [1.0]).rows
    alpha = alpha_of_t(1.0)
    c2 = chi2(u_operator(P, alpha, 2.0), Poisson(2.0))
    assert row["alpha"] == alpha
    assert row["chi2"] == pytest.approx(c2, rel=1e-12)
    assert row["chi2_scaled"] == pytest.approx(c2 / alpha ** 4, rel=1e-12)
    assert row["chi2_series"] == pytest.approx(chi2_series(charlier_coeffs(P, 2.0), alpha), rel=1e-12)


def test_bounds_row_from_library_calls():
    P = materialize(Geometric(2.0))
    lam = 0.5 * mean(P)
    (row,) = bounds_experiment(Geometric(2.0), [0.5]).rows
    assert row["kl"] == pytest.approx(kl(thin(P, 0.5), Poisson(lam)), rel=1e-12)
    assert row["bound_llogl"] == pytest.approx(bound_llogl(P, 0.5, lam).value, rel=1e-12)
    assert row["bound_variance"] == pytest.approx(bound_variance(P, 0.5, lam).value, rel=1e-12)


def test_compound_row_from_library_calls():
    P = materialize(Bernoulli(0.5))
    (row,) = compound_experiment(Bernoulli(0.5), UNIFORM_123, [4]).rows
    law = compound_thin(n_fold(P, 4), 0.25, UNIFORM_123)
    ref = CompoundPoisson(mean(P), UNIFORM_123.probs.tolist())
    assert row["kl_to_cpo"] == pytest.approx(kl(law, ref), rel=1e-12)
    assert row["compound_variance_bound"] == pytest.approx(
        bound_compound_variance(n_fold(P, 4), 0.25, mean(P)).value, rel=1e-12)

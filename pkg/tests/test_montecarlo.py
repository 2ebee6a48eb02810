import json
import math

import numpy as np
import pytest

import condint.montecarlo as mc
from condint.errors import ConfigurationError, EstimationFailedError, FailureCapExceededError, PreconditionError
from condint.intervals import default_split_plan
from condint.montecarlo import (
    CoverageReport,
    EquivalenceReport,
    ExperimentConfig,
    MergingReport,
    NegligibilityReport,
    default_workers,
    run_coverage_2ip,
    run_coverage_spl,
    run_equivalence,
    run_experiment,
    run_merging,
    run_negligibility,
)

AR1 = {"beta": 0.5}
GARCH = {"omega": 0.1, "alpha": 0.1, "beta": 0.8}


def ar1_config(**kw):
    base = dict(kind="coverage", model="ar1", params=AR1, T=(500,), reps=200, gamma=0.1, seed=42)
    base.update(kw)
    return ExperimentConfig(**base)


# --------------------------------------------------------------------------
# configuration


def test_config_rejects_too_few_reps():
    with pytest.raises(PreconditionError):
        ar1_config(reps=99)


@pytest.mark.parametrize(
    "kw",
    [
        {"kind": "bogus"},
        {"T": (500, 400)},
        {"gamma": 1.5},
        {"gamma1": 0.6, "gamma2": 0.5},
        {"variants": ("XYZ",)},
        {"params": {}},
    ],
)
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        ar1_config(**kw)


def test_config_round_trip():
    cfg = ar1_config(gamma1=0.02, gamma2=0.08, T=(200, 400, 800), dump_samples=True)
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    assert cfg.gammas == (0.02, 0.08)


def test_custom_split_plan():
    cfg = ar1_config(split_gap=10, split_horizon=10)
    plan = cfg.split_plan(500)
    assert (plan.t_e, plan.t_p) == (480, 490)
    assert ar1_config().split_plan(1000) == default_split_plan(1000)


def test_default_workers_env(monkeypatch):
    monkeypatch.setenv("CONDINT_THREADS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("CONDINT_THREADS", "zero")
    with pytest.raises(ConfigurationError):
        default_workers()
    monkeypatch.delenv("CONDINT_THREADS")
    assert default_workers() >= 1


# --------------------------------------------------------------------------
# coverage


def test_coverage_accounting():
    rep = run_coverage_2ip(ar1_config(), workers=1)
    assert rep.hit_count + rep.miss_count + rep.failure_count == rep.R == 200
    assert rep.coverage == rep.hit_count / (rep.hit_count + rep.miss_count)
    assert rep.binomial_se == pytest.approx(math.sqrt(rep.coverage * (1 - rep.coverage) / 200))
    assert rep.target == pytest.approx(0.9)


def test_coverage_at_half_level():
    rep = run_coverage_2ip(ar1_config(gamma=0.5, reps=2000), workers=1)
    assert 0.46 <= rep.coverage <= 0.54


def test_coverage_seeds_agree():
    a = run_coverage_2ip(ar1_config(reps=2000, seed=1), workers=1)
    b = run_coverage_2ip(ar1_config(reps=2000, seed=2), workers=1)
    se = math.hypot(a.binomial_se, b.binomial_se)
    assert abs(a.coverage - b.coverage) < 4 * se


def test_spl_coverage_records_split():
    rep = run_coverage_spl(ar1_config(T=(1000,)), workers=1)
    assert rep.split["t_e"] == 906 and rep.split["t_p"] == 953
    assert rep.variant == "SPL"


def test_coverage_deterministic_across_workers():
    cfg = ar1_config(dump_samples=True)
    a = run_coverage_2ip(cfg, workers=1)
    b = run_coverage_2ip(cfg, workers=2)
    assert a.to_dict() == b.to_dict()
    assert len(a.samples) == 200


def test_coverage_report_round_trip():
    rep = run_coverage_spl(ar1_config(dump_samples=True), workers=1)
    assert CoverageReport.from_dict(json.loads(json.dumps(rep.to_dict()))) == rep


def test_run_experiment_coverage_variants():
    reports = run_experiment(ar1_config(T=(300, 500)), workers=1)
    assert [(r.variant, r.T) for r in reports] == [("TwoIP", 300), ("SPL", 300), ("TwoIP", 500), ("SPL", 500)]
    with pytest.raises(ConfigurationError):
        run_experiment(ar1_config(variants=("STA",)), workers=1)


# --------------------------------------------------------------------------
# failure accounting


def _flaky(fail_when):
    original = mc._coverage_2ip_rep

    def rep(cfg, shared, b):
        if fail_when(b):
            raise EstimationFailedError("forced")
        return original(cfg, shared, b)

    return rep


def test_failures_are_excluded_from_denominator(monkeypatch):
    monkeypatch.setattr(mc, "_coverage_2ip_rep", _flaky(lambda b: b == 7))
    rep = run_coverage_2ip(ar1_config(), workers=1)
    assert rep.failure_count == 1
    assert rep.hit_count + rep.miss_count == 199
    assert rep.coverage == rep.hit_count / 199


def test_failure_cap_aborts(monkeypatch):
    monkeypatch.setattr(mc, "_coverage_2ip_rep", _flaky(lambda b: b % 100 == 0))
    with pytest.raises(FailureCapExceededError) as info:
        run_coverage_2ip(ar1_config(), workers=1)
    assert (info.value.failures, info.value.reps) == (2, 200)


# --------------------------------------------------------------------------
# merging, equivalence, negligibility


@pytest.fixture(scope="module")
def ar1_merging():
    cfg = ar1_config(kind="merging", T=(200, 400, 800), dump_samples=True)
    return run_merging(cfg, workers=1)


def test_merging_report_shape(ar1_merging):
    rep = ar1_merging
    assert rep.T_grid == (200, 400, 800)
    for row, T in zip(rep.rows, rep.T_grid):
        plan = default_split_plan(T)
        assert (row["t_e"], row["t_p"]) == (plan.t_e, plan.t_p)
        assert row["n_2ip"] + row["failures"] == 200
        assert 0 <= row["d_bl"] <= 2
        assert 0 <= row["d_k_2ip"] <= row["d_k_2ip_p90"] <= 1
        assert len(rep.samples[T]["TwoIP"]) == row["n_2ip"]


def test_merging_conditions_on_shared_terminal_segment(ar1_merging):
    assert len({row["x_T"] for row in ar1_merging.rows}) == 1


def test_merging_report_round_trip(ar1_merging):
    back = MergingReport.from_dict(json.loads(json.dumps(ar1_merging.to_dict())))
    assert back.to_dict() == ar1_merging.to_dict()


def test_merging_needs_grid():
    with pytest.raises(PreconditionError):
        run_merging(ar1_config(kind="merging", T=(200, 400)), workers=1)


def test_equivalence_white_noise_envelope():
    # with beta = 0 the center gap is |b_full - b_block| |x_T| and both
    # estimates are within O(1/sqrt(T_E)) of zero
    cfg = ar1_config(kind="equivalence", params={"beta": 0.0}, T=(200, 400, 800))
    rep = run_equivalence(cfg, workers=1)
    for row in rep.rows:
        assert row["median_scaled_center_gap"] < 2 / math.sqrt(row["t_e"])
        assert row["n"] + row["failures"] == 200
    assert EquivalenceReport.from_dict(json.loads(json.dumps(rep.to_dict()))) == rep


def test_negligibility_report():
    cfg = ExperimentConfig(
        kind="negligibility", model="garch11", params=GARCH, T=(600,), reps=100, gamma=0.1, seed=3
    )
    rep = run_negligibility(cfg, workers=1)
    full = rep.rows[-1]
    assert full["t1"] == 1 and full["max"] == 0.0
    med = [r["median"] for r in rep.rows[:-1]]
    assert all(b < a for a, b in zip(med, med[1:]))
    assert rep.slope == pytest.approx(math.log(0.8), abs=0.05)
    assert NegligibilityReport.from_dict(json.loads(json.dumps(rep.to_dict()))) == rep


def test_negligibility_needs_garch():
    with pytest.raises(ConfigurationError):
        run_negligibility(ar1_config(kind="negligibility"), workers=1)

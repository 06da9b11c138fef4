import math

import numpy as np
import pytest

import prodnorm as pn
from prodnorm.harness import (
    AssertionSpec,
    ConfigError,
    ExperimentConfig,
    clt_core,
    config_from_mapping,
    evaluate_assertions,
    instantiate_factors,
    normalized_statistic,
    report_csv,
    resolve_dims,
    run_clt,
    run_convergence,
    run_counterexample,
    run_max_row_stat,
    sample_norm,
)
from prodnorm.laws import rademacher, standard_gaussian
from prodnorm.rng import stream

G = "gaussian(0,1)"
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


# -- config validation ---------------------------------------------------------


def test_config_requires_increasing_sizes():
    with pytest.raises(ConfigError):
        ExperimentConfig(expr="one(2,3)", sizes=(10, 10), replicates=4, seed=1)


def test_config_requires_replicates():
    with pytest.raises(ConfigError):
        ExperimentConfig(expr="one(2,3)", sizes=(10,), replicates=1, seed=1)


def test_config_ratio_bound_enforced():
    with pytest.raises(ConfigError, match="spread"):
        config_from_mapping(
            {
                "expr": f"randc({G},n0,n1)",
                "sizes": [10],
                "replicates": 4,
                "seed": 1,
                "dim_ratios": {"n0": 8},
            }
        )


def test_config_ratio_within_bound_ok():
    cfg = config_from_mapping(
        {
            "expr": f"randc({G},n0,n1)",
            "sizes": [10],
            "replicates": 4,
            "seed": 1,
            "dim_ratios": {"n0": "3/2", "n1": 2},
        }
    )
    dims = resolve_dims(pn.parse_expression(cfg.expr), 10, cfg.ratio_map())
    assert dims == {"n0": 15, "n1": 20}


def test_config_round_trips_through_json_mapping():
    cfg = config_from_mapping(
        {
            "expr": "one(3,4)",
            "sizes": [5, 10],
            "replicates": 3,
            "seed": 7,
            "assertions": [{"kind": "mean_within", "lo": 0.9, "hi": 1.1, "scope": "all"}],
        }
    )
    again = config_from_mapping(cfg.to_jsonable())
    assert again == cfg


def test_config_unknown_field_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        config_from_mapping({"expr": "one(2,3)", "sizes": [4], "replicates": 2, "seed": 0, "frobnicate": 1})


# -- sampling ---------------------------------------------------------------------


def test_sample_norm_deterministic_ones():
    e = pn.parse_expression("one(3,4)")
    assert sample_norm(e, {}, stream(0, 0)) == 4.0


def test_sample_norm_single_sign_entry():
    e = pn.parse_expression("randc(rademacher,1,1)")
    for sid in range(5):
        assert sample_norm(e, {}, stream(1, sid)) == 1.0


def test_sample_norm_product_of_sign_entries():
    e = pn.parse_expression("randc(rademacher,1,1) * randc(rademacher,1,1)")
    for sid in range(5):
        assert sample_norm(e, {}, stream(2, sid)) == 1.0


def test_sample_norm_repeatable():
    e = pn.parse_expression(f"randc({G},a,b) * randc({G},b,c)")
    dims = {"a": 8, "b": 9, "c": 10}
    assert sample_norm(e, dims, stream(5, 3)) == sample_norm(e, dims, stream(5, 3))


def test_normalized_statistic_examples():
    e = pn.parse_expression(f"randc({G},n,n) * randc({G},n,n)")
    dims = {"n": 100}
    raw = 12345.0
    assert normalized_statistic(e, dims, raw) == pytest.approx(raw / 100**1.5, rel=1e-12)

    ones = pn.parse_expression("one(m,n)")
    assert normalized_statistic(ones, {"m": 3, "n": 7}, 7.0) == pytest.approx(1.0)

    ends = pn.parse_expression(f"randc({G},n,n) * one(n,m)")
    dims = {"n": 50, "m": 50}
    raw = 777.0
    expected = raw / (50 * math.sqrt(50) * math.sqrt(2 * math.log(50)))
    assert normalized_statistic(ends, dims, raw) == pytest.approx(expected, rel=1e-12)


# -- convergence runs ----------------------------------------------------------------


def test_run_convergence_deterministic_expression():
    cfg = ExperimentConfig(expr="one(3,4)", sizes=(5, 9), replicates=4, seed=7)
    report = run_convergence(cfg)
    for row in report.rows:
        assert row.mean == 1.0
        assert row.std == 0.0
        assert row.predicted == 1.0


def test_run_convergence_thread_count_invariance():
    cfg = ExperimentConfig(
        expr=f"randc({G},n0,n1) * randc({G},n1,n2)", sizes=(20, 40), replicates=8, seed=99
    )
    texts = {report_csv(run_convergence(cfg, threads=k)) for k in (1, 2, 5)}
    assert len(texts) == 1


def test_run_convergence_statistic_values_regenerable():
    cfg = ExperimentConfig(expr=f"randc({G},n,n)", sizes=(30,), replicates=6, seed=4)
    report = run_convergence(cfg)
    e = pn.parse_expression(cfg.expr)
    pred = pn.predict(e).prediction
    dims = resolve_dims(e, 30)
    values = [
        sample_norm(e, dims, stream(4, sid)) / pred.normalization(dims) for sid in range(6)
    ]
    assert report.rows[0].mean == np.asarray(values).mean()


def test_leading_ones_rows_do_not_change_statistic():
    # the statistic of a ones-led chain is the same matrix row repeated:
    # identical values bit for bit whatever the row count
    values = {}
    for m in (1, 17):
        e = pn.parse_expression(f"one({m},n0) * randc({G},n0,n1)")
        dims = resolve_dims(e, 50)
        pred = pn.predict(e).prediction
        values[m] = [
            sample_norm(e, dims, stream(3, sid)) / pred.normalization(dims) for sid in range(8)
        ]
    assert values[1] == values[17]


def test_variance_identity_small():
    # mean of P[0,0]^2 over replicates matches the product of inner dimensions
    e = pn.parse_expression(
        "randc(rademacher,a,b) * randc(rademacher,b,c) * randc(rademacher,c,d)"
    )
    dims = {"a": 20, "b": 20, "c": 20, "d": 20}
    reps = 3000
    vals = np.empty(reps)
    for r in range(reps):
        mats = instantiate_factors(e, dims, stream(17, r))
        vals[r] = pn.matmul_chain(mats).a[0, 0] ** 2
    target = 20 * 20
    se = vals.std(ddof=1) / math.sqrt(reps)
    assert abs(vals.mean() - target) <= 5 * se


def test_std_shrinks_with_size():
    cfg = ExperimentConfig(
        expr=f"randc({G},n0,n1) * randc({G},n1,n2)", sizes=(50, 200), replicates=40, seed=31
    )
    report = run_convergence(cfg, threads=2)
    assert report.rows[-1].std < report.rows[0].std


# -- the sum statistic ---------------------------------------------------------------


def test_clt_core_accepts_flanked_and_bare_chains():
    flanked = pn.parse_expression(f"one(1,n0) * randc({G},n0,n1) * one(n1,1)")
    bare = pn.parse_expression(f"randc({G},n0,n1)")
    assert clt_core(flanked) == clt_core(bare)


def test_clt_core_rejects_other_shapes():
    with pytest.raises(ConfigError):
        clt_core(pn.parse_expression(f"randc({G},n0,n1) * one(n1,m)"))
    with pytest.raises(ConfigError):
        clt_core(pn.parse_expression(f"randc({G},a,b) * one(b,c) * randc({G},c,d)"))


def test_run_clt_scalar_case_exactly_normal():
    # 1x1 chain: the statistic is a single standard normal entry
    cfg = ExperimentConfig(
        expr=f"one(1,n0) * randc({G},n0,n1) * one(n1,1)",
        sizes=(1,),
        replicates=4000,
        seed=13,
    )
    res = run_clt(cfg, threads=2)[0]
    assert res.w1 <= 0.03
    assert res.ks <= 0.03
    # the samples really are the raw entries
    e = pn.parse_expression(f"randc({G},a,b)")
    direct = [
        float(instantiate_factors(e, {"a": 1, "b": 1}, stream(13, sid))[0].a[0, 0])
        for sid in range(5)
    ]
    assert list(res.samples[:5]) == direct


def test_run_clt_statistic_matches_norm_identity():
    # ones-flanked norm equals trailing column count times |entry sum|
    e_norm = pn.parse_expression(f"one(2,n0) * randc({G},n0,n1) * one(n1,3)")
    dims = resolve_dims(e_norm, 25)
    raw = sample_norm(e_norm, dims, stream(21, 5))
    core = clt_core(e_norm)
    mats = instantiate_factors(core, dims, stream(21, 5))
    total = pn.matmul_chain(mats).a.sum()
    assert raw == pytest.approx(3 * abs(total), rel=1e-12)


# -- counterexample and max-row statistics --------------------------------------------


def test_counterexample_rejects_bad_args():
    with pytest.raises(ConfigError):
        run_counterexample(0.05, (100, 200), 0, 1)
    with pytest.raises(ConfigError):
        run_counterexample(0.5, (100, 200), 10, 1)
    with pytest.raises(ConfigError):
        run_counterexample(0.05, (200, 100), 10, 1)


def test_counterexample_control_near_one_small():
    estimates = run_counterexample(0.1, (40, 80), 20, 3, heavy=False, threads=2)
    assert [n for n, _ in estimates] == [40, 80]
    assert all(est >= 0.9 for _, est in estimates)


def test_max_row_stat_rejects_single_row():
    with pytest.raises(ValueError, match="log"):
        run_max_row_stat(standard_gaussian(), 1, 10, np.ones(10), 5, 0)


def test_max_row_stat_weight_warning():
    weights = np.ones(16)
    weights[0] = 10.0  # far above 16^(1/20)
    with pytest.warns(pn.harness.WeightAssumptionWarning):
        run_max_row_stat(standard_gaussian(), 8, 16, weights, 2, 0)


def test_max_row_stat_rescales_weights():
    # scaling all weights by a constant leaves the statistic unchanged
    a = 1.0 + 0.1 * np.arange(32.0) / 32.0
    s1 = run_max_row_stat(rademacher(), 16, 32, a, 4, 9)
    s2 = run_max_row_stat(rademacher(), 16, 32, 7.5 * a, 4, 9)
    assert np.allclose(s1, s2, rtol=1e-12)


def test_max_row_stat_values():
    samples = run_max_row_stat(standard_gaussian(), 64, 64, np.ones(64), 10, 2)
    assert samples.shape == (10,)
    assert (samples > 0).all()


def test_convergence_with_max_row_statistic():
    cfg = ExperimentConfig(
        expr=f"randc({G},m,n)", sizes=(64,), replicates=6, seed=2, statistic="max_row_stat"
    )
    report = run_convergence(cfg)
    row = report.rows[0]
    assert row.predicted == 1.0
    # same statistic as the dedicated runner at matching streams
    direct = run_max_row_stat(standard_gaussian(), 64, 64, np.ones(64), 6, 2)
    assert row.mean == pytest.approx(direct.mean(), rel=1e-12)


def test_convergence_with_counterexample_statistic():
    cfg = ExperimentConfig(
        expr=f"randc({G},n,n) * randc({G},n,n)",
        sizes=(30,),
        replicates=5,
        seed=2,
        statistic="counterexample_indicator",
        epsilon=0.1,
    )
    report = run_convergence(cfg)
    row = report.rows[0]
    assert row.predicted is None
    assert row.mean == 1.0  # gaussian product stays under n^(3/2+eps) at n=30


def test_counterexample_statistic_requires_epsilon():
    with pytest.raises(ConfigError, match="epsilon"):
        ExperimentConfig(
            expr=f"randc({G},n,n) * randc({G},n,n)",
            sizes=(30,),
            replicates=5,
            seed=2,
            statistic="counterexample_indicator",
        )


# -- assertions and CSV ----------------------------------------------------------------


def _report_for_assertions():
    cfg = ExperimentConfig(expr="one(3,4)", sizes=(5, 9), replicates=4, seed=7)
    return run_convergence(cfg)


def test_assertions_pass_and_fail():
    report = _report_for_assertions()
    ok = evaluate_assertions(
        (AssertionSpec("mean_within", lo=0.9, hi=1.1, scope="all"),), report.rows
    )
    assert ok == []
    bad = evaluate_assertions(
        (AssertionSpec("mean_within", lo=1.5, hi=2.0),), report.rows
    )
    assert len(bad) == 1 and "mean_within" in bad[0]


def test_assertion_near_predicted():
    report = _report_for_assertions()
    assert evaluate_assertions(
        (AssertionSpec("mean_near_predicted", tol=0.01),), report.rows
    ) == []


def test_csv_golden_layout():
    cfg = ExperimentConfig(expr="one(3,4)", sizes=(5,), replicates=3, seed=7)
    text = report_csv(run_convergence(cfg))
    expected = (
        "# artifact=prodnorm 0.1.0\n"
        "# command=simulate\n"
        '# config={"expr":"one(3,4)","replicates":3,"seed":7,"sizes":[5],'
        '"statistic":"normalized_norm"}\n'
        "# seed=7\n"
        "# prediction=4 -> constant 1\n"
        "n,dims,R,mean,std,ci95,predicted,seed\n"
        "5,,3,1.0,0.0,0.0,1.0,7\n"
    )
    assert text == expected


def test_csv_dims_column_sorted():
    cfg = ExperimentConfig(
        expr=f"randc({G},n1,n0)", sizes=(4,), replicates=2, seed=0
    )
    text = report_csv(run_convergence(cfg))
    assert "4,n0=4;n1=4,2," in text

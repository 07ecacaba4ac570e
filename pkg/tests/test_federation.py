import math

import numpy as np
import pytest
from pydantic import ValidationError

from conftest import make_silo
from fatsim.errors import ConfigurationError, DescriptorMismatchError
from fatsim.federation import (
    AggregationMode,
    FederationConfig,
    MetricsRecord,
    Phase,
    RoundPlan,
    RunHistory,
    aggregate,
    csv_header,
    gaussian_rampup,
    phase_of,
    ramp_weights,
    run_baseline,
    run_fat,
    run_federation,
    run_weighted_ramp,
    weighted_average,
)
from fatsim.model import ArchDescriptor, ModelParams, init_model
from fatsim.silo import fit_supervised, fit_unsupervised, pool_silos, supervised_training


def constant_params(desc, value: float) -> ModelParams:
    return ModelParams.from_arrays(desc, {k: np.full(a.shape, value) for k, a in ModelParams.zeros(desc).arrays().items()})


def fed_cfg(tiny_cfg, mode=AggregationMode.FAT, **kw) -> FederationConfig:
    base = dict(total_rounds=2, alternation_period=1, eval_every=1, n_silos=3, supervised_ids=[0], local=tiny_cfg)
    base.update(kw)
    return FederationConfig(aggregation_mode=mode, **base)


@pytest.fixture
def silos():
    return [make_silo(0, 6, True), make_silo(1, 4, False), make_silo(2, 4, False)]


@pytest.fixture
def holdout():
    return make_silo(9, 4, True)


# -------------------------
# Schedule
# -------------------------
@pytest.mark.parametrize("A", [1, 2, 5])
def test_phase_law(A):
    for t in range(40):
        expected = Phase.SUPERVISED if (t // A) % 2 == 0 else Phase.UNSUPERVISED
        assert phase_of(t, A) is expected
    for start in range(0, 40, 2 * A):
        window = [phase_of(t, A) for t in range(start, start + 2 * A)]
        assert window.count(Phase.SUPERVISED) == A


def test_phase_rejects_bad_arguments():
    with pytest.raises(ValueError):
        phase_of(-1, 2)
    with pytest.raises(ValueError):
        phase_of(0, 0)


def test_rampup_endpoints_and_monotone():
    T = 20
    values = [gaussian_rampup(t, T) for t in range(T)]
    assert values[0] == pytest.approx(math.exp(-5))
    assert values[-1] == 1.0
    assert all(b > a for a, b in zip(values, values[1:]))
    with pytest.raises(ValueError):
        gaussian_rampup(0, 1)


def test_ramp_weights():
    full = ramp_weights([6, 4, 2], [True, False, False], 1.0)
    assert full == pytest.approx((0.5, 1 / 3, 1 / 6))
    tiny = ramp_weights([6, 4, 2], [True, False, False], 1e-12)
    assert tiny[0] == pytest.approx(1.0)
    assert math.fsum(tiny) == pytest.approx(1.0, abs=1e-12)


def test_round_plan_validation():
    RoundPlan(0, Phase.SUPERVISED, (0, 1), (0.25, 0.75))
    with pytest.raises(ConfigurationError):
        RoundPlan(0, Phase.SUPERVISED, (0, 1), (0.5, 0.4))
    with pytest.raises(ConfigurationError):
        RoundPlan(0, Phase.SUPERVISED, (0,), (0.5, 0.5))
    with pytest.raises(ConfigurationError):
        RoundPlan(0, Phase.SUPERVISED, (), ())


def test_federation_config_validation(tiny_cfg):
    with pytest.raises(ValidationError):
        FederationConfig(n_silos=2, supervised_ids=[2])
    with pytest.raises(ValidationError):
        FederationConfig(supervised_ids=[])
    cfg = FederationConfig(total_rounds=12, eval_every=5)
    assert [t for t in range(12) if cfg.is_eval_round(t)] == [4, 9, 11]
    assert cfg.effective_warmup == 2


# -------------------------
# Aggregation
# -------------------------
def test_aggregate_single_model_is_identity(params):
    assert aggregate([params], [5]).equal(params)


def test_aggregate_example(desc):
    out = aggregate([constant_params(desc, 0.0), constant_params(desc, 4.0)], [3, 1])
    np.testing.assert_array_equal(out.flat(), 1.0)


@pytest.mark.parametrize("seed", range(5))
def test_aggregate_matches_weighted_sum(desc, seed):
    gen = np.random.default_rng(seed)
    models = [init_model(desc, seed * 10 + k) for k in range(4)]
    counts = [int(n) for n in gen.integers(1, 50, size=4)]
    expected = sum(n * m.flat() for n, m in zip(counts, models)) / sum(counts)
    np.testing.assert_allclose(aggregate(models, counts).flat(), expected, atol=1e-6)

    order = gen.permutation(4)
    shuffled = aggregate([models[i] for i in order], [counts[i] for i in order])
    np.testing.assert_allclose(shuffled.flat(), aggregate(models, counts).flat(), atol=1e-6)


def test_aggregate_equal_counts_is_mean(desc):
    models = [init_model(desc, k) for k in range(3)]
    expected = np.mean([m.flat() for m in models], axis=0)
    np.testing.assert_allclose(aggregate(models, [7, 7, 7]).flat(), expected, atol=1e-6)


def test_aggregate_errors(params, desc):
    with pytest.raises(ConfigurationError):
        aggregate([], [])
    with pytest.raises(ConfigurationError):
        aggregate([params, params], [1])
    with pytest.raises(ConfigurationError):
        aggregate([params, params], [1, 0])
    other = init_model(ArchDescriptor(in_channels=1, base_width=2, n_classes=3), 0)
    with pytest.raises(DescriptorMismatchError):
        weighted_average([params, other], [0.5, 0.5])


# -------------------------
# FAT
# -------------------------
def test_fat_trace_replay(params, tiny_cfg, holdout):
    silos = [make_silo(0, 4, True), make_silo(1, 4, False)]
    cfg = fed_cfg(tiny_cfg, n_silos=2)
    history = run_fat(cfg, silos, params, holdout)

    theta1 = fit_supervised(silos[0], params, tiny_cfg, 0).params
    theta2 = fit_unsupervised(silos[1], theta1, tiny_cfg, 1).params
    assert history.final_params.equal(theta2)
    assert [r.phase for r in history.records] == ["Supervised", "Unsupervised"]
    assert [p.participants for p in history.plans] == [(0,), (1,)]
    assert history.aggregated == [1, 1]


def test_fat_group_weights(params, tiny_cfg, holdout):
    silos = [make_silo(0, 6, True), make_silo(1, 4, True), make_silo(2, 4, False)]
    cfg = fed_cfg(tiny_cfg, supervised_ids=[0, 1], total_rounds=1)
    plan = run_fat(cfg, silos, params, holdout).plans[0]
    assert plan.participants == (0, 1)
    assert plan.weights == pytest.approx((0.6, 0.4))


def test_fat_phases_follow_schedule(params, tiny_cfg, silos, holdout):
    cfg = fed_cfg(tiny_cfg, total_rounds=6, alternation_period=2)
    history = run_fat(cfg, silos, params, holdout)
    assert [p.phase for p in history.plans] == [phase_of(t, 2) for t in range(6)]
    assert [r.round for r in history.records] == list(range(6))


def test_fat_is_deterministic_across_worker_counts(params, tiny_cfg, silos, holdout, tmp_path):
    a = run_fat(fed_cfg(tiny_cfg, jobs=1), silos, params, holdout)
    b = run_fat(fed_cfg(tiny_cfg, jobs=4), silos, params, holdout)
    assert a.final_params.equal(b.final_params)
    a.write_csv(tmp_path / "a.csv")
    b.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_fat_needs_unsupervised_silos(params, tiny_cfg, holdout):
    silos = [make_silo(0, 4, True), make_silo(1, 4, True)]
    with pytest.raises(ConfigurationError):
        run_fat(fed_cfg(tiny_cfg, n_silos=2, supervised_ids=[0, 1]), silos, params, holdout)


def test_silo_layout_must_match_config(params, tiny_cfg, silos, holdout):
    with pytest.raises(ConfigurationError):
        run_fat(fed_cfg(tiny_cfg, supervised_ids=[1]), silos, params, holdout)
    with pytest.raises(ConfigurationError):
        run_fat(fed_cfg(tiny_cfg, n_silos=4), silos, params, holdout)


def test_mode_mismatch_is_rejected(params, tiny_cfg, silos, holdout):
    with pytest.raises(ConfigurationError):
        run_fat(fed_cfg(tiny_cfg, AggregationMode.SUPERVISED_ONLY), silos, params, holdout)
    with pytest.raises(ConfigurationError):
        run_baseline(fed_cfg(tiny_cfg, AggregationMode.FAT), silos, params, holdout)
    with pytest.raises(ConfigurationError):
        run_weighted_ramp(fed_cfg(tiny_cfg, AggregationMode.FAT), silos, params, holdout)


def test_fat_aggregates_fewer_models_than_fedavg_all(params, tiny_cfg, silos, holdout):
    fat = run_federation(fed_cfg(tiny_cfg), silos, params, holdout)
    everyone = run_federation(fed_cfg(tiny_cfg, AggregationMode.FEDAVG_ALL), silos, params, holdout)
    assert fat.aggregation_cost == 3
    assert everyone.aggregation_cost == 6


# -------------------------
# Baselines
# -------------------------
def test_supervised_only_equals_fedavg_all_when_everyone_is_labelled(params, tiny_cfg, holdout):
    silos = [make_silo(0, 4, True), make_silo(1, 6, True)]
    kw = dict(n_silos=2, supervised_ids=[0, 1])
    a = run_baseline(fed_cfg(tiny_cfg, AggregationMode.SUPERVISED_ONLY, **kw), silos, params, holdout)
    b = run_baseline(fed_cfg(tiny_cfg, AggregationMode.FEDAVG_ALL, **kw), silos, params, holdout)
    assert a.final_params.equal(b.final_params)
    assert [r.dice for r in a.records] == [r.dice for r in b.records]


def test_threshold_with_full_warmup_equals_supervised_only(params, tiny_cfg, silos, holdout):
    a = run_baseline(fed_cfg(tiny_cfg, AggregationMode.THRESHOLD_SOTA, warmup_rounds=2), silos, params, holdout)
    b = run_baseline(fed_cfg(tiny_cfg, AggregationMode.SUPERVISED_ONLY), silos, params, holdout)
    assert a.final_params.equal(b.final_params)


def test_threshold_after_warmup_trains_everyone(params, tiny_cfg, silos, holdout):
    history = run_baseline(fed_cfg(tiny_cfg, AggregationMode.THRESHOLD_SOTA, warmup_rounds=1), silos, params, holdout)
    assert [p.phase for p in history.plans] == [Phase.SUPERVISED, Phase.MIXED]
    assert history.plans[1].participants == (0, 1, 2)


def test_centralized_equals_long_supervised_run(params, tiny_cfg, silos, holdout):
    cfg = fed_cfg(tiny_cfg, AggregationMode.CENTRALIZED, total_rounds=3)
    history = run_baseline(cfg, silos, params, holdout)
    pooled = pool_silos(silos, supervised=True)
    long_cfg = tiny_cfg.model_copy(update={"epochs": 3 * tiny_cfg.epochs})
    assert history.final_params.equal(supervised_training(pooled, params, long_cfg))
    assert history.aggregation_cost == 0


def test_semi_centralized_runs(params, tiny_cfg, silos, holdout):
    history = run_baseline(fed_cfg(tiny_cfg, AggregationMode.SEMI_CENTRALIZED), silos, params, holdout)
    assert [p.phase for p in history.plans] == [Phase.MIXED, Phase.MIXED]
    assert history.aggregation_cost == 0
    assert not history.final_params.equal(params)


def test_weighted_ramp_reaches_plain_fedavg_weights(params, tiny_cfg, silos, holdout):
    history = run_weighted_ramp(fed_cfg(tiny_cfg, AggregationMode.WEIGHTED_RAMP, total_rounds=3), silos, params, holdout)
    first, last = history.plans[0], history.plans[-1]
    assert last.weights == pytest.approx((6 / 14, 4 / 14, 4 / 14))
    assert first.weights[0] > last.weights[0]
    assert all(p.phase is Phase.MIXED for p in history.plans)
    assert history.aggregation_cost == 9


# -------------------------
# History
# -------------------------
def test_rounds_to_target_and_csv(tiny_cfg, tmp_path):
    history = RunHistory(fed_cfg(tiny_cfg))
    for t, d in enumerate([0.1, 0.4, 0.7]):
        history.records.append(MetricsRecord(t, "Supervised", "FAT", 0, (0.9, d, 0.0), 1.5, 12.0))
    assert history.rounds_to_target(1, 0.5) == 3
    assert history.rounds_to_target(2, 0.5) is None
    assert history.dice_series(1) == [0.1, 0.4, 0.7]

    lines = history.write_csv(tmp_path / "m.csv").read_text().splitlines()
    assert lines[0].split(",") == csv_header(3)
    assert lines[1] == "0,Supervised,FAT,0,0.900000,0.100000,0.000000,1.500000,0"
    assert history.summary()["final_dice"] == [0.9, 0.7, 0.0]

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flsimco.data import PartitionSpec, Shard, gen_synthetic, partition_iid
from flsimco.federation import (AggregationError, ExperimentConfig, RoundConfig,
                                VehicleState, aggregate_discard, aggregate_fedavg,
                                aggregate_flsimco, derived_rng, flsimco_weights,
                                init_global, run_experiment, select_vehicles)
from flsimco.imaging import CameraParams
from flsimco.mobility import MobilityParams
from flsimco.ssl import DtLossConfig, EncoderConfig, ParamVector, SgdConfig

CFG = EncoderConfig(input_shape=(6, 6, 3), hidden_widths=(8,), embed_dim=4)


def vec(*values):
    layout = (("w0", (len(values),)),)
    return ParamVector(np.array(values, dtype=float), layout)


def test_init_global_deterministic():
    a = init_global(CFG, seed=5)
    b = init_global(CFG, seed=5)
    c = init_global(CFG, seed=6)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert a.layout == tuple(CFG.layer_shapes())


def make_pool(n):
    shard = Shard(owner=0, indices=np.arange(4))
    return [VehicleState(id=i, velocity=0.0, blur=0.0, shard=shard) for i in range(n)]


def test_select_all_when_n_equals_pool():
    pool = make_pool(6)
    chosen = select_vehicles(pool, 6, np.random.default_rng(0))
    assert sorted(v.id for v in chosen) == list(range(6))


def test_select_no_duplicates():
    pool = make_pool(10)
    for seed in range(20):
        chosen = select_vehicles(pool, 5, np.random.default_rng(seed))
        ids = [v.id for v in chosen]
        assert len(set(ids)) == 5


def test_select_rejects_oversized_request():
    with pytest.raises(ValueError):
        select_vehicles(make_pool(3), 4, np.random.default_rng(0))


def test_selection_frequency_uniform():
    pool = make_pool(20)
    counts = np.zeros(20)
    rounds = 2000
    for r in range(rounds):
        for v in select_vehicles(pool, 5, np.random.default_rng(r)):
            counts[v.id] += 1
    expected = rounds * 5 / 20
    sigma = np.sqrt(rounds * (5 / 20) * (1 - 5 / 20))
    assert np.all(np.abs(counts - expected) < 4 * sigma)


# --- blur-complement weights ---

def test_flsimco_two_vehicle_case_exact():
    merged, weights = aggregate_flsimco([vec(1.0), vec(2.0)], [1.0, 3.0])
    assert weights.tolist() == [0.75, 0.25]
    assert merged.values[0] == pytest.approx(0.75 * 1.0 + 0.25 * 2.0, abs=1e-15)


def test_flsimco_three_vehicle_normalization():
    _, weights = aggregate_flsimco([vec(0.0), vec(0.0), vec(0.0)], [1.0, 1.0, 2.0])
    assert np.allclose(weights, [3 / 8, 3 / 8, 2 / 8], atol=1e-15)


def test_flsimco_raw_weights_sum_to_n_minus_1():
    w = flsimco_weights([1.0, 1.0, 2.0], raw=True)
    assert w.sum() == pytest.approx(2.0, abs=1e-12)


def test_flsimco_equal_blur_matches_fedavg():
    params = [vec(1.0, 5.0), vec(3.0, -1.0), vec(2.0, 0.5)]
    merged_w, _ = aggregate_flsimco(params, [2.5, 2.5, 2.5])
    merged_avg, _ = aggregate_fedavg(params)
    assert np.allclose(merged_w.values, merged_avg.values, atol=1e-12)


def test_flsimco_weight_monotone_in_blur():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 11))
        blurs = rng.uniform(0.0, 20.0, size=n)
        weights = flsimco_weights(blurs.tolist())
        assert weights.sum() == pytest.approx(1.0, abs=1e-12)
        order = np.argsort(blurs)
        for a, b in zip(order[:-1], order[1:]):
            if blurs[a] < blurs[b]:
                assert weights[a] > weights[b]


def test_flsimco_zero_blur_dominates():
    weights = flsimco_weights([0.0, 4.0, 9.0])
    assert weights[0] == weights.max()
    assert weights[0] > weights[1] > weights[2]


def test_flsimco_all_zero_blur_uniform():
    weights = flsimco_weights([0.0, 0.0, 0.0])
    assert np.allclose(weights, 1 / 3)


def test_flsimco_permutation_invariant():
    params = [vec(1.0), vec(2.0), vec(3.0)]
    blurs = [0.5, 1.5, 3.0]
    merged, _ = aggregate_flsimco(params, blurs)
    perm = [2, 0, 1]
    merged_p, _ = aggregate_flsimco([params[i] for i in perm], [blurs[i] for i in perm])
    assert np.allclose(merged.values, merged_p.values, atol=1e-15)


def test_flsimco_single_vehicle_passthrough(caplog):
    import logging
    with caplog.at_level(logging.WARNING):
        merged, weights = aggregate_flsimco([vec(7.0)], [2.0])
    assert merged.values.tolist() == [7.0]
    assert weights.tolist() == [1.0]
    assert any("single vehicle" in m for m in caplog.messages)


def test_flsimco_rejects_negative_blur():
    with pytest.raises(ValueError):
        aggregate_flsimco([vec(1.0), vec(2.0)], [-1.0, 2.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 50.0), min_size=2, max_size=10))
def test_flsimco_weights_always_convex(blurs):
    weights = flsimco_weights(blurs)
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(weights >= 0.0)


# --- baselines ---

def test_fedavg_mean():
    merged, weights = aggregate_fedavg([vec(1.0), vec(3.0)])
    assert merged.values[0] == 2.0
    assert np.allclose(weights, 0.5)


def test_fedavg_identical_inputs():
    merged, _ = aggregate_fedavg([vec(4.0, -2.0)] * 3)
    assert merged.values.tolist() == [4.0, -2.0]


def test_fedavg_empty_errors():
    with pytest.raises(AggregationError):
        aggregate_fedavg([])


def test_discard_no_discards_equals_fedavg():
    params = [vec(1.0), vec(3.0)]
    merged, _ = aggregate_discard(params, [20.0, 25.0], threshold=27.78)
    avg, _ = aggregate_fedavg(params)
    assert np.array_equal(merged.values, avg.values)


def test_discard_filters_fast_vehicles():
    merged, weights = aggregate_discard([vec(1.0), vec(9.0)], [20.0, 35.0], threshold=27.78)
    assert merged.values[0] == 1.0
    assert weights.tolist() == [1.0, 0.0]


def test_discard_all_above_threshold_errors():
    with pytest.raises(AggregationError, match="discard"):
        aggregate_discard([vec(1.0)], [30.0], threshold=27.78)


# --- end-to-end rounds ---

def small_experiment(strategy):
    return ExperimentConfig(
        encoder=CFG,
        mobility=MobilityParams(mu=25.0, sigma=8.0, v_min=16.67, v_max=41.67),
        camera=CameraParams(),
        loss=DtLossConfig(),
        sgd=SgdConfig(lr0=0.05),
        rounds=RoundConfig(max_rounds=3, vehicles_per_round=2, local_epochs=1,
                           batch_size=4, strategy=strategy, fedco_queue_capacity=16,
                           fedco_batch=4),
    )


def small_world(seed=0):
    ds = gen_synthetic(3, 20, 6, seed=seed)
    shards = partition_iid(ds, PartitionSpec(policy="iid", n_vehicles=5, min_per_vehicle=5), seed=seed)
    return ds, shards


def test_run_experiment_zero_rounds():
    ds, shards = small_world()
    cfg = small_experiment("flsimco")
    cfg = ExperimentConfig(**{**cfg.__dict__, "rounds": RoundConfig(max_rounds=0, vehicles_per_round=2)})
    result = run_experiment(cfg, ds, shards, master_seed=1)
    assert result.records == []
    assert np.array_equal(result.final_params.values, init_global(CFG, 1).values)


@pytest.mark.parametrize("strategy", ["flsimco", "fedavg", "discard", "fedco"])
def test_run_experiment_deterministic(strategy):
    ds, shards = small_world()
    cfg = small_experiment(strategy)
    r1 = run_experiment(cfg, ds, shards, master_seed=3)
    r2 = run_experiment(cfg, ds, shards, master_seed=3)
    assert np.array_equal(r1.final_params.values, r2.final_params.values)
    for a, b in zip(r1.records, r2.records):
        assert a.vehicle_ids == b.vehicle_ids
        assert a.velocities == b.velocities
        assert a.local_losses == b.local_losses
        assert a.weights == b.weights


def test_run_experiment_emits_requested_rounds():
    ds, shards = small_world()
    result = run_experiment(small_experiment("flsimco"), ds, shards, master_seed=2)
    assert len(result.records) == 3
    for rec in result.records:
        assert len(rec.vehicle_ids) == 2
        assert abs(sum(rec.weights) - 1.0) < 1e-9
        for v, b in zip(rec.velocities, rec.blur_levels):
            assert 16.67 <= v <= 41.67
            assert b == pytest.approx(v * 0.36, rel=1e-12)


def test_velocity_draws_shared_across_strategies():
    ds, shards = small_world()
    rec_a = run_experiment(small_experiment("flsimco"), ds, shards, master_seed=4).records
    rec_b = run_experiment(small_experiment("fedavg"), ds, shards, master_seed=4).records
    for a, b in zip(rec_a, rec_b):
        assert a.vehicle_ids == b.vehicle_ids
        assert a.velocities == b.velocities


def test_fedco_round_updates_queue_and_aggregates():
    ds, shards = small_world()
    result = run_experiment(small_experiment("fedco"), ds, shards, master_seed=5)
    assert len(result.records) == 3
    assert all(np.isfinite(result.final_params.values).all() for _ in [0])


def test_derived_rng_is_stable():
    a = derived_rng(1, 2, 3).integers(1 << 30)
    b = derived_rng(1, 2, 3).integers(1 << 30)
    c = derived_rng(1, 2, 4).integers(1 << 30)
    assert a == b
    assert a != c


def test_worker_pool_matches_sequential(monkeypatch):
    ds, shards = small_world()
    cfg = small_experiment("flsimco")
    monkeypatch.setenv("FLSIMCO_WORKERS", "1")
    seq = run_experiment(cfg, ds, shards, master_seed=6).records
    monkeypatch.setenv("FLSIMCO_WORKERS", "2")
    par = run_experiment(cfg, ds, shards, master_seed=6).records
    for a, b in zip(seq, par):
        assert a.local_losses == b.local_losses
        assert a.weights == b.weights

"""Round orchestration and the four aggregation strategies.

Each round: sample participants, draw fresh velocities, train locally in
parallel-safe isolation, then combine the uploaded models. The headline
strategy weights each model by how little blur its vehicle's images had;
the baselines are plain averaging, a discard-above-threshold rule, and a
queue-based variant with a shared negative-key queue at the aggregator.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import ssl
from .data import Dataset, Shard
from .imaging import CameraParams, blur_level
from .mobility import MobilityParams, sample_velocity
from .ssl import DtLossConfig, EncoderConfig, ParamVector, SgdConfig

log = logging.getLogger(__name__)

STRATEGIES = ("flsimco", "fedavg", "discard", "fedco")

# Purpose tags for derived random streams. Strategy identity is deliberately
# absent so paired runs see identical velocity/partition/selection draws.
SEED_PARTITION = 1
SEED_INIT = 2
SEED_SELECT = 3
SEED_VELOCITY = 4
SEED_TRAIN = 5
SEED_QUEUE = 6


def derived_rng(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((master_seed, *key))))


class AggregationError(RuntimeError):
    pass


@dataclass
class VehicleState:
    id: int
    velocity: float
    blur: float
    shard: Shard
    local_params: ParamVector | None = None


@dataclass(frozen=True)
class RoundConfig:
    max_rounds: int = 150
    vehicles_per_round: int = 5
    local_epochs: int = 1
    batch_size: int = 520
    strategy: str = "flsimco"
    discard_threshold_velocity: float = 27.78  # m/s, 100 km/h
    fedco_queue_capacity: int = 256
    fedco_batch: int = 32
    fedco_momentum: float = 0.99
    eval_stride: int = 1
    flsimco_raw_weights: bool = False
    redraw_shards_each_round: bool = False

    def __post_init__(self):
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be nonnegative")
        if self.vehicles_per_round < 1:
            raise ValueError("vehicles_per_round must be positive")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy '{self.strategy}', expected one of {STRATEGIES}")
        if self.fedco_queue_capacity < self.fedco_batch:
            raise ValueError("fedco queue capacity must be at least the per-vehicle key batch")


@dataclass
class RoundRecord:
    round_index: int
    vehicle_ids: list[int]
    velocities: list[float]
    blur_levels: list[float]
    local_losses: list[float]
    mean_local_loss: float
    weights: list[float]
    top1: float | None
    aggregation_skipped: bool = False
    duration_s: float = 0.0  # omitted from serialized logs to keep them byte-deterministic


def init_global(cfg: EncoderConfig, seed: int) -> ParamVector:
    return ssl.init_params(cfg, derived_rng(seed, SEED_INIT))


def select_vehicles(pool: list[VehicleState], n: int, rng: np.random.Generator) -> list[VehicleState]:
    """Uniform without replacement within a round."""
    if n > len(pool):
        raise ValueError(f"cannot select {n} vehicles from a pool of {len(pool)}")
    chosen = rng.choice(len(pool), size=n, replace=False)
    return [pool[int(i)] for i in sorted(chosen)]


def flsimco_weights(blurs: list[float], raw: bool = False) -> np.ndarray:
    """Blur-complement weights: w_n proportional to (total blur - own blur).

    The raw proportional weights sum to N - 1; by default they are divided
    by N - 1 so the result is a convex combination. Vehicles with less blur
    get strictly larger weights.
    """
    levels = np.asarray(blurs, dtype=np.float64)
    if np.any(levels < 0):
        raise ValueError("blur levels must be nonnegative")
    n = len(levels)
    if n < 2:
        raise ValueError("blur weighting needs at least two vehicles")
    total = levels.sum()
    if total == 0.0:
        return np.full(n, 1.0 / n)
    w = (total - levels) / total
    if raw:
        return w
    return w / (n - 1)


def aggregate_flsimco(params: list[ParamVector], blurs: list[float],
                      raw_weights: bool = False) -> tuple[ParamVector, np.ndarray]:
    if len(params) != len(blurs):
        raise ValueError("params and blur levels must align")
    if len(params) == 1:
        log.warning("blur-weighted aggregation with a single vehicle: passing its model through")
        return params[0].copy(), np.array([1.0])
    weights = flsimco_weights(blurs, raw=raw_weights)
    stacked = np.stack([p.values for p in params])
    return ParamVector(weights @ stacked, params[0].layout), weights


def aggregate_fedavg(params: list[ParamVector]) -> tuple[ParamVector, np.ndarray]:
    if not params:
        raise AggregationError("cannot average an empty model list")
    weights = np.full(len(params), 1.0 / len(params))
    stacked = np.stack([p.values for p in params])
    return ParamVector(stacked.mean(axis=0), params[0].layout), weights


def aggregate_discard(params: list[ParamVector], velocities: list[float],
                      threshold: float) -> tuple[ParamVector, np.ndarray]:
    """Average only the models from vehicles at or below the velocity threshold."""
    if not params:
        raise AggregationError("cannot aggregate an empty model list")
    keep = [i for i, v in enumerate(velocities) if v <= threshold]
    if not keep:
        raise AggregationError("all vehicles above the discard threshold; no models survive")
    merged, _ = aggregate_fedavg([params[i] for i in keep])
    weights = np.zeros(len(params))
    weights[keep] = 1.0 / len(keep)
    return merged, weights


@dataclass
class ExperimentConfig:
    encoder: EncoderConfig
    mobility: MobilityParams
    camera: CameraParams
    loss: DtLossConfig
    sgd: SgdConfig
    rounds: RoundConfig
    fedco_tau: float = 0.1

    def lr_at(self, round_idx: int) -> float:
        return ssl.cosine_lr(round_idx, max(self.rounds.max_rounds, 1),
                             self.sgd.lr0, self.sgd.lr_min)


def _train_one(args):
    """Worker-safe local training call; returns results keyed by vehicle id."""
    (vehicle_id, values, layout, cfg, images, blur, loss_cfg, sgd_cfg, lr,
     epochs, batch_size, seed_key) = args
    rng = derived_rng(*seed_key)
    params = ParamVector(values, layout)
    trained, trace = ssl.local_train(params, cfg, images, blur, loss_cfg, sgd_cfg,
                                     lr, epochs, batch_size, rng)
    return vehicle_id, trained.values, trace


def worker_count() -> int:
    try:
        n = int(os.environ.get("FLSIMCO_WORKERS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def run_round(round_idx: int, global_params: ParamVector, pool: list[VehicleState],
              dataset: Dataset, cfg: ExperimentConfig, master_seed: int,
              queue: np.ndarray | None = None) -> tuple[ParamVector, RoundRecord, np.ndarray | None]:
    """One full round: select, train, aggregate. Returns new global model."""
    started = time.perf_counter()
    rc = cfg.rounds
    selected = select_vehicles(pool, rc.vehicles_per_round,
                               derived_rng(master_seed, SEED_SELECT, round_idx))
    for v in selected:
        v.velocity = sample_velocity(derived_rng(master_seed, SEED_VELOCITY, round_idx, v.id),
                                     cfg.mobility)
        v.blur = blur_level(v.velocity, cfg.camera)
    lr = cfg.lr_at(round_idx)

    if rc.strategy == "fedco":
        if queue is None:
            raise ValueError("fedco strategy needs a key queue")
        results = []
        for v in selected:
            rng = derived_rng(master_seed, SEED_TRAIN, round_idx, v.id)
            trained, trace, keys = ssl.local_train_moco(
                global_params, cfg.encoder, dataset.images[v.shard.indices], v.blur,
                cfg.fedco_tau, cfg.sgd, lr, rc.local_epochs, rc.fedco_batch,
                rc.fedco_momentum, queue, rng)
            results.append((v.id, trained, trace, keys))
        models = [r[1] for r in results]
        losses = [float(r[2][-1]) if r[2] else float("nan") for r in results]
        for _, _, _, keys in results:
            queue = ssl.queue_push(queue, keys, rc.fedco_queue_capacity)
        merged, weights = aggregate_fedavg(models)
        skipped = False
    else:
        jobs = [(v.id, global_params.values, global_params.layout, cfg.encoder,
                 dataset.images[v.shard.indices], v.blur, cfg.loss, cfg.sgd, lr,
                 rc.local_epochs, rc.batch_size, (master_seed, SEED_TRAIN, round_idx, v.id))
                for v in selected]
        n_workers = worker_count()
        if n_workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=n_workers) as pool_exec:
                raw = list(pool_exec.map(_train_one, jobs))
        else:
            raw = [_train_one(j) for j in jobs]
        by_id = {vid: (vals, trace) for vid, vals, trace in raw}
        models = [ParamVector(by_id[v.id][0], global_params.layout) for v in selected]
        losses = [float(by_id[v.id][1][-1]) if by_id[v.id][1] else float("nan") for v in selected]
        skipped = False
        if rc.strategy == "flsimco":
            merged, weights = aggregate_flsimco(models, [v.blur for v in selected],
                                                raw_weights=rc.flsimco_raw_weights)
        elif rc.strategy == "fedavg":
            merged, weights = aggregate_fedavg(models)
        elif rc.strategy == "discard":
            try:
                merged, weights = aggregate_discard(models, [v.velocity for v in selected],
                                                    rc.discard_threshold_velocity)
            except AggregationError:
                log.warning("round %d: every vehicle above %.2f m/s; keeping previous global model",
                            round_idx, rc.discard_threshold_velocity)
                merged, weights = global_params.copy(), np.zeros(len(models))
                skipped = True
        else:
            raise ValueError(f"unknown strategy '{rc.strategy}'")

    record = RoundRecord(
        round_index=round_idx,
        vehicle_ids=[v.id for v in selected],
        velocities=[v.velocity for v in selected],
        blur_levels=[v.blur for v in selected],
        local_losses=losses,
        mean_local_loss=float(np.mean(losses)),
        weights=[float(w) for w in weights],
        top1=None,
        aggregation_skipped=skipped,
        duration_s=time.perf_counter() - started,
    )
    return merged, record, queue


@dataclass
class ExperimentResult:
    records: list[RoundRecord]
    final_params: ParamVector


def run_experiment(cfg: ExperimentConfig, dataset: Dataset, shards: list[Shard],
                   master_seed: int, evaluate=None,
                   reshard=None) -> ExperimentResult:
    """Full federated run: init, then max_rounds of select/train/aggregate.

    `evaluate` is an optional callback (params, round_idx) -> top1 applied
    every eval_stride rounds; `reshard` (round_idx) -> shards supports the
    per-round shard redraw flag. Deterministic given the master seed.
    """
    rc = cfg.rounds
    global_params = init_global(cfg.encoder, master_seed)
    pool = [VehicleState(id=i, velocity=0.0, blur=0.0, shard=s) for i, s in enumerate(shards)]
    queue = None
    if rc.strategy == "fedco":
        queue = ssl.init_queue(cfg.encoder.embed_dim, rc.fedco_queue_capacity,
                               derived_rng(master_seed, SEED_QUEUE))
    records: list[RoundRecord] = []
    for r in range(rc.max_rounds):
        if rc.redraw_shards_each_round and reshard is not None:
            for v, s in zip(pool, reshard(r)):
                v.shard = s
        global_params, record, queue = run_round(r, global_params, pool, dataset, cfg,
                                                 master_seed, queue)
        if evaluate is not None and r % rc.eval_stride == 0:
            record.top1 = float(evaluate(global_params, r))
        records.append(record)
    return ExperimentResult(records=records, final_params=global_params)

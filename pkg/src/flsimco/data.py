"""Datasets and per-vehicle sharding.

Provides a synthetic labeled corpus (distinct color/stripe texture per
class), a reader for the standard CIFAR-10 binary batches, and IID /
Dirichlet partitioners. Labels ride along for the evaluation probe only;
the training path never sees them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imaging import hsv_to_rgb

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 32*32*3 pixel bytes
CIFAR_SIDE = 32
CIFAR_CLASSES = 10


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # (N, H, W, C) float64 in [0, 1]
    labels: np.ndarray  # (N,) int
    class_count: int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise DataError(f"images must be (N, H, W, C), got shape {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DataError("images and labels must have equal length")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DataError("labels must lie in [0, class_count)")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])  # type: ignore[return-value]


@dataclass(frozen=True)
class Shard:
    owner: int
    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class PartitionSpec:
    policy: str = "iid"  # "iid" or "dirichlet"
    alpha: float = 0.1
    n_vehicles: int = 95
    min_per_vehicle: int = 520

    def __post_init__(self):
        if self.policy not in ("iid", "dirichlet"):
            raise DataError(f"unknown partition policy '{self.policy}'")
        if self.policy == "dirichlet" and self.alpha <= 0:
            raise DataError(f"alpha must be positive, got {self.alpha}")
        if self.n_vehicles < 1 or self.min_per_vehicle < 1:
            raise DataError("n_vehicles and min_per_vehicle must be positive")


def gen_synthetic(classes: int, per_class: int, side: int, seed: int, noise: float = 0.1) -> Dataset:
    """Labeled toy corpus: one base color + oriented stripe pattern per class.

    Classes are far apart in pixel space relative to the default noise
    amplitude, so a nearest-centroid rule separates them.
    """
    if classes < 2 or per_class < 1 or side < 4:
        raise DataError("need classes >= 2, per_class >= 1, side >= 4")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64) / side
    images = np.empty((classes * per_class, side, side, 3))
    labels = np.empty(classes * per_class, dtype=np.int64)
    for k in range(classes):
        hue = k / classes
        base = hsv_to_rgb(np.array([hue, 0.65, 0.75]))
        theta = np.pi * k / classes
        freq = 1.0 + k
        stripes = 0.5 + 0.5 * np.sin(2.0 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)))
        template = 0.65 * base[None, None, :] + 0.25 * stripes[:, :, None]
        lo, hi = k * per_class, (k + 1) * per_class
        jitter = rng.uniform(-noise, noise, size=(per_class, side, side, 3))
        images[lo:hi] = np.clip(template[None] + jitter, 0.0, 1.0)
        labels[lo:hi] = k
    return Dataset(images=images, labels=labels, class_count=classes)


def load_cifar10(path: str | Path, split: str = "train") -> Dataset:
    """Read the CIFAR-10 binary batches (1 label byte + R/G/B planes per record)."""
    directory = Path(path)
    if split == "train":
        names = [f"data_batch_{i}.bin" for i in range(1, 6)]
    elif split == "test":
        names = ["test_batch.bin"]
    else:
        raise DataError(f"unknown split '{split}'")
    chunks, label_chunks = [], []
    for name in names:
        file = directory / name
        if not file.exists():
            raise DataError(f"missing CIFAR-10 batch file: {file}")
        raw = np.frombuffer(file.read_bytes(), dtype=np.uint8)
        if raw.size == 0 or raw.size % CIFAR_RECORD_BYTES != 0:
            raise DataError(f"truncated CIFAR-10 batch file: {file} ({raw.size} bytes)")
        records = raw.reshape(-1, CIFAR_RECORD_BYTES)
        labels = records[:, 0].astype(np.int64)
        if labels.max(initial=0) >= CIFAR_CLASSES:
            raise DataError(f"label byte out of range in {file}")
        planes = records[:, 1:].reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE)
        chunks.append(planes.transpose(0, 2, 3, 1).astype(np.float64) / 255.0)
        label_chunks.append(labels)
    return Dataset(images=np.concatenate(chunks), labels=np.concatenate(label_chunks),
                   class_count=CIFAR_CLASSES)


def save_dataset(ds: Dataset, path: str | Path) -> None:
    np.savez_compressed(path, images=ds.images, labels=ds.labels,
                        class_count=np.int64(ds.class_count))


def load_dataset(path: str | Path) -> Dataset:
    file = Path(path)
    if not file.exists():
        raise DataError(f"dataset file not found: {file}")
    with np.load(file) as z:
        return Dataset(images=z["images"], labels=z["labels"], class_count=int(z["class_count"]))


def _check_capacity(ds: Dataset, spec: PartitionSpec) -> None:
    needed = spec.n_vehicles * spec.min_per_vehicle
    if len(ds) < needed:
        raise DataError(
            f"insufficient data: {len(ds)} images for {spec.n_vehicles} vehicles x "
            f"{spec.min_per_vehicle} minimum ({needed - len(ds)} short)")


def partition_iid(ds: Dataset, spec: PartitionSpec, seed: int) -> list[Shard]:
    """Class-balanced even split: per-shard class counts differ by at most one."""
    _check_capacity(ds, spec)
    rng = np.random.default_rng(seed)
    per_vehicle: list[list[int]] = [[] for _ in range(spec.n_vehicles)]
    offset = 0
    for cls in range(ds.class_count):
        idx = np.flatnonzero(ds.labels == cls)
        rng.shuffle(idx)
        for j, i in enumerate(idx):
            per_vehicle[(offset + j) % spec.n_vehicles].append(int(i))
        offset += len(idx)  # rotate the dealing start so remainders spread evenly
    shards = [Shard(owner=v, indices=np.array(sorted(ids), dtype=np.int64))
              for v, ids in enumerate(per_vehicle)]
    short = [s for s in shards if len(s) < spec.min_per_vehicle]
    if short:
        raise DataError(f"IID split left {len(short)} shard(s) below min_per_vehicle")
    return shards


def partition_dirichlet(ds: Dataset, spec: PartitionSpec, seed: int) -> list[Shard]:
    """Skewed split: each vehicle's class mix is a Dirichlet(alpha) draw.

    Every vehicle targets an equal share of the pool. When a favored class
    runs dry the deficit is redrawn from the vehicle's own remaining
    proportions, which preserves the skew; a final top-up keeps every shard
    at min_per_vehicle.
    """
    _check_capacity(ds, spec)
    rng = np.random.default_rng(seed)
    v_count, c_count = spec.n_vehicles, ds.class_count
    proportions = rng.dirichlet(np.full(c_count, spec.alpha), size=v_count)

    pools = []
    for cls in range(c_count):
        idx = np.flatnonzero(ds.labels == cls)
        rng.shuffle(idx)
        pools.append(list(idx))

    target = len(ds) // v_count
    per_vehicle: list[list[int]] = [[] for _ in range(v_count)]
    order = rng.permutation(v_count)  # random service order, no systematic head start
    for v in order:
        counts = _apportion(proportions[v], target)
        deficit = 0
        for cls in range(c_count):
            take = min(counts[cls], len(pools[cls]))
            deficit += counts[cls] - take
            for _ in range(take):
                per_vehicle[v].append(int(pools[cls].pop()))
        while deficit > 0:
            cls = _draw_available_class(rng, proportions[v], pools)
            per_vehicle[v].append(int(pools[cls].pop()))
            deficit -= 1

    for v in range(v_count):  # top-up below-minimum shards from leftovers
        while len(per_vehicle[v]) < spec.min_per_vehicle:
            cls = _draw_available_class(rng, proportions[v], pools)
            per_vehicle[v].append(int(pools[cls].pop()))

    return [Shard(owner=v, indices=np.array(sorted(ids), dtype=np.int64))
            for v, ids in enumerate(per_vehicle)]


def _apportion(props: np.ndarray, total: int) -> np.ndarray:
    """Integer class counts summing to `total`, largest remainders first."""
    raw = props * total
    counts = np.floor(raw).astype(np.int64)
    remainder = total - int(counts.sum())
    if remainder > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:remainder]] += 1
    return counts


def _draw_available_class(rng: np.random.Generator, props: np.ndarray, pools: list[list[int]]) -> int:
    weights = np.array([p if pools[c] else 0.0 for c, p in enumerate(props)])
    if weights.sum() <= 0:
        nonempty = [c for c in range(len(pools)) if pools[c]]
        if not nonempty:
            raise DataError("all class pools exhausted during rebalancing")
        weights = np.zeros(len(pools))
        weights[nonempty] = 1.0
    return int(rng.choice(len(pools), p=weights / weights.sum()))


def partition(ds: Dataset, spec: PartitionSpec, seed: int) -> list[Shard]:
    if spec.policy == "iid":
        return partition_iid(ds, spec, seed)
    return partition_dirichlet(ds, spec, seed)


def max_class_fraction(ds: Dataset, shard: Shard) -> float:
    labels = ds.labels[shard.indices]
    counts = np.bincount(labels, minlength=ds.class_count)
    return counts.max() / len(labels)


@dataclass(frozen=True)
class ProbeSplit:
    """Index lists reserved for evaluation; the rest is partitioned to vehicles."""

    train_indices: np.ndarray
    test_indices: np.ndarray
    vehicle_indices: np.ndarray


def split_probe(ds: Dataset, train_size: int, test_size: int, seed: int) -> ProbeSplit:
    if train_size + test_size >= len(ds):
        raise DataError("probe split leaves no data for vehicles")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ds))
    return ProbeSplit(
        train_indices=np.sort(perm[:train_size]),
        test_indices=np.sort(perm[train_size:train_size + test_size]),
        vehicle_indices=np.sort(perm[train_size + test_size:]),
    )


def restrict(ds: Dataset, indices: np.ndarray) -> Dataset:
    return Dataset(images=ds.images[indices], labels=ds.labels[indices],
                   class_count=ds.class_count)

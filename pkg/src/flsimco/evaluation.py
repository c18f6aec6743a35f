"""Representation quality and loss-curve stability metrics.

Top-1 accuracy comes from a frozen-encoder kNN probe over cosine
similarity; curve stability is the sample standard deviation of successive
per-round loss differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .ssl import EncoderConfig, ParamVector, encode


@dataclass(frozen=True)
class ProbeConfig:
    k: int = 20
    train_indices: np.ndarray | None = None
    test_indices: np.ndarray | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.train_indices is not None and self.test_indices is not None:
            overlap = np.intersect1d(self.train_indices, self.test_indices)
            if overlap.size:
                raise ValueError("probe train and test sets must be disjoint")


def knn_predict(train_emb: np.ndarray, train_labels: np.ndarray,
                test_emb: np.ndarray, k: int, class_count: int) -> np.ndarray:
    """Majority label of the k nearest cosine neighbors.

    Vote ties break toward the class with smaller summed cosine distance
    among its voting neighbors, then toward the lower class id. Neighbor
    similarity ties break toward the lower train index, so predictions are
    deterministic.
    """
    if len(train_emb) == 0 or len(test_emb) == 0:
        raise ValueError("probe sets must be non-empty")
    if k > len(train_emb):
        raise ValueError(f"k={k} exceeds probe train size {len(train_emb)}")
    sims = test_emb @ train_emb.T
    order = np.argsort(-sims, axis=1, kind="stable")[:, :k]
    predictions = np.empty(len(test_emb), dtype=np.int64)
    for i in range(len(test_emb)):
        neighbor_labels = train_labels[order[i]]
        neighbor_dist = 1.0 - sims[i, order[i]]
        counts = np.bincount(neighbor_labels, minlength=class_count)
        best = counts.max()
        candidates = np.flatnonzero(counts == best)
        if len(candidates) == 1:
            predictions[i] = candidates[0]
            continue
        sums = np.array([neighbor_dist[neighbor_labels == c].sum() for c in candidates])
        predictions[i] = candidates[np.lexsort((candidates, sums))[0]]
    return predictions


def knn_top1(params: ParamVector, cfg: EncoderConfig, dataset: Dataset,
             probe: ProbeConfig) -> float:
    """Fraction of probe test images whose kNN-predicted label is correct."""
    if probe.train_indices is None or probe.test_indices is None:
        raise ValueError("probe index sets are required")
    if len(probe.train_indices) == 0 or len(probe.test_indices) == 0:
        raise ValueError("probe sets must be non-empty")
    train_emb = encode(params, cfg, dataset.images[probe.train_indices])
    test_emb = encode(params, cfg, dataset.images[probe.test_indices])
    predictions = knn_predict(train_emb, dataset.labels[probe.train_indices],
                              test_emb, probe.k, dataset.class_count)
    truth = dataset.labels[probe.test_indices]
    return float(np.mean(predictions == truth))


@dataclass(frozen=True)
class CurveStats:
    losses: tuple[float, ...]
    differences: tuple[float, ...]
    std_of_differences: float
    final: float
    minimum: float


def curve_stats(losses) -> CurveStats:
    """Stability summary of a loss curve: std (ddof=1) of successive differences."""
    values = [float(x) for x in losses]
    if len(values) < 2:
        raise ValueError("curve stats need at least two rounds")
    diffs = np.diff(values)
    return CurveStats(
        losses=tuple(values),
        differences=tuple(float(d) for d in diffs),
        std_of_differences=float(np.std(diffs, ddof=1)) if len(diffs) > 1 else 0.0,
        final=values[-1],
        minimum=min(values),
    )


@dataclass(frozen=True)
class RunSummary:
    strategy: str
    seed: int | str
    rounds: int
    final_loss: float
    final_top1: float
    best_top1: float
    curve_std: float


def summarize_run(strategy: str, seed, losses, top1s) -> RunSummary:
    accs = [a for a in top1s if a is not None]
    stats = curve_stats(losses)
    return RunSummary(
        strategy=strategy,
        seed=seed,
        rounds=len(stats.losses),
        final_loss=stats.final,
        final_top1=accs[-1] if accs else float("nan"),
        best_top1=max(accs) if accs else float("nan"),
        curve_std=stats.std_of_differences,
    )


def compare_runs(runs: list[RunSummary]) -> tuple[list[RunSummary], dict[tuple[str, str], float]]:
    """Per-run rows plus per-strategy means and pairwise final-top1 deltas.

    All runs must cover the same number of rounds.
    """
    if not runs:
        raise ValueError("no runs to compare")
    round_counts = {r.rounds for r in runs}
    if len(round_counts) != 1:
        raise ValueError(f"runs cover differing round counts: {sorted(round_counts)}")
    rows = sorted(runs, key=lambda r: (r.strategy, str(r.seed)))
    strategies = sorted({r.strategy for r in runs})
    means: dict[str, RunSummary] = {}
    for s in strategies:
        group = [r for r in rows if r.strategy == s]
        means[s] = RunSummary(
            strategy=s,
            seed="mean",
            rounds=group[0].rounds,
            final_loss=float(np.mean([r.final_loss for r in group])),
            final_top1=float(np.mean([r.final_top1 for r in group])),
            best_top1=float(np.mean([r.best_top1 for r in group])),
            curve_std=float(np.mean([r.curve_std for r in group])),
        )
    deltas = {(a, b): means[a].final_top1 - means[b].final_top1
              for a in strategies for b in strategies if a != b}
    return rows + [means[s] for s in strategies], deltas

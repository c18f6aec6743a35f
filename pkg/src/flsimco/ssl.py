"""Contrastive encoder, dual-temperature loss, and the local training loop.

The encoder is a small MLP with a final L2-normalization layer, a
desk-scale stand-in for a deep backbone; the loss reweights each anchor's
InfoNCE term by a stop-gradient ratio of mismatch probabilities computed
at two temperatures, so in-batch negatives replace a key dictionary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .imaging import AugmentationPolicy, augment, blur_batch


@dataclass(frozen=True)
class EncoderConfig:
    input_shape: tuple[int, int, int] = (16, 16, 3)  # (H, W, C)
    hidden_widths: tuple[int, ...] = (64,)
    embed_dim: int = 128

    def __post_init__(self):
        if self.embed_dim < 2:
            raise ValueError("embed_dim must be at least 2")
        if not self.hidden_widths:
            raise ValueError("need at least one hidden layer")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError("hidden widths must be positive")

    @property
    def input_size(self) -> int:
        h, w, c = self.input_shape
        return h * w * c

    def layer_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Ordered (name, shape) manifest of all parameter tensors."""
        dims = [self.input_size, *self.hidden_widths, self.embed_dim]
        manifest: list[tuple[str, tuple[int, ...]]] = []
        for i in range(len(dims) - 1):
            manifest.append((f"w{i}", (dims[i], dims[i + 1])))
            manifest.append((f"b{i}", (dims[i + 1],)))
        return manifest


@dataclass
class ParamVector:
    """Flat parameter vector plus the (name, shape) layout it was packed from."""

    values: np.ndarray
    layout: tuple[tuple[str, tuple[int, ...]], ...]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = sum(int(np.prod(shape)) for _, shape in self.layout)
        if self.values.size != expected:
            raise ValueError(f"parameter vector has {self.values.size} entries, layout needs {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("parameter vector contains non-finite entries")

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)

    def unpack(self) -> dict[str, np.ndarray]:
        out = {}
        pos = 0
        for name, shape in self.layout:
            size = int(np.prod(shape))
            out[name] = self.values[pos:pos + size].reshape(shape)
            pos += size
        return out


def pack(arrays: dict[str, np.ndarray], layout) -> ParamVector:
    flat = np.concatenate([np.asarray(arrays[name]).reshape(-1) for name, _ in layout])
    return ParamVector(flat, tuple(layout))


def init_params(cfg: EncoderConfig, rng: np.random.Generator) -> ParamVector:
    """Seeded uniform init in +-1/sqrt(fan_in) per layer; biases follow their layer."""
    layout = tuple(cfg.layer_shapes())
    dims = [cfg.input_size, *cfg.hidden_widths, cfg.embed_dim]
    arrays = {}
    for name, shape in layout:
        fan_in = dims[int(name[1:])]
        bound = 1.0 / math.sqrt(fan_in)
        arrays[name] = rng.uniform(-bound, bound, size=shape)
    return pack(arrays, layout)


def param_tensors(params: ParamVector) -> dict[str, Tensor]:
    """Differentiable leaf tensors viewing the packed parameters."""
    return {name: Tensor(arr.copy(), requires_grad=True) for name, arr in params.unpack().items()}


def grads_to_vector(tensors: dict[str, Tensor], params: ParamVector) -> np.ndarray:
    pieces = []
    for name, shape in params.layout:
        t = tensors[name]
        g = t.grad if t.grad is not None else np.zeros(shape)
        pieces.append(np.asarray(g).reshape(-1))
    return np.concatenate(pieces)


def forward_embeddings(tensors: dict[str, Tensor], cfg: EncoderConfig, images: np.ndarray) -> Tensor:
    """Batch of images -> (M, D) unit-norm embeddings on the tape."""
    batch = np.asarray(images, dtype=np.float64)
    if batch.shape[1:] != cfg.input_shape:
        raise ValueError(f"batch images of shape {batch.shape[1:]} do not match encoder input {cfg.input_shape}")
    x: Tensor = Tensor(batch.reshape(batch.shape[0], -1))
    n_layers = len(cfg.hidden_widths) + 1
    for i in range(n_layers):
        x = ad.matmul(x, tensors[f"w{i}"]) + tensors[f"b{i}"]
        if i < n_layers - 1:
            x = ad.tanh(x)
    return ad.l2_normalize(x)


def encode(params: ParamVector, cfg: EncoderConfig, images: np.ndarray) -> np.ndarray:
    """Frozen-encoder embeddings as a plain array (no gradients)."""
    return forward_embeddings(param_tensors(params), cfg, images).data


@dataclass
class EmbeddingTriple:
    anchor: Tensor
    positive: Tensor
    negatives: list[Tensor]

    @classmethod
    def from_arrays(cls, anchor, positive, negatives) -> "EmbeddingTriple":
        return cls(Tensor(anchor), Tensor(positive), [Tensor(n) for n in negatives])


class NoNegativesError(ValueError):
    pass


def build_triples(tensors: dict[str, Tensor], cfg: EncoderConfig, batch: np.ndarray,
                  rng: np.random.Generator) -> list[EmbeddingTriple]:
    """Anchor and positive views of each image, plain in-batch keys as negatives.

    Anchor i and positive i come from the same source image through the two
    pipelines; the negatives for anchor i are the unaugmented embeddings of
    every other batch image, so each triple carries M - 1 negatives.
    """
    m = len(batch)
    if m < 2:
        raise NoNegativesError(f"need at least 2 images per batch for negatives, got {m}")
    pi1, pi2 = AugmentationPolicy.pi1(), AugmentationPolicy.pi2()
    view1 = np.stack([augment(img, pi1, rng) for img in batch])
    view2 = np.stack([augment(img, pi2, rng) for img in batch])
    anchors = forward_embeddings(tensors, cfg, view1)
    positives = forward_embeddings(tensors, cfg, view2)
    keys = forward_embeddings(tensors, cfg, batch)
    triples = []
    for i in range(m):
        negatives = [ad.row(keys, j) for j in range(m) if j != i]
        triples.append(EmbeddingTriple(ad.row(anchors, i), ad.row(positives, i), negatives))
    return triples


@dataclass(frozen=True)
class DtLossConfig:
    tau_alpha: float = 0.1
    tau_beta: float = 1.0

    def __post_init__(self):
        if self.tau_alpha <= 0:
            raise ValueError(f"tau_alpha must be strictly positive, got {self.tau_alpha}")
        if self.tau_beta <= 0:
            raise ValueError(f"tau_beta must be strictly positive, got {self.tau_beta}")


def _positive_softmax(t: EmbeddingTriple, tau: float) -> Tensor:
    """Softmax probability of the positive among {positive} + negatives."""
    z_pos = ad.exp(ad.dot(t.anchor, t.positive) * (1.0 / tau))
    denom = z_pos
    for k in t.negatives:
        denom = denom + ad.exp(ad.dot(t.anchor, k) * (1.0 / tau))
    return ad.div(z_pos, denom)


def dt_weight(t: EmbeddingTriple, tau: float) -> float:
    """Probability mass the anchor assigns away from its positive at `tau`."""
    return float(1.0 - _positive_softmax(t, tau).data)


def dt_loss(t: EmbeddingTriple, cfg: DtLossConfig) -> Tensor:
    """Dual-temperature contrastive loss for one triple.

    A stop-gradient coefficient (mismatch at tau_beta over mismatch at
    tau_alpha) scales the InfoNCE cross-entropy at tau_alpha; gradients
    flow only through the cross-entropy term.
    """
    if not t.negatives:
        raise NoNegativesError("dual-temperature loss needs at least one negative")
    w_beta = 1.0 - _positive_softmax(t, cfg.tau_beta)
    w_alpha = 1.0 - _positive_softmax(t, cfg.tau_alpha)
    coef = ad.stop_gradient(ad.div(w_beta, w_alpha))
    return ad.neg(coef * ad.log(_positive_softmax(t, cfg.tau_alpha)))


def infonce_loss(t: EmbeddingTriple, tau: float) -> Tensor:
    """Plain InfoNCE cross-entropy of the positive at temperature `tau`."""
    if not t.negatives:
        raise NoNegativesError("InfoNCE needs at least one negative")
    return ad.neg(ad.log(_positive_softmax(t, tau)))


def _batch_positive_softmax(anchors: Tensor, positives: Tensor, keys: Tensor,
                            tau: float) -> Tensor:
    """Per-anchor softmax mass on its positive, all anchors at once.

    Row i scores anchor i against its positive and against every key j != i;
    equivalent to the per-triple computation but in a handful of matrix nodes.
    """
    m = anchors.data.shape[0]
    pos_logits = ad.rowsum(ad.mul(anchors, positives)) * (1.0 / tau)
    all_logits = ad.matmul(anchors, ad.transpose(keys)) * (1.0 / tau)
    off_diagonal = 1.0 - np.eye(m)
    neg_sum = ad.rowsum(ad.mul(ad.exp(all_logits), Tensor(off_diagonal)))
    pos_exp = ad.exp(pos_logits)
    return ad.div(pos_exp, pos_exp + neg_sum)


def batch_dt_loss(anchors: Tensor, positives: Tensor, keys: Tensor,
                  cfg: DtLossConfig) -> Tensor:
    """Vectorized mean dual-temperature loss over a batch of views.

    Produces the same value and gradients as averaging dt_loss over the
    triples built from the same embeddings (covered by tests).
    """
    if anchors.data.shape[0] < 2:
        raise NoNegativesError("need at least 2 images per batch for negatives")
    p_beta = _batch_positive_softmax(anchors, positives, keys, cfg.tau_beta)
    p_alpha = _batch_positive_softmax(anchors, positives, keys, cfg.tau_alpha)
    coef = ad.stop_gradient(ad.div(1.0 - p_beta, 1.0 - p_alpha))
    per_anchor = ad.neg(ad.mul(coef, ad.log(p_alpha)))
    return ad.tsum(per_anchor) * (1.0 / anchors.data.shape[0])


def mean_loss(losses: list[Tensor]) -> Tensor:
    if not losses:
        raise ValueError("mean of an empty loss list")
    total = losses[0]
    for term in losses[1:]:
        total = total + term
    return total * (1.0 / len(losses))


def batch_loss(triples: list[EmbeddingTriple], cfg: DtLossConfig) -> Tensor:
    """Mean dual-temperature loss over a batch of triples."""
    if not triples:
        raise ValueError("batch loss of an empty batch")
    return mean_loss([dt_loss(t, cfg) for t in triples])


@dataclass
class SgdConfig:
    lr0: float = 0.9
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_min_ratio: float = 1e-3

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")

    @property
    def lr_min(self) -> float:
        return self.lr_min_ratio * self.lr0


class SgdMomentum:
    """Classical momentum SGD with decoupled-from-nothing weight decay.

    buffer <- momentum * buffer + (grad + weight_decay * param)
    param  <- param - lr * buffer
    """

    def __init__(self, cfg: SgdConfig, n_params: int):
        self.cfg = cfg
        self.buffer = np.zeros(n_params)

    def step(self, params: ParamVector, grads: np.ndarray, lr: float) -> ParamVector:
        grads = np.asarray(grads)
        if grads.shape != params.values.shape:
            raise ValueError("gradient shape does not match parameters")
        if not np.all(np.isfinite(grads)):
            raise ValueError("non-finite gradients passed to SGD step")
        self.buffer = self.cfg.momentum * self.buffer + (grads + self.cfg.weight_decay * params.values)
        return ParamVector(params.values - lr * self.buffer, params.layout)


def cosine_lr(round_idx: int, max_rounds: int, lr0: float, lr_min: float) -> float:
    """Half-cosine decay from lr0 at round 0 to lr_min at max_rounds."""
    if round_idx < 0:
        raise ValueError("round index must be nonnegative")
    if round_idx >= max_rounds:
        return lr_min
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * round_idx / max_rounds))


def local_train(params: ParamVector, cfg: EncoderConfig, shard_images: np.ndarray,
                blur: float, loss_cfg: DtLossConfig, sgd_cfg: SgdConfig, lr: float,
                epochs: int, batch_size: int, rng: np.random.Generator) -> tuple[ParamVector, list[float]]:
    """Train a local copy of the global parameters on a blurred shard.

    Each epoch samples a batch, blurs it at the vehicle's per-round level,
    builds anchor/positive/negative triples, and takes one SGD step on the
    mean dual-temperature loss. Returns the updated parameters and the
    per-epoch loss trace.
    """
    if len(shard_images) == 0:
        raise ValueError("cannot train on an empty shard")
    if min(batch_size, len(shard_images)) < 2:
        raise NoNegativesError("need at least 2 images per batch for negatives")
    current = params.copy()
    optimizer = SgdMomentum(sgd_cfg, current.values.size)
    pi1, pi2 = AugmentationPolicy.pi1(), AugmentationPolicy.pi2()
    trace: list[float] = []
    for _ in range(epochs):
        take = min(batch_size, len(shard_images))
        chosen = rng.choice(len(shard_images), size=take, replace=False)
        batch = blur_batch(shard_images[chosen], blur)
        view1 = np.stack([augment(img, pi1, rng) for img in batch])
        view2 = np.stack([augment(img, pi2, rng) for img in batch])
        tensors = param_tensors(current)
        anchors = forward_embeddings(tensors, cfg, view1)
        positives = forward_embeddings(tensors, cfg, view2)
        keys = forward_embeddings(tensors, cfg, batch)
        loss = batch_dt_loss(anchors, positives, keys, loss_cfg)
        value, _ = ad.forward_backward(loss, list(tensors.values()))
        grads = grads_to_vector(tensors, current)
        current = optimizer.step(current, grads, lr)
        trace.append(value)
    return current, trace


@dataclass
class MomentumEncoderState:
    """Key-encoder parameters plus the shared negative-key ring buffer."""

    key_params: ParamVector
    momentum: float = 0.99
    queue: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    capacity: int = 256

    def __post_init__(self):
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError("momentum must lie in [0, 1]")
        if self.capacity < 1:
            raise ValueError("queue capacity must be positive")
        if len(self.queue) > self.capacity:
            raise ValueError("queue exceeds capacity")


def momentum_update(state: MomentumEncoderState, query_params: ParamVector) -> MomentumEncoderState:
    """key <- m * key + (1 - m) * query, elementwise."""
    if query_params.values.shape != state.key_params.values.shape:
        raise ValueError("query parameters do not match key parameters")
    blended = state.momentum * state.key_params.values + (1.0 - state.momentum) * query_params.values
    return MomentumEncoderState(ParamVector(blended, state.key_params.layout),
                                state.momentum, state.queue, state.capacity)


def queue_push(queue: np.ndarray, keys: np.ndarray, capacity: int) -> np.ndarray:
    """FIFO append with eviction of the oldest entries beyond capacity."""
    if queue.size == 0:
        merged = np.asarray(keys, dtype=np.float64)
    else:
        merged = np.concatenate([queue, keys])
    if len(merged) > capacity:
        merged = merged[len(merged) - capacity:]
    return merged


def init_queue(dim: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Random unit vectors so the queue is usable before any uploads arrive."""
    q = rng.normal(size=(size, dim))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def local_train_moco(params: ParamVector, cfg: EncoderConfig, shard_images: np.ndarray,
                     blur: float, tau: float, sgd_cfg: SgdConfig, lr: float, epochs: int,
                     batch_size: int, key_momentum: float, queue: np.ndarray,
                     rng: np.random.Generator) -> tuple[ParamVector, list[float], np.ndarray]:
    """Queue-based variant: momentum key encoder, negatives from the shared queue.

    Returns (trained params, per-epoch losses, key vectors to upload).
    """
    if len(shard_images) == 0:
        raise ValueError("cannot train on an empty shard")
    if len(queue) == 0:
        raise ValueError("queue-based training needs a non-empty negative queue")
    current = params.copy()
    key_state = MomentumEncoderState(params.copy(), key_momentum, queue, capacity=max(len(queue), 1))
    optimizer = SgdMomentum(sgd_cfg, current.values.size)
    pi1, pi2 = AugmentationPolicy.pi1(), AugmentationPolicy.pi2()
    trace: list[float] = []
    uploaded = np.zeros((0, cfg.embed_dim))
    for _ in range(epochs):
        take = min(batch_size, len(shard_images))
        chosen = rng.choice(len(shard_images), size=take, replace=False)
        batch = blur_batch(shard_images[chosen], blur)
        view1 = np.stack([augment(img, pi1, rng) for img in batch])
        view2 = np.stack([augment(img, pi2, rng) for img in batch])
        tensors = param_tensors(current)
        anchors = forward_embeddings(tensors, cfg, view1)
        keys = encode(key_state.key_params, cfg, view2)  # key encoder, no gradient
        pos_exp = ad.exp(ad.rowsum(ad.mul(anchors, Tensor(keys))) * (1.0 / tau))
        queue_exp = ad.rowsum(ad.exp(ad.matmul(anchors, Tensor(queue.T)) * (1.0 / tau)))
        probs = ad.div(pos_exp, pos_exp + queue_exp)
        loss = ad.neg(ad.tsum(ad.log(probs))) * (1.0 / take)
        value, _ = ad.forward_backward(loss, list(tensors.values()))
        grads = grads_to_vector(tensors, current)
        current = optimizer.step(current, grads, lr)
        key_state = momentum_update(key_state, current)
        trace.append(value)
        uploaded = keys
    return current, trace, uploaded

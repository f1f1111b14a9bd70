"""Graph auto-encoder: GCN encoder, inner-product decoder, BCE loss and its exact gradients."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import tensorcore as tc
from .errors import DataError, ShapeError

BCE_EPS = 1e-12


@dataclass
class GaeModel:
    """Encoder weights; layer k maps ``layer_dims[k]`` to ``layer_dims[k+1]``.

    Hidden layers use ReLU, the last layer is linear.
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    seed: int | None = None

    def __post_init__(self):
        if len(self.weights) != len(self.layer_dims) - 1:
            raise ShapeError(f"{len(self.layer_dims)} layer dims need {len(self.layer_dims) - 1} weight matrices")
        for k, w in enumerate(self.weights):
            expected = (self.layer_dims[k], self.layer_dims[k + 1])
            if w.shape != expected:
                raise ShapeError(f"weight {k} has shape {w.shape}, expected {expected}")
            if not np.all(np.isfinite(w)):
                raise DataError(f"weight {k} has non-finite entries")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "GaeModel":
        return GaeModel(list(self.layer_dims), [w.copy() for w in self.weights], self.seed)

    def to_json(self) -> str:
        return json.dumps(
            {
                "layer_dims": self.layer_dims,
                "seed": self.seed,
                "weights": [[float(v) for v in w.ravel()] for w in self.weights],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "GaeModel":
        obj = json.loads(text)
        dims = [int(d) for d in obj["layer_dims"]]
        weights = [
            np.array(flat, dtype=np.float64).reshape(dims[k], dims[k + 1])
            for k, flat in enumerate(obj["weights"])
        ]
        return cls(dims, weights, obj.get("seed"))


@dataclass(frozen=True)
class LatentEmbedding:
    tickers: list[str]
    z: np.ndarray


@dataclass(frozen=True)
class EdgeBatch:
    """Vertex pairs ``(i, j)`` with ``i < j`` and binary link labels."""

    pairs: np.ndarray  # int64 (P, 2)
    labels: np.ndarray  # float64 (P,)

    def __post_init__(self):
        if self.pairs.ndim != 2 or self.pairs.shape[1] != 2:
            raise ShapeError(f"pairs must have shape (P, 2), got {self.pairs.shape}")
        if self.labels.shape != (self.pairs.shape[0],):
            raise ShapeError("one label per pair is required")
        if self.pairs.size and np.any(self.pairs[:, 0] >= self.pairs[:, 1]):
            raise DataError("pairs must satisfy i < j")
        if len({(int(i), int(j)) for i, j in self.pairs}) != len(self.pairs):
            raise DataError("duplicate pairs in batch")
        if not np.isin(self.labels, (0.0, 1.0)).all():
            raise DataError("labels must be 0 or 1")

    @classmethod
    def from_parts(cls, pos, neg, sort: bool = False) -> "EdgeBatch":
        """Positives then negatives, or with ``sort`` in (i, j) order.

        Sorting makes the pair order independent of the labels, which
        matters wherever ties are broken by position.
        """
        pos = np.asarray(pos, dtype=np.int64).reshape(-1, 2)
        neg = np.asarray(neg, dtype=np.int64).reshape(-1, 2)
        pairs = np.concatenate([pos, neg])
        labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
        if sort:
            order = np.lexsort((pairs[:, 1], pairs[:, 0]))
            pairs, labels = pairs[order], labels[order]
        return cls(pairs, labels)

    def __len__(self) -> int:
        return int(self.pairs.shape[0])


@dataclass
class ForwardCache:
    a_norm: np.ndarray
    inputs: list[np.ndarray] = field(default_factory=list)  # H^(k)
    propagated: list[np.ndarray] = field(default_factory=list)  # A* H^(k)
    pre: list[np.ndarray] = field(default_factory=list)  # A* H^(k) W^(k)
    weights: list[np.ndarray] = field(default_factory=list)
    z: np.ndarray | None = None


def init_weights(layer_dims, seed) -> GaeModel:
    """Glorot-uniform weights drawn from a seeded generator."""
    layer_dims = [int(d) for d in layer_dims]
    if len(layer_dims) < 2 or min(layer_dims) < 1:
        raise ShapeError(f"invalid layer dims {layer_dims}")
    rng = np.random.default_rng(seed)
    weights = []
    for fan_in, fan_out in zip(layer_dims, layer_dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
    return GaeModel(layer_dims, weights, seed)


def gcn_forward(a_norm: np.ndarray, x: np.ndarray, model: GaeModel):
    """Encode ``x`` over the normalized operator; returns ``(z, cache)``."""
    n = x.shape[0]
    if a_norm.shape != (n, n):
        raise ShapeError(f"operator shape {a_norm.shape} does not match {n} feature rows")
    if x.shape[1] != model.layer_dims[0]:
        raise ShapeError(f"features have {x.shape[1]} columns, model expects {model.layer_dims[0]}")
    cache = ForwardCache(a_norm=a_norm, weights=[w.copy() for w in model.weights])
    h = x
    for k, w in enumerate(model.weights):
        cache.inputs.append(h)
        ah = tc.matmul(a_norm, h)
        p = tc.matmul(ah, w)
        cache.propagated.append(ah)
        cache.pre.append(p)
        h = p if k == model.n_layers - 1 else tc.map_elementwise(p, "relu")
    cache.z = h
    return h, cache


def encode(a_norm, x, model: GaeModel, tickers=None) -> LatentEmbedding:
    z, _ = gcn_forward(a_norm, x, model)
    return LatentEmbedding(list(tickers) if tickers is not None else [str(i) for i in range(len(z))], z)


def decode_pair(z_i, z_j) -> float:
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    if z_i.shape != z_j.shape:
        raise ShapeError(f"embedding vectors differ in shape: {z_i.shape} vs {z_j.shape}")
    return float(tc.sigmoid(z_i @ z_j))


def pair_logits(z: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    return np.einsum("pd,pd->p", z[pairs[:, 0]], z[pairs[:, 1]])


def reconstruction_scores(z, batch: EdgeBatch) -> np.ndarray:
    """Decoder score for every pair in ``batch``, in batch order."""
    if isinstance(z, LatentEmbedding):
        z = z.z
    if len(batch) and batch.pairs.max() >= z.shape[0]:
        raise ShapeError("batch references a vertex outside the embedding")
    return tc.sigmoid(pair_logits(z, batch.pairs))


def default_pos_weight(labels) -> float:
    labels = np.asarray(labels)
    n_pos = float(np.sum(labels == 1))
    n_neg = float(np.sum(labels == 0))
    return n_neg / n_pos if n_pos > 0 else 1.0


def bce_loss(scores, labels, pos_weight: float | None = None) -> float:
    """Mean weighted binary cross entropy over the pairs."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.shape != y.shape:
        raise ShapeError(f"scores {s.shape} and labels {y.shape} differ")
    if s.size == 0:
        raise DataError("bce_loss of an empty batch")
    if pos_weight is None:
        pos_weight = default_pos_weight(y)
    s = np.clip(s, BCE_EPS, 1.0 - BCE_EPS)
    return float(np.mean(-(pos_weight * y * np.log(s) + (1.0 - y) * np.log(1.0 - s))))


def l2_penalty(model: GaeModel, l2: float) -> float:
    return 0.5 * l2 * sum(float(np.sum(w * w)) for w in model.weights)


def objective(a_norm, x, model: GaeModel, batch: EdgeBatch, l2: float = 0.0, pos_weight=None) -> float:
    """BCE over ``batch`` plus the ridge penalty (l2/2) * sum ||W||^2."""
    z, _ = gcn_forward(a_norm, x, model)
    data = bce_loss(reconstruction_scores(z, batch), batch.labels, pos_weight) if len(batch) else 0.0
    return data + l2_penalty(model, l2)


def backward(cache: ForwardCache, batch: EdgeBatch, model: GaeModel, l2: float = 0.0, pos_weight=None):
    """Gradients of :func:`objective` with respect to every weight matrix.

    An empty batch contributes no data gradient, leaving ``l2 * W``.
    """
    if cache.z is None or len(cache.weights) != model.n_layers or any(
        c.shape != w.shape or not np.array_equal(c, w) for c, w in zip(cache.weights, model.weights)
    ):
        raise DataError("forward cache does not belong to this model state")
    z = cache.z
    dz = np.zeros_like(z)
    if len(batch):
        y = batch.labels
        if pos_weight is None:
            pos_weight = default_pos_weight(y)
        s = tc.sigmoid(pair_logits(z, batch.pairs))
        # dL/dlogit for the clamped BCE; zero where the clamp is active
        g = np.where(y == 1.0, -pos_weight * (1.0 - s), s)
        g = np.where((s > BCE_EPS) & (s < 1.0 - BCE_EPS), g, 0.0) / len(batch)
        i, j = batch.pairs[:, 0], batch.pairs[:, 1]
        np.add.at(dz, i, g[:, None] * z[j])
        np.add.at(dz, j, g[:, None] * z[i])

    grads = [None] * model.n_layers
    dh = dz
    for k in range(model.n_layers - 1, -1, -1):
        if k == model.n_layers - 1:
            dp = dh
        else:
            dp = dh * tc.map_elementwise(cache.pre[k], "relu_grad")
        grads[k] = tc.matmul(cache.propagated[k].T, dp) + l2 * model.weights[k]
        if k > 0:
            dh = tc.matmul(cache.a_norm.T, tc.matmul(dp, model.weights[k].T))
    return grads

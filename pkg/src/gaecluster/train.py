"""Relation-prediction training: edge splits, Adam, early stopping, AP, cross-validation."""

from __future__ import annotations

import csv
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import DataError, ShapeError
from .gae import EdgeBatch, GaeModel, backward, bce_loss, gcn_forward, init_weights, reconstruction_scores
from .graphbuild import WeightedGraph, add_self_loops_and_normalize, subgraph

log = logging.getLogger(__name__)

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def derive_seed(*keys: int) -> int:
    """Stable 32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def _pair_set(pairs) -> set[tuple[int, int]]:
    return {(int(i), int(j)) for i, j in np.asarray(pairs, dtype=np.int64).reshape(-1, 2)}


def non_edges(g: WeightedGraph) -> np.ndarray:
    iu, ju = np.triu_indices(g.n, k=1)
    zero = g.adjacency[iu, ju] == 0
    return np.stack([iu[zero], ju[zero]], axis=1)


def _exclude(pool: np.ndarray, exclude) -> np.ndarray:
    banned = set()
    for pairs in exclude or ():
        banned |= _pair_set(pairs)
    if not banned:
        return pool
    keep = np.array([(int(i), int(j)) not in banned for i, j in pool], dtype=bool)
    return pool[keep]


def _draw(pool: np.ndarray, count: int, rng) -> np.ndarray:
    if count > len(pool):
        raise DataError(f"cannot sample {count} non-edges, only {len(pool)} available")
    if count == 0:
        return np.empty((0, 2), dtype=np.int64)
    return pool[rng.choice(len(pool), size=count, replace=False)]


def sample_negatives(g: WeightedGraph, count: int, exclude=(), seed=None) -> np.ndarray:
    """Uniform sample without replacement of non-adjacent pairs ``i < j``."""
    pool = _exclude(non_edges(g), exclude)
    return _draw(pool, int(count), _rng(seed))


@dataclass(frozen=True)
class EdgeSplit:
    """Positive edges cut from one seeded permutation, plus fixed negatives.

    ``permuted`` holds every edge in permutation order; test edges come
    first, then validation, then training.
    """

    n_nodes: int
    permuted: np.ndarray
    n_test: int
    n_val: int
    val_neg: np.ndarray
    test_neg: np.ndarray
    non_edges: np.ndarray
    seed: int | None = None

    @property
    def test_pos(self) -> np.ndarray:
        return self.permuted[: self.n_test]

    @property
    def val_pos(self) -> np.ndarray:
        return self.permuted[self.n_test : self.n_test + self.n_val]

    @property
    def train_pos(self) -> np.ndarray:
        return self.permuted[self.n_test + self.n_val :]

    @property
    def non_test_pos(self) -> np.ndarray:
        return self.permuted[self.n_test :]

    def with_validation(self, val_pos, val_neg, train_pos) -> "EdgeSplit":
        """Same test set, different validation/training positives."""
        permuted = np.concatenate([self.test_pos, val_pos, train_pos]).astype(np.int64)
        return replace(self, permuted=permuted, n_val=len(val_pos), val_neg=np.asarray(val_neg, dtype=np.int64))


def split_edges(g: WeightedGraph, test_frac: float = 0.20, val_frac: float = 0.16, seed=None) -> EdgeSplit:
    edges = g.edges()
    e = len(edges)
    if e < 10:
        raise DataError(f"need at least 10 edges to split, got {e}")
    rng = _rng(seed)
    permuted = edges[rng.permutation(e)]
    n_test = round_half_up(test_frac * e)
    n_val = round_half_up(val_frac * e)
    if n_test + n_val > e:
        raise DataError("test and validation fractions exceed the edge count")
    pool = non_edges(g)
    neg = _draw(pool, n_test + n_val, rng)
    return EdgeSplit(
        n_nodes=g.n,
        permuted=permuted,
        n_test=n_test,
        n_val=n_val,
        val_neg=neg[n_test:],
        test_neg=neg[:n_test],
        non_edges=pool,
        seed=seed if isinstance(seed, (int, np.integer)) else None,
    )


def training_operator(g: WeightedGraph, pairs) -> np.ndarray:
    """Normalized self-looped operator over only the given edges of ``g``."""
    return add_self_loops_and_normalize(subgraph(g, pairs)).adjacency


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, model: GaeModel) -> "AdamState":
        return cls([np.zeros_like(w) for w in model.weights], [np.zeros_like(w) for w in model.weights], 0)


def adam_step(model: GaeModel, grads, state: AdamState, lr: float,
              beta1: float = BETA1, beta2: float = BETA2, eps: float = ADAM_EPS):
    """One bias-corrected Adam update; returns ``(new_model, new_state)``."""
    if len(grads) != model.n_layers:
        raise ShapeError(f"got {len(grads)} gradients for {model.n_layers} layers")
    t = state.t + 1
    new_w, new_m, new_v = [], [], []
    for w, g, m, v in zip(model.weights, grads, state.m, state.v):
        if g.shape != w.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match weight {w.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_w.append(w - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return GaeModel(list(model.layer_dims), new_w, model.seed), AdamState(new_m, new_v, t)


@dataclass(frozen=True)
class TrainConfig:
    hidden_dims: tuple[int, ...] = (64, 16)
    out_dim: int = 8
    l2: float = 0.005
    lr: float = 0.01
    stop_window_n: int = 30
    stop_threshold_epochs: int = 80
    max_epochs: int = 300
    seed: int = 0
    pos_weight: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        if any(d <= 0 for d in self.hidden_dims) or self.out_dim <= 0:
            raise DataError("layer dimensions must be positive")
        if self.l2 < 0 or self.lr <= 0:
            raise DataError("l2 must be >= 0 and lr > 0")
        if self.stop_window_n <= 0 or self.stop_threshold_epochs < 0 or self.max_epochs < 0:
            raise DataError("early stopping parameters must be positive")

    def layer_dims(self, n_features: int) -> list[int]:
        return [n_features, *self.hidden_dims, self.out_dim]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


def full_grid(seed: int = 0) -> list[TrainConfig]:
    """The full architecture / regularization / learning-rate / window grid."""
    hidden = [(64,), (128,), (64, 16), (64, 32), (64, 64), (128, 16), (128, 32), (128, 64)]
    rates = [0.1, 0.01, 0.001, 0.005, 0.0075]
    return [
        TrainConfig(hidden_dims=h, out_dim=o, l2=l2, lr=lr, stop_window_n=n, seed=seed)
        for h, o, l2, lr, n in itertools.product(hidden, [8, 16, 32], rates, rates, [10, 20, 30])
    ]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float | None = None
    val_ap: float | None = None


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        if record.epoch != len(self.records) + 1:
            raise DataError(f"epoch {record.epoch} appended after {len(self.records)} records")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def val_losses(self) -> list[float]:
        return [r.val_loss for r in self.records]

    @property
    def train_losses(self) -> list[float]:
        return [r.train_loss for r in self.records]

    def to_csv(self, path) -> None:
        def fmt(v):
            return "" if v is None else repr(float(v))

        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "train_loss", "val_loss", "val_ap"])
            for r in self.records:
                writer.writerow([r.epoch, fmt(r.train_loss), fmt(r.val_loss), fmt(r.val_ap)])


def early_stop(history, n: int, threshold_epochs: int) -> bool:
    """Rolling-mean stopping rule on validation loss.

    Never fires before ``max(threshold_epochs, 2n)`` epochs; afterwards it
    fires once the mean of the last ``n`` losses is no lower than the mean
    of the ``n`` before them.
    """
    losses = history.val_losses if isinstance(history, TrainHistory) else list(history)
    if len(losses) < max(threshold_epochs, 2 * n):
        return False
    recent = np.mean(losses[-n:])
    before = np.mean(losses[-2 * n : -n])
    return bool(recent >= before)


def average_precision(scores, labels) -> float:
    """Area under the precision-recall step curve.

    Items are ranked by descending score; equal scores keep input order.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.shape != y.shape:
        raise ShapeError(f"scores {s.shape} and labels {y.shape} differ")
    n_pos = float(np.sum(y == 1))
    if n_pos == 0:
        raise DataError("average precision needs at least one positive label")
    ranked = y[np.argsort(-s, kind="stable")]
    hits = np.cumsum(ranked)
    precision = hits / np.arange(1, len(ranked) + 1)
    # correctly rounded sum, so the result does not depend on summation order
    return math.fsum(precision[ranked == 1].tolist()) / n_pos


def _fit(a_norm, x, train_pos, neg_pool, cfg: TrainConfig, epochs: int,
         val_batch: EdgeBatch | None = None, early_stopping: bool = True):
    model = init_weights(cfg.layer_dims(x.shape[1]), cfg.seed)
    state = AdamState.zeros_like(model)
    history = TrainHistory()
    train_pos = np.asarray(train_pos, dtype=np.int64).reshape(-1, 2)
    # a median-thresholded graph can have one non-edge fewer than needed
    n_neg = min(len(train_pos), len(neg_pool))
    if n_neg < len(train_pos):
        log.info("only %d non-edges for %d training positives", n_neg, len(train_pos))
    for epoch in range(1, epochs + 1):
        rng = np.random.default_rng([cfg.seed, epoch])
        batch = EdgeBatch.from_parts(train_pos, _draw(neg_pool, n_neg, rng))
        z, cache = gcn_forward(a_norm, x, model)
        train_loss = bce_loss(reconstruction_scores(z, batch), batch.labels, cfg.pos_weight)
        grads = backward(cache, batch, model, cfg.l2, cfg.pos_weight)
        model, state = adam_step(model, grads, state, cfg.lr)
        val_loss = val_ap = None
        if val_batch is not None and len(val_batch):
            z, _ = gcn_forward(a_norm, x, model)
            s = reconstruction_scores(z, val_batch)
            val_loss = bce_loss(s, val_batch.labels, cfg.pos_weight)
            val_ap = average_precision(s, val_batch.labels)
        history.append(EpochRecord(epoch, train_loss, val_loss, val_ap))
        if early_stopping and val_loss is not None and early_stop(history, cfg.stop_window_n, cfg.stop_threshold_epochs):
            break
    return model, history


def train_gae(a_norm, x, split: EdgeSplit, cfg: TrainConfig):
    """Train on ``split.train_pos`` with per-epoch resampled negatives.

    Validation pairs drive early stopping. Returns the final-epoch model
    and the per-epoch history.
    """
    x = np.asarray(x, dtype=np.float64)
    if a_norm.shape != (split.n_nodes, split.n_nodes) or x.shape[0] != split.n_nodes:
        raise ShapeError("operator, features and split disagree on the node count")
    pool = _exclude(split.non_edges, [split.val_neg, split.test_neg])
    val_batch = EdgeBatch.from_parts(split.val_pos, split.val_neg, sort=True) if split.n_val else None
    return _fit(a_norm, x, split.train_pos, pool, cfg, cfg.max_epochs, val_batch)


def final_train_and_test(a_norm, x, split: EdgeSplit, cfg: TrainConfig, epochs: int):
    """Train on every non-test positive for exactly ``epochs`` epochs.

    Returns ``(model, test_ap, history)``.
    """
    x = np.asarray(x, dtype=np.float64)
    pool = _exclude(split.non_edges, [split.test_neg])
    model, history = _fit(a_norm, x, split.non_test_pos, pool, cfg, int(epochs), None, early_stopping=False)
    test = EdgeBatch.from_parts(split.test_pos, split.test_neg, sort=True)
    z, _ = gcn_forward(a_norm, x, model)
    return model, average_precision(reconstruction_scores(z, test), test.labels), history


def cv_folds(split: EdgeSplit, k: int) -> list[np.ndarray]:
    """Contiguous blocks of the non-test positives, in permutation order."""
    return np.array_split(split.non_test_pos, k)


def _cv_task(args):
    ci, fi, cfg, a_norm, x, fold_split = args
    _, history = train_gae(a_norm, x, fold_split, cfg)
    return ci, fi, history.records[-1].val_ap, len(history)


def kfold_cv(a_norm, x, g: WeightedGraph, grid, k: int = 5, seed: int = 0,
             split: EdgeSplit | None = None, workers: int = 1):
    """k-fold cross-validation of ``grid`` on the non-test edges.

    With ``a_norm=None`` each fold propagates only over its own training
    edges. Returns ``(best_config, mean_epochs, report)``; ``report`` is a
    list of per-config dicts in grid order.
    """
    grid = list(grid)
    if not grid:
        raise DataError("empty hyperparameter grid")
    if k < 2:
        raise DataError(f"k-fold cross-validation needs k >= 2, got {k}")
    x = np.asarray(x, dtype=np.float64)
    if split is None:
        split = split_edges(g, seed=seed)
    folds = cv_folds(split, k)

    fold_splits, fold_ops = [], []
    for fi, val_pos in enumerate(folds):
        train_pos = np.concatenate([f for j, f in enumerate(folds) if j != fi])
        val_neg = sample_negatives(g, len(val_pos), exclude=[split.test_neg], seed=derive_seed(seed, 1, fi))
        fold_splits.append(split.with_validation(val_pos, val_neg, train_pos))
        fold_ops.append(training_operator(g, train_pos) if a_norm is None else a_norm)

    tasks = [
        (ci, fi, replace(cfg, seed=derive_seed(cfg.seed, ci, fi)), fold_ops[fi], x, fold_splits[fi])
        for ci, cfg in enumerate(grid)
        for fi in range(k)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cv_task, tasks))
    else:
        results = [_cv_task(t) for t in tasks]

    ap = np.zeros((len(grid), k))
    ep = np.zeros((len(grid), k), dtype=np.int64)
    for ci, fi, fold_ap, n_epochs in results:
        ap[ci, fi] = fold_ap
        ep[ci, fi] = n_epochs
    report = [
        {
            "config": cfg.to_dict(),
            "fold_ap": [float(v) for v in ap[ci]],
            "mean_ap": float(ap[ci].mean()),
            "fold_epochs": [int(v) for v in ep[ci]],
            "mean_epochs": float(ep[ci].mean()),
        }
        for ci, cfg in enumerate(grid)
    ]
    best = int(np.argmax(ap.mean(axis=1)))
    log.info("best config %d with mean AP %.4f", best, report[best]["mean_ap"])
    return grid[best], round_half_up(ep[best].mean()), report

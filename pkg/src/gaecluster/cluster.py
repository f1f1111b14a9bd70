"""k-means, spectral clustering, purity / NMI scoring and a PCA projection for plots."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DomainError, ShapeError
from .graphbuild import WeightedGraph
from .ingest import GroundTruthLabels
from .tensorcore import jacobi_eigh


@dataclass(frozen=True)
class Clustering:
    tickers: list[str]
    assignment: np.ndarray
    k: int
    inertia: float = float("nan")
    # inertia after each assignment step, one list per restart
    traces: list[list[float]] = field(default_factory=list)
    has_empty: bool = False

    def __post_init__(self):
        a = self.assignment
        if a.shape != (len(self.tickers),):
            raise ShapeError("one cluster id per ticker is required")
        if a.size and (a.min() < 0 or a.max() >= self.k):
            raise DataError(f"cluster ids must lie in [0, {self.k})")


def _relabel_by_first_appearance(assignment: np.ndarray) -> np.ndarray:
    mapping: dict[int, int] = {}
    for c in assignment:
        mapping.setdefault(int(c), len(mapping))
    return np.array([mapping[int(c)] for c in assignment], dtype=np.int64)


def _sq_dists(points, centroids):
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _plusplus(points, k, rng):
    n = len(points)
    chosen = [int(rng.integers(n))]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            rest = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(rest))
        chosen.append(idx)
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return points[chosen].copy()


def _lloyd(points, k, rng, max_iter):
    centroids = _plusplus(points, k, rng)
    labels = None
    trace = []
    for _ in range(max_iter):
        d2 = _sq_dists(points, centroids)
        new_labels = d2.argmin(axis=1)
        trace.append(float(d2[np.arange(len(points)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = labels == c
            if members.any():
                centroids[c] = points[members].mean(axis=0)
        counts = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            own = ((points - centroids[labels]) ** 2).sum(axis=1)
            taken = set()
            for c in empty:
                order = np.argsort(-own, kind="stable")
                idx = next(int(i) for i in order if int(i) not in taken)
                taken.add(idx)
                centroids[c] = points[idx]
    d2 = _sq_dists(points, centroids)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(len(points)), labels].sum())
    return labels, inertia, trace


def kmeans(points, k: int, seed=0, restarts: int = 20, max_iter: int = 300, tickers=None) -> Clustering:
    """Lloyd's algorithm with k-means++ seeding, best of ``restarts`` runs by inertia."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ShapeError(f"points must be 2-D, got shape {points.shape}")
    n = len(points)
    if not 1 <= k <= n:
        raise DataError(f"k-means needs 1 <= k <= N, got k={k}, N={n}")
    best = None
    traces = []
    for r in range(restarts):
        labels, inertia, trace = _lloyd(points, k, np.random.default_rng([int(seed), r]), max_iter)
        traces.append(trace)
        if best is None or inertia < best[1]:
            best = (labels, inertia)
    labels = _relabel_by_first_appearance(best[0])
    tickers = list(tickers) if tickers is not None else [str(i) for i in range(n)]
    used = len(np.unique(labels))
    return Clustering(tickers, labels, k, best[1], traces, has_empty=used < k)


def normalized_laplacian(a: np.ndarray) -> np.ndarray:
    """I - D^-1/2 A D^-1/2; isolated vertices get identity rows."""
    d = a.sum(axis=1)
    inv = np.zeros_like(d)
    np.divide(1.0, np.sqrt(d), out=inv, where=d > 0)
    return np.eye(len(a)) - a * inv[:, None] * inv[None, :]


def spectral_cluster(g: WeightedGraph, k: int, seed=0, restarts: int = 20) -> Clustering:
    """Normalized-Laplacian embedding with unit-length rows, then k-means."""
    a = g.adjacency
    if np.any(np.diag(a) != 0):
        raise DomainError("spectral clustering needs a zero-diagonal adjacency")
    if not 1 <= k <= g.n:
        raise DataError(f"spectral clustering needs 1 <= k <= N, got k={k}, N={g.n}")
    lap = normalized_laplacian(a)
    _, vecs = jacobi_eigh(lap)
    emb = vecs[:, :k]
    norms = np.linalg.norm(emb, axis=1)
    emb = np.divide(emb, norms[:, None], out=np.zeros_like(emb), where=norms[:, None] > 0)
    return kmeans(emb, k, seed=seed, restarts=restarts, tickers=g.tickers)


def _aligned(pred, truth):
    """Return integer-coded (pred, truth) label arrays over the same tickers."""
    if isinstance(pred, Clustering) and isinstance(truth, GroundTruthLabels):
        if set(pred.tickers) != set(truth.tickers) or len(pred.tickers) != len(truth.tickers):
            raise DataError("clustering and ground truth cover different tickers")
        index = {t: i for i, t in enumerate(truth.tickers)}
        t_labels = [truth.sectors[index[t]] for t in pred.tickers]
        p_labels = list(pred.assignment)
    else:
        p_labels = list(pred.assignment) if isinstance(pred, Clustering) else list(pred)
        t_labels = list(truth.sectors) if isinstance(truth, GroundTruthLabels) else list(truth)
        if len(p_labels) != len(t_labels):
            raise DataError("predicted and true label sequences differ in length")
    if not p_labels:
        raise DataError("cannot score an empty clustering")
    _, p = np.unique(np.asarray(p_labels, dtype=object).astype(str), return_inverse=True)
    _, t = np.unique(np.asarray(t_labels, dtype=object).astype(str), return_inverse=True)
    return p, t


def contingency(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def purity(pred, truth) -> float:
    """Share of items whose cluster's majority class is their own class."""
    p, t = _aligned(pred, truth)
    return float(contingency(p, t).max(axis=1).sum() / len(p))


def nmi(pred, truth) -> float:
    """Mutual information over the geometric mean of the two entropies (natural log).

    Zero when either partition has zero entropy.
    """
    p, t = _aligned(pred, truth)
    n = len(p)
    counts = contingency(p, t)
    table = counts / n
    # marginals from integer counts, so a single cluster has entropy exactly 0
    pp = counts.sum(axis=1) / n
    pt = counts.sum(axis=0) / n
    h_p = -float(np.sum(pp[pp > 0] * np.log(pp[pp > 0])))
    h_t = -float(np.sum(pt[pt > 0] * np.log(pt[pt > 0])))
    if h_p <= 0 or h_t <= 0:
        return 0.0
    nz = table > 0
    outer = np.outer(pp, pt)
    mi = float(np.sum(table[nz] * np.log(table[nz] / outer[nz])))
    return float(min(1.0, max(0.0, mi / math.sqrt(h_p * h_t))))


def pca2d(points) -> np.ndarray:
    """Project centered points onto their top two principal directions.

    Each component is signed so its largest-magnitude loading is positive.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or len(x) < 2:
        raise ShapeError(f"pca2d needs at least 2 points in a 2-D array, got {x.shape}")
    x = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(x, full_matrices=False)
    out = np.zeros((len(x), 2))
    tol = max(x.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    for c in range(min(2, vt.shape[0])):
        if s[c] <= tol:
            continue
        v = vt[c]
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        out[:, c] = x @ v
    return out


def save_clustering(c: Clustering, labels: GroundTruthLabels | None, path) -> None:
    sector = dict(zip(labels.tickers, labels.sectors)) if labels is not None else {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ticker", "cluster_id", "sector"])
        for t, cid in zip(c.tickers, c.assignment):
            writer.writerow([t, int(cid), sector.get(t, "")])


def save_coords(tickers, coords, c: Clustering, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ticker", "x", "y", "cluster_id"])
        for t, (x, y), cid in zip(tickers, coords, c.assignment):
            writer.writerow([t, repr(float(x)), repr(float(y)), int(cid)])


def sector_decomposition(c: Clustering, labels: GroundTruthLabels) -> dict:
    """Per cluster, how many members fall in each ground-truth sector."""
    sector = dict(zip(labels.tickers, labels.sectors))
    out = {}
    for cid in range(c.k):
        members = [t for t, a in zip(c.tickers, c.assignment) if a == cid]
        out[f"C{cid + 1}"] = dict(sorted(Counter(sector[t] for t in members).items()))
    return out


def save_sector_decomposition(c: Clustering, labels: GroundTruthLabels, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(sector_decomposition(c, labels), fh, indent=2, sort_keys=True)
        fh.write("\n")

"""Weighted company graph from news co-occurrence, and the GCN propagation operator."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError, ShapeError
from .ingest import CoocMatrix

RAW_COSINE = "raw_cosine"
THRESHOLDED = "thresholded"
SCALED = "scaled"
NORMALIZED = "self_looped_normalized"


@dataclass(frozen=True)
class WeightedGraph:
    tickers: list[str]
    adjacency: np.ndarray
    stage: str

    def __post_init__(self):
        a = self.adjacency
        n = len(self.tickers)
        if a.shape != (n, n):
            raise ShapeError(f"adjacency shape {a.shape} does not match {n} tickers")
        if not np.all(np.abs(a - a.T) < 1e-12):
            raise DataError("adjacency is not symmetric")
        if np.any(a < 0):
            raise DataError("adjacency has negative entries")
        if self.stage != NORMALIZED and np.any(np.diag(a) != 0):
            raise DataError(f"stage {self.stage!r} requires a zero diagonal")

    @property
    def n(self) -> int:
        return len(self.tickers)

    def edges(self) -> np.ndarray:
        """Upper-triangle nonzero pairs as an ``(E, 2)`` int array, row-major order."""
        i, j = np.nonzero(np.triu(self.adjacency, k=1))
        return np.stack([i, j], axis=1)

    def edge_count(self) -> int:
        return int(np.count_nonzero(np.triu(self.adjacency, k=1)))


def cosine_distance(u, v) -> float:
    """Cosine of the angle between ``u`` and ``v`` (named distance, measures similarity)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ShapeError(f"vectors differ in shape: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise DomainError("cosine distance undefined for a zero vector")
    return float(u @ v / (nu * nv))


def build_cooccurrence_graph(m: CoocMatrix) -> WeightedGraph:
    n = len(m.tickers)
    if n < 2:
        raise DataError(f"need at least 2 companies to build a graph, got {n}")
    rows = m.data.astype(np.float64)
    norms = np.linalg.norm(rows, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = rows / safe[:, None]
    w = unit @ unit.T
    # zero rows are isolated vertices
    w[norms == 0, :] = 0.0
    w[:, norms == 0] = 0.0
    np.fill_diagonal(w, 0.0)
    w = 0.5 * (w + w.T)
    return WeightedGraph(list(m.tickers), w, RAW_COSINE)


def threshold_median(g: WeightedGraph) -> WeightedGraph:
    """Keep exactly the heaviest ceil(N(N-1)/4) unordered pairs.

    Ranking covers every off-diagonal pair, zero-weight pairs included.
    Equal weights are resolved in favour of the lexicographically
    smaller (i, j).
    """
    if g.stage != RAW_COSINE:
        raise DomainError(f"threshold_median expects stage {RAW_COSINE!r}, got {g.stage!r}")
    n = g.n
    iu, ju = np.triu_indices(n, k=1)
    w = g.adjacency[iu, ju]
    keep = math.ceil(n * (n - 1) / 4)
    # lexsort: last key is primary; pair index order is already lexicographic
    order = np.lexsort((np.arange(w.size), -w))[:keep]
    out = np.zeros_like(g.adjacency)
    out[iu[order], ju[order]] = w[order]
    out = out + out.T
    return WeightedGraph(list(g.tickers), out, THRESHOLDED)


def scale_mean(g: WeightedGraph):
    """Divide by the mean nonzero edge weight; returns ``(scaled, mean_before)``."""
    if g.stage != THRESHOLDED:
        raise DomainError(f"scale_mean expects stage {THRESHOLDED!r}, got {g.stage!r}")
    upper = g.adjacency[np.triu_indices(g.n, k=1)]
    nz = upper[upper != 0]
    if nz.size == 0:
        raise DataError("cannot scale a graph with no edges")
    mean = float(nz.mean())
    return WeightedGraph(list(g.tickers), g.adjacency / mean, SCALED), mean


def symmetric_normalize(a: np.ndarray) -> np.ndarray:
    d = a.sum(axis=1)
    inv_sqrt = np.zeros_like(d)
    np.divide(1.0, np.sqrt(d), out=inv_sqrt, where=d > 0)
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def add_self_loops_and_normalize(g: WeightedGraph) -> WeightedGraph:
    """D^-1/2 (A + I) D^-1/2 with D the weighted degrees of A + I."""
    if g.stage == NORMALIZED or np.any(np.diag(g.adjacency) != 0):
        raise DomainError("add_self_loops_and_normalize needs a zero-diagonal graph")
    a_tilde = g.adjacency + np.eye(g.n)
    out = symmetric_normalize(a_tilde)
    out = 0.5 * (out + out.T)
    return WeightedGraph(list(g.tickers), out, NORMALIZED)


def subgraph(g: WeightedGraph, pairs) -> WeightedGraph:
    """Keep only the listed (i, j) pairs of ``g``, with their weights."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    out = np.zeros_like(g.adjacency)
    i, j = pairs[:, 0], pairs[:, 1]
    out[i, j] = g.adjacency[i, j]
    out[j, i] = g.adjacency[j, i]
    return WeightedGraph(list(g.tickers), out, g.stage)


def build_graph(m: CoocMatrix):
    """Full edge pipeline; returns ``(scaled_graph, stats)``."""
    raw = build_cooccurrence_graph(m)
    thresholded = threshold_median(raw)
    scaled, mean = scale_mean(thresholded)
    n = raw.n
    stats = {
        "nodes": n,
        "possible_edges": n * (n - 1) // 2,
        "edges_raw": raw.edge_count(),
        "edges_thresholded": thresholded.edge_count(),
        "mean_weight_before_scaling": mean,
    }
    return scaled, stats


def save_edge_list(g: WeightedGraph, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ticker_i", "ticker_j", "weight"])
        for i, j in g.edges():
            writer.writerow([g.tickers[i], g.tickers[j], repr(float(g.adjacency[i, j]))])


def load_edge_list(path, tickers, stage: str = SCALED) -> WeightedGraph:
    """Rebuild a graph over ``tickers`` (vertices absent from the file stay isolated)."""
    index = {t: i for i, t in enumerate(tickers)}
    a = np.zeros((len(tickers), len(tickers)))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            try:
                i, j = index[rec["ticker_i"]], index[rec["ticker_j"]]
            except KeyError as exc:
                raise DataError(f"{path}: unknown ticker {exc.args[0]!r}") from None
            if i == j:
                raise DataError(f"{path}: self-loop on {rec['ticker_i']}")
            a[i, j] = a[j, i] = float(rec["weight"])
    return WeightedGraph(list(tickers), a, stage)

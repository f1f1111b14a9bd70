"""Vertex features from close prices: daily linear returns, clipping, per-day z-scores."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import tensorcore as tc
from .errors import DomainError
from .ingest import PricePanel

RAW = "raw_pvclcl"
WINSORIZED = "winsorized"
NORMALIZED = "normalized"


@dataclass(frozen=True)
class FeatureMatrix:
    tickers: list[str]
    data: np.ndarray
    stage: str

    @property
    def days(self) -> int:
        return int(self.data.shape[1])


def pvclcl(panel: PricePanel) -> FeatureMatrix:
    """Previous-close-to-close linear return for every ticker and day."""
    if not panel.present.all():
        raise DomainError("price panel must be imputed before computing returns")
    if len(panel.dates) < 2:
        raise DomainError("need at least two dates to compute returns")
    c = panel.close
    if np.any(c == 0):
        raise DomainError("zero close price")
    x = (c[:, 1:] - c[:, :-1]) / c[:, :-1]
    return FeatureMatrix(list(panel.tickers), x, RAW)


def winsorize(x: FeatureMatrix, lo: float = -0.1, hi: float = 0.1):
    """Hard-clip entries to ``[lo, hi]``; returns ``(clipped, n_clipped)``."""
    if not lo < hi:
        raise DomainError(f"winsorization needs lo < hi, got [{lo}, {hi}]")
    if x.stage != RAW:
        raise DomainError(f"winsorize expects stage {RAW!r}, got {x.stage!r}")
    n_clipped = int(np.count_nonzero((x.data < lo) | (x.data > hi)))
    return FeatureMatrix(list(x.tickers), np.clip(x.data, lo, hi), WINSORIZED), n_clipped


def daily_znorm(x: FeatureMatrix) -> FeatureMatrix:
    """Standardize each day (column) across companies.

    Uses the population standard deviation. A day with zero spread maps
    to a zero column.
    """
    if x.stage != WINSORIZED:
        raise DomainError(f"daily_znorm expects stage {WINSORIZED!r}, got {x.stage!r}")
    mu = tc.reduce(x.data, "column_mean")
    sigma = tc.reduce(x.data, "column_std")
    centered = x.data - mu
    flat = sigma <= 1e-15 * np.maximum(1.0, np.abs(mu))
    out = np.divide(centered, sigma, out=np.zeros_like(centered), where=~flat)
    return FeatureMatrix(list(x.tickers), out, NORMALIZED)


def build_features(panel: PricePanel, lo: float = -0.1, hi: float = 0.1):
    """Run all three stages; returns ``(raw, winsorized, normalized, n_clipped)``."""
    raw = pvclcl(panel)
    clipped, n_clipped = winsorize(raw, lo, hi)
    return raw, clipped, daily_znorm(clipped), n_clipped


def save_features(x: FeatureMatrix, path) -> None:
    """Write rows = tickers, columns = day index, floats in round-trip form."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ticker", *range(x.days)])
        for t, row in zip(x.tickers, x.data):
            writer.writerow([t, *(repr(float(v)) for v in row)])


def load_features(path, stage: str = NORMALIZED) -> FeatureMatrix:
    tickers, rows = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for rec in reader:
            tickers.append(rec[0])
            rows.append([float(v) for v in rec[1:]])
    return FeatureMatrix(tickers, np.array(rows, dtype=np.float64).reshape(len(tickers), -1), stage)

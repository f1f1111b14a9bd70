"""Loaders for the co-occurrence matrix, close prices and sector labels."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ImputationError, ParseError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoocMatrix:
    """Binary company-by-article mention matrix."""

    tickers: list[str]
    data: np.ndarray  # int8, shape (len(tickers), articles)

    def __post_init__(self):
        if not self.tickers:
            raise DataError("co-occurrence matrix has no tickers")
        if len(set(self.tickers)) != len(self.tickers):
            raise DataError("co-occurrence tickers are not unique")
        if self.data.shape[0] != len(self.tickers):
            raise DataError("co-occurrence row count does not match tickers")
        if not np.isin(self.data, (0, 1)).all():
            raise DataError("co-occurrence matrix is not binary")

    @property
    def articles(self) -> int:
        return int(self.data.shape[1])

    def restrict(self, tickers: list[str]) -> "CoocMatrix":
        index = {t: i for i, t in enumerate(self.tickers)}
        rows = [index[t] for t in tickers]
        return CoocMatrix(list(tickers), self.data[rows])


@dataclass(frozen=True)
class PricePanel:
    """Ticker-by-date close prices with a presence mask."""

    tickers: list[str]
    dates: list[str]
    close: np.ndarray  # float64 (tickers, dates); NaN where absent
    present: np.ndarray  # bool, same shape
    dropped: list[str] = field(default_factory=list)

    def __post_init__(self):
        if any(a >= b for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("price dates are not strictly increasing")
        shape = (len(self.tickers), len(self.dates))
        if self.close.shape != shape or self.present.shape != shape:
            raise DataError(f"price panel arrays do not have shape {shape}")
        if np.any(self.close[self.present] <= 0):
            raise DataError("close prices must be positive")

    def restrict(self, tickers: list[str]) -> "PricePanel":
        index = {t: i for i, t in enumerate(self.tickers)}
        rows = [index[t] for t in tickers]
        return PricePanel(list(tickers), list(self.dates), self.close[rows], self.present[rows], list(self.dropped))


@dataclass(frozen=True)
class GroundTruthLabels:
    tickers: list[str]
    sectors: list[str]

    def __post_init__(self):
        if not self.tickers:
            raise DataError("label set is empty")
        if len(set(self.tickers)) != len(self.tickers):
            raise DataError("a ticker is labeled more than once")
        if len(self.sectors) != len(self.tickers):
            raise DataError("tickers and sectors differ in length")

    def restrict(self, tickers: list[str]) -> "GroundTruthLabels":
        index = {t: i for i, t in enumerate(self.tickers)}
        return GroundTruthLabels(list(tickers), [self.sectors[index[t]] for t in tickers])


def load_cooccurrence(path) -> CoocMatrix:
    """Parse a headerless CSV whose rows are ``ticker,0/1,0/1,...``."""
    tickers, rows = [], []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            ticker, values = record[0].strip(), record[1:]
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ParseError(f"{path}: row {lineno} has {len(values)} entries, expected {width}")
            row = np.empty(len(values), dtype=np.int8)
            for col, v in enumerate(values, start=1):
                v = v.strip()
                if v not in ("0", "1"):
                    raise ParseError(f"{path}: non-binary entry {v!r} at row {lineno}, column {col}")
                row[col - 1] = int(v)
            tickers.append(ticker)
            rows.append(row)
    if not rows:
        raise ParseError(f"{path}: no rows")
    if len(set(tickers)) != len(tickers):
        raise ParseError(f"{path}: duplicate ticker rows")
    return CoocMatrix(tickers, np.vstack(rows))


def save_cooccurrence(cooc: CoocMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for ticker, row in zip(cooc.tickers, cooc.data):
            writer.writerow([ticker, *(int(v) for v in row)])


def load_prices(paths, universe=None) -> PricePanel:
    """Merge ``ticker,date,close`` files into one panel.

    Tickers in ``universe`` that never appear are dropped and listed in
    ``PricePanel.dropped``. Absent (ticker, date) cells are masked, not
    removed. With ``universe=None`` every ticker found is kept.
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    records: dict[tuple[str, str], float] = {}
    for path in paths:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["ticker", "date", "close"]:
                raise ParseError(f"{path}: expected header 'ticker,date,close'")
            for lineno, rec in enumerate(reader, start=2):
                ticker, date = rec["ticker"].strip(), rec["date"].strip()
                try:
                    close = float(rec["close"])
                except (TypeError, ValueError):
                    raise ParseError(f"{path}: bad close value {rec['close']!r} on line {lineno}") from None
                if not np.isfinite(close) or close <= 0:
                    raise DataError(f"{path}: close must be positive, got {close} for {ticker} on {date}")
                key = (ticker, date)
                if key in records and records[key] != close:
                    raise DataError(f"conflicting close prices for {ticker} on {date}")
                records[key] = close

    found = sorted({t for t, _ in records})
    if universe is None:
        tickers, dropped = found, []
    else:
        found_set = set(found)
        tickers = [t for t in universe if t in found_set]
        dropped = [t for t in universe if t not in found_set]
        if dropped:
            log.warning("no price data for %d tickers: %s", len(dropped), ", ".join(dropped))
    keep = set(tickers)
    dates = sorted({d for t, d in records if t in keep})
    t_index = {t: i for i, t in enumerate(tickers)}
    d_index = {d: j for j, d in enumerate(dates)}
    close = np.full((len(tickers), len(dates)), np.nan)
    for (t, d), c in records.items():
        if t in keep:
            close[t_index[t], d_index[d]] = c
    return PricePanel(tickers, dates, close, ~np.isnan(close), dropped)


def save_prices(panel: PricePanel, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ticker", "date", "close"])
        for i, t in enumerate(panel.tickers):
            for j, d in enumerate(panel.dates):
                if panel.present[i, j]:
                    writer.writerow([t, d, repr(float(panel.close[i, j]))])


def impute_missing(panel: PricePanel) -> PricePanel:
    """Fill interior gaps by linear interpolation between the bracketing closes.

    A single missing day becomes the mean of its neighbours. Gaps touching
    the first or last date are refused rather than extrapolated.
    """
    close = panel.close.copy()
    for i, ticker in enumerate(panel.tickers):
        mask = panel.present[i]
        if mask.all():
            continue
        if mask.sum() < 2:
            raise ImputationError(f"{ticker}: fewer than two present prices")
        if not mask[0]:
            raise ImputationError(f"{ticker}: missing close at boundary date {panel.dates[0]}")
        if not mask[-1]:
            raise ImputationError(f"{ticker}: missing close at boundary date {panel.dates[-1]}")
        known = np.flatnonzero(mask)
        gaps = np.flatnonzero(~mask)
        close[i, gaps] = np.interp(gaps, known, close[i, known])
    return PricePanel(list(panel.tickers), list(panel.dates), close, np.ones_like(panel.present), list(panel.dropped))


def load_labels(path) -> GroundTruthLabels:
    tickers, sectors = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["ticker", "sector"]:
            raise ParseError(f"{path}: expected header 'ticker,sector'")
        for rec in reader:
            tickers.append(rec["ticker"].strip())
            sectors.append(rec["sector"].strip())
    if not tickers:
        raise ParseError(f"{path}: no rows")
    return GroundTruthLabels(tickers, sectors)


def save_labels(labels: GroundTruthLabels, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ticker", "sector"])
        writer.writerows(zip(labels.tickers, labels.sectors))


def align_universe(cooc: CoocMatrix, panel: PricePanel, labels: GroundTruthLabels):
    """Restrict all three inputs to their common tickers, sorted ascending."""
    common = sorted(set(cooc.tickers) & set(panel.tickers) & set(labels.tickers))
    if not common:
        raise DataError("co-occurrence, prices and labels share no tickers")
    return cooc.restrict(common), panel.restrict(common), labels.restrict(common)

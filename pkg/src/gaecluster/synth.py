"""Seeded planted-partition co-occurrence and price data."""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .ingest import CoocMatrix, GroundTruthLabels, PricePanel, save_cooccurrence, save_labels, save_prices

log = logging.getLogger(__name__)

LOG_RETURN_CLIP = 0.5
START_PRICE = 100.0


@dataclass(frozen=True)
class SynthConfig:
    n_companies: int = 72
    n_articles: int = 2000
    n_days: int = 251
    k_planted: int = 9
    p_in: float = 0.3
    p_out: float = 0.02
    return_corr: float = 0.7
    noise_sigma: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.n_companies < 2 or self.n_articles < 1 or self.n_days < 2:
            raise DataError("need >= 2 companies, >= 1 article and >= 2 days")
        if not 1 <= self.k_planted <= self.n_companies:
            raise DataError("k_planted must lie in [1, n_companies]")
        # p_in == p_out is accepted and flagged as no-signal when returns are uncorrelated too
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise DataError("mention probabilities need 0 <= p_out <= p_in <= 1")
        if not 0.0 <= self.return_corr < 1.0:
            raise DataError("return_corr must lie in [0, 1)")
        if self.noise_sigma < 0:
            raise DataError("noise_sigma must be non-negative")

    @property
    def no_signal(self) -> bool:
        return self.p_in == self.p_out and self.return_corr == 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def group_sizes(n: int, k: int) -> list[int]:
    """Sizes as equal as possible, the remainder going to the first groups."""
    base, extra = divmod(n, k)
    return [base + (1 if g < extra else 0) for g in range(k)]


def trading_days(n: int, start=dt.date(2007, 1, 2)) -> list[str]:
    days, d = [], start
    while len(days) < n:
        if d.weekday() < 5:
            days.append(d.isoformat())
        d += dt.timedelta(days=1)
    return days


def generate(cfg: SynthConfig):
    """Return ``(cooc, prices, labels)`` with planted groups as labels."""
    if cfg.no_signal:
        log.warning("synthetic config carries no signal (p_in == p_out, return_corr == 0)")
    rng = np.random.default_rng(cfg.seed)
    sizes = group_sizes(cfg.n_companies, cfg.k_planted)
    group = np.repeat(np.arange(cfg.k_planted), sizes)
    width = len(str(cfg.n_companies - 1))
    tickers = [f"C{i:0{width}d}" for i in range(cfg.n_companies)]
    sectors = [f"G{g + 1}" for g in group]

    home = rng.integers(cfg.k_planted, size=cfg.n_articles)
    prob = np.where(group[:, None] == home[None, :], cfg.p_in, cfg.p_out)
    mentions = (rng.random((cfg.n_companies, cfg.n_articles)) < prob).astype(np.int8)

    n_ret = cfg.n_days - 1
    factor = rng.standard_normal((cfg.k_planted, n_ret))
    idio = rng.standard_normal((cfg.n_companies, n_ret))
    log_ret = cfg.noise_sigma * (np.sqrt(cfg.return_corr) * factor[group] + np.sqrt(1.0 - cfg.return_corr) * idio)
    log_ret = np.clip(log_ret, -LOG_RETURN_CLIP, LOG_RETURN_CLIP)
    close = START_PRICE * np.exp(np.concatenate([np.zeros((cfg.n_companies, 1)), np.cumsum(log_ret, axis=1)], axis=1))

    panel = PricePanel(tickers, trading_days(cfg.n_days), close, np.ones_like(close, dtype=bool))
    return CoocMatrix(tickers, mentions), panel, GroundTruthLabels(tickers, sectors)


def write_dataset(cfg: SynthConfig, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cooc, panel, labels = generate(cfg)
    paths = {"cooc": out / "cooc.csv", "prices": out / "prices.csv", "labels": out / "labels.csv"}
    save_cooccurrence(cooc, paths["cooc"])
    save_prices(panel, paths["prices"])
    save_labels(labels, paths["labels"])
    return paths

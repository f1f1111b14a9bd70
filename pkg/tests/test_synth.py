import math

import numpy as np
import pytest

from gaecluster import cluster as cl
from gaecluster.errors import DataError
from gaecluster.pipeline import RunConfig, build, train_eval
from gaecluster.synth import SynthConfig, generate, group_sizes, trading_days, write_dataset


def test_deterministic():
    a, b = generate(SynthConfig(seed=4)), generate(SynthConfig(seed=4))
    assert np.array_equal(a[0].data, b[0].data)
    assert np.array_equal(a[1].close, b[1].close)
    assert a[2].sectors == b[2].sectors
    assert not np.array_equal(a[0].data, generate(SynthConfig(seed=5))[0].data)


def test_shapes_and_ranges():
    cooc, panel, labels = generate(SynthConfig())
    assert cooc.data.shape == (72, 2000)
    assert set(np.unique(cooc.data)) <= {0, 1}
    assert panel.close.shape == (72, 251)
    assert np.all(panel.close > 0)
    assert np.all(panel.close[:, 0] == 100.0)
    assert cooc.tickers[0] == "C00" and cooc.tickers[-1] == "C71"
    assert panel.dates[0] == "2007-01-02"


def test_group_sizes():
    assert group_sizes(72, 9) == [8] * 9
    assert group_sizes(10, 3) == [4, 3, 3]
    _, _, labels = generate(SynthConfig())
    assert sorted(np.unique(labels.sectors, return_counts=True)[1]) == [8] * 9


def test_trading_days_skip_weekends():
    days = trading_days(5)
    assert days == ["2007-01-02", "2007-01-03", "2007-01-04", "2007-01-05", "2007-01-08"]


def test_mention_rate_within_binomial_bounds():
    cfg = SynthConfig(n_articles=5000, seed=1)
    rng = np.random.default_rng(cfg.seed)
    home = rng.integers(cfg.k_planted, size=cfg.n_articles)
    cooc, _, labels = generate(cfg)
    group = np.array([int(s[1:]) - 1 for s in labels.sectors])
    in_group = group[:, None] == home[None, :]
    for mask, p in ((in_group, cfg.p_in), (~in_group, cfg.p_out)):
        trials = int(mask.sum())
        rate = cooc.data[mask].mean()
        assert abs(rate - p) < 3 * math.sqrt(p * (1 - p) / trials)


def test_config_validation():
    with pytest.raises(DataError):
        SynthConfig(p_in=0.1, p_out=0.2)
    with pytest.raises(DataError):
        SynthConfig(return_corr=1.0)
    assert SynthConfig(p_in=0.1, p_out=0.1, return_corr=0.0).no_signal
    assert not SynthConfig().no_signal


def test_write_dataset_round_trip(tmp_path):
    from gaecluster.ingest import load_cooccurrence, load_labels, load_prices

    cfg = SynthConfig(n_companies=12, n_articles=50, n_days=20, k_planted=3)
    paths = write_dataset(cfg, tmp_path)
    cooc, panel, labels = generate(cfg)
    assert np.array_equal(load_cooccurrence(paths["cooc"]).data, cooc.data)
    assert np.array_equal(load_prices([paths["prices"]]).close, panel.close)
    assert load_labels(paths["labels"]).sectors == labels.sectors
    first = {k: p.read_bytes() for k, p in paths.items()}
    write_dataset(cfg, tmp_path)
    assert {k: p.read_bytes() for k, p in paths.items()} == first


@pytest.mark.slow
def test_strong_signal_recovered():
    data = generate(SynthConfig(p_in=1.0, p_out=0.0, return_corr=0.9, noise_sigma=0.01, seed=2))
    built, _, _ = build(*data)
    metrics, _ = train_eval(built, RunConfig(), seed=0)
    assert metrics["gae"]["purity"] >= 0.9


@pytest.mark.slow
def test_no_signal_matches_permutation_null():
    data = generate(SynthConfig(p_in=0.1, p_out=0.1, return_corr=0.0, seed=3))
    built, _, _ = build(*data)
    _, art = train_eval(built, RunConfig(), seed=0)
    observed = cl.purity(art["clustering"], built.labels)
    rng = np.random.default_rng(0)
    assignment = art["clustering"].assignment
    null = [cl.purity(assignment, rng.permutation(built.labels.sectors)) for _ in range(500)]
    assert np.quantile(null, 0.005) <= observed <= np.quantile(null, 0.995)

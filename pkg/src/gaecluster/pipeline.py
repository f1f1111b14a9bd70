"""End-to-end runs: build the featured graph, cross-validate, train, cluster, ablate."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import cluster as cl
from .errors import ConfigError, DataError
from .features import FeatureMatrix, build_features, load_features, save_features
from .gae import gcn_forward
from .graphbuild import WeightedGraph, add_self_loops_and_normalize, build_graph, load_edge_list, save_edge_list
from .ingest import (
    GroundTruthLabels,
    align_universe,
    impute_missing,
    load_cooccurrence,
    load_labels,
    load_prices,
    save_labels,
)
from .synth import SynthConfig
from .train import (
    TrainConfig,
    derive_seed,
    final_train_and_test,
    kfold_cv,
    full_grid,
    split_edges,
    training_operator,
)

log = logging.getLogger(__name__)

MODES = ("full", "edges_only", "features_only")
NMI_CONVENTION = "geometric"


@dataclass
class RunConfig:
    cooc: str | None = None
    prices: list[str] = field(default_factory=list)
    labels: str | None = None
    out_dir: str = "out"
    winsor_lo: float = -0.1
    winsor_hi: float = 0.1
    test_frac: float = 0.20
    val_frac: float = 0.16
    train: TrainConfig = field(default_factory=TrainConfig)
    grid: list[TrainConfig] | str | None = None
    epochs: int = 82
    cv_folds: int = 5
    k_clusters: int = 9
    kmeans_restarts: int = 20
    mode: str = "full"
    seed: int = 0
    workers: int = 1
    synth: SynthConfig = field(default_factory=SynthConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if isinstance(self.prices, str):
            self.prices = [self.prices]

    def resolved_grid(self) -> list[TrainConfig]:
        if self.grid is None:
            return [self.train]
        if self.grid == "full":
            return full_grid(self.train.seed)
        if isinstance(self.grid, str):
            raise ConfigError(f"grid must be a list of configs or 'full', got {self.grid!r}")
        return list(self.grid)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "train" in d:
                d["train"] = TrainConfig.from_dict(d["train"])
            if isinstance(d.get("grid"), list):
                d["grid"] = [TrainConfig.from_dict(g) for g in d["grid"]]
            if "synth" in d:
                d["synth"] = SynthConfig(**d["synth"])
            return cls(**d)
        except (TypeError, DataError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(obj)


@dataclass
class BuiltGraph:
    graph: WeightedGraph  # scaled A_F
    features: FeatureMatrix  # normalized X_F
    labels: GroundTruthLabels


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def build(cooc, panel, labels, winsor_lo=-0.1, winsor_hi=0.1):
    """Align inputs and derive the scaled graph plus all feature stages.

    Returns ``(built, stages, stats)``.
    """
    n_cooc, n_prices, n_labels = len(cooc.tickers), len(panel.tickers), len(labels.tickers)
    missing = int((~panel.present).sum())
    cooc, panel, labels = align_universe(cooc, panel, labels)
    panel = impute_missing(panel)
    raw, clipped, normalized, n_clipped = build_features(panel, winsor_lo, winsor_hi)
    graph, gstats = build_graph(cooc)
    stats = {
        "tickers_cooccurrence": n_cooc,
        "tickers_prices": n_prices,
        "tickers_labels": n_labels,
        "tickers_dropped_no_prices": list(panel.dropped),
        "articles": cooc.articles,
        "dates": len(panel.dates),
        "feature_days": normalized.days,
        "missing_prices_imputed": missing,
        "clipped_entries": n_clipped,
        "feature_entries": int(raw.data.size),
        "sectors": len(set(labels.sectors)),
        **gstats,
    }
    stages = {"raw_pvclcl": raw, "winsorized": clipped, "normalized": normalized}
    return BuiltGraph(graph, normalized, labels), stages, stats


def cmd_build(cfg: RunConfig) -> dict:
    for name, p in [("cooc", cfg.cooc), ("labels", cfg.labels)] + [("prices", p) for p in cfg.prices]:
        if not p:
            raise FileNotFoundError(f"no {name} path configured")
        if not Path(p).is_file():
            raise FileNotFoundError(f"{name} file not found: {p}")
    cooc = load_cooccurrence(cfg.cooc)
    panel = load_prices(cfg.prices, universe=cooc.tickers)
    labels = load_labels(cfg.labels)
    built, stages, stats = build(cooc, panel, labels, cfg.winsor_lo, cfg.winsor_hi)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_edge_list(built.graph, out / "edges.csv")
    for name, fm in stages.items():
        save_features(fm, out / f"features_{name}.csv")
    save_labels(built.labels, out / "labels.csv")
    manifest = {
        "counts": stats,
        "winsor_window": [cfg.winsor_lo, cfg.winsor_hi],
        "tickers": built.graph.tickers,
    }
    write_json(manifest, out / "manifest.json")
    log.info("built graph: %d nodes, %d -> %d edges", stats["nodes"], stats["edges_raw"], stats["edges_thresholded"])
    return manifest


def load_built(out_dir) -> BuiltGraph:
    out = Path(out_dir)
    for name in ("features_normalized.csv", "edges.csv", "labels.csv"):
        if not (out / name).is_file():
            raise FileNotFoundError(f"built artifact missing: {out / name} (run 'build' first)")
    features = load_features(out / "features_normalized.csv")
    graph = load_edge_list(out / "edges.csv", features.tickers)
    labels = load_labels(out / "labels.csv").restrict(features.tickers)
    return BuiltGraph(graph, features, labels)


def randomize_edges(g: WeightedGraph, seed) -> WeightedGraph:
    """Same edge count and weight multiset on uniformly drawn vertex pairs.

    Pairs are distinct and never self-loops.
    """
    rng = np.random.default_rng(seed)
    edges = g.edges()
    weights = g.adjacency[edges[:, 0], edges[:, 1]]
    iu, ju = np.triu_indices(g.n, k=1)
    chosen = rng.choice(len(iu), size=len(edges), replace=False)
    weights = rng.permutation(weights)
    a = np.zeros_like(g.adjacency)
    a[iu[chosen], ju[chosen]] = weights
    return WeightedGraph(list(g.tickers), a + a.T, g.stage)


def mode_inputs(built: BuiltGraph, mode: str, seed: int):
    """Graph and feature matrix the auto-encoder sees under an ablation mode."""
    if mode == "full":
        return built.graph, built.features.data
    if mode == "edges_only":
        return built.graph, np.eye(built.graph.n)
    if mode == "features_only":
        return randomize_edges(built.graph, derive_seed(seed, 7)), built.features.data
    raise DataError(f"unknown mode {mode!r}")


def _scores(c: cl.Clustering, labels: GroundTruthLabels) -> dict:
    return {"purity": cl.purity(c, labels), "nmi": cl.nmi(c, labels)}


def train_eval(built: BuiltGraph, cfg: RunConfig, train_cfg: TrainConfig | None = None,
               epochs: int | None = None, mode: str | None = None, seed: int | None = None):
    """Final training, test AP, then latent / spectral / feature clusterings.

    Returns ``(metrics, artifacts)``.
    """
    mode = mode or cfg.mode
    seed = cfg.seed if seed is None else seed
    epochs = cfg.epochs if epochs is None else epochs
    train_cfg = replace(train_cfg or cfg.train, seed=seed)
    g, x = mode_inputs(built, mode, seed)

    split = split_edges(g, cfg.test_frac, cfg.val_frac, seed=seed)
    op_train = training_operator(g, split.non_test_pos)
    model, test_ap, history = final_train_and_test(op_train, x, split, train_cfg, epochs)
    op_full = add_self_loops_and_normalize(g).adjacency
    z, _ = gcn_forward(op_full, x, model)

    k = cfg.k_clusters
    tickers = built.graph.tickers
    latent = cl.kmeans(z, k, seed=seed, restarts=cfg.kmeans_restarts, tickers=tickers)
    spectral = cl.spectral_cluster(built.graph, k, seed=seed, restarts=cfg.kmeans_restarts)
    feat = cl.kmeans(built.features.data, k, seed=seed, restarts=cfg.kmeans_restarts, tickers=tickers)

    metrics = {
        "mode": mode,
        "seed": seed,
        "epochs": int(epochs),
        "train_config": train_cfg.to_dict(),
        "test_ap": test_ap,
        "nmi_convention": NMI_CONVENTION,
        "k": k,
        "gae": _scores(latent, built.labels),
        "spectral": _scores(spectral, built.labels),
        "features_kmeans": _scores(feat, built.labels),
    }
    artifacts = {
        "model": model,
        "history": history,
        "latent": z,
        "clustering": latent,
        "coords": cl.pca2d(z),
        "spectral": spectral,
        "features_kmeans": feat,
    }
    return metrics, artifacts


def cmd_cv(cfg: RunConfig) -> dict:
    built = load_built(cfg.out_dir)
    grid = cfg.resolved_grid()
    split = split_edges(built.graph, cfg.test_frac, cfg.val_frac, seed=cfg.seed)
    best, mean_epochs, report = kfold_cv(
        None, built.features.data, built.graph, grid, k=cfg.cv_folds, seed=cfg.seed, split=split, workers=cfg.workers
    )
    out = Path(cfg.out_dir)
    write_json(report, out / "cv_report.json")
    choice = {"config": best.to_dict(), "mean_epochs": mean_epochs}
    write_json(choice, out / "cv_choice.json")
    return choice


def cmd_train_eval(cfg: RunConfig, use_cv_choice: bool = True) -> dict:
    built = load_built(cfg.out_dir)
    out = Path(cfg.out_dir)
    train_cfg, epochs = cfg.train, cfg.epochs
    choice_path = out / "cv_choice.json"
    if use_cv_choice and choice_path.is_file():
        with open(choice_path, encoding="utf-8") as fh:
            choice = json.load(fh)
        train_cfg = TrainConfig.from_dict(choice["config"])
        epochs = int(choice["mean_epochs"])
        log.info("using cross-validated config with %d epochs", epochs)
    metrics, art = train_eval(built, cfg, train_cfg, epochs)

    mode_dir = out / cfg.mode
    mode_dir.mkdir(parents=True, exist_ok=True)
    write_json(metrics, mode_dir / "metrics.json")
    art["history"].to_csv(mode_dir / "history.csv")
    (mode_dir / "model.json").write_text(art["model"].to_json() + "\n", encoding="utf-8")
    cl.save_clustering(art["clustering"], built.labels, mode_dir / "clusters.csv")
    cl.save_coords(built.graph.tickers, art["coords"], art["clustering"], mode_dir / "coords.csv")
    cl.save_sector_decomposition(art["clustering"], built.labels, mode_dir / "sectors.json")
    cl.save_clustering(art["spectral"], built.labels, mode_dir / "clusters_spectral.csv")
    cl.save_clustering(art["features_kmeans"], built.labels, mode_dir / "clusters_features.csv")
    return metrics


def run_ablation(built: BuiltGraph, cfg: RunConfig, seeds, modes=MODES) -> dict:
    """Train every mode under every seed; report per-run metrics and medians."""
    runs = {m: [train_eval(built, cfg, mode=m, seed=s)[0] for s in seeds] for m in modes}
    summary = {
        m: {
            "median_purity": float(np.median([r["gae"]["purity"] for r in rs])),
            "median_nmi": float(np.median([r["gae"]["nmi"] for r in rs])),
            "median_test_ap": float(np.median([r["test_ap"] for r in rs])),
        }
        for m, rs in runs.items()
    }
    return {"seeds": [int(s) for s in seeds], "summary": summary, "runs": runs}


def cmd_ablate(cfg: RunConfig, n_seeds: int = 5) -> dict:
    built = load_built(cfg.out_dir)
    seeds = [cfg.seed + i for i in range(n_seeds)]
    result = run_ablation(built, cfg, seeds)
    write_json(result, Path(cfg.out_dir) / "ablation.json")
    return result


def config_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    d["train"] = cfg.train.to_dict()
    if isinstance(cfg.grid, list):
        d["grid"] = [g.to_dict() for g in cfg.grid]
    return d

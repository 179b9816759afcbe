"""Run configuration, dataset directories and the train/detect/eval stages."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .annealer import AnnealConfig, DetectResult, TempSchedule, dedup, default_workers, detect, write_trace
from .cliques import CliqueIndex, enumerate_maximal_cliques, load_clique_cache, save_clique_cache
from .graph import (
    DatasetSplit,
    Graph,
    hybrid_graph,
    load_communities,
    load_edge_list,
    prep_filter_sample,
    read_id_map,
    split_communities,
    synth_planted,
    validate_training_communities,
    write_communities,
    write_edge_list,
    write_id_map,
)
from .metrics import EvalReport, report
from .neural import ModelParams, NetConfig, init_params, load_checkpoint, save_checkpoint
from .proposer import (
    CORE_FILTER_MIN_NODES,
    Candidate,
    TrainConfig,
    propose_candidates,
    select_seed_nodes,
    train_core_filter,
    train_nucleus_proposer,
    write_candidates,
)

logger = logging.getLogger(__name__)

GRAPH_FILE = "graph.txt"
COMMUNITY_FILE = "communities.txt"
SPLIT_FILE = "split.json"
ID_MAP_FILE = "id_map.txt"

# key -> (origin, help); origin "method" marks published method defaults,
# "impl" marks choices made by this implementation.
CONFIG_DOCS: dict[str, tuple[str, str]] = {
    "seed": ("impl", "master RNG seed"),
    "workers": ("impl", "annealing worker processes (env CLIQUEANNEAL_WORKERS)"),
    "dim": ("method", "hidden dimension d"),
    "layers": ("method", "number of GCN layers K"),
    "epochs": ("method", "epochs per training phase"),
    "lr": ("method", "Adam learning rate"),
    "alpha": ("impl", "hinge margin of the size-energy loss"),
    "gamma": ("method", "loss weights: 'auto' balances magnitudes on the first batch, or 'gE,gC,gI'"),
    "lambda_clq": ("method", "cliques folded in the consistency loss"),
    "m_pct": ("method", "percentage of nodes replaced/removed by distortions"),
    "curvature": ("impl", "Poincare ball curvature c"),
    "agg_init_gain": ("impl", "init scale of the layer-concat projection (keeps exp0 unsaturated)"),
    "gcn_activation": ("impl", "activation after each GCN propagation: relu or linear"),
    "m_multiplier": ("method", "candidates per test community"),
    "max_steps": ("impl", "annealing step budget per candidate"),
    "max_transitions": ("impl", "nucleus transitions allowed per candidate"),
    "hops": ("impl", "neighborhood hops around core-filter seeds"),
    "core_filter_min_nodes": ("impl", "graphs with fewer nodes skip the core filter"),
    "core_epochs": ("impl", "core-filter training epochs"),
    "max_cliques": ("impl", "abort clique enumeration beyond this many cliques"),
    "np_only": ("method", "emit raw candidates as predictions (proposer-only ablation)"),
    "onmi_variant": ("impl", "overlapping NMI normalization: lfk or max"),
    "n_comm": ("impl", "synthetic: number of planted communities"),
    "size_min": ("impl", "synthetic: smallest community size"),
    "size_max": ("impl", "synthetic: largest community size"),
    "p_intra": ("impl", "synthetic: intra-community edge probability"),
    "p_inter": ("impl", "synthetic: cross-community edge probability"),
    "clique_size": ("impl", "synthetic: planted clique size per community"),
    "percentile": ("method", "prep: drop communities above this size percentile"),
    "n_sample": ("method", "prep: communities sampled after filtering"),
    "hybrid_links": ("method", "prep: cross links added between two graphs"),
}


@dataclass
class RunConfig:
    seed: int = 0
    workers: int = field(default_factory=default_workers)
    dim: int = 64
    layers: int = 3
    epochs: int = 10
    lr: float = 1e-3
    alpha: float = 0.1
    gamma: str = "auto"
    lambda_clq: int = 2
    m_pct: float = 25.0
    curvature: float = 1.0
    agg_init_gain: float = 0.05
    gcn_activation: str = "relu"
    m_multiplier: int = 4
    max_steps: int = 20
    max_transitions: int = 3
    hops: int = 2
    core_filter_min_nodes: int = CORE_FILTER_MIN_NODES
    core_epochs: int = 200
    max_cliques: int = 10**6
    np_only: bool = False
    onmi_variant: str = "lfk"
    n_comm: int = 100
    size_min: int = 6
    size_max: int = 12
    p_intra: float = 0.9
    p_inter: float = 0.001
    clique_size: int = 3
    percentile: float = 90.0
    n_sample: int = 1000
    hybrid_links: int = 5000

    def __post_init__(self):
        checks = [
            (self.dim >= 1, "dim must be >= 1"),
            (self.layers >= 1, "layers must be >= 1"),
            (self.epochs >= 0, "epochs must be >= 0"),
            (self.lr >= 0, "lr must be >= 0"),
            (self.alpha >= 0, "alpha must be >= 0"),
            (self.lambda_clq >= 1, "lambda_clq must be >= 1"),
            (0 <= self.m_pct <= 100, "m_pct must be in [0, 100]"),
            (self.curvature > 0, "curvature must be > 0"),
            (self.m_multiplier >= 1, "m_multiplier must be >= 1"),
            (self.max_steps >= 0, "max_steps must be >= 0"),
            (self.max_transitions >= 0, "max_transitions must be >= 0"),
            (self.hops >= 0, "hops must be >= 0"),
            (self.workers >= 1, "workers must be >= 1"),
            (self.gcn_activation in ("relu", "linear"), "gcn_activation must be relu or linear"),
            (self.onmi_variant in ("lfk", "max"), "onmi_variant must be lfk or max"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)
        self.gamma_weights()

    def gamma_weights(self) -> str | tuple[float, float, float]:
        if self.gamma == "auto":
            return "auto"
        parts = [float(x) for x in str(self.gamma).split(",")]
        if len(parts) != 3:
            raise ValueError("gamma must be 'auto' or three comma-separated numbers")
        return tuple(parts)

    def net(self) -> NetConfig:
        return NetConfig(self.dim, self.layers, self.curvature, self.gcn_activation, self.agg_init_gain)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, lr=self.lr, alpha=self.alpha, gamma=self.gamma_weights(),
            lambda_clq=self.lambda_clq, m_pct=self.m_pct, seed=self.seed, net=self.net(),
        )

    def echo(self) -> dict:
        """Model-relevant keys stored in checkpoints (no paths or worker counts)."""
        keys = ("seed", "dim", "layers", "epochs", "lr", "alpha", "gamma", "lambda_clq", "m_pct",
                "curvature", "agg_init_gain", "gcn_activation", "core_epochs")
        return {k: getattr(self, k) for k in keys}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)


# --- dataset directories --------------------------------------------------------


@dataclass
class Dataset:
    graph: Graph
    communities: list[frozenset[int]]
    split: DatasetSplit
    inverse_map: list[int] | None = None

    def part(self, name: str) -> list[frozenset[int]]:
        return [self.communities[i] for i in getattr(self.split, name)]


def write_dataset(ds: Dataset, out: str | Path) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_edge_list(ds.graph, out / GRAPH_FILE)
    isolated = np.flatnonzero(ds.graph.degree == 0)
    if isolated.size:
        # a self-loop line keeps an isolated node (and dense ids) on reload
        with open(out / GRAPH_FILE, "a") as fh:
            fh.writelines(f"{v}\t{v}\n" for v in isolated.tolist())
    write_communities(ds.communities, out / COMMUNITY_FILE)
    (out / SPLIT_FILE).write_text(json.dumps(ds.split.to_json(), sort_keys=True) + "\n")
    if ds.inverse_map is not None:
        write_id_map({orig: i for i, orig in enumerate(ds.inverse_map)}, out / ID_MAP_FILE)


def read_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    loaded = load_edge_list(path / GRAPH_FILE)
    if loaded.id_map != {i: i for i in range(loaded.graph.n)}:
        raise ValueError(f"{path / GRAPH_FILE}: dataset graphs must use dense ids 0..n-1")
    comms = load_communities(path / COMMUNITY_FILE, loaded.id_map)
    split = DatasetSplit.from_json(json.loads((path / SPLIT_FILE).read_text()))
    inverse = None
    if (path / ID_MAP_FILE).exists():
        id_map = read_id_map(path / ID_MAP_FILE)
        inverse = [0] * len(id_map)
        for orig, dense in id_map.items():
            inverse[dense] = orig
    return Dataset(loaded.graph, comms, split, inverse)


def make_synthetic(cfg: RunConfig) -> Dataset:
    rng = np.random.default_rng(cfg.seed)
    g, comms = synth_planted(cfg.n_comm, (cfg.size_min, cfg.size_max), cfg.p_intra, cfg.p_inter, rng, cfg.clique_size)
    return Dataset(g, comms, split_communities(len(comms), rng))


def make_prepared(cfg: RunConfig, graph: Path, comms: Path, graph2: Path | None = None, comms2: Path | None = None) -> Dataset:
    """Filter-and-sample preprocessing, optionally on a hybrid of two graphs.

    Communities come from the first graph only; the second graph acts as a
    distractor joined by random cross links.
    """
    rng = np.random.default_rng(cfg.seed)
    a = load_edge_list(graph)
    ca = prep_filter_sample(load_communities(comms, a.id_map), rng, cfg.percentile, cfg.n_sample)
    g = a.graph
    inverse = list(a.inverse_map)
    if graph2 is not None:
        b = load_edge_list(graph2)
        g, offset = hybrid_graph(a.graph, b.graph, cfg.hybrid_links, rng)
        # keep original ids distinguishable: second-graph ids are shifted past the first's max id
        shift = max(inverse) + 1
        inverse += [shift + orig for orig in b.inverse_map]
        if comms2 is not None:
            logger.info("second-graph communities are not used as targets")
    return Dataset(g, ca, split_communities(len(ca), rng), inverse)


# --- cliques ----------------------------------------------------------------------


def build_cliques(g: Graph, cfg: RunConfig, params: ModelParams, train: Sequence[frozenset[int]], n_test: int) -> CliqueIndex:
    restrict = None
    if g.n >= cfg.core_filter_min_nodes:
        m = cfg.m_multiplier * max(1, n_test)
        restrict = set(select_seed_nodes(params, g, min(m, g.n), cfg.hops))
        for c in train:
            restrict |= c
        logger.info("core filter kept %d of %d nodes", len(restrict), g.n)
    return enumerate_maximal_cliques(g, restrict, max_cliques=cfg.max_cliques)


def cached_cliques(path: Path, g: Graph, cfg, params, train, n_test) -> CliqueIndex:
    if path.exists():
        try:
            return load_clique_cache(g, path)
        except ValueError:
            logger.warning("ignoring stale clique cache %s", path)
    idx = build_cliques(g, cfg, params, train, n_test)
    save_clique_cache(idx, g, path)
    return idx


# --- stages -----------------------------------------------------------------------


def curve_path(ckpt: Path) -> Path:
    return ckpt.with_name(ckpt.name + ".curve.json")


def clique_cache_path(ckpt: Path) -> Path:
    return ckpt.with_name(ckpt.name + ".cliques")


def run_train(ds: Dataset, cfg: RunConfig, ckpt: str | Path, resume: bool = False) -> ModelParams:
    ckpt = Path(ckpt)
    train = ds.part("train")
    validate_training_communities(ds.graph, train)
    curve: list[dict] = []
    if resume:
        params = load_checkpoint(ckpt)
        if curve_path(ckpt).exists():
            curve = json.loads(curve_path(ckpt).read_text())
    else:
        params = init_params(cfg.net(), cfg.seed)
        params.echo = cfg.echo()
        if ds.graph.n >= cfg.core_filter_min_nodes:
            train_core_filter(params, ds.graph, train, cfg.core_epochs, cfg.lr)
    cliques = build_cliques(ds.graph, cfg, params, train, len(ds.split.test))
    offset = max((r["epoch"] for r in curve if r["phase"] == 1), default=0)
    res = train_nucleus_proposer(ds.graph, cliques, train, cfg.train_config(), params)
    for r in res.curve:
        curve.append({**r, "epoch": r["epoch"] + offset})
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(res.params, ckpt)
    curve_path(ckpt).write_text(json.dumps(curve, indent=1, default=float) + "\n")
    save_clique_cache(cliques, ds.graph, clique_cache_path(ckpt))
    return res.params


@dataclass
class DetectOutput:
    predictions: list[frozenset[int]]
    candidates: list[Candidate]
    result: DetectResult | None
    seconds: float


def run_detect(
    ds: Dataset,
    cfg: RunConfig,
    params: ModelParams,
    cliques: CliqueIndex,
    trace_path: str | Path | None = None,
    candidates_path: str | Path | None = None,
) -> DetectOutput:
    t0 = time.perf_counter()
    train = ds.part("train")
    m = cfg.m_multiplier * len(ds.split.test)
    cands = propose_candidates(params, ds.graph, cliques, train, m) if m and len(cliques) else []
    if candidates_path is not None:
        write_candidates(cands, candidates_path)
    if cfg.np_only:
        return DetectOutput(dedup(c.members for c in cands), cands, None, time.perf_counter() - t0)
    sched = TempSchedule.from_communities(train)
    res = detect(
        params, ds.graph, cliques, [c.members for c in cands], sched,
        AnnealConfig(cfg.max_steps, cfg.max_transitions), cfg.workers,
    )
    if trace_path is not None:
        write_trace(res.runs, trace_path)
    return DetectOutput(res.predictions, cands, res, time.perf_counter() - t0)


def run_eval(pred: Sequence[frozenset[int]], truth: Sequence[frozenset[int]], cfg: RunConfig) -> EvalReport:
    return report(pred, truth, onmi_variant=cfg.onmi_variant)


@dataclass
class PipelineOutput:
    report: EvalReport
    detect: DetectOutput
    train_seconds: float
    total_seconds: float


def run_pipeline(ds: Dataset, cfg: RunConfig, out_dir: str | Path) -> PipelineOutput:
    """train -> detect -> eval; writes checkpoint, predictions, truth, trace and report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    ckpt = out / "model.ckpt"
    params = run_train(ds, cfg, ckpt)
    t_train = time.perf_counter() - t0
    cliques = load_clique_cache(ds.graph, clique_cache_path(ckpt))
    det = run_detect(ds, cfg, params, cliques, out / "trace.jsonl", out / "candidates.txt")
    test = ds.part("test")
    write_communities(det.predictions, out / "predictions.txt", ds.inverse_map)
    write_communities(test, out / "truth.txt", ds.inverse_map)
    rep = run_eval(det.predictions, test, cfg)
    (out / "report.json").write_text(rep.to_json() + "\n")
    return PipelineOutput(rep, det, t_train, time.perf_counter() - t0)

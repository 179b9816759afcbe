"""Preliminary core filter and nucleus proposer (training + candidate selection)."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import hyperbolic as hyp
from .cliques import CliqueIndex
from .graph import Graph
from .losses import LossWeights, auto_weights, loss_integrity, sample_batch, total_loss
from .neural import (
    INTEG_NAMES,
    INTF_NAMES,
    Adam,
    ModelParams,
    NetConfig,
    NumericError,
    Tape,
    encode_subgraph,
    encoder_names,
    init_params,
    input_transform,
    sigmoid,
)

logger = logging.getLogger(__name__)

CORE_FILTER_MIN_NODES = 50_000


# --- betweenness / core filter ----------------------------------------------


def brandes_betweenness(
    nbrs: Callable[[int], Iterable[int]], nodes: Iterable[int], touched: set[int] | None = None
) -> dict[int, float]:
    """Unnormalized betweenness on an undirected graph (each pair counted once)."""
    nodes = sorted(nodes)
    bc = dict.fromkeys(nodes, 0.0)
    for s in nodes:
        stack = []
        preds: dict[int, list[int]] = {v: [] for v in nodes}
        sigma = dict.fromkeys(nodes, 0)
        dist = dict.fromkeys(nodes, -1)
        sigma[s] = 1
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            if touched is not None:
                touched.add(v)
            for w in nbrs(v):
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = dict.fromkeys(nodes, 0.0)
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                bc[w] += delta[w]
    return {v: b / 2.0 for v, b in bc.items()}


def community_betweenness(g: Graph, community: Iterable[int], touched: set[int] | None = None) -> dict[int, float]:
    members = frozenset(community)
    return brandes_betweenness(lambda v: g.nbr_sets[v] & members, members, touched)


def core_features(g: Graph) -> np.ndarray:
    """``[aug(v) | mean aug over neighbors]`` per node, log1p-compressed."""
    aug = g.aug_features
    deg = g.degree
    sums = np.zeros_like(aug)
    np.add.at(sums, np.repeat(np.arange(g.n), deg), aug[g.indices])
    mean = np.divide(sums, deg[:, None], out=np.zeros_like(sums), where=deg[:, None] > 0)
    return input_transform(np.hstack([aug, mean]))


def core_labels(g: Graph, communities: Sequence[frozenset[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Node ids and 0/1 labels; the top-betweenness node of each community is 1."""
    nodes, labels = [], []
    for comm in communities:
        bc = community_betweenness(g, comm)
        core = min(bc, key=lambda v: (-bc[v], v))
        for v in sorted(comm):
            nodes.append(v)
            labels.append(1.0 if v == core else 0.0)
    return np.array(nodes, dtype=np.int64), np.array(labels)


def train_core_filter(
    params: ModelParams, g: Graph, train: Sequence[frozenset[int]], epochs: int = 200, lr: float = 1e-3
) -> None:
    """Fit the logistic core classifier in place (one Adam step per community per epoch)."""
    feats = core_features(g)
    nodes, labels = core_labels(g, train)
    groups = np.split(np.arange(len(nodes)), np.cumsum([len(c) for c in train])[:-1])
    adam = Adam(lr)
    rng = np.random.default_rng(params.seed)
    t = params.tensors
    for _ in range(epochs):
        for gi in rng.permutation(len(groups)):
            idx = groups[gi]
            x = feats[nodes[idx]]
            y = labels[idx]
            p = sigmoid(x @ t["core.W"] + t["core.b"][0])
            err = (p - y) / len(idx)
            grads = {"core.W": x.T @ err, "core.b": np.array([err.sum()])}
            adam.step(t, grads, ("core.W", "core.b"))


def core_scores(params: ModelParams, g: Graph) -> np.ndarray:
    return sigmoid(core_features(g) @ params["core.W"] + params["core.b"][0])


def select_seed_nodes(params: ModelParams, g: Graph, m: int, hops: int = 2) -> frozenset[int]:
    """Top-``m`` nodes by core score (ties by id) plus their ``hops``-hop balls."""
    if m < 1:
        raise ValueError("m must be >= 1")
    scores = core_scores(params, g)
    order = np.lexsort((np.arange(g.n), -scores))
    frontier = set(order[:m].tolist())
    chosen = set(frontier)
    for _ in range(hops):
        nxt = set()
        for v in frontier:
            nxt |= g.nbr_sets[v]
        frontier = nxt - chosen
        chosen |= frontier
    return frozenset(chosen)


# --- nucleus proposer training -------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 10
    lr: float = 1e-3
    alpha: float = 0.1
    gamma: str | tuple[float, float, float] = "auto"
    lambda_clq: int = 2
    m_pct: float = 25.0
    batches_per_epoch: int | None = None  # None: one per training community
    seed: int = 0
    net: NetConfig = field(default_factory=NetConfig)


@dataclass
class TrainResult:
    params: ModelParams
    weights: LossWeights
    curve: list[dict]


def _check_finite(value: float, what: str, epoch: int, step: int) -> None:
    if not np.isfinite(value):
        raise NumericError(f"non-finite {what} at epoch {epoch}, step {step}")


def train_nucleus_proposer(
    g: Graph,
    cliques: CliqueIndex,
    train: Sequence[frozenset[int]],
    cfg: TrainConfig,
    params: ModelParams | None = None,
) -> TrainResult:
    """Phase 1 minimizes the weighted energy/consistency/interface loss over
    the encoder and interface head; phase 2 freezes the encoder and fits the
    integrity head on the integrity loss. Both phases run ``cfg.epochs``."""
    if params is None:
        params = init_params(cfg.net, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    n_batches = cfg.batches_per_epoch or len(train)
    curve: list[dict] = []

    def a1_order():
        order = rng.permutation(len(train)).tolist()
        while len(order) < n_batches:
            order += rng.permutation(len(train)).tolist()
        return order[:n_batches]

    weights = None
    if cfg.gamma != "auto":
        ge, gc, gi = cfg.gamma
        weights = LossWeights(ge, gc, gi, cfg.alpha)
    phase1 = encoder_names(params.config) + list(INTF_NAMES)
    adam = Adam(cfg.lr)
    for epoch in range(cfg.epochs):
        sums = np.zeros(4)
        for step, i1 in enumerate(a1_order()):
            batch = sample_batch(g, train, cliques, rng, a1_index=i1, m_pct=cfg.m_pct, lambda_clq=cfg.lambda_clq)
            tape = Tape(params, g)
            if weights is None:
                weights = auto_weights(batch, tape, cfg.alpha, cfg.lambda_clq)
                logger.info("auto loss weights: %s", weights)
            parts = total_loss(batch, tape, weights, cfg.lambda_clq)
            _check_finite(parts.total, "total loss", epoch, step)
            adam.step(params.tensors, tape.backward(), phase1)
            sums += (parts.energy, parts.consistency, parts.interface, parts.total)
        mean = sums / n_batches
        curve.append({"phase": 1, "epoch": epoch + 1, "loss_e": mean[0], "loss_c": mean[1], "loss_i": mean[2], "total": mean[3]})
        logger.info("phase 1 epoch %d: %s", epoch + 1, curve[-1])

    adam = Adam(cfg.lr)
    for epoch in range(cfg.epochs):
        acc = 0.0
        for step, i1 in enumerate(a1_order()):
            batch = sample_batch(g, train, cliques, rng, a1_index=i1, m_pct=cfg.m_pct, lambda_clq=cfg.lambda_clq)
            tape = Tape(params, g, encoder_grads=False)
            lg = loss_integrity(batch, tape)
            _check_finite(lg, "integrity loss", epoch, step)
            adam.step(params.tensors, tape.backward(), INTEG_NAMES)
            acc += lg
        curve.append({"phase": 2, "epoch": epoch + 1, "loss_g": acc / n_batches})
        logger.info("phase 2 epoch %d: %s", epoch + 1, curve[-1])
    if weights is None:
        weights = LossWeights(alpha=cfg.alpha)
    return TrainResult(params, weights, curve)


# --- candidate selection --------------------------------------------------------


@dataclass(frozen=True)
class Candidate:
    members: frozenset[int]
    source: int
    distance: float
    clique_id: int


def clique_embeddings(params: ModelParams, g: Graph, cliques: CliqueIndex) -> np.ndarray:
    return np.array([encode_subgraph(params, g, q) for q in cliques.cliques])


def propose_candidates(
    params: ModelParams,
    g: Graph,
    cliques: CliqueIndex,
    train: Sequence[frozenset[int]],
    m: int,
    clique_h: np.ndarray | None = None,
) -> list[Candidate]:
    """Per training community, the ``m // len(train)`` cliques nearest in
    hyperbolic distance (ties by clique id). Duplicates across communities
    are kept."""
    if len(cliques) == 0:
        raise ValueError("clique index is empty")
    per = m // len(train)
    if clique_h is None:
        clique_h = clique_embeddings(params, g, cliques)
    if per > len(cliques):
        logger.warning("requested %d candidates per community but only %d cliques exist", per, len(cliques))
    c = params.config.curvature
    out: list[Candidate] = []
    for ci, comm in enumerate(train):
        hc = encode_subgraph(params, g, comm)
        dist = np.array([hyp.hyp_distance(hc, hq, c) for hq in clique_h])
        order = np.lexsort((np.arange(len(dist)), dist))[:per]
        out.extend(Candidate(cliques.cliques[q], ci, float(dist[q]), int(q)) for q in order)
    return out


def write_candidates(cands: Sequence[Candidate], path: str | Path) -> None:
    with open(path, "w") as fh:
        for cand in cands:
            fh.write(f"{cand.source}\t{cand.distance:.17g}\t{' '.join(map(str, sorted(cand.members)))}\n")

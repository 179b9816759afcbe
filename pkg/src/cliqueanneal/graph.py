"""Graph and community ingestion, subgraph operators and synthetic data.

Node ids are dense integers in ``[0, n)``. Communities are plain
``frozenset`` objects; a community's id is its position in the list it
was loaded into.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

Community = frozenset


class GraphFormatError(ValueError):
    """Raised when an edge list or community file cannot be parsed."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected simple graph in CSR form."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    raw_feature: np.ndarray = field(repr=False)

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Iterable[tuple[int, int]],
        raw_feature: np.ndarray | None = None,
    ) -> "Graph":
        """Build a graph, dropping self-loops and duplicate/reversed edges."""
        g, _ = cls._build(n, edges, raw_feature)
        return g

    @classmethod
    def _build(cls, n, edges, raw_feature=None) -> tuple["Graph", int]:
        pairs = set()
        loops = 0
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) outside node range [0, {n})")
            if u == v:
                loops += 1
                continue
            pairs.add((u, v) if u < v else (v, u))
        nbrs: list[list[int]] = [[] for _ in range(n)]
        for u, v in pairs:
            nbrs[u].append(v)
            nbrs[v].append(u)
        indptr = np.zeros(n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(a) for a in nbrs])
        indices = np.fromiter(
            (x for a in nbrs for x in sorted(a)), dtype=np.int64, count=int(indptr[-1])
        )
        if raw_feature is None:
            raw_feature = np.ones(n)
        raw_feature = np.asarray(raw_feature, dtype=np.float64)
        if raw_feature.shape != (n,):
            raise ValueError("raw_feature must have one value per node")
        for arr in (indptr, indices, raw_feature):
            arr.setflags(write=False)
        return cls(n, indptr, indices, raw_feature), loops

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    @cached_property
    def nbr_sets(self) -> list[frozenset[int]]:
        return [frozenset(self.neighbors(v).tolist()) for v in range(self.n)]

    @cached_property
    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def num_edges(self) -> int:
        return int(self.indptr[-1]) // 2

    def edges(self) -> list[tuple[int, int]]:
        return [(u, int(v)) for u in range(self.n) for v in self.neighbors(u) if u < v]

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.nbr_sets[u]

    @cached_property
    def aug_features(self) -> np.ndarray:
        """``n x 6`` matrix of augmented node features (see :func:`aug_feature`)."""
        deg = self.degree.astype(np.float64)
        out = np.zeros((self.n, 6))
        out[:, 0] = self.raw_feature
        out[:, 1] = deg
        for v in range(self.n):
            if deg[v] == 0:
                continue
            dn = deg[self.neighbors(v)]
            out[v, 2:] = dn.max(), dn.min(), dn.mean(), dn.std()
        out.setflags(write=False)
        return out

    @cached_property
    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(np.int64(self.n).tobytes())
        h.update(np.ascontiguousarray(self.indptr, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(self.indices, dtype="<i8").tobytes())
        return h.hexdigest()


@dataclass
class LoadedGraph:
    graph: Graph
    id_map: dict[int, int]
    self_loops: int = 0

    @property
    def inverse_map(self) -> list[int]:
        inv = [0] * len(self.id_map)
        for orig, dense in self.id_map.items():
            inv[dense] = orig
        return inv


def _data_lines(path: Path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def load_edge_list(path: str | Path) -> LoadedGraph:
    """Read a SNAP-style edge list and remap node ids to ``[0, n)``.

    Dense ids follow ascending original id. Nodes that only appear on a
    self-loop line are kept as isolated nodes.
    """
    path = Path(path)
    raw = []
    for lineno, line in _data_lines(path):
        toks = line.split()
        if len(toks) < 2:
            raise GraphFormatError(f"{path}:{lineno}: expected two node ids, got {line!r}")
        try:
            raw.append((int(toks[0]), int(toks[1])))
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: non-integer node id in {line!r}") from None
    if not raw:
        raise GraphFormatError(f"{path}: graph is empty")
    ids = sorted({x for e in raw for x in e})
    id_map = {orig: i for i, orig in enumerate(ids)}
    g, loops = Graph._build(len(ids), ((id_map[u], id_map[v]) for u, v in raw))
    if loops:
        logger.warning("%s: dropped %d self-loop(s)", path, loops)
    return LoadedGraph(g, id_map, loops)


def write_edge_list(g: Graph, path: str | Path, inverse_map: Sequence[int] | None = None) -> None:
    with open(path, "w") as fh:
        for u, v in g.edges():
            if inverse_map is not None:
                u, v = inverse_map[u], inverse_map[v]
            fh.write(f"{u}\t{v}\n")


def write_id_map(id_map: dict[int, int], path: str | Path) -> None:
    with open(path, "w") as fh:
        for orig, dense in sorted(id_map.items(), key=lambda kv: kv[1]):
            fh.write(f"{orig}\t{dense}\n")


def read_id_map(path: str | Path) -> dict[int, int]:
    out = {}
    for lineno, line in _data_lines(Path(path)):
        toks = line.split()
        if len(toks) != 2:
            raise GraphFormatError(f"{path}:{lineno}: expected 'original dense'")
        out[int(toks[0])] = int(toks[1])
    return out


def load_communities(path: str | Path, id_map: dict[int, int] | None = None) -> list[frozenset[int]]:
    """One community per line; blank lines are skipped, repeats collapse."""
    comms = []
    for lineno, line in _data_lines(Path(path)):
        members = set()
        for tok in line.split():
            try:
                node = int(tok)
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-integer node id {tok!r}") from None
            if id_map is not None:
                if node not in id_map:
                    raise GraphFormatError(f"{path}:{lineno}: unknown node id {node}")
                node = id_map[node]
            members.add(node)
        comms.append(frozenset(members))
    return comms


def write_communities(comms: Iterable[Iterable[int]], path: str | Path, inverse_map: Sequence[int] | None = None) -> None:
    with open(path, "w") as fh:
        for c in comms:
            ids = sorted(c)
            if inverse_map is not None:
                ids = sorted(inverse_map[v] for v in ids)
            fh.write(" ".join(map(str, ids)) + "\n")


def is_connected_subgraph(g: Graph, sub: Iterable[int]) -> bool:
    sub = set(sub)
    if not sub:
        return False
    start = next(iter(sub))
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for w in g.nbr_sets[u] & sub:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == len(sub)


def validate_training_communities(g: Graph, comms: Sequence[frozenset[int]]) -> list[int]:
    """Return indices of disconnected communities, logging each one."""
    bad = []
    for i, c in enumerate(comms):
        if not c:
            raise ValueError(f"community {i} is empty")
        if max(c) >= g.n or min(c) < 0:
            raise ValueError(f"community {i} references nodes outside the graph")
        if not is_connected_subgraph(g, c):
            bad.append(i)
            logger.info("community %d induces a disconnected subgraph", i)
    return bad


# --- node features ---------------------------------------------------------


def aug_feature(g: Graph, v: int) -> np.ndarray:
    """``[raw, deg, max DN, min DN, mean DN, std DN]`` where DN are neighbor degrees.

    Neighbor statistics are 0 for isolated nodes; std is the population
    standard deviation.
    """
    return g.aug_features[v].copy()


def mis_num(g: Graph, sub: Iterable[int]) -> int:
    """Number of ``sub`` nodes that lie in no triangle of the induced subgraph."""
    sub = frozenset(sub)
    missing = 0
    for u in sub:
        inner = g.nbr_sets[u] & sub
        if not any(g.nbr_sets[a] & inner for a in inner):
            missing += 1
    return missing


def ext_feature(g: Graph, v: int, sub: Iterable[int], mis: int | None = None) -> np.ndarray:
    """``[edges from v into sub, |sub|, mis-num(sub)]``.

    ``mis`` may be passed when the caller already knows the sub's value.
    """
    sub = frozenset(sub)
    l_num = len(g.nbr_sets[v] & sub - {v})
    if mis is None:
        mis = mis_num(g, sub)
    return np.array([l_num, len(sub), mis], dtype=np.float64)


# --- subgraph operators ----------------------------------------------------


def one_hop_neighbors(g: Graph, sub: Iterable[int]) -> frozenset[int]:
    sub = frozenset(sub)
    out: set[int] = set()
    for v in sub:
        out |= g.nbr_sets[v]
    return frozenset(out - sub)


def _n_distort(m_pct: float, size: int) -> int:
    # guard against float noise turning 25% of 4 into 1.0000000002
    return math.ceil(round(m_pct * size / 100.0, 9))


def distort_replace(g: Graph, sub: Iterable[int], m_pct: float, rng: np.random.Generator) -> tuple[frozenset[int], bool]:
    """Swap ``ceil(m%)`` members for distinct outside nodes adjacent to ``sub``.

    Returns ``(result, skipped)``. ``skipped`` is True when ``sub`` has
    no outside neighbor; the input is then returned unchanged. When fewer
    outside neighbors exist than the swap count, only that many are swapped.
    """
    sub = frozenset(sub)
    k = _n_distort(m_pct, len(sub))
    if k == 0:
        return sub, False
    outside = sorted(one_hop_neighbors(g, sub))
    if not outside:
        return sub, True
    k = min(k, len(outside), len(sub))
    members = sorted(sub)
    drop = rng.choice(len(members), size=k, replace=False)
    add = rng.choice(len(outside), size=k, replace=False)
    result = (sub - {members[i] for i in drop}) | {outside[i] for i in add}
    return frozenset(result), False


def has_triangle(g: Graph, nodes: frozenset[int]) -> bool:
    for u in nodes:
        inner = g.nbr_sets[u] & nodes
        for a in inner:
            if g.nbr_sets[a] & inner:
                return True
    return False


def distort_remove(
    g: Graph, sub: Iterable[int], m_pct: float, rng: np.random.Generator, tries: int = 64
) -> tuple[frozenset[int], bool]:
    """Remove ``ceil(m%)`` members, preferring removals that keep a triangle.

    Removal sets are drawn uniformly and accepted when the remainder still
    holds a triangle; after ``tries`` failed draws, or when ``sub`` has no
    triangle at all, the last uniform draw is used. ``|sub| < 4`` is a skip.
    """
    sub = frozenset(sub)
    if len(sub) < 4:
        return sub, True
    k = _n_distort(m_pct, len(sub))
    if k == 0:
        return sub, False
    k = min(k, len(sub) - 1)
    members = sorted(sub)
    want_triangle = has_triangle(g, sub)
    rest = sub
    for _ in range(tries):
        drop = rng.choice(len(members), size=k, replace=False)
        rest = sub - {members[i] for i in drop}
        if not want_triangle or has_triangle(g, rest):
            break
    return frozenset(rest), False


# --- dataset splitting -----------------------------------------------------


@dataclass
class DatasetSplit:
    train: list[int]
    valid: list[int]
    test: list[int]
    ratios: tuple[float, float, float] = (0.09, 0.01, 0.90)

    def to_json(self) -> dict:
        return {"train": self.train, "valid": self.valid, "test": self.test, "ratios": list(self.ratios)}

    @classmethod
    def from_json(cls, data: dict) -> "DatasetSplit":
        return cls(list(data["train"]), list(data["valid"]), list(data["test"]), tuple(data.get("ratios", (0.09, 0.01, 0.90))))


def split_communities(
    n_comms: int, rng: np.random.Generator, ratios: tuple[float, float, float] = (0.09, 0.01, 0.90)
) -> DatasetSplit:
    if n_comms < 3:
        raise ValueError("need at least 3 communities to split")
    perm = rng.permutation(n_comms).tolist()
    n_train = max(1, round(ratios[0] * n_comms))
    n_valid = round(ratios[1] * n_comms)
    train = sorted(perm[:n_train])
    valid = sorted(perm[n_train : n_train + n_valid])
    test = sorted(perm[n_train + n_valid :])
    return DatasetSplit(train, valid, test, tuple(ratios))


# --- synthetic planted communities -----------------------------------------


def _components(n: int, nbrs: list[set[int]], nodes: Iterable[int] | None = None) -> list[list[int]]:
    nodes = list(range(n)) if nodes is None else list(nodes)
    allowed = set(nodes)
    seen: set[int] = set()
    comps = []
    for s in nodes:
        if s in seen:
            continue
        comp = [s]
        seen.add(s)
        stack = [s]
        while stack:
            u = stack.pop()
            for w in nbrs[u]:
                if w in allowed and w not in seen:
                    seen.add(w)
                    comp.append(w)
                    stack.append(w)
        comps.append(comp)
    return comps


def synth_planted(
    n_comm: int,
    size_range: tuple[int, int],
    p_intra: float,
    p_inter: float,
    rng: np.random.Generator,
    clique_size: int = 3,
) -> tuple[Graph, list[frozenset[int]]]:
    """Disjoint planted communities, each containing a planted clique.

    Intra-community pairs connect with ``p_intra``; cross-community pairs
    with ``p_inter``. Each community is made internally connected, and
    any remaining graph components are joined by a chain of noise edges.
    Node ids are shuffled so community membership is not contiguous.
    """
    lo, hi = size_range
    if n_comm < 1:
        raise ValueError("n_comm must be >= 1")
    if not (4 <= lo <= hi <= 30):
        raise ValueError("size_range must lie within [4, 30]")
    if not (0.0 <= p_inter < p_intra <= 1.0):
        raise ValueError("need 0 <= p_inter < p_intra <= 1")
    if not (3 <= clique_size <= lo):
        raise ValueError("clique_size must be in [3, min community size]")
    sizes = rng.integers(lo, hi + 1, size=n_comm)
    n = int(sizes.sum())
    labels = rng.permutation(n)
    comms: list[list[int]] = []
    start = 0
    for s in sizes:
        comms.append(sorted(labels[start : start + s].tolist()))
        start += s
    nbrs: list[set[int]] = [set() for _ in range(n)]

    def link(u, v):
        nbrs[u].add(v)
        nbrs[v].add(u)

    for members in comms:
        s = len(members)
        planted = rng.choice(s, size=clique_size, replace=False)
        for i, j in combinations(sorted(planted.tolist()), 2):
            link(members[i], members[j])
        mask = rng.random((s, s)) < p_intra
        for i, j in combinations(range(s), 2):
            if mask[i, j]:
                link(members[i], members[j])
        parts = _components(n, nbrs, members)
        for a, b in zip(parts, parts[1:]):
            link(a[int(rng.integers(len(a)))], b[int(rng.integers(len(b)))])

    comm_of = np.empty(n, dtype=np.int64)
    for ci, members in enumerate(comms):
        comm_of[members] = ci
    cross_pairs = n * (n - 1) // 2 - sum(s * (s - 1) // 2 for s in sizes.tolist())
    n_noise = int(rng.binomial(cross_pairs, p_inter)) if cross_pairs > 0 and p_inter > 0 else 0
    added = 0
    while added < n_noise:
        u, v = rng.integers(n, size=2).tolist()
        if comm_of[u] == comm_of[v] or v in nbrs[u]:
            continue
        link(u, v)
        added += 1

    parts = _components(n, nbrs)
    for a, b in zip(parts, parts[1:]):
        link(a[int(rng.integers(len(a)))], b[int(rng.integers(len(b)))])

    g = Graph.from_edges(n, ((u, v) for u in range(n) for v in nbrs[u] if u < v))
    return g, [frozenset(c) for c in comms]


# --- setting-1 style preprocessing ------------------------------------------


def prep_filter_sample(
    comms: Sequence[frozenset[int]], rng: np.random.Generator, percentile: float = 90.0, n_sample: int = 1000
) -> list[frozenset[int]]:
    """Drop communities above the size percentile, then sample ``n_sample``."""
    sizes = np.array([len(c) for c in comms])
    cut = np.percentile(sizes, percentile)
    kept = [c for c in comms if len(c) <= cut]
    if len(kept) > n_sample:
        idx = sorted(rng.choice(len(kept), size=n_sample, replace=False).tolist())
        kept = [kept[i] for i in idx]
    return kept


def hybrid_graph(
    g1: Graph, g2: Graph, n_links: int, rng: np.random.Generator
) -> tuple[Graph, int]:
    """Disjoint union of two graphs plus ``n_links`` random cross edges.

    Nodes of ``g2`` are offset by ``g1.n``; the offset is returned.
    """
    off = g1.n
    edges = g1.edges() + [(u + off, v + off) for u, v in g2.edges()]
    cross = set()
    while len(cross) < n_links:
        cross.add((int(rng.integers(g1.n)), int(rng.integers(g2.n)) + off))
    feats = np.concatenate([g1.raw_feature, g2.raw_feature])
    return Graph.from_edges(g1.n + g2.n, edges + sorted(cross), feats), off

"""Maximal clique enumeration and the per-node clique index."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable

from .graph import Graph

MIN_CLIQUE = 3
DEFAULT_MAX_CLIQUES = 10**6


class CliqueBudgetExceeded(RuntimeError):
    pass


class OpCounter:
    """Counts neighbor-edge checks performed during enumeration."""

    def __init__(self) -> None:
        self.ops = 0


@dataclass(frozen=True, eq=False)
class CliqueIndex:
    cliques: tuple[frozenset[int], ...]
    by_node: dict[int, tuple[int, ...]]

    @classmethod
    def from_cliques(cls, cliques: Iterable[Iterable[int]]) -> "CliqueIndex":
        uniq = {frozenset(c) for c in cliques}
        ordered = tuple(sorted(uniq, key=lambda c: (-len(c), sorted(c))))
        by_node: dict[int, list[int]] = {}
        for cid, c in enumerate(ordered):
            for v in c:
                by_node.setdefault(v, []).append(cid)
        return cls(ordered, {v: tuple(ids) for v, ids in by_node.items()})

    def __len__(self) -> int:
        return len(self.cliques)

    def cliques_of(self, v: int) -> tuple[int, ...]:
        return self.by_node.get(v, ())

    @cached_property
    def position(self) -> dict[frozenset[int], int]:
        return {c: i for i, c in enumerate(self.cliques)}


def degeneracy_order(g: Graph, nodes: Iterable[int] | None = None) -> list[int]:
    """Smallest-last ordering restricted to ``nodes`` (all nodes by default)."""
    nodes = list(range(g.n)) if nodes is None else sorted(set(nodes))
    alive = set(nodes)
    deg = {v: len(g.nbr_sets[v] & alive) for v in nodes}
    maxd = max(deg.values(), default=0)
    buckets: list[set[int]] = [set() for _ in range(maxd + 1)]
    for v, d in deg.items():
        buckets[d].add(v)
    order = []
    lo = 0
    for _ in range(len(nodes)):
        lo = max(lo - 1, 0)
        while not buckets[lo]:
            lo += 1
        v = min(buckets[lo])
        buckets[lo].discard(v)
        alive.discard(v)
        order.append(v)
        for w in g.nbr_sets[v]:
            if w in alive:
                d = deg[w]
                buckets[d].discard(w)
                deg[w] = d - 1
                buckets[d - 1].add(w)
    return order


def _bk_pivot(r, p, x, adj, found, min_size, counter):
    if not p:
        if not x and len(r) >= min_size:
            found.append(list(r))
        return
    if len(r) + p.bit_count() < min_size:
        return
    px = p | x
    best, best_cnt = -1, -1
    while px:
        low = px & -px
        u = low.bit_length() - 1
        cnt = (p & adj[u]).bit_count()
        if cnt > best_cnt:
            best, best_cnt = u, cnt
        px ^= low
    if counter is not None:
        counter.ops += (p | x).bit_count()
    cand = p & ~adj[best]
    while cand:
        low = cand & -cand
        v = low.bit_length() - 1
        r.append(v)
        _bk_pivot(r, p & adj[v], x & adj[v], adj, found, min_size, counter)
        r.pop()
        p &= ~low
        x |= low
        cand ^= low


def enumerate_maximal_cliques(
    g: Graph,
    restrict_to: Iterable[int] | None = None,
    *,
    min_size: int = MIN_CLIQUE,
    max_cliques: int = DEFAULT_MAX_CLIQUES,
    counter: OpCounter | None = None,
) -> CliqueIndex:
    """All maximal cliques of size >= ``min_size`` meeting ``restrict_to``.

    Each seed vertex ``v`` enumerates the maximal cliques whose earliest
    seed (in processing order) is ``v``, so every clique is emitted once.
    Neighborhoods are relabelled locally and handled as int bitsets.
    """
    seeds = degeneracy_order(g) if restrict_to is None else degeneracy_order(g, restrict_to)
    done: set[int] = set()
    found_all: list[list[int]] = []
    for v in seeds:
        nv = g.nbr_sets[v]
        p_nodes = nv - done
        done.add(v)
        if len(p_nodes) + 1 < min_size:
            continue
        local = sorted(nv)
        pos = {u: i for i, u in enumerate(local)}
        adj = [0] * len(local)
        for i, u in enumerate(local):
            mask = 0
            for w in g.nbr_sets[u] & nv:
                mask |= 1 << pos[w]
            adj[i] = mask
        if counter is not None:
            counter.ops += len(local) * len(local)
        p = 0
        for u in p_nodes:
            p |= 1 << pos[u]
        x = ((1 << len(local)) - 1) & ~p
        found: list[list[int]] = []
        _bk_pivot([], p, x, adj, found, min_size - 1, counter)
        for f in found:
            found_all.append([v] + [local[i] for i in f])
        if len(found_all) > max_cliques:
            raise CliqueBudgetExceeded(f"more than {max_cliques} maximal cliques")
    return CliqueIndex.from_cliques(found_all)


def merged_clique(idx: CliqueIndex, v: int, exclude: Iterable[int] = ()) -> frozenset[int]:
    """Union of every indexed clique containing ``v``, minus ``exclude``."""
    out: set[int] = set()
    for cid in idx.cliques_of(v):
        out |= idx.cliques[cid]
    return frozenset(out.difference(exclude))


def cliques_within(idx: CliqueIndex, community: Iterable[int]) -> list[int]:
    """Ids (in index order) of cliques fully contained in ``community``."""
    community = frozenset(community)
    ids = set()
    for v in community:
        ids.update(idx.cliques_of(v))
    return [cid for cid in sorted(ids) if idx.cliques[cid] <= community]


def top_cliques(idx: CliqueIndex, community: Iterable[int], k: int) -> list[frozenset[int]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    return [idx.cliques[cid] for cid in cliques_within(idx, community)[:k]]


def save_clique_cache(idx: CliqueIndex, g: Graph, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# graph {g.fingerprint}\n")
        for c in idx.cliques:
            fh.write(" ".join(map(str, sorted(c))) + "\n")


def load_clique_cache(g: Graph, path: str | Path) -> CliqueIndex:
    with open(path) as fh:
        header = fh.readline().split()
        if header[:2] != ["#", "graph"] or len(header) < 3 or header[2] != g.fingerprint:
            raise ValueError(f"{path}: clique cache does not match this graph")
        cliques = [frozenset(map(int, line.split())) for line in fh if line.strip()]
    return CliqueIndex.from_cliques(cliques)

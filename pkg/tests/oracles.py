"""Independent reference implementations used as test oracles."""

from __future__ import annotations

import itertools
import math
from collections import deque

import numpy as np

from cliqueanneal.graph import Graph
from cliqueanneal.neural import ModelParams


def er_graph(n: int, p: float, rng: np.random.Generator) -> Graph:
    edges = [(u, v) for u, v in itertools.combinations(range(n), 2) if rng.random() < p]
    return Graph.from_edges(n, edges)


def brute_force_maximal_cliques(g: Graph, min_size: int = 1) -> set[frozenset[int]]:
    """Every vertex subset that is a clique and has no extending vertex."""
    n = g.n
    adj = [0] * n
    for u, v in g.edges():
        adj[u] |= 1 << v
        adj[v] |= 1 << u
    full = (1 << n) - 1
    # is_clique[mask] built incrementally from mask without its lowest bit
    is_clique = bytearray(1 << n)
    is_clique[0] = 1
    out = set()
    for mask in range(1, 1 << n):
        low = mask & -mask
        v = low.bit_length() - 1
        rest = mask ^ low
        is_clique[mask] = is_clique[rest] and (rest & ~adj[v]) == 0
    for mask in range(1, 1 << n):
        if not is_clique[mask] or bin(mask).count("1") < min_size:
            continue
        common = full & ~mask
        for v in range(n):
            if mask >> v & 1:
                common &= adj[v]
        if common == 0:
            out.add(frozenset(v for v in range(n) if mask >> v & 1))
    return out


def brute_betweenness(nodes, nbrs) -> dict[int, float]:
    """Pair-counting betweenness: for each unordered pair, the share of all
    shortest paths passing through each intermediate vertex."""
    nodes = sorted(nodes)

    def all_shortest(s, t):
        dist = {s: 0}
        q = deque([s])
        while q:
            u = q.popleft()
            for w in nbrs(u):
                if w not in dist:
                    dist[w] = dist[u] + 1
                    q.append(w)
        if t not in dist:
            return []
        paths = [[s]]
        for _ in range(dist[t]):
            paths = [p + [w] for p in paths for w in nbrs(p[-1]) if dist.get(w) == len(p)]
        return [p for p in paths if p[-1] == t]

    bc = dict.fromkeys(nodes, 0.0)
    for s, t in itertools.combinations(nodes, 2):
        paths = all_shortest(s, t)
        for p in paths:
            for v in p[1:-1]:
                bc[v] += 1.0 / len(paths)
    return bc


def unit_direction(params: ModelParams, rng: np.random.Generator, names=None) -> dict[str, np.ndarray]:
    names = list(params.tensors) if names is None else list(names)
    d = {k: rng.standard_normal(params.tensors[k].shape) for k in names}
    norm = math.sqrt(sum(float((x * x).sum()) for x in d.values()))
    return {k: x / norm for k, x in d.items()}


def directional_check(params: ModelParams, loss_and_grads, rng, eps: float = 1e-5, names=None, u=None):
    """Compare ``grad . u`` with a central difference along a unit direction.

    ``loss_and_grads(params)`` returns ``(value, grads_dict)``. ``u`` defaults
    to a fresh random direction. Returns ``(analytic, numeric, relative_error)``.
    """
    _, grads = loss_and_grads(params)
    if u is None:
        u = unit_direction(params, rng, names)
    analytic = sum(float((grads[k] * u[k]).sum()) for k in u)
    plus, minus = params.copy(), params.copy()
    for k, d in u.items():
        plus.tensors[k] += eps * d
        minus.tensors[k] -= eps * d
    numeric = (loss_and_grads(plus)[0] - loss_and_grads(minus)[0]) / (2 * eps)
    scale = max(abs(analytic), abs(numeric))
    rel = abs(analytic - numeric) / scale if scale > 1e-10 else abs(analytic - numeric)
    return analytic, numeric, rel


def _h(p: float) -> float:
    return -p * math.log2(p) if p > 0 else 0.0


def onmi_lfk_scalar(pred, truth, n: int) -> float:
    """Loop-based LFK overlapping NMI over explicit binary membership vectors."""

    def cond(xs, ys):
        total = 0.0
        for x in xs:
            hx = _h(len(x) / n) + _h(1 - len(x) / n)
            best = hx
            for y in ys:
                d = len(x & y)
                b = len(x) - d
                c = len(y) - d
                a = n - d - b - c
                ha, hb, hc, hd = (_h(k / n) for k in (a, b, c, d))
                if ha + hd >= hb + hc:
                    hy = _h(len(y) / n) + _h(1 - len(y) / n)
                    best = min(best, ha + hb + hc + hd - hy)
            total += best / hx if hx > 0 else 0.0
        return total / len(xs)

    pred = [frozenset(p) for p in pred]
    truth = [frozenset(t) for t in truth]
    return 1.0 - 0.5 * (cond(pred, truth) + cond(truth, pred))


def poincare_distance_ref(x, y, c: float = 1.0) -> float:
    """Textbook Poincare distance via arccosh (float64)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    num = 2 * c * np.sum((x - y) ** 2)
    den = (1 - c * np.sum(x * x)) * (1 - c * np.sum(y * y))
    return float(np.arccosh(1 + num / den) / np.sqrt(c))


def loss_closure(which: str, batch, g: Graph, weights=None, alpha: float = 0.1, lambda_clq: int = 2):
    """``params -> (value, grads)`` for one of the losses ``E C I G T``."""
    from cliqueanneal.losses import loss_consistency, loss_energy, loss_integrity, loss_interface, total_loss
    from cliqueanneal.neural import Tape

    def run(params):
        tape = Tape(params, g)
        if which == "E":
            v = loss_energy(batch, tape, alpha)
        elif which == "C":
            v = loss_consistency(batch, tape, lambda_clq)
        elif which == "I":
            v = loss_interface(batch, tape)
        elif which == "G":
            v = loss_integrity(batch, tape)
        elif which == "T":
            v = total_loss(batch, tape, weights, lambda_clq).total
        else:
            raise ValueError(which)
        return v, tape.backward()

    return run


def kink_pattern(params: ModelParams, batch, g: Graph, alpha: float = 0.1) -> tuple:
    """Which piece of the piecewise-smooth training loss ``params`` lies on.

    Covers every ReLU mask of every encoded subgraph and the sign of every
    energy and interface hinge margin.
    """
    from cliqueanneal.graph import one_hop_neighbors
    from cliqueanneal.hyperbolic import stored_energy
    from cliqueanneal.neural import _encode, interface_energy

    subs = {s for pair in batch.pos_s + batch.neg_s + batch.pos_d for s in pair}
    subs |= {s for group in batch.integrity_sets for s in group}
    subs |= set(batch.cliques) | {batch.a1 | batch.a1_breve}
    masks, energy = [], {}
    for sub in sorted(subs, key=sorted):
        h, cache = _encode(params, g, sub, keep=True)
        energy[sub] = stored_energy(h)
        masks.append(tuple(bytes(m > 0) for m in cache.pre) + (bytes(cache.pre_agg > 0),))
    signs = [energy[i] - energy[j] > 0 for i, j in batch.pos_s + batch.pos_d]
    signs += [alpha - (energy[i] - energy[j]) > 0 for i, j in batch.neg_s]
    a1 = batch.a1
    for j in (batch.b, batch.c):
        barrier = sum(interface_energy(params, g, v, j) for v in one_hop_neighbors(g, j) & a1)
        signs.append(energy[a1] - energy[j] - barrier > 0)
    barrier = sum(interface_energy(params, g, v, a1) for v in batch.a1_breve)
    signs.append(energy[a1] - energy[a1 | batch.a1_breve] + barrier > 0)
    return tuple(masks), tuple(signs)


def stencil_is_smooth(params: ModelParams, u: dict, eps: float, batch, g: Graph, alpha: float = 0.1) -> bool:
    """True when ``params +/- eps*u`` lie on the same piece as ``params``."""
    pats = []
    for sign in (-1.0, 0.0, 1.0):
        q = params.copy()
        for k, d in u.items():
            q.tensors[k] += sign * eps * d
        pats.append(kink_pattern(q, batch, g, alpha))
    return pats[0] == pats[1] == pats[2]

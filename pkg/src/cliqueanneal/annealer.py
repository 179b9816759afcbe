"""Learning-free transitive annealer: grows candidate cliques into communities.

Each run starts from one candidate and repeats:

1. stop once the state is no longer classified undergrown;
2. collect outside boundary nodes and their merged cliques;
3. relocate to a merged clique whose equilibrium score beats the state and
   every other merge (nucleus transition, capped);
4. accept merges whose softmax energy gain beats the size-dependent
   temperature and that pass the interface-energy check, falling back to
   the single highest-energy feasible merge when none qualifies.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from multiprocessing import get_context
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cliques import CliqueIndex, merged_clique
from .graph import Graph, one_hop_neighbors
from .neural import ModelParams, encode_subgraph, integrity_from_embedding, interface_energy, softmax

UNDERGROWN, EQUILIBRIUM = 0, 1


@dataclass(frozen=True)
class TempSchedule:
    mu: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            object.__setattr__(self, "sigma", 1.0)

    @classmethod
    def from_communities(cls, comms: Sequence[Iterable[int]]) -> "TempSchedule":
        sizes = np.array([len(frozenset(c)) for c in comms], dtype=np.float64)
        if sizes.size == 0:
            raise ValueError("need at least one community")
        return cls(float(sizes.mean()), float(sizes.std()))


def p_temp(sched: TempSchedule, size: int) -> float:
    """Standard normal CDF of ``(size - mu) / sigma``."""
    if size < 1:
        raise ValueError("size must be >= 1")
    z = (size - sched.mu) / sched.sigma
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def interface_slack(ce_norm: float, s_norm: float, n_new: int, intf: float, sc_norm: float) -> float:
    """Left minus right side of the interface check; feasible iff >= 0."""
    return ce_norm + s_norm + n_new * intf - sc_norm


def interface_feasible(params: ModelParams, g: Graph, state: Iterable[int], ce: Iterable[int], v: int) -> bool:
    state = frozenset(state)
    ce = frozenset(ce)
    if ce & state:
        raise ValueError("merge must be disjoint from the state")
    if not ce:
        return True
    s_norm = float(np.linalg.norm(encode_subgraph(params, g, state)))
    ce_norm = float(np.linalg.norm(encode_subgraph(params, g, ce)))
    sc_norm = float(np.linalg.norm(encode_subgraph(params, g, state | ce)))
    intf = interface_energy(params, g, v, state)
    return interface_slack(ce_norm, s_norm, len(ce), intf, sc_norm) >= 0


@dataclass
class AnnealConfig:
    max_steps: int = 20
    max_transitions: int = 3


@dataclass
class AnnealTrace:
    records: list[dict] = field(default_factory=list)

    def add(self, step: int, action: str, **data) -> None:
        self.records.append({"seq": len(self.records), "step": step, "action": action, **data})

    def of(self, action: str) -> list[dict]:
        return [r for r in self.records if r["action"] == action]


@dataclass
class AnnealResult:
    members: frozenset[int]
    trace: AnnealTrace
    steps: int
    transitions: int
    stop: str


class _Cache:
    """Per-run memo of embeddings, norms and integrity scores."""

    def __init__(self, params: ModelParams, g: Graph):
        self.params = params
        self.g = g
        self._h: dict[frozenset[int], np.ndarray] = {}

    def h(self, sub: frozenset[int]) -> np.ndarray:
        out = self._h.get(sub)
        if out is None:
            out = self._h[sub] = encode_subgraph(self.params, self.g, sub)
        return out

    def norm(self, sub: frozenset[int]) -> float:
        return float(np.linalg.norm(self.h(sub)))

    def integrity(self, sub: frozenset[int]) -> np.ndarray:
        return integrity_from_embedding(self.params, self.h(sub))


def _merges(g: Graph, cliques: CliqueIndex, state: frozenset[int]) -> list[tuple[int, frozenset[int]]]:
    """Distinct merged cliques of outside boundary nodes (first node by id kept).

    A boundary node in no indexed clique is its own singleton merge unit.
    """
    seen: set[frozenset[int]] = set()
    out = []
    for v in sorted(one_hop_neighbors(g, state)):
        ce = merged_clique(cliques, v, exclude=state) or frozenset((v,))
        if ce not in seen:
            seen.add(ce)
            out.append((v, ce))
    return out


def anneal(
    params: ModelParams,
    g: Graph,
    cliques: CliqueIndex,
    candidate: Iterable[int],
    sched: TempSchedule,
    cfg: AnnealConfig | None = None,
) -> AnnealResult:
    cfg = cfg or AnnealConfig()
    state = frozenset(candidate)
    if not state:
        raise ValueError("candidate must be non-empty")
    cache = _Cache(params, g)
    trace = AnnealTrace()
    steps = transitions = 0
    while True:
        y = cache.integrity(state)
        if y[UNDERGROWN] < y.max():
            trace.add(steps, "stop", reason="integrity", integrity=y.tolist())
            return AnnealResult(state, trace, steps, transitions, "integrity")
        if steps >= cfg.max_steps:
            trace.add(steps, "stop", reason="budget")
            return AnnealResult(state, trace, steps, transitions, "budget")
        merges = _merges(g, cliques, state)
        if not merges:
            trace.add(steps, "stop", reason="no-boundary")
            return AnnealResult(state, trace, steps, transitions, "no-boundary")

        if transitions < cfg.max_transitions:
            eq = np.array([cache.integrity(ce)[EQUILIBRIUM] for _, ce in merges])
            k = int(np.argmax(eq))
            others = np.delete(eq, k)
            if eq[k] > y[EQUILIBRIUM] and (others.size == 0 or eq[k] > others.max()):
                new = merges[k][1]
                trace.add(steps, "transition", node=merges[k][0], members=sorted(new),
                          eq_before=float(y[EQUILIBRIUM]), eq_after=float(eq[k]))
                state = new
                transitions += 1
                continue

        s_norm = cache.norm(state)
        sc = [state | ce for _, ce in merges]
        sc_norm = np.array([cache.norm(x) for x in sc])
        prob = softmax(sc_norm - s_norm)
        checks = []
        for (v, ce), x, xn, p in zip(merges, sc, sc_norm, prob):
            intf = interface_energy(params, g, v, state)
            ce_norm = cache.norm(ce)
            slack = interface_slack(ce_norm, s_norm, len(ce), intf, float(xn))
            checks.append({
                "node": v, "delta": sorted(ce), "p": float(p), "p_temp": p_temp(sched, len(x)),
                "ce_norm": ce_norm, "s_norm": s_norm, "n_new": len(ce), "intf": intf,
                "sc_norm": float(xn), "slack": slack,
            })
        accepted = []
        for rec in checks:
            if rec["p"] <= rec["p_temp"]:
                trace.add(steps, "reject-energy", **rec)
            elif rec["slack"] < 0:
                trace.add(steps, "reject-interface", **rec)
            else:
                trace.add(steps, "merge", **rec)
                accepted.append(rec)
        if not accepted:
            feasible = [r for r in checks if r["slack"] >= 0]
            if not feasible:
                trace.add(steps, "stop", reason="no-feasible")
                return AnnealResult(state, trace, steps, transitions, "no-feasible")
            best = max(feasible, key=lambda r: (r["sc_norm"], -r["node"]))
            trace.add(steps, "fallback", **best)
            accepted = [best]
        new = state.union(*(r["delta"] for r in accepted))
        steps += 1
        if new == state:
            trace.add(steps, "stop", reason="unchanged")
            return AnnealResult(state, trace, steps, transitions, "unchanged")
        state = new


# --- detection over many candidates ---------------------------------------------


_WORKER: dict = {}


def _init_worker(params, g, cliques, sched, cfg):
    _WORKER.update(params=params, g=g, cliques=cliques, sched=sched, cfg=cfg)


def _anneal_worker(members):
    w = _WORKER
    return anneal(w["params"], w["g"], w["cliques"], members, w["sched"], w["cfg"])


def default_workers() -> int:
    return max(1, int(os.environ.get("CLIQUEANNEAL_WORKERS", "1")))


@dataclass
class DetectResult:
    predictions: list[frozenset[int]]
    runs: list[AnnealResult]

    @property
    def avg_steps(self) -> float:
        return float(np.mean([r.steps for r in self.runs])) if self.runs else 0.0


def dedup(sets: Iterable[frozenset[int]]) -> list[frozenset[int]]:
    seen: set[frozenset[int]] = set()
    out = []
    for s in sets:
        if s not in seen:
            seen.add(s)
            out.append(s)
    return out


def detect(
    params: ModelParams,
    g: Graph,
    cliques: CliqueIndex,
    candidates: Sequence[Iterable[int]],
    sched: TempSchedule,
    cfg: AnnealConfig | None = None,
    workers: int = 1,
) -> DetectResult:
    """Anneal each candidate independently; identical outputs are merged.

    Runs for repeated candidates are computed once and shared.
    """
    cfg = cfg or AnnealConfig()
    members = [frozenset(c) for c in candidates]
    uniq = dedup(members)
    if workers > 1 and len(uniq) > 1:
        with get_context("fork").Pool(workers, _init_worker, (params, g, cliques, sched, cfg)) as pool:
            done = pool.map(_anneal_worker, uniq, chunksize=max(1, len(uniq) // (4 * workers)))
    else:
        done = [anneal(params, g, cliques, m, sched, cfg) for m in uniq]
    by_start = dict(zip(uniq, done))
    runs = [by_start[m] for m in members]
    return DetectResult(dedup(r.members for r in runs), runs)


def write_trace(runs: Sequence[AnnealResult], path: str | Path) -> None:
    with open(path, "w") as fh:
        for i, run in enumerate(runs):
            for rec in run.trace.records:
                fh.write(json.dumps({"candidate": i, **rec}, sort_keys=True) + "\n")

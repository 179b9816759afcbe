"""Training samples and the four crystallization losses.

Every loss takes a :class:`~cliqueanneal.neural.Tape`, returns its
unweighted value and seeds ``scale * dLoss`` into the tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import hyperbolic as hyp
from .cliques import CliqueIndex, top_cliques
from .graph import Graph, distort_remove, distort_replace, one_hop_neighbors
from .neural import Tape

BCE_FLOOR = 1e-12
UNDERGROWN, EQUILIBRIUM, OVERGROWN = 0, 1, 2


class SamplingError(RuntimeError):
    pass


@dataclass
class SampleBatch:
    a1: frozenset[int]
    a2: frozenset[int]
    a3: frozenset[int]
    cliques: list[frozenset[int]]  # largest cliques of a1, size-descending
    a1_bar: frozenset[int]
    b_bar: frozenset[int]
    c_bar: frozenset[int]
    a1_dot: frozenset[int]
    a1_breve: frozenset[int]
    source: tuple[int, int, int] = (0, 0, 0)

    @property
    def b(self) -> frozenset[int]:
        return self.cliques[0]

    @property
    def c(self) -> frozenset[int]:
        return self.cliques[1]

    @property
    def pos_s(self):
        return [(self.b, self.a1), (self.c, self.a1), (self.a1_dot, self.a1)]

    @property
    def neg_s(self):
        return [(self.a1 | self.a2, self.a1), (self.a2 | self.a3, self.a2), (self.a3 | self.a1, self.a3)]

    @property
    def pos_d(self):
        return [(self.a1, self.a1_bar), (self.b, self.b_bar), (self.c, self.c_bar)]

    @property
    def integrity_sets(self) -> list[list[frozenset[int]]]:
        return [
            [self.b, self.c, self.a1_dot],
            [self.a1, self.a2, self.a3],
            [self.a1 | self.a1_breve, self.a1 | self.a2, self.a2 | self.a3, self.a3 | self.a1],
        ]


@dataclass
class LossWeights:
    gamma_e: float = 1.0
    gamma_c: float = 1.0
    gamma_i: float = 1.0
    alpha: float = 0.1

    def __post_init__(self):
        for name in ("gamma_e", "gamma_c", "gamma_i", "alpha"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative")


def sample_batch(
    g: Graph,
    train: Sequence[frozenset[int]],
    cliques: CliqueIndex,
    rng: np.random.Generator,
    *,
    a1_index: int | None = None,
    m_pct: float = 25.0,
    lambda_clq: int = 2,
    max_retries: int = 100,
) -> SampleBatch:
    """Draw distinct ``a1, a2, a3`` and build every derived subgraph.

    ``a1_index`` pins ``a1``; if that community cannot serve as ``a1``
    (fewer than two contained cliques, or a skipped distortion), ``a1`` is
    redrawn uniformly.
    """
    if len(train) < 3:
        raise SamplingError("need at least 3 training communities")
    need = max(2, lambda_clq)
    for attempt in range(max_retries):
        i1 = a1_index if (a1_index is not None and attempt == 0) else int(rng.integers(len(train)))
        a1 = train[i1]
        qs = top_cliques(cliques, a1, need)
        if len(qs) < need or len(a1) < 4:
            continue
        others = [i for i in range(len(train)) if i != i1]
        i2, i3 = (int(i) for i in rng.choice(others, size=2, replace=False))
        a1_bar, s1 = distort_replace(g, a1, m_pct, rng)
        b_bar, s2 = distort_replace(g, qs[0], m_pct, rng)
        c_bar, s3 = distort_replace(g, qs[1], m_pct, rng)
        a1_dot, s4 = distort_remove(g, a1, m_pct, rng)
        if s1 or s2 or s3 or s4:
            continue
        return SampleBatch(
            a1, train[i2], train[i3], qs, a1_bar, b_bar, c_bar, a1_dot,
            one_hop_neighbors(g, a1), (i1, i2, i3),
        )
    raise SamplingError(
        f"no usable a1 after {max_retries} draws; training communities need "
        "at least two contained cliques of size >= 3 and an outside neighbor"
    )


def loss_energy(batch: SampleBatch, tape: Tape, alpha: float = 0.1, scale: float = 1.0) -> float:
    """Size hinge over Pos-S/Neg-S plus the defect hinge over Pos-D.

    Hinges at exactly zero margin contribute neither value nor gradient.
    """
    total = 0.0
    for i, j in batch.pos_s + batch.pos_d:
        m = tape.energy(i) - tape.energy(j)
        if m > 0:
            total += m
            tape.seed_energy(i, scale)
            tape.seed_energy(j, -scale)
    for i, j in batch.neg_s:
        m = alpha - (tape.energy(i) - tape.energy(j))
        if m > 0:
            total += m
            tape.seed_energy(i, -scale)
            tape.seed_energy(j, scale)
    return total


def loss_consistency(batch: SampleBatch, tape: Tape, lambda_clq: int = 2, scale: float = 1.0) -> float:
    """Hyperbolic distance from ``h(a1)`` to the Mobius fold of its top cliques."""
    c = tape.params.config.curvature
    qs = batch.cliques[:lambda_clq]
    if len(qs) < lambda_clq:
        raise ValueError("lambda_clq exceeds the cliques available in a1")
    pts = [tape.embed(q) for q in qs]
    fold = hyp.mobius_fold(pts, c)
    ha = tape.embed(batch.a1)
    dist = hyp.hyp_distance(ha, fold, c)
    if scale:
        g_a, g_fold = hyp.hyp_distance_grad(ha, fold, c)
        tape.seed_h(batch.a1, scale * g_a)
        for q, gq in zip(qs, hyp.mobius_fold_vjp(pts, scale * g_fold, c)):
            tape.seed_h(q, gq)
    return dist


def loss_interface(batch: SampleBatch, tape: Tape, scale: float = 1.0) -> float:
    """Interface hinge over Pos-I = {(a1,b),(a1,c)} and Neg-I = {(a1, a1+nbrs)}.

    For Pos-I the barrier sums over neighbors of the clique that lie in
    ``a1``; for Neg-I over every outside neighbor of ``a1``. Interface
    energies are taken against the smaller subgraph of each pair.
    """
    g = tape.g
    total = 0.0
    a1 = batch.a1
    for j in (batch.b, batch.c):
        barrier = [tape.intf(v, j) for v in sorted(one_hop_neighbors(g, j) & a1)]
        m = tape.energy(a1) - tape.energy(j) - sum(e for e, _ in barrier)
        if m > 0:
            total += m
            tape.seed_energy(a1, scale)
            tape.seed_energy(j, -scale)
            for _, hd in barrier:
                tape.seed_intf(hd, -scale)
    big = a1 | batch.a1_breve
    barrier = [tape.intf(v, a1) for v in sorted(batch.a1_breve)]
    m = tape.energy(a1) - tape.energy(big) + sum(e for e, _ in barrier)
    if m > 0:
        total += m
        tape.seed_energy(a1, scale)
        tape.seed_energy(big, -scale)
        for _, hd in barrier:
            tape.seed_intf(hd, scale)
    return total


def loss_integrity(batch: SampleBatch, tape: Tape, scale: float = 1.0) -> float:
    """One third of the summed three-way binary cross-entropy over S1, S2, S3."""
    total = 0.0
    for label, group in enumerate(batch.integrity_sets):
        y = np.zeros(3)
        y[label] = 1.0
        for sub in group:
            yhat = tape.integrity(sub)
            p = np.maximum(yhat, BCE_FLOOR)
            q = np.maximum(1.0 - yhat, BCE_FLOOR)
            total -= float(np.sum(y * np.log(p) + (1 - y) * np.log(q)))
            if scale:
                g_y = -(y * (yhat > BCE_FLOOR) / p - (1 - y) * ((1 - yhat) > BCE_FLOOR) / q)
                tape.seed_integrity(sub, scale * g_y / 3.0)
    return total / 3.0


@dataclass
class LossBreakdown:
    energy: float
    consistency: float
    interface: float
    total: float = field(default=0.0)


def total_loss(batch: SampleBatch, tape: Tape, weights: LossWeights, lambda_clq: int = 2) -> LossBreakdown:
    """``gE * lossE + gC * lossC + gI * lossI``; the integrity loss is trained separately."""
    le = loss_energy(batch, tape, weights.alpha, scale=weights.gamma_e)
    lc = loss_consistency(batch, tape, lambda_clq, scale=weights.gamma_c)
    li = loss_interface(batch, tape, scale=weights.gamma_i)
    total = weights.gamma_e * le + weights.gamma_c * lc + weights.gamma_i * li
    return LossBreakdown(le, lc, li, total)


def auto_weights(batch: SampleBatch, tape: Tape, alpha: float = 0.1, lambda_clq: int = 2) -> LossWeights:
    """Weights that bring each loss term to magnitude 1 on ``batch``."""
    parts = (
        loss_energy(batch, tape, alpha, scale=0.0),
        loss_consistency(batch, tape, lambda_clq, scale=0.0),
        loss_interface(batch, tape, scale=0.0),
    )
    ge, gc, gi = (1.0 / v if v > 1e-8 else 1.0 for v in parts)
    return LossWeights(ge, gc, gi, alpha)

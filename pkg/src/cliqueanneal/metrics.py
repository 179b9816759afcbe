"""Bi-matching F1/Jaccard and overlapping NMI for community covers."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from typing import Iterable, Literal, Sequence

import numpy as np

logger = logging.getLogger(__name__)

REFERENCE_AMAZON_F1 = 0.9055

Cover = Sequence[frozenset[int]]


def f1(a: frozenset[int], b: frozenset[int]) -> float:
    if not a and not b:
        return 0.0
    return 2.0 * len(a & b) / (len(a) + len(b))


def jaccard(a: frozenset[int], b: frozenset[int]) -> float:
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def _as_cover(cover: Iterable[Iterable[int]]) -> list[frozenset[int]]:
    return [frozenset(c) for c in cover]


def intersections(pred: Cover, truth: Cover) -> np.ndarray:
    """``|pred_i & truth_j|`` for every pair, via an inverted node index."""
    where: dict[int, list[int]] = {}
    for j, t in enumerate(truth):
        for v in t:
            where.setdefault(v, []).append(j)
    out = np.zeros((len(pred), len(truth)), dtype=np.int64)
    for i, p in enumerate(pred):
        for v in p:
            for j in where.get(v, ()):
                out[i, j] += 1
    return out


def _score_matrix(pred: Cover, truth: Cover, kind: str) -> np.ndarray:
    inter = intersections(pred, truth).astype(np.float64)
    ps = np.array([len(p) for p in pred], dtype=np.float64)[:, None]
    ts = np.array([len(t) for t in truth], dtype=np.float64)[None, :]
    if kind == "f1":
        den = ps + ts
        return np.divide(2.0 * inter, den, out=np.zeros_like(inter), where=den > 0)
    if kind == "jaccard":
        den = ps + ts - inter
        return np.divide(inter, den, out=np.zeros_like(inter), where=den > 0)
    raise ValueError(f"unknown score {kind!r}")


def bi_match(pred: Iterable[Iterable[int]], truth: Iterable[Iterable[int]], kind: Literal["f1", "jaccard"] = "f1") -> float:
    """Mean of best-match scores averaged over both sides."""
    pred, truth = _as_cover(pred), _as_cover(truth)
    if not pred or not truth:
        logger.warning("empty cover: bi-matching score defined as 0")
        return 0.0
    s = _score_matrix(pred, truth, kind)
    return float(0.5 * (s.max(axis=1).mean() + s.max(axis=0).mean()))


def _h(p: np.ndarray) -> np.ndarray:
    return np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)


def _membership_entropy(sizes: np.ndarray, n: int) -> np.ndarray:
    p = sizes / n
    return _h(p) + _h(1.0 - p)


def _conditional(inter: np.ndarray, xs: np.ndarray, ys: np.ndarray, n: int) -> np.ndarray:
    """Per ``x``: min over ``y`` of ``H(x | y)``, falling back to ``H(x)`` when
    no ``y`` passes the LFK admissibility test."""
    d = inter
    b = xs[:, None] - d
    c = ys[None, :] - d
    a = n - d - b - c
    ha, hb, hc, hd = (_h(m / n) for m in (a, b, c, d))
    hy = _membership_entropy(ys, n)[None, :]
    cond = ha + hb + hc + hd - hy
    ok = ha + hd >= hb + hc
    hx = _membership_entropy(xs, n)
    cond = np.where(ok, cond, hx[:, None])
    best = cond.min(axis=1) if cond.shape[1] else hx
    return np.minimum(best, hx), hx


def onmi(
    pred: Iterable[Iterable[int]],
    truth: Iterable[Iterable[int]],
    n_nodes: int | None = None,
    variant: Literal["lfk", "max"] = "lfk",
) -> float:
    """Overlapping NMI between two covers.

    ``lfk`` is the Lancichinetti-Fortunato-Kertesz normalization; ``max``
    divides the mutual information by the larger cover entropy. The node
    universe defaults to the union of both covers.
    """
    pred = [p for p in _as_cover(pred) if p]
    truth = [t for t in _as_cover(truth) if t]
    universe = set().union(*pred, *truth)
    n = n_nodes if n_nodes is not None else len(universe)
    if not pred or not truth or n == 0:
        return 0.0
    inter = intersections(pred, truth).astype(np.float64)
    xs = np.array([len(p) for p in pred], dtype=np.float64)
    ys = np.array([len(t) for t in truth], dtype=np.float64)
    hx_y, hx = _conditional(inter, xs, ys, n)
    hy_x, hy = _conditional(inter.T, ys, xs, n)
    if variant == "lfk":
        nx = np.divide(hx_y, hx, out=np.zeros_like(hx), where=hx > 0)
        ny = np.divide(hy_x, hy, out=np.zeros_like(hy), where=hy > 0)
        val = 1.0 - 0.5 * (nx.mean() + ny.mean())
    elif variant == "max":
        HX, HY = hx.sum(), hy.sum()
        if max(HX, HY) == 0:
            return 1.0 if pred == truth else 0.0
        mi = 0.5 * (HX - hx_y.sum() + HY - hy_x.sum())
        val = mi / max(HX, HY)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return float(min(1.0, max(0.0, val)))


@dataclass
class EvalReport:
    f1: float
    jaccard: float
    onmi: float
    n_pred: int
    n_truth: int
    pred_best: list[tuple[int, float]]
    truth_best: list[tuple[int, float]]
    onmi_variant: str = "lfk"

    def summary(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k not in ("pred_best", "truth_best")}

    def to_text(self) -> str:
        lines = [f"{k}: {v:.4f}" if isinstance(v, float) else f"{k}: {v}" for k, v in self.summary().items()]
        lines.append(f"reference: published Amazon setting-1 F1 {REFERENCE_AMAZON_F1} (full SNAP data)")
        return "\n".join(lines)

    def to_json(self) -> str:
        data = asdict(self)
        data["reference_amazon_f1"] = REFERENCE_AMAZON_F1
        return json.dumps(data, indent=2)


def report(
    pred: Iterable[Iterable[int]],
    truth: Iterable[Iterable[int]],
    n_nodes: int | None = None,
    onmi_variant: Literal["lfk", "max"] = "lfk",
) -> EvalReport:
    pred, truth = _as_cover(pred), _as_cover(truth)
    if not pred or not truth:
        return EvalReport(0.0, 0.0, 0.0, len(pred), len(truth), [], [], onmi_variant)
    s = _score_matrix(pred, truth, "f1")
    pred_best = [(int(j), float(s[i, j])) for i, j in enumerate(s.argmax(axis=1))]
    truth_best = [(int(i), float(s[i, j])) for j, i in enumerate(s.argmax(axis=0))]
    return EvalReport(
        bi_match(pred, truth, "f1"),
        bi_match(pred, truth, "jaccard"),
        onmi(pred, truth, n_nodes, onmi_variant),
        len(pred), len(truth), pred_best, truth_best, onmi_variant,
    )

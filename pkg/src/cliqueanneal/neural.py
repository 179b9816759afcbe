"""Subgraph encoder, interface-energy and integrity heads, Adam, checkpoints.

Encoder for an induced subgraph ``S``::

    z0(v)   = relu(x_v Wf + bf)                x_v: log1p of the 6 aug features
    zk      = act(A_S z(k-1) Wk + bk)          A_S: D^-1/2 (A + I) D^-1/2 on S
    z(v)    = relu([z0 | ... | zK](v) Wa + ba)
    h(S)    = exp0(sum_v z(v))

Gradients are hand-derived for exactly this architecture; :class:`Tape`
records forward passes and replays them in reverse.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import hyperbolic as hyp
from .graph import Graph, ext_feature, mis_num

MAGIC = b"CQAN"
FORMAT_VERSION = 1


class NumericError(ArithmeticError):
    pass


@dataclass
class NetConfig:
    dim: int = 64
    layers: int = 3
    curvature: float = 1.0
    gcn_activation: str = "relu"  # "relu" or "linear"
    agg_init_gain: float = 0.05


ENCODER_PREFIXES = ("feat.", "gcn", "agg.")
INTF_NAMES = ("intf.W", "intf.b")
INTEG_NAMES = ("integ.W", "integ.b")
CORE_NAMES = ("core.W", "core.b")


def param_shapes(cfg: NetConfig) -> dict[str, tuple[int, ...]]:
    d, k = cfg.dim, cfg.layers
    shapes: dict[str, tuple[int, ...]] = {"feat.W": (6, d), "feat.b": (d,)}
    for i in range(1, k + 1):
        shapes[f"gcn{i}.W"] = (d, d)
        shapes[f"gcn{i}.b"] = (d,)
    shapes["agg.W"] = ((k + 1) * d, d)
    shapes["agg.b"] = (d,)
    shapes["intf.W"] = (9,)
    shapes["intf.b"] = (1,)
    shapes["integ.W"] = (3, 2 * d)
    shapes["integ.b"] = (3,)
    shapes["core.W"] = (12,)
    shapes["core.b"] = (1,)
    return shapes


def encoder_names(cfg: NetConfig) -> list[str]:
    return [n for n in param_shapes(cfg) if n.startswith(ENCODER_PREFIXES)]


@dataclass
class ModelParams:
    tensors: dict[str, np.ndarray]
    config: NetConfig = field(default_factory=NetConfig)
    seed: int = 0
    echo: dict = field(default_factory=dict)

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.tensors.items()}, NetConfig(**asdict(self.config)), self.seed, dict(self.echo))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]


def init_params(cfg: NetConfig, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases. The aggregation projection is
    scaled by ``agg_init_gain`` so that pooled embeddings start well inside
    the ball instead of saturating ``tanh``."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".b"):
            tensors[name] = np.zeros(shape)
            continue
        if len(shape) == 1:
            fan_in, fan_out = shape[0], 1
        elif name == "integ.W":
            fan_in, fan_out = shape[1], 1
        else:
            fan_in, fan_out = shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        if name == "agg.W":
            limit *= cfg.agg_init_gain
        tensors[name] = rng.uniform(-limit, limit, size=shape)
    return ModelParams(tensors, cfg, seed)


def zero_grads(params: ModelParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.tensors.items()}


# --- primitives -------------------------------------------------------------


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - np.max(x))
    return e / e.sum()


def input_transform(x: np.ndarray) -> np.ndarray:
    return np.log1p(x)


def normalized_adjacency(g: Graph, nodes: list[int]) -> np.ndarray:
    pos = {u: i for i, u in enumerate(nodes)}
    members = pos.keys()
    s = len(nodes)
    a = np.eye(s)
    for i, u in enumerate(nodes):
        for w in g.nbr_sets[u] & members:
            a[i, pos[w]] = 1.0
    dinv = 1.0 / np.sqrt(a.sum(axis=1))
    return a * dinv[:, None] * dinv[None, :]


# --- encoder ------------------------------------------------------------------


@dataclass
class _EncCache:
    x: np.ndarray
    adj: np.ndarray
    pre: list[np.ndarray]
    prop: list[np.ndarray]
    z: list[np.ndarray]
    zcat: np.ndarray
    pre_agg: np.ndarray
    zg: np.ndarray


def _encode(params: ModelParams, g: Graph, sub: Iterable[int], keep: bool):
    nodes = sorted(sub)
    if not nodes:
        raise ValueError("cannot encode an empty subgraph")
    cfg = params.config
    t = params.tensors
    x = input_transform(g.aug_features[nodes])
    adj = normalized_adjacency(g, nodes)
    p0 = x @ t["feat.W"] + t["feat.b"]
    z = np.maximum(p0, 0.0)
    pre, prop, zs = [p0], [], [z]
    for k in range(1, cfg.layers + 1):
        az = adj @ z
        pk = az @ t[f"gcn{k}.W"] + t[f"gcn{k}.b"]
        z = np.maximum(pk, 0.0) if cfg.gcn_activation == "relu" else pk
        pre.append(pk)
        prop.append(az)
        zs.append(z)
    zcat = np.concatenate(zs, axis=1)
    pa = zcat @ t["agg.W"] + t["agg.b"]
    zg = np.maximum(pa, 0.0).sum(axis=0)
    h = hyp.exp0(zg, cfg.curvature)
    cache = _EncCache(x, adj, pre, prop, zs, zcat, pa, zg) if keep else None
    return h, cache


def encode_subgraph(params: ModelParams, g: Graph, sub: Iterable[int]) -> np.ndarray:
    """Hyperbolic embedding ``h(S)`` of the induced subgraph on ``sub``."""
    return _encode(params, g, sub, keep=False)[0]


def _encode_backward(params: ModelParams, cache: _EncCache, g_h: np.ndarray, grads: dict) -> None:
    cfg = params.config
    t = params.tensors
    d = cfg.dim
    g_zg = hyp.exp0_vjp(cache.zg, g_h, cfg.curvature)
    g_pa = np.where(cache.pre_agg > 0, g_zg[None, :], 0.0)
    grads["agg.W"] += cache.zcat.T @ g_pa
    grads["agg.b"] += g_pa.sum(axis=0)
    g_zcat = g_pa @ t["agg.W"].T
    g_z = [g_zcat[:, i * d : (i + 1) * d].copy() for i in range(cfg.layers + 1)]
    for k in range(cfg.layers, 0, -1):
        pk = cache.pre[k]
        g_pk = g_z[k] * (pk > 0) if cfg.gcn_activation == "relu" else g_z[k]
        grads[f"gcn{k}.W"] += cache.prop[k - 1].T @ g_pk
        grads[f"gcn{k}.b"] += g_pk.sum(axis=0)
        # adjacency is symmetric
        g_z[k - 1] += cache.adj @ (g_pk @ t[f"gcn{k}.W"].T)
    g_p0 = g_z[0] * (cache.pre[0] > 0)
    grads["feat.W"] += cache.x.T @ g_p0
    grads["feat.b"] += g_p0.sum(axis=0)


# --- heads --------------------------------------------------------------------


def interface_features(g: Graph, v: int, sub: Iterable[int], mis: int | None = None) -> np.ndarray:
    sub = frozenset(sub)
    return input_transform(np.concatenate([g.aug_features[v], ext_feature(g, v, sub, mis)]))


def interface_energy(params: ModelParams, g: Graph, v: int, sub: Iterable[int], mis: int | None = None) -> float:
    """``softplus(W_I f_v + b_I)`` with ``f_v = [aug(v) | ext(v, sub)]``."""
    f = interface_features(g, v, sub, mis)
    return float(softplus(f @ params["intf.W"] + params["intf.b"][0]))


def integrity_logits_input(h: np.ndarray) -> np.ndarray:
    r = np.linalg.norm(h)
    hbar = h / r if r > 0 else np.zeros_like(h)
    return np.concatenate([h, hbar])


def integrity_from_embedding(params: ModelParams, h: np.ndarray) -> np.ndarray:
    logits = params["integ.W"] @ integrity_logits_input(h) + params["integ.b"]
    return softmax(logits)


def integrity_score(params: ModelParams, g: Graph, sub: Iterable[int]) -> np.ndarray:
    """Softmax triplet (undergrown, equilibrium, overgrown) for ``sub``."""
    return integrity_from_embedding(params, encode_subgraph(params, g, sub))


# --- tape ---------------------------------------------------------------------


class _Emb:
    __slots__ = ("h", "cache", "grad")

    def __init__(self, h, cache):
        self.h = h
        self.cache = cache
        self.grad = None


class Tape:
    """Records one loss evaluation and produces parameter gradients.

    Loss code reads values through :meth:`embed`, :meth:`energy`,
    :meth:`intf` and :meth:`integrity`, then seeds upstream gradients with
    the matching ``seed_*`` method. :meth:`backward` returns gradients for
    every tensor; untouched tensors get zeros.
    """

    def __init__(self, params: ModelParams, g: Graph, encoder_grads: bool = True):
        self.params = params
        self.g = g
        self.encoder_grads = encoder_grads
        self._emb: dict[frozenset, _Emb] = {}
        self._intf: list[list] = []
        self._integ: dict[frozenset, list] = {}
        self._mis: dict[frozenset, int] = {}

    def _rec(self, sub) -> _Emb:
        key = frozenset(sub)
        rec = self._emb.get(key)
        if rec is None:
            h, cache = _encode(self.params, self.g, key, keep=self.encoder_grads)
            rec = self._emb[key] = _Emb(h, cache)
        return rec

    def embed(self, sub) -> np.ndarray:
        return self._rec(sub).h

    def seed_h(self, sub, g_h: np.ndarray) -> None:
        rec = self._rec(sub)
        rec.grad = g_h.copy() if rec.grad is None else rec.grad + g_h

    def energy(self, sub) -> float:
        return hyp.stored_energy(self._rec(sub).h)

    def seed_energy(self, sub, coeff: float) -> None:
        if coeff:
            self.seed_h(sub, coeff * hyp.stored_energy_grad(self._rec(sub).h))

    def mis(self, sub) -> int:
        key = frozenset(sub)
        if key not in self._mis:
            self._mis[key] = mis_num(self.g, key)
        return self._mis[key]

    def intf(self, v: int, sub) -> tuple[float, int]:
        """Interface energy of ``v`` against ``sub`` and a handle for seeding."""
        f = interface_features(self.g, v, sub, self.mis(sub))
        pre = float(f @ self.params["intf.W"] + self.params["intf.b"][0])
        self._intf.append([f, pre, 0.0])
        return float(softplus(pre)), len(self._intf) - 1

    def seed_intf(self, handle: int, coeff: float) -> None:
        self._intf[handle][2] += coeff

    def integrity(self, sub) -> np.ndarray:
        key = frozenset(sub)
        rec = self._integ.get(key)
        if rec is None:
            feat = integrity_logits_input(self.embed(key))
            yhat = softmax(self.params["integ.W"] @ feat + self.params["integ.b"])
            rec = self._integ[key] = [feat, yhat, np.zeros(3)]
        return rec[1]

    def seed_integrity(self, sub, g_yhat: np.ndarray) -> None:
        self.integrity(sub)
        self._integ[frozenset(sub)][2] += g_yhat

    def backward(self) -> dict[str, np.ndarray]:
        p = self.params
        grads = zero_grads(p)
        for f, pre, g_out in self._intf:
            if g_out:
                g_pre = g_out * sigmoid(pre)
                grads["intf.W"] += g_pre * f
                grads["intf.b"] += g_pre
        for key, (feat, yhat, g_y) in self._integ.items():
            if not g_y.any():
                continue
            g_logit = yhat * (g_y - g_y @ yhat)
            grads["integ.W"] += np.outer(g_logit, feat)
            grads["integ.b"] += g_logit
            if self.encoder_grads:
                g_feat = p["integ.W"].T @ g_logit
                d = p.config.dim
                h = self._emb[key].h
                r = np.linalg.norm(h)
                g_h = g_feat[:d].copy()
                if r > 0:
                    hbar = h / r
                    g_bar = g_feat[d:]
                    g_h += (g_bar - hbar * (hbar @ g_bar)) / r
                self.seed_h(key, g_h)
        if self.encoder_grads:
            for rec in self._emb.values():
                if rec.grad is not None and rec.grad.any():
                    _encode_backward(p, rec.cache, rec.grad, grads)
        for name, arr in grads.items():
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"non-finite gradient in {name}")
        return grads


# --- optimizer ----------------------------------------------------------------


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray], names: Iterable[str] | None = None) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k in names if names is not None else tensors:
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            tensors[k] -= self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


def adam_step(tensors, grads, state: Adam, names=None) -> Adam:
    state.step(tensors, grads, names)
    return state


# --- checkpoints --------------------------------------------------------------


def save_checkpoint(params: ModelParams, path: str | Path) -> None:
    """Binary layout (little-endian): magic, u32 version, u32 tensor count,
    then per tensor: u16 name length, name, u8 ndim, u64 dims, f64 data;
    then u32 length + JSON config echo, then u64 seed."""
    out = bytearray(MAGIC)
    out += struct.pack("<II", FORMAT_VERSION, len(params.tensors))
    for name in sorted(params.tensors):
        arr = np.ascontiguousarray(params.tensors[name], dtype="<f8")
        raw = name.encode()
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
        out += arr.tobytes()
    echo = dict(params.echo)
    echo["net"] = asdict(params.config)
    blob = json.dumps(echo, sort_keys=True).encode()
    out += struct.pack("<I", len(blob)) + blob
    out += struct.pack("<Q", params.seed)
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path: str | Path) -> ModelParams:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, count = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + nlen].decode()
        off += nlen
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}Q", data, off)
        off += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
        off += 8 * size
    (blen,) = struct.unpack_from("<I", data, off)
    off += 4
    echo = json.loads(data[off : off + blen].decode())
    off += blen
    (seed,) = struct.unpack_from("<Q", data, off)
    cfg = NetConfig(**echo.pop("net"))
    expected = param_shapes(cfg)
    if set(expected) != set(tensors):
        raise ValueError(f"{path}: tensor names do not match the architecture")
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise ValueError(f"{path}: {name} has shape {tensors[name].shape}, expected {shape}")
    return ModelParams(tensors, cfg, seed, echo)

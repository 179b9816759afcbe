"""Poincare-ball operations and their vector-Jacobian products.

Points are plain 1-d float arrays; every function takes the curvature
``c > 0``. Outputs of :func:`exp0` and :func:`mobius_add` are projected
to radius ``(1 - 1e-10) / sqrt(c)``.
"""

from __future__ import annotations

import numpy as np

BALL_EPS = 1e-10
SMALL_NORM = 1e-6


def max_radius(c: float) -> float:
    return (1.0 - BALL_EPS) / np.sqrt(c)


def project(x: np.ndarray, c: float = 1.0) -> np.ndarray:
    r = np.linalg.norm(x)
    rmax = max_radius(c)
    if r > rmax:
        return x * (rmax / r)
    return x


def project_vjp(x: np.ndarray, g: np.ndarray, c: float = 1.0) -> np.ndarray:
    r = np.linalg.norm(x)
    rmax = max_radius(c)
    if r <= rmax:
        return g
    u = x / r
    return (rmax / r) * (g - u * (u @ g))


def _tanh_ratio(u: float) -> tuple[float, float]:
    """``tanh(u)/u`` and its derivative in ``u``."""
    if u < SMALL_NORM:
        return 1.0 - u * u / 3.0, -2.0 * u / 3.0
    t = np.tanh(u)
    return t / u, ((1.0 - t * t) * u - t) / (u * u)


def exp0(x: np.ndarray, c: float = 1.0) -> np.ndarray:
    """Exponential map at the origin: ``tanh(sqrt(c)|x|) x / (sqrt(c)|x|)``."""
    x = np.asarray(x, dtype=np.float64)
    sc = np.sqrt(c)
    f, _ = _tanh_ratio(sc * np.linalg.norm(x))
    return project(f * x, c)


def exp0_vjp(x: np.ndarray, g: np.ndarray, c: float = 1.0) -> np.ndarray:
    sc = np.sqrt(c)
    r = np.linalg.norm(x)
    f, df = _tanh_ratio(sc * r)
    g = project_vjp(f * x, g, c)
    out = f * g
    if r > 0:
        out = out + (sc * df / r) * (x @ g) * x
    return out


def mobius_add(v: np.ndarray, w: np.ndarray, c: float = 1.0) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if v.shape != w.shape:
        raise ValueError(f"dimension mismatch: {v.shape} vs {w.shape}")
    vw, vv, ww = v @ w, v @ v, w @ w
    num = (1 + 2 * c * vw + c * ww) * v + (1 - c * vv) * w
    den = 1 + 2 * c * vw + c * c * vv * ww
    return project(num / den, c)


def mobius_add_vjp(v: np.ndarray, w: np.ndarray, g: np.ndarray, c: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    vw, vv, ww = v @ w, v @ v, w @ w
    a = 1 + 2 * c * vw + c * ww
    b = 1 - c * vv
    num = a * v + b * w
    den = 1 + 2 * c * vw + c * c * vv * ww
    g = project_vjp(num / den, g, c)
    g_num = g / den
    g_den = -(g @ num) / (den * den)
    g_a = g_num @ v
    g_b = g_num @ w
    g_vw = 2 * c * g_a + 2 * c * g_den
    g_vv = -c * g_b + c * c * ww * g_den
    g_ww = c * g_a + c * c * vv * g_den
    gv = a * g_num + g_vw * w + 2 * g_vv * v
    gw = b * g_num + g_vw * v + 2 * g_ww * w
    return gv, gw


def mobius_fold(points: list[np.ndarray], c: float = 1.0) -> np.ndarray:
    """Left fold ``((p0 + p1) + p2) + ...`` under Mobius addition."""
    acc = points[0]
    for p in points[1:]:
        acc = mobius_add(acc, p, c)
    return acc


def mobius_fold_vjp(points: list[np.ndarray], g: np.ndarray, c: float = 1.0) -> list[np.ndarray]:
    partial = [points[0]]
    for p in points[1:]:
        partial.append(mobius_add(partial[-1], p, c))
    grads = [None] * len(points)
    for i in range(len(points) - 1, 0, -1):
        g, grads[i] = mobius_add_vjp(partial[i - 1], points[i], g, c)
    grads[0] = g
    return grads


def _distance_arg(x, y, c):
    cx = 1 - c * (x @ x)
    cy = 1 - c * (y @ y)
    if cx <= 0 or cy <= 0:
        raise ValueError("point lies on or outside the Poincare ball")
    diff = x - y
    return 2 * c * (diff @ diff) / (cx * cy), cx, cy, diff


def hyp_distance(x: np.ndarray, y: np.ndarray, c: float = 1.0) -> float:
    """Geodesic distance ``acosh(1 + 2c|x-y|^2 / ((1-c|x|^2)(1-c|y|^2))) / sqrt(c)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    t, _, _, _ = _distance_arg(x, y, c)
    # acosh(1 + t) = log1p(t + sqrt(t (t + 2))) keeps precision near t = 0
    return float(np.log1p(t + np.sqrt(t * (t + 2.0))) / np.sqrt(c))


def hyp_distance_grad(x: np.ndarray, y: np.ndarray, c: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of :func:`hyp_distance`; zero at ``x == y`` (subgradient choice)."""
    t, cx, cy, diff = _distance_arg(x, y, c)
    if t <= 0:
        return np.zeros_like(x), np.zeros_like(y)
    dd_dt = 1.0 / (np.sqrt(c) * np.sqrt(t * (t + 2.0)))
    base = 2 * c / (cx * cy)
    d2 = diff @ diff
    gx = base * (2 * diff + d2 * 2 * c * x / cx)
    gy = base * (-2 * diff + d2 * 2 * c * y / cy)
    return dd_dt * gx, dd_dt * gy


def stored_energy(h: np.ndarray) -> float:
    return float(np.linalg.norm(h))


def stored_energy_grad(h: np.ndarray) -> np.ndarray:
    r = np.linalg.norm(h)
    if r == 0:
        return np.zeros_like(h)
    return h / r

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cliqueanneal import hyperbolic as hyp
from oracles import poincare_distance_ref


def ball_point(rng, d, c=1.0, rmax=0.95):
    x = rng.standard_normal(d)
    return x / np.linalg.norm(x) * rng.uniform(0, rmax) / np.sqrt(c)


def test_exp0_fixtures():
    assert np.array_equal(hyp.exp0(np.zeros(4)), np.zeros(4))
    out = hyp.exp0(np.array([10.0, 0, 0]))
    assert np.linalg.norm(out) == pytest.approx(math.tanh(10), abs=1e-12)
    assert np.linalg.norm(out) < 1
    x = np.array([0.3, -1.2, 2.0])
    y = hyp.exp0(x, 2.0)
    ratio = y / x
    assert np.allclose(ratio, ratio[0]) and ratio[0] > 0


def test_exp0_small_norm_series():
    x = np.array([1e-8, -2e-8])
    np.testing.assert_allclose(hyp.exp0(x), x, rtol=1e-12)


def test_exp0_energy_strictly_increasing():
    rng = np.random.default_rng(0)
    for _ in range(20):
        u = rng.standard_normal(8)
        u /= np.linalg.norm(u)
        # strict while tanh(r) stays below the clamp radius (r < ~11.6 for c = 1)
        e = [hyp.stored_energy(hyp.exp0(r * u)) for r in np.linspace(0, 11.5, 400)]
        assert all(b > a for a, b in zip(e, e[1:]))
        e = [hyp.stored_energy(hyp.exp0(r * u)) for r in np.linspace(0, 20, 400)]
        assert all(b >= a - 1e-15 for a, b in zip(e, e[1:]))  # clamped norms agree to an ulp
        assert max(e) < 1


def test_distance_closed_form():
    d = hyp.hyp_distance(np.zeros(3), np.array([0.6, 0, 0]))
    assert abs(d - math.log(4)) < 1e-12


def test_distance_errors_outside_ball():
    with pytest.raises(ValueError):
        hyp.hyp_distance(np.array([1.0, 0]), np.zeros(2))


def test_mobius_dimension_mismatch():
    with pytest.raises(ValueError):
        hyp.mobius_add(np.zeros(2), np.zeros(3))


def test_stored_energy_fixtures():
    assert hyp.stored_energy(np.zeros(3)) == 0
    assert hyp.stored_energy(np.array([0.6, 0.0])) == pytest.approx(0.6)


@given(st.integers(0, 2**32 - 1), st.integers(1, 16), st.sampled_from([0.5, 1.0, 2.0]))
def test_identities(seed, d, c):
    rng = np.random.default_rng(seed)
    x, y, z = (ball_point(rng, d, c) for _ in range(3))
    assert hyp.hyp_distance(x, x, c) == 0
    assert abs(hyp.hyp_distance(x, y, c) - hyp.hyp_distance(y, x, c)) < 1e-9
    assert hyp.hyp_distance(x, z, c) <= hyp.hyp_distance(x, y, c) + hyp.hyp_distance(y, z, c) + 1e-9
    np.testing.assert_allclose(hyp.mobius_add(np.zeros(d), y, c), y, atol=1e-9)
    np.testing.assert_allclose(hyp.mobius_add(x, -x, c), 0, atol=1e-9)
    assert np.linalg.norm(hyp.mobius_add(x, y, c)) < 1 / np.sqrt(c)


def test_distance_matches_textbook_formula():
    rng = np.random.default_rng(1)
    for _ in range(200):
        c = float(rng.choice([0.5, 1.0, 3.0]))
        x, y = ball_point(rng, 5, c), ball_point(rng, 5, c)
        assert hyp.hyp_distance(x, y, c) == pytest.approx(poincare_distance_ref(x, y, c), rel=1e-9)


def test_closure_near_boundary():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        x, y = ball_point(rng, 3, rmax=1 - 1e-9), ball_point(rng, 3, rmax=1 - 1e-9)
        assert np.linalg.norm(hyp.mobius_add(x, y)) < 1
        assert np.linalg.norm(hyp.exp0(rng.standard_normal(3) * 50)) < 1


def _fd(f, x, u, eps=1e-5):
    return (f(x + eps * u) - f(x - eps * u)) / (2 * eps)


def _rel(a, b):
    s = max(abs(a), abs(b))
    return abs(a - b) / s if s > 1e-10 else abs(a - b)


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
def test_vjps_match_finite_differences(c):
    rng = np.random.default_rng(3)
    for _ in range(30):
        d = 6
        g = rng.standard_normal(d)
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        x = rng.standard_normal(d) * 0.7
        assert _rel(hyp.exp0_vjp(x, g, c) @ u, _fd(lambda t: g @ hyp.exp0(t, c), x, u)) < 1e-4
        v, w = ball_point(rng, d, c, 0.8), ball_point(rng, d, c, 0.8)
        gv, gw = hyp.mobius_add_vjp(v, w, g, c)
        assert _rel(gv @ u, _fd(lambda t: g @ hyp.mobius_add(t, w, c), v, u)) < 1e-4
        assert _rel(gw @ u, _fd(lambda t: g @ hyp.mobius_add(v, t, c), w, u)) < 1e-4
        dx, dy = hyp.hyp_distance_grad(v, w, c)
        assert _rel(dx @ u, _fd(lambda t: hyp.hyp_distance(t, w, c), v, u)) < 1e-4
        assert _rel(dy @ u, _fd(lambda t: hyp.hyp_distance(v, t, c), w, u)) < 1e-4
        pts = [ball_point(rng, d, c, 0.5) for _ in range(3)]
        grads = hyp.mobius_fold_vjp(pts, g, c)
        for i in range(3):
            def f(t, i=i):
                q = list(pts)
                q[i] = t
                return g @ hyp.mobius_fold(q, c)
            assert _rel(grads[i] @ u, _fd(f, pts[i], u)) < 1e-4


def test_distance_grad_zero_at_coincidence():
    x = np.array([0.1, 0.2])
    gx, gy = hyp.hyp_distance_grad(x, x)
    assert not gx.any() and not gy.any()


def test_project_clamps_radius():
    x = hyp.project(np.array([2.0, 0.0]), 4.0)
    assert np.linalg.norm(x) == pytest.approx(hyp.max_radius(4.0))

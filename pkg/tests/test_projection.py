import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from blocknorm_omd.errors import DomainError, NumericalFailure
from blocknorm_omd.geometry import Partition, random_equal_partition
from blocknorm_omd.mirror_maps import MirrorMapSpec, bregman_div, potential_grad
from blocknorm_omd.projection import (
    BodySpec,
    bregman_project,
    entropic_project_simplex,
    euclidean_project_simplex,
    fw_gap,
    lmo,
    project_dual,
)
from blocknorm_omd.projection.frank_wolfe import frank_wolfe_project

TOL = 1e-9


def simplex_grid(d, step):
    """Barycentric grid of Δ_d with spacing ``step``."""
    k = int(round(1 / step))
    pts = [c for c in itertools.product(range(k + 1), repeat=d - 1) if sum(c) <= k]
    G = np.array(pts, dtype=float)
    return np.hstack([G, k - G.sum(axis=1, keepdims=True)]) / k


def simplex3_grid():
    k = 1000
    i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
    keep = i + j <= k
    i, j = i[keep], j[keep]
    return np.stack([i, j, k - i - j], axis=1) / k


GRID3 = simplex3_grid()


def block_potential(Z, m):
    """Vectorised ``h`` written directly from its definition (oracle side)."""
    g, p = m.gamma, m.p
    r = np.linalg.norm(Z[:, m.partition.order].reshape(len(Z), m.n, -1), axis=-1)
    return (r**p).sum(axis=1) / (g * p)


# ---------------------------------------------------------------------------
# bodies and the linear minimisation oracle


def test_lmo_examples():
    s3 = BodySpec.simplex(3)
    k, v = lmo(s3, [0.0, -1, 0])
    assert k == 1 and np.array_equal(v, [0, 1, 0])
    assert lmo(s3, [1.0, 1, 1])[0] == 0
    P = BodySpec.simplex_hull_with_center(4, 0.1)
    np.testing.assert_allclose(P.vertex_values(-np.ones(4)), [-1, -1, -1, -1, -0.4])
    assert lmo(P, -np.ones(4))[0] == 0


def test_body_constructors():
    assert BodySpec.simplex_hull_with_center(4, 0.25).kind == "simplex"
    B0 = BodySpec.simplex_hull_with_center(3, 0.0)
    assert B0.kind == "general" and B0.n_vertices == 4
    assert B0.contains([0.2, 0.3, 0.1]) and not B0.contains([0.5, 0.6, 0.1])
    P = BodySpec.simplex_hull_with_center(64, 1 / 16)
    Ph = BodySpec.scaled(P, 1 / 4)
    np.testing.assert_allclose(Ph.vertices[:64], np.eye(64) / 4)
    np.testing.assert_allclose(Ph.vertices[64], np.full(64, 1 / 64))
    assert Ph.contains(np.full(64, 1 / 64)) and Ph.contains(np.eye(64)[3] / 4)
    assert not Ph.contains(np.eye(64)[3])
    with pytest.raises(ValueError):
        BodySpec.simplex_hull_with_center(3, -1)
    with pytest.raises(ValueError):
        BodySpec.scaled(P, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 12), st.floats(0.01, 3.0), st.integers(0, 2**31 - 1))
def test_pyramid_contains_matches_vertex_mixture(d, Ad, seed):
    A = Ad / d
    if abs(A * d - 1) < 1e-9:
        return
    P = BodySpec.simplex_hull_with_center(d, A)
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(d + 1))
    x = w @ P.vertices
    assert P.contains(x, atol=1e-9)
    assert P.contains(P.barycenter())


# ---------------------------------------------------------------------------
# closed forms


def test_euclidean_simplex_examples():
    y = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(euclidean_project_simplex(y), y, atol=1e-15)
    for eta in (0.1, 0.5, 1.0):
        np.testing.assert_allclose(euclidean_project_simplex([0.5 + eta, 0.5]),
                                   [0.5 + eta / 2, 0.5 - eta / 2], atol=1e-15)
    rng = np.random.default_rng(0)
    for _ in range(100):
        y = rng.uniform(-2, 2, 3)
        best = GRID3[np.argmin(((GRID3 - y) ** 2).sum(axis=1))]
        assert np.linalg.norm(euclidean_project_simplex(y) - best) <= 2e-3


def test_entropic_simplex_examples():
    y = np.array([0.1, 0.6, 0.3])
    np.testing.assert_allclose(entropic_project_simplex(y), y)
    np.testing.assert_allclose(entropic_project_simplex([2.0, 2.0]), [0.5, 0.5])
    rng = np.random.default_rng(1)
    m = MirrorMapSpec.entropic()
    G = np.clip(GRID3, 1e-300, None)
    for _ in range(100):
        y = rng.uniform(0.05, 2, 3)
        kl = (G * np.log(G / y)).sum(axis=1) - G.sum(axis=1) + y.sum()
        best = GRID3[np.argmin(kl)]
        z = entropic_project_simplex(y)
        assert np.linalg.norm(z - best) <= 2e-3
        assert bregman_div(m, z, y) <= kl.min() + 1e-12
    with pytest.raises(DomainError):
        entropic_project_simplex([1.0, 0.0])


# ---------------------------------------------------------------------------
# general projections


def test_feasible_points_are_fixed():
    m = MirrorMapSpec.block_norm(Partition.contiguous(4, 2))
    y = np.array([0.1, 0.2, 0.3, 0.4])
    np.testing.assert_allclose(bregman_project(m, BodySpec.simplex(4), y), y, atol=1e-9)
    np.testing.assert_allclose(bregman_project(MirrorMapSpec.euclidean(), BodySpec.simplex(3), [2.0, 0, 0]),
                               [1.0, 0, 0])


def test_block_norm_simplex_matches_grid_search():
    rng = np.random.default_rng(2)
    m = MirrorMapSpec.block_norm(random_equal_partition(4, 2, rng))
    coarse = simplex_grid(4, 0.02)
    for _ in range(20):
        y = rng.uniform(0, 2, 4)
        gy = potential_grad(m, y)

        def div(Z):
            return block_potential(Z, m) - block_potential(y[None], m) - (Z - y) @ gy

        c = coarse[np.argmin(div(coarse))]
        # 10^-3 grid in a neighbourhood of the coarse minimiser
        offs = np.arange(-25, 26) / 1000
        fine = np.array([c[:3] + o for o in itertools.product(offs, repeat=3)])
        fine = np.hstack([fine, 1 - fine.sum(axis=1, keepdims=True)])
        fine = fine[(fine >= -1e-12).all(axis=1)]
        best = fine[np.argmin(div(fine))]
        z = bregman_project(m, BodySpec.simplex(4), y)
        assert np.abs(z - best).sum() <= 5e-3
        assert bregman_div(m, z, y) <= div(best[None])[0] + 1e-9


def _slsqp_oracle(m, body, y):
    V = body.vertices
    gy = potential_grad(m, y)

    def f(w):
        z = w @ V
        return bregman_div(m, z, y)

    def grad(w):
        z = w @ V
        return V @ (potential_grad(m, z) - gy)

    k = V.shape[0]
    res = minimize(f, np.full(k, 1 / k), jac=grad, method="SLSQP", bounds=[(0, 1)] * k,
                   constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1, "jac": lambda w: np.ones(k)}],
                   options={"ftol": 1e-14, "maxiter": 1000})
    return res.x @ V, res.fun


@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_pyramid_projection_matches_slsqp(n):
    rng = np.random.default_rng(3 + n)
    d = 8
    body = BodySpec.simplex_hull_with_center(d, 0.3 / d)
    m = MirrorMapSpec.block_norm(random_equal_partition(d, n, rng))
    for _ in range(5):
        y = rng.standard_normal(d) * 0.4 + 0.1
        z = bregman_project(m, body, y)
        _, fun = _slsqp_oracle(m, body, y)
        assert body.contains(z)
        assert bregman_div(m, z, y) <= fun + 1e-8


def test_structured_and_frank_wolfe_paths_agree():
    rng = np.random.default_rng(5)
    d = 32
    for body in (BodySpec.simplex(d), BodySpec.simplex_hull_with_center(d, 0.5 / d),
                 BodySpec.scaled(BodySpec.simplex_hull_with_center(d, 2.0 / d), 0.5)):
        for n in (4, 8, 32):
            m = MirrorMapSpec.block_norm(random_equal_partition(d, n, rng))
            for _ in range(5):
                theta = rng.standard_normal(d)
                a = project_dual(m, body, theta)
                b = project_dual(m, body, theta, method="frank_wolfe")
                assert fw_gap(m, body, theta, a) <= TOL
                assert np.linalg.norm(a - b) <= 10 * math.sqrt(TOL)


def test_frank_wolfe_matches_closed_forms():
    rng = np.random.default_rng(6)
    s = BodySpec.simplex(6)
    for _ in range(100):
        y = rng.standard_normal(6)
        a = bregman_project(MirrorMapSpec.euclidean(), s, y, TOL, method="frank_wolfe")
        # a value gap of tol bounds the distance by sqrt(2 tol) under 1-strong convexity
        assert np.linalg.norm(a - euclidean_project_simplex(y)) <= 10 * math.sqrt(TOL)
        y = rng.uniform(0.05, 1, 6)
        a = bregman_project(MirrorMapSpec.entropic(), s, y, TOL, method="frank_wolfe")
        assert np.linalg.norm(a - entropic_project_simplex(y)) <= 10 * math.sqrt(TOL)


def test_entropic_dual_with_zero_mass_stays_zero():
    theta = np.array([0.0, -np.inf, 1.0])
    z = project_dual(MirrorMapSpec.entropic(), BodySpec.simplex(3), theta)
    assert z[1] == 0.0 and z.sum() == pytest.approx(1.0)


def test_errors():
    m = MirrorMapSpec.entropic()
    with pytest.raises(DomainError):
        bregman_project(m, BodySpec.simplex(3), [1.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        bregman_project(m, BodySpec.simplex(3), [1.0, 1.0])
    with pytest.raises(ValueError):
        project_dual(m, BodySpec.simplex(3), np.zeros(3), method="newton")
    body = BodySpec.simplex_hull_with_center(20, 0.0)
    with pytest.raises(NumericalFailure) as info:
        frank_wolfe_project(MirrorMapSpec.euclidean(), body, np.random.default_rng(0).standard_normal(20),
                            tol=1e-14, max_iters=3)
    assert info.value.gap > 1e-14


def _maps(d, rng):
    maps = [MirrorMapSpec.euclidean()]
    maps += [MirrorMapSpec.block_norm(random_equal_partition(d, n, rng)) for n in (2, 3, 4, 12)]
    return maps


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["simplex", "pyramid", "scaled", "general"]))
def test_projection_optimality_properties(seed, kind):
    rng = np.random.default_rng(seed)
    d = 12
    body = {
        "simplex": BodySpec.simplex(d),
        "pyramid": BodySpec.simplex_hull_with_center(d, 0.4 / d),
        "scaled": BodySpec.scaled(BodySpec.simplex_hull_with_center(d, 3.0 / d), 1 / 3),
        "general": BodySpec(np.vstack([np.eye(d), rng.dirichlet(np.ones(d), 3) * 1.5]), "random"),
    }[kind]
    V = body.vertices
    for m in _maps(d, rng):
        y = rng.standard_normal(d) * 0.5
        z = bregman_project(m, body, y, TOL)
        gz, gy = potential_grad(m, z), potential_grad(m, y)
        # variational inequality at every vertex
        assert ((V - z) @ (gz - gy)).min() >= -10 * TOL
        # generalised Pythagorean inequality
        bzy = bregman_div(m, z, y)
        for v in V:
            assert bregman_div(m, v, y) >= bregman_div(m, v, z) + bzy - 10 * TOL
        # idempotence
        assert np.linalg.norm(bregman_project(m, body, z, TOL) - z) <= 10 * TOL

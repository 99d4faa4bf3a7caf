import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blocknorm_omd.errors import NumericalFailure, UnsupportedLossError
from blocknorm_omd.geometry import random_equal_partition
from blocknorm_omd.instances import LossSeq, figure1_losses, sparse_sampler
from blocknorm_omd.mirror_maps import MirrorMapSpec
from blocknorm_omd.omd_core import (
    RunRecord,
    StepSizeRule,
    diameter,
    euclidean_diameter,
    euclidean_radius,
    exact_offline_optimum,
    fit_into_unit_ball,
    gradient_bound_estimate,
    max_dual_norm,
    mirror_descent_step,
    run_omd,
)
from blocknorm_omd.projection import BodySpec, bregman_project

EUC, ENT = MirrorMapSpec.euclidean(), MirrorMapSpec.entropic()


def test_step_size_rules():
    assert StepSizeRule.fixed(0.3).eta_at(7) == 0.3
    r = StepSizeRule.theory_sqrt2(2.0, 4.0, 50)
    assert r.constant == pytest.approx(0.5 * math.sqrt(2 / 50))
    assert StepSizeRule.theory_plain(2.0, 4.0, 25).constant == pytest.approx(0.1)
    s = StepSizeRule.from_schedule([0.1, 0.2])
    assert s.eta_at(1) == 0.1 and s.eta_at(2) == 0.2 and s.eta_at(9) == 0.2
    assert s.constant is None
    for bad in (lambda: StepSizeRule.fixed(0), lambda: StepSizeRule.fixed(math.inf),
                lambda: StepSizeRule.theory_sqrt2(0, 1, 1), lambda: StepSizeRule.from_schedule([]),
                lambda: StepSizeRule("adaptive")):
        with pytest.raises(ValueError):
            bad()


def test_step_examples():
    s2 = BodySpec.simplex(2)
    x = np.array([0.5, 0.5])
    np.testing.assert_allclose(mirror_descent_step(x, s2, EUC, np.zeros(2), 0.7), x, atol=1e-12)
    for eta in (0.05, 0.3, 0.9):
        np.testing.assert_allclose(mirror_descent_step(x, s2, EUC, [-1.0, 0], eta),
                                   [0.5 + eta / 2, 0.5 - eta / 2], atol=1e-12)
        e = math.exp(eta)
        np.testing.assert_allclose(mirror_descent_step(x, s2, ENT, [0.0, -1], eta),
                                   [1 / (1 + e), e / (1 + e)], atol=1e-12)
    with pytest.raises(ValueError):
        mirror_descent_step(x, s2, EUC, [1.0, 0], 0.0)


def test_hand_iterated_run():
    losses = LossSeq.from_dense(np.tile([0.0, 1.0], (3, 1)))
    rec = run_omd(BodySpec.simplex(2), EUC, losses, StepSizeRule.fixed(0.1), [0.5, 0.5], seed=0)
    np.testing.assert_allclose(rec.iterates, [[0.5, 0.5], [0.45, 0.55], [0.40, 0.60]], atol=1e-12)
    np.testing.assert_allclose(rec.losses, [-0.5, -0.55, -0.6])
    assert rec.offline_opt_vertex == 1 and rec.offline_opt_value == -3
    np.testing.assert_allclose(rec.regret_trace, [0.5, 0.95, 1.35])


def test_first_round_regret():
    rng = np.random.default_rng(0)
    C = rng.standard_normal((1, 5))
    losses = LossSeq.from_dense(C)
    x1 = rng.dirichlet(np.ones(5))
    rec = run_omd(BodySpec.simplex(5), EUC, losses, StepSizeRule.fixed(1.0), x1)
    assert rec.regret_trace[0] == pytest.approx(-C[0] @ x1 - (-C[0]).min())


def test_offline_optimum_examples():
    T, d = 7, 5
    losses = LossSeq.from_dense(np.tile(np.eye(d)[0], (T, 1)))
    assert exact_offline_optimum(BodySpec.simplex(d), losses) == (0, -T)
    assert exact_offline_optimum(BodySpec.simplex(d), LossSeq.from_dense(np.zeros((1, d)))) == (0, 0.0)
    rng = np.random.default_rng(1)
    k = 100
    grid = np.array([(i, j, k - i - j) for i in range(k + 1) for j in range(k + 1 - i)]) / k
    for _ in range(20):
        C = rng.standard_normal((5, 3))
        _, val = exact_offline_optimum(BodySpec.simplex(3), LossSeq.from_dense(C))
        brute = float((grid @ -C.sum(axis=0)).min())
        assert abs(val - brute) <= 1e-2 * np.abs(C.sum(axis=0)).max()
    nonlinear = LossSeq.from_dense(np.ones((2, 3)))
    nonlinear.linear = False
    with pytest.raises(UnsupportedLossError):
        exact_offline_optimum(BodySpec.simplex(3), nonlinear)


def test_diameter_examples():
    for d in (2, 16, 4096):
        x1 = np.full(d, 1 / d)
        assert diameter(BodySpec.simplex(d), ENT, x1) == pytest.approx(math.sqrt(math.log(d)), rel=1e-12)
        # Euclidean: max ½‖v − x1‖² over vertices, and the plain L2 radius
        assert diameter(BodySpec.simplex(d), EUC, x1) == pytest.approx(math.sqrt(0.5 * (1 - 1 / d)), rel=1e-12)
        assert euclidean_radius(BodySpec.simplex(d), x1) == pytest.approx(math.sqrt(1 - 1 / d), rel=1e-12)
    assert euclidean_diameter(BodySpec.simplex(4)) == pytest.approx(math.sqrt(2))
    single = BodySpec(np.array([[0.2, 0.8]]), "point")
    assert diameter(single, EUC, [0.2, 0.8]) == 0.0


@pytest.mark.parametrize("n", [1, 2, 4, 8, 16, 32, 64, 128, 256])
def test_diameter_bound(n):
    rng = np.random.default_rng(n)
    m = MirrorMapSpec.block_norm(random_equal_partition(256, n, rng))
    for _ in range(20):
        x1 = rng.dirichlet(np.ones(256))
        assert diameter(BodySpec.simplex(256), m, x1) <= 2 * math.sqrt(1 + math.log(n)) + 1e-9


def test_dual_norm_estimates():
    d, S = 32, 5
    c = np.zeros((1, d))
    c[0, :S] = 1
    losses = LossSeq.from_dense(c)
    full = MirrorMapSpec.block_norm(random_equal_partition(d, d, 0))
    one = MirrorMapSpec.block_norm(random_equal_partition(d, 1, 0))
    assert max_dual_norm(full, losses) == 1.0
    assert max_dual_norm(one, losses) == pytest.approx(math.sqrt(S))
    # a deterministic sampler gives the exact value
    gen = lambda rng, size: (np.tile(np.arange(S), (size, 1)), np.ones((size, S)))
    assert gradient_bound_estimate(one, gen, 1000, 0) == pytest.approx(math.sqrt(S))
    assert gradient_bound_estimate(full, gen, 1000, 0) == pytest.approx(1.0)


def test_sparse_dual_norm_against_dense():
    rng = np.random.default_rng(3)
    d = 24
    for n in (1, 2, 3, 6, 24):
        m = MirrorMapSpec.block_norm(random_equal_partition(d, n, rng))
        idx = np.stack([rng.choice(d, 7, replace=False) for _ in range(50)])
        vals = rng.standard_normal(idx.shape)
        losses = LossSeq(idx, vals, d, sign="plain")
        dense = max(np.linalg.norm(m.partition.to_blocks(losses.gradient(t)), axis=-1).max()
                    for t in range(losses.T))
        assert max_dual_norm(m, losses) == pytest.approx(dense, rel=1e-12)


def test_sparse_dual_norm_monte_carlo():
    d, S, n = 64, 8, 8
    m = MirrorMapSpec.block_norm(random_equal_partition(d, n, 0))
    G = gradient_bound_estimate(m, sparse_sampler(d, S, 0), 100_000, np.random.default_rng(0))
    assert G**2 <= 6 * max(S / n, math.log(n))


def test_regret_upper_bound_law():
    rng = np.random.default_rng(4)
    d = 64
    body = BodySpec.simplex(d)
    for _ in range(25):
        n = int(rng.choice([1, 2, 4, 8, 16, 32, 64]))
        m = MirrorMapSpec.block_norm(random_equal_partition(d, n, rng))
        T = int(rng.integers(20, 200))
        idx = np.stack([rng.choice(d, 6, replace=False) for _ in range(T)])
        losses = LossSeq(idx, rng.uniform(-1, 1, idx.shape), d)
        x1 = rng.dirichlet(np.ones(d))
        D, G = diameter(body, m, x1), max_dual_norm(m, losses)
        rec = run_omd(body, m, losses, StepSizeRule.theory_sqrt2(D, G, T), x1)
        assert rec.regret <= math.sqrt(2) * D * G * math.sqrt(T) + 1e-6
        # every iterate is feasible: re-projecting does not move it
        for x in rec.iterates[::10]:
            assert np.linalg.norm(bregman_project(EUC, body, x) - x) <= 1e-6


def test_determinism_and_record_io(tmp_path):
    losses = figure1_losses(64, 40, np.random.default_rng(0))
    m = MirrorMapSpec.block_norm(random_equal_partition(64, 8, 1))
    runs = [run_omd(BodySpec.simplex(64), m, losses, StepSizeRule.fixed(0.2), np.full(64, 1 / 64), seed=9)
            for _ in range(2)]
    assert np.array_equal(runs[0].regret_trace, runs[1].regret_trace)
    rec = runs[0]
    path = tmp_path / "run.csv"
    rec.to_csv(path)
    table = np.genfromtxt(path, delimiter=",", names=True)
    assert list(table.dtype.names) == ["t", "loss", "cum_loss", "regret", "x1_coord"]
    np.testing.assert_array_equal(table["regret"], rec.regret_trace)
    np.testing.assert_array_equal(table["x1_coord"], rec.x1_coord)
    man = json.loads(path.with_suffix(".json").read_text())
    assert man["seed"] == 9 and man["map"]["partition"] == m.partition.block_of.tolist()
    assert man["rule"] == {"kind": "fixed", "eta": 0.2}


def test_rescaling_preserves_losses():
    d = 27
    P = BodySpec.simplex_hull_with_center(d, 1 / 9)
    m = MirrorMapSpec.block_norm(random_equal_partition(d, d, 0))
    losses = figure1_losses(d, 30, np.random.default_rng(1), S=3)
    x1 = np.full(d, 1 / 9)
    b, l, z, R = fit_into_unit_ball(P, m, losses, x1)
    assert R == pytest.approx(3.0)
    for t in range(5):
        assert l.value(t, z) == pytest.approx(losses.value(t, x1))
    rec = run_omd(P, m, losses, StepSizeRule.fixed(0.05), x1)
    assert rec.R == pytest.approx(3.0) and rec.manifest["rescaled"]
    # a body already inside the ball is left alone
    assert fit_into_unit_ball(BodySpec.simplex(d), m, losses, np.full(d, 1 / d))[3] == 1.0


def test_failures_carry_the_step():
    body = BodySpec.simplex_hull_with_center(10, 0.0)
    losses = LossSeq.from_dense(np.random.default_rng(0).standard_normal((5, 10)))
    with pytest.raises(NumericalFailure) as info:
        run_omd(body, EUC, losses, StepSizeRule.fixed(1.0), np.full(10, 0.05), tol=1e-15, max_iters=2)
    assert info.value.step == 1
    with pytest.raises(ValueError):
        run_omd(BodySpec.simplex(3), EUC, LossSeq.from_dense(np.ones((2, 3))), StepSizeRule.fixed(1), [1.0, 1, 1])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1, 2, 4, 16]), st.floats(0.01, 5.0))
def test_regret_is_nonnegative_against_a_fixed_comparator_sum(seed, n, eta):
    # regret against the best vertex equals cum_loss minus the exact optimum
    rng = np.random.default_rng(seed)
    d = 16
    m = MirrorMapSpec.block_norm(random_equal_partition(d, n, rng))
    losses = figure1_losses(d, 30, rng, S=3)
    rec = run_omd(BodySpec.simplex(d), m, losses, StepSizeRule.fixed(eta), np.full(d, 1 / d))
    assert rec.regret == pytest.approx(rec.cum_loss - rec.offline_opt_value, abs=1e-9)
    assert np.isfinite(rec.regret_trace).all()
    assert isinstance(rec, RunRecord) and rec.T == 30

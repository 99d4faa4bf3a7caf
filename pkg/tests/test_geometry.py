import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from blocknorm_omd.geometry import (
    Partition,
    block_norm,
    block_norms,
    dual_block_norm,
    random_equal_partition,
)


def divisor_partitions():
    return st.sampled_from([4, 6, 8, 12, 16]).flatmap(
        lambda d: st.tuples(
            st.just(d),
            st.sampled_from([n for n in range(1, d + 1) if d % n == 0]),
            st.integers(0, 2**31 - 1),
        )
    )


def test_single_block_and_singletons():
    p = random_equal_partition(4, 1, 123)
    assert [sorted(b.tolist()) for b in p.blocks] == [[0, 1, 2, 3]]
    p = random_equal_partition(4, 4, 5)
    assert sorted(sorted(b.tolist()) for b in p.blocks) == [[0], [1], [2], [3]]


def test_partner_set_of_first_index_is_uniform():
    # oracle: the ten 2-subsets of {1..5} that can share a block with index 0
    rng = np.random.default_rng(0)
    counts = Counter()
    draws = 100_000
    for _ in range(draws):
        p = random_equal_partition(6, 2, rng)
        blk = p.block_of[0]
        counts[tuple(int(i) for i in np.flatnonzero(p.block_of == blk) if i != 0)] += 1
    support = list(itertools.combinations(range(1, 6), 2))
    assert set(counts) == set(support)
    _, pval = stats.chisquare([counts[s] for s in support])
    assert pval > 0.01


def test_partition_validation():
    with pytest.raises(ValueError):
        random_equal_partition(6, 4)
    with pytest.raises(ValueError):
        Partition([0, 0, 1, 2], 2)
    with pytest.raises(AttributeError):
        Partition.contiguous(4, 2).n = 3
    with pytest.raises(ValueError):
        block_norm(np.ones(3), Partition.contiguous(4, 2))


def test_block_of_roundtrip():
    p = random_equal_partition(12, 3, 9)
    q = Partition.from_block_of(p.block_of)
    assert q == p
    x = np.arange(12.0)
    np.testing.assert_array_equal(p.from_blocks(p.to_blocks(x)), x)


def test_known_values():
    p = Partition.contiguous(4, 2)
    assert block_norm(np.array([1.0, 0, 0, 0]), p) == 1.0
    assert dual_block_norm(np.array([1.0, 0, 0, 0]), p) == 1.0
    assert block_norm(np.ones(4), p) == pytest.approx(2 * np.sqrt(2), abs=1e-15)
    np.testing.assert_allclose(block_norms(np.array([3.0, 4, 0, 1]), p), [5.0, 1.0])


def test_extreme_partitions_match_lp_norms():
    rng = np.random.default_rng(1)
    for _ in range(100):
        d = 12
        x = rng.standard_normal(d)
        one = random_equal_partition(d, 1, rng)
        full = random_equal_partition(d, d, rng)
        assert block_norm(x, one) == pytest.approx(np.sqrt((x**2).sum()), abs=1e-12)
        assert block_norm(x, full) == pytest.approx(np.abs(x).sum(), abs=1e-12)
        assert dual_block_norm(x, full) == pytest.approx(np.abs(x).max(), abs=1e-12)


def test_holder_per_block():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        d = 12
        p = random_equal_partition(d, int(rng.choice([1, 2, 3, 4, 6, 12])), rng)
        x, y = rng.standard_normal(d), rng.standard_normal(d)
        assert x @ y <= block_norm(x, p) * dual_block_norm(y, p) + 1e-12


@settings(max_examples=200, deadline=None)
@given(divisor_partitions(), st.floats(-50, 50, allow_nan=False))
def test_norm_axioms(args, alpha):
    d, n, seed = args
    rng = np.random.default_rng(seed)
    p = random_equal_partition(d, n, rng)
    x, y = rng.standard_normal(d), rng.standard_normal(d)
    assert block_norm(alpha * x, p) == pytest.approx(abs(alpha) * block_norm(x, p), rel=1e-12, abs=1e-12)
    assert block_norm(x + y, p) <= block_norm(x, p) + block_norm(y, p) + 1e-12
    assert np.linalg.norm(x) <= block_norm(x, p) + 1e-12
    assert block_norm(x, p) <= np.abs(x).sum() + 1e-12


@settings(max_examples=20, deadline=None)
@given(divisor_partitions())
def test_sampled_dual_is_below_dual_norm(args):
    d, n, seed = args
    rng = np.random.default_rng(seed)
    p = random_equal_partition(d, n, rng)
    x = rng.standard_normal(d)
    U = rng.standard_normal((10_000, d))
    # independent layout: x[order] reshaped block by block
    U /= np.linalg.norm(U[:, p.order].reshape(-1, n, d // n), axis=-1).sum(axis=-1)[:, None]
    sampled = float((U @ x).max())
    assert sampled <= dual_block_norm(x, p) + 1e-12
    # the maximiser puts all mass on the block of largest norm
    b = int(np.argmax(block_norms(x, p)))
    u = np.zeros(d)
    idx = p.blocks[b]
    u[idx] = x[idx] / np.linalg.norm(x[idx])
    assert block_norm(u, p) == pytest.approx(1.0)
    assert u @ x == pytest.approx(dual_block_norm(x, p), rel=1e-12)

"""Equal-size coordinate partitions and the block norms they induce."""
from __future__ import annotations

import numpy as np

from ._rng import as_generator


class Partition:
    """An equal-size partition of ``range(d)`` into ``n`` blocks.

    Stored as ``order``, the concatenation of the blocks, so that
    ``x[order].reshape(n, d // n)`` lays a vector out block by block.
    Instances are immutable.
    """

    __slots__ = ("d", "n", "order", "block_of")

    def __init__(self, order, n: int):
        order = np.asarray(order)
        if order.ndim != 1 or order.size == 0:
            raise ValueError("order must be a nonempty 1-d index array")
        d = int(order.size)
        n = int(n)
        if n < 1 or d % n:
            raise ValueError(f"block count {n} does not divide dimension {d}")
        order = order.astype(np.int64)
        if not np.array_equal(np.sort(order), np.arange(d)):
            raise ValueError("order must be a permutation of range(d)")
        block_of = np.empty(d, dtype=np.int64)
        block_of[order] = np.repeat(np.arange(n), d // n)
        order.setflags(write=False)
        block_of.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "block_of", block_of)

    def __setattr__(self, name, value):
        raise AttributeError("Partition is immutable")

    @classmethod
    def from_block_of(cls, block_of) -> "Partition":
        block_of = np.asarray(block_of, dtype=np.int64)
        n = int(block_of.max()) + 1 if block_of.size else 0
        counts = np.bincount(block_of, minlength=n)
        if n == 0 or np.any(counts != counts[0]):
            raise ValueError("block_of does not describe an equal-size partition")
        return cls(np.argsort(block_of, kind="stable"), n)

    @classmethod
    def contiguous(cls, d: int, n: int) -> "Partition":
        return cls(np.arange(d), n)

    @property
    def block_size(self) -> int:
        return self.d // self.n

    @property
    def blocks(self) -> list[np.ndarray]:
        return list(self.order.reshape(self.n, self.block_size))

    def to_blocks(self, x: np.ndarray) -> np.ndarray:
        """View ``x`` (last axis of length d) as ``(..., n, d/n)``."""
        if self.n == 1:
            # a single block: its internal order does not matter
            return x.reshape(x.shape[:-1] + (self.n, self.block_size))
        return x[..., self.order].reshape(x.shape[:-1] + (self.n, self.block_size))

    def from_blocks(self, xb: np.ndarray) -> np.ndarray:
        flat = xb.reshape(xb.shape[:-2] + (self.d,))
        if self.n == 1:
            return flat
        out = np.empty_like(flat)
        out[..., self.order] = flat
        return out

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Partition)
            and other.d == self.d
            and other.n == self.n
            and np.array_equal(other.block_of, self.block_of)
        )

    def __hash__(self) -> int:
        return hash((self.d, self.n, self.block_of.tobytes()))

    def __repr__(self) -> str:
        return f"Partition(d={self.d}, n={self.n})"

    def to_dict(self) -> dict:
        return {"d": self.d, "n": self.n, "block_of": self.block_of.tolist()}


def random_equal_partition(d: int, n: int, rng=None) -> Partition:
    """Uniformly random equal-size partition: shuffle ``range(d)``, then chunk."""
    if int(d) != d or int(n) != n or d < 1 or n < 1:
        raise ValueError("d and n must be positive integers")
    if d % n:
        raise ValueError(f"block count {n} does not divide dimension {d}")
    order = as_generator(rng).permutation(int(d))
    return Partition(order, int(n))


def _check(x, p: Partition) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (p.d,):
        raise ValueError(f"expected a vector of length {p.d}, got shape {x.shape}")
    return x


def block_norms(x, p: Partition) -> np.ndarray:
    """L2 norm of every block of ``x``."""
    return np.linalg.norm(p.to_blocks(_check(x, p)), axis=-1)


def block_norm(x, p: Partition) -> float:
    """Sum over blocks of the block's L2 norm."""
    return float(block_norms(x, p).sum())


def dual_block_norm(x, p: Partition) -> float:
    """Largest block L2 norm; the dual of :func:`block_norm`."""
    return float(block_norms(x, p).max())

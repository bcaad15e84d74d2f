"""Ackermann's function, its inverse, problem density and node potentials.

These are the yardsticks the benchmark harness divides measured work by.
Everything here is pure arithmetic on Python ints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from cdsu.forest import Compaction

#: Largest value :func:`ackermann` will return; anything bigger is an overflow.
ACKERMANN_CAP = 2**62


class AckermannOverflow(OverflowError):
    """Raised when A_k(n) exceeds :data:`ACKERMANN_CAP`."""

    def __init__(self, k: int, n: int):
        super().__init__(f"A_{k}({n}) exceeds representable range (> 2^62)")
        self.k = k
        self.n = n


def ackermann(k: int, n: int) -> int:
    """Return A_k(n) with A_0(n) = n + 1, A_k(0) = A_{k-1}(1), A_k(n) = A_{k-1}(A_k(n-1)).

    Unrolling the recurrence gives A_k(n) = A_{k-1} applied n + 1 times to 1,
    which is what the loop below does for k >= 3. Levels 0..2 have closed
    forms (n + 1, n + 2, 2n + 3).
    """
    if k < 0 or n < 0:
        raise ValueError("ackermann is defined for non-negative k and n")
    if k == 0:
        value = n + 1
    elif k == 1:
        value = n + 2
    elif k == 2:
        value = 2 * n + 3
    else:
        value = 1
        for _ in range(n + 1):
            try:
                value = ackermann(k - 1, value)
            except AckermannOverflow:
                raise AckermannOverflow(k, n) from None
    if value > ACKERMANN_CAP:
        raise AckermannOverflow(k, n)
    return value


def _exceeds(k: int, n: int, bound: int) -> bool:
    try:
        return ackermann(k, n) > bound
    except AckermannOverflow:
        return True


def alpha(n: int, d: float) -> int:
    """Smallest k > 0 with A_k(floor(d)) > n."""
    if n < 1 or d < 0:
        raise ValueError("alpha needs n >= 1 and d >= 0")
    base = math.floor(d)
    k = 1
    while not _exceeds(k, base, n):
        k += 1
    return k


@dataclass(frozen=True)
class WorkBoundParams:
    """Instance size for the work bound: n elements, m operations, p processes."""

    n: int
    m: int
    p: int
    splitting: Compaction = Compaction.TWO_TRY

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.p < 1:
            raise ValueError("n, m and p must be positive")
        object.__setattr__(self, "splitting", Compaction.parse(self.splitting))

    @property
    def standard(self) -> bool:
        """Whether 2 <= p <= n <= m holds (the regime the bounds are stated for)."""
        return 2 <= self.p <= self.n <= self.m


def density(params: WorkBoundParams) -> float:
    """m/(np) for two-try splitting (and its conditional variant), m/(np^2) for one-try."""
    if params.splitting is Compaction.NAIVE:
        raise ValueError("density undefined for uncompacted finds")
    if params.splitting is Compaction.ONE_TRY:
        return params.m / (params.n * params.p**2)
    return params.m / (params.n * params.p)


def work_bound(params: WorkBoundParams) -> float:
    """m * (alpha(n, d) + lg(1 + 1/d)), the splitting work bound with constant 1."""
    d = density(params)
    return params.m * (alpha(params.n, d) + math.log2(1 + 1 / d))


@dataclass(frozen=True)
class NodePotential:
    level: int
    index: int
    count: int


def node_potential(rank: int, parent_rank: int, n: int, d: float) -> NodePotential:
    """Level, index and count of a high child of the given rank.

    The level is min{k | A_k(rank) > parent_rank}, the index is
    max{i | A_level(i) <= parent_rank}, and count = rank * level + index.
    """
    if rank > parent_rank:
        raise ValueError(f"child rank {rank} exceeds parent rank {parent_rank}")
    if rank < max(1, math.ceil(d)):
        raise ValueError(f"rank {rank} is not a high node for density {d}")
    level = 0
    while not _exceeds(level, rank, parent_rank):
        level += 1
    index = 0
    while not _exceeds(level, index + 1, parent_rank):
        index += 1
    return NodePotential(level=level, index=index, count=rank * level + index)

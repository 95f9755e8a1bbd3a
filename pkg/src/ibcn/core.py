"""Block-index arithmetic and the objective-oracle contract.

Indices are 0-based inside the package. The 1-based convention used in
documentation and file formats is handled by :meth:`BlockIndex.from_one_based`
and :meth:`BlockIndex.one_based`.
"""

from __future__ import annotations

import numpy as np


class InvalidBlockError(ValueError):
    """Raised when a block of indices does not fit the vector it is applied to."""


class BlockIndex:
    """Ordered set of distinct variable indices, the selector ``U_I``.

    ``U_I`` is never formed as a matrix: :func:`gather` applies ``U_I^T`` and
    :func:`scatter` applies ``U_I``.
    """

    __slots__ = ("indices", "n")

    def __init__(self, indices, n: int):
        idx = np.asarray(indices, dtype=np.intp).reshape(-1)
        n = int(n)
        if idx.size < 1 or idx.size > n:
            raise InvalidBlockError(f"block size {idx.size} not in [1, {n}]")
        if idx.min() < 0 or idx.max() >= n:
            raise InvalidBlockError(f"block index out of range for n={n}")
        if np.unique(idx).size != idx.size:
            raise InvalidBlockError("block indices must be distinct")
        idx.setflags(write=False)
        self.indices = idx
        self.n = n

    @classmethod
    def from_one_based(cls, indices, n: int) -> "BlockIndex":
        return cls(np.asarray(indices, dtype=np.intp) - 1, n)

    @classmethod
    def full(cls, n: int) -> "BlockIndex":
        return cls(np.arange(n), n)

    def one_based(self) -> list[int]:
        return [int(i) + 1 for i in self.indices]

    def __len__(self) -> int:
        return self.indices.size

    def __iter__(self):
        return iter(self.indices.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, BlockIndex):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.indices, other.indices)

    def __hash__(self):
        return hash((self.n, self.indices.tobytes()))

    def __repr__(self) -> str:
        return f"BlockIndex({self.one_based()}, n={self.n})"


def _check_block(I: BlockIndex, n: int) -> None:
    if I.n != n:
        raise InvalidBlockError(f"block built for n={I.n}, vector has length {n}")


def gather(x, I: BlockIndex) -> np.ndarray:
    """Return ``x_I = U_I^T x``."""
    x = np.asarray(x, dtype=float)
    _check_block(I, x.shape[0])
    return x[I.indices]


def scatter(s, I: BlockIndex, n: int) -> np.ndarray:
    """Return ``U_I s``, a length-``n`` vector that is zero outside ``I``."""
    s = np.asarray(s, dtype=float).reshape(-1)
    _check_block(I, n)
    if s.shape[0] != len(I):
        raise InvalidBlockError(f"step has length {s.shape[0]}, block has {len(I)}")
    out = np.zeros(n)
    out[I.indices] = s
    return out


def add_in_block(x, s, I: BlockIndex) -> np.ndarray:
    """Return ``x + U_I s`` without touching coordinates outside ``I``."""
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float).reshape(-1)
    _check_block(I, x.shape[0])
    if s.shape[0] != len(I):
        raise InvalidBlockError(f"step has length {s.shape[0]}, block has {len(I)}")
    out = x.copy()
    out[I.indices] += s
    return out


class Problem:
    """Objective oracle for ``min f(x)`` over ``R^n``.

    Subclasses implement :meth:`value`, :meth:`full_gradient` and
    :meth:`block_hessian`. The block gradient is always read off the full
    gradient so the two can never disagree.
    """

    n: int
    name: str = "problem"

    def value(self, x) -> float:
        raise NotImplementedError

    def full_gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def block_gradient(self, x, I: BlockIndex) -> np.ndarray:
        return gather(self.full_gradient(x), I)

    def block_hessian(self, x, I: BlockIndex) -> np.ndarray:
        raise NotImplementedError

    def block_hessian_diag(self, x, I: BlockIndex) -> np.ndarray:
        return np.diag(self.block_hessian(x, I)).copy()

    def evaluator(self, x) -> "Evaluator":
        return Evaluator(self, x)


class Evaluator:
    """Per-run evaluation state anchored at the current iterate.

    Solvers only talk to the problem through this object. ``trial`` evaluates
    ``f(x + U_I s)`` and keeps the result pending; ``accept`` moves the
    iterate there. After a trial, ``decrease`` holds ``f(x) - f(x + U_I s)``
    and ``step_taken`` the block step that survives rounding of ``x + U_I s``.
    Subclasses compute that difference directly, without subtracting two
    nearly equal objective values, and cache auxiliary quantities
    (residuals, margins) so that a trial costs O(m |I|).
    """

    def __init__(self, problem: Problem, x):
        self.problem = problem
        self.x = np.array(x, dtype=float)
        self.f = float(problem.value(self.x))
        self._grad = None
        self._pending = None
        self.decrease = float("nan")
        self.step_taken = None

    def gradient(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.asarray(self.problem.full_gradient(self.x), dtype=float)
        return self._grad

    def block_hessian(self, I: BlockIndex) -> np.ndarray:
        return self.problem.block_hessian(self.x, I)

    def block_hessian_diag(self, I: BlockIndex) -> np.ndarray:
        return self.problem.block_hessian_diag(self.x, I)

    def trial(self, I: BlockIndex, s, fresh: bool = False) -> float:
        x_new = add_in_block(self.x, s, I)
        self.step_taken = x_new[I.indices] - self.x[I.indices]
        f_new = float(self.problem.value(x_new))
        self.decrease = self.f - f_new
        self._pending = (x_new, f_new)
        return f_new

    def accept(self) -> None:
        if self._pending is None:
            raise RuntimeError("accept() called without a pending trial")
        self.x, self.f = self._pending
        self._pending = None
        self._grad = None

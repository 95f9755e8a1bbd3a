"""Greedy (Gauss-Southwell) block selection.

Both rules guarantee ``||grad_I|| >= theta ||grad||`` for a fixed ``theta``:

* ``max_abs_fill``: the largest-magnitude coordinate plus ``q - 1`` random
  others, ``theta = (n + 1 - q)^(-1/2)``;
* ``fixed_partition``: the block of a covering family with the largest
  gradient norm, ``theta = N^(-1/2)`` for ``N`` blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import BlockIndex


class StationaryPointError(ValueError):
    """Selection was asked to act on a zero gradient."""


@dataclass(frozen=True)
class SelectionRule:
    variant: str = "max_abs_fill"
    q: int = 1
    partition: tuple = field(default=())

    def __post_init__(self):
        if self.variant not in ("max_abs_fill", "fixed_partition"):
            raise ValueError(f"unknown selection variant {self.variant!r}")
        if self.variant == "fixed_partition" and not self.partition:
            raise ValueError("fixed_partition needs a non-empty partition")
        if self.variant == "max_abs_fill" and self.q < 1:
            raise ValueError("q must be >= 1")

    def validate(self, n: int) -> None:
        if self.variant == "max_abs_fill":
            if not 1 <= self.q <= n:
                raise ValueError(f"block size q={self.q} not in [1, {n}]")
        else:
            covered = np.zeros(n, dtype=bool)
            for J in self.partition:
                if J.n != n:
                    raise ValueError("partition block built for another dimension")
                covered[J.indices] = True
            if not covered.all():
                raise ValueError("partition does not cover every variable")

    def select(self, grad, rng: np.random.Generator) -> BlockIndex:
        if self.variant == "max_abs_fill":
            return select_max_abs_fill(grad, self.q, rng)
        return select_partition_max_norm(grad, self.partition)


def select_max_abs_fill(grad, q: int, rng: np.random.Generator) -> BlockIndex:
    """Largest ``|grad_i|`` (lowest index on ties) plus ``q - 1`` uniform picks.

    The generator is advanced by the same amount whatever ``grad`` is, so two
    runs sharing a seed draw the same random fill positions.
    """
    grad = np.asarray(grad, dtype=float)
    n = grad.shape[0]
    if not 1 <= q <= n:
        raise ValueError(f"block size q={q} not in [1, {n}]")
    if not np.any(grad):
        raise StationaryPointError("gradient is zero, nothing to select")
    top = int(np.argmax(np.abs(grad)))
    if q == 1:
        return BlockIndex([top], n)
    others = rng.choice(n - 1, size=q - 1, replace=False)
    others = others + (others >= top)
    return BlockIndex(np.sort(np.append(others, top)), n)


def select_partition_max_norm(grad, partition) -> BlockIndex:
    """Block of ``partition`` with the largest ``||grad_J||``, first one on ties."""
    grad = np.asarray(grad, dtype=float)
    n = grad.shape[0]
    if not np.any(grad):
        raise StationaryPointError("gradient is zero, nothing to select")
    # scale so squared norms neither underflow nor overflow
    grad = grad / np.abs(grad).max()
    covered = np.zeros(n, dtype=bool)
    best, best_sq = None, -1.0
    for J in partition:
        covered[J.indices] = True
        gJ = grad[J.indices]
        sq = float(gJ @ gJ)
        if sq > best_sq:
            best, best_sq = J, sq
    if not covered.all():
        raise ValueError("partition does not cover every variable")
    return best


def theta_bound(rule: SelectionRule, n: int) -> float:
    if rule.variant == "max_abs_fill":
        return (n + 1 - rule.q) ** -0.5
    return len(rule.partition) ** -0.5

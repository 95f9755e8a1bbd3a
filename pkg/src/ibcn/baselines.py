"""Greedy block coordinate descent baselines with Armijo backtracking.

``bcd1`` steps along ``-grad_I``; ``bcd2`` divides each component by the
matching Hessian diagonal entry clamped to ``[1e-2, 1e9]``. Block
selection and its random stream are shared with IBCN.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .core import BlockIndex, Evaluator, Problem
from .data_io import Trace
from .solver import SolverAbort, SolverConfig, new_trace, selection_rng

HDIAG_MIN = 1e-2
HDIAG_MAX = 1e9


class LineSearchFailure(RuntimeError):
    """No step length in the backtracking sequence gave sufficient decrease."""


@dataclass(frozen=True)
class ArmijoOptions:
    initial_step: float = 1.0
    backtrack: float = 0.5
    c: float = 1e-4
    max_backtracks: int = 50

    def __post_init__(self):
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if not 0 < self.c < 1:
            raise ValueError("c must lie in (0, 1)")
        if self.initial_step <= 0 or self.max_backtracks < 0:
            raise ValueError("invalid Armijo options")


def bcd1_direction(g) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if not np.any(g):
        raise ValueError("zero block gradient")
    return -g


def clamp_diagonal(hdiag) -> np.ndarray:
    return np.clip(np.asarray(hdiag, dtype=float), HDIAG_MIN, HDIAG_MAX)


def bcd2_direction(g, hdiag) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if not np.any(g):
        raise ValueError("zero block gradient")
    return -g / clamp_diagonal(hdiag)


def armijo_search(ev: Evaluator, I: BlockIndex, d, f_curr: float, g, opts: ArmijoOptions = ArmijoOptions(),
                  fresh: bool = False):
    """Largest ``alpha`` in ``initial_step * backtrack^j`` with sufficient decrease.

    Leaves the accepted trial pending on ``ev`` and returns
    ``(alpha, f_new)``; raises :class:`LineSearchFailure` otherwise.
    """
    d = np.asarray(d, dtype=float)
    slope = float(np.asarray(g, dtype=float) @ d)
    if not slope < 0:
        raise ValueError("d is not a descent direction")
    alpha = opts.initial_step
    for _ in range(opts.max_backtracks + 1):
        f_new = ev.trial(I, alpha * d, fresh=fresh)
        if math.isnan(f_new):
            raise SolverAbort("objective is NaN during line search")
        # ev.decrease equals f_curr - f_new, computed without cancellation
        if -ev.decrease <= opts.c * alpha * slope:
            return alpha, f_new
        alpha *= opts.backtrack
    raise LineSearchFailure(f"no sufficient decrease after {opts.max_backtracks} backtracks")


def run_baseline(problem: Problem, x0, cfg: SolverConfig, variant: str = "bcd1",
                 armijo: ArmijoOptions = ArmijoOptions(), callback=None, problem_id=None) -> Trace:
    """Greedy BCD run with the same selection and trace layout as IBCN.

    The trace ``sigma`` column holds the accepted step length (0 when the
    line search failed and the iterate was kept).
    """
    if variant not in ("bcd1", "bcd2"):
        raise ValueError(f"unknown baseline {variant!r}")
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    cfg.selection.validate(problem.n)
    ev = problem.evaluator(x0)
    if not math.isfinite(ev.f):
        raise SolverAbort(f"objective is {ev.f} at the starting point")
    rng = selection_rng(cfg.seed)
    trace = new_trace(problem, ev, variant, cfg, problem_id)
    since_refresh = 0
    t0 = time.perf_counter()
    for k in range(cfg.max_iters):
        grad = ev.gradient()
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= cfg.grad_tol or gnorm == 0:
            break
        I = cfg.selection.select(grad, rng)
        g = grad[I.indices]
        if variant == "bcd1":
            d = bcd1_direction(g)
        else:
            d = bcd2_direction(g, ev.block_hessian_diag(I))
        since_refresh += 1
        fresh = since_refresh >= cfg.refresh_every
        try:
            alpha, _ = armijo_search(ev, I, d, ev.f, g, armijo, fresh=fresh)
            ev.accept()
            success = True
            if fresh:
                since_refresh = 0
        except LineSearchFailure:
            alpha, success = 0.0, False
        grad = ev.gradient()
        trace.append(k, ev.f, float(np.linalg.norm(grad)), float(np.linalg.norm(grad[I.indices])),
                     alpha, success, time.perf_counter() - t0)
        trace.blocks.append(I)
        if callback is not None:
            callback(k, ev, I, alpha, success)
    trace.x_final = ev.x.copy()
    return trace

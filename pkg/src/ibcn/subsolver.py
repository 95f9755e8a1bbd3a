"""Inexact minimization of the block cubic model.

A step ``s`` is acceptable when

* ``||grad m(s)|| <= tau ||s||^2``, and
* ``m(s) <= m(s_hat)`` with ``s_hat = -alpha_hat g`` the reference step.

The reference step is tried first. Otherwise a Barzilai-Borwein gradient
method with a nonmonotone Armijo safeguard is started from it. Only model
quantities are used: no objective or derivative oracle is touched.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .cubic_model import (
    ModelData,
    cauchy_step,
    model_change,
    model_gradient,
    solve_cubic_1d,
    spectral_norm_upper_bound,
)


class SubsolverFailure(RuntimeError):
    """No acceptable step was found; ``best`` holds the lowest-model iterate."""

    def __init__(self, message: str, best: np.ndarray, inner_iters: int):
        super().__init__(message)
        self.best = best
        self.inner_iters = inner_iters


@dataclass(frozen=True)
class SubsolverOptions:
    tau: float = 1.0
    beta: float = 0.5
    max_inner_iters: int = 500
    bb_step_bounds: tuple[float, float] = (1e-10, 1e10)
    nonmonotone_window: int = 10
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    fast_path: bool = True

    def __post_init__(self):
        lo, hi = self.bb_step_bounds
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not 0 < lo <= hi:
            raise ValueError("bb_step_bounds must satisfy 0 < lo <= hi")
        if self.max_inner_iters < 1:
            raise ValueError("max_inner_iters must be >= 1")
        if self.nonmonotone_window < 1:
            raise ValueError("nonmonotone_window must be >= 1")


def check_step_conditions(md: ModelData, s, tau: float, s_hat) -> tuple[bool, bool]:
    """Independently re-check both acceptance conditions for ``s``.

    Deliberately does not reuse the model helpers: every quantity is
    assembled here from ``g``, ``H`` and ``sigma`` with compensated sums.
    Returns ``(gradient condition, reference-decrease condition)``.
    """
    g, H, sigma = md.g, md.H, md.sigma
    s = np.asarray(s, dtype=float).reshape(-1)
    s_hat = np.asarray(s_hat, dtype=float).reshape(-1)

    def norm(v):
        return math.sqrt(math.fsum(float(t) * float(t) for t in v))

    def value(v):
        Hv = (H * v[None, :]).sum(axis=1)
        nv = norm(v)
        terms = [float(a) * float(b) for a, b in zip(g, v)]
        terms += [0.5 * float(a) * float(b) for a, b in zip(v, Hv)]
        terms.append(sigma / 6.0 * nv**3)
        return math.fsum(terms)

    ns = norm(s)
    Hs = (H * s[None, :]).sum(axis=1)
    grad = g + Hs + 0.5 * sigma * ns * s
    grad_ok = norm(grad) <= tau * ns * ns
    value_ok = value(s) <= value(s_hat)
    return grad_ok, value_ok


def minimize_cubic(md: ModelData, opts: SubsolverOptions = SubsolverOptions(), hnorm: float | None = None):
    """Return ``(s, inner_iters)`` satisfying both acceptance conditions.

    Raises :class:`SubsolverFailure` if ``max_inner_iters`` BB iterations do
    not produce an acceptable step.
    """
    if not np.any(md.g):
        raise ValueError("minimize_cubic needs a nonzero block gradient")
    if hnorm is None:
        hnorm = spectral_norm_upper_bound(md.H)
    s_hat = cauchy_step(md, opts.beta, hnorm)

    def acceptable(s):
        grad_ok, value_ok = check_step_conditions(md, s, opts.tau, s_hat)
        return grad_ok and value_ok

    if acceptable(s_hat):
        return s_hat, 0

    if opts.fast_path and md.q == 1:
        s1 = np.array([solve_cubic_1d(md.g[0], md.H[0, 0], md.sigma)])
        if acceptable(s1):
            return s1, 1

    # huge trial steps can overflow the cubic term; those just backtrack
    with np.errstate(over="ignore", invalid="ignore"):
        return _bb_loop(md, opts, s_hat, acceptable)


def _bb_loop(md: ModelData, opts: SubsolverOptions, s_hat, acceptable):
    lo, hi = opts.bb_step_bounds
    s = s_hat
    m_s = model_change(md, s)
    grad = model_gradient(md, s)
    alpha = min(max(1.0 / (md.sigma * (1.0 + np.linalg.norm(md.H))), lo), hi)
    window = deque([m_s], maxlen=opts.nonmonotone_window)
    best, m_best = s, m_s

    for it in range(1, opts.max_inner_iters + 1):
        ref = max(window)
        gg = float(grad @ grad)
        t = alpha
        for _ in range(opts.max_backtracks):
            trial = s - t * grad
            m_trial = model_change(md, trial)
            if m_trial <= ref - opts.armijo_c * t * gg:
                break
            t *= opts.backtrack
        else:
            raise SubsolverFailure("line search on the cubic model stalled", best, it)

        grad_new = model_gradient(md, trial)
        ds = trial - s
        dy = grad_new - grad
        sty = float(ds @ dy)
        alpha = min(max(float(ds @ ds) / sty, lo), hi) if sty > 0 else hi
        s, grad, m_s = trial, grad_new, m_trial
        window.append(m_s)
        if m_s < m_best:
            best, m_best = s, m_s
        if acceptable(s):
            return s, it

    raise SubsolverFailure(f"no acceptable step after {opts.max_inner_iters} BB iterations",
                           best, opts.max_inner_iters)

"""Inexact block cubic Newton (IBCN) outer loop.

Each iteration selects a block greedily, builds the cubic model of ``f``
restricted to it, computes an inexact model minimizer ``s_k``, and
accepts or rejects ``x_k + U_I s_k`` from the ratio of actual to
predicted decrease. The regularization weight ``sigma`` is adapted from
the same ratio.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass

import numpy as np

from .core import BlockIndex, Evaluator, Problem
from .cubic_model import ModelData, cauchy_alpha, quadratic_decrease, spectral_norm_upper_bound
from .data_io import Trace
from .selection import SelectionRule
from .subsolver import SubsolverFailure, SubsolverOptions, minimize_cubic


class SolverAbort(RuntimeError):
    """The run cannot continue (non-finite objective, invariant violation)."""


class DegenerateModel(ArithmeticError):
    """Predicted decrease is not positive after rounding."""


@dataclass(frozen=True)
class SolverConfig:
    sigma0: float = 1.0
    sigma_min: float = 1.0
    eta1: float = 0.1
    eta2: float = 0.1
    gamma1: float = 1.0
    gamma2: float = 2.0
    gamma3: float = 2.0
    tau: float = 1.0
    beta: float = 0.5
    max_iters: int = 10_000
    grad_tol: float = 0.0
    selection: SelectionRule = SelectionRule("max_abs_fill", q=1)
    subsolver: SubsolverOptions = SubsolverOptions()
    seed: int = 0
    refresh_every: int = 1000
    check_invariants: bool = False

    def __post_init__(self):
        if not self.sigma_min > 0:
            raise ValueError("sigma_min must be > 0")
        if self.sigma0 < self.sigma_min:
            raise ValueError("sigma0 must be >= sigma_min")
        if not 0 < self.eta1 <= self.eta2 < 1:
            raise ValueError("need 0 < eta1 <= eta2 < 1")
        if not 0 < self.gamma1 <= 1 < self.gamma2 <= self.gamma3:
            raise ValueError("need 0 < gamma1 <= 1 < gamma2 <= gamma3")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.max_iters < 0 or self.grad_tol < 0:
            raise ValueError("max_iters and grad_tol must be nonnegative")
        if self.refresh_every < 1:
            raise ValueError("refresh_every must be >= 1")

    def subsolver_options(self) -> SubsolverOptions:
        return dataclasses.replace(self.subsolver, tau=self.tau, beta=self.beta)


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, BlockIndex):
        return obj.one_based()
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float):
        return repr(obj)
    return obj


def config_hash(cfg, **extra) -> str:
    """SHA-256 of every field that can change a run's iterates."""
    d = _jsonable(cfg)
    d.pop("check_invariants", None)
    d.update({k: _jsonable(v) for k, v in extra.items()})
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def selection_rng(seed) -> np.random.Generator:
    # stream 1; data generation uses stream 0 of the same seed
    return np.random.default_rng([int(seed), 1])


@dataclass
class IterState:
    k: int
    x: np.ndarray
    f: float
    sigma: float
    block: BlockIndex | None = None
    s: np.ndarray | None = None
    rho: float = math.nan
    success: bool = False
    # diagnostics of the iteration that produced this state
    sigma_used: float = math.nan
    f_prev: float = math.nan
    model: ModelData | None = None
    alpha_hat: float = math.nan
    s_hat: np.ndarray | None = None
    inner_iters: int = 0
    subsolver_failed: bool = False
    since_refresh: int = 0


def rho_from_decrease(actual: float, q_decrease: float) -> float:
    """Ratio of actual to predicted decrease."""
    if not q_decrease > 0:
        raise DegenerateModel(f"predicted decrease {q_decrease!r} is not positive")
    return actual / q_decrease


def compute_rho(f_curr: float, f_trial: float, q_decrease: float) -> float:
    return rho_from_decrease(f_curr - f_trial, q_decrease)


def update_sigma(sigma: float, rho: float, cfg: SolverConfig) -> float:
    """Lower end of the admissible interval for the next ``sigma``."""
    if rho >= cfg.eta2:
        return max(cfg.sigma_min, cfg.gamma1 * sigma)
    if rho >= cfg.eta1:
        return sigma
    return cfg.gamma2 * sigma


def step(ev: Evaluator, state: IterState, cfg: SolverConfig, rng: np.random.Generator) -> IterState:
    """One IBCN iteration from ``state``; ``ev`` is advanced in place on success."""
    grad = ev.gradient()
    I = cfg.selection.select(grad, rng)
    g = grad[I.indices]
    H = ev.block_hessian(I)
    f_prev, sigma = ev.f, state.sigma
    md = ModelData(f_prev, g, H, sigma)
    hnorm = spectral_norm_upper_bound(H)
    alpha_hat = cauchy_alpha(md, cfg.beta, hnorm)

    new = IterState(k=state.k + 1, x=ev.x, f=ev.f, sigma=sigma, block=I, sigma_used=sigma,
                    f_prev=f_prev, model=md, alpha_hat=alpha_hat, s_hat=-alpha_hat * g,
                    since_refresh=state.since_refresh + 1)
    try:
        s, new.inner_iters = minimize_cubic(md, cfg.subsolver_options(), hnorm=hnorm)
    except SubsolverFailure as exc:
        new.subsolver_failed = True
        new.inner_iters = exc.inner_iters
        new.rho = -math.inf
        new.sigma = cfg.gamma2 * sigma
        return new

    new.s = s
    fresh = new.since_refresh >= cfg.refresh_every
    f_trial = ev.trial(I, s, fresh=fresh)
    if not math.isfinite(f_trial):
        raise SolverAbort(f"objective is {f_trial} at iteration {state.k}")
    try:
        # both decreases refer to the step that survived rounding of x + s;
        # ev.decrease is computed without cancellation
        rho = rho_from_decrease(ev.decrease, quadratic_decrease(md, ev.step_taken))
    except DegenerateModel:
        rho = -math.inf
    new.rho = rho
    new.success = rho >= cfg.eta1
    if new.success:
        ev.accept()
        if fresh:
            new.since_refresh = 0
    new.x, new.f = ev.x, ev.f
    new.sigma = update_sigma(sigma, rho, cfg)
    if cfg.check_invariants:
        _check_invariants(new, cfg, state)
    return new


def _check_invariants(new: IterState, cfg: SolverConfig, old: IterState) -> None:
    if new.sigma < cfg.sigma_min:
        raise SolverAbort(f"sigma fell below sigma_min at iteration {old.k}")
    if new.f > new.f_prev:
        raise SolverAbort(f"objective increased at iteration {old.k}")
    if new.success:
        g = new.model.g
        bound = cfg.eta1 * ((1 - cfg.beta) * new.alpha_hat * float(g @ g)
                            + new.sigma_used / 6 * np.linalg.norm(new.s) ** 3)
        if new.f_prev - new.f < bound - 1e-9:
            raise SolverAbort(f"sufficient decrease violated at iteration {old.k}")
    elif not np.array_equal(new.x, old.x):
        raise SolverAbort(f"rejected step moved the iterate at iteration {old.k}")


def new_trace(problem: Problem, ev: Evaluator, solver: str, cfg: SolverConfig, problem_id=None) -> Trace:
    rule = cfg.selection
    q = rule.q if rule.variant == "max_abs_fill" else "partition"
    return Trace(meta={
        "solver": solver,
        "q": q,
        "seed": cfg.seed,
        "problem": problem_id or getattr(problem, "name", "problem"),
        "config_sha": config_hash(cfg, solver=solver),
        "f0": float(ev.f),
        "gnorm0": float(np.linalg.norm(ev.gradient())),
    }, blocks=[])


def run(problem: Problem, x0, cfg: SolverConfig, callback=None, problem_id=None) -> Trace:
    """Run IBCN from ``x0`` until ``max_iters`` or ``||grad f|| <= grad_tol``.

    ``callback(state)`` is called after every iteration with the new
    :class:`IterState`.
    """
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    cfg.selection.validate(problem.n)
    ev = problem.evaluator(x0)
    if not math.isfinite(ev.f):
        raise SolverAbort(f"objective is {ev.f} at the starting point")
    rng = selection_rng(cfg.seed)
    trace = new_trace(problem, ev, "ibcn", cfg, problem_id)
    state = IterState(k=0, x=ev.x, f=ev.f, sigma=cfg.sigma0)
    t0 = time.perf_counter()
    for k in range(cfg.max_iters):
        gnorm = float(np.linalg.norm(ev.gradient()))
        if gnorm <= cfg.grad_tol or gnorm == 0:
            break
        state = step(ev, state, cfg, rng)
        grad = ev.gradient()
        trace.append(k, state.f, float(np.linalg.norm(grad)),
                     float(np.linalg.norm(grad[state.block.indices])),
                     state.sigma_used, state.success, time.perf_counter() - t0)
        trace.blocks.append(state.block)
        if callback is not None:
            callback(state)
    trace.x_final = ev.x.copy()
    return trace

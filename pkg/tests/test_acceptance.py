"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import math
import os
import time
from fractions import Fraction

import numpy as np
import pytest

from ibcn.baselines import run_baseline
from ibcn.core import BlockIndex
from ibcn.cubic_model import ModelData, model_value, solve_cubic_1d
from ibcn.data_io import load_libsvm, make_madelon_like, scale_features
from ibcn.problems import LogRegInstance, QuadraticInstance, generate_sparse_ls
from ibcn.selection import SelectionRule, select_max_abs_fill, select_partition_max_norm, theta_bound
from ibcn.solver import SolverConfig, run
from ibcn.subsolver import SubsolverOptions, minimize_cubic
from oracles import (
    cubic_global_grid,
    fd_block_hessian,
    fd_gradient,
    naive_logreg_value,
    rel_err,
    verify_step_conditions,
)

SLACK = 1e-9


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:>2}] {'PASS' if ok else 'FAIL'}: {detail}")
    return emit


def small_problems():
    """Ten sparse least-squares and ten logistic problems, all with n = 50."""
    probs = []
    for seed in range(10):
        inst, _ = generate_sparse_ls(30, 50, seed=[100 + seed, 0])
        probs.append((f"ls{seed}", inst))
    for seed in range(10):
        ds = scale_features(make_madelon_like(seed, m=120, n=49), -1.0, 1.0)
        probs.append((f"lr{seed}", LogRegInstance.from_dataset(ds, 1e-3)))
    return probs


def record_run(problem, cfg):
    """Run IBCN and keep every iteration state with a private copy of x."""
    states = []

    def cb(st):
        st.x = st.x.copy()
        states.append(st)

    trace = run(problem, np.zeros(problem.n), cfg, callback=cb)
    return trace, states


@pytest.fixture(scope="module")
def matrix():
    """The test matrix shared by criteria 1-3; also records its wall time."""
    t0 = time.perf_counter()
    runs = []
    for name, inst in small_problems():
        for q in (1, 5, 10):
            cfg = SolverConfig(max_iters=50, selection=SelectionRule(q=q), seed=q)
            trace, states = record_run(inst, cfg)
            runs.append((name, q, inst, cfg, trace, states))
    matrix_seconds.append(time.perf_counter() - t0)
    return runs


matrix_seconds = []


def test_criterion_01_step_conditions(matrix, report):
    t0 = time.perf_counter()
    checked = violations = 0
    for _, _, _, cfg, _, states in matrix:
        for st in states:
            if st.subsolver_failed:
                violations += 1
                continue
            md = st.model
            ok = verify_step_conditions(md.g, md.H, md.sigma, cfg.tau, st.s, st.s_hat)
            violations += ok != (True, True)
            checked += 1
    elapsed = time.perf_counter() - t0 + matrix_seconds[0]
    ok = checked >= 2000 and violations == 0 and elapsed < 60
    report(1, ok, f"{checked} steps verified in 60-digit arithmetic, {violations} violations, {elapsed:.0f}s")
    assert ok


def test_criterion_02_monotone_and_sigma(matrix, report):
    bad_f = bad_sigma = bad_x = 0
    for _, _, inst, cfg, trace, states in matrix:
        f = np.concatenate([[trace.meta["f0"]], trace.column("f")])
        bad_f += int(np.sum(np.diff(f) > 0))
        x_prev = np.zeros(inst.n)
        for st in states:
            bad_sigma += st.sigma < cfg.sigma_min or st.sigma_used < cfg.sigma_min
            fresh = inst.value(st.x)
            bad_f += not math.isclose(fresh, st.f, rel_tol=1e-12, abs_tol=1e-14)
            if not st.success:
                bad_x += not np.array_equal(st.x, x_prev)
            x_prev = st.x
    ok = bad_f == bad_sigma == bad_x == 0
    report(2, ok, f"{len(matrix)} runs: {bad_f} increases or drifts of f, {bad_sigma} sigma < sigma_min, "
                  f"{bad_x} rejected steps that moved x")
    assert ok


def test_criterion_03_sufficient_decrease(matrix, report):
    checked = violations = 0
    for _, _, inst, cfg, _, states in matrix:
        x_prev = np.zeros(inst.n)
        for st in states:
            if st.success:
                g = st.model.g
                # the reference length must respect the true spectral norm
                exact = min(cfg.beta / max(np.linalg.norm(st.model.H, 2), 1e-300),
                            math.sqrt(3 * cfg.beta / (st.sigma_used * np.linalg.norm(g))))
                assert st.alpha_hat <= exact * (1 + 1e-12)
                bound = cfg.eta1 * ((1 - cfg.beta) * st.alpha_hat * float(g @ g)
                                    + st.sigma_used / 6 * np.linalg.norm(st.s) ** 3)
                decrease = inst.value(x_prev) - inst.value(st.x)
                violations += decrease < bound - SLACK
                checked += 1
            x_prev = st.x
    report(3, violations == 0, f"{checked} successful iterations, {violations} below the decrease bound")
    assert violations == 0


def test_criterion_04_quadratic_oracles(report):
    rho_bad = sigma_bad = grad_bad = 0
    iterations = 0
    # stop short of the rounding floor of the gradient (about 1e-15 here), where
    # no step can meet the inexactness conditions in floating point
    tol = 1e-12
    configs = [SolverConfig(max_iters=60, grad_tol=tol, selection=SelectionRule(q=q), seed=q) for q in (1, 5, 20)]
    configs.append(SolverConfig(sigma0=8.0, gamma1=0.5, max_iters=60, grad_tol=tol, selection=SelectionRule(q=5)))
    for seed in range(5):
        inst = QuadraticInstance.random(20, cond=10.0, seed=seed)
        x0 = np.random.default_rng(seed).uniform(-1, 1, 20) / math.sqrt(20)
        for cfg in configs:
            states = []
            run(inst, x0, cfg, callback=lambda st: states.append(st))
            prev_sigma = None
            for st in states:
                iterations += 1
                rho_bad += not abs(st.rho - 1) <= 1e-9
                if prev_sigma is not None:
                    sigma_bad += st.sigma_used > prev_sigma
                prev_sigma = st.sigma_used
                if st.success:
                    gI = inst.full_gradient(st.x)[st.block.indices]
                    bound = (cfg.tau + st.sigma_used / 2) * np.linalg.norm(st.s) ** 2
                    grad_bad += np.linalg.norm(gI) > bound + SLACK

    slow = []
    for seed in range(5):
        inst = QuadraticInstance.random(20, cond=10.0, seed=seed)
        x0 = np.random.default_rng(seed).uniform(-1, 1, 20) / math.sqrt(20)
        tr = run(inst, x0, SolverConfig(max_iters=50, selection=SelectionRule(q=20)))
        if tr.column("gnorm").min() > 1e-8:
            slow.append(seed)
    ok = rho_bad == sigma_bad == grad_bad == 0 and not slow
    report(4, ok, f"{iterations} iterations: rho off by >1e-9 {rho_bad}x, sigma increases {sigma_bad}, "
                  f"block-gradient bound violations {grad_bad}; full-block runs missing 1e-8 in 50 iters: {slow}")
    assert ok


def test_criterion_05_subsolver_oracles(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    opts_1d = SubsolverOptions(tau=1e-12, fast_path=False)
    worst_1d = 0.0
    for _ in range(500):
        g, h, sigma = rng.standard_normal(), 3 * rng.standard_normal(), rng.uniform(0.1, 5)
        s, _ = minimize_cubic(ModelData(0.0, [g], [[h]], sigma), opts_1d)
        worst_1d = max(worst_1d, abs(s[0] - solve_cubic_1d(g, h, sigma)))

    opts = SubsolverOptions(tau=1e-10)
    worst_gap = -math.inf
    for _ in range(200):
        q = int(rng.integers(1, 6))
        B = rng.standard_normal((q, q))
        md = ModelData(0.0, rng.standard_normal(q), (B + B.T) / 2, float(rng.uniform(0.1, 5)))
        s, _ = minimize_cubic(md, opts)
        worst_gap = max(worst_gap, model_value(md, s) - cubic_global_grid(md.g, md.H, md.sigma))
    elapsed = time.perf_counter() - t0
    ok = worst_1d <= 1e-8 and worst_gap <= 1e-6 and elapsed < 120
    report(5, ok, f"1-D max |ds| = {worst_1d:.2e}; q<=5 max gap to global = {worst_gap:.2e}; {elapsed:.1f}s")
    assert ok


def test_criterion_06_finite_differences(report):
    rng = np.random.default_rng(6)
    ls, _ = generate_sparse_ls(40, 25, seed=[6, 0])
    ds = scale_features(make_madelon_like(6, m=80, n=24), -1.0, 1.0)
    problems = {
        "sparse_ls": ls,
        "logreg_dense": LogRegInstance.from_dataset(ds, 1e-3, dense=True),
        "logreg_sparse": LogRegInstance.from_dataset(ds, 1e-3, dense=False),
        "quadratic": QuadraticInstance.random(25, seed=6),
    }
    worst = {}
    for name, p in problems.items():
        errs = []
        for _ in range(20):
            x = rng.standard_normal(p.n) * 0.5
            I = BlockIndex(np.sort(rng.choice(p.n, 6, replace=False)), p.n)
            errs.append(rel_err(p.full_gradient(x), fd_gradient(p.value, x)))
            errs.append(rel_err(p.block_hessian(x, I), fd_block_hessian(p.full_gradient, x, I.indices)))
            errs.append(rel_err(p.block_hessian_diag(x, I), np.diag(p.block_hessian(x, I))))
        worst[name] = max(errs)
    ok = max(worst.values()) < 1e-5
    report(6, ok, "max relative error " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


def test_criterion_07_selection_bounds(report):
    rng = np.random.default_rng(7)

    def sq(v):
        return sum(Fraction(float(t)) ** 2 for t in v)

    violations = 0
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        grad = rng.standard_normal(n) * 10.0 ** rng.integers(-8, 8, n)
        q = int(rng.integers(1, n + 1))
        rule = SelectionRule(q=q)
        I = select_max_abs_fill(grad, q, rng)
        # theta^2 = 1 / (n + 1 - q): compare squares exactly
        violations += (n + 1 - q) * sq(grad[I.indices]) < sq(grad)
        assert theta_bound(rule, n) == (n + 1 - q) ** -0.5

        perm = rng.permutation(n)
        cuts = np.sort(rng.choice(np.arange(1, n), size=min(n - 1, int(rng.integers(0, 6))), replace=False))
        blocks = [BlockIndex(np.sort(c), n) for c in np.split(perm, cuts)]
        if rng.random() < 0.5:
            blocks.append(BlockIndex(rng.choice(n, int(rng.integers(1, n + 1)), replace=False), n))
        J = select_partition_max_norm(grad, tuple(blocks))
        violations += len(blocks) * sq(grad[J.indices]) < sq(grad)
    report(7, violations == 0, f"2000 selections on 1000 gradients, {violations} below theta")
    assert violations == 0


def _final_gap_table(results):
    """Mean of ``f - f*`` per (q, solver), f* the best final f on each instance."""
    table = {}
    for seed, runs in results.items():
        f_star = min(f for f, _ in runs.values())
        for key, (f, g) in runs.items():
            table.setdefault(key, []).append((f - f_star, g))
    return {k: np.array(v).mean(axis=0) for k, v in table.items()}


def test_criterion_08_sparse_ls_desk_scale(report):
    t0 = time.perf_counter()
    results = {}
    for seed in range(5):
        inst, _ = generate_sparse_ls(100, 1000, density=0.05, seed=[seed, 0], lam=1e-3, omega=1e-2, p=0.5)
        runs = {}
        for q in (1, 10, 50):
            cfg = SolverConfig(max_iters=2000, selection=SelectionRule(q=q), seed=seed)
            for solver in ("ibcn", "bcd1", "bcd2"):
                if solver == "ibcn":
                    tr = run(inst, np.zeros(inst.n), cfg)
                else:
                    tr = run_baseline(inst, np.zeros(inst.n), cfg, solver)
                runs[(q, solver)] = (inst.value(tr.x_final), np.linalg.norm(inst.full_gradient(tr.x_final)))
        results[seed] = runs
    table = _final_gap_table(results)
    elapsed = time.perf_counter() - t0

    lines, ok = [], elapsed < 600
    gaps = [table[(1, s)][0] for s in ("ibcn", "bcd1", "bcd2")]
    similar = max(gaps) <= 2 * min(gaps)
    ok &= similar
    lines.append(f"q=1 {'ok' if similar else 'NOT MET'} gaps " + "/".join(f"{v:.2e}" for v in gaps)
                 + f" (max/min {max(gaps) / min(gaps):.2f})")
    for q in (10, 50):
        ib = table[(q, "ibcn")]
        better = all(ib[0] < table[(q, b)][0] and ib[1] < table[(q, b)][1] for b in ("bcd1", "bcd2"))
        ok &= better
        lines.append(f"q={q} {'ok' if better else 'NOT MET'} ibcn {ib[0]:.2e}/{ib[1]:.2e} vs bcd1 {table[(q, 'bcd1')][0]:.2e}/"
                     f"{table[(q, 'bcd1')][1]:.2e}, bcd2 {table[(q, 'bcd2')][0]:.2e}/{table[(q, 'bcd2')][1]:.2e}")
    report(8, ok, "; ".join(lines) + f"; {elapsed:.0f}s")
    assert similar, f"q=1 final gaps differ by more than a factor of 2: {gaps}"
    assert ok


def _madelon():
    path = os.environ.get("IBCN_MADELON")
    if path:
        return load_libsvm(path), path
    return make_madelon_like(0, m=2000, n=500), "madelon-like synthetic"


def test_criterion_09_logistic_desk_scale(report):
    t0 = time.perf_counter()
    ds, source = _madelon()
    ds = scale_features(ds, -1.0, 1.0)
    inst = LogRegInstance.from_dataset(ds, 1e-3)
    X = inst.X.toarray() if hasattr(inst.X, "toarray") else inst.X
    lines, ok = [], True
    for q in (10, 50):
        cfg = SolverConfig(max_iters=2000, selection=SelectionRule(q=q), seed=0)
        final = {}
        for solver in ("ibcn", "bcd1", "bcd2"):
            if solver == "ibcn":
                tr = run(inst, np.zeros(inst.n), cfg)
            else:
                tr = run_baseline(inst, np.zeros(inst.n), cfg, solver)
            f = naive_logreg_value(X, inst.labels, tr.x_final, inst.lam)
            final[solver] = (f, float(np.linalg.norm(inst.full_gradient(tr.x_final))))
        f_ib, g_ib = final["ibcn"]
        # objective values are compared to 4 ulp after accurate summation
        wins = all(f_ib <= final[b][0] + 4 * math.ulp(final[b][0]) and g_ib <= final[b][1]
                   for b in ("bcd1", "bcd2"))
        ok &= wins
        lines.append(f"q={q} {'ok' if wins else 'NOT MET'} f/grad ibcn {f_ib:.10f}/{g_ib:.2e}, bcd1 {final['bcd1'][0]:.10f}/"
                     f"{final['bcd1'][1]:.2e}, bcd2 {final['bcd2'][0]:.10f}/{final['bcd2'][1]:.2e}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 900
    report(9, ok, f"{source}: " + "; ".join(lines) + f"; {elapsed:.0f}s")
    assert ok


def test_criterion_10_complexity_trend(report):
    inst, _ = generate_sparse_ls(100, 500, seed=[2024, 0])
    tr = run(inst, np.zeros(500), SolverConfig(max_iters=20000, selection=SelectionRule(q=10)))
    block = tr.column("block_gnorm")
    success = tr.column("success").astype(bool)
    eps = (1e-1, 1e-2, 1e-3)
    counts = [int(np.sum(success & (block > e))) for e in eps]
    # constant fitted at the loosest threshold, with 3x headroom
    C = counts[0] * eps[0] ** 1.5
    reached = [bool(np.any(success & (block <= e))) for e in eps]
    ok = all(reached) and all(c <= 3 * C * e ** -1.5 for c, e in zip(counts, eps))
    report(10, ok, "successful iterations above eps: "
                   + ", ".join(f"{e:g}: {c} (cap {3 * C * e ** -1.5:.0f})" for c, e in zip(counts, eps)))
    assert ok

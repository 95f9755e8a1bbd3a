"""Test objectives with analytic block derivatives.

* sparse least squares with the smoothed ``l_p`` penalty
  ``(1/m)||Ax - b||^2 + lam * sum_i (x_i^2 + omega^2)^(p/2)``
* l2-regularized logistic regression with an unpenalized intercept
* a convex quadratic, whose cubic-model remainder is identically zero

The first two share a "loss of a linear predictor plus separable penalty"
structure, which lets a run keep ``u = Ax`` up to date in O(m |I|) per
block step.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import sparse
from scipy.special import expit

from .core import BlockIndex, Evaluator, Problem, add_in_block, gather


def _columns(D, idx) -> np.ndarray:
    cols = D[:, idx]
    if sparse.issparse(cols):
        return cols.toarray()
    return np.asarray(cols)


def _check_dim(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != n:
        raise ValueError(f"expected a vector of length {n}, got {x.shape[0]}")
    return x


class _LinearModel(Problem):
    """``f(x) = loss(D x - offset) + penalty(x)`` with separable loss and penalty."""

    D = None
    offset = 0.0

    def predictor(self, x) -> np.ndarray:
        return self.D @ x - self.offset

    # subclasses define the value/grad/curv triples and the two deltas
    def loss_value(self, u) -> float:
        raise NotImplementedError

    def loss_delta(self, u, du) -> float:
        """``loss(u + du) - loss(u)`` without cancellation."""
        raise NotImplementedError

    def penalty_delta(self, x, I: BlockIndex, s) -> float:
        """``penalty(x + U_I s) - penalty(x)`` without cancellation."""
        raise NotImplementedError

    def loss_grad(self, u) -> np.ndarray:
        raise NotImplementedError

    def loss_curv(self, u) -> np.ndarray:
        raise NotImplementedError

    def penalty_value(self, x) -> float:
        raise NotImplementedError

    def penalty_grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def penalty_curv(self, x) -> np.ndarray:
        raise NotImplementedError

    def value(self, x) -> float:
        x = _check_dim(x, self.n)
        return self._value(x, self.predictor(x))

    def full_gradient(self, x) -> np.ndarray:
        x = _check_dim(x, self.n)
        return self._gradient(x, self.predictor(x))

    def block_hessian(self, x, I: BlockIndex) -> np.ndarray:
        x = _check_dim(x, self.n)
        return self._block_hessian(x, self.predictor(x), I)

    def block_hessian_diag(self, x, I: BlockIndex) -> np.ndarray:
        x = _check_dim(x, self.n)
        return self._block_hessian_diag(x, self.predictor(x), I)

    def _value(self, x, u) -> float:
        return float(self.loss_value(u) + self.penalty_value(x))

    def _gradient(self, x, u) -> np.ndarray:
        return np.asarray(self.D.T @ self.loss_grad(u)).reshape(-1) + self.penalty_grad(x)

    def _block_hessian(self, x, u, I: BlockIndex) -> np.ndarray:
        DI = _columns(self.D, I.indices)
        H = DI.T @ (self.loss_curv(u)[:, None] * DI)
        H = 0.5 * (H + H.T)
        H[np.diag_indices_from(H)] += gather(self.penalty_curv(x), I)
        return H

    def _block_hessian_diag(self, x, u, I: BlockIndex) -> np.ndarray:
        DI = _columns(self.D, I.indices)
        return self.loss_curv(u) @ (DI * DI) + gather(self.penalty_curv(x), I)

    def evaluator(self, x) -> "LinearModelEvaluator":
        return LinearModelEvaluator(self, x)


class LinearModelEvaluator(Evaluator):
    """Keeps the predictor ``u = D x - offset`` in sync with the iterate.

    ``f`` is carried forward by the directly computed decreases, so its
    error grows with the total decrease rather than with ``|f|`` per step.
    ``fresh=True`` recomputes the predictor of the trial point from scratch;
    ``f`` itself is always carried so the recorded objective stays monotone.
    """

    def __init__(self, problem: _LinearModel, x):
        self.problem = problem
        self.x = _check_dim(np.array(x, dtype=float), problem.n)
        self.u = problem.predictor(self.x)
        self.f = problem._value(self.x, self.u)
        self._grad = None
        self._pending = None
        self.decrease = float("nan")
        self.step_taken = None

    def gradient(self) -> np.ndarray:
        if self._grad is None:
            self._grad = self.problem._gradient(self.x, self.u)
        return self._grad

    def block_hessian(self, I: BlockIndex) -> np.ndarray:
        return self.problem._block_hessian(self.x, self.u, I)

    def block_hessian_diag(self, I: BlockIndex) -> np.ndarray:
        return self.problem._block_hessian_diag(self.x, self.u, I)

    def trial(self, I: BlockIndex, s, fresh: bool = False) -> float:
        pb = self.problem
        s = np.asarray(s, dtype=float)
        x_new = add_in_block(self.x, s, I)
        # the step actually taken once x + s is rounded
        s = self.step_taken = x_new[I.indices] - self.x[I.indices]
        du = _columns(pb.D, I.indices) @ s
        self.decrease = -(pb.loss_delta(self.u, du) + pb.penalty_delta(self.x, I, s))
        u_new = pb.predictor(x_new) if fresh else self.u + du
        f_new = self.f - self.decrease
        self._pending = (x_new, u_new, f_new)
        return f_new

    def accept(self) -> None:
        if self._pending is None:
            raise RuntimeError("accept() called without a pending trial")
        self.x, self.u, self.f = self._pending
        self._pending = None
        self._grad = None


class SparseLsInstance(_LinearModel):
    """Least squares with the nonconvex penalty ``sum_i (x_i^2 + omega^2)^(p/2)``."""

    name = "sparse_ls"

    def __init__(self, A, b, lam: float = 1e-3, omega: float = 1e-2, p: float = 0.5):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
            raise ValueError("A must be a non-empty matrix")
        if b.shape[0] != A.shape[0]:
            raise ValueError("b must have one entry per row of A")
        if lam < 0:
            raise ValueError("lam must be >= 0")
        if omega <= 0:
            raise ValueError("omega must be > 0")
        if not 0 < p < 1:
            raise ValueError("p must lie in (0, 1)")
        self.A = self.D = A
        self.b = self.offset = b
        self.m, self.n = A.shape
        self.lam, self.omega, self.p = float(lam), float(omega), float(p)

    def loss_value(self, u) -> float:
        return float(u @ u) / self.m

    def loss_delta(self, u, du) -> float:
        return float(2.0 * (u @ du) + du @ du) / self.m

    def loss_grad(self, u) -> np.ndarray:
        return (2.0 / self.m) * u

    def loss_curv(self, u) -> np.ndarray:
        return np.full(u.shape[0], 2.0 / self.m)

    def penalty_value(self, x) -> float:
        return self.lam * float(np.sum((x * x + self.omega**2) ** (self.p / 2)))

    def penalty_delta(self, x, I: BlockIndex, s) -> float:
        xi = gather(x, I)
        a = xi * xi + self.omega**2
        ratio = (2.0 * xi + s) * s / a
        return self.lam * float(np.sum(a ** (self.p / 2) * np.expm1(0.5 * self.p * np.log1p(ratio))))

    def penalty_grad(self, x) -> np.ndarray:
        return self.lam * self.p * x * (x * x + self.omega**2) ** (self.p / 2 - 1)

    def penalty_curv(self, x) -> np.ndarray:
        x2 = x * x
        w2 = self.omega**2
        return self.lam * self.p * (x2 + w2) ** (self.p / 2 - 2) * ((self.p - 1) * x2 + w2)


def sparse_ls_value(inst: SparseLsInstance, x) -> float:
    return inst.value(x)


def sparse_ls_block_derivatives(inst: SparseLsInstance, x, I: BlockIndex):
    """Return ``(block gradient, block Hessian)`` at ``x``."""
    x = _check_dim(x, inst.n)
    u = inst.predictor(x)
    return gather(inst._gradient(x, u), I), inst._block_hessian(x, u, I)


def generate_sparse_ls(m: int, n: int, density: float = 0.05, noise_sd: float = 1e-3,
                       seed=0, lam: float = 1e-3, omega: float = 1e-2, p: float = 0.5):
    """Random sparse recovery instance and its planted solution.

    ``A`` has i.i.d. uniform(0, 1) entries, the planted vector has
    ``ceil(density * n)`` entries equal to +-1 at uniformly chosen positions,
    and ``b = A x_hat + noise`` with Gaussian noise of standard deviation
    ``noise_sd``.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    A = rng.uniform(0.0, 1.0, size=(m, n))
    k = math.ceil(round(density * n, 9))
    x_hat = np.zeros(n)
    support = rng.choice(n, size=k, replace=False)
    x_hat[support] = rng.choice([-1.0, 1.0], size=k)
    b = A @ x_hat + rng.normal(0.0, noise_sd, size=m)
    return SparseLsInstance(A, b, lam=lam, omega=omega, p=p), x_hat


class LogRegInstance(_LinearModel):
    """l2-regularized logistic regression on ``xz = (x, z)``, ``z`` the intercept.

    The intercept is the last coordinate and carries no penalty. ``X`` may be
    a dense array or a scipy sparse matrix.
    """

    name = "logreg"

    def __init__(self, X, labels, lam: float = 1e-3):
        labels = np.asarray(labels, dtype=float).reshape(-1)
        if X.shape[0] != labels.shape[0]:
            raise ValueError("one label per sample is required")
        if X.shape[0] < 1:
            raise ValueError("at least one sample is required")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if lam < 0:
            raise ValueError("lam must be >= 0")
        m, n_features = X.shape
        ones = np.ones((m, 1))
        if sparse.issparse(X):
            self.D = sparse.hstack([sparse.csr_matrix(X, dtype=float), ones]).tocsc()
        else:
            self.D = np.hstack([np.asarray(X, dtype=float), ones])
        self.X = X
        self.labels = labels
        self.m = m
        self.n_features = n_features
        self.n = n_features + 1
        self.lam = float(lam)
        self._mask = np.ones(self.n)
        self._mask[-1] = 0.0

    @classmethod
    def from_dataset(cls, ds, lam: float = 1e-3, dense: bool | None = None) -> "LogRegInstance":
        X = ds.X
        if dense is None:
            dense = X.nnz > 0.25 * X.shape[0] * X.shape[1]
        return cls(X.toarray() if dense else X, ds.labels, lam=lam)

    def loss_value(self, u) -> float:
        return float(np.mean(np.logaddexp(0.0, -self.labels * u)))

    def loss_delta(self, u, du) -> float:
        bu = self.labels * u
        bdu = self.labels * du
        with np.errstate(over="ignore", invalid="ignore"):
            terms = np.log1p(expit(-bu) * np.expm1(-bdu))
        bad = ~np.isfinite(terms)
        if bad.any():
            terms[bad] = np.logaddexp(0.0, -(bu[bad] + bdu[bad])) - np.logaddexp(0.0, -bu[bad])
        return float(np.sum(terms)) / self.m

    def loss_grad(self, u) -> np.ndarray:
        return -self.labels * expit(-self.labels * u) / self.m

    def loss_curv(self, u) -> np.ndarray:
        t = self.labels * u
        return expit(t) * expit(-t) / self.m

    def penalty_value(self, x) -> float:
        xs = x[:-1]
        return self.lam * float(xs @ xs)

    def penalty_delta(self, x, I: BlockIndex, s) -> float:
        mask = gather(self._mask, I)
        return self.lam * float(np.sum(mask * (2.0 * gather(x, I) + s) * s))

    def penalty_grad(self, x) -> np.ndarray:
        return 2.0 * self.lam * x * self._mask

    def penalty_curv(self, x) -> np.ndarray:
        return 2.0 * self.lam * self._mask


def logreg_value(inst: LogRegInstance, xz) -> float:
    return inst.value(xz)


def logreg_block_derivatives(inst: LogRegInstance, xz, I: BlockIndex):
    """Return ``(block gradient, block Hessian)`` at ``xz``."""
    xz = _check_dim(xz, inst.n)
    u = inst.predictor(xz)
    return gather(inst._gradient(xz, u), I), inst._block_hessian(xz, u, I)


class QuadraticInstance(Problem):
    """``f(x) = 1/2 x^T Q x + c^T x + offset`` with ``Q`` symmetric positive definite."""

    name = "quadratic"

    def __init__(self, Q, c, offset: float = 0.0):
        Q = np.asarray(Q, dtype=float)
        c = np.asarray(c, dtype=float).reshape(-1)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] != c.shape[0]:
            raise ValueError("Q must be n x n and c of length n")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise ValueError("Q must be symmetric")
        if np.linalg.eigvalsh(Q)[0] <= 0:
            raise ValueError("Q must be positive definite")
        self.Q = 0.5 * (Q + Q.T)
        self.c = c
        self.offset = float(offset)
        self.n = c.shape[0]

    @classmethod
    def with_minimizer(cls, Q, x_star) -> "QuadraticInstance":
        """Instance whose minimizer is ``x_star`` and whose minimum value is 0."""
        Q = np.asarray(Q, dtype=float)
        x_star = np.asarray(x_star, dtype=float)
        return cls(Q, -Q @ x_star, 0.5 * float(x_star @ Q @ x_star))

    @classmethod
    def random(cls, n: int, cond: float = 10.0, seed=0) -> "QuadraticInstance":
        rng = np.random.default_rng(seed)
        V, _ = np.linalg.qr(rng.standard_normal((n, n)))
        eig = np.geomspace(1.0, cond, n)
        Q = (V * eig) @ V.T
        return cls.with_minimizer(0.5 * (Q + Q.T), rng.standard_normal(n))

    def minimizer(self) -> np.ndarray:
        return np.linalg.solve(self.Q, -self.c)

    def value(self, x) -> float:
        x = _check_dim(x, self.n)
        return float(0.5 * x @ self.Q @ x + self.c @ x + self.offset)

    def full_gradient(self, x) -> np.ndarray:
        x = _check_dim(x, self.n)
        return self.Q @ x + self.c

    def block_hessian(self, x, I: BlockIndex) -> np.ndarray:
        return self.Q[np.ix_(I.indices, I.indices)].copy()

    def evaluator(self, x) -> "QuadraticEvaluator":
        return QuadraticEvaluator(self, x)


class QuadraticEvaluator(Evaluator):
    """Evaluates trial points through the exact block Taylor expansion.

    For a quadratic ``f(x + U_I s) - f(x) = g_I^T s + 1/2 s^T Q_II s`` holds
    exactly, so there is no cached state to refresh and ``fresh`` is ignored.
    """

    def trial(self, I: BlockIndex, s, fresh: bool = False) -> float:
        s = np.asarray(s, dtype=float)
        x_new = add_in_block(self.x, s, I)
        s = self.step_taken = x_new[I.indices] - self.x[I.indices]
        QII = self.problem.Q[np.ix_(I.indices, I.indices)]
        self.decrease = -float(gather(self.gradient(), I) @ s) - 0.5 * float(s @ QII @ s)
        f_new = self.f - self.decrease
        self._pending = (x_new, f_new)
        return f_new

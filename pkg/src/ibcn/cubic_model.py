"""Block cubic model ``m(s) = f0 + g^T s + 1/2 s^T H s + sigma/6 ||s||^3``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ModelData:
    f0: float
    g: np.ndarray
    H: np.ndarray
    sigma: float

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float).reshape(-1)
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        if g.size < 1:
            raise ValueError("model needs at least one variable")
        if H.shape != (g.size, g.size):
            raise ValueError(f"H has shape {H.shape}, expected {(g.size, g.size)}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "f0", float(self.f0))
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def q(self) -> int:
        return self.g.size


def _as_step(md: ModelData, s) -> np.ndarray:
    s = np.asarray(s, dtype=float).reshape(-1)
    if s.size != md.q:
        raise ValueError(f"step has length {s.size}, model has {md.q} variables")
    return s


def quadratic_value(md: ModelData, s) -> float:
    s = _as_step(md, s)
    return md.f0 + float(md.g @ s) + 0.5 * float(s @ md.H @ s)


def quadratic_decrease(md: ModelData, s) -> float:
    """``q(0) - q(s)`` computed without the shared ``f0`` term."""
    s = _as_step(md, s)
    return -float(md.g @ s) - 0.5 * float(s @ md.H @ s)


def model_value(md: ModelData, s) -> float:
    return md.f0 + model_change(md, s)


def model_change(md: ModelData, s) -> float:
    """``m(s) - m(0)``; keeps full relative precision when ``f0`` dominates."""
    s = _as_step(md, s)
    ns = np.linalg.norm(s)
    return float(md.g @ s) + 0.5 * float(s @ md.H @ s) + md.sigma / 6.0 * ns**3


def model_gradient(md: ModelData, s) -> np.ndarray:
    s = _as_step(md, s)
    return md.g + md.H @ s + 0.5 * md.sigma * np.linalg.norm(s) * s


def cauchy_alpha(md: ModelData, beta: float, hnorm: float) -> float:
    """Step length of the reference point ``-alpha * g``.

    ``alpha = min(beta / hnorm, sqrt(3 beta / (sigma ||g||)))``, the first
    term dropped when ``hnorm == 0``. Any upper bound on ``||H||_2`` may be
    passed as ``hnorm``.
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if hnorm < 0:
        raise ValueError("hnorm must be nonnegative")
    gnorm = float(np.linalg.norm(md.g))
    if gnorm == 0:
        raise ValueError("cauchy_alpha needs a nonzero gradient")
    alpha = math.sqrt(3.0 * beta / (md.sigma * gnorm))
    if hnorm > 0:
        alpha = min(beta / hnorm, alpha)
    return alpha


def cauchy_step(md: ModelData, beta: float, hnorm: float) -> np.ndarray:
    return -cauchy_alpha(md, beta, hnorm) * md.g


def spectral_norm_upper_bound(H, max_iter: int = 50, tol: float = 1e-8) -> float:
    """Cheap upper bound on ``||H||_2`` for symmetric ``H``.

    Power iteration inflated by ``1 + 1e-6``; if it has not settled within
    ``max_iter`` steps the Frobenius norm is returned instead.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    q = H.shape[0]
    if q == 1:
        return abs(float(H[0, 0]))
    fro = float(np.linalg.norm(H))
    if fro == 0:
        return 0.0
    # fixed start vector keeps the bound deterministic
    v = np.random.default_rng(12345).standard_normal(q)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = H @ (H @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        new = math.sqrt(nw)
        v = w / nw
        if abs(new - est) <= tol * new:
            return min(new * (1 + 1e-6), fro)
        est = new
    return fro


def solve_cubic_1d(g: float, h: float, sigma: float) -> float:
    """Global minimizer of ``g s + h s^2 / 2 + sigma |s|^3 / 6``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    g, h = float(g), float(h)
    if g == 0:
        return 0.0 if h >= 0 else 2.0 * h / sigma
    # step t >= 0 against the gradient solves sigma/2 t^2 + h t - |g| = 0
    a = abs(g)
    disc = math.sqrt(h * h + 2.0 * sigma * a)
    if h >= 0:
        t = 2.0 * a / (h + disc)
    else:
        t = (disc - h) / sigma
    return -math.copysign(t, g)

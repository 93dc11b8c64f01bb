"""Smoothed online convex optimization (SOCO) over a fixed window.

Decisions ``x_1..x_{p-1}`` are chosen with ``x_0`` and ``x_p`` given, to minimize

    sum_{tau=1}^{p-1} f_tau(x_tau) + sum_{tau=1}^{p} c_tau(x_tau, x_{tau-1}, w_{tau-1}).

The switching costs see the stacked argument ``s = (x_tau, x_{tau-1}, w_{tau-1})``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ..costs import QuadraticCost
from ..errors import ConvergenceError, ValidationError
from ..solver import EPS_OPT, MAX_ITER, switching_cost_derivatives


class QuadraticSwitch:
    """``c(s) = s^T S s / 2`` with ``S`` positive semidefinite."""

    def __init__(self, S):
        S = np.asarray(S, dtype=np.float64)
        S = 0.5 * (S + S.T)
        eig = np.linalg.eigvalsh(S)
        if eig[0] < -1e-12:
            raise ValidationError("switching weight must be positive semidefinite")
        self.S = S
        self.ell = float(eig[-1])

    def derivatives(self, s):
        Ss = self.S @ s
        return 0.5 * float(s @ Ss), Ss, self.S


class LtvSwitch:
    """Switching cost ``xi`` of a terminal-constrained LTV segment, seen as a SOCO stage.

    ``s = (x_next, x_prev, zeta)`` maps to ``xi_t^gap(x_prev, zeta, x_next)``.
    """

    def __init__(self, sys, model, t, gap, tol=None):
        self.sys, self.model, self.t, self.gap, self.tol = sys, model, t, gap, tol
        self.ell = np.nan  # bounded by L2(gap); not needed by the solver

    def derivatives(self, s):
        n, g = self.sys.n, self.gap
        x_next, x_prev, zeta = s[:n], s[n:2 * n], s[2 * n:].reshape(g, n)
        der = switching_cost_derivatives(self.sys, self.model, self.t, g, x_prev, zeta, x_next, tol=self.tol)
        # derivative order is (x_prev, zeta, x_next); permute to (x_next, x_prev, zeta)
        perm = np.concatenate([np.arange(n + g * n, 2 * n + g * n), np.arange(n), np.arange(n, n + g * n)])
        return der.value, der.gradient[perm], der.hessian[np.ix_(perm, perm)]


@dataclass(frozen=True, eq=False)
class SocoInstance:
    n: int
    hitting: tuple  # p-1 CostFn
    switching: tuple  # p stage costs with .derivatives(s)
    mu: float
    ell: float

    @property
    def p(self) -> int:
        return len(self.switching)

    def __post_init__(self):
        if len(self.hitting) != len(self.switching) - 1 or len(self.switching) < 2:
            raise ValidationError("need p >= 2 switching costs and p-1 hitting costs")


@dataclass(frozen=True)
class SocoSolution:
    x: np.ndarray  # (p+1, n) including both endpoints
    value: float
    grad_norm: float
    iterations: int


def _objective(inst: SocoInstance, X, w, hess=True):
    """Value, gradient and (dense) Hessian in the free block ``x_1..x_{p-1}``."""
    n, p = inst.n, inst.p
    N = (p - 1) * n
    val = 0.0
    g = np.zeros(N)
    H = np.zeros((N, N)) if hess else None
    for tau in range(1, p):
        fn = inst.hitting[tau - 1]
        sl = slice((tau - 1) * n, tau * n)
        val += fn.value(X[tau])
        g[sl] += fn.gradient(X[tau])
        if hess:
            H[sl, sl] += fn.hessian(X[tau])
    for tau in range(1, p + 1):
        s = np.concatenate([X[tau], X[tau - 1], np.ravel(w[tau - 1])])
        v, gs, Hs = inst.switching[tau - 1].derivatives(s)
        val += v
        # free coordinates inside s: x_tau is free if tau <= p-1, x_{tau-1} if tau-1 >= 1
        parts = []
        if tau <= p - 1:
            parts.append((slice(0, n), slice((tau - 1) * n, tau * n)))
        if tau - 1 >= 1:
            parts.append((slice(n, 2 * n), slice((tau - 2) * n, (tau - 1) * n)))
        for ls, gsl in parts:
            g[gsl] += gs[ls]
            if hess:
                for ls2, gsl2 in parts:
                    H[gsl, gsl2] += Hs[ls, ls2]
    return val, g, H


def solve_soco(inst: SocoInstance, x0, w, xp, *, tol=None, max_iter=MAX_ITER) -> SocoSolution:
    """Damped Newton on the unconstrained window problem."""
    n, p = inst.n, inst.p
    X = np.zeros((p + 1, n))
    X[0] = x0
    X[p] = xp

    def phi(theta):
        Y = X.copy()
        Y[1:p] = theta.reshape(p - 1, n)
        return _objective(inst, Y, w, hess=False)[0]

    theta = np.zeros((p - 1) * n)
    gnorm = np.inf
    for it in range(max_iter + 1):
        X[1:p] = theta.reshape(p - 1, n)
        val, g, H = _objective(inst, X, w)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= (EPS_OPT if tol is None else tol) * (1 + abs(val)):
            return SocoSolution(X.copy(), val, gnorm, it)
        step = -sla.solve(0.5 * (H + H.T), g, assume_a="sym")
        slope = float(g @ step)
        if -slope <= 64 * np.finfo(float).eps * (1 + abs(val)):
            theta = theta + step  # decrease below value resolution; take the full step
            continue
        s = 1.0
        for _ in range(60):
            cand = theta + s * step
            if phi(cand) <= val + 1e-4 * s * slope:
                break
            s *= 0.5
        else:
            raise ConvergenceError(f"SOCO line search failed (gradient norm {gnorm:.3e})", gnorm, it)
        theta = cand
    raise ConvergenceError(f"SOCO solve did not converge in {max_iter} iterations", gnorm, max_iter)


def random_quadratic_soco(rng, n, p, r=None, mu_range=(0.5, 2.0), s_scale=1.0) -> SocoInstance:
    """Random instance with quadratic hitting costs and PSD quadratic switching costs."""
    r = n if r is None else r

    def spd(dim, lo, hi):
        Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        return (Q * rng.uniform(lo, hi, dim)) @ Q.T

    hitting = tuple(QuadraticCost(spd(n, *mu_range)) for _ in range(p - 1))
    switching = []
    for _ in range(p):
        G = s_scale * rng.standard_normal((2 * n + r, 2 * n + r)) / np.sqrt(2 * n + r)
        switching.append(QuadraticSwitch(G @ G.T))
    mu = min(h.m for h in hitting)
    ell = max(c.ell for c in switching)
    return SocoInstance(n, hitting, tuple(switching), mu, ell)


def ltv_to_soco(sys, model, t, points, tol=None) -> SocoInstance:
    """SOCO instance whose decisions are the states at ``points`` (relative to ``t``).

    ``points`` starts at 0 and consecutive gaps must be at least ``d``.  The
    hitting costs are the state costs at interior points and the switching
    costs are the switching costs of the segments between them.
    """
    points = list(points)
    if points[0] != 0 or any(b <= a for a, b in zip(points, points[1:])):
        raise ValidationError("decision points must start at 0 and increase")
    hitting = tuple(model.f[t + q - 1] for q in points[1:-1])
    switching = tuple(LtvSwitch(sys, model, t + a, b - a, tol) for a, b in zip(points, points[1:]))
    mu = min(h.m for h in hitting) if hitting else model.m_f
    return SocoInstance(sys.n, hitting, switching, mu, np.nan)


def segment_disturbances(zeta, points):
    """Per-stage disturbance blocks ``zeta[a:b]`` for consecutive decision points."""
    zeta = np.asarray(zeta)
    return [zeta[a:b].ravel() for a, b in zip(points, points[1:])]


__all__ = [
    "QuadraticSwitch",
    "LtvSwitch",
    "SocoInstance",
    "SocoSolution",
    "solve_soco",
    "random_quadratic_soco",
    "ltv_to_soco",
    "segment_disturbances",
]

"""Finite-horizon trajectory optimization over a window of the LTV system.

Two problems are solved from a start state ``x`` at time ``t`` over ``p`` steps
with disturbance segment ``zeta``:

* terminal-cost problem: minimize sum of ``f_{t+tau}(y_tau) + c_{t+tau}(v_{tau-1})``
  plus ``F(y_p)``;
* terminal-constraint problem: same sum subject to ``y_p = z``; its optimal
  value ``iota`` includes ``f_{t+p}(z)``.

Short windows use a damped Newton method on the controls after eliminating the
states.  Long windows keep states and controls as variables and solve each
Newton system as a sparse KKT system; both give the same minimizer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .costs import INDICATOR_ORIGIN, ZERO, CostModel, TerminalCost
from .errors import ConvergenceError, RankError, ReachabilityError, TimeRangeError, ValidationError
from .system import LtvSystem

EPS_OPT = 1e-9
MAX_ITER = 200
SV_CUTOFF = 1e-12
DENSE_LIMIT = 240  # largest m*p handled by the dense reduced method under "auto"

ARMIJO_SLOPE = 1e-4
BACKTRACK = 0.5
MAX_BACKTRACK = 60
RESOLUTION = 64 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class StackedMaps:
    """Linear maps from ``(x, v, zeta)`` to the stacked states ``y_0..y_p``."""

    S_x: np.ndarray  # ((p+1)n, n)
    S_v: np.ndarray  # ((p+1)n, mp)
    S_zeta: np.ndarray  # ((p+1)n, np)
    R_zeta: np.ndarray  # (n, np)
    Phi: np.ndarray  # Phi(t+p, t)
    M: np.ndarray  # (n, mp)
    M_dagger: np.ndarray | None = None
    V: np.ndarray | None = None

    @property
    def p(self) -> int:
        return self.S_x.shape[0] // self.S_x.shape[1] - 1

    def states(self, x, v, zeta) -> np.ndarray:
        y = self.S_x @ np.ravel(x) + self.S_v @ np.ravel(v) + self.S_zeta @ np.ravel(zeta)
        return y.reshape(self.p + 1, -1)


def _check_window(sys: LtvSystem, t: int, p: int):
    if p < 1:
        raise ValidationError(f"window length must be positive, got p={p}")
    if t < 0 or t + p > sys.T:
        raise TimeRangeError(f"window (t={t}, p={p}) exceeds horizon T={sys.T}")


def pseudo_inverse(M: np.ndarray, full_nullspace: bool = False):
    """Moore-Penrose inverse of a wide matrix via a thin SVD.

    Returns ``(M_dagger, rank, V)`` where ``V`` is an orthonormal basis of the
    nullspace when ``full_nullspace`` is set (requires full row rank).
    """
    U, s, Wt = np.linalg.svd(M, full_matrices=False)
    cutoff = SV_CUTOFF * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > cutoff))
    Md = (Wt[:rank].T / s[:rank]) @ U[:, :rank].T
    V = None
    if full_nullspace:
        n, cols = M.shape
        if rank < n:
            raise RankError(f"controllability window has rank {rank} < n={n}; no nullspace parameterization")
        # orthogonal complement of the row space, from a complete QR of its basis
        Q, _ = np.linalg.qr(Wt[:rank].T, mode="complete")
        V = Q[:, rank:]
    return Md, rank, V


def build_stacked_maps(sys: LtvSystem, t: int, p: int, nullspace: bool = False) -> StackedMaps:
    """Stacked rollout maps for the window ``[t, t+p]``.

    With ``nullspace=True`` also the pseudo-inverse ``M_dagger`` and an
    orthonormal nullspace basis ``V`` of the controllability matrix, so that
    every control sequence reaching ``z`` is ``M_dagger (z - Phi x - R_zeta zeta) + V r``.
    """
    _check_window(sys, t, p)
    n, m = sys.n, sys.m
    blocks = kernels.transfer_blocks(sys.A[t:t + p])  # blocks[i, j] = Phi(t+i, t+j)
    S_x = blocks[:, 0].reshape((p + 1) * n, n)
    S_zeta = np.zeros((p + 1, n, p, n))
    for j in range(p):
        S_zeta[j + 1:, :, j, :] = blocks[j + 1:, j + 1]
    S_v = np.einsum("ajbk,bkl->ajbl", S_zeta, sys.B[t:t + p]).reshape((p + 1) * n, p * m)
    S_zeta = S_zeta.reshape((p + 1) * n, p * n)
    M = S_v[p * n:]
    R_zeta = S_zeta[p * n:]
    Md = V = None
    if nullspace:
        Md, _, V = pseudo_inverse(M, full_nullspace=True)
    return StackedMaps(S_x, S_v, S_zeta, R_zeta.copy(), blocks[p, 0].copy(), M.copy(), Md, V)


@dataclass(frozen=True, eq=False)
class SolveResult:
    states: np.ndarray  # (p+1, n), y_0..y_p
    controls: np.ndarray  # (p, m), v_0..v_{p-1}
    value: float
    grad_norm: float
    iterations: int
    method: str = "dense"
    reduced_hessian: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "states": self.states.tolist(),
            "controls": self.controls.tolist(),
            "value": self.value,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "method": self.method,
        }


def _groups(fns):
    """Indices sharing one oracle object, so batched calls can be used."""
    out = {}
    for i, fn in enumerate(fns):
        out.setdefault(id(fn), (fn, []))[1].append(i)
    return [(fn, np.array(idx)) for fn, idx in out.values()]


class _Segment:
    """Objective of one window as a function of ``Y = y_1..y_p`` and ``V = v_0..v_{p-1}``."""

    def __init__(self, sys, model, t, p, F: TerminalCost):
        self.n, self.m, self.p = sys.n, sys.m, p
        self.fg = _groups(model.f[t:t + p])
        self.cg = _groups(model.c[t:t + p])
        self.F = F.fn if F.kind == "smooth" else None

    def value(self, Y, V) -> float:
        val = 0.0
        for fn, idx in self.fg:
            val += float(np.sum(fn.values(Y[idx])))
        for fn, idx in self.cg:
            val += float(np.sum(fn.values(V[idx])))
        if self.F is not None:
            val += self.F.value(Y[-1])
        return val

    def derivatives(self, Y, V):
        gY = np.empty_like(Y)
        gV = np.empty_like(V)
        HY = np.empty((self.p, self.n, self.n))
        HV = np.empty((self.p, self.m, self.m))
        for fn, idx in self.fg:
            gY[idx] = fn.gradients(Y[idx])
            HY[idx] = fn.hessians(Y[idx])
        for fn, idx in self.cg:
            gV[idx] = fn.gradients(V[idx])
            HV[idx] = fn.hessians(V[idx])
        if self.F is not None:
            gY[-1] += self.F.gradient(Y[-1])
            HY[-1] += self.F.hessian(Y[-1])
        return gY, gV, HY, HV


def _segment_inputs(sys, t, p, x, zeta):
    _check_window(sys, t, p)
    x = np.asarray(x, dtype=np.float64).reshape(sys.n)
    if zeta is None:
        zeta = sys.w[t:t + p]
    zeta = np.asarray(zeta, dtype=np.float64)
    if zeta.shape != (p, sys.n):
        raise ValidationError(f"disturbance segment must have shape ({p}, {sys.n}), got {zeta.shape}")
    return x, zeta


def _tolerance(value, tol):
    return (EPS_OPT if tol is None else tol) * (1.0 + abs(value))


def _pick_method(method, sys, p):
    if method == "auto":
        return "dense" if sys.m * p <= DENSE_LIMIT else "sparse"
    if method not in ("dense", "sparse"):
        raise ValidationError(f"unknown solve method {method!r}")
    return method


def _armijo(phi, theta, val, g, step, what):
    slope = float(g @ step)
    if -slope <= RESOLUTION * (1.0 + abs(val)):
        # predicted decrease is below what the value can resolve: inside the
        # quadratic region, so the full step is taken unchecked
        cand = theta + step
        return cand, phi(cand)
    s = 1.0
    for _ in range(MAX_BACKTRACK):
        cand = theta + s * step
        new = phi(cand)
        if new <= val + ARMIJO_SLOPE * s * slope:
            return cand, new
        s *= BACKTRACK
    return None, val


def _dense_newton(seg, maps, x, zeta, v0, W, tol, max_iter, what):
    """Damped Newton over ``theta`` with controls ``v = v0 + W theta``."""
    n, m, p = seg.n, seg.m, seg.p
    Sv = maps.S_v[n:].reshape(p, n, p * m)
    y_aff = (maps.S_x @ x + maps.S_zeta @ zeta.ravel())[n:].reshape(p, n)

    def unpack(theta):
        v = v0 + (W @ theta if W is not None else theta)
        Y = y_aff + (Sv.reshape(p * n, p * m) @ v).reshape(p, n)
        return Y, v.reshape(p, m)

    def phi(theta):
        return seg.value(*unpack(theta))

    dim = W.shape[1] if W is not None else p * m
    theta = np.zeros(dim)
    val = phi(theta)
    gnorm = np.inf
    H = None
    for it in range(max_iter + 1):
        Y, V = unpack(theta)
        gY, gV, HY, HV = seg.derivatives(Y, V)
        g = Sv.reshape(p * n, p * m).T @ gY.ravel() + gV.ravel()
        HS = np.einsum("tij,tjk->tik", HY, Sv).reshape(p * n, p * m)
        H = Sv.reshape(p * n, p * m).T @ HS
        idx = np.arange(p * m).reshape(p, m)
        H[idx[:, :, None], idx[:, None, :]] += HV
        if W is not None:
            g = W.T @ g
            H = W.T @ H @ W
        H = 0.5 * (H + H.T)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= _tolerance(val, tol):
            return theta, val, gnorm, it, H
        if it == max_iter:
            break
        try:
            step = -sla.cho_solve(sla.cho_factor(H), g)
        except sla.LinAlgError:
            step = -np.linalg.solve(H, g)
        new_theta, new_val = _armijo(phi, theta, val, g, step, what)
        if new_theta is None:
            raise ConvergenceError(f"{what}: line search failed (gradient norm {gnorm:.3e})", gnorm, it)
        theta, val = new_theta, new_val
    raise ConvergenceError(f"{what}: no convergence in {max_iter} Newton iterations", gnorm, max_iter)


def _sparse_newton(seg, sys, t, x, zeta, z, V0, tol, max_iter, what):
    """Newton on (states, controls) with the dynamics as equality constraints."""
    n, m, p = seg.n, seg.m, seg.p
    A, B = sys.A[t:t + p], sys.B[t:t + p]
    constrained = z is not None
    pf = p - 1 if constrained else p  # free state blocks y_1..y_pf
    ny, nv = pf * n, p * m

    rows, cols, data = [], [], []

    def put(r0, c0, block):
        rr, cc = np.meshgrid(np.arange(block.shape[0]), np.arange(block.shape[1]), indexing="ij")
        rows.append((r0 + rr).ravel())
        cols.append((c0 + cc).ravel())
        data.append(block.ravel())

    for tau in range(p):
        if tau + 1 <= pf:
            put(tau * n, tau * n, np.eye(n))
        if 1 <= tau <= pf:
            put(tau * n, (tau - 1) * n, -A[tau])
        put(tau * n, ny + tau * m, -B[tau])
    E = sp.csc_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(p * n, ny + nv)
    )
    e = zeta.copy()
    e[0] += A[0] @ x
    if constrained:
        e[p - 1] -= z
    e = e.ravel()

    def split(s):
        Y = np.empty((p, n))
        Y[:pf] = s[:ny].reshape(pf, n)
        if constrained:
            Y[p - 1] = z
        return Y, s[ny:].reshape(p, m)

    def phi(s):
        return seg.value(*split(s))

    states0 = kernels.rollout(A, B, zeta, x, V0)
    s = np.concatenate([states0[1:pf + 1].ravel(), V0.ravel()])
    val = phi(s)
    gnorm = np.inf
    for it in range(max_iter + 1):
        Y, Vc = split(s)
        gY, gV, HY, HV = seg.derivatives(Y, Vc)
        g = np.concatenate([gY[:pf].ravel(), gV.ravel()])
        H = sp.block_diag(list(HY[:pf]) + list(HV), format="csc")
        K = sp.bmat([[H, E.T], [E, None]], format="csc")
        resid = E @ s - e
        sol = spla.splu(K).solve(np.concatenate([-g, -resid]))
        step = sol[: ny + nv]
        gnorm = float(np.linalg.norm(H @ step))  # equals |g + E^T nu|, the KKT residual
        if gnorm <= _tolerance(val, tol) and np.linalg.norm(resid) <= 1e-12 * (1 + np.linalg.norm(e)):
            return s, val, gnorm, it
        if it == max_iter:
            break
        if np.linalg.norm(resid) > 1e-12 * (1 + np.linalg.norm(e)):
            s = s + step  # restore feasibility with a full step
            val = phi(s)
            continue
        new_s, new_val = _armijo(phi, s, val, g, step, what)
        if new_s is None:
            if gnorm <= 1e3 * _tolerance(val, tol):
                return s, val, gnorm, it
            raise ConvergenceError(f"{what}: line search failed (KKT residual {gnorm:.3e})", gnorm, it)
        s, val = new_s, new_val
    raise ConvergenceError(f"{what}: no convergence in {max_iter} Newton iterations", gnorm, max_iter)


def solve_terminal_cost(
    sys: LtvSystem,
    model: CostModel,
    F: TerminalCost,
    t: int,
    p: int,
    x,
    zeta=None,
    *,
    method: str = "auto",
    tol: float | None = None,
    max_iter: int = MAX_ITER,
) -> SolveResult:
    """Optimal ``p``-step trajectory from ``x`` at time ``t`` with terminal cost ``F``.

    ``zeta`` defaults to the system's own disturbances ``w[t:t+p]``.  The
    indicator terminal cost is handled as the constraint ``y_p = 0``.
    """
    if F.kind == "indicator":
        return solve_terminal_constraint(
            sys, model, t, p, x, zeta, np.zeros(sys.n), method=method, tol=tol, max_iter=max_iter
        )
    model.check_system(sys)
    x, zeta = _segment_inputs(sys, t, p, x, zeta)
    seg = _Segment(sys, model, t, p, F)
    what = f"terminal-cost solve at t={t}, p={p}"
    method = _pick_method(method, sys, p)
    if method == "dense":
        maps = build_stacked_maps(sys, t, p)
        theta, val, gnorm, iters, H = _dense_newton(
            seg, maps, x, zeta, np.zeros(p * sys.m), None, tol, max_iter, what
        )
        controls = theta.reshape(p, sys.m)
    else:
        s, val, gnorm, iters = _sparse_newton(
            seg, sys, t, x, zeta, None, np.zeros((p, sys.m)), tol, max_iter, what
        )
        controls = s[p * sys.n:].reshape(p, sys.m)
        H = None
    states = kernels.rollout(sys.A[t:t + p], sys.B[t:t + p], zeta, x, controls)
    return SolveResult(states, controls, float(val), gnorm, iters, method, H)


def _reachable_start(sys, t, p, x, zeta, z):
    M = controllability_matrix_window(sys, t, p)
    Md, rank, _ = pseudo_inverse(M)
    if rank < sys.n:
        raise ReachabilityError(
            f"terminal state not enforceable: window (t={t}, p={p}) has rank {rank} < n={sys.n}"
        )
    blocks_last = _last_transfer_row(sys, t, p)
    free_end = blocks_last[0] @ x + sum(blocks_last[j + 1] @ zeta[j] for j in range(p))
    return (Md @ (z - free_end)).reshape(p, sys.m)


def _last_transfer_row(sys, t, p):
    """``[Phi(t+p, t), Phi(t+p, t+1), ..., Phi(t+p, t+p)]`` by a backward sweep."""
    out = np.empty((p + 1, sys.n, sys.n))
    out[p] = np.eye(sys.n)
    for j in range(p - 1, -1, -1):
        out[j] = out[j + 1] @ sys.A[t + j]
    return out


def controllability_matrix_window(sys, t, p):
    row = _last_transfer_row(sys, t, p)
    return np.hstack([row[j + 1] @ sys.B[t + j] for j in range(p)])


def solve_terminal_constraint(
    sys: LtvSystem,
    model: CostModel,
    t: int,
    p: int,
    x,
    zeta,
    z,
    *,
    method: str = "auto",
    tol: float | None = None,
    max_iter: int = MAX_ITER,
) -> SolveResult:
    """Optimal ``p``-step trajectory from ``x`` that ends exactly at ``z``.

    The returned value is ``iota``, which includes ``f_{t+p}(z)``.
    """
    model.check_system(sys)
    x, zeta = _segment_inputs(sys, t, p, x, zeta)
    z = np.asarray(z, dtype=np.float64).reshape(sys.n)
    if p * sys.m < sys.n:
        raise ReachabilityError(f"p={p} steps of {sys.m} inputs cannot reach an arbitrary state in R^{sys.n}")
    seg = _Segment(sys, model, t, p, ZERO)
    what = f"terminal-constraint solve at t={t}, p={p}"
    method = _pick_method(method, sys, p)
    if method == "dense":
        try:
            maps = build_stacked_maps(sys, t, p, nullspace=True)
        except RankError as exc:
            raise ReachabilityError(f"{what}: {exc}") from None
        v0 = maps.M_dagger @ (z - maps.Phi @ x - maps.R_zeta @ zeta.ravel())
        theta, val, gnorm, iters, H = _dense_newton(seg, maps, x, zeta, v0, maps.V, tol, max_iter, what)
        controls = (v0 + maps.V @ theta).reshape(p, sys.m)
    else:
        V0 = _reachable_start(sys, t, p, x, zeta, z)
        s, val, gnorm, iters = _sparse_newton(seg, sys, t, x, zeta, z, V0, tol, max_iter, what)
        controls = s[(p - 1) * sys.n:].reshape(p, sys.m)
        H = None
    states = kernels.rollout(sys.A[t:t + p], sys.B[t:t + p], zeta, x, controls)
    return SolveResult(states, controls, float(val), gnorm, iters, method, H)


def optimal_value(sys, model, t, p, x, zeta, z, **kw) -> float:
    """``iota``: optimal cost of the terminal-constrained window."""
    return solve_terminal_constraint(sys, model, t, p, x, zeta, z, **kw).value


def switching_cost(sys, model, t, p, x, zeta, z, **kw) -> float:
    """``xi = iota - f_{t+p}(z)``."""
    z = np.asarray(z, dtype=np.float64)
    return optimal_value(sys, model, t, p, x, zeta, z, **kw) - model.f[t + p - 1].value(z)


@dataclass(frozen=True)
class SwitchingDerivatives:
    """Value, gradient and Hessian of ``xi`` in the stacked point ``(x, zeta, z)``."""

    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    solution: SolveResult


def switching_cost_derivatives(sys, model, t, p, x, zeta, z, *, hessian=True, tol=None) -> SwitchingDerivatives:
    """Derivatives of the switching cost by the envelope theorem.

    With the minimizer parameterized as ``q = P theta + Q r`` (``q`` the stacked
    ``(y_1..y_p, v)``), the gradient is ``P^T grad G`` and the Hessian is the
    Schur complement ``P^T H P - P^T H Q (Q^T H Q)^{-1} Q^T H P``.
    """
    x, zeta = _segment_inputs(sys, t, p, x, zeta)
    z = np.asarray(z, dtype=np.float64).reshape(sys.n)
    sol = solve_terminal_constraint(sys, model, t, p, x, zeta, z, method="dense", tol=tol)
    n, m = sys.n, sys.m
    maps = build_stacked_maps(sys, t, p, nullspace=True)
    Md, V = maps.M_dagger, maps.V
    # v = Jv theta + V r with theta = (x, zeta, z)
    Jv = Md @ np.hstack([-maps.Phi, -maps.R_zeta, np.eye(n)])
    Sy = maps.S_v[n:]
    Py = np.hstack([maps.S_x[n:], maps.S_zeta[n:], np.zeros((p * n, n))]) + Sy @ Jv
    Py[(p - 1) * n:] = np.hstack([np.zeros((n, n + p * n)), np.eye(n)])  # y_p = z exactly
    P = np.vstack([Py, Jv])
    Qr = np.vstack([Sy @ V, V])
    Qr[(p - 1) * n:p * n] = 0.0

    seg = _Segment(sys, model, t, p, ZERO)
    Y, Vc = sol.states[1:], sol.controls
    gY, gV, HY, HV = seg.derivatives(Y, Vc)
    fz = model.f[t + p - 1]
    g = np.concatenate([gY.ravel(), gV.ravel()])
    grad = P.T @ g
    grad[-n:] -= fz.gradient(z)
    value = sol.value - fz.value(z)
    Hm = None
    if hessian:
        Hq = sla.block_diag(*HY, *HV)
        HP = Hq @ P
        HQ = Hq @ Qr
        QHQ = Qr.T @ HQ
        Hm = P.T @ HP
        if Qr.shape[1]:
            Hm -= HP.T @ Qr @ np.linalg.solve(QHQ, Qr.T @ HP)
        Hm[-n:, -n:] -= fz.hessian(z)
        Hm = 0.5 * (Hm + Hm.T)
    return SwitchingDerivatives(float(value), grad, Hm, sol)


def offline_optimal(sys: LtvSystem, model: CostModel, **kw) -> SolveResult:
    """Full-horizon optimum from ``x0`` with zero terminal cost."""
    return solve_terminal_cost(sys, model, ZERO, 0, sys.T, sys.x0, sys.w, **kw)


__all__ = [
    "StackedMaps",
    "SolveResult",
    "SwitchingDerivatives",
    "build_stacked_maps",
    "pseudo_inverse",
    "solve_terminal_cost",
    "solve_terminal_constraint",
    "optimal_value",
    "switching_cost",
    "switching_cost_derivatives",
    "offline_optimal",
    "INDICATOR_ORIGIN",
    "ZERO",
]

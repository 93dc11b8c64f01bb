"""Checks of the stability, cost-smoothness, one-step and switching-cost bounds."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..costs import ZERO, CostModel, TerminalCost
from ..errors import ValidationError
from ..solver import optimal_value, solve_terminal_cost, switching_cost_derivatives
from ..system import LtvSystem, analyze_controllability
from .constants import TheoryConstants, theory_constants

SLACK = 1.0 + 1e-6
ABS_FLOOR = 1e-12


@dataclass
class InequalityReport:
    """Pairs ``lhs <= rhs`` checked with multiplicative slack ``1 + 1e-6``."""

    label: str
    lhs: list = field(default_factory=list)
    rhs: list = field(default_factory=list)
    tags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def add(self, lhs, rhs, tag=None):
        self.lhs.append(float(lhs))
        self.rhs.append(float(rhs))
        self.tags.append(tag)

    def _bad(self):
        lhs = np.asarray(self.lhs)
        rhs = np.asarray(self.rhs)
        return lhs > SLACK * rhs + ABS_FLOOR

    @property
    def violations(self) -> int:
        return int(np.sum(self._bad())) if self.lhs else 0

    @property
    def ok(self) -> bool:
        return self.violations == 0

    @property
    def max_ratio(self) -> float:
        lhs = np.asarray(self.lhs)
        rhs = np.asarray(self.rhs)
        pos = rhs > 0
        if not pos.any():
            return 0.0
        return float(np.max(lhs[pos] / rhs[pos]))

    def to_dict(self) -> dict:
        out = {
            "label": self.label,
            "checks": len(self.lhs),
            "violations": self.violations,
            "max_ratio": self.max_ratio,
            "ok": self.ok,
        }
        out.update(self.extra)
        return out


def _constants(sys, model, tc):
    return tc if tc is not None else theory_constants(analyze_controllability(sys), model)


def verify_opt_stability(
    sys: LtvSystem,
    model: CostModel,
    F: TerminalCost,
    t: int,
    p: int,
    trials: int,
    seed,
    *,
    tc: TheoryConstants | None = None,
) -> InequalityReport:
    """``|y_h| <= C lam^h |x| + 2C/(1-lam) sup |zeta|`` for every ``h`` of the window."""
    tc = _constants(sys, model, tc)
    rng = np.random.default_rng(seed)
    rep = InequalityReport(f"opt-stability t={t} p={p} F={F.tag}")
    per_h = np.zeros(p + 1)
    for _ in range(trials):
        x = rng.standard_normal(sys.n) * 10 ** rng.uniform(-1, 1)
        zeta = rng.standard_normal((p, sys.n)) * 10 ** rng.uniform(-2, 0)
        sol = solve_terminal_cost(sys, model, F, t, p, x, zeta)
        sup = float(np.max(np.linalg.norm(zeta, axis=1)))
        for h in range(p + 1):
            lhs = np.linalg.norm(sol.states[h])
            rhs = tc.C * tc.lam**h * np.linalg.norm(x) + 2 * tc.C / (1 - tc.lam) * sup
            rep.add(lhs, rhs, h)
            per_h[h] = max(per_h[h], lhs / rhs if rhs > 0 else 0.0)
    rep.extra["max_ratio_per_h"] = per_h.tolist()  # diagnostic only
    return rep


def verify_cost_smoothness(
    sys: LtvSystem,
    model: CostModel,
    t: int,
    p: int,
    eta: float,
    trials: int,
    seed,
    *,
    tc: TheoryConstants | None = None,
) -> InequalityReport:
    """``iota(x, zeta, z) <= (1+eta) iota(x', zeta, z') + (L0+l_f)/2 (1+1/eta)(|dx|^2 + |dz|^2)``."""
    if not eta > 0:
        raise ValidationError("eta must be positive")
    tc = _constants(sys, model, tc)
    if p < tc.d:
        raise ValidationError(f"window p={p} shorter than d={tc.d}")
    rng = np.random.default_rng(seed)
    rep = InequalityReport(f"cost-smoothness t={t} p={p} eta={eta:g}")
    coef = 0.5 * (tc.L0 + tc.ell_f) * (1 + 1 / eta)
    for _ in range(trials):
        x, z = rng.standard_normal(sys.n), rng.standard_normal(sys.n)
        zeta = rng.standard_normal((p, sys.n))
        mag = 10 ** rng.uniform(-2, 1)
        x2 = x + mag * rng.standard_normal(sys.n)
        z2 = z + mag * rng.standard_normal(sys.n) * rng.integers(2)
        lhs = optimal_value(sys, model, t, p, x, zeta, z)
        rhs = (1 + eta) * optimal_value(sys, model, t, p, x2, zeta, z2) + coef * (
            np.sum((x - x2) ** 2) + np.sum((z - z2) ** 2)
        )
        rep.add(lhs, rhs)
    return rep


def verify_one_step_diff(
    sys: LtvSystem,
    model: CostModel,
    samples: int,
    seed,
    *,
    F: TerminalCost = ZERO,
    tc: TheoryConstants | None = None,
) -> InequalityReport:
    """Change of the ``h``-th planned state when the window grows from ``p`` to ``p + 1``.

    Bound: ``2 C lam^(p-h) (C lam^p |x| + 2C/(1-lam) sup_tau |w_tau|)``.
    """
    tc = _constants(sys, model, tc)
    rng = np.random.default_rng(seed)
    rep = InequalityReport("one-step-diff")
    sup_w = float(np.max(np.linalg.norm(sys.w, axis=1)))
    lo = max(tc.d, 1)
    if sys.T - 1 < lo + 1:
        raise ValidationError("horizon too short for a window and its extension")
    for _ in range(samples):
        p = int(rng.integers(lo, sys.T - 1))
        t = int(rng.integers(0, sys.T - p))  # t < T - p
        h = int(rng.integers(1, p + 1))
        x = rng.standard_normal(sys.n) * 10 ** rng.uniform(-1, 1)
        a = solve_terminal_cost(sys, model, F, t, p, x, sys.w[t:t + p])
        b = solve_terminal_cost(sys, model, F, t, p + 1, x, sys.w[t:t + p + 1])
        lhs = np.linalg.norm(a.states[h] - b.states[h])
        rhs = 2 * tc.C * tc.lam ** (p - h) * (tc.C * tc.lam**p * np.linalg.norm(x) + 2 * tc.C / (1 - tc.lam) * sup_w)
        rep.add(lhs, rhs, (t, p, h))
    return rep


@dataclass
class SmoothnessReport:
    """Eigenvalues of finite-difference Hessians of the switching cost."""

    p: int
    L2: float
    eig_min: list = field(default_factory=list)
    eig_max: list = field(default_factory=list)
    fd_vs_analytic: list = field(default_factory=list)
    tol: float = 1e-6

    @property
    def ok(self) -> bool:
        return all(e >= -self.tol for e in self.eig_min) and all(e <= self.L2 + self.tol for e in self.eig_max)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "L2": self.L2,
            "eig_min": min(self.eig_min) if self.eig_min else None,
            "eig_max": max(self.eig_max) if self.eig_max else None,
            "fd_vs_analytic": max(self.fd_vs_analytic) if self.fd_vs_analytic else None,
            "ok": self.ok,
        }


def fd_hessian(grad, point, rel_step=1e-4):
    """Central differences of ``grad`` with step ``rel_step (1 + |point|)``, symmetrized."""
    point = np.asarray(point, dtype=np.float64)
    step = rel_step * (1.0 + np.linalg.norm(point))
    N = point.size
    H = np.empty((N, N))
    for i in range(N):
        e = np.zeros(N)
        e[i] = step
        H[:, i] = (grad(point + e) - grad(point - e)) / (2 * step)
    return 0.5 * (H + H.T)


def verify_switching_smoothness(
    sys: LtvSystem,
    model: CostModel,
    t: int,
    p: int,
    points: int,
    seed,
    *,
    tc: TheoryConstants | None = None,
    solve_tol: float = 1e-13,
) -> SmoothnessReport:
    """Finite-difference Hessian of ``xi`` in ``(x, zeta, z)`` lies between 0 and ``L2(p)``."""
    tc = _constants(sys, model, tc)
    if p < tc.d:
        raise ValidationError(f"window p={p} shorter than d={tc.d}")
    n = sys.n
    rng = np.random.default_rng(seed)
    rep = SmoothnessReport(p, tc.L2_of_p(p))

    def split(v):
        return v[:n], v[n:n + p * n].reshape(p, n), v[n + p * n:]

    def grad(v):
        x, zeta, z = split(v)
        return switching_cost_derivatives(sys, model, t, p, x, zeta, z, hessian=False, tol=solve_tol).gradient

    for _ in range(points):
        pt = rng.standard_normal(2 * n + p * n)
        H = fd_hessian(grad, pt)
        eig = np.linalg.eigvalsh(H)
        rep.eig_min.append(float(eig[0]))
        rep.eig_max.append(float(eig[-1]))
        x, zeta, z = split(pt)
        exact = switching_cost_derivatives(sys, model, t, p, x, zeta, z, tol=solve_tol).hessian
        rep.fd_vs_analytic.append(float(np.max(np.abs(H - exact)) / (1 + np.max(np.abs(exact)))))
    return rep

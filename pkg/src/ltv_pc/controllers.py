"""Online predictive controllers and the offline benchmark."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .costs import ZERO, CostModel, TerminalCost
from .errors import ConfigurationError, ControllerError, LtvPcError, TimeRangeError, ValidationError
from .solver import SolveResult, offline_optimal, solve_terminal_cost
from .system import LtvSystem, Trajectory, analyze_controllability


@dataclass(frozen=True)
class ControllerTag:
    kind: str  # "PCk", "PCkh" or "OPT"
    k: int | None = None
    h: int | None = None
    F: str | None = None

    def __str__(self):
        if self.kind == "OPT":
            return "OPT"
        if self.kind == "PCk":
            return f"PCk(k={self.k},F={self.F})"
        return f"PCkh(k={self.k},h={self.h},F={self.F})"

    def to_dict(self) -> dict:
        return {key: val for key, val in self.__dict__.items() if val is not None}


@dataclass(frozen=True, eq=False)
class RunRecord:
    trajectory: Trajectory
    per_step_cost: np.ndarray  # f_t(x_t) + c_t(u_{t-1}), t = 1..T
    total_cost: float
    controller_tag: ControllerTag
    solver_stats: tuple  # Newton iterations per decision
    plans: tuple | None = field(default=None, repr=False)
    decision_times: tuple = ()

    def to_dict(self) -> dict:
        return {
            "controller": str(self.controller_tag),
            "tag": self.controller_tag.to_dict(),
            "total_cost": self.total_cost,
            "per_step_cost": self.per_step_cost.tolist(),
            "dyn_residual": self.trajectory.dyn_residual,
            "solver_iterations": list(self.solver_stats),
        }

    def csv_rows(self):
        """Rows ``(t, |x_t|, |u_{t-1}|, step cost)`` for ``t = 1..T``."""
        xs = np.linalg.norm(self.trajectory.states[1:], axis=1)
        us = np.linalg.norm(self.trajectory.controls, axis=1)
        return [(t + 1, xs[t], us[t], self.per_step_cost[t]) for t in range(len(xs))]

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "x_norm", "u_norm", "step_cost"])
        for t, xn, un, c in self.csv_rows():
            wr.writerow([t, f"{xn:.17g}", f"{un:.17g}", f"{c:.17g}"])
        return buf.getvalue()


def _record(sys, model, states, controls, tag, stats, plans, times):
    traj = Trajectory.certify(sys, states, controls)
    steps = model.step_costs(traj.states, traj.controls)
    steps.setflags(write=False)
    return RunRecord(traj, steps, float(np.sum(steps)), tag, tuple(stats), plans, tuple(times))


def _solve(sys, model, F, t, p, x, method):
    try:
        return solve_terminal_cost(sys, model, F, t, p, x, sys.w[t:t + p], method=method)
    except LtvPcError as exc:
        raise ControllerError(f"solve at t={t} (window {p}) failed: {exc}", t, exc) from exc


def _step(sys, t, x, u):
    return sys.A[t] @ x + sys.B[t] @ u + sys.w[t]


def _check_inputs(sys, model, k, F):
    model.check_system(sys)
    if not 1 <= k <= sys.T:
        raise TimeRangeError(f"prediction window k={k} outside [1, T={sys.T}]")
    if F.kind == "indicator":
        d = analyze_controllability(sys).d
        if k < d:
            raise ValidationError(f"indicator terminal cost needs k >= d={d}, got k={k}")


def run_pc_k(
    sys: LtvSystem,
    model: CostModel,
    k: int,
    F: TerminalCost = ZERO,
    *,
    keep_plans: bool = False,
    method: str = "auto",
) -> RunRecord:
    """Predictive control with prediction window ``k``.

    At each ``t < T - k`` the first control of the ``k``-step plan with terminal
    cost ``F`` is committed; at ``t = T - k`` the remaining ``k`` controls come
    from one plan with zero terminal cost.
    """
    _check_inputs(sys, model, k, F)
    T = sys.T
    states = np.empty((T + 1, sys.n))
    controls = np.empty((T, sys.m))
    states[0] = sys.x0
    stats, plans, times = [], [], []
    for t in range(T - k):
        sol = _solve(sys, model, F, t, k, states[t], method)
        controls[t] = sol.controls[0]
        states[t + 1] = _step(sys, t, states[t], controls[t])
        stats.append(sol.iterations)
        times.append(t)
        if keep_plans:
            plans.append(sol)
    t = T - k
    sol = _solve(sys, model, ZERO, t, k, states[t], method)
    for i in range(k):
        controls[t + i] = sol.controls[i]
        states[t + i + 1] = _step(sys, t + i, states[t + i], controls[t + i])
    stats.append(sol.iterations)
    times.append(t)
    if keep_plans:
        plans.append(sol)
    tag = ControllerTag("PCk", k=k, F=F.tag)
    return _record(sys, model, states, controls, tag, stats, tuple(plans) if keep_plans else None, times)


def replan_decomposition(T: int, k: int, h: int):
    """``(n0, m0)`` with ``T = n0 h + m0`` and ``k - h + 1 <= m0 <= k``; largest ``m0`` wins."""
    if not 1 <= h <= k <= T:
        raise ConfigurationError(f"need 1 <= h <= k <= T, got h={h}, k={k}, T={T}")
    for m0 in range(min(k, T), k - h, -1):
        if (T - m0) % h == 0:
            return (T - m0) // h, m0
    raise ConfigurationError(f"no decomposition T = n0*h + m0 with {k - h + 1} <= m0 <= {k} for T={T}, h={h}")


def run_pc_kh(
    sys: LtvSystem,
    model: CostModel,
    k: int,
    h: int,
    F: TerminalCost = ZERO,
    *,
    keep_plans: bool = False,
    method: str = "auto",
) -> RunRecord:
    """Predictive control that replans every ``h`` steps.

    Plans of length ``k`` are made at ``t = 0, h, ..., (n0-1) h`` and their
    first ``h`` controls committed; the last ``m0`` steps follow one plan with
    zero terminal cost.
    """
    _check_inputs(sys, model, k, F)
    n0, m0 = replan_decomposition(sys.T, k, h)
    T = sys.T
    states = np.empty((T + 1, sys.n))
    controls = np.empty((T, sys.m))
    states[0] = sys.x0
    stats, plans, times = [], [], []
    segments = [(i * h, k, F, h) for i in range(n0)] + [(n0 * h, m0, ZERO, m0)]
    for t, length, term, commit in segments:
        sol = _solve(sys, model, term, t, length, states[t], method)
        for i in range(commit):
            controls[t + i] = sol.controls[i]
            states[t + i + 1] = _step(sys, t + i, states[t + i], controls[t + i])
        stats.append(sol.iterations)
        times.append(t)
        if keep_plans:
            plans.append(sol)
    tag = ControllerTag("PCkh", k=k, h=h, F=F.tag)
    return _record(sys, model, states, controls, tag, stats, tuple(plans) if keep_plans else None, times)


def run_opt(sys: LtvSystem, model: CostModel, *, method: str = "auto") -> RunRecord:
    """The offline optimum wrapped as a run."""
    model.check_system(sys)
    try:
        sol: SolveResult = offline_optimal(sys, model, method=method)
    except LtvPcError as exc:
        raise ControllerError(f"offline solve failed: {exc}", 0, exc) from exc
    # re-simulate so the recorded states obey the dynamics step by step
    traj = sys.simulate(sol.controls)
    return _record(sys, model, traj.states, traj.controls, ControllerTag("OPT"), [sol.iterations], None, [0])

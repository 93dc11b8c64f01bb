"""Closed-loop performance: regret sweeps, state bounds and competitive ratios."""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..controllers import RunRecord, run_opt, run_pc_k, run_pc_kh
from ..costs import INDICATOR_ORIGIN, ZERO, CostModel, TerminalCost
from ..errors import DegenerateInstanceError, LtvPcError, PreconditionError, ValidationError
from ..system import LtvSystem, analyze_controllability
from .constants import (
    TheoryConstants,
    cr_coefficient,
    least_integer,
    replan_condition_rhs,
    theory_constants,
    window_thresholds,
)
from .corollaries import InequalityReport

REGRET_FLOOR = 1e-10


def worker_count(tasks: int) -> int:
    """Thread count for ``tasks`` independent jobs, capped by ``LTV_PC_THREADS``."""
    cap = os.environ.get("LTV_PC_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            raise ValidationError(f"LTV_PC_THREADS must be a positive integer, got {cap!r}") from None
    return max(1, min(limit, tasks))


def log_linear_fit(xs, ys):
    """Least-squares line through ``(x, log y)``; returns ``(slope, intercept, r2)``."""
    xs = np.asarray(xs, dtype=float)
    ly = np.log(np.asarray(ys, dtype=float))
    if xs.size < 2:
        return float("nan"), float("nan"), float("nan")
    slope, icpt = np.polyfit(xs, ly, 1)
    resid = ly - (slope * xs + icpt)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(icpt), r2


@dataclass
class RegretTable:
    rows: list  # (k, cost_alg, cost_opt, regret, bound_shape)
    failures: dict
    slope: float
    intercept: float
    r2: float
    lambda_theory: float
    k_threshold: int | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["k", "cost_alg", "cost_opt", "regret", "bound_shape"])
        for k, ca, co, rg, bs in self.rows:
            wr.writerow([k, f"{ca:.17g}", f"{co:.17g}", f"{rg:.17g}", f"{bs:.17g}"])
        return buf.getvalue()

    def regret(self, k) -> float:
        for row in self.rows:
            if row[0] == k:
                return row[3]
        raise KeyError(k)

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r2,
            "fit_points": sum(1 for r in self.rows if r[3] > REGRET_FLOOR),
            "lambda_theory": self.lambda_theory,
            "lambda_fit": float(np.exp(self.slope)) if np.isfinite(self.slope) else None,
            "k_threshold": self.k_threshold,
            "failures": {str(k): v for k, v in self.failures.items()},
        }


def regret_sweep(
    sys: LtvSystem,
    model: CostModel,
    k_values,
    F: TerminalCost = ZERO,
    *,
    tc: TheoryConstants | None = None,
    delta: float = 0.5,
    opt: RunRecord | None = None,
) -> RegretTable:
    """Regret of ``PC_k`` for each ``k``, with a log-linear fit over the positive part.

    Runs for distinct ``k`` are independent and spread over a thread pool; a
    failing ``k`` is recorded and the sweep continues.
    """
    ks = [int(k) for k in k_values]
    if not ks:
        raise ValidationError("empty k grid")
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValidationError("k grid must be strictly increasing without duplicates")
    if tc is None:
        tc = theory_constants(analyze_controllability(sys), model)
    opt = run_opt(sys, model) if opt is None else opt

    def one(k):
        try:
            return k, run_pc_k(sys, model, k, F).total_cost, None
        except LtvPcError as exc:
            return k, None, str(exc)

    with ThreadPoolExecutor(max_workers=worker_count(len(ks))) as pool:
        results = list(pool.map(one, ks))
    rows, failures = [], {}
    for k, cost, err in results:
        if err is not None:
            failures[k] = err
            continue
        rows.append((k, cost, opt.total_cost, cost - opt.total_cost, tc.lam**k * sys.T))
    pts = [(r[0], r[3]) for r in rows if r[3] > REGRET_FLOOR]
    slope, icpt, r2 = log_linear_fit([p[0] for p in pts], [p[1] for p in pts])
    k_thr = window_thresholds(tc, delta, 0.5).k_regret
    return RegretTable(rows, failures, slope, icpt, r2, tc.lam, k_thr)


def _pc_window(record: RunRecord) -> int:
    tag = record.controller_tag
    if tag.kind != "PCk":
        raise ValidationError(f"expected a PC_k run, got {tag}")
    return tag.k


def iss_bound(tc: TheoryConstants, delta: float, D: float, T: int, k: int, t: int, x0_norm: float) -> float:
    """State-norm bound at time ``t`` (two branches split at ``T - k``)."""
    C, lam = tc.C, tc.lam
    inner = 1 + 2 * C / (1 - lam)
    if t <= T - k:
        return C / delta * (1 - delta) ** max(0, t - k) * x0_norm + 2 * C / (delta * (1 - lam)) * inner * D
    # (1 - delta)^(T - 2k) blows up once k > T/2; go through logs and saturate at inf
    if x0_norm > 0:
        lg = math.log(C**2 / delta * x0_norm) + (T - 2 * k) * math.log(1 - delta) + (t + k - T) * math.log(lam)
        head = math.exp(lg) if lg < 700 else math.inf
    else:
        head = 0.0
    return head + (2 * C**2 / (delta * (1 - lam)) * inner + 2 * C / (1 - lam)) * D


def verify_iss(record: RunRecord, tc: TheoryConstants, delta: float, D: float) -> InequalityReport:
    """Pointwise check of the state bound along a ``PC_k`` run.

    Raises ``PreconditionError`` when ``k`` is below the regret-condition threshold.
    """
    if not 0 < delta < 1:
        raise ValidationError("delta must lie in (0, 1)")
    k = _pc_window(record)
    thr = window_thresholds(tc, delta, 0.5).k_regret
    if k < thr:
        raise PreconditionError(f"k={k} is below the stability threshold {thr} for delta={delta}")
    states = record.trajectory.states
    T = len(states) - 1
    x0n = float(np.linalg.norm(states[0]))
    rep = InequalityReport(f"iss k={k} delta={delta}")
    for t in range(1, T + 1):
        rep.add(np.linalg.norm(states[t]), iss_bound(tc, delta, D, T, k, t, x0n), (t, 1 if t <= T - k else 2))
    rep.extra.update({"k": k, "k_threshold": thr, "T": T})
    return rep


def potential_series(record: RunRecord, opt: RunRecord) -> np.ndarray:
    """``phi_t = |x_t - x*_t|^2`` for ``t = 0..T``."""
    a, b = record.trajectory.states, opt.trajectory.states
    if a.shape != b.shape:
        raise ValidationError(f"horizon mismatch: {a.shape} vs {b.shape}")
    return np.sum((a - b) ** 2, axis=1)


@dataclass
class CompetitiveReport:
    k: int
    eps: float
    cost_alg: float
    cost_opt: float
    ratio: float
    bound: float
    bound_chain: float
    potential_sum: float
    potential_bound: float
    terminal_residual: float
    k_threshold: int
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["ok"] = self.ok
        return out


def potential_coefficient(tc: TheoryConstants, eps: float) -> float:
    C, lam = tc.C, tc.lam
    return 24 * C**4 * (C + 1) ** 2 / (eps * lam**4 * (1 - lam) ** 2 * (1 - lam**2) ** 2 * tc.m_f)


def competitive_report(
    sys: LtvSystem,
    model: CostModel,
    k: int,
    eps: float,
    *,
    tc: TheoryConstants | None = None,
    opt: RunRecord | None = None,
) -> CompetitiveReport:
    """Ratio of ``PC_k`` (terminal state pinned to the origin) to the offline optimum.

    The measured ratio is compared with the stated bound (coefficient 24), with
    the tighter inequality chain it is derived from (coefficient 12), and the
    summed potential with its own bound.
    """
    if not 0 < eps < 1:
        raise ValidationError("eps must lie in (0, 1)")
    if tc is None:
        tc = theory_constants(analyze_controllability(sys), model)
    thr = window_thresholds(tc, 0.5, eps).k_cr
    if k < max(thr, tc.d):
        raise PreconditionError(f"k={k} is below the competitive-ratio threshold {thr} for eps={eps}")
    opt = run_opt(sys, model) if opt is None else opt
    if opt.total_cost <= 1e-12:
        raise DegenerateInstanceError(f"offline optimal cost {opt.total_cost:.3g} is zero; ratio undefined")
    rec = run_pc_k(sys, model, k, INDICATOR_ORIGIN, keep_plans=True)
    # every plan except the final zero-terminal one must end at the origin
    term = max((float(np.linalg.norm(p.states[-1])) for p in rec.plans[:-1]), default=0.0)
    lk = tc.lam**k
    ratio = rec.total_cost / opt.total_cost
    bound = 1 + lk * cr_coefficient(tc, eps, 24.0)
    chain = 1 + lk * (1 + (1 + lk) * (cr_coefficient(tc, eps, 12.0) - 1))
    phi = potential_series(rec, opt)
    T = sys.T
    psum = float(np.sum(phi[1:T - k + 1]))
    pbound = potential_coefficient(tc, eps) * tc.lam ** (2 * k) * opt.total_cost
    checks = {
        "ratio_le_bound": ratio <= bound,
        "ratio_le_chain": ratio <= chain,
        "ratio_ge_one": ratio >= 1 - 1e-8,
        "potential": psum <= pbound * (1 + 1e-6),
        "terminal_at_origin": term <= 1e-9,
    }
    return CompetitiveReport(k, eps, rec.total_cost, opt.total_cost, ratio, bound, chain, psum, pbound, term, thr, checks)


@dataclass
class ReplanReport:
    k: int
    h: int
    ratio: float
    shape: float
    fitted_constant: float
    h_threshold: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def replan_report(
    sys: LtvSystem,
    model: CostModel,
    k: int,
    h: int,
    eps: float,
    *,
    tc: TheoryConstants | None = None,
    opt: RunRecord | None = None,
    F: TerminalCost = ZERO,
) -> ReplanReport:
    """Measured ratio of ``PC_(k,h)`` next to ``eps^-1 ((L0+l_f)/m_f)^(1/2) C lam^(k-1-h)``.

    The bound hides an unspecified numerical constant, so the report gives
    ``(ratio - 1) / shape`` instead of a pass/fail verdict.
    """
    if tc is None:
        tc = theory_constants(analyze_controllability(sys), model)
    if not eps > 0:
        raise ValidationError("eps must be positive")
    thr = least_integer(replan_condition_rhs(tc, eps), tc.d)
    if h < thr or k < h + tc.d:
        raise PreconditionError(f"(k={k}, h={h}) below the replan thresholds h >= {thr}, k >= h + {tc.d}")
    opt = run_opt(sys, model) if opt is None else opt
    if opt.total_cost <= 1e-12:
        raise DegenerateInstanceError("offline optimal cost is zero; ratio undefined")
    rec = run_pc_kh(sys, model, k, h, F)
    ratio = rec.total_cost / opt.total_cost
    shape = (1 / eps) * np.sqrt((tc.L0 + tc.ell_f) / tc.m_f) * tc.C * tc.lam ** (k - 1 - h)
    return ReplanReport(k, h, ratio, float(shape), float((ratio - 1) / shape), thr)

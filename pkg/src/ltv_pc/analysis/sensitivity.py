"""Perturbation experiments: solve twice, compare, test against the decay envelopes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..costs import ZERO, CostModel, TerminalCost
from ..errors import LtvPcError, ValidationError
from ..solver import solve_terminal_constraint, solve_terminal_cost
from ..system import LtvSystem, analyze_controllability
from .constants import TheoryConstants, decay_constants, theory_constants
from .soco import SocoInstance, ltv_to_soco, segment_disturbances, solve_soco

SLACK = 1.0 + 1e-6
NOISE_FLOOR = 1e-12


@dataclass
class SensitivityReport:
    """Measured deviations next to the envelope values they must stay below."""

    label: str
    deviations: list = field(default_factory=list)  # one entry per (trial, h)
    envelopes: list = field(default_factory=list)
    hs: list = field(default_factory=list)
    lambda_theory: float = float("nan")
    lambda_fit: float = float("nan")
    median_step_ratio: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def ratios(self) -> np.ndarray:
        dev = np.asarray(self.deviations, dtype=float)
        env = np.asarray(self.envelopes, dtype=float)
        out = np.zeros_like(dev)
        pos = env > 0
        out[pos] = dev[pos] / env[pos]
        out[~pos & (dev > 0)] = np.inf
        return out

    @property
    def max_violation_ratio(self) -> float:
        r = self.ratios
        return float(r.max()) if r.size else 0.0

    @property
    def violations(self) -> int:
        return int(np.sum(self.ratios > SLACK))

    @property
    def ok(self) -> bool:
        return self.violations == 0 and not self.extra.get("failed", False)

    def to_dict(self) -> dict:
        out = {
            "label": self.label,
            "checks": len(self.deviations),
            "violations": self.violations,
            "max_violation_ratio": self.max_violation_ratio,
            "lambda_theory": self.lambda_theory,
            "lambda_fit": self.lambda_fit,
            "median_step_ratio": self.median_step_ratio,
            "ok": self.ok,
        }
        out.update(self.extra)
        return out


def fit_decay(hs, devs):
    """Log-linear fit of deviation against ``h``; returns ``(rate, median step ratio)``.

    Only deviations above the numerical noise floor enter the fit.
    """
    hs = np.asarray(hs, dtype=float)
    devs = np.asarray(devs, dtype=float)
    keep = devs > NOISE_FLOOR
    if keep.sum() < 2:
        return float("nan"), float("nan")
    slope = np.polyfit(hs[keep], np.log(devs[keep]), 1)[0]
    ratios = [devs[i + 1] / devs[i] for i in range(len(devs) - 1) if keep[i] and keep[i + 1]]
    return float(np.exp(slope)), float(np.median(ratios)) if ratios else float("nan")


def _random_pair(rng, n, p, scale=1.0):
    """Two nearby problem inputs; a random subset of the blocks is perturbed."""
    x = rng.standard_normal(n) * scale
    zeta = rng.standard_normal((p, n)) * scale
    z = rng.standard_normal(n) * scale
    mode = rng.integers(4)
    mag = 10.0 ** rng.uniform(-3, 0)
    dx = rng.standard_normal(n) * mag * (mode in (0, 1))
    dz = rng.standard_normal(n) * mag * (mode in (0, 3))
    dzeta = np.zeros((p, n))
    if mode == 0:
        dzeta = rng.standard_normal((p, n)) * mag
    elif mode == 2:
        dzeta[rng.integers(p)] = rng.standard_normal(n) * mag
    return (x, zeta, z), (x + dx, zeta + dzeta, z + dz)


def ltv_envelope(C, lam, h, p, dx, dzeta_norms, dz=None):
    """``C (lam^h |dx| + sum lam^|h-tau| |dzeta_tau| [+ lam^(p-h) |dz|])``."""
    taus = np.arange(p)
    env = lam**h * dx + np.sum(lam ** np.abs(h - taus) * dzeta_norms)
    if dz is not None:
        env += lam ** (p - h) * dz
    return C * env


def verify_ltv_sensitivity(
    sys: LtvSystem,
    model: CostModel,
    t: int,
    p: int,
    h=None,
    trials: int = 50,
    seed=0,
    *,
    F: TerminalCost = ZERO,
    tc: TheoryConstants | None = None,
    scale: float = 1.0,
) -> SensitivityReport:
    """Compare both window problems at perturbed inputs against the envelope.

    ``h`` is an int or ``None`` for every ``1 <= h <= p``.  Both the
    terminal-cost problem (no ``z`` term) and the terminal-constraint problem
    are checked each trial.  A final sweep perturbs ``x`` alone to fit the decay
    rate of the terminal-cost solution.
    """
    if tc is None:
        tc = theory_constants(analyze_controllability(sys), model)
    if p < tc.d:
        raise ValidationError(f"window p={p} shorter than controllability index d={tc.d}")
    hs = list(range(1, p + 1)) if h is None else [int(h)]
    if any(not 1 <= hh <= p for hh in hs):
        raise ValidationError(f"h must lie in [1, p={p}]")
    rng = np.random.default_rng(seed)
    rep = SensitivityReport(f"ltv t={t} p={p} F={F.tag}", lambda_theory=tc.lam)
    for trial in range(trials):
        (x, zeta, z), (x2, zeta2, z2) = _random_pair(rng, sys.n, p, scale)
        try:
            a = solve_terminal_cost(sys, model, F, t, p, x, zeta)
            b = solve_terminal_cost(sys, model, F, t, p, x2, zeta2)
            c = solve_terminal_constraint(sys, model, t, p, x, zeta, z)
            e = solve_terminal_constraint(sys, model, t, p, x2, zeta2, z2)
        except LtvPcError as exc:
            raise LtvPcError(f"sensitivity trial {trial} failed: {exc}") from exc
        dx = np.linalg.norm(x - x2)
        dzn = np.linalg.norm(zeta - zeta2, axis=1)
        dz = np.linalg.norm(z - z2)
        for hh in hs:
            rep.hs.append(hh)
            rep.deviations.append(float(np.linalg.norm(a.states[hh] - b.states[hh])))
            rep.envelopes.append(ltv_envelope(tc.C, tc.lam, hh, p, dx, dzn))
            rep.hs.append(hh)
            rep.deviations.append(float(np.linalg.norm(c.states[hh] - e.states[hh])))
            rep.envelopes.append(ltv_envelope(tc.C, tc.lam, hh, p, dx, dzn, dz))
    # decay fit from a pure initial-state perturbation
    x = rng.standard_normal(sys.n)
    zeta = rng.standard_normal((p, sys.n))
    e1 = rng.standard_normal(sys.n)
    a = solve_terminal_cost(sys, model, F, t, p, x, zeta)
    b = solve_terminal_cost(sys, model, F, t, p, x + e1 / np.linalg.norm(e1), zeta)
    sweep = np.linalg.norm(a.states - b.states, axis=1)[1:p]
    rep.lambda_fit, rep.median_step_ratio = fit_decay(np.arange(1, p), sweep)
    return rep


def soco_envelope(C0, lam0, h, p, dx0, dw_norms, dxp):
    """``C0 (lam0^(h-1)|dx0| + sum lam0^(|h-tau|-1)|dw_tau| + lam0^(p-h-1)|dxp|)``."""
    taus = np.arange(len(dw_norms))
    return C0 * (
        lam0 ** (h - 1) * dx0
        + np.sum(lam0 ** (np.abs(h - taus) - 1.0) * dw_norms)
        + lam0 ** (p - h - 1) * dxp
    )


def verify_soco_sensitivity(inst: SocoInstance, h=None, trials: int = 50, seed=0, *, r=None) -> SensitivityReport:
    """Envelope check for a SOCO instance with known ``mu`` and ``ell``."""
    C0, lam0 = decay_constants(inst.ell, inst.mu)
    p, n = inst.p, inst.n
    r = n if r is None else r
    hs = list(range(1, p)) if h is None else [int(h)]
    rng = np.random.default_rng(seed)
    rep = SensitivityReport(f"soco p={p}", lambda_theory=lam0)
    for _ in range(trials):
        x0, w, xp = rng.standard_normal(n), rng.standard_normal((p, r)), rng.standard_normal(n)
        mode = rng.integers(4)
        mag = 10.0 ** rng.uniform(-3, 0)
        dx0 = rng.standard_normal(n) * mag * (mode in (0, 1))
        dxp = rng.standard_normal(n) * mag * (mode in (0, 3))
        dw = np.zeros((p, r))
        if mode == 0:
            dw = rng.standard_normal((p, r)) * mag
        elif mode == 2:
            dw[rng.integers(p)] = rng.standard_normal(r) * mag
        a = solve_soco(inst, x0, w, xp)
        b = solve_soco(inst, x0 + dx0, w + dw, xp + dxp)
        for hh in hs:
            rep.hs.append(hh)
            rep.deviations.append(float(np.linalg.norm(a.x[hh] - b.x[hh])))
            rep.envelopes.append(
                soco_envelope(C0, lam0, hh, p, np.linalg.norm(dx0), np.linalg.norm(dw, axis=1), np.linalg.norm(dxp))
            )
    x0, w, xp = rng.standard_normal(n), rng.standard_normal((p, r)), rng.standard_normal(n)
    a = solve_soco(inst, x0, w, xp)
    b = solve_soco(inst, x0 + 1.0 / np.sqrt(n), w, xp)
    sweep = np.linalg.norm(a.x - b.x, axis=1)[1:p]
    rep.lambda_fit, rep.median_step_ratio = fit_decay(np.arange(1, p), sweep)
    return rep


@dataclass
class ReductionReport:
    max_mismatch: float
    points: list
    tol: float = 1e-6

    @property
    def ok(self) -> bool:
        return self.max_mismatch <= self.tol

    def to_dict(self) -> dict:
        return {"max_mismatch": self.max_mismatch, "points": self.points, "tol": self.tol, "ok": self.ok}


def verify_soco_reduction(sys, model, t, segments: int, x, zeta, z, *, tol=1e-6) -> ReductionReport:
    """Solve the window through its SOCO reduction and compare with the direct solve.

    Decision points sit every ``d`` steps; ``p = segments * d``.
    """
    d = analyze_controllability(sys).d
    p = segments * d
    points = [i * d for i in range(segments + 1)]
    direct = solve_terminal_constraint(sys, model, t, p, x, zeta, z, method="dense", tol=1e-12)
    inst = ltv_to_soco(sys, model, t, points, tol=1e-12)
    sol = solve_soco(inst, x, segment_disturbances(zeta, points), z, tol=1e-11)
    mismatch = max(float(np.linalg.norm(sol.x[i] - direct.states[q])) for i, q in enumerate(points))
    return ReductionReport(mismatch, points, tol)

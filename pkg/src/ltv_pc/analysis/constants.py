"""Closed-form constants of the perturbation analysis and the window thresholds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..costs import CostModel
from ..errors import LtvPcError, ValidationError
from ..system import ControllabilityReport

A_ONE_TOL = 1e-12


def C_of_p(p: int, a: float, b: float, sigma: float) -> float:
    """Lipschitz constant of the affine maps in the nullspace parameterization.

    One closed form covers ``a > 1`` and ``a < 1``; ``|a - 1| <= 1e-12`` uses
    the separate ``a = 1`` expression.
    """
    if p < 1:
        raise ValidationError("C(p) needs p >= 1")
    if abs(a - 1.0) <= A_ONE_TOL:
        return (
            (b * math.sqrt(p) / sigma**2 * (math.sqrt(p) + 2) + 1) * (1 + b * math.sqrt(p * (p + 1) / 2))
            + math.sqrt(p + 1) * (1 + math.sqrt(p / 2))
        )
    a2 = a * a
    first = b * (a ** (p + 1) + a - 2) / (sigma**2 * (a - 1)) * math.sqrt((a ** (2 * p) - 1) / (a2 - 1))
    first += (1 + b) / b
    second = b * math.sqrt(a ** (2 * p + 2) - (p + 1) * a2 + p) / abs(a2 - 1) + 1
    return first * second + math.sqrt((a ** (2 * p + 2) - 1) / (a2 - 1)) - 1 / b


def decay_constants(L: float, mu: float):
    """``(C0, lambda0)`` for an ``L``-smooth, ``mu``-strongly convex chain.

    ``C0 = 2 L / mu`` and ``lambda0 = 1 - 2 / (sqrt(1 + 2 L / mu) + 1)``.
    """
    if not (L > 0 and mu > 0):
        raise ValidationError("smoothness and strong convexity constants must be positive")
    ratio = 2.0 * L / mu
    return ratio, 1.0 - 2.0 / (math.sqrt(1.0 + ratio) + 1.0)


def ltv_decay(L0: float, m_c: float, d: int):
    """``(lambda, C, lambda0, C0)`` of the LTV envelope from ``L0``, ``m_c`` and ``d``."""
    C0, lam0 = decay_constants(L0, m_c)
    return lam0 ** (1.0 / (2 * d - 1)), C0 / lam0, lam0, C0


@dataclass(frozen=True)
class TheoryConstants:
    a: float
    b: float
    b_prime: float
    sigma: float
    d: int
    m_f: float
    ell_f: float
    m_c: float
    ell_c: float
    ell: float
    L0: float
    lam: float
    C: float
    lam0: float
    C0: float
    L4: float
    C_below_one: bool
    C_table: dict = field(repr=False)  # p -> C(p), for d <= p <= 2d-1

    def C_of_p(self, p: int) -> float:
        return C_of_p(p, self.a, self.b, self.sigma)

    def L1_of_p(self, p: int, variant: str = "linear") -> float:
        """Lipschitz constant of the constrained minimizer.

        ``variant="linear"`` gives ``C(1 + l C / m_c)``, ``"quadratic"`` gives
        ``C(1 + l C^2 / m_c)``.  Both forms circulate for this constant, so both are kept.
        """
        Cp = self.C_of_p(p)
        if variant == "linear":
            return Cp * (1 + self.ell * Cp / self.m_c)
        if variant == "quadratic":
            return Cp * (1 + self.ell * Cp**2 / self.m_c)
        raise ValidationError(f"unknown L1 variant {variant!r}")

    def L2_of_p(self, p: int) -> float:
        Cp = self.C_of_p(p)
        return self.ell * Cp**2 + self.ell**2 * Cp**4 / self.m_c

    def to_dict(self) -> dict:
        ps = range(self.d, 2 * self.d)
        return {
            "a": self.a,
            "b": self.b,
            "b_prime": self.b_prime,
            "sigma": self.sigma,
            "d": self.d,
            "m_f": self.m_f,
            "ell_f": self.ell_f,
            "m_c": self.m_c,
            "ell_c": self.ell_c,
            "ell": self.ell,
            "C_of_p": {str(p): self.C_of_p(p) for p in ps},
            "L1_of_p_linear": {str(p): self.L1_of_p(p, "linear") for p in ps},
            "L1_of_p_quadratic": {str(p): self.L1_of_p(p, "quadratic") for p in ps},
            "L2_of_p": {str(p): self.L2_of_p(p) for p in ps},
            "L0": self.L0,
            "lambda": self.lam,
            "C": self.C,
            "lambda0": self.lam0,
            "C0": self.C0,
            "L4": self.L4,
            "C_below_one": self.C_below_one,
        }


def theory_constants(report: ControllabilityReport, model: CostModel) -> TheoryConstants:
    """Evaluate every closed-form constant for an instance."""
    if not report.sigma > 0:
        raise ValidationError("controllability report must have sigma > 0")
    ell = max(model.ell_f, model.ell_c)
    d = report.d
    C_table = {p: C_of_p(p, report.a, report.b, report.sigma) for p in range(d, 2 * d)}
    L2 = [ell * Cp**2 + ell**2 * Cp**4 / model.m_c for Cp in C_table.values()]
    L0 = max(L2)
    lam, C, lam0, C0 = ltv_decay(L0, model.m_c, d)
    L4 = model.ell_f + 2 * report.b_prime**2 * model.ell_c + 2 * report.a**2 * report.b_prime**2 * model.ell_c
    return TheoryConstants(
        a=report.a,
        b=report.b,
        b_prime=report.b_prime,
        sigma=report.sigma,
        d=d,
        m_f=model.m_f,
        ell_f=model.ell_f,
        m_c=model.m_c,
        ell_c=model.ell_c,
        ell=ell,
        L0=L0,
        lam=lam,
        C=C,
        lam0=lam0,
        C0=C0,
        L4=L4,
        C_below_one=C < 1,
        C_table=C_table,
    )


@dataclass(frozen=True)
class WindowThresholds:
    delta: float
    eps: float
    k_regret: int
    k_cr: int
    h_replan: int
    k_replan_min: int
    cr_coefficient: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def regret_condition_rhs(tc: TheoryConstants, delta: float) -> float:
    lam, C = tc.lam, tc.C
    return 1.0 + math.log(C * (2 * C / (1 - lam) + lam) / (1 - delta)) / math.log(1 / lam)


def cr_condition_rhs(tc: TheoryConstants, eps: float) -> float:
    lam, C = tc.lam, tc.C
    arg = 6 * C**6 / ((1 - eps) * lam**2 * (1 - lam) ** 2 * (1 - lam**2) ** 2)
    return math.log(arg) / (4 * math.log(1 / lam))


def replan_condition_rhs(tc: TheoryConstants, eps: float) -> float:
    return math.log((1 + eps) * tc.C) / math.log(1 / tc.lam)


def cr_coefficient(tc: TheoryConstants, eps: float, factor: float = 24.0) -> float:
    """Multiplier of ``lambda^k`` in the competitive-ratio bound.

    The bracket ``2 l_f + 4 b'^2 l_c + 4 a^2 b'^2 l_c + L0 + l_f`` is
    written here as ``2 L4 + L0 + l_f``.
    """
    lam, C = tc.lam, tc.C
    num = factor * C**4 * (C + 1) ** 2 * (2 * tc.L4 + tc.L0 + tc.ell_f)
    den = eps * lam**4 * (1 - lam) ** 2 * (1 - lam**2) ** 2 * tc.m_f
    return 1.0 + num / den


def least_integer(rhs: float, floor: int) -> int:
    k = max(floor, math.ceil(rhs))
    while k - 1 >= floor and k - 1 >= rhs:
        k -= 1
    return k


def window_thresholds(tc: TheoryConstants, delta: float, eps: float) -> WindowThresholds:
    """Least windows meeting the regret, competitive-ratio and replan conditions."""
    if not (0 < delta < 1 and 0 < eps < 1):
        raise ValidationError(f"delta and eps must lie in (0, 1), got {delta}, {eps}")
    if not 0 < tc.lam < 1:
        raise LtvPcError(f"internal invariant violated: decay rate {tc.lam} not in (0, 1)")
    h = least_integer(replan_condition_rhs(tc, eps), tc.d)
    return WindowThresholds(
        delta=delta,
        eps=eps,
        k_regret=least_integer(regret_condition_rhs(tc, delta), tc.d),
        k_cr=least_integer(cr_condition_rhs(tc, eps), tc.d),
        h_replan=h,
        k_replan_min=h + tc.d,
        cr_coefficient=cr_coefficient(tc, eps),
    )

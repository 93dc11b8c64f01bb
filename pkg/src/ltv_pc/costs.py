"""Per-step cost oracles, terminal-cost variants and the re-centering transform.

Costs are indexed the way the objective is written: ``f_t`` acts on ``x_t`` and
``c_t`` acts on ``u_{t-1}`` for ``t = 1..T``.  Internally both are stored as
length-``T`` tuples, so ``f[i]`` is ``f_{i+1}``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TimeRangeError, ValidationError
from .system import LtvSystem


class CostFn:
    """Twice differentiable, strongly convex cost with declared constants.

    Subclasses implement ``value``, ``gradient`` and ``hessian``.  ``m`` is the
    strong convexity modulus and ``ell`` the smoothness constant.
    """

    dim: int
    m: float
    ell: float

    def value(self, x) -> float:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x) -> np.ndarray:
        raise NotImplementedError

    # batched forms used by the solvers; rows of X are points
    def values(self, X) -> np.ndarray:
        return np.array([self.value(x) for x in X])

    def gradients(self, X) -> np.ndarray:
        return np.array([self.gradient(x) for x in X]).reshape(len(X), self.dim)

    def hessians(self, X) -> np.ndarray:
        return np.array([self.hessian(x) for x in X]).reshape(len(X), self.dim, self.dim)


class QuadraticCost(CostFn):
    """``0.5 (x - center)^T Q (x - center)``."""

    def __init__(self, Q, center=None):
        Q = np.array(Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValidationError(f"Q must be square, got shape {Q.shape}")
        if not np.all(np.isfinite(Q)) or not np.allclose(Q, Q.T, rtol=1e-12, atol=1e-12):
            raise ValidationError("Q must be finite and symmetric")
        Q = 0.5 * (Q + Q.T)
        eig = np.linalg.eigvalsh(Q)
        if eig[0] <= 0:
            raise ValidationError(f"Q must be positive definite (min eigenvalue {eig[0]:.3g})")
        self.Q = Q
        self.dim = Q.shape[0]
        self.center = np.zeros(self.dim) if center is None else np.asarray(center, dtype=np.float64)
        self.m = float(eig[0])
        self.ell = float(eig[-1])

    def value(self, x):
        e = np.asarray(x) - self.center
        return 0.5 * float(e @ self.Q @ e)

    def gradient(self, x):
        return self.Q @ (np.asarray(x) - self.center)

    def hessian(self, x):
        return self.Q.copy()

    def values(self, X):
        E = np.asarray(X) - self.center
        return 0.5 * np.einsum("ti,ij,tj->t", E, self.Q, E)

    def gradients(self, X):
        return (np.asarray(X) - self.center) @ self.Q

    def hessians(self, X):
        return np.broadcast_to(self.Q, (len(X), self.dim, self.dim)).copy()


class PseudoHuberCost(CostFn):
    """``(m/2)|x - c|^2 + alpha * sum_i (sqrt(1 + (x_i - c_i)^2) - 1)``.

    Strongly convex with modulus ``m`` and smooth with constant ``m + alpha``.
    """

    def __init__(self, m, alpha, dim, center=None):
        if not m > 0:
            raise ValidationError("pseudo-Huber strong convexity m must be positive")
        if not alpha >= 0:
            raise ValidationError("pseudo-Huber alpha must be nonnegative")
        self.mu = float(m)
        self.alpha = float(alpha)
        self.dim = int(dim)
        self.center = np.zeros(self.dim) if center is None else np.asarray(center, dtype=np.float64)
        self.m = self.mu
        self.ell = self.mu + self.alpha

    def value(self, x):
        e = np.asarray(x) - self.center
        return float(0.5 * self.mu * e @ e + self.alpha * np.sum(np.sqrt(1.0 + e * e) - 1.0))

    def gradient(self, x):
        e = np.asarray(x) - self.center
        return self.mu * e + self.alpha * e / np.sqrt(1.0 + e * e)

    def hessian(self, x):
        e = np.asarray(x) - self.center
        return np.diag(self.mu + self.alpha * (1.0 + e * e) ** -1.5)

    def values(self, X):
        E = np.asarray(X) - self.center
        return 0.5 * self.mu * np.sum(E * E, axis=1) + self.alpha * np.sum(np.sqrt(1.0 + E * E) - 1.0, axis=1)

    def gradients(self, X):
        E = np.asarray(X) - self.center
        return self.mu * E + self.alpha * E / np.sqrt(1.0 + E * E)

    def hessians(self, X):
        E = np.asarray(X) - self.center
        diag = self.mu + self.alpha * (1.0 + E * E) ** -1.5
        out = np.zeros((len(E), self.dim, self.dim))
        idx = np.arange(self.dim)
        out[:, idx, idx] = diag
        return out


class ShiftedCost(CostFn):
    """``base(x + shift) - offset``: moves the minimizer of ``base`` to the origin."""

    def __init__(self, base: CostFn, shift, offset=0.0):
        self.base = base
        self.shift = np.asarray(shift, dtype=np.float64)
        self.offset = float(offset)
        self.dim = base.dim
        self.m = base.m
        self.ell = base.ell

    def value(self, x):
        return self.base.value(np.asarray(x) + self.shift) - self.offset

    def gradient(self, x):
        return self.base.gradient(np.asarray(x) + self.shift)

    def hessian(self, x):
        return self.base.hessian(np.asarray(x) + self.shift)

    def values(self, X):
        return self.base.values(np.asarray(X) + self.shift) - self.offset

    def gradients(self, X):
        return self.base.gradients(np.asarray(X) + self.shift)

    def hessians(self, X):
        return self.base.hessians(np.asarray(X) + self.shift)


@dataclass(frozen=True, eq=False)
class CostModel:
    f: tuple  # f_1..f_T on the state space
    c: tuple  # c_1..c_T on the control space

    def __post_init__(self):
        f, c = tuple(self.f), tuple(self.c)
        if len(f) != len(c) or not f:
            raise ValidationError(f"need equally many state and control costs, got {len(f)} and {len(c)}")
        if len({fn.dim for fn in f}) != 1 or len({fn.dim for fn in c}) != 1:
            raise ValidationError("cost dimensions must be constant over time")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "c", c)

    @property
    def T(self) -> int:
        return len(self.f)

    @property
    def n(self) -> int:
        return self.f[0].dim

    @property
    def m(self) -> int:
        return self.c[0].dim

    def state_cost(self, t: int) -> CostFn:
        """``f_t`` for ``t = 1..T``."""
        if not 1 <= t <= self.T:
            raise TimeRangeError(f"state cost index {t} outside [1, {self.T}]")
        return self.f[t - 1]

    def control_cost(self, t: int) -> CostFn:
        """``c_t`` (acting on ``u_{t-1}``) for ``t = 1..T``."""
        if not 1 <= t <= self.T:
            raise TimeRangeError(f"control cost index {t} outside [1, {self.T}]")
        return self.c[t - 1]

    @property
    def m_f(self) -> float:
        return min(fn.m for fn in self.f)

    @property
    def ell_f(self) -> float:
        # the last state cost is exempt from the smoothness requirement
        body = self.f[:-1] if self.T > 1 else self.f
        return max(fn.ell for fn in body)

    @property
    def ell_f_terminal(self) -> float:
        return self.f[-1].ell

    @property
    def m_c(self) -> float:
        return min(fn.m for fn in self.c)

    @property
    def ell_c(self) -> float:
        return max(fn.ell for fn in self.c)

    def check_system(self, sys: LtvSystem):
        if (self.T, self.n, self.m) != (sys.T, sys.n, sys.m):
            raise ValidationError(
                f"cost model (T={self.T}, n={self.n}, m={self.m}) does not match "
                f"system (T={sys.T}, n={sys.n}, m={sys.m})"
            )

    def total_cost(self, states, controls) -> float:
        return float(np.sum(self.step_costs(states, controls)))

    def step_costs(self, states, controls) -> np.ndarray:
        """``f_t(x_t) + c_t(u_{t-1})`` for ``t = 1..T``."""
        states = np.asarray(states)
        controls = np.asarray(controls)
        return np.array([
            self.f[i].value(states[i + 1]) + self.c[i].value(controls[i]) for i in range(self.T)
        ])


@dataclass(frozen=True)
class TerminalCost:
    """Terminal cost ``F``: ``zero``, ``indicator`` (of the origin) or ``smooth``."""

    kind: str
    fn: CostFn | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "indicator", "smooth"):
            raise ValidationError(f"unknown terminal cost variant {self.kind!r}")
        if (self.kind == "smooth") != (self.fn is not None):
            raise ValidationError("a smooth terminal cost needs exactly one CostFn")

    @classmethod
    def smooth(cls, fn: CostFn) -> "TerminalCost":
        return cls("smooth", fn)

    @property
    def tag(self) -> str:
        return {"zero": "Zero", "indicator": "IndicatorOrigin", "smooth": "Smooth"}[self.kind]

    @classmethod
    def from_name(cls, name: str) -> "TerminalCost":
        key = name.strip().lower()
        if key in ("zero", "0"):
            return ZERO
        if key in ("indicator", "indicatororigin", "indicator_origin"):
            return INDICATOR_ORIGIN
        raise ValidationError(f"terminal cost {name!r} is not nameable; use Zero or IndicatorOrigin")


ZERO = TerminalCost("zero")
INDICATOR_ORIGIN = TerminalCost("indicator")


def _as_sequence(mats, T=None):
    arr = np.asarray(mats, dtype=np.float64)
    if arr.ndim == 2:
        if T is None:
            raise ValidationError("a single matrix needs an explicit horizon")
        arr = np.broadcast_to(arr, (T,) + arr.shape)
    if arr.ndim != 3:
        raise ValidationError(f"expected a sequence of square matrices, got shape {arr.shape}")
    return arr


def quadratic_family(Q_seq, R_seq, T=None) -> CostModel:
    """``f_t(x) = x^T Q_t x / 2`` and ``c_t(u) = u^T R_t u / 2``.

    ``Q_seq`` and ``R_seq`` may be single matrices when ``T`` is given.
    """
    Q = _as_sequence(Q_seq, T)
    R = _as_sequence(R_seq, T)
    return CostModel(tuple(QuadraticCost(q) for q in Q), tuple(QuadraticCost(r) for r in R))


def pseudo_huber_family(m, alpha, dims, T, m_c=None, alpha_c=None) -> CostModel:
    """Pseudo-Huber costs on both spaces; ``dims = (n, m)``.

    The control cost uses ``m_c``/``alpha_c`` when given, else the state parameters.
    """
    n, mu_dim = dims
    m_c = m if m_c is None else m_c
    alpha_c = alpha if alpha_c is None else alpha_c
    f = PseudoHuberCost(m, alpha, n)
    c = PseudoHuberCost(m_c, alpha_c, mu_dim)
    return CostModel((f,) * T, (c,) * T)


def random_quadratic_family(rng, n, m, T, q_range=(0.5, 2.0), r_range=(0.5, 2.0)) -> CostModel:
    """Random SPD weights with eigenvalues drawn from the given bands."""

    def spd(dim, lo, hi):
        Qm, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        eig = rng.uniform(lo, hi, dim)
        return (Qm * eig) @ Qm.T

    Q = [spd(n, *q_range) for _ in range(T)]
    R = [spd(m, *r_range) for _ in range(T)]
    return quadratic_family(Q, R)


def recenter_costs(model: CostModel, sys: LtvSystem, f_min, c_min):
    """Shift coordinates so every cost is minimized at the origin with value 0.

    ``f_min`` has ``T + 1`` entries: ``f_min[t]`` minimizes ``f_t`` for
    ``t = 1..T`` and ``f_min[0]`` is the offset applied to ``x0`` (there is no
    ``f_0``).  ``c_min[t]`` minimizes ``c_{t+1}``.  In the new coordinates
    ``x'_t = x_t - f_min[t]``, ``u'_t = u_t - c_min[t]`` and

        w'_t = w_t + A_t f_min[t] + B_t c_min[t] - f_min[t+1],

    so a control sequence has the same cost in both representations up to the
    constant sum of the removed minimum values.
    """
    model.check_system(sys)
    f_min = np.asarray(f_min, dtype=np.float64)
    c_min = np.asarray(c_min, dtype=np.float64)
    if f_min.shape != (sys.T + 1, sys.n):
        raise ValidationError(f"f_min must have shape ({sys.T + 1}, {sys.n}), got {f_min.shape}")
    if c_min.shape != (sys.T, sys.m):
        raise ValidationError(f"c_min must have shape ({sys.T}, {sys.m}), got {c_min.shape}")
    w_new = (
        sys.w
        + np.einsum("tij,tj->ti", sys.A, f_min[:-1])
        + np.einsum("tij,tj->ti", sys.B, c_min)
        - f_min[1:]
    )
    f_new = tuple(
        ShiftedCost(fn, f_min[i + 1], fn.value(f_min[i + 1])) for i, fn in enumerate(model.f)
    )
    c_new = tuple(ShiftedCost(fn, c_min[i], fn.value(c_min[i])) for i, fn in enumerate(model.c))
    new_sys = LtvSystem(sys.A, sys.B, w_new, sys.x0 - f_min[0])
    return CostModel(f_new, c_new), new_sys

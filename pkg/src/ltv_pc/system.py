"""Linear time-varying dynamics, controllability analysis and instance families.

The dynamics are ``x[t+1] = A[t] x[t] + B[t] u[t] + w[t]`` for ``t = 0..T-1``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import TimeRangeError, UncontrollableError, ValidationError

DYN_TOL = 1e-8
RANK_TOL = 1e-10
GRIDFREQ_STEP = 0.1


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LtvSystem:
    """Time-indexed dynamics ``(A_t, B_t, w_t)`` and the initial state.

    ``A`` has shape ``(T, n, n)``, ``B`` ``(T, n, m)``, ``w`` ``(T, n)`` and
    ``x0`` ``(n,)``.  Arrays are copied and made read-only on construction.
    """

    A: np.ndarray
    B: np.ndarray
    w: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        A, B, w, x0 = (_frozen(v) for v in (self.A, self.B, self.w, self.x0))
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValidationError(f"A must have shape (T, n, n), got {A.shape}")
        T, n, _ = A.shape
        if T < 1:
            raise ValidationError("horizon T must be positive")
        if B.ndim != 3 or B.shape[:2] != (T, n) or B.shape[2] < 1:
            raise ValidationError(f"B must have shape (T={T}, n={n}, m), got {B.shape}")
        if w.shape != (T, n):
            raise ValidationError(f"w must have shape ({T}, {n}), got {w.shape}")
        if x0.shape != (n,):
            raise ValidationError(f"x0 must have shape ({n},), got {x0.shape}")
        for name, arr in (("A", A), ("B", B), ("w", w), ("x0", x0)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x0", x0)

    @property
    def T(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.B.shape[2]

    def replace(self, **changes) -> "LtvSystem":
        return replace(self, **changes)

    def simulate(self, u, x0=None) -> "Trajectory":
        """Roll the dynamics forward under the control sequence ``u``."""
        u = np.asarray(u, dtype=np.float64).reshape(self.T, self.m)
        x0 = self.x0 if x0 is None else np.asarray(x0, dtype=np.float64)
        states = kernels.rollout(self.A, self.B, self.w, x0, u)
        return Trajectory.certify(self, states, u)

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "n": self.n,
            "m": self.m,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "w": self.w.tolist(),
            "x0": self.x0.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LtvSystem":
        try:
            sys = cls(np.array(doc["A"]), np.array(doc["B"]), np.array(doc["w"]), np.array(doc["x0"]))
        except KeyError as exc:
            raise ValidationError(f"system document missing field {exc}") from None
        if (doc.get("T", sys.T), doc.get("n", sys.n), doc.get("m", sys.m)) != (sys.T, sys.n, sys.m):
            raise ValidationError("declared T/n/m disagree with array shapes")
        return sys

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "LtvSystem":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray  # (T+1, n)
    controls: np.ndarray  # (T, m)
    dyn_residual: float

    @classmethod
    def certify(cls, sys: LtvSystem, states, controls) -> "Trajectory":
        states = _frozen(states)
        controls = _frozen(controls)
        if states.shape != (sys.T + 1, sys.n) or controls.shape != (sys.T, sys.m):
            raise ValidationError(
                f"trajectory shapes {states.shape}/{controls.shape} do not match the system"
            )
        res = kernels.dynamics_residual(sys.A, sys.B, sys.w, states, controls)
        return cls(states, controls, float(res))

    def is_feasible(self, tol: float = DYN_TOL) -> bool:
        return self.dyn_residual <= tol


@dataclass(frozen=True)
class ControllabilityReport:
    d: int
    sigma: float
    a: float
    b: float
    b_prime: float
    per_t_sigma: tuple = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "sigma": self.sigma,
            "a": self.a,
            "b": self.b,
            "b_prime": self.b_prime,
            "per_t_sigma": list(self.per_t_sigma),
        }


def _check_time(sys: LtvSystem, t: int, name: str = "t"):
    if not 0 <= t <= sys.T:
        raise TimeRangeError(f"{name}={t} outside [0, {sys.T}]")


def transition_matrix(sys: LtvSystem, t2: int, t1: int) -> np.ndarray:
    """``A[t2-1] ... A[t1]`` for ``t2 > t1``, identity otherwise."""
    _check_time(sys, t2, "t2")
    _check_time(sys, t1, "t1")
    out = np.eye(sys.n)
    for s in range(t1, t2):
        out = sys.A[s] @ out
    return out


def controllability_matrix(sys: LtvSystem, t: int, p: int) -> np.ndarray:
    """``M(t, p) = [Phi(t+p, t+1) B_t, ..., Phi(t+p, t+p) B_{t+p-1}]``, shape ``(n, m p)``."""
    if p < 1 or t < 0 or t + p > sys.T:
        raise TimeRangeError(f"window (t={t}, p={p}) exceeds horizon T={sys.T}")
    blocks = kernels.transfer_blocks(sys.A[t:t + p])
    return np.hstack([blocks[p, j + 1] @ sys.B[t + j] for j in range(p)])


def _sigma_min(M: np.ndarray) -> float:
    n, cols = M.shape
    if cols < n:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False)[n - 1])


def analyze_controllability(sys: LtvSystem, rank_tol: float = RANK_TOL) -> ControllabilityReport:
    """Find the controllability index ``d`` and the uniform constants.

    ``d`` is the smallest window length for which every ``M(t, d)``,
    ``t = 0..T-d``, has ``sigma_min > rank_tol * ||M||``.
    """
    if rank_tol < 0:
        raise ValidationError("rank_tol must be nonnegative")
    first_fail = None
    for d in range(1, sys.T + 1):
        sigmas = []
        failed_at = None
        for t in range(sys.T - d + 1):
            M = controllability_matrix(sys, t, d)
            s = _sigma_min(M)
            scale = np.linalg.norm(M, 2)
            if not s > rank_tol * max(scale, 1e-300) or s == 0.0:
                failed_at = t
                break
            sigmas.append(s)
        if failed_at is None:
            a = max(np.linalg.norm(At, 2) for At in sys.A)
            b = max(np.linalg.norm(Bt, 2) for Bt in sys.B)
            b_prime = max(np.linalg.norm(np.linalg.pinv(Bt), 2) for Bt in sys.B)
            return ControllabilityReport(d, float(min(sigmas)), float(a), float(b), float(b_prime), tuple(sigmas))
        if first_fail is None:
            first_fail = failed_at
    raise UncontrollableError(
        f"no window length d <= T={sys.T} gives full row rank; first failing t={first_fail}",
        t=first_fail,
    )


# --------------------------------------------------------------------------
# instance generation

FAMILIES = ("random_stable", "random_general", "tracking", "gridfreq_toy")


@dataclass(frozen=True)
class InstanceSpec:
    family: str
    n: int
    m: int
    T: int
    D: float = 1.0
    a_max: float = 0.8
    b_scale: float = 1.0
    x0_scale: float = 1.0
    ref_amplitude: float = 1.0
    ref_period: float = 20.0
    inertia_amplitude: float = 0.3
    inertia_period: float = 25.0

    def validate(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown instance family {self.family!r}; expected one of {FAMILIES}")
        if min(self.n, self.m, self.T) < 1:
            raise ValidationError("n, m and T must be positive")
        if self.D < 0 or self.x0_scale < 0:
            raise ValidationError("D and x0_scale must be nonnegative")
        if not self.b_scale > 0:
            raise ValidationError("b_scale must be positive; a zero input matrix is uncontrollable")
        if self.family in ("random_stable", "tracking") and not self.a_max >= 0:
            raise ValidationError("a_max must be nonnegative")
        if self.family == "gridfreq_toy":
            if self.n != 2 * self.m:
                raise ValidationError("gridfreq_toy needs n = 2 m (angle and frequency per bus)")
            if not 0 <= self.inertia_amplitude < 1:
                raise ValidationError("inertia_amplitude must lie in [0, 1)")

    @classmethod
    def from_dict(cls, doc: dict) -> "InstanceSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known - {"seed"}
        if unknown:
            raise ValidationError(f"unknown instance fields: {sorted(unknown)}")
        return cls(**{k: v for k, v in doc.items() if k in known})


def ball_samples(rng, count: int, dim: int, radius: float) -> np.ndarray:
    """``count`` i.i.d. points uniform on the closed ``dim``-ball of ``radius``."""
    g = rng.standard_normal((count, dim))
    g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
    r = radius * rng.random(count) ** (1.0 / dim)
    return g * r[:, None]


def _random_stable(spec, rng):
    n, m, T = spec.n, spec.m, spec.T
    A = np.empty((T, n, n))
    for t in range(T):
        G = rng.standard_normal((n, n))
        A[t] = spec.a_max * rng.uniform(0.5, 1.0) * G / np.linalg.norm(G, 2)
    B = spec.b_scale * (np.eye(n, m) + 0.3 * rng.standard_normal((T, n, m)))
    w = ball_samples(rng, T, n, spec.D)
    x0 = ball_samples(rng, 1, n, spec.x0_scale)[0]
    return A, B, w, x0


def _random_general(spec, rng):
    n, m, T = spec.n, spec.m, spec.T
    A = rng.standard_normal((T, n, n)) / np.sqrt(n)
    B = spec.b_scale * rng.standard_normal((T, n, m))
    w = ball_samples(rng, T, n, spec.D)
    x0 = ball_samples(rng, 1, n, spec.x0_scale)[0]
    return A, B, w, x0


def reference_signal(spec: InstanceSpec) -> np.ndarray:
    """Desired trajectory ``d_0..d_T`` used by the tracking family."""
    t = np.arange(spec.T + 1)[:, None]
    phase = np.arange(spec.n)[None, :] * np.pi / max(spec.n, 1)
    return spec.ref_amplitude * np.sin(2 * np.pi * t / spec.ref_period + phase)


def tracking_transform(A, w, x0, ref):
    """Fold a desired trajectory into the disturbances:
    ``x~_t = x_t - d_t`` and ``w~_t = w_t + A_t d_t - d_{t+1}``."""
    w_new = w + np.einsum("tij,tj->ti", A, ref[:-1]) - ref[1:]
    return w_new, x0 - ref[0]


def gridfreq_matrices(spec: InstanceSpec):
    """Forward-Euler discretisation of swing dynamics on a ring of ``m`` buses.

    Continuous model ``d/dt [theta; omega] = [[0, I], [-M^-1 L, -M^-1 D]] x + [0; M^-1] u``
    with inertia ``M(t)`` varying sinusoidally in time.
    """
    k = spec.m
    L = 2.0 * np.eye(k)
    if k > 1:
        for i in range(k):
            L[i, (i + 1) % k] -= 1.0
            L[i, (i - 1) % k] -= 1.0
        if k == 2:
            L = np.array([[1.0, -1.0], [-1.0, 1.0]])
    else:
        L = np.array([[1.0]])
    damping = np.eye(k)
    base = 1.0 + 0.1 * np.arange(k)
    A = np.empty((spec.T, 2 * k, 2 * k))
    B = np.empty((spec.T, 2 * k, k))
    h = GRIDFREQ_STEP
    for t in range(spec.T):
        inertia = base * (1.0 + spec.inertia_amplitude * np.sin(2 * np.pi * t / spec.inertia_period))
        Minv = np.diag(1.0 / inertia)
        Ahat = np.block([[np.zeros((k, k)), np.eye(k)], [-Minv @ L, -Minv @ damping]])
        Bhat = np.vstack([np.zeros((k, k)), Minv])
        A[t] = np.eye(2 * k) + h * Ahat
        B[t] = h * Bhat
    return A, B


def generate_instance(spec: InstanceSpec, seed) -> LtvSystem:
    """Build a seeded instance of one of the shipped families.

    ``seed`` is an integer or a ``numpy.random.Generator``; the result is a
    deterministic function of ``(spec, seed)``.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    if spec.family == "random_stable":
        A, B, w, x0 = _random_stable(spec, rng)
    elif spec.family == "random_general":
        A, B, w, x0 = _random_general(spec, rng)
    elif spec.family == "tracking":
        A, B, w, x0 = _random_stable(spec, rng)
        w, x0 = tracking_transform(A, w, x0, reference_signal(spec))
    else:
        A, B = gridfreq_matrices(spec)
        B = B * spec.b_scale
        w = ball_samples(rng, spec.T, spec.n, spec.D)
        x0 = ball_samples(rng, 1, spec.n, spec.x0_scale)[0]
    sys = LtvSystem(A, B, w, x0)
    try:
        analyze_controllability(sys)
    except UncontrollableError as exc:
        raise ValidationError(f"generated {spec.family} instance is not controllable: {exc}") from exc
    return sys

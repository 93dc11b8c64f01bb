"""Exponential decay of the blocks of a banded inverse."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError

ADDITIVE_SLACK = 1e-10


@dataclass
class BandedReport:
    a0: float
    b0: float
    gamma: float
    checks: list = field(default_factory=list)  # (d_hat, measured, bound)

    @property
    def violations(self) -> int:
        return sum(1 for _, meas, bound in self.checks if meas > bound + ADDITIVE_SLACK)

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        slack = [bound - meas for _, meas, bound in self.checks]
        return {
            "a0": self.a0,
            "b0": self.b0,
            "gamma": self.gamma,
            "checks": len(self.checks),
            "violations": self.violations,
            "min_slack": min(slack) if slack else None,
            "ok": self.ok,
        }


def decay_rate(cond: float, q: int) -> float:
    """``((sqrt(cond) - 1) / (sqrt(cond) + 1))^(2/q)``."""
    s = np.sqrt(cond)
    return float(((s - 1) / (s + 1)) ** (2.0 / q))


def bandwidth(A, bs: int) -> int:
    """Smallest even ``q`` with every block ``A_ij``, ``|i - j| > q/2``, exactly zero."""
    w = A.shape[0] // bs
    far = 0
    for i in range(w):
        for j in range(w):
            if np.any(A[i * bs:(i + 1) * bs, j * bs:(j + 1) * bs] != 0):
                far = max(far, abs(i - j))
    return max(2, 2 * far)


def verify_banded_decay(A, D, samples: int, seed, *, block_size: int, q: int | None = None) -> BandedReport:
    """Check ``|((A + D)^-1)_{S_R, S_C}| <= (2 / a0) gamma^d_hat`` on random index sets.

    ``A`` is symmetric positive definite and ``q``-banded in blocks of
    ``block_size``; ``D`` is block-diagonal positive semidefinite.  ``a0`` and
    ``b0`` are the extreme eigenvalues of ``A``.
    """
    A = np.asarray(A, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    bs = int(block_size)
    if A.shape != D.shape or A.shape[0] % bs:
        raise ValidationError("A and D must be square, equal-sized and made of whole blocks")
    if not np.allclose(A, A.T, atol=1e-12):
        raise ValidationError("A must be symmetric")
    eig = np.linalg.eigvalsh(A)
    if eig[0] <= 0:
        raise ValidationError(f"A is not positive definite (min eigenvalue {eig[0]:.3g})")
    if q is None:
        q = bandwidth(A, bs)
    if q % 2 or q < 2:
        raise ValidationError("bandwidth q must be a positive even integer")
    a0, b0 = float(eig[0]), float(eig[-1])
    gamma = decay_rate(b0 / a0, q)
    inv = np.linalg.inv(A + D)
    w = A.shape[0] // bs
    rng = np.random.default_rng(seed)
    rep = BandedReport(a0, b0, gamma)
    for _ in range(samples):
        SR = np.sort(rng.choice(w, size=rng.integers(1, w + 1), replace=False))
        SC = np.sort(rng.choice(w, size=rng.integers(1, w + 1), replace=False))
        d_hat = int(np.min(np.abs(SR[:, None] - SC[None, :])))
        rows = np.concatenate([np.arange(i * bs, (i + 1) * bs) for i in SR])
        cols = np.concatenate([np.arange(j * bs, (j + 1) * bs) for j in SC])
        meas = float(np.linalg.norm(inv[np.ix_(rows, cols)], 2))
        rep.checks.append((d_hat, meas, 2.0 / a0 * gamma**d_hat))
    return rep


def random_block_tridiagonal(rng, omega: int, bs: int, shift: float = 0.1):
    """Symmetric positive definite block-tridiagonal matrix and a random block-diagonal PSD ``D``."""
    N = omega * bs
    A = np.zeros((N, N))
    for i in range(omega):
        G = rng.standard_normal((bs, bs))
        A[i * bs:(i + 1) * bs, i * bs:(i + 1) * bs] = G @ G.T
        if i + 1 < omega:
            E = rng.standard_normal((bs, bs))
            A[i * bs:(i + 1) * bs, (i + 1) * bs:(i + 2) * bs] = E
            A[(i + 1) * bs:(i + 2) * bs, i * bs:(i + 1) * bs] = E.T
    lo = np.linalg.eigvalsh(A)[0]
    A += (max(0.0, -lo) + shift * rng.uniform(0.5, 2.0)) * np.eye(N)
    D = np.zeros((N, N))
    for i in range(omega):
        G = rng.standard_normal((bs, rng.integers(1, bs + 1)))
        D[i * bs:(i + 1) * bs, i * bs:(i + 1) * bs] = rng.uniform(0, 3) * G @ G.T
    return A, D

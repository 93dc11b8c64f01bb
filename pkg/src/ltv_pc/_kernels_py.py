"""Pure numpy implementations of the trajectory kernels.

Used when the compiled extension is unavailable or ``LTV_PC_PURE_PYTHON`` is set.
Signatures and outputs match ``_kernels.pyx`` exactly.
"""
import numpy as np


def transfer_blocks(A):
    """Block table ``out[i, j] = A[i-1] @ ... @ A[j]`` for ``j < i``, identity on
    the diagonal, zero above it.  ``A`` has shape ``(p, n, n)``."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    p, n, _ = A.shape
    out = np.zeros((p + 1, p + 1, n, n))
    eye = np.eye(n)
    out[0, 0] = eye
    for i in range(1, p + 1):
        out[i, :i] = np.matmul(A[i - 1], out[i - 1, :i])
        out[i, i] = eye
    return out


def rollout(A, B, w, x0, u):
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    p, n, _ = A.shape
    x = np.empty((p + 1, n))
    x[0] = x0
    for k in range(p):
        x[k + 1] = A[k] @ x[k] + B[k] @ u[k] + w[k]
    return x


def dynamics_residual(A, B, w, x, u):
    """Largest 2-norm of ``x[k+1] - A[k] x[k] - B[k] u[k] - w[k]``."""
    A = np.asarray(A, dtype=np.float64)
    if A.shape[0] == 0:
        return 0.0
    pred = np.einsum("kij,kj->ki", A, x[:-1]) + np.einsum("kij,kj->ki", B, u) + w
    return float(np.max(np.linalg.norm(x[1:] - pred, axis=1)))

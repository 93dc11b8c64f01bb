"""Reference solvers written independently of the library.

Both oracles work on raw arrays: dynamics ``(A, B, zeta, x)``, per-step cost
data and an optional terminal state.  Nothing here imports ``ltv_pc``.
"""
import numpy as np


def _stack_dynamics(A, B, zeta, x):
    """Equality constraints ``E q = e`` on ``q = (y_1..y_p, v_0..v_{p-1})``."""
    p, n, _ = A.shape
    m = B.shape[2]
    N = p * n + p * m
    E = np.zeros((p * n, N))
    e = np.zeros(p * n)
    for h in range(p):
        r = slice(h * n, (h + 1) * n)
        E[r, h * n:(h + 1) * n] = np.eye(n)  # y_{h+1}
        if h > 0:
            E[r, (h - 1) * n:h * n] = -A[h]
        E[r, p * n + h * m:p * n + (h + 1) * m] = -B[h]
        e[r] = zeta[h] + (A[0] @ x if h == 0 else 0.0)
    return E, e


def kkt_oracle(A, B, zeta, x, Q, R, QF=None, z=None):
    """Window optimum for quadratic costs by one dense KKT solve.

    ``Q[h]`` weights ``y_{h+1}`` (``h = 0..p-1``), ``R[h]`` weights ``v_h``;
    ``QF`` is an extra quadratic terminal weight and ``z`` pins ``y_p``.
    Returns ``(value, states (p+1, n), controls (p, m))``.
    """
    A, B, zeta, x = (np.asarray(a, dtype=float) for a in (A, B, zeta, x))
    p, n, _ = A.shape
    m = B.shape[2]
    N = p * n + p * m
    H = np.zeros((N, N))
    for h in range(p):
        H[h * n:(h + 1) * n, h * n:(h + 1) * n] = Q[h]
        H[p * n + h * m:p * n + (h + 1) * m, p * n + h * m:p * n + (h + 1) * m] = R[h]
    if QF is not None:
        H[(p - 1) * n:p * n, (p - 1) * n:p * n] += QF
    E, e = _stack_dynamics(A, B, zeta, x)
    if z is not None:
        Ez = np.zeros((n, N))
        Ez[:, (p - 1) * n:p * n] = np.eye(n)
        E = np.vstack([E, Ez])
        e = np.concatenate([e, z])
    K = np.block([[H, E.T], [E, np.zeros((E.shape[0], E.shape[0]))]])
    rhs = np.concatenate([np.zeros(N), e])
    sol = np.linalg.solve(K, rhs)
    q = sol[:N]
    states = np.vstack([x, q[:p * n].reshape(p, n)])
    controls = q[p * n:].reshape(p, m)
    return 0.5 * float(q @ H @ q), states, controls


# --- pseudo-Huber reference, coded from its closed form


def ph_value(X, mu, alpha):
    X = np.atleast_2d(X)
    return float(0.5 * mu * np.sum(X * X) + alpha * np.sum(np.sqrt(1 + X * X) - 1))


def ph_grad(X, mu, alpha):
    return mu * X + alpha * X / np.sqrt(1 + X * X)


def _transfer(A, B):
    """Dense maps ``Y = Sx x + Sv v + Sz zeta`` by unit-input simulation."""
    p, n, _ = A.shape
    m = B.shape[2]

    def sim(x, v, zeta):
        Y = np.empty((p, n))
        y = x
        for h in range(p):
            y = A[h] @ y + B[h] @ v[h] + zeta[h]
            Y[h] = y
        return Y.ravel()

    Sv = np.column_stack([sim(np.zeros(n), np.eye(p * m)[j].reshape(p, m), np.zeros((p, n))) for j in range(p * m)])
    return sim, Sv


def pg_oracle(A, B, zeta, x, cost_f, cost_c, z=None, max_iter=100_000, tol=1e-10):
    """Projected (accelerated) gradient on the controls to convergence.

    ``cost_f = (mu, alpha)`` for the state cost on ``y_1..y_p``, ``cost_c`` for
    the control cost.  With ``z`` the iterates are projected onto the affine
    set of controls reaching ``y_p = z``.  Step ``1 / L`` with ``L`` from the
    smoothness constants and ``|S_v|``; at most ``max_iter`` iterations.
    Returns ``(value, controls, iterations)``.
    """
    A, B, zeta, x = (np.asarray(a, dtype=float) for a in (A, B, zeta, x))
    p, n, _ = A.shape
    m = B.shape[2]
    sim, Sv = _transfer(A, B)
    mu_f, al_f = cost_f
    mu_c, al_c = cost_c
    L = (mu_f + al_f) * np.linalg.norm(Sv, 2) ** 2 + (mu_c + al_c)
    base = sim(x, np.zeros((p, m)), zeta)

    def obj(v):
        Y = (base + Sv @ v).reshape(p, n)
        return ph_value(Y, mu_f, al_f) + ph_value(v.reshape(p, m), mu_c, al_c)

    def grad(v):
        Y = base + Sv @ v
        return Sv.T @ ph_grad(Y, mu_f, al_f) + ph_grad(v, mu_c, al_c)

    if z is None:
        def proj(v):
            return v
        v = np.zeros(p * m)
    else:
        Mz = Sv[(p - 1) * n:]
        target = np.asarray(z, dtype=float) - base[(p - 1) * n:]
        G = np.linalg.inv(Mz @ Mz.T)

        def proj(v):
            return v - Mz.T @ (G @ (Mz @ v - target))
        v = proj(np.zeros(p * m))
    yk, tk, prev = v.copy(), 1.0, obj(v)
    it = 0
    for it in range(1, max_iter + 1):
        v_new = proj(yk - grad(yk) / L)
        val = obj(v_new)
        step = np.linalg.norm(v_new - v)
        if step <= tol * (1 + np.linalg.norm(v)):
            v = v_new if val <= prev else v
            break
        if val > prev * (1 + 1e-15):  # restart the momentum
            yk, tk = v.copy(), 1.0
            continue
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * tk * tk))
        yk = v_new + (tk - 1) / t_new * (v_new - v)
        v, tk, prev = v_new, t_new, val
    return obj(v), v.reshape(p, m), it

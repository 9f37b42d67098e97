"""Direct-method minimizer for discretized geodesic actions.

The unknowns are the interior nodes of a polyline ``X[0..N]`` with fixed
endpoints.  The search direction is limited-memory quasi-Newton on top of
an H^1-in-time preconditioner (the inverse of the second-difference
matrix), and every step is accepted only after halving until the action
decreases (Armijo) and the iterate stays valid.  The accepted action
sequence is therefore monotone.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergence


@dataclass
class SolverConfig:
    n_intervals: int = 32
    max_iter: int = 20000
    tol: float = 1e-12
    memory: int = 12
    max_halvings: int = 60
    raise_on_failure: bool = True

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in (d or {}).items() if k in cls.__dataclass_fields__})


@dataclass
class PathSolution:
    X: np.ndarray
    action: float
    history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = True


def second_difference_inverse(n_interior, dt):
    """Inverse of ``tridiag(-1, 2, -1) / dt`` (n_interior x n_interior)."""
    if n_interior == 0:
        return np.zeros((0, 0))
    k = np.arange(1, n_interior + 1)
    # closed form: (T^-1)_{ij} = min(i,j) (n+1-max(i,j)) / (n+1), times dt
    i, j = np.meshgrid(k, k, indexing="ij")
    return dt * np.minimum(i, j) * (n_interior + 1 - np.maximum(i, j)) / (n_interior + 1)


def minimize_path(X0, fun, valid, cfg, project=None):
    """Minimize ``fun`` over the interior rows of ``X0``.

    Parameters
    ----------
    X0 : (N+1, m) array
        Initial polyline; rows 0 and N stay fixed.
    fun : callable
        ``fun(X) -> (A, grad)`` with ``grad`` the full (N+1, m) gradient.
    valid : callable
        ``valid(X) -> bool``; invalid trial points are treated as failed steps.
    project : callable, optional
        Linear projection applied to gradients (e.g. onto zero-sum rows).
    """
    X = np.array(X0, dtype=float)
    N = X.shape[0] - 1
    dt = 1.0 / N
    Tinv = second_difference_inverse(N - 1, dt)
    proj = project if project is not None else (lambda G: G)

    def precond(G):
        return Tinv @ G

    A, G = fun(X)
    g = proj(G[1:-1])
    history = [float(A)]
    if N < 2 or not np.any(g):
        return PathSolution(X, float(A), history, 0, True)

    s_hist, y_hist = [], []
    step = 1.0
    it = 0
    converged = False
    small = 0
    while it < cfg.max_iter:
        it += 1
        # two-loop recursion with H0 = scale * precond
        q = g.copy()
        alphas = []
        for s, y in reversed(list(zip(s_hist, y_hist))):
            rho = 1.0 / np.vdot(y, s)
            a = rho * np.vdot(s, q)
            alphas.append(a)
            q -= a * y
        if s_hist:
            Hy = precond(y_hist[-1])
            scale = np.vdot(s_hist[-1], y_hist[-1]) / np.vdot(y_hist[-1], Hy)
        else:
            scale = 1.0
        r = scale * precond(q)
        for (s, y), a in zip(zip(s_hist, y_hist), reversed(alphas)):
            rho = 1.0 / np.vdot(y, s)
            b = rho * np.vdot(y, r)
            r += (a - b) * s
        d = -proj(r)
        slope = np.vdot(g, d)
        if not slope < 0:
            s_hist.clear()
            y_hist.clear()
            d = -proj(precond(g))
            slope = np.vdot(g, d)
            if not slope < 0:
                converged = True
                break

        t = step if not s_hist else 1.0
        accepted = False
        for _ in range(cfg.max_halvings):
            Xt = X.copy()
            Xt[1:-1] += t * d
            if valid(Xt):
                At, Gt = fun(Xt)
                if np.isfinite(At) and At <= A + 1e-4 * t * slope:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            # quasi-Newton direction failed: restart from the preconditioned
            # gradient; if that fails too we are at rounding level
            if s_hist:
                s_hist.clear()
                y_hist.clear()
                continue
            converged = True
            break
        step = min(2.0 * t, 1.0) if not s_hist else step
        gt = proj(Gt[1:-1])
        s_vec = t * d
        y_vec = gt - g
        if np.vdot(s_vec, y_vec) > 1e-16 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            s_hist.append(s_vec)
            y_hist.append(y_vec)
            if len(s_hist) > cfg.memory:
                s_hist.pop(0)
                y_hist.pop(0)
        decrease = A - At
        X, A, g = Xt, float(At), gt
        history.append(A)
        if decrease <= cfg.tol * max(abs(A), 1e-300):
            small += 1
            if small >= 3:
                converged = True
                break
        else:
            small = 0
    sol = PathSolution(X, float(A), history, it, converged)
    if not converged and cfg.raise_on_failure:
        raise NonConvergence(f"path solver did not converge in {it} iterations", last=sol)
    return sol

"""Wasserstein Riemannian geometry of the open probability simplex.

The metric tensor at ``p`` is ``L(p)^+`` acting on zero-sum tangent vectors;
potentials (dual coordinates) are identified with tangents via
``sigma = L(p) phi``.
"""
import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._pathsolve import SolverConfig, minimize_path
from .errors import BoundaryEscape, BoundaryPoint, NonConvergence
from .graph import gamma_one, laplacian, laplacian_matrix

#: minimum coordinate for operations that need ``L(p)^+``
DELTA_INTERIOR = 1e-9
SUM_TOL = 1e-12


def check_interior(p, delta=DELTA_INTERIOR):
    p = np.asarray(p, dtype=float)
    if p.min() < delta:
        raise BoundaryPoint(f"min p = {p.min():.3g} below interior threshold {delta:g}")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"p does not sum to one (sum = {p.sum()!r})")
    return p


def check_tangent(sigma, n=None):
    sigma = np.asarray(sigma, dtype=float)
    if n is not None and sigma.shape != (n,):
        raise ValueError(f"tangent vector must have shape ({n},)")
    if abs(sigma.sum()) > SUM_TOL * max(1.0, np.abs(sigma).sum()):
        raise ValueError(f"tangent vector is not zero-sum (sum = {sigma.sum()!r})")
    return sigma


def primal_inner(g, p, sigma, tau):
    """``sigma^T L(p)^+ tau`` for zero-sum ``sigma``, ``tau``."""
    p = check_interior(p)
    sigma = check_tangent(sigma, g.n)
    tau = check_tangent(tau, g.n)
    return float(sigma @ laplacian(g, p).pinv @ tau)


def dual_solve(g, p, sigma):
    """Mean-zero potential ``phi`` with ``L(p) phi = sigma``."""
    p = check_interior(p)
    sigma = check_tangent(sigma, g.n)
    phi = laplacian(g, p).pinv @ sigma
    return phi - phi.mean()


def fisher_rao_metric(p):
    """Fisher-Rao tensor ``diag(1/p)`` (use on zero-sum vectors)."""
    p = check_interior(p)
    return np.diag(1.0 / p)


def fisher_rao_geodesic(p0, p1, t):
    """Point at time ``t`` on the Fisher-Rao geodesic (great circle of sqrt(p))."""
    a = np.sqrt(np.asarray(p0, dtype=float))
    b = np.sqrt(np.asarray(p1, dtype=float))
    angle = np.arccos(np.clip(a @ b, -1.0, 1.0))
    if angle < 1e-15:
        x = a
    else:
        x = (np.sin((1 - t) * angle) * a + np.sin(t * angle) * b) / np.sin(angle)
    x = x * x
    return x / x.sum()


def fisher_rao_distance(p0, p1):
    """Length under ``sum sigma_i^2 / p_i``: ``2 arccos(sum sqrt(p0 p1))``."""
    bc = np.sum(np.sqrt(np.asarray(p0, dtype=float) * np.asarray(p1, dtype=float)))
    return float(2.0 * np.arccos(np.clip(bc, -1.0, 1.0)))


def exponential_geodesic(p0, p1, t):
    """Normalized ``p0**(1-t) * p1**t`` (computed in log space)."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    if t == 0:
        return p0.copy()
    if t == 1:
        return p1.copy()
    logs = (1 - t) * np.log(p0) + t * np.log(p1)
    logs -= logs.max()
    x = np.exp(logs)
    return x / x.sum()


# --------------------------------------------------------------------- paths

@dataclass
class DensityPath:
    """Polyline in the simplex on the time grid ``t``.

    ``duals[k]`` is the potential on segment ``[t_k, t_{k+1}]``.
    """

    t: np.ndarray
    points: np.ndarray
    duals: np.ndarray = None
    report: dict = field(default_factory=dict)

    def at(self, s):
        """Linear interpolation of the path at time ``s``."""
        return np.array([np.interp(s, self.t, self.points[:, i]) for i in range(self.points.shape[1])])

    def reversed(self):
        duals = None if self.duals is None else -self.duals[::-1]
        return DensityPath(1.0 - self.t[::-1], self.points[::-1].copy(), duals, dict(self.report))

    def to_csv(self, path, header_prefix="p"):
        write_path_csv(path, self.t, self.points, header_prefix)


def fmt(x):
    """Shortest round-trip float formatting used in every CSV."""
    return repr(float(x))


def write_path_csv(path, t, points, prefix="p"):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"{prefix}_{i + 1}" for i in range(points.shape[1])])
        for tk, row in zip(t, points):
            w.writerow([fmt(tk)] + [fmt(v) for v in row])


def read_path_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    return data[:, 0], data[:, 1:]


def path_action(g, points):
    """Discrete action ``sum_k dt sigma_k^T L(pbar_k)^+ sigma_k`` with uniform dt.

    Returns ``(action, phi, gradient)``; gradient rows are projected onto
    zero-sum and the endpoint rows are meaningless.
    """
    X = np.asarray(points, dtype=float)
    N = X.shape[0] - 1
    dt = 1.0 / N
    sig = (X[1:] - X[:-1]) / dt
    pbar = 0.5 * (X[1:] + X[:-1])
    phi, energy, gam = _kernels.segment_duals(g.n, g.ei, g.ej, g.weights, pbar, sig)
    A = dt * float(energy.sum())
    G = np.zeros_like(X)
    G[1:-1] = 2.0 * (phi[:-1] - phi[1:]) - 0.5 * dt * (gam[:-1] + gam[1:])
    G -= G.mean(axis=1, keepdims=True)
    return A, phi, G


def wasserstein_distance(g, p0, p1, solver_cfg=None, init=None):
    """Dynamical transport distance by the direct method.

    The time interval is split into ``n_intervals`` steps, densities are
    evaluated at segment midpoints, and the interior nodes are optimized
    starting from linear interpolation.

    Returns
    -------
    W : float
    path : DensityPath
        ``path.report`` holds ``{"W", "iterations", "action_history"}``.
    """
    cfg = solver_cfg if isinstance(solver_cfg, SolverConfig) else SolverConfig.from_dict(solver_cfg)
    p0 = check_interior(p0)
    p1 = check_interior(p1)
    N = cfg.n_intervals
    t = np.linspace(0.0, 1.0, N + 1)
    if init is None:
        X0 = (1 - t)[:, None] * p0[None, :] + t[:, None] * p1[None, :]
    else:
        X0 = np.array(init, dtype=float)
        X0[0], X0[-1] = p0, p1

    def fun(X):
        A, _, G = path_action(g, X)
        return A, G

    def valid(X):
        return X.min() >= DELTA_INTERIOR

    def project(G):
        return G - G.mean(axis=1, keepdims=True)

    try:
        sol = minimize_path(X0, fun, valid, cfg, project)
    except NonConvergence as exc:
        last = exc.last
        exc.last = _make_path(g, t, last)
        raise
    path = _make_path(g, t, sol)
    return path.report["W"], path


def _make_path(g, t, sol):
    X = sol.X
    X[0] /= X[0].sum()
    X[-1] /= X[-1].sum()
    A, phi, _ = path_action(g, X)
    W = float(np.sqrt(max(A, 0.0)))
    report = {"W": W, "iterations": int(sol.iterations),
              "action_history": [float(a) for a in sol.history], "converged": bool(sol.converged)}
    return DensityPath(t, X, phi, report)


def initial_momentum(path):
    """Estimate the momentum at t=0 from the segment duals (linear extrapolation)."""
    if path.duals.shape[0] == 1:
        S = path.duals[0].copy()
    else:
        S = 1.5 * path.duals[0] - 0.5 * path.duals[1]
    return S - S.mean()


def write_distance_report(path, report):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({k: report[k] for k in ("W", "iterations", "action_history")}, fh)


# --------------------------------------------------------------- Hamiltonian flow

@dataclass
class CotangentTrajectory:
    t: np.ndarray
    p: np.ndarray
    S: np.ndarray
    H: np.ndarray

    @property
    def drift(self):
        """Relative Hamiltonian drift ``|H(T) - H(0)| / H(0)`` (absolute when H(0) = 0)."""
        h0 = self.H[0]
        return float(abs(self.H[-1] - h0) / h0) if h0 > 0 else float(abs(self.H[-1] - h0))


def hamiltonian(g, p, S):
    return 0.5 * float(S @ laplacian_matrix(g, p) @ S)


def cotangent_flow(g, p0, S0, T=1.0, steps=1000):
    """RK4 for ``p' = L(p) S``, ``S_i' = -1/4 sum_j w_ij (S_i - S_j)^2``.

    Raises :class:`BoundaryEscape` if any coordinate drops below the
    interior threshold at any stage.
    """
    p = check_interior(p0).copy()
    S = np.asarray(S0, dtype=float)
    S = S - S.mean()
    h = T / steps

    def rhs(p, S):
        if p.min() < DELTA_INTERIOR:
            raise BoundaryEscape("cotangent flow left the simplex interior", state=(p, S))
        return laplacian_matrix(g, p) @ S, -gamma_one(g, S, S) * 0.5

    ts = np.linspace(0.0, T, steps + 1)
    P = np.empty((steps + 1, g.n))
    SS = np.empty((steps + 1, g.n))
    H = np.empty(steps + 1)
    P[0], SS[0], H[0] = p, S, hamiltonian(g, p, S)
    for k in range(steps):
        try:
            k1p, k1s = rhs(p, S)
            k2p, k2s = rhs(p + 0.5 * h * k1p, S + 0.5 * h * k1s)
            k3p, k3s = rhs(p + 0.5 * h * k2p, S + 0.5 * h * k2s)
            k4p, k4s = rhs(p + h * k3p, S + h * k3s)
        except BoundaryEscape as exc:
            exc.t = ts[k]
            raise
        p = p + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
        S = S + h / 6 * (k1s + 2 * k2s + 2 * k3s + k4s)
        S = S - S.mean()
        if p.min() < DELTA_INTERIOR:
            raise BoundaryEscape("cotangent flow left the simplex interior", t=ts[k + 1], state=(p, S))
        P[k + 1], SS[k + 1], H[k + 1] = p, S, hamiltonian(g, p, S)
    return CotangentTrajectory(ts, P, SS, H)


# --------------------------------------------------------------- static LP

def ground_cost(g):
    """Squared shortest-path distances ``d_G(i, j)**2``."""
    return g.shortest_paths ** 2


def static_lp_distance(g, p0, p1, return_plan=False):
    """Optimal value of the transport LP with cost ``d_G(i,j)**2``.

    ``plan[i, j]`` moves mass from ``p0_i`` to ``p1_j``.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    cost, plan = transport_simplex(p0, p1, ground_cost(g))
    return (cost, plan) if return_plan else cost


def _northwest_corner(supply, demand, eps):
    m, n = len(supply), len(demand)
    s = supply.copy()
    d = demand.copy()
    x = np.zeros((m, n))
    basis = []
    i = j = 0
    while i < m and j < n:
        q = min(s[i], d[j])
        x[i, j] = q
        basis.append((i, j))
        s[i] -= q
        d[j] -= q
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif s[i] <= eps:
            i += 1
        else:
            j += 1
    return x, basis


def _tree_path(basis, m, start_row, end_col):
    """Path of basic cells from row node ``start_row`` to column node ``end_col``."""
    adj = {}
    for (i, j) in basis:
        adj.setdefault(("r", i), []).append(("c", j))
        adj.setdefault(("c", j), []).append(("r", i))
    start, goal = ("r", start_row), ("c", end_col)
    prev = {start: None}
    queue = [start]
    for node in queue:
        if node == goal:
            break
        for nb in adj.get(node, []):
            if nb not in prev:
                prev[nb] = node
                queue.append(nb)
    nodes = []
    node = goal
    while node is not None:
        nodes.append(node)
        node = prev[node]
    nodes.reverse()
    cells = []
    for a, b in zip(nodes[:-1], nodes[1:]):
        cells.append((a[1], b[1]) if a[0] == "r" else (b[1], a[1]))
    return cells


def transport_simplex(supply, demand, cost, max_iter=10000):
    """Balanced transportation problem: north-west start, MODI/stepping-stone pivots."""
    supply = np.asarray(supply, dtype=float)
    demand = np.asarray(demand, dtype=float)
    cost = np.asarray(cost, dtype=float)
    m, n = cost.shape
    total = supply.sum()
    if abs(total - demand.sum()) > 1e-9 * max(1.0, total):
        raise ValueError("supply and demand totals differ")
    eps = 1e-14 * max(1.0, total)
    x, basis = _northwest_corner(supply, demand, eps)
    ceps = 1e-12 * max(1.0, np.abs(cost).max())
    for _ in range(max_iter):
        u = np.full(m, np.nan)
        v = np.full(n, np.nan)
        u[0] = 0.0
        changed = True
        while changed:
            changed = False
            for (i, j) in basis:
                if np.isnan(u[i]) and not np.isnan(v[j]):
                    u[i] = cost[i, j] - v[j]
                    changed = True
                elif np.isnan(v[j]) and not np.isnan(u[i]):
                    v[j] = cost[i, j] - u[i]
                    changed = True
        reduced = cost - u[:, None] - v[None, :]
        in_basis = np.zeros((m, n), dtype=bool)
        for (i, j) in basis:
            in_basis[i, j] = True
        reduced[in_basis] = 0.0
        cand = np.argwhere(reduced < -ceps)
        if cand.size == 0:
            break
        # Bland-style: lowest index among improving cells avoids cycling
        ei, ej = map(int, cand[0])
        path = _tree_path(basis, m, ei, ej)
        # cycle: (ei,ej)+ then path cells alternate -, +, ... ending at column ej
        minus = path[0::2]
        plus = path[1::2]
        theta_cells = sorted(minus, key=lambda c: (x[c], c))
        leave = theta_cells[0]
        theta = x[leave]
        x[ei, ej] += theta
        for c in minus:
            x[c] -= theta
        for c in plus:
            x[c] += theta
        x[leave] = 0.0
        basis.remove(leave)
        basis.append((ei, ej))
    else:
        raise NonConvergence("transportation simplex hit the iteration limit", last=x)
    x[x < 0] = 0.0
    return float(np.sum(cost * x)), x

"""Pull-back Wasserstein geometry on parametric models.

For a model ``theta -> p(theta)`` with Jacobian ``J`` the metric tensor is
``G(theta) = J^T L(p)^+ J``.  Extrinsic quantities (projection, second
fundamental form, curvature) are computed in the ambient simplex and
mapped back through ``J``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._pathsolve import SolverConfig, minimize_path
from .errors import (BoundaryPoint, DomainEscape, NonConvergence, RankDeficient,
                     SingularMetric, TangentNotInModel)
from .graph import gamma_one, laplacian, laplacian_matrix
from .simplex import DELTA_INTERIOR

RANK_RTOL = 1e-8
SINGULAR_TOL = 1e-12


class ParametricModel:
    """A smooth map from an open parameter set into the open simplex.

    Subclasses implement :meth:`p`; :meth:`jacobian` and :meth:`d2p`
    default to central differences.
    """

    dim = None
    n_states = None
    name = "model"

    def p(self, theta):
        raise NotImplementedError

    def in_domain(self, theta):
        return bool(np.all(np.isfinite(theta)))

    def jacobian(self, theta):
        theta = np.asarray(theta, dtype=float)
        J = np.empty((self.n_states, self.dim))
        eps = np.sqrt(np.finfo(float).eps)
        for j in range(self.dim):
            h = eps * (1.0 + abs(theta[j]))
            e = np.zeros(self.dim)
            e[j] = h
            J[:, j] = (self.p(theta + e) - self.p(theta - e)) / (2 * h)
        return J

    def d2p(self, theta, v):
        """Directional derivative of the Jacobian along ``v`` (n x d)."""
        theta = np.asarray(theta, dtype=float)
        v = np.asarray(v, dtype=float)
        nv = np.linalg.norm(v)
        if nv == 0:
            return np.zeros((self.n_states, self.dim))
        h = np.finfo(float).eps ** (1 / 3) * (1.0 + np.linalg.norm(theta)) / nv
        return (self.jacobian(theta + h * v) - self.jacobian(theta - h * v)) / (2 * h)

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, n_states={self.n_states})"


@dataclass(frozen=True)
class PullbackMetric:
    theta: np.ndarray
    G: np.ndarray
    lambda_min: float
    p: np.ndarray
    J: np.ndarray
    K: np.ndarray  # L(p)^+

    def to_dict(self):
        return {"theta": self.theta.tolist(), "G": self.G.tolist(), "lambda_min": self.lambda_min}

    def solve(self, b):
        return solve_spd(self.G, b)


def solve_spd(G, b):
    """Solve ``G x = b`` by Cholesky; fall back to a thresholded pseudo-inverse."""
    G = 0.5 * (G + G.T)
    evmin = np.linalg.eigvalsh(G)[0] if G.size else 1.0
    if evmin >= SINGULAR_TOL:
        try:
            return scipy.linalg.cho_solve(scipy.linalg.cho_factor(G), b)
        except np.linalg.LinAlgError:
            pass
    w, U = np.linalg.eigh(G)
    tau = 1e-10 * max(w.max(), 0.0) * len(w)
    inv = np.where(w > tau, 1.0 / np.where(w > tau, w, 1.0), 0.0)
    return U @ (inv[:, None] * (U.T @ b)) if np.ndim(b) > 1 else U @ (inv * (U.T @ b))


def _evaluate(model, theta):
    theta = np.asarray(theta, dtype=float)
    if not model.in_domain(theta):
        raise DomainEscape(f"theta={theta} outside the model domain", theta=theta)
    p = model.p(theta)
    if p.min() < DELTA_INTERIOR:
        raise BoundaryPoint(f"p(theta) has min {p.min():.3g} below the interior threshold")
    return theta, p


def metric(model, g, theta, check_rank=True):
    """Pull-back tensor ``G(theta) = J^T L(p(theta))^+ J``."""
    theta, p = _evaluate(model, theta)
    J = model.jacobian(theta)
    if check_rank:
        sv = np.linalg.svd(J, compute_uv=False)
        if sv.size < model.dim or sv[-1] < RANK_RTOL * sv[0]:
            raise RankDeficient(f"Jacobian rank < {model.dim} at theta={theta}")
    K = laplacian(g, p).pinv
    G = J.T @ K @ J
    G = 0.5 * (G + G.T)
    lam = float(np.linalg.eigvalsh(G)[0])
    return PullbackMetric(theta, G, lam, p, J, K)


def metric_gram(model, g, theta):
    """``G`` assembled entry-wise as the Gram matrix of Jacobian columns under ``primal_inner``."""
    from .simplex import primal_inner
    theta, p = _evaluate(model, theta)
    J = model.jacobian(theta)
    d = model.dim
    G = np.empty((d, d))
    for a in range(d):
        for b in range(d):
            G[a, b] = primal_inner(g, p, J[:, a], J[:, b])
    return G


# ---------------------------------------------------------------- ambient connection

def connection(g, p, K, s, t):
    """Levi-Civita ``nabla_s t`` of the simplex metric for constant fields s, t."""
    Ks, Kt = K @ s, K @ t
    return -0.5 * (laplacian_matrix(g, s) @ Kt + laplacian_matrix(g, t) @ Ks
                   - laplacian_matrix(g, p) @ gamma_one(g, Ks, Kt))


def _connection_derivative(g, p, K, x, s, t):
    """Derivative of ``connection(p)(s, t)`` along ``x`` (uses dK = -K L(x) K)."""
    Lx = laplacian_matrix(g, x)
    Ks, Kt = K @ s, K @ t
    dKs = -K @ (Lx @ Ks)
    dKt = -K @ (Lx @ Kt)
    return -0.5 * (laplacian_matrix(g, s) @ dKt + laplacian_matrix(g, t) @ dKs
                   - Lx @ gamma_one(g, Ks, Kt)
                   - laplacian_matrix(g, p) @ (gamma_one(g, dKs, Kt) + gamma_one(g, Ks, dKt)))


def ambient_curvature(g, p, K, s1, s2, s3, s4):
    """``g^W(R(s1, s2) s3, s4)`` on the full simplex, with ``R(X,Y) = [nabla_X, nabla_Y]``."""
    R = (_connection_derivative(g, p, K, s1, s2, s3) - _connection_derivative(g, p, K, s2, s1, s3)
         + connection(g, p, K, s1, connection(g, p, K, s2, s3))
         - connection(g, p, K, s2, connection(g, p, K, s1, s3)))
    return float(R @ K @ s4)


# ---------------------------------------------------------------- extrinsic geometry

def projector(model, g, theta):
    """``H = J (J^T L^+ J)^+ J^T L^+``, the g^W-orthogonal projector onto range(J)."""
    m = metric(model, g, theta)
    return m.J @ solve_spd(m.G, m.J.T @ m.K)


def projection(model, g, theta, sigma):
    """Split a tangent vector into model-tangent and normal parts."""
    H = projector(model, g, theta)
    par = H @ sigma
    return par, sigma - par


def _require_tangent(H, sigma, name="sigma"):
    res = np.linalg.norm(sigma - H @ sigma)
    if res > 1e-8 * max(1.0, np.linalg.norm(sigma)):
        raise TangentNotInModel(f"{name} has normal component of norm {res:.3g}")


def _coefficients(m, sigma):
    """Parameter-space coefficients ``a`` with ``J a`` the model part of ``sigma``."""
    return solve_spd(m.G, m.J.T @ m.K @ sigma)


def _shape_operator(model, g, m, H, sigma, tau):
    """Normal part of the ambient derivative of the field ``J(theta) b`` along ``sigma``.

    Besides the connection term for constant fields this includes
    ``d^2 p[a, b]``, which is nonzero whenever ``p`` is not affine in theta.
    """
    a = _coefficients(m, sigma)
    b = _coefficients(m, tau)
    w = model.d2p(m.theta, a) @ b + connection(g, m.p, m.K, sigma, tau)
    return w - H @ w


def second_fundamental_form(model, g, theta, sigma, tau, check=True):
    """Second fundamental form ``B(sigma, tau)`` for model-tangent sigma, tau.

    ``B`` is the normal part of ``d^2 p[a, b] + nabla_sigma tau`` where
    ``sigma = J a``, ``tau = J b``; it is g^W-orthogonal to range(J) and
    symmetric.
    """
    m = metric(model, g, theta)
    H = m.J @ solve_spd(m.G, m.J.T @ m.K)
    if check:
        _require_tangent(H, sigma, "sigma")
        _require_tangent(H, tau, "tau")
    return _shape_operator(model, g, m, H, sigma, tau)


def curvature(model, g, theta, s1, s2, s3, s4, check=True):
    """``g(R(s1, s2) s3, s4)`` of the model, by the Gauss equation."""
    m = metric(model, g, theta)
    H = m.J @ solve_spd(m.G, m.J.T @ m.K)
    if check:
        for k, s in enumerate((s1, s2, s3, s4), 1):
            _require_tangent(H, s, f"sigma{k}")

    def B(a, b):
        return _shape_operator(model, g, m, H, a, b)

    return (ambient_curvature(g, m.p, m.K, s1, s2, s3, s4)
            + float(B(s1, s4) @ m.K @ B(s2, s3)) - float(B(s1, s3) @ m.K @ B(s2, s4)))


def curvature_closed_form(model, g, theta, s1, s2, s3, s4, connection_sign=-1.0):
    """Curvature via the expanded closed form in terms of ``m`` and ``n``.

    ``m(a, b)`` is the constant-field ambient connection scaled by
    ``connection_sign`` (``-1`` is the Levi-Civita sign).  The form treats
    the normal part of ``m`` as the second fundamental form, so it agrees
    with :func:`curvature` only for models that are affine in theta.
    """
    mt = metric(model, g, theta)
    p, K = mt.p, mt.K
    H = mt.J @ solve_spd(mt.G, mt.J.T @ K)
    P = np.eye(len(p)) - H
    Lp = laplacian_matrix(g, p)

    def m_(a, b):
        Ka, Kb = K @ a, K @ b
        return connection_sign * 0.5 * (laplacian_matrix(g, a) @ Kb + laplacian_matrix(g, b) @ Ka
                                        - Lp @ gamma_one(g, Ka, Kb))

    def n_(a, b):
        return laplacian_matrix(g, a) @ (K @ b) - laplacian_matrix(g, b) @ (K @ a)

    def q(a, M, b):
        return float(a @ K @ laplacian_matrix(g, M) @ K @ b)

    out = float(m_(s1, s4) @ P.T @ K @ P @ m_(s2, s3)) - float(m_(s1, s3) @ P.T @ K @ P @ m_(s2, s4))
    out += 0.5 * (q(s2, m_(s1, s3), s4) + q(s1, m_(s2, s4), s3)
                  - q(s2, m_(s1, s4), s3) - q(s1, m_(s2, s3), s4))
    out += 0.25 * (2 * float(n_(s1, s2) @ K @ n_(s3, s4)) + float(n_(s1, s3) @ K @ n_(s2, s4))
                   - float(n_(s2, s3) @ K @ n_(s1, s4)))
    return out


# ---------------------------------------------------------------- Hessians / convexity

def hessian_g(model, g, theta, F):
    """Riemannian Hessian of ``F(p(theta))`` in parameter coordinates.

    ``F`` needs ``grad(p)`` and ``hess(p)``.  Assembled as the ambient
    Hessian plus the second-fundamental-form correction ``B^T grad F``.
    """
    m = metric(model, g, theta)
    J, p, K = m.J, m.p, m.K
    gradF = F.grad(p)
    hessF = F.hess(p)
    H = J @ solve_spd(m.G, J.T @ K)
    d = model.dim
    out = J.T @ hessF @ J
    for a in range(d):
        D2 = model.d2p(theta, np.eye(d)[a])
        for b in range(a, d):
            c = connection(g, p, K, J[:, a], J[:, b])
            # ambient Hessian gives -gradF.c, the shape term adds gradF.(I-H)(d2p + c)
            w = D2[:, b]
            val = float(gradF @ (w - H @ w)) - float(gradF @ (H @ c))
            out[a, b] += val
            if b != a:
                out[b, a] += val
    return 0.5 * (out + out.T)


def displacement_convexity_gap(model, g, theta, phi, f, lam, project_potential=True):
    """Left side minus right side of the Gamma-calculus convexity inequality.

    The tangent vector ``L(p) phi`` is projected onto the model before the
    second fundamental form is taken.  With ``project_potential`` (default)
    the projected potential is used in the Gamma terms too, so the gap equals
    ``Hess_g F(v, v) - lam * g(v, v)`` for the projected tangent ``v`` and
    ``F = f . p``.
    """
    m = metric(model, g, theta)
    p, K, J = m.p, m.K, m.J
    f = np.asarray(f, dtype=float)
    phi = np.asarray(phi, dtype=float)
    H = J @ solve_spd(m.G, J.T @ K)
    V = H @ (laplacian_matrix(g, p) @ phi)
    psi = K @ V if project_potential else phi
    gff = gamma_one(g, psi, psi)
    t1 = p @ (gamma_one(g, gamma_one(g, f, psi), psi) - 0.5 * gamma_one(g, gff, f))
    t2 = f @ _shape_operator(model, g, m, H, V, V)
    t3 = lam * (gff @ p)
    return float(t1 + t2 - t3)


# ---------------------------------------------------------------- distance and flows

def _metric_quadratic_grad(model, g, theta, p, J, K, v):
    """Gradient in theta of ``v^T G(theta) v`` at fixed v, plus ``G v``."""
    phi = K @ (J @ v)
    dJ = model.d2p(theta, v)
    grad = 2.0 * (dJ.T @ phi) - J.T @ gamma_one(g, phi, phi)
    return grad, J.T @ phi


@dataclass
class ParameterPath:
    t: np.ndarray
    theta: np.ndarray
    momenta: np.ndarray
    report: dict

    def points(self, model):
        return np.array([model.p(th) for th in self.theta])


def parameter_action(model, g, Theta):
    """Discrete action ``sum dt v_k^T G(theta_bar_k) v_k`` and its gradient."""
    Theta = np.asarray(Theta, dtype=float)
    N = Theta.shape[0] - 1
    dt = 1.0 / N
    A = 0.0
    grad = np.zeros_like(Theta)
    momenta = np.empty((N, Theta.shape[1]))
    for k in range(N):
        tb = 0.5 * (Theta[k] + Theta[k + 1])
        v = (Theta[k + 1] - Theta[k]) / dt
        p = model.p(tb)
        J = model.jacobian(tb)
        K = laplacian(g, p).pinv
        gq, Gv = _metric_quadratic_grad(model, g, tb, p, J, K, v)
        A += dt * float(v @ Gv)
        momenta[k] = Gv
        grad[k + 1] += 2.0 * Gv + 0.5 * dt * gq
        grad[k] += -2.0 * Gv + 0.5 * dt * gq
    return A, grad, momenta


def parameter_distance(model, g, theta0, theta1, solver_cfg=None, init=None):
    """Geodesic distance in parameter space by the direct method.

    Returns ``(Dist, ParameterPath)``.
    """
    cfg = solver_cfg if isinstance(solver_cfg, SolverConfig) else SolverConfig.from_dict(solver_cfg)
    theta0, _ = _evaluate(model, theta0)
    theta1, _ = _evaluate(model, theta1)
    N = cfg.n_intervals
    t = np.linspace(0.0, 1.0, N + 1)
    if init is None:
        X0 = (1 - t)[:, None] * theta0[None, :] + t[:, None] * theta1[None, :]
    else:
        X0 = np.array(init, dtype=float)
        X0[0], X0[-1] = theta0, theta1
    for row in X0:
        _evaluate(model, row)

    def fun(X):
        A, G, _ = parameter_action(model, g, X)
        return A, G

    def valid(X):
        for row in X:
            if not model.in_domain(row):
                return False
            if model.p(row).min() < DELTA_INTERIOR:
                return False
        return True

    def wrap(sol):
        A, _, mom = parameter_action(model, g, sol.X)
        rep = {"Dist": float(np.sqrt(max(A, 0.0))), "iterations": int(sol.iterations),
               "action_history": [float(a) for a in sol.history], "converged": bool(sol.converged)}
        return ParameterPath(t, sol.X, mom, rep)

    try:
        sol = minimize_path(X0, fun, valid, cfg)
    except NonConvergence as exc:
        exc.last = wrap(exc.last)
        raise
    path = wrap(sol)
    return path.report["Dist"], path


def initial_parameter_momentum(path):
    m = path.momenta
    return m[0].copy() if m.shape[0] == 1 else 1.5 * m[0] - 0.5 * m[1]


@dataclass
class ParameterTrajectory:
    t: np.ndarray
    theta: np.ndarray
    S: np.ndarray
    theta_dot: np.ndarray
    H: np.ndarray

    @property
    def drift(self):
        h0 = self.H[0]
        return float(abs(self.H[-1] - h0) / h0) if h0 > 0 else float(abs(self.H[-1] - h0))

    def interpolant(self):
        """Callable ``t -> (theta, theta_dot)`` by cubic Hermite interpolation."""
        from scipy.interpolate import CubicHermiteSpline
        spl = CubicHermiteSpline(self.t, self.theta, self.theta_dot, axis=0)
        dspl = spl.derivative()
        return lambda s: (spl(s), dspl(s))


def parameter_geodesic_flow(model, g, theta0, S0, T=1.0, steps=1000):
    """RK4 for ``theta' = G^-1 S``, ``S' = -1/2 d/dtheta (S^T G^-1 S)``."""
    theta = np.asarray(theta0, dtype=float).copy()
    S = np.asarray(S0, dtype=float).copy()
    h = T / steps

    def rhs(theta, S):
        if not model.in_domain(theta):
            raise DomainEscape("geodesic flow left the parameter domain", theta=theta)
        m = metric(model, g, theta, check_rank=False)
        if m.p.min() < DELTA_INTERIOR:
            raise DomainEscape("geodesic flow reached the simplex boundary", theta=theta)
        if m.lambda_min < SINGULAR_TOL:
            raise SingularMetric(f"lambda_min(G) = {m.lambda_min:.3g}")
        v = solve_spd(m.G, S)
        gq, _ = _metric_quadratic_grad(model, g, theta, m.p, m.J, m.K, v)
        # d/dtheta (S^T G^-1 S) = -v^T dG v
        return v, 0.5 * gq, m.G

    ts = np.linspace(0.0, T, steps + 1)
    d = len(theta)
    TH = np.empty((steps + 1, d))
    SS = np.empty((steps + 1, d))
    TD = np.empty((steps + 1, d))
    HH = np.empty(steps + 1)
    v, _, G = rhs(theta, S)
    TH[0], SS[0], TD[0], HH[0] = theta, S, v, 0.5 * float(S @ v)
    for k in range(steps):
        k1t, k1s, _ = rhs(theta, S)
        k2t, k2s, _ = rhs(theta + 0.5 * h * k1t, S + 0.5 * h * k1s)
        k3t, k3s, _ = rhs(theta + 0.5 * h * k2t, S + 0.5 * h * k2s)
        k4t, k4s, _ = rhs(theta + h * k3t, S + h * k3s)
        theta = theta + h / 6 * (k1t + 2 * k2t + 2 * k3t + k4t)
        S = S + h / 6 * (k1s + 2 * k2s + 2 * k3s + k4s)
        v, _, G = rhs(theta, S)
        TH[k + 1], SS[k + 1], TD[k + 1], HH[k + 1] = theta, S, v, 0.5 * float(S @ v)
    return ParameterTrajectory(ts, TH, SS, TD, HH)


@dataclass
class TransportResult:
    t: np.ndarray
    coeffs: np.ndarray   # a_t with sigma_t = J(theta_t) a_t
    sigma: np.ndarray
    norms: np.ndarray

    @property
    def norm_drift(self):
        return float(abs(self.norms[-1] - self.norms[0]) / self.norms[0]) if self.norms[0] > 0 else 0.0


def parallel_transport(model, g, path, sigma0, T=1.0, steps=1000):
    """Parallel transport of a model tangent vector along ``path``.

    ``path`` is a callable ``t -> (theta, theta_dot)``.  The vector is kept
    as ``sigma_t = J(theta_t) a_t``; the tangential part of its derivative
    cancels the tangential part of the ambient covariant derivative, i.e.
    ``a' = -G^-1 J^T L^+ (J' a + nabla_{p'} (J a))``.
    """
    th0, _ = path(0.0)
    m0 = metric(model, g, th0)
    sigma0 = np.asarray(sigma0, dtype=float)
    H0 = m0.J @ solve_spd(m0.G, m0.J.T @ m0.K)
    _require_tangent(H0, sigma0)
    a = solve_spd(m0.G, m0.J.T @ m0.K @ sigma0)
    h = T / steps

    def rhs(t, a):
        th, thd = path(t)
        m = metric(model, g, th, check_rank=False)
        sig = m.J @ a
        pdot = m.J @ thd
        Jdot = model.d2p(th, thd)
        w = Jdot @ a + connection(g, m.p, m.K, pdot, sig)
        return -solve_spd(m.G, m.J.T @ m.K @ w)

    ts = np.linspace(0.0, T, steps + 1)
    A = np.empty((steps + 1, len(a)))
    A[0] = a
    for k in range(steps):
        t = ts[k]
        k1 = rhs(t, a)
        k2 = rhs(t + 0.5 * h, a + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, a + 0.5 * h * k2)
        k4 = rhs(t + h, a + h * k3)
        a = a + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        A[k + 1] = a
    sig = np.empty((steps + 1, model.n_states))
    norms = np.empty(steps + 1)
    for k, t in enumerate(ts):
        th, _ = path(t)
        m = metric(model, g, th, check_rank=False)
        sig[k] = m.J @ A[k]
        norms[k] = float(A[k] @ m.G @ A[k])
    return TransportResult(ts, A, sig, norms)

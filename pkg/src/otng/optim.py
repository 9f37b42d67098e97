"""Objectives and preconditioned gradient descent on parametric models.

Three preconditioners are available: ``euclidean`` (identity), ``fisher``
(``J^T diag(1/p) J``) and ``wasserstein`` (``G = J^T L(p)^+ J``).  The step
rules follow the usual recipe: a fixed step, an adaptive step that shrinks
by 3/4 whenever the objective fails to decrease, and Adam.
"""
import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryPoint, DomainEscape, InnerNonConvergence, MaxItersExceeded
from .graph import laplacian
from .manifold import metric, solve_spd
from .simplex import DELTA_INTERIOR, fmt

PRECONDITIONERS = ("euclidean", "fisher", "wasserstein")


# ---------------------------------------------------------------- objectives

@dataclass
class Objective:
    """A smooth function of ``p`` with gradient and Hessian in ambient coordinates."""

    name: str
    value: object
    grad: object
    hess: object = None
    q: np.ndarray = None


def kl_objective(q):
    """``KL(q || p) = sum q log(q / p)``, with ``0 log 0 = 0``."""
    q = np.asarray(q, dtype=float)
    support = q > 0

    def value(p):
        p = np.asarray(p, dtype=float)
        if np.any(p[support] <= 0):
            raise BoundaryPoint("KL needs p > 0 on the support of q")
        return float(np.sum(q[support] * (np.log(q[support]) - np.log(p[support]))))

    def grad(p):
        return -q / np.asarray(p, dtype=float)

    def hess(p):
        return np.diag(q / np.asarray(p, dtype=float) ** 2)

    return Objective("kl", value, grad, hess, q)


def expectation_objective(f):
    """Stochastic relaxation ``F(p) = sum f_i p_i``."""
    f = np.asarray(f, dtype=float)
    return Objective("expectation", lambda p: float(f @ p), lambda p: f.copy(),
                     lambda p: np.zeros((len(f), len(f))))


# ---------------------------------------------------------------- directions

def preconditioner_matrix(model, g, theta, kind, J=None, p=None):
    """The matrix ``P(theta)`` of the named preconditioner."""
    if J is None:
        J = model.jacobian(theta)
    if p is None:
        p = model.p(theta)
    if kind == "euclidean":
        return np.eye(model.dim)
    if kind == "fisher":
        return J.T @ (J / p[:, None])
    if kind == "wasserstein":
        K = laplacian(g, p).pinv
        return J.T @ K @ J
    raise ValueError(f"unknown preconditioner {kind!r}")


def natural_direction(model, g, theta, obj, kind):
    """Return ``(v, grad_theta, p)`` with ``v = P(theta)^-1 grad_theta``."""
    theta = np.asarray(theta, dtype=float)
    if not model.in_domain(theta):
        raise DomainEscape(f"theta={theta} outside the model domain", theta=theta)
    p = model.p(theta)
    if p.min() < DELTA_INTERIOR:
        raise DomainEscape("p(theta) reached the simplex boundary", theta=theta)
    J = model.jacobian(theta)
    gt = J.T @ obj.grad(p)
    if kind == "euclidean":
        return gt, gt, p
    P = preconditioner_matrix(model, g, theta, kind, J, p)
    return solve_spd(P, gt), gt, p


def natural_gradient_step(model, g, theta, obj, preconditioner, gamma):
    """One step ``theta - gamma P(theta)^-1 J^T grad_p F``."""
    v, _, _ = natural_direction(model, g, theta, obj, preconditioner)
    return np.asarray(theta, dtype=float) - gamma * v


def _safe_value(model, obj, theta):
    if not model.in_domain(theta):
        return None
    p = model.p(theta)
    if not np.all(np.isfinite(p)) or p.min() < DELTA_INTERIOR:
        return None
    return obj.value(p)


# ---------------------------------------------------------------- step rules

@dataclass
class StepRule:
    """``fixed``, ``adaptive`` (shrink by ``factor`` on failure) or ``adam``."""

    kind: str = "adaptive"
    gamma0: float = 1e-3
    factor: float = 0.75
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    min_gamma: float = 1e-300

    def __post_init__(self):
        if self.kind not in ("fixed", "adaptive", "adam"):
            raise ValueError(f"unknown step rule {self.kind!r}")
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in (d or {}).items() if k in cls.__dataclass_fields__})


@dataclass
class StopRule:
    """Stopping criteria: moment matching (if ``target_moments`` given), gradient norm, iterations.

    Moments are ``features^T p``; ``features`` defaults to the model's own
    sufficient statistics.
    """

    max_iters: int = 50000
    gtol: float = 1e-8
    target_moments: np.ndarray = None
    moment_tol: float = 0.01
    features: np.ndarray = None

    def moments_matched(self, model, p):
        if self.target_moments is None:
            return False
        F = model.features if self.features is None else self.features
        err = np.max(np.abs(F.T @ p - self.target_moments))
        return bool(err <= self.moment_tol * max(1.0, np.max(np.abs(self.target_moments))))


def moment_stop(model, q, features=None, **kw):
    """Stop rule matching ``E_p[phi]`` to ``E_q[phi]`` within 1 percent.

    Pass ``features`` to measure the match in a different set of statistics
    (e.g. the character basis for a monomial-basis model).
    """
    F = model.features if features is None else np.asarray(features, dtype=float)
    return StopRule(target_moments=F.T @ np.asarray(q, dtype=float), features=F, **kw)


@dataclass
class OptimizerTrace:
    theta: list = field(default_factory=list)
    p: list = field(default_factory=list)
    D: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    wall: list = field(default_factory=list)
    status: str = "running"

    @property
    def iters(self):
        return len(self.D) - 1

    @property
    def final_D(self):
        return self.D[-1]

    def auc_norm(self):
        """``sum_{t=1}^T (D_t - D_T) / (D_0 - D_T)``; 0 for traces that never moved."""
        D = np.asarray(self.D)
        den = D[0] - D[-1]
        if len(D) < 2 or den == 0:
            return 0.0
        return float(np.sum(D[1:] - D[-1]) / den)

    def summary(self):
        return {"iters": self.iters, "final_D": float(self.final_D),
                "auc_norm": self.auc_norm(), "status": self.status}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "D", "gamma", "grad_norm"])
            for k, (d, gm, gn) in enumerate(zip(self.D, self.gamma, self.grad_norm)):
                w.writerow([k, fmt(d), fmt(gm), fmt(gn)])

    def write_summary(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def run_descent(model, g, theta0, obj, preconditioner, step_rule=None, stop=None,
                raise_on_max=False, record_points=False):
    """Iterate preconditioned gradient steps until a stop rule fires.

    Rejected steps (objective not decreased under the adaptive rule, or the
    trial point leaves the domain under any rule) shrink the step by
    ``step_rule.factor`` and are retried without counting as iterations.
    """
    rule = step_rule or StepRule()
    stop = stop or StopRule()
    theta = np.asarray(theta0, dtype=float).copy()
    trace = OptimizerTrace()
    t0 = time.perf_counter()
    gamma = rule.gamma0
    m = np.zeros_like(theta)
    s = np.zeros_like(theta)

    v, gt, p = natural_direction(model, g, theta, obj, preconditioner)
    D = obj.value(p)

    def record(theta, p, D, gamma, gn):
        trace.theta.append(theta.copy())
        if record_points:
            trace.p.append(p.copy())
        trace.D.append(float(D))
        trace.gamma.append(float(gamma))
        trace.grad_norm.append(float(gn))
        trace.wall.append(time.perf_counter() - t0)

    record(theta, p, D, gamma, np.linalg.norm(gt))
    k = 0
    while True:
        if stop.moments_matched(model, p):
            trace.status = "moments"
            break
        if np.linalg.norm(gt) <= stop.gtol:
            trace.status = "gtol"
            break
        if k >= stop.max_iters:
            trace.status = "max_iters"
            break
        if rule.kind == "adam":
            mt = rule.beta1 * m + (1 - rule.beta1) * v
            st = rule.beta2 * s + (1 - rule.beta2) * v * v
            mh = mt / (1 - rule.beta1 ** (k + 1))
            sh = st / (1 - rule.beta2 ** (k + 1))
            direction = mh / (np.sqrt(sh) + rule.eps)
        else:
            direction = v
        while True:
            trial = theta - gamma * direction
            Dt = _safe_value(model, obj, trial)
            ok = Dt is not None and np.isfinite(Dt)
            if ok and rule.kind == "adaptive":
                ok = Dt < D
            if ok:
                break
            gamma *= rule.factor
            if gamma < rule.min_gamma:
                trace.status = "stalled"
                break
        if trace.status == "stalled":
            break
        if rule.kind == "adam":
            m, s = mt, st
        theta = trial
        k += 1
        v, gt, p = natural_direction(model, g, theta, obj, preconditioner)
        D = Dt
        record(theta, p, D, gamma, np.linalg.norm(gt))
    if trace.status == "max_iters" and raise_on_max:
        exc = MaxItersExceeded(f"no convergence in {stop.max_iters} iterations", last=trace)
        raise exc
    return trace


# ---------------------------------------------------------------- JKO

def euclidean_hessian(model, theta, obj):
    """Coordinate Hessian of ``F(p(theta))``."""
    p = model.p(theta)
    J = model.jacobian(theta)
    gp = obj.grad(p)
    Hm = J.T @ obj.hess(p) @ J
    for a in range(model.dim):
        e = np.zeros(model.dim)
        e[a] = 1.0
        Hm[a] += model.d2p(theta, e).T @ gp
    return 0.5 * (Hm + Hm.T)


def jko_step(model, g, theta_k, obj, lam, gtol=1e-8, max_iter=100, exact_distance=False):
    """Proximal step ``argmin F(p(theta)) + Dist(theta, theta_k)^2 / (2 lam)``.

    By default ``Dist^2`` is replaced by its quadratic model
    ``(theta - theta_k)^T G(theta_k) (theta - theta_k)``, and the inner
    problem is solved by damped Newton.  The gradient tolerance is raised to
    the rounding floor of the proximal term when ``lam`` is tiny.  ``exact_distance`` polishes the
    result with the full geodesic distance (slow).
    """
    theta_k = np.asarray(theta_k, dtype=float)
    Gk = metric(model, g, theta_k).G

    def prox(theta):
        dtheta = theta - theta_k
        return float(dtheta @ Gk @ dtheta) / (2 * lam)

    def total(theta):
        val = _safe_value(model, obj, theta)
        return None if val is None else val + prox(theta)

    theta = theta_k.copy()
    f = total(theta)
    converged = False
    for _ in range(max_iter):
        p = model.p(theta)
        gF = model.jacobian(theta).T @ obj.grad(p)
        grad = gF + Gk @ (theta - theta_k) / lam
        # the proximal term cannot be evaluated more accurately than this
        floor = 64 * np.finfo(float).eps * (np.linalg.norm(gF) + np.linalg.norm(Gk, 2)
                                            * (np.linalg.norm(theta) + np.linalg.norm(theta_k)) / lam)
        if np.linalg.norm(grad) <= max(gtol, floor):
            converged = True
            break
        Hm = euclidean_hessian(model, theta, obj) + Gk / lam
        w = np.linalg.eigvalsh(Hm)
        if w[0] <= 1e-12 * max(abs(w[-1]), 1.0):
            Hm = Hm + (abs(w[0]) + 1e-8 * max(abs(w[-1]), 1.0)) * np.eye(model.dim)
        step = -np.linalg.solve(Hm, grad)
        t = 1.0
        slope = float(grad @ step)
        accepted = False
        for _ in range(60):
            trial = theta + t * step
            ft = total(trial)
            # allow for rounding in f once the predicted decrease is below it
            if ft is not None and ft <= f + 1e-4 * t * slope + 16 * np.finfo(float).eps * abs(f):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # the model cannot decrease any further at this precision
            converged = np.linalg.norm(grad) <= 1e3 * max(gtol, floor)
            break
        theta, f = trial, ft
    if not converged:
        raise InnerNonConvergence("JKO inner solve did not reach gtol", last=theta)
    if exact_distance:
        from scipy.optimize import minimize
        from .manifold import parameter_distance

        def exact(th):
            val = _safe_value(model, obj, th)
            if val is None:
                return np.inf
            d, _ = parameter_distance(model, g, theta_k, th)
            return val + d * d / (2 * lam)

        res = minimize(exact, theta, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 400})
        theta = res.x
    return theta


# ---------------------------------------------------------------- vector fields

def vector_field_scan(model, g, obj, grid, preconditioner, delta=1e-6):
    """Negative preconditioned gradient at every point of a 2-D grid.

    ``grid`` is a 1-D array of coordinates used on both axes, or an explicit
    (m, d) array of points.  Returns an array with columns
    ``theta_1..theta_d, v_1..v_d``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        pts = np.array([[x, y] for x in grid for y in grid])
    else:
        pts = grid
    pts = np.clip(pts, delta, 1 - delta)
    rows = []
    for th in pts:
        v, _, _ = natural_direction(model, g, th, obj, preconditioner)
        rows.append(np.r_[th, -v])
    return np.array(rows)

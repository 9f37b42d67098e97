"""Concrete models and ground-metric graphs.

Binary states ``x in {0,1}^n`` are ordered lexicographically with ``x_1``
the most significant bit, so state index ``k`` has ``x_i = (k >> (n-i)) & 1``.
The two-bit square graph uses states ``a, b, c, d = 00, 01, 10, 11``
(reading -1 as 0 and +1 as 1).
"""
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import NotInclusionClosed, TooManyBits
from .graph import WeightedGraph
from .manifold import ParametricModel

MAX_BITS = 10
XI_CLIP = 1e-6


# ---------------------------------------------------------------- graphs

def path_graph(n, weight=1.0):
    """Path ``0 - 1 - ... - n-1``; ``weight`` is a scalar or per-edge sequence."""
    w = np.broadcast_to(np.asarray(weight, dtype=float), (n - 1,))
    return WeightedGraph(n, [(i, i + 1, w[i]) for i in range(n - 1)])


def square_graph(w_ab=1.0, w_bd=1.0, w_ac=1.0, w_cd=1.0):
    """4-cycle a-b-d-c-a on states (a, b, c, d) = (0, 1, 2, 3)."""
    return WeightedGraph(4, [(0, 1, w_ab), (1, 3, w_bd), (0, 2, w_ac), (2, 3, w_cd)],
                         labels=["a", "b", "c", "d"])


def binary_states(n):
    k = np.arange(2 ** n)
    return ((k[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1).astype(np.int64)


def hypercube_graph(n, weight=1.0):
    """Binary n-cube: strings at Hamming distance one are adjacent."""
    if n > MAX_BITS:
        raise TooManyBits(f"n={n} exceeds {MAX_BITS}")
    edges = []
    for k in range(2 ** n):
        for b in range(n):
            m = k ^ (1 << b)
            if m > k:
                edges.append((k, m, weight))
    return WeightedGraph(2 ** n, edges)


# ---------------------------------------------------------------- simple charts

class SimplexChart(ParametricModel):
    """The whole open simplex, coordinates are all ``p_i`` except ``p_dependent``."""

    def __init__(self, n, dependent=None):
        self.n_states = n
        self.dim = n - 1
        self.dependent = n - 1 if dependent is None else dependent
        self.free = [i for i in range(n) if i != self.dependent]
        J = np.zeros((n, n - 1))
        for c, i in enumerate(self.free):
            J[i, c] = 1.0
            J[self.dependent, c] = -1.0
        self._J = J
        self.name = f"simplex{n}"

    def p(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.empty(self.n_states)
        out[self.free] = theta
        out[self.dependent] = 1.0 - theta.sum()
        return out

    def in_domain(self, theta):
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta > 0) and theta.sum() < 1)

    def jacobian(self, theta):
        return self._J.copy()

    def d2p(self, theta, v):
        return np.zeros((self.n_states, self.dim))

    def theta_of(self, p):
        return np.asarray(p, dtype=float)[self.free]


def simplex_chart(n, dependent=None):
    return SimplexChart(n, dependent)


def _softmax(z):
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


class ExponentialFamily(ParametricModel):
    """``p_x(theta) ∝ exp(features[x] . theta)`` with dense summation."""

    def __init__(self, features, name="expfam"):
        self.features = np.asarray(features, dtype=float)
        self.n_states, self.dim = self.features.shape
        self.name = name

    def p(self, theta):
        return _softmax(self.features @ np.asarray(theta, dtype=float))

    def expectations(self, theta=None, p=None):
        """Expectation parameters ``E_p[phi_lambda]``."""
        if p is None:
            p = self.p(theta)
        return self.features.T @ p

    def jacobian(self, theta):
        p = self.p(theta)
        mu = self.features.T @ p
        return p[:, None] * (self.features - mu[None, :])

    def d2p(self, theta, v):
        p = self.p(theta)
        F = self.features
        mu = F.T @ p
        Fc = F - mu[None, :]
        s = Fc @ np.asarray(v, dtype=float)          # d log p_x along v
        dp = p * s
        dmu = F.T @ dp
        return dp[:, None] * Fc - p[:, None] * dmu[None, :]

    def log_partition(self, theta):
        z = self.features @ np.asarray(theta, dtype=float)
        zmax = z.max()
        return float(zmax + np.log(np.exp(z - zmax).sum()))


class ThreeStateExponential(ExponentialFamily):
    """Exponential chart on three states: ``p = (e^t1, 1, e^t2) / Z``."""

    def __init__(self):
        super().__init__(np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]), name="three_state")

    def theta_of(self, p):
        p = np.asarray(p, dtype=float)
        return np.array([np.log(p[0] / p[1]), np.log(p[2] / p[1])])


def three_state_model():
    return ThreeStateExponential()


class TwoBitIndependence(ParametricModel):
    """Product of two Bernoulli marginals ``xi = (P(x1=1), P(x2=1))``."""

    n_states = 4
    dim = 2
    name = "independence"

    def __init__(self, clip=XI_CLIP):
        self.clip = clip

    def in_domain(self, theta):
        xi = np.asarray(theta, dtype=float)
        return bool(np.all(xi >= self.clip) and np.all(xi <= 1 - self.clip))

    def p(self, xi):
        x1, x2 = np.asarray(xi, dtype=float)
        return np.array([(1 - x1) * (1 - x2), (1 - x1) * x2, x1 * (1 - x2), x1 * x2])

    def jacobian(self, xi):
        x1, x2 = np.asarray(xi, dtype=float)
        return np.array([[-(1 - x2), -(1 - x1)],
                         [-x2, 1 - x1],
                         [1 - x2, -x1],
                         [x2, x1]])

    def d2p(self, xi, v):
        v1, v2 = np.asarray(v, dtype=float)
        return np.array([[v2, v1], [-v2, -v1], [-v2, -v1], [v2, v1]])


def independence_model(clip=XI_CLIP):
    return TwoBitIndependence(clip)


# ---------------------------------------------------------------- hierarchical models

def k_interaction_set(n, k):
    """All nonempty subsets of ``{0..n-1}`` with at most ``k`` elements."""
    out = []
    for size in range(1, k + 1):
        out.extend(itertools.combinations(range(n), size))
    return out


def is_inclusion_closed(S):
    Sset = {frozenset(s) for s in S}
    for s in Sset:
        for r in range(1, len(s)):
            for sub in itertools.combinations(sorted(s), r):
                if frozenset(sub) not in Sset:
                    return False
    return True


def character_features(n, S):
    """``sigma_lambda(x) = prod_{i in lambda} (-1)^{x_i}``."""
    X = binary_states(n)
    return np.stack([np.prod(1 - 2 * X[:, list(lam)], axis=1) for lam in S], axis=1).astype(float)


def monomial_features(n, S):
    """``pi_lambda(x) = prod_{i in lambda} x_i``."""
    X = binary_states(n)
    return np.stack([np.prod(X[:, list(lam)], axis=1) for lam in S], axis=1).astype(float)


class HierarchicalLogLinear(ExponentialFamily):
    """Hierarchical log-linear model on ``n`` binary variables."""

    def __init__(self, n, S, basis="sigma"):
        if n > MAX_BITS:
            raise TooManyBits(f"n={n} exceeds {MAX_BITS}")
        S = [tuple(sorted(s)) for s in S]
        if any(len(s) == 0 for s in S):
            raise ValueError("the empty interaction is not a parameter")
        if any(i < 0 or i >= n for s in S for i in s):
            raise ValueError("interaction index out of range")
        if len(set(S)) != len(S):
            raise ValueError("duplicate interaction")
        if not is_inclusion_closed(S):
            raise NotInclusionClosed("interaction set must be closed under taking subsets")
        if basis not in ("sigma", "pi"):
            raise ValueError("basis must be 'sigma' or 'pi'")
        feats = character_features(n, S) if basis == "sigma" else monomial_features(n, S)
        super().__init__(feats, name=f"hier_n{n}_{basis}")
        self.n_bits = n
        self.S = S
        self.basis = basis


def hierarchical_model(n, k=None, S=None, basis="sigma"):
    """Hierarchical model from ``k`` (all interactions up to order k) or an explicit ``S``."""
    if (k is None) == (S is None):
        raise ValueError("give exactly one of k or S")
    if S is None:
        if not 1 <= k <= n:
            raise ValueError(f"k must be in 1..{n}")
        S = k_interaction_set(n, k)
    return HierarchicalLogLinear(n, S, basis)


def convert_parameters(src, dst, theta):
    """Parameters of ``dst`` giving the same distribution as ``src`` at ``theta``.

    Both models must span the same log-linear space (same S, any basis).
    """
    X = np.column_stack([dst.features, np.ones(dst.n_states)])
    z = src.features @ np.asarray(theta, dtype=float)
    sol, *_ = np.linalg.lstsq(X, z, rcond=None)
    return sol[:-1]


# ---------------------------------------------------------------- targets

@dataclass
class EmpiricalTarget:
    q: np.ndarray
    seed: int = None
    meta: dict = field(default_factory=dict)


def dirichlet_target(n_states, seed):
    """Uniform-Dirichlet draw (normalized i.i.d. unit exponentials), reproducible per seed."""
    rng = np.random.default_rng(seed)
    e = rng.standard_exponential(n_states)
    return EmpiricalTarget(e / e.sum(), seed, {"distribution": "dirichlet(1)"})


# ---------------------------------------------------------------- JSON model specs

def model_from_spec(spec):
    """Build a model from ``{"type": ..., ...}``.

    Types: ``hierarchical`` (n, k or S, basis), ``independence``,
    ``three_state``, ``simplex`` (n, dependent).
    """
    t = spec.get("type")
    if t == "hierarchical":
        S = spec.get("S")
        return hierarchical_model(spec["n"], k=spec.get("k") if S is None else None,
                                  S=S, basis=spec.get("basis", "sigma"))
    if t == "independence":
        return independence_model(spec.get("clip", XI_CLIP))
    if t == "three_state":
        return three_state_model()
    if t == "simplex":
        return simplex_chart(spec["n"], spec.get("dependent"))
    raise ValueError(f"unknown model type {t!r}")


def graph_from_spec(spec):
    """Graph from ``{"type": "path"|"square"|"hypercube", ...}`` or the raw ``{"n", "edges"}`` form."""
    if "edges" in spec:
        return WeightedGraph.from_dict(spec)
    t = spec.get("type")
    if t == "path":
        return path_graph(spec["n"], spec.get("weight", 1.0))
    if t == "square":
        return square_graph(**{k: spec[k] for k in ("w_ab", "w_bd", "w_ac", "w_cd") if k in spec})
    if t == "hypercube":
        return hypercube_graph(spec["n"], spec.get("weight", 1.0))
    raise ValueError(f"unknown graph type {t!r}")

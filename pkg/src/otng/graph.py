"""Weighted graphs and the calculus on them.

Edge weights ``w_ij > 0`` encode the ground metric as ``w_ij = 1 / d_ij**2``.
Every edge is stored once, oriented so that ``i > j``; this fixes the signs
of the incidence matrix but nothing downstream depends on it.
"""
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from . import _kernels
from .errors import DisconnectedGraph, GraphError

#: relative factor in the zero-eigenvalue threshold ``tau = EIG_RTOL * lambda_max * n``
EIG_RTOL = 1e-10


class WeightedGraph:
    """Undirected, connected graph with positive edge weights.

    Parameters
    ----------
    n : int
        Number of vertices, labelled ``0..n-1``.
    edges : iterable of (i, j, w)
        Unordered edges with weight ``w > 0``.  Each pair may appear once.
    """

    def __init__(self, n, edges, labels=None):
        n = int(n)
        if n < 1:
            raise GraphError("graph needs at least one vertex")
        seen = {}
        for e in edges:
            if len(e) != 3:
                raise GraphError(f"edge {e!r} is not a (i, j, weight) triple")
            i, j, w = int(e[0]), int(e[1]), float(e[2])
            if not (0 <= i < n and 0 <= j < n):
                raise GraphError(f"edge ({i}, {j}) out of range for n={n}")
            if i == j:
                raise GraphError(f"self-loop at vertex {i}")
            if not (w > 0 and np.isfinite(w)):
                raise GraphError(f"edge ({i}, {j}) has non-positive weight {w}")
            key = (max(i, j), min(i, j))
            if key in seen:
                if seen[key] != w:
                    raise GraphError(f"asymmetric weights on edge {key}")
                raise GraphError(f"duplicate edge {key}")
            seen[key] = w
        keys = sorted(seen)
        self.n = n
        self.ei = np.array([k[0] for k in keys], dtype=np.int64)
        self.ej = np.array([k[1] for k in keys], dtype=np.int64)
        self.weights = np.array([seen[k] for k in keys], dtype=float)
        self.labels = list(labels) if labels is not None else None
        for arr in (self.ei, self.ej, self.weights):
            arr.setflags(write=False)
        if n > 1:
            ncomp, _ = connected_components(self._adjacency(self.weights), directed=False)
            if ncomp != 1:
                raise DisconnectedGraph(f"graph has {ncomp} connected components")

    # ------------------------------------------------------------------ basics
    @property
    def n_edges(self):
        return len(self.weights)

    @property
    def edges(self):
        return [(int(i), int(j), float(w)) for i, j, w in zip(self.ei, self.ej, self.weights)]

    def _adjacency(self, values):
        return csr_matrix((np.r_[values, values], (np.r_[self.ei, self.ej], np.r_[self.ej, self.ei])),
                          shape=(self.n, self.n))

    @cached_property
    def weight_matrix(self):
        """Dense symmetric matrix of weights, zero off the edge set."""
        W = np.zeros((self.n, self.n))
        W[self.ei, self.ej] = self.weights
        W[self.ej, self.ei] = self.weights
        W.setflags(write=False)
        return W

    @cached_property
    def neighbors(self):
        nb = [[] for _ in range(self.n)]
        for i, j in zip(self.ei, self.ej):
            nb[i].append(int(j))
            nb[j].append(int(i))
        return [sorted(x) for x in nb]

    def has_edge(self, i, j):
        return self.weight_matrix[i, j] > 0

    @cached_property
    def shortest_paths(self):
        """All-pairs shortest path lengths with edge length ``1/sqrt(w)``."""
        return dijkstra(self._adjacency(1.0 / np.sqrt(self.weights)), directed=False)

    def scaled(self, c):
        """Copy with every weight multiplied by ``c``."""
        return WeightedGraph(self.n, [(i, j, w * c) for i, j, w in self.edges], self.labels)

    def __repr__(self):
        return f"WeightedGraph(n={self.n}, edges={self.n_edges})"

    def __eq__(self, other):
        return (isinstance(other, WeightedGraph) and self.n == other.n
                and np.array_equal(self.ei, other.ei) and np.array_equal(self.ej, other.ej)
                and np.array_equal(self.weights, other.weights))

    __hash__ = None

    # ------------------------------------------------------------------ JSON
    def to_dict(self):
        return {"n": self.n, "edges": [[i, j, w] for i, j, w in self.edges]}

    @classmethod
    def from_dict(cls, data):
        try:
            n = data["n"]
            edges = data["edges"]
        except (KeyError, TypeError) as exc:
            raise GraphError(f"graph JSON must have 'n' and 'edges': {exc}") from None
        return cls(n, edges)

    def dumps(self):
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


def load_graph(path):
    with open(path) as fh:
        return WeightedGraph.from_dict(json.load(fh))


def save_graph(graph, path):
    with open(path, "w") as fh:
        json.dump(graph.to_dict(), fh)


# ---------------------------------------------------------------------- operators

def incidence_matrix(g):
    """Discrete gradient ``D`` (|E| x n): ``+sqrt(w)`` at column i, ``-sqrt(w)`` at j, i > j."""
    D = np.zeros((g.n_edges, g.n))
    rows = np.arange(g.n_edges)
    s = np.sqrt(g.weights)
    D[rows, g.ei] = s
    D[rows, g.ej] = -s
    return D


def laplacian_matrix(g, a):
    """``L(a) = D^T diag((a_i + a_j)/2) D`` for an arbitrary vector ``a``.

    No sign condition on ``a``; the second fundamental form evaluates
    ``L`` at tangent (zero-sum) vectors.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (g.n,):
        raise ValueError(f"expected vector of length {g.n}, got shape {a.shape}")
    return _kernels.laplacian(g.n, g.ei, g.ej, g.weights, a)


@dataclass(frozen=True)
class SpectralLaplacian:
    """``L(a)`` together with its eigendecomposition and pseudo-inverse."""

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    pinv: np.ndarray
    tol: float
    rank: int = field(default=0)

    @property
    def lambda1(self):
        """Smallest nonzero eigenvalue (spectral gap)."""
        return float(self.eigenvalues[self.eigenvalues.size - self.rank]) if self.rank else 0.0

    def solve(self, sigma):
        """Mean-zero solution of ``L phi = sigma`` (i.e. ``L^+ sigma``)."""
        return self.pinv @ sigma


def laplacian(g, a):
    """Build :class:`SpectralLaplacian` for ``L(a)``.

    Eigenvalues below ``tau = 1e-10 * lambda_max * n`` are treated as zero
    and left out of the pseudo-inverse.

    Raises
    ------
    DisconnectedGraph
        If ``a`` is strictly positive but ``L(a)`` has more than one zero
        eigenvalue.
    """
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise ValueError("laplacian weights must be nonnegative")
    L = laplacian_matrix(g, a)
    evals, evecs = np.linalg.eigh(L)
    lam_max = max(float(evals[-1]), 0.0)
    tau = EIG_RTOL * lam_max * g.n
    nonzero = evals > tau
    rank = int(nonzero.sum())
    if np.all(a > 0) and g.n > 1 and rank < g.n - 1:
        raise DisconnectedGraph(f"L(a) has {g.n - rank} zero eigenvalues; expected 1")
    inv = np.zeros_like(evals)
    inv[nonzero] = 1.0 / evals[nonzero]
    pinv = (evecs * inv) @ evecs.T
    pinv = 0.5 * (pinv + pinv.T)
    for arr in (L, evals, evecs, pinv):
        arr.setflags(write=False)
    return SpectralLaplacian(L, evals, evecs, pinv, tau, rank)


@dataclass(frozen=True)
class GraphVectorField:
    """Skew-symmetric edge function; ``values[e]`` is ``v_ij`` for edge e with i > j."""

    graph: WeightedGraph
    values: np.ndarray

    def __getitem__(self, ij):
        i, j = ij
        if not self.graph.has_edge(i, j):
            return 0.0
        hit = np.flatnonzero((self.graph.ei == max(i, j)) & (self.graph.ej == min(i, j)))[0]
        v = float(self.values[hit])
        return v if i > j else -v

    def matrix(self):
        M = np.zeros((self.graph.n, self.graph.n))
        M[self.graph.ei, self.graph.ej] = self.values
        M[self.graph.ej, self.graph.ei] = -self.values
        return M


def grad_G(g, phi):
    """Graph gradient ``sqrt(w_ij) (phi_i - phi_j)`` on every edge."""
    phi = np.asarray(phi, dtype=float)
    return GraphVectorField(g, np.sqrt(g.weights) * (phi[g.ei] - phi[g.ej]))


def div_G(g, p, phi):
    """``-div_G(p grad_G phi)``: i-th entry ``sum_j w_ij (phi_i - phi_j)(p_i + p_j)/2``.

    Computed edge by edge (flux form), independently of :func:`laplacian_matrix`.
    """
    p = np.asarray(p, dtype=float)
    phi = np.asarray(phi, dtype=float)
    flux = g.weights * (phi[g.ei] - phi[g.ej]) * 0.5 * (p[g.ei] + p[g.ej])
    out = np.zeros(g.n)
    np.add.at(out, g.ei, flux)
    np.add.at(out, g.ej, -flux)
    return out


def gamma_one(g, phi, psi):
    """Carré du champ ``Gamma(phi, psi)_i = 1/2 sum_j w_ij (phi_i-phi_j)(psi_i-psi_j)``."""
    return _kernels.gamma(g.n, g.ei, g.ej, g.weights,
                          np.asarray(phi, dtype=float), np.asarray(psi, dtype=float))


def pairing_p(g, p, phi, psi):
    """Expected kinetic pairing ``phi^T L(p) psi``."""
    return float(np.asarray(phi, dtype=float) @ laplacian_matrix(g, p) @ np.asarray(psi, dtype=float))

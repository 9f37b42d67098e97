"""Edge-loop kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import.  Set ``OTNG_NUMBA=0`` to force the
numpy implementation (useful for debugging or when numba is unavailable).
Both implementations are always importable as ``*_py`` / ``*_jit`` so they
can be compared directly.
"""
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and os.environ.get("OTNG_NUMBA", "1").lower() not in ("0", "false", "no")


# --------------------------------------------------------------------------- numpy

def laplacian_py(n, ei, ej, w, a):
    lam = w * 0.5 * (a[ei] + a[ej])
    L = np.zeros((n, n))
    np.add.at(L, (ei, ei), lam)
    np.add.at(L, (ej, ej), lam)
    np.add.at(L, (ei, ej), -lam)
    np.add.at(L, (ej, ei), -lam)
    return L


def gamma_py(n, ei, ej, w, x, y):
    prod = 0.5 * w * (x[ei] - x[ej]) * (y[ei] - y[ej])
    out = np.zeros(n)
    np.add.at(out, ei, prod)
    np.add.at(out, ej, prod)
    return out


def segment_duals_py(n, ei, ej, w, pbar, sig):
    """Solve L(pbar_k) phi_k = sig_k for every row k (mean-zero solutions).

    Returns (phi, energy, gam) where energy_k = sig_k . phi_k and
    gam_k = Gamma(phi_k, phi_k).
    """
    m = pbar.shape[0]
    lam = w[None, :] * 0.5 * (pbar[:, ei] + pbar[:, ej])
    A = np.zeros((m, n, n))
    rows = np.arange(m)[:, None]
    np.add.at(A, (rows, ei[None, :], ei[None, :]), lam)
    np.add.at(A, (rows, ej[None, :], ej[None, :]), lam)
    np.add.at(A, (rows, ei[None, :], ej[None, :]), -lam)
    np.add.at(A, (rows, ej[None, :], ei[None, :]), -lam)
    A += 1.0 / n
    phi = np.linalg.solve(A, sig[:, :, None])[:, :, 0]
    phi -= phi.mean(axis=1, keepdims=True)
    energy = np.einsum("ij,ij->i", sig, phi)
    diff = phi[:, ei] - phi[:, ej]
    prod = 0.5 * w[None, :] * diff * diff
    gam = np.zeros((m, n))
    np.add.at(gam, (rows, ei[None, :]), prod)
    np.add.at(gam, (rows, ej[None, :]), prod)
    return phi, energy, gam


# --------------------------------------------------------------------------- numba

if numba is not None:

    @numba.njit(cache=True)
    def laplacian_jit(n, ei, ej, w, a):
        L = np.zeros((n, n))
        for e in range(ei.shape[0]):
            i = ei[e]
            j = ej[e]
            lam = w[e] * 0.5 * (a[i] + a[j])
            L[i, i] += lam
            L[j, j] += lam
            L[i, j] -= lam
            L[j, i] -= lam
        return L

    @numba.njit(cache=True)
    def gamma_jit(n, ei, ej, w, x, y):
        out = np.zeros(n)
        for e in range(ei.shape[0]):
            i = ei[e]
            j = ej[e]
            v = 0.5 * w[e] * (x[i] - x[j]) * (y[i] - y[j])
            out[i] += v
            out[j] += v
        return out

    @numba.njit(cache=True)
    def segment_duals_jit(n, ei, ej, w, pbar, sig):
        m = pbar.shape[0]
        phi = np.empty((m, n))
        energy = np.empty(m)
        gam = np.zeros((m, n))
        A = np.empty((n, n))
        for k in range(m):
            A[:, :] = 1.0 / n
            for e in range(ei.shape[0]):
                i = ei[e]
                j = ej[e]
                lam = w[e] * 0.5 * (pbar[k, i] + pbar[k, j])
                A[i, i] += lam
                A[j, j] += lam
                A[i, j] -= lam
                A[j, i] -= lam
            x = np.linalg.solve(A, sig[k].copy())
            x -= x.mean()
            phi[k] = x
            s = 0.0
            for i in range(n):
                s += sig[k, i] * x[i]
            energy[k] = s
            for e in range(ei.shape[0]):
                i = ei[e]
                j = ej[e]
                d = x[i] - x[j]
                v = 0.5 * w[e] * d * d
                gam[k, i] += v
                gam[k, j] += v
        return phi, energy, gam

else:  # pragma: no cover
    laplacian_jit = laplacian_py
    gamma_jit = gamma_py
    segment_duals_jit = segment_duals_py


if USE_NUMBA:
    laplacian = laplacian_jit
    gamma = gamma_jit
    segment_duals = segment_duals_jit
else:
    laplacian = laplacian_py
    gamma = gamma_py
    segment_duals = segment_duals_py

BACKEND = "numba" if USE_NUMBA else "numpy"

"""Hot numeric kernels.

The displacement kernels exist twice: a numba-compiled version and a plain
numpy version with the same signature.  The numba path is used when numba imports
and ``GAUSSADD_DISABLE_NUMBA`` is unset (or ``0``); setting the variable to
``1`` forces the numpy path, which is what ``benchmarks/bench_kernels.py``
compares against.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("GAUSSADD_DISABLE_NUMBA", "0").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    import numba as nb

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag
    nb = None
    HAS_NUMBA = False


# ---------------------------------------------------------------------------
# displacement matrix elements
# ---------------------------------------------------------------------------
#
# <q+a|D(nu)|q> = e^{-|nu|^2/2} * nu^a/sqrt(a!) * h_q^{(a)}(|nu|^2)
# with h_q^{(a)} = sqrt(q! a!/(q+a)!) L_q^{(a)}, run through the normalized
# three-term recurrence in q so that nothing overflows for q, a ~ 100.
# Entries above the diagonal follow from D(nu)^dagger = D(-nu).


def _displacement_numpy(nu: complex, d: int) -> np.ndarray:
    x = abs(nu) ** 2
    env = np.exp(-0.5 * x)
    out = np.zeros((d, d), dtype=np.complex128)
    q = np.arange(d, dtype=np.float64)
    for sign, base in ((1, nu), (-1, -np.conj(nu))):
        g = 1.0 + 0.0j
        for a in range(0 if sign == 1 else 1, d):
            if a > 0:
                g = g * base / np.sqrt(a)
            length = d - a
            h = np.empty(length)
            h[0] = 1.0
            if length > 1:
                h[1] = (1.0 + a - x) / np.sqrt(1.0 + a)
            for j in range(1, length - 1):
                h[j + 1] = ((2 * j + 1 + a - x) * h[j] - np.sqrt(j * (j + a)) * h[j - 1]) / np.sqrt(
                    (j + 1) * (j + 1 + a)
                )
            idx = q[:length].astype(np.int64)
            if sign == 1:
                out[idx + a, idx] = env * g * h
            else:
                out[idx, idx + a] = env * g * h
    return out


def _displacement_batch_numpy(nus: np.ndarray, d: int) -> np.ndarray:
    nus = np.asarray(nus, dtype=np.complex128).ravel()
    out = np.empty((nus.size, d, d), dtype=np.complex128)
    for i, nu in enumerate(nus):
        out[i] = _displacement_numpy(complex(nu), d)
    return out


def _scaled_kron_numpy(blocks: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """coeffs[n] * kron(blocks[n, 0], ..., blocks[n, k-1]) for every node n."""
    n_nodes, k, dm, _ = blocks.shape
    kron = blocks[:, 0] * coeffs[:, None, None]
    for s in range(1, k):
        kron = np.einsum("nab,ncd->nacbd", kron, blocks[:, s])
        side = kron.shape[1] * dm
        kron = kron.reshape(n_nodes, side, side)
    return kron


if HAS_NUMBA:

    @nb.njit(cache=True)
    def _fill_displacement(nu, d, out):
        x = nu.real * nu.real + nu.imag * nu.imag
        env = np.exp(-0.5 * x)
        for sign in range(2):
            base = nu if sign == 0 else -np.conj(nu)
            g = 1.0 + 0.0j
            start = 0 if sign == 0 else 1
            for a in range(start, d):
                if a > 0:
                    g = g * base / np.sqrt(a)
                hm = 0.0
                h = 1.0
                for j in range(d - a):
                    val = env * g * h
                    if sign == 0:
                        out[j + a, j] = val
                    else:
                        out[j, j + a] = val
                    hn = ((2 * j + 1 + a - x) * h - np.sqrt(j * (j + a)) * hm) / np.sqrt((j + 1) * (j + 1 + a))
                    hm = h
                    h = hn

    @nb.njit(cache=True)
    def _displacement_numba(nu, d):
        out = np.zeros((d, d), dtype=np.complex128)
        _fill_displacement(nu, d, out)
        return out

    @nb.njit(cache=True)
    def _displacement_batch_numba(nus, d):
        out = np.zeros((nus.size, d, d), dtype=np.complex128)
        for i in range(nus.size):
            _fill_displacement(nus[i], d, out[i])
        return out


def displacement_matrix(nu: complex, d: int) -> np.ndarray:
    """Dense ``d x d`` Fock matrix of D(nu) from the Laguerre closed form."""
    if HAS_NUMBA:
        return _displacement_numba(complex(nu), int(d))
    return _displacement_numpy(complex(nu), int(d))


def displacement_batch(nus: np.ndarray, d: int) -> np.ndarray:
    """Stack of displacement matrices, shape ``(len(nus), d, d)``."""
    nus = np.ascontiguousarray(np.asarray(nus, dtype=np.complex128).ravel())
    if HAS_NUMBA:
        return _displacement_batch_numba(nus, int(d))
    return _displacement_batch_numpy(nus, int(d))


def chain_accumulate(blocks: np.ndarray, coeffs: np.ndarray, out: np.ndarray) -> None:
    """In-place ``out += sum_n coeffs[n] * kron(blocks[n, 0], ..., blocks[n, k-1])``.

    The first k - 1 factors are expanded per node with einsum (this step is
    memory bound, and a compiled loop was measured slower); the sum over nodes
    against the last factor is a single matrix product.
    """
    blocks = np.ascontiguousarray(blocks, dtype=np.complex128)
    coeffs = np.ascontiguousarray(coeffs, dtype=np.complex128)
    n_nodes, k, dm, _ = blocks.shape
    if k == 1:
        out += np.tensordot(coeffs, blocks[:, 0], axes=(0, 0))
        return
    head = np.ascontiguousarray(blocks[:, :-1])
    left = _scaled_kron_numpy(head, coeffs)
    side = left.shape[1]
    prod = left.reshape(n_nodes, side * side).T @ blocks[:, -1].reshape(n_nodes, dm * dm)
    out += prod.reshape(side, side, dm, dm).transpose(0, 2, 1, 3).reshape(side * dm, side * dm)


def backend() -> str:
    return "numba" if HAS_NUMBA else "numpy"

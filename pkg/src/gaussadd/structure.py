"""Finite-dimensional linear algebra behind the k-copy extended operator.

The circulant matrices G, A and C = 1/n + A/2 couple the k copies of one
channel use.  All of them are diagonalized by the unitary DFT matrix, which
turns the k-copy Gaussian integral into a product of single-mode ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, ParameterError

LAMBDA0_TOLERANCE = 1e-12


@dataclass(frozen=True)
class CirculantTriple:
    k: int
    n: float
    G: np.ndarray
    A: np.ndarray
    C: np.ndarray


@dataclass(frozen=True)
class SpectralData:
    """DFT diagonalization: ``Y G Y^dag = diag(e)``, ``Y C Y^dag = diag(d)``."""

    k: int
    n: float
    Y: np.ndarray
    e: np.ndarray
    d: np.ndarray


@dataclass(frozen=True)
class SqueezeDecomposition:
    u: float
    v: complex
    B: np.ndarray
    n_eff: float
    xi: complex


def circulant(first_row) -> np.ndarray:
    """Matrix whose rows are successive cyclic right-shifts of ``first_row``."""
    r = np.asarray(first_row)
    return np.array([np.roll(r, i) for i in range(r.size)])


def _check_k(k: int) -> None:
    if int(k) != k or k < 1:
        raise ParameterError(f"number of copies must be a positive integer, got {k!r}")


def build_circulant_triple(k: int, n: float) -> CirculantTriple:
    """G has -1 on the diagonal and +1 just right of it (cyclically);
    A has -1 right of the diagonal and +1 left of it.  For k = 2 the two
    entries of A cancel, for k = 1 both matrices vanish."""
    _check_k(k)
    if n <= 0:
        raise ParameterError("C = 1/n + A/2 needs n > 0")
    g_row = np.zeros(k)
    a_row = np.zeros(k)
    if k > 1:
        g_row[0] -= 1.0
        g_row[1] += 1.0
        a_row[1] -= 1.0
        a_row[-1] += 1.0
    G = circulant(g_row)
    A = circulant(a_row)
    C = np.eye(k) / n + A / 2.0
    return CirculantTriple(k, float(n), G, A, C)


def dft_matrix(k: int) -> np.ndarray:
    """Y with rows ``omega^{-(j)(l)}/sqrt(k)``; row 0 is the uniform vector."""
    j = np.arange(k)
    return np.exp(-2j * np.pi * np.outer(j, j) / k) / np.sqrt(k)


def dft_spectral_data(k: int, n: float) -> SpectralData:
    """e_j = -1 + omega^{j}, d_j = diagonal of Y C Y^dag (index j = 0 is the null mode)."""
    tri = build_circulant_triple(k, n)
    Y = dft_matrix(k)
    e = np.diag(Y @ tri.G @ Y.conj().T).copy()
    dvals = np.diag(Y @ tri.C @ Y.conj().T).copy()
    # remove roundoff from the exactly-known null mode
    e[0] = 0.0
    dvals[0] = 1.0 / n
    return SpectralData(k, float(n), Y, e, dvals)


def lambda0_routes(k: int, n: float, m: int = 1) -> dict[str, float]:
    """Largest Theta eigenvalue three ways: spectral product, determinant, closed form."""
    _check_k(k)
    _check_k(m)
    if n <= 0:
        raise ParameterError("lambda0 needs n > 0")
    if k == 1:
        return {"spectral": 1.0, "determinant": 1.0, "closed_form": 1.0}
    sd = dft_spectral_data(k, n)
    factors = (2.0 / n) / (2.0 * sd.d + np.abs(sd.e) ** 2)
    spectral = np.prod(factors)
    if abs(spectral.imag) > LAMBDA0_TOLERANCE * abs(spectral):
        raise ConsistencyError("spectral product for lambda0 is not real")
    tri = build_circulant_triple(k, n)
    det = np.linalg.det(tri.C + tri.G.T @ tri.G / 2.0)
    determinant = n ** (-k) / det
    closed = 1.0 / ((n + 1.0) ** k - n**k)
    return {
        "spectral": float(spectral.real) ** m,
        "determinant": float(determinant) ** m,
        "closed_form": closed**m,
    }


def lambda0(k: int, n: float, m: int = 1, *, tol: float = LAMBDA0_TOLERANCE) -> float:
    """Closed-form lambda0, after checking that all three routes agree to ``tol`` (relative)."""
    routes = lambda0_routes(k, n, m)
    ref = routes["closed_form"]
    for name, val in routes.items():
        if abs(val - ref) > tol * max(1.0, abs(ref)):
            raise ConsistencyError(f"lambda0 route {name!r} = {val!r} disagrees with closed form {ref!r}")
    return ref


def theta_mode_ratio(k: int, n: float, j: int) -> tuple[complex, complex]:
    """(scale, ratio) with Theta_j = scale * ratio^{b_j^dag b_j}; j is 0-based."""
    if not 0 <= j < k:
        raise ParameterError(f"mode index {j} outside 0..{k - 1}")
    if j == 0:
        return 1.0 + 0j, 1.0 + 0j
    sd = dft_spectral_data(k, n)
    e2 = abs(sd.e[j]) ** 2
    den = 2.0 * sd.d[j] + e2
    return complex((2.0 / n) / den), complex((2.0 * sd.d[j] - e2) / den)


def squeeze_decomposition(u: float, v: complex) -> SqueezeDecomposition:
    """Effective circular noise and squeezing that diagonalize Gamma = [[u, v*], [v, u]]."""
    v = complex(v)
    if u < abs(v) or u <= 0:
        raise ParameterError(f"Gamma needs u >= |v| and u > 0 (u={u}, |v|={abs(v)})")
    if abs(v) == u:
        raise ParameterError("u = |v| makes Gamma singular")
    s = np.sqrt(u * u - abs(v) ** 2)
    if v == 0:
        return SqueezeDecomposition(float(u), v, np.eye(2, dtype=complex), 1.0 / (2.0 * s), 0j)
    phase = v / abs(v)
    alpha = np.sqrt((u + s) / (2.0 * s))
    beta = phase * np.sqrt((u - s) / (2.0 * s))
    B = np.array([[alpha, np.conj(beta)], [beta, alpha]], dtype=complex)
    xi = phase * np.arctanh(np.sqrt((u - s) / (u + s)))
    if abs(np.linalg.det(B) - 1.0) > 1e-12:
        raise ConsistencyError("B matrix does not have unit determinant")
    return SqueezeDecomposition(float(u), v, B, 1.0 / (2.0 * s), complex(xi))


def gamma_matrix(u: float, v: complex) -> np.ndarray:
    v = complex(v)
    return np.array([[u, np.conj(v)], [v, u]], dtype=complex)


def block_matrices(k: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Block lifts G (x) 1_m and A (x) 1_m acting on all (copy, use) pairs."""
    _check_k(k)
    _check_k(m)
    tri = build_circulant_triple(k, 1.0)
    eye = np.eye(m)
    return np.kron(tri.G, eye), np.kron(tri.A, eye)

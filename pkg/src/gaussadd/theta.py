"""The k-copy operator Theta whose expectation on psi^(x)k gives Tr[(N_n^(x)m(psi))^k].

Two independent constructions:

* ``factorized`` -- per channel use, Theta_r = V^dag f(a^dag a) V where V is the
  passive Fock unitary taking the copy modes a to the DFT modes b and f is
  the diagonal product of geometric series.  V is built sector by sector in
  the conserved total photon number, so every kept entry is exact.
* ``quadrature`` -- the defining Gaussian integral over the k displacements
  of every use, evaluated on a product grid in the k - 1 difference
  variables per use (the centre of mass drops out).

The Hilbert space is ordered copy-major: copy s is the slowest index and,
inside a copy, use r follows the usual Kronecker order.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .channels import apply_classical_noise
from .errors import ConsistencyError, ParameterError, ResourceError
from .fock import (
    DensityMatrix,
    PureState,
    TruncatedOperator,
    coherent_amplitudes,
    thermal_cutoff,
    trace_power,
)
from .quadrature import circular_grid, tilted_laguerre
from .structure import dft_spectral_data, lambda0

SIZE_CEILING = 4096
NODE_CEILING = 4_000_000
SPECTRAL_TOLERANCE = 1e-4
ROUTE_TOLERANCE = 1e-5
ORACLE_TOLERANCE = 1e-8
_NODE_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class ThetaOperator:
    k: int
    m: int
    n: float
    d: int
    operator: TruncatedOperator
    route: str

    @property
    def matrix(self) -> np.ndarray:
        return self.operator.matrix

    def expectation(self, psi) -> complex:
        """<psi^(x)k| Theta |psi^(x)k> for a pure state on m modes."""
        v = product_vector(psi, self.k)
        return complex(np.vdot(v, self.matrix @ v))


def _check_sizes(k: int, m: int, n: float, d: int, ceiling: int) -> int:
    for name, val in (("k", k), ("m", m)):
        if int(val) != val or val < 1:
            raise ParameterError(f"{name} must be a positive integer, got {val!r}")
    if int(d) != d or d < 2:
        raise ParameterError(f"cutoff must be an integer >= 2, got {d!r}")
    if n <= 0:
        raise ParameterError("Theta needs n > 0")
    side = d ** (m * k)
    if side > ceiling:
        raise ResourceError(f"Theta would be {side} x {side}; ceiling is {ceiling} (d^(m k))")
    return side


def product_vector(psi, k: int) -> np.ndarray:
    amps = psi.amplitudes if isinstance(psi, PureState) else np.asarray(psi)
    out = np.ones(1, dtype=np.complex128)
    for _ in range(k):
        out = np.kron(out, amps)
    return out


# ---------------------------------------------------------------------------
# passive linear optics on Fock space
# ---------------------------------------------------------------------------


def mode_generator(M: np.ndarray) -> np.ndarray:
    """Anti-Hermitian X with exp(X) = M for unitary M (via complex Schur form)."""
    M = np.asarray(M, dtype=np.complex128)
    if np.abs(M @ M.conj().T - np.eye(M.shape[0])).max() > 1e-12:
        raise ParameterError("mode transformation must be unitary")
    T, Z = sla.schur(M, output="complex")
    X = Z @ np.diag(np.log(np.diag(T))) @ Z.conj().T
    return 0.5 * (X - X.conj().T)


@lru_cache(maxsize=128)
def _compositions(total: int, k: int) -> np.ndarray:
    """All occupation tuples of k modes summing to ``total`` (lexicographic)."""
    if k == 1:
        return np.array([[total]], dtype=np.int64)
    rows = []
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, k - 1):
            rows.append((first, *rest))
    return np.array(rows, dtype=np.int64)


def _sector_generator(X: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Matrix of sum_ij X_ij a_i^dag a_j inside one photon-number sector."""
    index = {tuple(s): i for i, s in enumerate(states)}
    k = states.shape[1]
    size = len(states)
    out = np.zeros((size, size), dtype=np.complex128)
    for col, occ in enumerate(states):
        for j in range(k):
            if occ[j] == 0:
                continue
            lowered = occ.copy()
            lowered[j] -= 1
            amp_j = math.sqrt(occ[j])
            for i in range(k):
                raised = lowered.copy()
                raised[i] += 1
                out[index[tuple(raised)], col] += X[i, j] * amp_j * math.sqrt(raised[i])
    return out


@dataclass(frozen=True)
class PassiveSector:
    total: int
    states: np.ndarray  # complete sector, shape (S, k)
    unitary: np.ndarray  # V restricted to the sector
    kept: np.ndarray  # boolean mask: all occupations below the cutoff
    flat: np.ndarray  # flat Fock index of kept states at the cutoff


def passive_sectors(M: np.ndarray, d: int) -> list[PassiveSector]:
    """Sector blocks of V with V^dag a V = M a, for all totals reachable below cutoff d."""
    M = np.asarray(M, dtype=np.complex128)
    k = M.shape[0]
    X = mode_generator(M)
    weights = d ** np.arange(k - 1, -1, -1)
    sectors = []
    for total in range(k * (d - 1) + 1):
        states = _compositions(total, k)
        V = sla.expm(_sector_generator(X, states))
        kept = np.all(states < d, axis=1)
        sectors.append(PassiveSector(total, states, V, kept, states[kept] @ weights))
    return sectors


def passive_unitary(M: np.ndarray, d: int) -> np.ndarray:
    """Cropped Fock matrix of V (exact entries, not unitary once cropped)."""
    k = np.asarray(M).shape[0]
    out = np.zeros((d**k, d**k), dtype=np.complex128)
    for sec in passive_sectors(M, d):
        block = sec.unitary[np.ix_(sec.kept, sec.kept)]
        out[np.ix_(sec.flat, sec.flat)] = block
    return out


def mode_transform(k: int, n: float) -> np.ndarray:
    """Matrix M with b = M a, where b are the modes that diagonalize Theta_r."""
    return dft_spectral_data(k, n).Y


def theta_mode_factors(k: int, n: float) -> tuple[np.ndarray, np.ndarray]:
    """(scale_j, ratio_j) for j = 0..k-1 with Theta_r = prod_j scale_j ratio_j^{b_j^dag b_j}."""
    sd = dft_spectral_data(k, n)
    e2 = np.abs(sd.e) ** 2
    den = 2.0 * sd.d + e2
    scale = (2.0 / n) / den
    ratio = (2.0 * sd.d - e2) / den
    scale[0], ratio[0] = 1.0, 1.0
    return scale.astype(np.complex128), ratio.astype(np.complex128)


# ---------------------------------------------------------------------------
# factorized route
# ---------------------------------------------------------------------------


def theta_single_use(k: int, n: float, d: int) -> np.ndarray:
    """Theta_r on the k copies of one mode (d^k x d^k)."""
    scale, ratio = theta_mode_factors(k, n)
    out = np.zeros((d**k, d**k), dtype=np.complex128)
    for sec in passive_sectors(mode_transform(k, n), d):
        diag = np.prod(scale[None, :] * ratio[None, :] ** sec.states, axis=1)
        V = sec.unitary
        block = V.conj().T @ (diag[:, None] * V)
        out[np.ix_(sec.flat, sec.flat)] = block[np.ix_(sec.kept, sec.kept)]
    return out


def use_major_to_copy_major(matrix: np.ndarray, k: int, m: int, d: int) -> np.ndarray:
    """Reorder an operator from (use, copy) to (copy, use) mode order."""
    nm = k * m
    # mode (r, s) sits at position r*k + s in use-major order
    perm = [r * k + s for s in range(k) for r in range(m)]
    t = matrix.reshape((d,) * (2 * nm))
    t = t.transpose(perm + [nm + p for p in perm])
    return np.ascontiguousarray(t).reshape(d**nm, d**nm)


def _build_factorized(k: int, m: int, n: float, d: int) -> np.ndarray:
    single = theta_single_use(k, n, d)
    out = single
    for _ in range(m - 1):
        out = np.kron(out, single)
    return use_major_to_copy_major(out, k, m, d) if m > 1 else out


# ---------------------------------------------------------------------------
# quadrature route
# ---------------------------------------------------------------------------


def difference_whitening(k: int, n: float) -> tuple[np.ndarray, np.ndarray]:
    """(L, tilts): delta = L z with z iid standard complex Gaussians.

    delta_s = mu_{s+1} - mu_s (s = 1..k-1) has covariance n * tridiag(-1, 2, -1).
    L also diagonalizes the quadratic envelope sum_s |delta_s|^2 / 2 (with
    delta_k = -sum delta) carried by the displacement matrix elements, so
    each variable gets its own exact Gaussian tilt.
    """
    size = k - 1
    T = 2.0 * np.eye(size) - np.eye(size, k=1) - np.eye(size, k=-1)
    A = np.eye(size) + np.ones((size, size))
    w, U = np.linalg.eigh(T)
    root = U @ np.diag(np.sqrt(w)) @ U.T
    e, W = np.linalg.eigh(root @ A @ root)
    L = np.sqrt(n) * root @ W
    return L, 0.5 * n * e


def default_quadrature_size(k: int, d: int) -> tuple[int, int]:
    """(radial, angular) nodes per difference variable.

    For k = 2 the integrand is a Gaussian times a polynomial and these sizes
    make the rule exact; for k >= 3 a quadratic phase remains and the sizes
    are generous enough for about 1e-7 accuracy at desk cutoffs.
    """
    if k == 2:
        return d + 1, 2 * d
    return d + 10, 2 * d + 10


def _use_grid(k: int, n: float, radial: int, angular: int):
    """Nodes of one use: deltas (N, k), weights*phases (N,)."""
    L, tilts = difference_whitening(k, n)
    per_var = [circular_grid(1.0, radial, angular, tilt=float(c)) for c in tilts]
    nodes = np.array(list(itertools.product(*[g.nodes for g in per_var])))
    weights = np.prod(np.array(list(itertools.product(*[g.weights for g in per_var]))), axis=1)
    deltas = nodes @ L.T
    full = np.concatenate([deltas, -deltas.sum(axis=1, keepdims=True)], axis=1)
    # mu_1 = 0, mu_{s+1} = mu_s + delta_s; the cyclic phase depends on differences only
    mu = np.concatenate([np.zeros((len(nodes), 1)), np.cumsum(deltas, axis=1)], axis=1)
    nxt = np.roll(mu, -1, axis=1)
    phase = np.sum(np.imag(nxt * mu.conj()), axis=1)
    return full, weights * np.exp(1j * phase)


def _build_quadrature(k: int, m: int, n: float, d: int, radial: int | None, angular: int | None) -> np.ndarray:
    side = d ** (k * m)
    if k == 1:
        return np.eye(side, dtype=np.complex128)
    r0, a0 = default_quadrature_size(k, d)
    radial = radial or r0
    angular = angular or a0
    deltas, coeffs = _use_grid(k, n, radial, angular)
    n_use = len(coeffs)
    total = n_use**m
    if total > NODE_CEILING:
        raise ResourceError(f"quadrature route needs {total} nodes; ceiling is {NODE_CEILING}")
    # the displacement on copy s of use r is D(delta_{s r})
    disp = _kernels.displacement_batch(deltas.ravel(), d).reshape(n_use, k, d, d)
    out = np.zeros((side, side), dtype=np.complex128)
    for start in range(0, total, _NODE_CHUNK):
        flat = np.arange(start, min(start + _NODE_CHUNK, total))
        per_use = np.unravel_index(flat, (n_use,) * m)
        blocks = np.stack([disp[per_use[r]] for r in range(m)], axis=2)  # (N, k, m, d, d)
        blocks = blocks.reshape(len(flat), k * m, d, d)
        c = np.ones(len(flat), dtype=np.complex128)
        for r in range(m):
            c = c * coeffs[per_use[r]]
        _kernels.chain_accumulate(blocks, c, out)
    return out


def build_theta(
    k: int,
    m: int,
    n: float,
    d: int,
    route: str = "factorized",
    *,
    ceiling: int = SIZE_CEILING,
    radial: int | None = None,
    angular: int | None = None,
) -> ThetaOperator:
    """Theta on (d^m)^k levels by the chosen route."""
    _check_sizes(k, m, n, d, ceiling)
    if route == "factorized":
        mat = np.eye(d ** (k * m), dtype=np.complex128) if k == 1 else _build_factorized(k, m, n, d)
    elif route == "quadrature":
        mat = _build_quadrature(k, m, n, d, radial, angular)
    else:
        raise ParameterError(f"unknown route {route!r}")
    return ThetaOperator(k, m, float(n), d, TruncatedOperator(mat, d, k * m), route)


def route_gap(k: int, m: int, n: float, d: int, **kw) -> float:
    """Largest entrywise difference between the two routes."""
    a = build_theta(k, m, n, d, "factorized").matrix
    b = build_theta(k, m, n, d, "quadrature", **kw).matrix
    return float(np.abs(a - b).max())


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------


def _as_pure(state, d: int | None = None) -> PureState:
    if isinstance(state, PureState):
        return state
    if isinstance(state, DensityMatrix):
        w, v = np.linalg.eigh(state.matrix)
        if abs(w[-1] - 1.0) > 1e-9:
            raise ParameterError("the trace identity holds for pure inputs only")
        return PureState(v[:, -1], state.dim_per_mode, state.num_modes)
    raise ParameterError("expected a PureState or a pure DensityMatrix")


@dataclass(frozen=True)
class TraceIdentity:
    lhs: float
    rhs: complex
    gap: float


def trace_identity_check(
    state,
    k: int,
    n: float,
    *,
    theta: ThetaOperator | None = None,
    pad: int | None = None,
) -> TraceIdentity:
    """Tr[(N_n^(x)m(psi))^k] against <psi^(x)k|Theta|psi^(x)k>.

    The left side applies the channel on ``d + pad`` levels per mode so the
    output tail is kept; the right side uses the factorized Theta at the
    input cutoff, whose kept entries are exact.
    """
    psi = _as_pure(state)
    d, m = psi.dim_per_mode, psi.num_modes
    if theta is None:
        theta = build_theta(k, m, n, d)
    elif (theta.k, theta.m, theta.d) != (k, m, d) or theta.n != n:
        raise ParameterError("Theta does not match the requested (k, m, n, d)")
    pad = thermal_cutoff(n, 1e-9) if pad is None else pad
    rho = psi.density().embed(d + pad)
    out = apply_classical_noise(n, rho)
    lhs = trace_power(out, k)
    rhs = theta.expectation(psi)
    return TraceIdentity(lhs, rhs, float(abs(lhs - rhs)))


@dataclass
class SpectralReport:
    k: int
    m: int
    n: float
    d: int
    lambda0_closed: float
    lambda0_numeric: float
    max_abs_eigenvalue: float
    eigvec_condition: float
    route_gap: float | None = None
    passed: bool = False
    failures: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


def spectral_bound_check(
    k: int,
    m: int,
    n: float,
    d: int,
    *,
    tol: float = SPECTRAL_TOLERANCE,
    cross_check: bool = True,
    route_tol: float = ROUTE_TOLERANCE,
    strict: bool = True,
    theta: ThetaOperator | None = None,
) -> SpectralReport:
    """Compare the spectral radius of Theta with the closed-form lambda0.

    With ``cross_check`` the factorized Theta is also compared entrywise with
    the quadrature route.  That comparison is the only part of the check
    sensitive to the orientation of the antisymmetric coupling A: flipping it
    conjugates every ratio, which leaves all moduli (hence lambda0 and the
    spectral radius) unchanged.
    """
    theta = build_theta(k, m, n, d) if theta is None else theta
    closed = lambda0(k, n, m)
    eig, vecs = np.linalg.eig(theta.matrix)
    radius = float(np.abs(eig).max())
    cond = float(np.linalg.cond(vecs))
    report = SpectralReport(k, m, float(n), d, closed, radius, radius, cond)
    if abs(radius - closed) > tol:
        report.failures.append(f"spectral radius {radius:.10g} differs from lambda0 {closed:.10g}")
    if radius > closed + tol:
        report.failures.append("an eigenvalue exceeds lambda0")
    if cross_check and k > 1:
        report.route_gap = route_gap(k, m, n, d)
        if report.route_gap > route_tol:
            report.failures.append(f"factorized and quadrature routes differ by {report.route_gap:.3e}")
    report.passed = not report.failures
    if strict and not report.passed:
        top = np.sort(np.abs(eig))[::-1][:8]
        raise ConsistencyError("; ".join(report.failures) + f"\nleading |eigenvalues|: {top}")
    return report


@dataclass(frozen=True)
class OptimalEigenvector:
    state: PureState
    residual: float
    basis_overlap: float
    lambda0: float


def optimal_eigenvector(
    k: int,
    m: int,
    n: float,
    d: int,
    alphas,
    *,
    tol: float = SPECTRAL_TOLERANCE,
    theta: ThetaOperator | None = None,
) -> OptimalEigenvector:
    """Coherent product |alpha_r>^(x)k and its check as a lambda0 eigenvector of Theta.

    The same vector is also assembled in the b-mode picture (|sqrt(k) alpha_r>
    in the null mode, vacuum elsewhere, mapped back by V^dag); the overlap of
    the two constructions is reported.
    """
    alphas = [complex(a) for a in np.atleast_1d(alphas)]
    if len(alphas) != m:
        raise ParameterError(f"need {m} coherent amplitudes, got {len(alphas)}")
    _check_sizes(k, m, n, d, SIZE_CEILING)
    # a-mode construction (copy-major)
    per_copy = np.ones(1, dtype=np.complex128)
    for a in alphas:
        per_copy = np.kron(per_copy, coherent_amplitudes(a, d))
    leak = 1.0 - float(np.vdot(per_copy, per_copy).real)
    if leak > 1e-8:
        raise ParameterError(f"coherent amplitudes leak {leak:.2e} beyond cutoff {d}")
    a_vec = product_vector(per_copy, k)
    # b-mode construction, one use at a time, then reorder to copy-major
    M = mode_transform(k, n)
    sectors = passive_sectors(M, d)
    uses = []
    for a in alphas:
        top = k * (d - 1) + 1
        null_amps = coherent_amplitudes(math.sqrt(k) * a, top)
        vec = np.zeros(d**k, dtype=np.complex128)
        for sec in sectors:
            # b-Fock state |x>_b = V^dag |x>_a; only |N, 0, ..., 0> is populated
            src = np.zeros(len(sec.states), dtype=np.complex128)
            src[0] = null_amps[sec.total]
            vec[sec.flat] = (sec.unitary.conj().T @ src)[sec.kept]
        uses.append(vec)
    b_vec = uses[0]
    for vec in uses[1:]:
        b_vec = np.kron(b_vec, vec)
    if m > 1:
        b_vec = use_major_to_copy_major(np.diag(b_vec), k, m, d).diagonal().copy()
    overlap = float(abs(np.vdot(a_vec, b_vec)) / (np.linalg.norm(a_vec) * np.linalg.norm(b_vec)))
    theta = build_theta(k, m, n, d) if theta is None else theta
    lam = lambda0(k, n, m)
    unit = a_vec / np.linalg.norm(a_vec)
    residual = float(np.linalg.norm(theta.matrix @ unit - lam * unit))
    if residual > tol:
        raise ConsistencyError(f"coherent product is not a lambda0 eigenvector: residual {residual:.3e}")
    return OptimalEigenvector(PureState(unit, d, k * m), residual, overlap, lam)


# ---------------------------------------------------------------------------
# single-mode Laguerre integral
# ---------------------------------------------------------------------------


def theta_mode_closed_form(p: int, q: int, d_j: complex, e_j: complex, n: float) -> complex:
    if p != q:
        return 0j
    e2 = abs(e_j) ** 2
    den = 2.0 * d_j + e2
    return complex((2.0 / n) / den * ((2.0 * d_j - e2) / den) ** p)


@dataclass(frozen=True)
class OracleResult:
    numeric: complex
    closed_form: complex
    error: float
    refinement_change: float


def laguerre_integral_oracle(
    p: int,
    q: int,
    d_j: complex,
    e_j: complex,
    n: float,
    *,
    radial: int = 48,
    angular: int = 32,
    tol: float = ORACLE_TOLERANCE,
) -> OracleResult:
    """<p| (1/(n|e|^2)) int d^2nu/pi exp(-d |nu|^2/|e|^2) D(-nu) |q> by 2D quadrature.

    In s = |nu|^2/|e|^2 the weight is exp(-d s); the real part of d and the
    exp(-|e|^2 s/2) envelope of the matrix element are absorbed into a
    Gauss-Laguerre tilt, the remaining oscillation exp(-i Im(d) s) and the
    Laguerre polynomial are integrated numerically, and the angle by the
    trapezoid rule.  The rule is repeated with twice the radial nodes;
    a change above ``tol`` counts as non-convergence.
    """
    d_j, e_j = complex(d_j), complex(e_j)
    if d_j.real <= 0:
        raise ParameterError("the Gaussian weight needs Re(d) > 0")
    if abs(e_j) == 0:
        raise ParameterError("e_j = 0 is the null mode, where Theta_j is the identity")
    size = max(p, q) + 1
    if angular <= p + q:
        raise ParameterError("angular nodes must exceed p + q")

    def integrate(R):
        e2 = abs(e_j) ** 2
        rate = d_j.real + 0.5 * e2
        s, w = tilted_laguerre(R, 0.0)
        s, w = s / rate, w / rate
        phi = 2.0 * np.pi * np.arange(angular) / angular
        total = 0j
        for si, wi in zip(s, w):
            nus = -np.sqrt(e2 * si) * np.exp(1j * phi)
            elem = _kernels.displacement_batch(nus, size)[:, p, q].mean()
            # exp(-rate s) is in the rule, so put back the envelope exp(-e2 s/2)
            # already present in the matrix element
            total += wi * np.exp(-1j * d_j.imag * si) * elem * np.exp(0.5 * e2 * si)
        # d^2 nu = (|e|^2 / 2) ds dphi, so the prefactor 1/(n |e|^2 pi) becomes 1/n
        return total / n

    coarse = integrate(radial)
    fine = integrate(2 * radial)
    change = abs(fine - coarse)
    if change > tol:
        raise ConsistencyError(f"Laguerre integral did not converge: change {change:.3e} under refinement")
    closed = theta_mode_closed_form(p, q, d_j, e_j, n)
    return OracleResult(fine, closed, float(abs(fine - closed)), float(change))


def oracle_parameters(k: int, n: float) -> list[tuple[complex, complex]]:
    """(d_j, e_j) for the non-null DFT modes j = 1..k-1."""
    sd = dft_spectral_data(k, n)
    return [(complex(sd.d[j]), complex(sd.e[j])) for j in range(1, k)]


def theta_report(k: int, m: int, n: float, d: int, *, trace_gap: float | None = None) -> dict:
    rep = spectral_bound_check(k, m, n, d, strict=False)
    return {
        "k": k,
        "m": m,
        "n": n,
        "d": d,
        "lambda0_closed": rep.lambda0_closed,
        "lambda0_numeric": rep.lambda0_numeric,
        "trace_gap": trace_gap,
        "route_gap": rep.route_gap,
    }

"""Fock-truncated operators and states.

Everything lives on levels ``0..d-1`` of each mode.  Multi-mode objects are
Kronecker products with the leftmost factor as the slowest-varying index;
that convention is used by every module in the package.

Nothing is renormalized silently.  Operators carry a ``leakage`` figure (the
largest column-norm deficit over the trusted block, levels ``0..d//2``) and
density matrices carry ``tail_mass`` (the trace lost to truncation).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .errors import CutoffError, LeakageWarning, NotHermitianError, ParameterError

TAIL_TOLERANCE = 1e-6
UNITARITY_TOLERANCE = 1e-8
LEAKAGE_CEILING = 1e-4
HERMITIAN_TOLERANCE = 1e-12
NEGATIVITY_THRESHOLD = -1e-10
SQUEEZE_CEILING = 2.0


def trusted_levels(d: int) -> int:
    """Number of levels in the trusted block ``0..d//2``."""
    return d // 2 + 1


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TruncatedOperator:
    """Dense operator on ``num_modes`` modes, each cut at ``dim_per_mode`` levels."""

    matrix: np.ndarray
    dim_per_mode: int
    num_modes: int = 1
    leakage: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        side = self.dim_per_mode**self.num_modes
        if m.shape != (side, side):
            raise CutoffError(f"matrix shape {m.shape} does not match {self.dim_per_mode}^{self.num_modes}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def side(self) -> int:
        return self.matrix.shape[0]

    def dag(self) -> "TruncatedOperator":
        return TruncatedOperator(self.matrix.conj().T, self.dim_per_mode, self.num_modes, self.leakage)

    def __matmul__(self, other: "TruncatedOperator") -> "TruncatedOperator":
        _check_compatible(self, other)
        return TruncatedOperator(
            self.matrix @ other.matrix, self.dim_per_mode, self.num_modes, self.leakage + other.leakage
        )

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized state vector; ``tail_mass`` is the norm lost before renormalizing."""

    amplitudes: np.ndarray
    dim_per_mode: int
    num_modes: int = 1
    tail_mass: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.amplitudes, dtype=np.complex128).ravel().copy()
        if v.size != self.dim_per_mode**self.num_modes:
            raise CutoffError("amplitude vector length does not match the cutoff")
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ParameterError("zero vector is not a state")
        v /= norm
        v.setflags(write=False)
        object.__setattr__(self, "amplitudes", v)

    def density(self) -> "DensityMatrix":
        op = TruncatedOperator(np.outer(self.amplitudes, self.amplitudes.conj()), self.dim_per_mode, self.num_modes)
        return DensityMatrix(op)

    def overlap(self, other: "PureState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian PSD operator with trace ``1 - tail_mass``.

    ``tail_mass`` defaults to the observed trace deficit.  ``error_estimate``
    carries whatever the producing routine reports about its own
    discretization error (quadrature, for channel outputs).
    """

    operator: TruncatedOperator
    tail_mass: float | None = None
    error_estimate: float = 0.0
    tail_tolerance: float = field(default=TAIL_TOLERANCE, repr=False)

    def __post_init__(self):
        m = self.operator.matrix
        scale = max(1.0, float(np.abs(m).max()))
        if np.abs(m - m.conj().T).max() > HERMITIAN_TOLERANCE * scale:
            raise NotHermitianError("density matrix is not Hermitian")
        tr = float(np.trace(m).real)
        if tr > 1 + 1e-12:
            raise ParameterError(f"trace {tr!r} exceeds 1")
        if tr < 1 - self.tail_tolerance:
            raise CutoffError(f"trace deficit {1 - tr:.3e} exceeds tail tolerance {self.tail_tolerance:.1e}")
        evals = np.linalg.eigvalsh(m)
        if evals[0] < NEGATIVITY_THRESHOLD:
            raise NotHermitianError(f"density matrix has eigenvalue {evals[0]:.3e}")
        if self.tail_mass is None:
            object.__setattr__(self, "tail_mass", max(0.0, 1.0 - tr))

    @classmethod
    def from_matrix(cls, matrix, dim_per_mode: int, num_modes: int = 1, **kw) -> "DensityMatrix":
        m = np.asarray(matrix, dtype=np.complex128)
        m = 0.5 * (m + m.conj().T)
        return cls(TruncatedOperator(m, dim_per_mode, num_modes), **kw)

    @property
    def matrix(self) -> np.ndarray:
        return self.operator.matrix

    @property
    def dim_per_mode(self) -> int:
        return self.operator.dim_per_mode

    @property
    def num_modes(self) -> int:
        return self.operator.num_modes

    def embed(self, d: int) -> "DensityMatrix":
        """Same state on a larger cutoff (zero padding)."""
        return DensityMatrix(
            TruncatedOperator(embed_matrix(self.matrix, self.dim_per_mode, d, self.num_modes), d, self.num_modes),
            self.tail_mass,
            self.error_estimate,
            self.tail_tolerance,
        )


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _check_cutoff(d: int) -> None:
    if int(d) != d or d < 2:
        raise CutoffError(f"cutoff must be an integer >= 2, got {d!r}")


def _check_compatible(a: TruncatedOperator, b: TruncatedOperator) -> None:
    if a.dim_per_mode != b.dim_per_mode or a.num_modes != b.num_modes:
        raise CutoffError("operators live on different truncated spaces")


def column_leakage(matrix: np.ndarray, levels: int) -> float:
    """Largest norm deficit ``1 - sum_p |M_pq|^2`` over columns ``q < levels``."""
    norms = np.sum(np.abs(matrix[:, :levels]) ** 2, axis=0)
    return float(max(0.0, np.max(1.0 - norms)))


def _report_leakage(leak: float, what: str, d: int, ceiling: float) -> None:
    if leak > ceiling:
        raise CutoffError(f"{what}: truncation leakage {leak:.2e} at cutoff {d}; use a cutoff above {2 * d}")
    if leak > UNITARITY_TOLERANCE:
        warnings.warn(f"{what}: leakage {leak:.2e} at cutoff {d}", LeakageWarning, stacklevel=3)


def embed_matrix(matrix: np.ndarray, d_old: int, d_new: int, num_modes: int = 1) -> np.ndarray:
    """Zero-pad every mode of a ``(d_old^M)``-square matrix to ``d_new`` levels."""
    if d_new < d_old:
        raise CutoffError("embed target cutoff is smaller than the source")
    t = np.asarray(matrix).reshape((d_old,) * (2 * num_modes))
    out = np.zeros((d_new,) * (2 * num_modes), dtype=np.complex128)
    out[(slice(0, d_old),) * (2 * num_modes)] = t
    side = d_new**num_modes
    return out.reshape(side, side)


def crop_matrix(matrix: np.ndarray, d_old: int, d_new: int, num_modes: int = 1) -> np.ndarray:
    """Keep levels ``0..d_new-1`` of every mode."""
    t = np.asarray(matrix).reshape((d_old,) * (2 * num_modes))
    side = d_new**num_modes
    return np.ascontiguousarray(t[(slice(0, d_new),) * (2 * num_modes)]).reshape(side, side)


def crop_vector(vec: np.ndarray, d_old: int, d_new: int, num_modes: int = 1) -> np.ndarray:
    t = np.asarray(vec).reshape((d_old,) * num_modes)
    return np.ascontiguousarray(t[(slice(0, d_new),) * num_modes]).ravel()


# ---------------------------------------------------------------------------
# single-mode operators
# ---------------------------------------------------------------------------


def annihilation_op(d: int) -> TruncatedOperator:
    """Ladder operator with ``<p-1|a|p> = sqrt(p)``."""
    _check_cutoff(d)
    return TruncatedOperator(np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1), d)


def creation_op(d: int) -> TruncatedOperator:
    return annihilation_op(d).dag()


def number_op(d: int) -> TruncatedOperator:
    _check_cutoff(d)
    return TruncatedOperator(np.diag(np.arange(d, dtype=float)), d)


def identity_op(d: int, num_modes: int = 1) -> TruncatedOperator:
    return TruncatedOperator(np.eye(d**num_modes), d, num_modes)


def displacement_op(nu: complex, d: int, *, ceiling: float = LEAKAGE_CEILING) -> TruncatedOperator:
    """D(nu) = exp(nu a^dag - nu^* a) from the closed Laguerre form, not expm.

    Entries are exact; what truncation loses shows up as ``leakage``.
    """
    _check_cutoff(d)
    m = _kernels.displacement_matrix(complex(nu), d)
    leak = column_leakage(m, trusted_levels(d))
    _report_leakage(leak, "displacement", d, ceiling)
    return TruncatedOperator(m, d, 1, leak)


@lru_cache(maxsize=64)
def _squeeze_matrix(xi: complex, d: int, pad: int) -> np.ndarray:
    big = d + pad
    a = np.diag(np.sqrt(np.arange(1, big, dtype=float)), 1)
    ad = a.T
    gen = 0.5 * (np.conj(xi) * (a @ a) - xi * (ad @ ad))
    full = sla.expm(gen)
    out = np.ascontiguousarray(full[:d, :d])
    out.setflags(write=False)
    return out


def squeeze_op(
    xi: complex,
    d: int,
    *,
    pad: int | None = None,
    max_squeeze: float = SQUEEZE_CEILING,
    ceiling: float = LEAKAGE_CEILING,
) -> TruncatedOperator:
    """Sigma(xi) = exp[(xi^* a^2 - xi a^dag^2)/2].

    The generator is exponentiated on ``d + pad`` levels and cropped to ``d``,
    so the kept block is accurate rather than artificially unitary.
    """
    _check_cutoff(d)
    xi = complex(xi)
    if abs(xi) > max_squeeze:
        raise ParameterError(f"|xi| = {abs(xi):.3f} above squeeze ceiling {max_squeeze}")
    if pad is None:
        pad = max(2 * d, 20)
    m = _squeeze_matrix(xi, d, int(pad))
    leak = column_leakage(m, trusted_levels(d))
    _report_leakage(leak, "squeeze", d, ceiling)
    return TruncatedOperator(m, d, 1, leak)


@lru_cache(maxsize=32)
def beam_splitter_sectors(eta: float, d1: int, d2: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Blocks of U = exp[theta (a^dag b - a b^dag)] per total photon number.

    Each entry is ``(states, block)`` with ``states`` the (i, j) pairs kept by
    the (d1 x d2) truncation.  Every block is exponentiated on the complete
    sector and only then restricted, so all kept entries are exact.
    """
    theta = np.arctan2(np.sqrt(1.0 - eta), np.sqrt(eta))
    sectors = []
    for total in range(d1 + d2 - 1):
        i = np.arange(total + 1)
        # generator couples |i, N-i> to |i+1, N-i-1> with amplitude sqrt((i+1)(N-i))
        hop = theta * np.sqrt((i[:-1] + 1.0) * (total - i[:-1]))
        gen = np.diag(hop, -1) - np.diag(hop, 1)
        block = sla.expm(gen)
        keep = (i < d1) & (total - i < d2)
        states = np.stack([i[keep], total - i[keep]], axis=1)
        sectors.append((states, np.ascontiguousarray(block[np.ix_(keep, keep)])))
    return tuple(sectors)


@lru_cache(maxsize=8)
def beam_splitter_matrix(eta: float, d1: int, d2: int) -> np.ndarray:
    """Dense U on a (d1 x d2)-level two-mode space, signal mode first."""
    out = np.zeros((d1 * d2, d1 * d2), dtype=np.complex128)
    for states, block in beam_splitter_sectors(eta, d1, d2):
        idx = states[:, 0] * d2 + states[:, 1]
        out[np.ix_(idx, idx)] = block
    out.setflags(write=False)
    return out


def swap_matrix(d: int) -> np.ndarray:
    """Exact eta = 0 beam splitter: |i, j> -> (-1)^i |j, i>."""
    out = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            out[j * d + i, i * d + j] = (-1) ** i
    return out


def beam_splitter_op(eta: float, d: int) -> TruncatedOperator:
    """Two-mode beam splitter of transmissivity ``eta`` (signal mode first)."""
    _check_cutoff(d)
    if not 0.0 <= eta <= 1.0:
        raise ParameterError(f"transmissivity must lie in [0, 1], got {eta!r}")
    if eta == 0.0:
        return TruncatedOperator(swap_matrix(d), d, 2)
    if eta == 1.0:
        return identity_op(d, 2)
    return TruncatedOperator(beam_splitter_matrix(float(eta), d, d), d, 2)


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------


def fock_state(p: int, d: int) -> PureState:
    _check_cutoff(d)
    if not 0 <= p < d:
        raise CutoffError(f"Fock level {p} outside cutoff {d}")
    v = np.zeros(d, dtype=np.complex128)
    v[p] = 1.0
    return PureState(v, d)


def vacuum(d: int, num_modes: int = 1) -> PureState:
    v = np.zeros(d**num_modes, dtype=np.complex128)
    v[0] = 1.0
    return PureState(v, d, num_modes)


def coherent_amplitudes(alpha: complex, d: int) -> np.ndarray:
    """Raw e^{-|alpha|^2/2} alpha^p / sqrt(p!) for p < d (not renormalized)."""
    c = np.empty(d, dtype=np.complex128)
    c[0] = np.exp(-0.5 * abs(alpha) ** 2)
    for p in range(1, d):
        c[p] = c[p - 1] * alpha / np.sqrt(p)
    return c


def coherent_state(alpha: complex, d: int, *, tail_tolerance: float = TAIL_TOLERANCE) -> PureState:
    _check_cutoff(d)
    c = coherent_amplitudes(complex(alpha), d)
    tail = max(0.0, 1.0 - float(np.vdot(c, c).real))
    if tail > tail_tolerance:
        raise CutoffError(f"coherent state |{alpha}> loses {tail:.2e} beyond cutoff {d}")
    return PureState(c, d, 1, tail)


def thermal_populations(n: float, d: int) -> np.ndarray:
    p = np.arange(d, dtype=float)
    if n == 0:
        return (p == 0).astype(float)
    return (1.0 / (n + 1.0)) * (n / (n + 1.0)) ** p


def thermal_cutoff(n: float, tol: float = 1e-12) -> int:
    """Smallest d with thermal tail (n/(n+1))^d below ``tol``."""
    if n <= 0:
        return 2
    return max(2, int(np.ceil(np.log(tol) / np.log(n / (n + 1.0)))))


def thermal_state(n: float, d: int, *, tail_tolerance: float = TAIL_TOLERANCE) -> DensityMatrix:
    """tau(n) = (n+1)^{-1} (n/(n+1))^{a^dag a}, truncated without renormalizing."""
    _check_cutoff(d)
    if n < 0:
        raise ParameterError("thermal occupation must be >= 0")
    pops = thermal_populations(n, d)
    tail = 0.0 if n == 0 else (n / (n + 1.0)) ** d
    if tail > tail_tolerance:
        raise CutoffError(f"thermal n={n} needs cutoff >= {thermal_cutoff(n, tail_tolerance)}, got {d}")
    return DensityMatrix(TruncatedOperator(np.diag(pops), d), tail, tail_tolerance=tail_tolerance)


def squeezed_thermal_state(
    n: float, xi: complex, d: int, *, pad: int | None = None, tail_tolerance: float = TAIL_TOLERANCE
) -> DensityMatrix:
    """Sigma^dag(xi) tau(n) Sigma(xi), computed on a padded space and cropped."""
    _check_cutoff(d)
    if pad is None:
        pad = max(d, thermal_cutoff(n, 1e-14))
    big = d + pad
    s = _squeeze_matrix(complex(xi), big, max(big, 20))
    tau = np.diag(thermal_populations(n, big))
    full = s.conj().T @ tau @ s
    m = crop_matrix(full, big, d)
    return DensityMatrix.from_matrix(m, d, tail_tolerance=tail_tolerance)


def make_state(kind: str, d: int, **params) -> PureState | DensityMatrix:
    """Factory: ``fock`` (p), ``coherent`` (alpha), ``thermal`` (n), ``squeezed_thermal`` (n, xi)."""
    if kind == "fock":
        return fock_state(int(params["p"]), d)
    if kind == "coherent":
        return coherent_state(params.get("alpha", 0.0), d)
    if kind == "thermal":
        return thermal_state(float(params["n"]), d)
    if kind == "squeezed_thermal":
        return squeezed_thermal_state(float(params["n"]), params.get("xi", 0.0), d)
    raise ParameterError(f"unknown state kind {kind!r}")


def random_pure_state(
    d: int, num_modes: int = 1, *, support: int | None = None, rng: np.random.Generator | None = None
) -> PureState:
    """Haar-like random state on levels ``< support`` of each mode."""
    rng = np.random.default_rng() if rng is None else rng
    support = d if support is None else min(support, d)
    v = rng.normal(size=(support,) * num_modes) + 1j * rng.normal(size=(support,) * num_modes)
    full = np.zeros((d,) * num_modes, dtype=np.complex128)
    full[(slice(0, support),) * num_modes] = v
    return PureState(full.ravel(), d, num_modes)


def random_density_matrix(
    d: int, num_modes: int = 1, *, rank: int | None = None, support: int | None = None, rng=None
) -> DensityMatrix:
    rng = np.random.default_rng() if rng is None else rng
    side = d**num_modes
    rank = side if rank is None else rank
    vecs = [random_pure_state(d, num_modes, support=support, rng=rng).amplitudes for _ in range(rank)]
    w = rng.dirichlet(np.ones(rank))
    m = sum(wi * np.outer(v, v.conj()) for wi, v in zip(w, vecs))
    return DensityMatrix.from_matrix(m, d, num_modes)


# ---------------------------------------------------------------------------
# multi-mode structure
# ---------------------------------------------------------------------------


def tensor_product(ops: Sequence[TruncatedOperator]) -> TruncatedOperator:
    """Kronecker product, leftmost factor slowest."""
    ops = list(ops)
    if not ops:
        raise ParameterError("empty tensor product")
    d = ops[0].dim_per_mode
    if any(o.dim_per_mode != d for o in ops):
        raise CutoffError("tensor factors must share the same cutoff")
    m = ops[0].matrix
    for o in ops[1:]:
        m = np.kron(m, o.matrix)
    return TruncatedOperator(m, d, sum(o.num_modes for o in ops), sum(o.leakage for o in ops))


def embed_mode(op: TruncatedOperator, mode: int, num_modes: int) -> TruncatedOperator:
    """Place a single-mode operator on ``mode`` of an ``num_modes`` register."""
    d = op.dim_per_mode
    eye = identity_op(d)
    return tensor_product([op if r == mode else eye for r in range(num_modes)])


def partial_trace_matrix(matrix: np.ndarray, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    dims = list(dims)
    keep = sorted(set(keep))
    n = len(dims)
    t = np.asarray(matrix).reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = [letters[i] for i in range(n)]
    col = [letters[n + i] if i in keep else letters[i] for i in range(n)]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    res = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    side = int(np.prod([dims[i] for i in keep]))
    return res.reshape(side, side)


def partial_trace(op, keep: Iterable[int]):
    """Trace out every mode not in ``keep``.  Works on operators and density matrices."""
    keep = sorted(set(keep))
    n = op.num_modes
    if not keep or any(not 0 <= r < n for r in keep):
        raise ParameterError(f"invalid mode set {keep} for {n} modes")
    d = op.dim_per_mode
    m = partial_trace_matrix(op.matrix if isinstance(op, TruncatedOperator) else op.operator.matrix, [d] * n, keep)
    if isinstance(op, DensityMatrix):
        return DensityMatrix.from_matrix(m, d, len(keep), tail_tolerance=op.tail_tolerance)
    return TruncatedOperator(m, d, len(keep), op.leakage)


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------


def _as_matrix(op) -> np.ndarray:
    if isinstance(op, DensityMatrix):
        return op.matrix
    if isinstance(op, TruncatedOperator):
        return op.matrix
    return np.asarray(op)


def hermitian_spectrum(op, vectors: bool = False, *, tol: float = 1e-10):
    """Eigenvalues sorted descending; with ``vectors=True`` also the eigenvectors (columns)."""
    m = _as_matrix(op)
    scale = max(1.0, float(np.abs(m).max()))
    if np.abs(m - m.conj().T).max() > tol * scale:
        raise NotHermitianError("spectrum requested for a non-Hermitian operator")
    h = 0.5 * (m + m.conj().T)
    if vectors:
        w, v = np.linalg.eigh(h)
        return w[::-1], v[:, ::-1]
    return np.linalg.eigvalsh(h)[::-1]


def clipped_eigenvalues(rho) -> np.ndarray:
    w = hermitian_spectrum(rho)
    if w.size and w[-1] < NEGATIVITY_THRESHOLD:
        raise NotHermitianError(f"state has eigenvalue {w[-1]:.3e}")
    return np.clip(w, 0.0, None)


def trace_power(rho, k: int) -> float:
    """Tr[rho^k] from the clipped Hermitian spectrum."""
    if int(k) != k or k < 1:
        raise ParameterError("power must be a positive integer")
    return float(np.sum(clipped_eigenvalues(rho) ** int(k)))


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of the difference."""
    diff = _as_matrix(rho) - _as_matrix(sigma)
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))

"""The four Gaussian channel families acting on truncated density matrices.

* ``noise``  -- random displacement with circular Gaussian weight P_n.
* ``gauss``  -- random displacement with anisotropic weight set by Gamma(u, v).
* ``loss``   -- beam splitter against a thermal environment tau(n).
* ``sqloss`` -- beam splitter against a squeezed thermal environment.

Every map is applied through a set of single-mode Kraus operators acting on
one mode at a time; an m-use product channel is the composition of the
single-mode maps on each mode, which is exactly the m-fold product
quadrature because the weights factorize.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np

from . import _kernels
from .errors import ConfigError, CutoffError, ParameterError
from .fock import (
    DensityMatrix,
    TruncatedOperator,
    beam_splitter_matrix,
    beam_splitter_sectors,
    partial_trace_matrix,
    LEAKAGE_CEILING,
    _squeeze_matrix,
    squeezed_thermal_state,
    thermal_cutoff,
    thermal_populations,
)
from .quadrature import (
    DEFAULT_RADIAL,
    NORMALIZATION_TOLERANCE,
    QuadratureGrid,
    anisotropic_grid,
    circular_grid,
    default_angular,
)
from .structure import squeeze_decomposition

VARIANTS = ("noise", "gauss", "loss", "sqloss")
_ALIASES = {
    "classicalnoise": "noise",
    "gaussiandisplacement": "gauss",
    "thermalloss": "loss",
    "squeezedenvloss": "sqloss",
}
QUADRATURE_TARGET = 1e-7
ENV_TAIL = 1e-12
_CHUNK_ENTRIES = 1 << 22


# ---------------------------------------------------------------------------
# channel description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelSpec:
    """Tagged channel parameters.  Build with the classmethods rather than directly."""

    variant: str
    n: float = 0.0
    u: float = 0.0
    v: complex = 0j
    eta: float = 1.0
    xi: complex = 0j

    def __post_init__(self):
        variant = _ALIASES.get(self.variant.lower().replace("_", ""), self.variant.lower())
        if variant not in VARIANTS:
            raise ParameterError(f"unknown channel variant {self.variant!r}")
        object.__setattr__(self, "variant", variant)
        object.__setattr__(self, "v", complex(self.v))
        object.__setattr__(self, "xi", complex(self.xi))
        if self.n < 0:
            raise ParameterError("noise parameter n must be >= 0")
        if variant == "gauss":
            if self.u <= 0 or (self.v != 0 and self.u <= abs(self.v)):
                raise ParameterError(f"Gamma needs u > |v| (u={self.u}, |v|={abs(self.v)})")
        if variant in ("loss", "sqloss") and not 0.0 <= self.eta <= 1.0:
            raise ParameterError(f"transmissivity must lie in [0, 1], got {self.eta}")

    @classmethod
    def noise(cls, n: float) -> "ChannelSpec":
        return cls("noise", n=float(n))

    @classmethod
    def gauss(cls, u: float, v: complex) -> "ChannelSpec":
        return cls("gauss", u=float(u), v=complex(v))

    @classmethod
    def loss(cls, eta: float, n: float = 0.0) -> "ChannelSpec":
        return cls("loss", n=float(n), eta=float(eta))

    @classmethod
    def sqloss(cls, eta: float, n: float, xi: complex) -> "ChannelSpec":
        return cls("sqloss", n=float(n), eta=float(eta), xi=complex(xi))

    @property
    def effective_noise(self) -> float:
        """Circular noise level whose maximal output norms this channel shares."""
        if self.variant == "noise":
            return self.n
        if self.variant == "gauss":
            return squeeze_decomposition(self.u, self.v).n_eff
        return (1.0 - self.eta) * self.n

    @property
    def squeezing(self) -> complex:
        """Squeezing that maps this channel onto its circular counterpart."""
        if self.variant == "gauss":
            return squeeze_decomposition(self.u, self.v).xi
        if self.variant == "sqloss":
            return self.xi
        return 0j

    def to_config(self) -> dict[str, float | str]:
        return {
            "variant": self.variant,
            "n": self.n,
            "u": self.u,
            "v_re": self.v.real,
            "v_im": self.v.imag,
            "eta": self.eta,
            "xi_re": self.xi.real,
            "xi_im": self.xi.imag,
        }

    @classmethod
    def from_config(cls, block: Mapping[str, object]) -> "ChannelSpec":
        known = {"variant", "n", "u", "v_re", "v_im", "eta", "xi_re", "xi_im"}
        unknown = set(block) - known
        if unknown:
            raise ConfigError(f"unknown channel keys: {sorted(unknown)}")
        if "variant" not in block:
            raise ConfigError("channel block needs a 'variant'")

        def num(key, default=0.0):
            try:
                return float(block.get(key, default))
            except (TypeError, ValueError):
                raise ConfigError(f"channel key {key!r} is not a number: {block[key]!r}") from None

        try:
            return cls(
                str(block["variant"]),
                n=num("n"),
                u=num("u"),
                v=complex(num("v_re"), num("v_im")),
                eta=num("eta", 1.0),
                xi=complex(num("xi_re"), num("xi_im")),
            )
        except ParameterError as exc:
            raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Kraus machinery
# ---------------------------------------------------------------------------


def superoperator(kraus: np.ndarray, *, adjoint: bool = False) -> np.ndarray:
    """S with S[(a, c), (b, e)] = sum_i K_i[a, b] conj(K_i[c, e]) (adjoint: K_i -> K_i^dag)."""
    kraus = np.asarray(kraus, dtype=np.complex128)
    if adjoint:
        kraus = kraus.conj().transpose(0, 2, 1)
    n_ops, d, _ = kraus.shape
    flat = kraus.reshape(n_ops, d * d)
    s = (flat.T @ flat.conj()).reshape(d, d, d, d)
    return np.ascontiguousarray(s.transpose(0, 2, 1, 3)).reshape(d * d, d * d)


def _mode_first(matrix: np.ndarray, d: int, num_modes: int, mode: int) -> tuple[np.ndarray, tuple]:
    pre = d**mode
    post = d ** (num_modes - mode - 1)
    x = np.asarray(matrix).reshape(pre, d, post, pre, d, post).transpose(1, 4, 0, 2, 3, 5)
    return x.reshape(d, d, -1), (pre, post)


def _mode_back(y: np.ndarray, d: int, num_modes: int, shape: tuple) -> np.ndarray:
    pre, post = shape
    out = y.reshape(d, d, pre, post, pre, post).transpose(2, 0, 3, 4, 1, 5)
    side = d**num_modes
    return np.ascontiguousarray(out).reshape(side, side)


def apply_kraus_matrix(
    matrix: np.ndarray, d: int, num_modes: int, mode: int, kraus: np.ndarray, *, adjoint: bool = False
) -> np.ndarray:
    """sum_i K_i X K_i^dag on one mode (``adjoint``: sum_i K_i^dag X K_i)."""
    kraus = np.asarray(kraus, dtype=np.complex128)
    if adjoint:
        kraus = kraus.conj().transpose(0, 2, 1)
    x, shape = _mode_first(matrix, d, num_modes, mode)
    rest = x.shape[2]
    x = x.transpose(0, 2, 1).reshape(d, rest * d)  # (b, (R, e))
    acc = np.zeros((d, rest, d), dtype=np.complex128)
    chunk = max(1, _CHUNK_ENTRIES // (d * d * rest))
    for start in range(0, kraus.shape[0], chunk):
        k = kraus[start : start + chunk]
        nc = k.shape[0]
        y = (k.reshape(nc * d, d) @ x).reshape(nc, d, rest, d)  # (i, a, R, e)
        left = y.transpose(1, 2, 0, 3).reshape(d * rest, nc * d)
        right = k.conj().transpose(0, 2, 1).reshape(nc * d, d)  # ((i, e), c)
        acc += (left @ right).reshape(d, rest, d)
    return _mode_back(acc.transpose(0, 2, 1), d, num_modes, shape)


def apply_superoperator(matrix: np.ndarray, d: int, num_modes: int, mode: int, sup: np.ndarray) -> np.ndarray:
    x, shape = _mode_first(matrix, d, num_modes, mode)
    y = sup @ x.reshape(d * d, -1)
    return _mode_back(y, d, num_modes, shape)


def apply_kraus_all(matrix: np.ndarray, d: int, num_modes: int, kraus: np.ndarray, *, adjoint: bool = False):
    """The single-mode map on every mode.

    One mode goes straight through the Kraus sum; several modes go through
    the d^2 x d^2 superoperator, which is cheaper once the other modes make
    the matrix wide.
    """
    if num_modes == 1:
        return apply_kraus_matrix(matrix, d, 1, 0, kraus, adjoint=adjoint)
    sup = superoperator(kraus, adjoint=adjoint)
    out = matrix
    for r in range(num_modes):
        out = apply_superoperator(out, d, num_modes, r, sup)
    return out


def noise_kraus(n: float, d: int, grid: QuadratureGrid | None = None) -> np.ndarray:
    """sqrt(w_i) D(mu_i) over the grid; a single identity for n = 0."""
    if n == 0:
        return np.eye(d, dtype=np.complex128)[None]
    grid = circular_grid(n, DEFAULT_RADIAL, default_angular(d)) if grid is None else grid
    disp = _kernels.displacement_batch(grid.nodes, d)
    return disp * np.sqrt(grid.weights)[:, None, None]


def _noise_kraus_chunks(n: float, grid: QuadratureGrid | None):
    def build(D):
        if n == 0:
            yield np.eye(D, dtype=np.complex128)[None]
            return
        g = circular_grid(n, DEFAULT_RADIAL, default_angular(D)) if grid is None else grid
        step = max(1, _CHUNK_ENTRIES // (D * D))
        for start in range(0, g.size, step):
            nodes = g.nodes[start : start + step]
            w = g.weights[start : start + step]
            yield _kernels.displacement_batch(nodes, D) * np.sqrt(w)[:, None, None]

    return build


def _environment_input(n: float, xi: complex) -> tuple[np.ndarray, int]:
    """Columns sqrt(p_l) |phi_l> spanning the environment input, and their length."""
    tc = thermal_cutoff(n, ENV_TAIL)
    if xi == 0:
        pops = thermal_populations(n, tc)
        keep = pops > 1e-16
        return np.diag(np.sqrt(pops)).astype(np.complex128)[:, keep], tc
    d_in = 2 * tc + 20
    rho_b = squeezed_thermal_state(n, xi, d_in, tail_tolerance=1e-6).matrix
    w, v = np.linalg.eigh(rho_b)
    keep = w > 1e-16
    return v[:, keep] * np.sqrt(w[keep])[None, :], d_in


@lru_cache(maxsize=16)
def _loss_kraus_cached(eta: float, n: float, xi: complex, d: int) -> np.ndarray:
    if eta == 1.0:
        return np.eye(d, dtype=np.complex128)[None]
    env_in, d_in = _environment_input(n, xi)
    if eta == 0.0:
        # swap: the output is the environment state whatever the input,
        # K_{i,l} = sqrt(p_l) |phi_l><i| restricted to d levels
        phis = np.zeros((d, env_in.shape[1]), dtype=np.complex128)
        rows = min(d, d_in)
        phis[:rows] = env_in[:rows]
        ks = np.einsum("pl,iq->lipq", phis, np.eye(d)).reshape(-1, d, d)
    else:
        # env output can hold every signal photon plus the env input ones
        d_out = d + d_in - 1
        k4 = np.zeros((d_out, d, d, env_in.shape[1]), dtype=np.complex128)
        for states, block in beam_splitter_sectors(eta, d, d_out):
            a, e = states[:, 0], states[:, 1]
            cols = e < d_in
            if not cols.any():
                continue
            # K_{e,l}[a, b] = sum_f <a, e| U |b, f> env_in[f, l]
            k4[e[:, None], a[:, None], a[cols][None, :], :] = (
                block[:, cols][:, :, None] * env_in[e[cols]][None, :, :]
            )
        ks = k4.transpose(0, 3, 1, 2).reshape(-1, d, d)
    norms = np.einsum("kab,kab->k", ks, ks.conj()).real
    out = np.ascontiguousarray(ks[norms > 1e-28])
    out.setflags(write=False)
    return out


def loss_kraus(eta: float, n: float, d: int, xi: complex = 0j) -> np.ndarray:
    """Kraus set of Tr_env[U (rho (x) rho_env) U^dag] read off the beam splitter unitary."""
    if not 0.0 <= eta <= 1.0:
        raise ParameterError(f"transmissivity must lie in [0, 1], got {eta}")
    if n < 0:
        raise ParameterError("environment occupation must be >= 0")
    return _loss_kraus_cached(float(eta), float(n), complex(xi), int(d))


def squeeze_padding(d: int) -> int:
    """Extra levels used while building squeezed Kraus sets."""
    return max(20, d)


def _squeeze_sandwich(build, xi: complex, d: int, pad: int | None = None) -> np.ndarray:
    """Kraus set of Sigma^dag Phi(Sigma . Sigma^dag) Sigma, cropped to ``d`` levels.

    ``build(D)`` yields chunks of the Kraus set of Phi on D levels.  The
    sandwich is formed on ``d + pad`` levels and then cropped: for inputs
    supported on the first d levels, cropping Kraus operators is the same as
    embedding the input, evolving on the larger space and cropping the output.
    """
    if xi == 0:
        return np.concatenate(list(build(d)))
    pad = squeeze_padding(d) if pad is None else pad
    big = d + pad
    s = _squeeze_matrix(complex(xi), big, max(big, 20))
    left = np.ascontiguousarray(s.conj().T[:d, :])
    right = np.ascontiguousarray(s[:, :d])
    parts = [left @ chunk @ right for chunk in build(big)]
    return np.concatenate(parts)


def kraus_operators(
    spec: ChannelSpec, d: int, grid: QuadratureGrid | None = None, *, pad: int | None = None
) -> np.ndarray:
    """Single-mode Kraus set for any variant (decomposition routes for gauss / sqloss)."""
    if spec.variant == "noise":
        return noise_kraus(spec.n, d, grid)
    if spec.variant == "gauss":
        dec = squeeze_decomposition(spec.u, spec.v)
        return _squeeze_sandwich(_noise_kraus_chunks(dec.n_eff, grid), dec.xi, d, pad)
    if spec.variant == "loss" or spec.eta == 1.0:
        # at full transmission the environment never reaches the output
        return loss_kraus(spec.eta, spec.n, d)
    return _squeeze_sandwich(lambda D: iter([loss_kraus(spec.eta, spec.n, D)]), spec.xi, d, pad)


def _as_density(rho) -> DensityMatrix:
    if isinstance(rho, DensityMatrix):
        return rho
    if hasattr(rho, "density"):
        return rho.density()
    raise ParameterError("expected a DensityMatrix or PureState")


def _wrap(matrix, like: DensityMatrix, error: float = 0.0) -> DensityMatrix:
    # outputs spread beyond the cutoff; the lost weight shows up as tail mass
    # and is allowed up to the leakage ceiling
    return DensityMatrix.from_matrix(
        matrix,
        like.dim_per_mode,
        like.num_modes,
        error_estimate=error,
        tail_tolerance=max(like.tail_tolerance, LEAKAGE_CEILING),
    )


# ---------------------------------------------------------------------------
# channel applications
# ---------------------------------------------------------------------------


def apply_classical_noise(
    n: float,
    rho,
    *,
    grid: QuadratureGrid | None = None,
    radial: int = DEFAULT_RADIAL,
    angular: int | None = None,
    estimate_error: bool = True,
    target: float = QUADRATURE_TARGET,
    max_radial: int = 64,
) -> DensityMatrix:
    """N_n applied independently to every mode of ``rho``.

    With ``estimate_error`` the sum is repeated on ``radial + 4`` radial and
    ``angular + 8`` angular nodes and the largest entrywise change is
    reported as ``error_estimate``; both counts grow by 8 until that drops
    below ``target``.  An explicit ``grid`` must be normalized to 1e-10 and
    disables estimation and refinement.
    """
    rho = _as_density(rho)
    if n < 0:
        raise ParameterError("noise parameter n must be >= 0")
    d, m = rho.dim_per_mode, rho.num_modes
    if n == 0:
        return _wrap(rho.matrix, rho)
    if grid is not None:
        if grid.normalization_error() > NORMALIZATION_TOLERANCE:
            raise ParameterError(f"quadrature grid weights sum to {grid.total_weight()!r}, not 1")
        out = apply_kraus_all(rho.matrix, d, m, noise_kraus(n, d, grid))
        return _wrap(out, rho)
    angular = default_angular(d) if angular is None else angular
    while circular_grid(n, radial, angular).normalization_error() > NORMALIZATION_TOLERANCE and radial < max_radial:
        radial += 8
    while True:
        out = apply_kraus_all(rho.matrix, d, m, noise_kraus(n, d, circular_grid(n, radial, angular)))
        if not estimate_error:
            return _wrap(out, rho)
        fine_grid = circular_grid(n, radial + 4, angular + 8)
        finer = apply_kraus_all(rho.matrix, d, m, noise_kraus(n, d, fine_grid))
        err = float(np.abs(finer - out).max())
        if err < target or radial + 8 > max_radial:
            return _wrap(finer, rho, err)
        radial += 8
        angular += 8


def apply_gaussian_displacement(
    u: float,
    v: complex,
    rho,
    *,
    route: str = "decomposition",
    radial: int | None = None,
    angular: int | None = None,
) -> DensityMatrix:
    """G(rho) for Gamma = [[u, v*], [v, u]].

    ``decomposition`` squeezes, applies N_{n_eff} and anti-squeezes;
    ``direct`` sums displacements over a grid aligned with Gamma's axes.
    """
    rho = _as_density(rho)
    spec = ChannelSpec.gauss(u, v)
    d, m = rho.dim_per_mode, rho.num_modes
    if route == "decomposition":
        grid = None
        if radial is not None or angular is not None:
            big = d + squeeze_padding(d)
            n_eff = squeeze_decomposition(u, v).n_eff
            grid = circular_grid(n_eff, radial or DEFAULT_RADIAL, angular or default_angular(big))
        kraus = kraus_operators(spec, d, grid)
    elif route == "direct":
        grid = anisotropic_grid(u, v, radial or 48, angular or 64)
        kraus = noise_kraus(1.0, d, grid)
    else:
        raise ParameterError(f"unknown route {route!r}")
    return _wrap(apply_kraus_all(rho.matrix, d, m, kraus), rho)


def apply_thermal_loss(eta: float, n: float, rho, *, method: str = "kraus") -> DensityMatrix:
    """E_n: beam splitter against tau(n), environment traced out.

    ``method="unitary"`` forms U (rho (x) tau) U^dag on the two-mode space and
    partial-traces it (single-mode inputs only); ``"kraus"`` uses the Kraus
    set read off the same U and handles any number of modes.
    """
    return _loss(eta, n, 0j, _as_density(rho), method)


def apply_squeezed_env_loss(
    eta: float, n: float, xi: complex, rho, *, route: str = "decomposition", method: str = "kraus"
) -> DensityMatrix:
    """L: beam splitter against Sigma^dag tau(n) Sigma.

    ``decomposition`` evaluates Sigma^dag E_n(Sigma rho Sigma^dag) Sigma;
    ``direct`` couples to the squeezed thermal environment itself.
    """
    rho = _as_density(rho)
    if route == "direct":
        return _loss(eta, n, complex(xi), rho, method)
    if route != "decomposition":
        raise ParameterError(f"unknown route {route!r}")
    d, m = rho.dim_per_mode, rho.num_modes
    kraus = kraus_operators(ChannelSpec.sqloss(eta, n, xi), d)
    return _wrap(apply_kraus_all(rho.matrix, d, m, kraus), rho)


def _loss(eta: float, n: float, xi: complex, rho: DensityMatrix, method: str) -> DensityMatrix:
    if not 0.0 <= eta <= 1.0:
        raise ParameterError(f"transmissivity must lie in [0, 1], got {eta}")
    if n < 0:
        raise ParameterError("environment occupation must be >= 0")
    d, m = rho.dim_per_mode, rho.num_modes
    if method == "unitary":
        if m != 1:
            raise ParameterError("unitary method handles single-mode inputs; use method='kraus'")
        return _wrap(_loss_unitary(eta, n, xi, rho.matrix, d), rho)
    if method != "kraus":
        raise ParameterError(f"unknown method {method!r}")
    kraus = loss_kraus(eta, n, d, xi)
    return _wrap(apply_kraus_all(rho.matrix, d, m, kraus), rho)


def _loss_unitary(eta: float, n: float, xi: complex, matrix: np.ndarray, d: int) -> np.ndarray:
    env_in, d_in = _environment_input(n, xi)
    if eta == 1.0:
        return np.array(matrix, dtype=np.complex128)
    d_env = d + d_in - 1
    vecs = np.zeros((d_env, env_in.shape[1]), dtype=np.complex128)
    vecs[:d_in] = env_in
    env = vecs @ vecs.conj().T
    if eta == 0.0:
        u = np.zeros((d * d_env, d * d_env))
        for i in range(d):
            for j in range(min(d, d_env)):
                u[j * d_env + i, i * d_env + j] = (-1) ** i
    else:
        u = beam_splitter_matrix(float(eta), d, d_env)
    joint = np.kron(matrix, env)
    out = u @ joint @ u.conj().T
    return partial_trace_matrix(out, [d, d_env], [0])


def apply_channel(spec: ChannelSpec, rho, **kw) -> DensityMatrix:
    """Dispatch on ``spec.variant`` (default routes)."""
    if spec.variant == "noise":
        return apply_classical_noise(spec.n, rho, **kw)
    if spec.variant == "gauss":
        return apply_gaussian_displacement(spec.u, spec.v, rho, **kw)
    if spec.variant == "loss":
        return apply_thermal_loss(spec.eta, spec.n, rho, **kw)
    return apply_squeezed_env_loss(spec.eta, spec.n, spec.xi, rho, **kw)


def channel_adjoint_apply(spec: ChannelSpec, X, *, grid: QuadratureGrid | None = None) -> TruncatedOperator:
    """Heisenberg-picture action sum_i K_i^dag X K_i on every mode of ``X``."""
    if isinstance(X, DensityMatrix):
        X = X.operator
    d, m = X.dim_per_mode, X.num_modes
    kraus = kraus_operators(spec, d, grid)
    return TruncatedOperator(apply_kraus_all(X.matrix, d, m, kraus, adjoint=True), d, m)


def channel_apply_operator(spec: ChannelSpec, X, *, grid: QuadratureGrid | None = None) -> TruncatedOperator:
    """Schroedinger-picture action on an arbitrary (not necessarily positive) operator."""
    if isinstance(X, DensityMatrix):
        X = X.operator
    d, m = X.dim_per_mode, X.num_modes
    kraus = kraus_operators(spec, d, grid)
    return TruncatedOperator(apply_kraus_all(X.matrix, d, m, kraus), d, m)


def check_cutoff_for(spec: ChannelSpec, d: int) -> None:
    """Raise if the environment of a loss channel cannot be represented at all."""
    if spec.variant in ("loss", "sqloss") and thermal_cutoff(spec.n, ENV_TAIL) > 4096:
        raise CutoffError("environment occupation too large for a dense Fock representation")

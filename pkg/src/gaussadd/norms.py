"""Schatten norms, Renyi entropies, closed-form maximal output norms and bounds."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .channels import ChannelSpec
from .errors import ConsistencyError, ParameterError
from .fock import clipped_eigenvalues

ENTROPY_FLOOR = 1e-14
MONOTONICITY_SLACK = 1e-12
ROUTES = ("numeric", "closed_form", "bound_upper", "bound_lower")


def z_norm(rho, z: float) -> float:
    """(sum_i lambda_i^z)^(1/z) over the clipped spectrum."""
    if z < 1:
        raise ParameterError(f"z-norm needs z >= 1, got {z}")
    lam = clipped_eigenvalues(rho)
    lam = lam[lam > 0]
    if math.isinf(z):
        return float(lam.max())
    return float(np.sum(lam**z) ** (1.0 / z))


def renyi_entropy(rho, z: float) -> float:
    """-ln Tr[rho^z] / (z - 1); z = 1 gives the von Neumann entropy."""
    if z <= 0:
        raise ParameterError(f"Renyi order must be positive, got {z}")
    lam = clipped_eigenvalues(rho)
    lam = lam[lam > ENTROPY_FLOOR]
    if z == 1:
        return float(max(0.0, -np.sum(lam * np.log(lam))))
    return float(max(0.0, -np.log(np.sum(lam**z)) / (z - 1.0)))


def coherent_output_norm(n: float, z: float) -> float:
    """z-norm of the noise channel output on any coherent input: [(n+1)^z - n^z]^(-1/z)."""
    if z < 1:
        raise ParameterError(f"z-norm needs z >= 1, got {z}")
    if n < 0:
        raise ParameterError("noise parameter n must be >= 0")
    if n == 0:
        return 1.0
    return float(((n + 1.0) ** z - n**z) ** (-1.0 / z))


def _moment_nu(n_eff: float, z: float, m: int) -> float:
    if n_eff == 0:
        return 1.0
    return float(((n_eff + 1.0) ** z - n_eff**z) ** (-m / z))


def closed_form_nu(spec: ChannelSpec, k: int, m: int = 1) -> float:
    """Maximal output k-norm of ``spec`` used m times: [(N+1)^k - N^k]^(-m/k).

    N is the effective noise of the variant, so the squeezed families reuse
    the circular result.
    """
    if int(k) != k or k < 1 or int(m) != m or m < 1:
        raise ParameterError("k and m must be positive integers")
    if k == 1:
        return 1.0
    return _moment_nu(spec.effective_noise, float(k), int(m))


def bounds_nu(n: float, z: float, m: int = 1) -> tuple[float, float]:
    """(upper, lower) bounds on the maximal z-norm of N_n^(x)m for real z >= 1.

    The upper bound is the closed form at the integer floor(z); the lower
    bound is the coherent-input value at z itself.
    """
    if z < 1:
        raise ParameterError(f"bounds need z >= 1, got {z}")
    if n < 0:
        raise ParameterError("noise parameter n must be >= 0")
    k = math.floor(z)
    upper = _moment_nu(n, float(k), m) if k > 1 else 1.0
    lower = _moment_nu(n, float(z), m)
    return upper, lower


def bound_curve(n: float, m: int, zs) -> np.ndarray:
    """Rows (z, upper, lower) for every z in ``zs``."""
    rows = [(float(z), *bounds_nu(n, float(z), m)) for z in zs]
    return np.array(rows, dtype=float)


@dataclass(frozen=True)
class MonotonicityReport:
    z: float
    z_prime: float
    entropy_margin: float
    norm_margin: float

    @property
    def ok(self) -> bool:
        return self.entropy_margin >= -MONOTONICITY_SLACK and self.norm_margin >= -MONOTONICITY_SLACK


def renyi_monotonicity_check(rho, z: float, z_prime: float, *, strict: bool = True) -> MonotonicityReport:
    """Check ((z-1)/z) S_z >= ((z'-1)/z') S_z' and ||rho||_z <= ||rho||_z' for z >= z' >= 1.

    Margins are reported as (larger side - smaller side).  With ``strict`` a
    violation beyond 1e-12 raises ConsistencyError.
    """
    if not z >= z_prime >= 1:
        raise ParameterError("need z >= z' >= 1")
    lhs = (z - 1.0) / z * renyi_entropy(rho, z)
    rhs = (z_prime - 1.0) / z_prime * renyi_entropy(rho, z_prime)
    report = MonotonicityReport(z, z_prime, lhs - rhs, z_norm(rho, z_prime) - z_norm(rho, z))
    if strict and not report.ok:
        raise ConsistencyError(
            f"Renyi monotonicity violated: entropy margin {report.entropy_margin:.3e}, "
            f"norm margin {report.norm_margin:.3e}"
        )
    return report


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("z", "value", "route", "channel", "m", "error_estimate")


_LABEL_KEYS = {
    "noise": ("n",),
    "gauss": ("u", "v_re", "v_im"),
    "loss": ("eta", "n"),
    "sqloss": ("eta", "n", "xi_re", "xi_im"),
}


def channel_label(spec: ChannelSpec) -> str:
    """Compact one-cell description, e.g. ``loss;eta=0.7;n=0.5``."""
    cfg = spec.to_config()
    return ";".join([spec.variant] + [f"{key}={cfg[key]:g}" for key in _LABEL_KEYS[spec.variant]])


@dataclass(frozen=True)
class NormReport:
    z: float
    value: float
    route: str
    channel: ChannelSpec
    m: int = 1
    error_estimate: float = 0.0

    def __post_init__(self):
        if self.route not in ROUTES:
            raise ParameterError(f"unknown route tag {self.route!r}")
        if self.z < 1:
            raise ParameterError("z must be >= 1")
        if not 0.0 < self.value <= 1.0 + 1e-9:
            raise ParameterError(f"norm value {self.value!r} outside (0, 1]")

    def to_row(self) -> dict:
        return {
            "z": self.z,
            "value": self.value,
            "route": self.route,
            "channel": self.channel.to_config(),
            "m": self.m,
            "error_estimate": self.error_estimate,
        }


def reports_to_json(reports) -> str:
    return json.dumps([r.to_row() for r in reports], sort_keys=True, indent=2) + "\n"


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        writer.writerow([repr(r.z), repr(r.value), r.route, channel_label(r.channel), r.m, repr(r.error_estimate)])
    return buf.getvalue()

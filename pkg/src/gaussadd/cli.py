"""Command-line front end: norms, bounds, verify, optimize.

Runs are driven by an INI-style config file (sections ``run``, ``channel``,
``numeric``, ``output``) with every key overridable by a flag.  Exit codes:
0 pass, 1 verification failure, 2 config error, 3 resource ceiling.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import os
import re
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channels import ChannelSpec, apply_channel, apply_classical_noise, apply_gaussian_displacement
from .channels import apply_squeezed_env_loss, apply_thermal_loss, squeeze_padding
from .errors import ConfigError, ConsistencyError, GaussaddError, ResourceError
from .fock import DensityMatrix, PureState, _squeeze_matrix, random_pure_state, trace_distance
from .norms import bound_curve, closed_form_nu, z_norm
from .optimize import OptimizerConfig, maximize_output_norm
from .structure import lambda0_routes
from .theta import build_theta, laguerre_integral_oracle, optimal_eigenvector, oracle_parameters
from .theta import spectral_bound_check, trace_identity_check

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3
COMMANDS = ("norms", "bounds", "verify", "optimize")

# section -> key -> parser
_INT, _FLOAT, _STR, _BOOL = "int", "float", "str", "bool"
SCHEMA = {
    "run": {"command": _STR},
    "channel": {
        "variant": _STR,
        "n": _FLOAT,
        "u": _FLOAT,
        "v_re": _FLOAT,
        "v_im": _FLOAT,
        "eta": _FLOAT,
        "xi_re": _FLOAT,
        "xi_im": _FLOAT,
    },
    "numeric": {
        "cutoff": _INT,
        "m": _INT,
        "k": _INT,
        "z_min": _FLOAT,
        "z_max": _FLOAT,
        "z_steps": _INT,
        "radial": _INT,
        "angular": _INT,
        "seed": _INT,
        "restarts": _INT,
        "max_iter": _INT,
    },
    "output": {"out": _STR, "format": _STR, "timings": _BOOL},
}

# flag dest -> (section, key)
FLAG_KEYS = {
    "channel": ("channel", "variant"),
    "n": ("channel", "n"),
    "u": ("channel", "u"),
    "v_re": ("channel", "v_re"),
    "v_im": ("channel", "v_im"),
    "eta": ("channel", "eta"),
    "xi_re": ("channel", "xi_re"),
    "xi_im": ("channel", "xi_im"),
    "k": ("numeric", "k"),
    "m": ("numeric", "m"),
    "cutoff": ("numeric", "cutoff"),
    "z_min": ("numeric", "z_min"),
    "z_max": ("numeric", "z_max"),
    "z_steps": ("numeric", "z_steps"),
    "radial": ("numeric", "radial"),
    "angular": ("numeric", "angular"),
    "seed": ("numeric", "seed"),
    "restarts": ("numeric", "restarts"),
    "max_iter": ("numeric", "max_iter"),
    "out": ("output", "out"),
    "format": ("output", "format"),
    "timings": ("output", "timings"),
}


@dataclass
class RunConfig:
    command: str
    channel: ChannelSpec
    numeric: dict = field(default_factory=dict)
    out: str | None = None
    format: str = "json"
    timings: bool = False
    source: str = "<flags>"

    def get(self, key: str, default=None):
        val = self.numeric.get(key)
        return default if val is None else val


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^#;\s=:][^=:]*?)\s*[=:]")


def _key_lines(text: str) -> tuple[dict, dict]:
    """Line numbers of section headers and of ``key = value`` lines."""
    sections, keys = {}, {}
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        sec = _SECTION_RE.match(line)
        if sec:
            current = sec.group(1).strip()
            sections.setdefault(current, lineno)
            continue
        key = _KEY_RE.match(line)
        if key and current is not None and not line[:1].isspace():
            keys.setdefault((current, key.group(1).strip().lower()), lineno)
    return sections, keys


def _convert(kind: str, raw: str, where: str):
    raw = raw.strip()
    try:
        if kind == _INT:
            return int(raw)
        if kind == _FLOAT:
            val = float(raw)
            if not math.isfinite(val):
                raise ValueError
            return val
        if kind == _BOOL:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
    except ValueError:
        raise ConfigError(f"{where}: expected {kind}, got {raw!r}") from None
    return raw


def read_config(path: str | os.PathLike) -> dict:
    """Parse and schema-check a config file into {section: {key: value}}."""
    path = str(path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    parser = configparser.ConfigParser(
        interpolation=None, strict=True, default_section="\x00unused", inline_comment_prefixes=(";", "#")
    )
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        # the parser's own messages already carry file and line
        raise ConfigError(" ".join(str(exc).split())) from None
    sections, keys = _key_lines(text)
    out: dict = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{path}:{sections.get(section, '?')}: unknown section [{section}]")
        block = {}
        for key, raw in parser.items(section):
            line = keys.get((section, key), sections.get(section, "?"))
            where = f"{path}:{line}: {section}.{key}"
            if key not in SCHEMA[section]:
                raise ConfigError(f"{where}: unknown key")
            block[key] = _convert(SCHEMA[section][key], raw, where)
        out[section] = block
    out["_lines"] = (sections, keys)
    return out


def _channel_from_block(block: dict, where: str) -> ChannelSpec:
    try:
        return ChannelSpec.from_config(block)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge config file and flags (flags win) and validate before any computation."""
    raw = read_config(args.config) if args.config else {}
    sections, _keys = raw.pop("_lines", ({}, {}))
    source = args.config or "<flags>"
    for dest, (section, key) in FLAG_KEYS.items():
        val = getattr(args, dest, None)
        if val is not None:
            raw.setdefault(section, {})[key] = val
    command = args.command
    declared = raw.get("run", {}).get("command")
    if declared is not None and declared != command:
        raise ConfigError(f"{source}:{sections.get('run', '?')}: config is for {declared!r}, not {command!r}")
    channel_block = dict(raw.get("channel", {}))
    channel_block.setdefault("variant", "noise")
    if channel_block["variant"] == "noise":
        channel_block.setdefault("n", 0.3)
    where = f"{source}:{sections.get('channel', '?')}" if "channel" in sections else source
    spec = _channel_from_block(channel_block, where)
    numeric = dict(raw.get("numeric", {}))
    for key, val in numeric.items():
        if key in ("cutoff", "m", "k", "z_steps", "radial", "angular", "restarts", "max_iter") and val < 1:
            raise ConfigError(f"{source}: numeric.{key} must be >= 1, got {val}")
    output = raw.get("output", {})
    fmt = output.get("format", "json")
    if fmt not in ("json", "csv"):
        raise ConfigError(f"{source}: output.format must be json or csv, got {fmt!r}")
    return RunConfig(command, spec, numeric, output.get("out"), fmt, bool(output.get("timings", False)), source)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.out:
        atomic_write(cfg.out, text)
    else:
        sys.stdout.write(text)


def _tagged(value: float, route: str) -> dict:
    return {"route": route, "value": float(value)}


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _optimal_input(spec: ChannelSpec, d: int) -> DensityMatrix:
    """Vacuum, anti-squeezed for the variants whose optimum is squeezed."""
    psi = np.zeros(d, dtype=np.complex128)
    psi[0] = 1.0
    xi = spec.squeezing
    if xi != 0:
        psi = _squeeze_matrix(-complex(xi), d, squeeze_padding(d))[:, 0]
    return PureState(psi, d).density()


def cmd_norms(cfg: RunConfig) -> tuple[int, str]:
    """Rows (channel, k, m, closed_form, numeric, |diff|) for the configured channel."""
    d = cfg.get("cutoff", 40)
    m = cfg.get("m", 1)
    ks = [cfg.get("k")] if cfg.get("k") else [2, 3, 4]
    kw = {}
    if cfg.channel.variant == "noise":
        kw = {"radial": cfg.get("radial", 24), "angular": cfg.get("angular")}
    out = apply_channel(cfg.channel, _optimal_input(cfg.channel, d), **kw)
    rows = []
    for k in ks:
        closed = closed_form_nu(cfg.channel, k, m)
        # product input, product output: the m-use norm is the single-use norm to the m-th power
        numeric = z_norm(out, k) ** m
        rows.append(
            {
                "channel": cfg.channel.to_config(),
                "k": k,
                "m": m,
                "closed_form": _tagged(closed, "closed_form"),
                "numeric": _tagged(numeric, "numeric"),
                "abs_diff": _tagged(abs(numeric - closed), "numeric"),
                # Tr[sigma^k] per use, the quantity the optimizer maximizes
                "moment_closed_form": _tagged(closed**k, "closed_form"),
                "moment_numeric": _tagged(numeric**k, "numeric"),
            }
        )
    if cfg.format == "csv":
        label = cfg.channel.variant
        body = _csv(
            ["channel", "k", "m", "closed_form", "numeric", "abs_diff"],
            [
                [label, r["k"], r["m"], repr(r["closed_form"]["value"]), repr(r["numeric"]["value"]), repr(r["abs_diff"]["value"])]
                for r in rows
            ],
        )
    else:
        body = _dumps({"rows": rows})
    return EXIT_OK, body


def z_grid(z_min: float, z_max: float, steps: int) -> np.ndarray:
    """Uniform grid with every integer in range inserted exactly."""
    if not 1.0 <= z_min < z_max <= 8.0:
        raise ConfigError(f"z-grid must satisfy 1 <= z_min < z_max <= 8, got [{z_min}, {z_max}]")
    if steps < 2:
        raise ConfigError("z_steps must be >= 2")
    zs = np.round(np.linspace(z_min, z_max, steps), 12)
    ints = np.arange(math.ceil(z_min), math.floor(z_max) + 1, dtype=float)
    return np.unique(np.concatenate([zs, ints]))


GNUPLOT_TEMPLATE = """\
set datafile separator ','
set key top right
set xlabel 'z'
set ylabel 'bound on maximal output z-norm'
set title 'm = {m}, n = {n}'
plot '{csv}' using 1:2 skip 1 with lines title 'upper', \\
     '{csv}' using 1:3 skip 1 with lines title 'lower'
"""


def cmd_bounds(cfg: RunConfig) -> tuple[int, dict[str, str]]:
    """CSV (z, upper, lower) plus a gnuplot script; checks ordering and integer meeting points."""
    if cfg.channel.variant != "noise":
        raise ConfigError("bounds are defined for the noise channel only")
    n, m = cfg.channel.n, cfg.get("m", 2)
    zs = z_grid(cfg.get("z_min", 1.0), cfg.get("z_max", 5.0), cfg.get("z_steps", 401))
    curve = bound_curve(n, m, zs)
    bad_order = curve[curve[:, 1] < curve[:, 2] - 1e-15]
    at_int = curve[np.isclose(curve[:, 0], np.round(curve[:, 0]), rtol=0, atol=0)]
    meet_gap = float(np.abs(at_int[:, 1] - at_int[:, 2]).max()) if len(at_int) else 0.0
    passed = len(bad_order) == 0 and meet_gap < 1e-12
    out = cfg.out or "bounds.csv"
    files = {}
    if cfg.format == "csv":
        files[out] = _csv(["z", "upper", "lower"], [[repr(float(z)), repr(float(u)), repr(float(lo))] for z, u, lo in curve])
    else:
        files[out] = _dumps(
            {
                "m": m,
                "n": n,
                "points": [
                    {"z": float(z), "upper": _tagged(u, "bound_upper"), "lower": _tagged(lo, "bound_lower")}
                    for z, u, lo in curve
                ],
                "integer_meeting_gap": _tagged(meet_gap, "bound"),
                "passed": passed,
            }
        )
    script = str(Path(out).with_suffix(".gp"))
    csv_name = Path(out).name if cfg.format == "csv" else Path(out).with_suffix(".csv").name
    if cfg.format != "csv":
        files[str(Path(out).with_suffix(".csv"))] = _csv(
            ["z", "upper", "lower"], [[repr(float(z)), repr(float(u)), repr(float(lo))] for z, u, lo in curve]
        )
    files[script] = GNUPLOT_TEMPLATE.format(m=m, n=n, csv=csv_name)
    return (EXIT_OK if passed else EXIT_FAIL), files


@dataclass
class Check:
    name: str
    passed: bool
    gap: float
    tolerance: float
    seconds: float = 0.0
    detail: dict = field(default_factory=dict)

    def to_dict(self, timings: bool) -> dict:
        row = {
            "name": self.name,
            "passed": self.passed,
            "gap": _tagged(self.gap, "numeric"),
            "tolerance": self.tolerance,
            "detail": self.detail,
        }
        if timings:
            row["seconds"] = self.seconds
        return row


def _timed(name: str, tol: float, fn) -> Check:
    start = time.perf_counter()
    try:
        gap, detail = fn()
        ok = gap <= tol
    except ConsistencyError as exc:
        gap, detail, ok = float("inf"), {"error": str(exc).splitlines()[0]}, False
    return Check(name, bool(ok), float(gap), tol, time.perf_counter() - start, detail)


def verify_suite(cfg: RunConfig) -> list[Check]:
    """Identity checks for k <= 3, m <= 2, d <= 8 (restricted by --k / --m / --cutoff)."""
    n = cfg.channel.n if cfg.channel.variant == "noise" and cfg.channel.n > 0 else 0.3
    seed = cfg.get("seed", 0)
    ks = [cfg.get("k")] if cfg.get("k") else [2, 3]
    ms = [cfg.get("m")] if cfg.get("m") else [1, 2]
    dcap = cfg.get("cutoff", 8)
    checks: list[Check] = []

    def lambda_routes():
        worst = 0.0
        for k in range(2, 9) if ks != [1] else [1]:
            for nn in (0.1, 0.3, 1.0, 5.0):
                for mm in (1, 2):
                    r = lambda0_routes(k, nn, mm)
                    vals = np.array(list(r.values()))
                    worst = max(worst, float(np.abs(vals - r["closed_form"]).max() / r["closed_form"]))
        return worst, {}

    checks.append(_timed("lambda0_three_routes", 1e-12, lambda_routes))

    cases = [(k, m, d) for (k, m, d) in ((1, 1, 8), (1, 2, 5), (2, 1, 8), (3, 1, 6), (2, 2, 5), (3, 2, 3)) if k in ks and m in ms]
    cases = [(k, m, min(d, dcap)) for k, m, d in cases]
    for k, m, d in cases:
        theta = build_theta(k, m, n, d)

        def spectral(k=k, m=m, d=d, theta=theta):
            # the quadrature route for k = 3 on two uses needs ~2e9 nodes; it is cross-checked at m = 1
            rep = spectral_bound_check(k, m, n, d, theta=theta, strict=False, cross_check=m == 1 or k == 2)
            gap = abs(rep.lambda0_numeric - rep.lambda0_closed)
            if not rep.passed:
                gap = max(gap, float("inf") if rep.route_gap is None else rep.route_gap)
            return gap, {
                "eigvec_condition": _tagged(rep.eigvec_condition, "numeric"),
                "lambda0": _tagged(rep.lambda0_closed, "closed_form"),
                "route_gap": None if rep.route_gap is None else _tagged(rep.route_gap, "numeric"),
                "spectral_radius": _tagged(rep.lambda0_numeric, "numeric"),
            }

        checks.append(_timed(f"spectral_bound k={k} m={m} d={d}", 1e-4, spectral))

        def trace(k=k, m=m, d=d, theta=theta):
            rng = np.random.default_rng(np.random.SeedSequence([seed, k, m, d]))
            worst = 0.0
            for _ in range(3):
                psi = random_pure_state(d, m, support=max(2, d // 2), rng=rng)
                worst = max(worst, trace_identity_check(psi, k, n, theta=theta).gap)
            return worst, {"states": 3}

        checks.append(_timed(f"trace_identity k={k} m={m} d={d}", 1e-4, trace))

        if k > 1 and d >= 6:

            def eigvec(k=k, m=m, d=d, theta=theta):
                res = optimal_eigenvector(k, m, n, d, [0.3] * m, theta=theta)
                return res.residual, {"basis_overlap": _tagged(res.basis_overlap, "numeric")}

            checks.append(_timed(f"optimal_eigenvector k={k} m={m} d={d}", 1e-4, eigvec))

    def oracle():
        worst = 0.0
        for k in [k for k in ks if k > 1]:
            for nn in (0.5, 1.0):
                for dj, ej in oracle_parameters(k, nn):
                    for p in range(7):
                        for q in range(7):
                            if p != q and max(p, q) > 4:
                                continue
                            worst = max(worst, laguerre_integral_oracle(p, q, dj, ej, nn).error)
        return worst, {}

    if any(k > 1 for k in ks):
        checks.append(_timed("laguerre_integral_oracle", 1e-8, oracle))
        checks.extend(_decomposition_checks(seed))
    return checks


def _decomposition_checks(seed: int) -> list[Check]:
    d = 30
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    rho = random_pure_state(d, support=6, rng=rng).density()

    def gauss(v):
        a = apply_gaussian_displacement(0.6, v, rho, route="direct")
        b = apply_gaussian_displacement(0.6, v, rho, route="decomposition")
        return trace_distance(a, b), {}

    def sqloss():
        a = apply_squeezed_env_loss(0.8, 0.2, 0.3, rho, route="direct")
        b = apply_squeezed_env_loss(0.8, 0.2, 0.3, rho, route="decomposition")
        return trace_distance(a, b), {}

    def composition():
        a = apply_thermal_loss(0.7, 0.5, rho)
        b = apply_classical_noise((1 - 0.7) * 0.5, apply_thermal_loss(0.7, 0.0, rho))
        return trace_distance(a, b), {}

    return [
        _timed("gauss_decomposition v=0.3", 1e-4, lambda: gauss(0.3)),
        _timed("gauss_decomposition v=0.3i", 1e-4, lambda: gauss(0.3j)),
        _timed("sqloss_decomposition", 1e-4, sqloss),
        _timed("loss_composition", 1e-4, composition),
    ]


def cmd_verify(cfg: RunConfig) -> tuple[int, str]:
    checks = verify_suite(cfg)
    passed = all(c.passed for c in checks)
    report = {"checks": [c.to_dict(cfg.timings) for c in checks], "passed": passed}
    if cfg.format == "csv":
        rows = [[c.name, c.passed, repr(c.gap), repr(c.tolerance)] for c in checks]
        body = _csv(["check", "passed", "numeric_gap", "tolerance"], rows)
    else:
        body = _dumps(report)
    return (EXIT_OK if passed else EXIT_FAIL), body


def optimizer_config(cfg: RunConfig) -> OptimizerConfig:
    return OptimizerConfig(
        cutoff=cfg.get("cutoff", 20),
        uses=cfg.get("m", 1),
        order=cfg.get("k", 2),
        restarts=cfg.get("restarts", 16),
        max_iter=cfg.get("max_iter", 2000),
        seed=cfg.get("seed", 0),
    )


def cmd_optimize(cfg: RunConfig) -> tuple[int, str, str]:
    """Optimizer result plus a summary; fails if the best value misses the closed form."""
    opt = optimizer_config(cfg)
    result = maximize_output_norm(cfg.channel, opt)
    tol = 1e-3 * opt.uses
    passed = result.gap is None or abs(result.gap) < tol
    body = result.traces_csv() if cfg.format == "csv" else result.to_json()
    return (EXIT_OK if passed else EXIT_FAIL), body, result.summary()


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaussadd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH")
    common.add_argument("--channel", choices=("noise", "gauss", "loss", "sqloss"))
    for flag in ("n", "u", "v-re", "v-im", "eta", "xi-re", "xi-im", "z-min", "z-max"):
        common.add_argument(f"--{flag}", type=float)
    for flag in ("k", "m", "cutoff", "z-steps", "seed", "radial", "angular", "restarts", "max-iter"):
        common.add_argument(f"--{flag}", type=int)
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--timings", action="store_true", default=None, help="include runtimes in reports")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("norms", parents=[common], help="closed-form vs numeric maximal output norms")
    sub.add_parser("bounds", parents=[common], help="upper/lower bound curves for real z")
    sub.add_parser("verify", parents=[common], help="run the identity suite")
    sub.add_parser("optimize", parents=[common], help="maximize the output norm over pure inputs")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = build_run_config(args)
        if cfg.command == "norms":
            code, body = cmd_norms(cfg)
            _emit(cfg, body)
        elif cfg.command == "bounds":
            code, files = cmd_bounds(cfg)
            for path, text in files.items():
                atomic_write(path, text)
            print("wrote " + ", ".join(files), file=sys.stderr)
        elif cfg.command == "verify":
            code, body = cmd_verify(cfg)
            _emit(cfg, body)
        else:
            code, body, summary = cmd_optimize(cfg)
            _emit(cfg, body)
            print(summary, file=sys.stderr)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        print(f"resource ceiling: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except ConsistencyError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except GaussaddError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if code == EXIT_FAIL:
        print("verification failure", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

import gaussadd.structure as structure
from gaussadd import cli
from gaussadd.errors import ConfigError

import oracles

# keys whose numbers are inputs or counts rather than computed results
PARAMETER_KEYS = {"k", "m", "n", "d", "z", "u", "v_re", "v_im", "eta", "xi_re", "xi_im", "tolerance", "states",
                  "cutoff", "uses", "order", "restarts", "max_iter", "step", "tol", "seed", "iterations", "seconds"}


def untagged_numbers(obj, key=None):
    """Paths of numbers that are neither parameters nor inside a {route, value} pair."""
    if isinstance(obj, dict):
        if "route" in obj and "value" in obj:
            return []
        return [p for k, v in obj.items() for p in untagged_numbers(v, k)]
    if isinstance(obj, list):
        return [p for v in obj for p in untagged_numbers(v, key)]
    if isinstance(obj, (int, float)) and not isinstance(obj, bool) and key not in PARAMETER_KEYS:
        return [key]
    return []


def run(args, capsys):
    code = cli.main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_norms_noise_default(capsys):
    code, out, _ = run(["norms", "--k", "2"], capsys)
    assert code == 0
    (row,) = json.loads(out)["rows"]
    assert row["moment_closed_form"]["value"] == pytest.approx(0.625, abs=1e-14)
    assert row["moment_numeric"]["value"] == pytest.approx(0.625, abs=1e-5)
    assert row["closed_form"]["value"] == pytest.approx(0.625**0.5, abs=1e-14)
    assert row["abs_diff"]["value"] < 1e-5
    assert untagged_numbers(json.loads(out)) == []


def test_norms_identity_channel(capsys):
    code, out, _ = run(["norms", "--channel", "loss", "--eta", "1", "--n", "0.4", "--cutoff", "10"], capsys)
    assert code == 0
    for row in json.loads(out)["rows"]:
        assert row["closed_form"]["value"] == 1.0
        assert row["numeric"]["value"] == pytest.approx(1.0, abs=1e-12)


def test_norms_gauss_uses_effective_noise(capsys):
    code, out, _ = run(["norms", "--channel", "gauss", "--u", "0.6", "--v-re", "0.3", "--k", "2"], capsys)
    assert code == 0
    (row,) = json.loads(out)["rows"]
    n_eff = oracles.FROZEN["n_eff_u0.6_v0.3"]
    assert row["moment_closed_form"]["value"] == pytest.approx(oracles.thermal_moment(n_eff, 2), rel=1e-12)
    assert row["abs_diff"]["value"] < 1e-5


def test_norms_csv(capsys):
    code, out, _ = run(["norms", "--format", "csv", "--m", "2"], capsys)
    assert code == 0
    rows = list(csv.DictReader(out.splitlines()))
    assert [r["k"] for r in rows] == ["2", "3", "4"]
    assert float(rows[0]["closed_form"]) == pytest.approx(0.625, abs=1e-14)


def test_bounds_files(tmp_path, capsys):
    out = tmp_path / "fig" / "bounds.csv"
    code, _, _ = run(["bounds", "--format", "csv", "--out", str(out)], capsys)
    assert code == 0
    rows = list(csv.DictReader(out.read_text().splitlines()))
    assert list(rows[0]) == ["z", "upper", "lower"]
    table = {float(r["z"]): (float(r["upper"]), float(r["lower"])) for r in rows}
    assert table[1.0] == (1.0, 1.0)
    assert table[2.0][0] == pytest.approx(0.625, abs=1e-14)
    assert abs(table[2.0][0] - table[2.0][1]) < 1e-12
    assert table[3.0][0] == pytest.approx(oracles.FROZEN["bound_meet_z3_m2_n0.3"], rel=1e-13)
    assert all(u >= lo for u, lo in table.values())
    script = (tmp_path / "fig" / "bounds.gp").read_text()
    assert "'bounds.csv' using 1:2" in script and "using 1:3" in script


def test_bounds_json_is_tagged(tmp_path, capsys):
    out = tmp_path / "b.json"
    code, _, _ = run(["bounds", "--out", str(out), "--z-steps", "11"], capsys)
    assert code == 0
    data = json.loads(out.read_text())
    assert data["passed"]
    assert untagged_numbers(data) == []
    assert (tmp_path / "b.csv").exists() and (tmp_path / "b.gp").exists()


@pytest.mark.parametrize("flags", [["--z-max", "9"], ["--z-min", "0.5"], ["--z-min", "3", "--z-max", "2"]])
def test_bounds_grid_limits(flags, tmp_path, capsys):
    code, _, err = run(["bounds", "--out", str(tmp_path / "x.csv"), *flags], capsys)
    assert code == 2
    assert "z-grid" in err


def test_z_grid_includes_integers():
    zs = cli.z_grid(1.0, 4.0, 7)
    for z in (1.0, 2.0, 3.0, 4.0):
        assert z in zs


def test_verify_k1_suite(capsys):
    code, out, _ = run(["verify", "--k", "1"], capsys)
    assert code == 0
    data = json.loads(out)
    assert data["passed"] and len(data["checks"]) >= 3
    # only the truncated channel tail separates the two sides
    assert all(c["gap"]["value"] < 1e-9 for c in data["checks"])


def test_verify_small_suite_is_deterministic(tmp_path, capsys):
    args = ["verify", "--k", "2", "--m", "1", "--cutoff", "5"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(args + ["--out", str(a)], capsys)[0] == 0
    assert run(args + ["--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    data = json.loads(a.read_text())
    assert untagged_numbers(data) == []
    assert all("seconds" not in c for c in data["checks"])


def test_verify_timings_flag(capsys):
    code, out, _ = run(["verify", "--k", "1", "--timings"], capsys)
    assert code == 0
    assert all("seconds" in c for c in json.loads(out)["checks"])


def test_verify_catches_flipped_coupling(monkeypatch, capsys):
    original = structure.build_circulant_triple

    def flipped(k, n):
        tri = original(k, n)
        return structure.CirculantTriple(tri.k, tri.n, tri.G, -tri.A, np.eye(k) / n - tri.A / 2.0)

    monkeypatch.setattr(structure, "build_circulant_triple", flipped)
    code, out, err = run(["verify", "--k", "3", "--m", "1", "--cutoff", "4"], capsys)
    assert code == 1
    failed = [c for c in json.loads(out)["checks"] if not c["passed"]]
    assert any(c["name"].startswith("spectral_bound k=3") for c in failed)
    assert "verification failure" in err


def test_optimize_identity_channel(capsys):
    code, out, err = run(["optimize", "--channel", "loss", "--eta", "1", "--cutoff", "6", "--restarts", "2"], capsys)
    assert code == 0
    data = json.loads(out)
    assert data["best_value"]["value"] == pytest.approx(1.0, abs=1e-12)
    assert untagged_numbers(data) == []
    assert "best value (numeric)" in err


def test_optimize_byte_identical(tmp_path, capsys):
    args = ["optimize", "--cutoff", "8", "--restarts", "3", "--seed", "4"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(args + ["--out", str(a)], capsys)[0] == 0
    assert run(args + ["--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_optimize_resource_ceiling(capsys):
    code, _, err = run(["optimize", "--cutoff", "40", "--m", "2"], capsys)
    assert code == 3
    assert "ceiling" in err


def test_config_file_and_flag_override(tmp_path, capsys):
    path = write(
        tmp_path,
        "[run]\ncommand = norms\n\n[channel]\nvariant = noise\nn = 1.0\n\n[numeric]\nk = 2\ncutoff = 50\n",
    )
    code, out, _ = run(["norms", "--config", path], capsys)
    assert code == 0
    assert json.loads(out)["rows"][0]["moment_closed_form"]["value"] == pytest.approx(1 / 3)
    code, out, _ = run(["norms", "--config", path, "--n", "0.3"], capsys)
    assert json.loads(out)["rows"][0]["moment_closed_form"]["value"] == pytest.approx(0.625)


@pytest.mark.parametrize(
    "text, line, needle",
    [
        ("[channel]\nvariant = noise\nn = 0.3\ngain = 2\n", 4, "channel.gain: unknown key"),
        ("[numeric]\n\ncutoff = forty\n", 3, "expected int"),
        ("[channel]\nn = 0.3\n[plotting]\nstyle = x\n", 3, "unknown section"),
        ("[channel]\nvariant = gauss\nu = 0.2\nv_re = 0.3\n", 1, "u > |v|"),
    ],
)
def test_config_errors_name_the_line(tmp_path, capsys, text, line, needle):
    path = write(tmp_path, text)
    code, _, err = run(["norms", "--config", path], capsys)
    assert code == 2
    assert f"{path}:{line}" in err
    assert needle in err


def test_duplicate_key_rejected(tmp_path, capsys):
    path = write(tmp_path, "[numeric]\nk = 2\nk = 3\n")
    code, _, err = run(["norms", "--config", path], capsys)
    assert code == 2
    assert "line 3" in err


def test_config_for_other_command(tmp_path, capsys):
    path = write(tmp_path, "[run]\ncommand = bounds\n")
    code, _, err = run(["norms", "--config", path], capsys)
    assert code == 2 and "bounds" in err


def test_missing_config_and_bad_flags(tmp_path, capsys):
    assert run(["norms", "--config", str(tmp_path / "none.ini")], capsys)[0] == 2
    assert run(["norms", "--channel", "amplifier"], capsys)[0] == 2
    assert run(["norms", "--cutoff", "0"], capsys)[0] == 2
    assert run([], capsys)[0] == 2


def test_inline_comments(tmp_path, capsys):
    path = write(tmp_path, "[run]\ncommand = norms   ; must match\n[numeric]\nk = 2  # one order\ncutoff = 30\n")
    code, out, _ = run(["norms", "--config", path], capsys)
    assert code == 0
    assert len(json.loads(out)["rows"]) == 1


def test_read_config_types(tmp_path):
    path = write(tmp_path, "[output]\nformat = csv\ntimings = yes\n[numeric]\nz_min = 1.5\n")
    raw = cli.read_config(path)
    assert raw["output"] == {"format": "csv", "timings": True}
    assert raw["numeric"] == {"z_min": 1.5}
    with pytest.raises(ConfigError):
        cli.read_config(write(tmp_path, "[numeric]\nz_min = nan\n", "nan.ini"))


def test_atomic_write_replaces_and_cleans_up(tmp_path, monkeypatch):
    target = tmp_path / "out.json"
    cli.atomic_write(target, "first\n")
    cli.atomic_write(target, "second\n")
    assert target.read_text() == "second\n"

    def boom(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        cli.atomic_write(target, "third\n")
    assert target.read_text() == "second\n"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["out.json"]


def test_console_script_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "gaussadd", "bounds", "--z-steps", "5", "--out", str(tmp_path / "b.csv"), "--format", "csv"],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "b.csv").read_text().startswith("z,upper,lower\n")

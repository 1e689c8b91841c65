import os
import subprocess
import sys

import numpy as np
import pytest

from gaussadd import _kernels

import oracles

nus = [0.0, 0.3, -0.7j, 1.2 * np.exp(0.4j), 2.5 - 1.0j]


@pytest.mark.parametrize("nu", nus)
def test_numpy_kernel_matches_expm(nu):
    d = 30
    ref = oracles.displacement_expm(nu, d, pad=80)
    assert np.abs(_kernels._displacement_numpy(nu, d) - ref).max() < 1e-12


@pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba disabled")
@pytest.mark.parametrize("nu", nus)
def test_numba_kernel_matches_numpy(nu):
    for d in (1, 2, 17, 60):
        a = _kernels._displacement_numba(complex(nu), d)
        b = _kernels._displacement_numpy(complex(nu), d)
        assert np.abs(a - b).max() < 1e-14


@pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba disabled")
def test_batch_backends_agree():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=50) + 1j * rng.normal(size=50)
    a = _kernels._displacement_batch_numba(pts, 12)
    b = _kernels._displacement_batch_numpy(pts, 12)
    assert a.shape == (50, 12, 12)
    assert np.abs(a - b).max() < 1e-14


def test_chain_accumulate_matches_explicit_kron():
    rng = np.random.default_rng(1)
    blocks = rng.normal(size=(7, 3, 2, 2)) + 1j * rng.normal(size=(7, 3, 2, 2))
    coeffs = rng.normal(size=7) + 1j * rng.normal(size=7)
    out = np.zeros((8, 8), dtype=np.complex128)
    _kernels.chain_accumulate(blocks, coeffs, out)
    ref = sum(c * np.kron(np.kron(b[0], b[1]), b[2]) for c, b in zip(coeffs, blocks))
    assert np.abs(out - ref).max() < 1e-13
    single = np.zeros((2, 2), dtype=np.complex128)
    _kernels.chain_accumulate(blocks[:, :1], coeffs, single)
    assert np.abs(single - np.tensordot(coeffs, blocks[:, 0], axes=(0, 0))).max() < 1e-13


def _backend_in_subprocess(flag):
    env = dict(os.environ, GAUSSADD_DISABLE_NUMBA=flag)
    code = "import gaussadd, numpy as np; print(gaussadd.backend()); print(repr(float(np.abs(gaussadd.fock.displacement_op(0.5, 20).matrix).sum())))"
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return res.stdout.split()


def test_env_flag_selects_numpy():
    name, value = _backend_in_subprocess("1")
    assert name == "numpy"
    other_name, other_value = _backend_in_subprocess("0")
    assert other_name in ("numba", "numpy")
    assert abs(float(value) - float(other_value)) < 1e-12

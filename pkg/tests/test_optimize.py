import json

import numpy as np
import pytest

from gaussadd import fock
from gaussadd.channels import ChannelSpec
from gaussadd.errors import ParameterError, ResourceError
from gaussadd.optimize import (
    OptimizerConfig,
    OutputMoment,
    additivity_gap,
    coherent_diagnostic,
    finite_difference_check,
    maximize_output_norm,
)

import oracles

NOISE = ChannelSpec.noise(0.3)


@pytest.mark.parametrize("spec", [NOISE, ChannelSpec.loss(0.7, 0.5), ChannelSpec.gauss(0.6, 0.2j)], ids=str)
def test_gradient_matches_finite_differences(spec):
    obj = OutputMoment(spec, 6, 1, 2)
    rng = np.random.default_rng(0)
    for _ in range(5):
        psi = rng.normal(size=6) + 1j * rng.normal(size=6)
        direction = rng.normal(size=6) + 1j * rng.normal(size=6)
        analytic, numeric = finite_difference_check(obj, psi, direction)
        assert abs(analytic - numeric) <= 1e-6 * max(1.0, abs(numeric))


def test_gradient_two_uses_third_moment():
    obj = OutputMoment(NOISE, 3, 2, 3)
    rng = np.random.default_rng(1)
    psi = rng.normal(size=9) + 1j * rng.normal(size=9)
    direction = rng.normal(size=9) + 1j * rng.normal(size=9)
    analytic, numeric = finite_difference_check(obj, psi, direction)
    assert abs(analytic - numeric) <= 1e-6 * max(1.0, abs(numeric))


def test_phase_invariance():
    obj = OutputMoment(NOISE, 8, 1, 2)
    psi = fock.random_pure_state(8, rng=np.random.default_rng(2)).amplitudes
    base = obj.value(psi)
    for phi in (0.9, np.pi / 2, np.pi):
        assert abs(obj.value(np.exp(1j * phi) * psi) - base) <= 4 * np.finfo(float).eps


@pytest.fixture(scope="module")
def single_use():
    return maximize_output_norm(NOISE, OptimizerConfig(cutoff=20, restarts=16))


def test_single_use_optimum(single_use):
    assert 0.625 - 1e-3 <= single_use.best_value <= 0.625 + 1e-4
    assert single_use.oracle == pytest.approx(0.625)
    assert single_use.coherent_fidelity[0] > 0.999


def test_traces_are_monotone(single_use):
    assert len(single_use.traces) == 16
    for t in single_use.traces:
        assert all(b > a for a, b in zip(t.values, t.values[1:]))


def test_reported_phase_is_canonical(single_use):
    amps = single_use.best_state.amplitudes
    lead = amps[np.argmax(np.abs(amps))]
    assert abs(lead.imag) < 1e-15 and lead.real > 0


def test_result_serialization(single_use):
    data = json.loads(single_use.to_json())
    assert data["best_value"]["route"] == "numeric"
    assert data["oracle"]["route"] == "closed_form"
    assert len(data["restarts"]) == 16
    rows = single_use.traces_csv().splitlines()
    assert rows[0] == "restart,seed,iteration,numeric"
    assert len(rows) == 1 + sum(len(t.values) for t in single_use.traces)


def test_deterministic():
    cfg = OptimizerConfig(cutoff=8, restarts=3, seed=5)
    a = maximize_output_norm(NOISE, cfg)
    b = maximize_output_norm(NOISE, cfg)
    assert a.to_json() == b.to_json()


def test_identity_channel():
    res = maximize_output_norm(ChannelSpec.loss(1.0, 0.4), OptimizerConfig(cutoff=6, restarts=3))
    assert res.best_value == pytest.approx(1.0, abs=1e-12)
    assert all(t.values[0] == pytest.approx(1.0, abs=1e-12) for t in res.traces)


def test_lossy_optimum():
    spec = ChannelSpec.loss(0.7, 0.5)
    res = maximize_output_norm(spec, OptimizerConfig(cutoff=12, restarts=4))
    assert abs(res.best_value - oracles.thermal_moment(0.15, 2)) < 1e-3


def test_anti_squeezed_optimum():
    spec = ChannelSpec.gauss(0.6, 0.3)
    res = maximize_output_norm(spec, OptimizerConfig(cutoff=16, restarts=4))
    assert abs(res.best_value - oracles.thermal_moment(oracles.FROZEN["n_eff_u0.6_v0.3"], 2)) < 1e-3
    assert res.coherent_fidelity[0] > 0.99


@pytest.mark.slow
def test_two_use_additivity():
    cfg = OptimizerConfig(cutoff=8, restarts=4)
    gap = additivity_gap(NOISE, 2, 2, cfg)
    assert abs(gap) < 2e-3
    loss = ChannelSpec.loss(0.7, 0.5)
    two = maximize_output_norm(loss, OptimizerConfig(cutoff=8, uses=2, restarts=4))
    assert abs(two.best_value - oracles.thermal_moment(0.15, 2) ** 2) < 2e-3


def test_single_copy_gap_is_zero():
    assert additivity_gap(NOISE, 1, 3, OptimizerConfig(cutoff=4)) == 0.0


def test_coherent_diagnostic():
    d = 20
    diag = coherent_diagnostic(fock.coherent_state(0.7 - 0.4j, d), NOISE)
    assert diag.fidelity[0] == pytest.approx(1.0, abs=1e-9)
    assert abs(diag.peak[0] - (0.7 - 0.4j)) < 1e-4
    diag = coherent_diagnostic(fock.fock_state(1, d), NOISE)
    assert diag.fidelity[0] == pytest.approx(oracles.FROZEN["fock1_fidelity"], abs=1e-8)
    assert abs(abs(diag.peak[0]) - 1) < 1e-4


def test_coherent_diagnostic_undoes_squeezing():
    from gaussadd.fock import _squeeze_matrix
    from gaussadd.structure import squeeze_decomposition

    d = 30
    spec = ChannelSpec.gauss(0.6, 0.3)
    xi = squeeze_decomposition(0.6, 0.3).xi
    state = fock.PureState(_squeeze_matrix(-xi, d, 60)[:, 0], d)
    assert coherent_diagnostic(state, spec).fidelity[0] == pytest.approx(1.0, abs=1e-8)
    assert coherent_diagnostic(state, NOISE).fidelity[0] < 0.99


def test_two_mode_diagnostic():
    d = 12
    psi = np.kron(fock.coherent_state(0.3, d).amplitudes, fock.fock_state(1, d).amplitudes)
    fid = coherent_diagnostic(fock.PureState(psi, d, 2), NOISE).fidelity
    assert fid[0] == pytest.approx(1.0, abs=1e-8)
    assert fid[1] == pytest.approx(np.exp(-1), abs=1e-8)


def test_config_validation():
    with pytest.raises(ParameterError):
        OptimizerConfig(cutoff=1)
    with pytest.raises(ParameterError):
        OptimizerConfig(cutoff=8, restarts=0)
    with pytest.raises(ParameterError):
        OptimizerConfig(cutoff=8, step=-1)
    with pytest.raises(ParameterError):
        OptimizerConfig(cutoff=8, uses=1.5)
    with pytest.raises(ResourceError):
        OptimizerConfig(cutoff=40, uses=2)
    with pytest.raises(ParameterError):
        OutputMoment(NOISE, 4, 1, 0)

import json

import numpy as np
import pytest

import gaussadd.structure as structure
from gaussadd import fock
from gaussadd.channels import ChannelSpec, apply_classical_noise, channel_apply_operator
from gaussadd.errors import ConsistencyError, ParameterError, ResourceError
from gaussadd.fock import thermal_cutoff
from gaussadd.quadrature import circular_grid
from gaussadd.structure import dft_spectral_data, theta_mode_ratio
from gaussadd.theta import (
    build_theta,
    laguerre_integral_oracle,
    optimal_eigenvector,
    oracle_parameters,
    product_vector,
    route_gap,
    spectral_bound_check,
    theta_mode_closed_form,
    theta_report,
    trace_identity_check,
    use_major_to_copy_major,
)

import oracles


def rand_pure(d, seed, modes=1, support=None):
    return fock.random_pure_state(d, modes, support=support, rng=np.random.default_rng(seed))


@pytest.mark.parametrize("route", ["factorized", "quadrature"])
def test_single_copy_is_identity(route):
    th = build_theta(1, 2, 0.4, 4, route)
    assert np.array_equal(th.matrix, np.eye(16))


@pytest.mark.parametrize(
    "k, m, n, d, expected",
    [
        (2, 1, 0.3, 8, 0.625),
        (2, 1, 1.0, 10, 1 / 3),
        (3, 1, 1.0, 6, oracles.FROZEN["moment_thermal_1_k3"]),
        (2, 2, 0.3, 5, 0.390625),
    ],
)
def test_spectral_radius_examples(k, m, n, d, expected):
    rep = spectral_bound_check(k, m, n, d, cross_check=False)
    assert rep.passed
    assert rep.lambda0_closed == pytest.approx(expected, abs=1e-12)
    assert abs(rep.lambda0_numeric - expected) < 1e-4
    assert np.isfinite(rep.eigvec_condition)


def test_route_agreement_k2():
    assert route_gap(2, 1, 0.3, 6) < 1e-5


def test_route_agreement_k3():
    assert route_gap(3, 1, 0.5, 4) < 1e-5


def test_trace_identity_vacuum():
    res = trace_identity_check(fock.vacuum(6), 2, 0.3)
    assert res.lhs == pytest.approx(0.625, abs=1e-5)
    assert res.rhs.real == pytest.approx(0.625, abs=1e-5)
    assert res.gap < 1e-5


@pytest.mark.parametrize("seed", range(3))
def test_trace_identity_random_pure(seed):
    assert trace_identity_check(rand_pure(8, seed), 2, 0.3).gap < 1e-5


def test_trace_identity_entangled_two_uses():
    psi = rand_pure(5, 7, modes=2)
    rho1 = fock.partial_trace_matrix(np.outer(psi.amplitudes, psi.amplitudes.conj()), [5, 5], [0])
    assert fock.trace_power(fock.DensityMatrix.from_matrix(rho1, 5), 2) < 0.99
    assert trace_identity_check(psi, 2, 0.3).gap < 1e-4


def test_trace_identity_density_input():
    psi = rand_pure(6, 3)
    assert trace_identity_check(psi.density(), 2, 0.5).gap < 1e-5
    mixed = fock.thermal_state(0.2, 6, tail_tolerance=1.0)
    with pytest.raises(ParameterError):
        trace_identity_check(mixed, 2, 0.5)


def test_three_distinct_states_fix_orientation():
    """<psi1 psi2 psi3|Theta|psi2 psi3 psi1> = Tr[N(rho1) N(rho2) N(rho3)].

    For three different states the two cyclic orders of the right side
    differ, so this pins the orientation that a repeated state cannot.
    """
    d, n = 4, 0.5
    big = d + thermal_cutoff(n, 1e-10)
    th = build_theta(3, 1, n, d).matrix
    psi = [rand_pure(d, 20 + s).amplitudes for s in range(3)]
    spec = ChannelSpec.noise(n)
    outs = []
    for v in psi:
        X = fock.embed_matrix(np.outer(v, v.conj()), d, big)
        outs.append(channel_apply_operator(spec, fock.TruncatedOperator(X, big)).matrix)
    lhs = np.vdot(np.kron(np.kron(psi[0], psi[1]), psi[2]), th @ np.kron(np.kron(psi[1], psi[2]), psi[0]))
    right = np.trace(outs[0] @ outs[1] @ outs[2])
    mirrored = np.trace(outs[0] @ outs[2] @ outs[1])
    assert abs(lhs - right) < 1e-10
    assert abs(lhs - mirrored) > 1e-4


def test_flipped_coupling_is_caught(monkeypatch):
    original = structure.build_circulant_triple

    def flipped(k, n):
        tri = original(k, n)
        return structure.CirculantTriple(tri.k, tri.n, tri.G, -tri.A, np.eye(k) / n - tri.A / 2.0)

    monkeypatch.setattr(structure, "build_circulant_triple", flipped)
    # the spectrum alone cannot see the flip
    assert spectral_bound_check(3, 1, 0.5, 3, cross_check=False).passed
    with pytest.raises(ConsistencyError, match="routes differ"):
        spectral_bound_check(3, 1, 0.5, 3, cross_check=True)


def test_optimal_eigenvector_vacuum():
    res = optimal_eigenvector(3, 1, 0.5, 4, [0.0])
    assert res.residual < 1e-10
    assert res.basis_overlap > 1 - 1e-12


def test_optimal_eigenvector_coherent():
    res = optimal_eigenvector(2, 1, 0.3, 12, [0.5])
    assert res.residual < 1e-4
    assert res.basis_overlap > 1 - 1e-8
    assert res.lambda0 == pytest.approx(0.625)


def test_optimal_eigenvector_two_uses():
    res = optimal_eigenvector(2, 2, 0.3, 5, [0.2, -0.1j])
    assert res.residual < 1e-4
    assert res.basis_overlap > 1 - 1e-8


def test_optimal_eigenvector_rejects_leaky_amplitude():
    with pytest.raises(ParameterError):
        optimal_eigenvector(2, 1, 0.3, 6, [2.0])
    with pytest.raises(ParameterError):
        optimal_eigenvector(2, 2, 0.3, 5, [0.2])


def test_oracle_off_diagonal_vanishes():
    for d_j, e_j in oracle_parameters(3, 0.5):
        res = laguerre_integral_oracle(1, 3, d_j, e_j, 0.5)
        assert abs(res.numeric) < 1e-8
        assert res.closed_form == 0


def test_oracle_ground_level():
    n, e = 0.8, 0.7
    res = laguerre_integral_oracle(0, 0, 1 / n, e, n)
    assert abs(res.numeric - (2 / n) / (2 / n + e**2)) < 1e-8


def test_oracle_k2_level3():
    (d_j, e_j), = oracle_parameters(2, 0.5)
    res = laguerre_integral_oracle(3, 3, d_j, e_j, 0.5)
    assert res.error < 1e-8


def test_oracle_complex_weight():
    for p in range(4):
        for d_j, e_j in oracle_parameters(3, 1.0):
            assert abs(d_j.imag) > 0.1
            assert laguerre_integral_oracle(p, p, d_j, e_j, 1.0).error < 1e-8


def test_oracle_validation():
    with pytest.raises(ParameterError):
        laguerre_integral_oracle(0, 0, -1.0, 1.0, 0.5)
    with pytest.raises(ParameterError):
        laguerre_integral_oracle(0, 0, 1.0, 0.0, 0.5)


def test_null_mode_factor_is_identity():
    for k in range(2, 7):
        for n in (0.2, 1.0, 3.0):
            sd = dft_spectral_data(k, n)
            # the generic closed form evaluated on the raw null-mode data
            Y = sd.Y
            tri = structure.build_circulant_triple(k, n)
            e0 = (Y @ tri.G @ Y.conj().T)[0, 0]
            d0 = (Y @ tri.C @ Y.conj().T)[0, 0]
            assert abs(e0) < 1e-14
            for p in range(5):
                assert abs(theta_mode_closed_form(p, p, d0, e0, n) - 1) < 1e-13
            assert theta_mode_ratio(k, n, 0) == (1, 1)


def test_mode_ratio_matches_frozen():
    scale, ratio = theta_mode_ratio(2, 0.3, 1)
    assert abs(scale - oracles.FROZEN["theta_scale_k2"]) < 1e-14
    assert abs(ratio - oracles.FROZEN["theta_ratio_k2"]) < 1e-14


def test_factorization_over_uses():
    d, n = 4, 0.4
    two = build_theta(2, 2, n, d, "quadrature").matrix
    one = build_theta(2, 1, n, d, "quadrature").matrix
    ref = use_major_to_copy_major(np.kron(one, one), 2, 2, d)
    assert np.abs(two - ref).max() < 1e-5


def test_trace_gap_shrinks_with_radial_nodes():
    d, n = 8, 1.0
    th = build_theta(2, 1, n, d)
    pad = thermal_cutoff(n, 1e-12)
    for seed in range(3):
        psi = rand_pure(d, 40 + seed)
        rhs = th.expectation(psi).real
        gaps = []
        for R in (16, 32):
            grid = circular_grid(n, R, 64, tilt=0.0)
            out = apply_classical_noise(n, psi.density().embed(d + pad), grid=grid)
            gaps.append(abs(fock.trace_power(out, 2) - rhs))
        assert gaps[0] > gaps[1]


def test_expectation_bounded_by_lambda0():
    th = build_theta(2, 1, 0.3, 8)
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(200):
        psi = fock.random_pure_state(8, rng=rng)
        val = th.expectation(psi)
        assert abs(val.imag) < 1e-12
        worst = max(worst, val.real)
    assert worst <= 0.625 + 1e-12


def test_size_ceiling():
    with pytest.raises(ResourceError):
        build_theta(3, 2, 0.3, 5)
    with pytest.raises(ResourceError):
        build_theta(2, 1, 0.3, 10, ceiling=50)
    with pytest.raises(ParameterError):
        build_theta(2, 1, 0.0, 4)
    with pytest.raises(ParameterError):
        build_theta(2, 1, 0.3, 4, route="other")


def test_report_schema():
    rep = theta_report(2, 1, 0.3, 5, trace_gap=1e-9)
    assert set(rep) == {"k", "m", "n", "d", "lambda0_closed", "lambda0_numeric", "trace_gap", "route_gap"}
    assert rep["route_gap"] < 1e-5
    data = json.loads(spectral_bound_check(2, 1, 0.3, 5).to_json())
    assert data["passed"] and data["failures"] == []

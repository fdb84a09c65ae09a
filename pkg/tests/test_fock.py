"""Number-basis building blocks: parameters, operators, densities."""

import json
import math

import numpy as np
import pytest

from phasekit.fock import (
    FockVector,
    Operator,
    OscParams,
    build_canonical,
    canonical_squares,
    hermite_functions,
    hermite_momentum_density,
    hermite_position_density,
    operator_from_json,
    operator_to_json,
    quantum_expectation,
    quantum_variance,
    random_density,
    random_pure,
    validate_density,
)


def test_matched_width_is_the_default(params):
    assert params.sigma == pytest.approx(1.0 / math.sqrt(2.0), abs=0)
    assert params.matched
    assert not OscParams(sigma=0.9).matched
    assert OscParams(m=3.0, omega=2.0).sigma_g == pytest.approx(
        1.0 / math.sqrt(12.0)
    )


def test_invalid_parameters_are_rejected():
    with pytest.raises(ValueError):
        OscParams(m=0.0)
    with pytest.raises(ValueError):
        OscParams(omega=-1.0)
    with pytest.raises(ValueError):
        OscParams(sigma=0.0)


def test_ladder_matrix_elements(params):
    ops = build_canonical(params, 9)
    a = ops["a"].matrix
    for n in range(1, 9):
        assert a[n - 1, n] == pytest.approx(math.sqrt(n), abs=0)
    assert np.count_nonzero(a) == 8
    assert np.array_equal(ops["adag"].matrix, a.conj().T)


def test_canonical_commutator_structure(params):
    """[Q, P] = i on the block, except the truncation corner."""
    D = 7
    ops = build_canonical(params, D)
    C = ops["Q"].matrix @ ops["P"].matrix - ops["P"].matrix @ ops["Q"].matrix
    expected = 1j * np.eye(D)
    expected[D - 1, D - 1] = 1j * (1 - D)
    assert np.abs(C - expected).max() < 1e-13


def test_hamiltonian_is_diagonal(params):
    H = build_canonical(params, 6)["H"].matrix
    assert np.abs(H - np.diag(H.diagonal())).max() == 0.0
    assert np.allclose(H.diagonal().real,
                       params.omega * (np.arange(6) + 0.5), atol=1e-14)


def test_canonical_squares_are_exact_blocks(params):
    """Q2 equals the top block of Q squared one dimension up, and
    differs from the naive product of truncated factors."""
    D = 8
    sq = canonical_squares(params, D)
    big = build_canonical(params, D + 2)
    for key, op in (("Q2", "Q"), ("P2", "P"), ("H2", "H")):
        full = big[op].matrix @ big[op].matrix
        assert np.abs(sq[key].matrix - full[:D, :D]).max() < 1e-12
    naive = build_canonical(params, D)["Q"].matrix
    corner = np.abs(sq["Q2"].matrix - naive @ naive)
    assert corner.max() > 1.0


def test_hermite_functions_are_orthonormal(params):
    xs = np.linspace(-10.0, 10.0, 2001)
    w = xs[1] - xs[0]
    F = hermite_functions(xs, params, 8)
    G = (F * w) @ F.T
    assert np.abs(G - np.eye(8)).max() < 1e-10


def test_ground_state_densities_are_gaussian(params):
    xs = np.linspace(-3.0, 3.0, 41)
    W = FockVector.number_state(0, 4).project()
    sg2 = params.sigma_g ** 2
    expect_x = np.exp(-xs ** 2 / (2 * sg2)) / math.sqrt(2 * math.pi * sg2)
    assert np.abs(hermite_position_density(W, params, xs) - expect_x).max() < 1e-12
    sp2 = 1.0 / (4.0 * sg2)
    expect_p = np.exp(-xs ** 2 / (2 * sp2)) / math.sqrt(2 * math.pi * sp2)
    assert np.abs(hermite_momentum_density(W, params, xs) - expect_p).max() < 1e-12


def test_quantum_moments_on_number_states(params):
    D = 10
    ops = build_canonical(params, D)
    sq = canonical_squares(params, D)
    for n in range(4):
        W = FockVector.number_state(n, D).project()
        assert quantum_expectation(W, ops["H"]) == pytest.approx(n + 0.5,
                                                                 abs=1e-13)
        assert quantum_variance(W, ops["H"], sq["H2"]) == pytest.approx(
            0.0, abs=1e-12
        )
        assert quantum_variance(W, ops["Q"], sq["Q2"]) == pytest.approx(
            (2 * n + 1) * params.sigma_g ** 2, abs=1e-12
        )


def test_operator_kind_validation():
    with pytest.raises(ValueError):
        Operator(np.array([[0.0, 1.0], [0.0, 0.0]]), kind="hermitian")
    with pytest.raises(ValueError):
        Operator(np.eye(2) * 0.7, kind="density")
    with pytest.raises(ValueError):
        Operator(np.eye(2) * 2.0, kind="unitary")
    with pytest.raises(ValueError):
        Operator(np.eye(2), kind="bogus")


def test_fock_vector_validation():
    with pytest.raises(ValueError):
        FockVector(np.array([1.0, 1.0]))
    v = FockVector(np.array([3.0, 4.0]), normalized=False)
    assert v.norm == pytest.approx(5.0)
    with pytest.raises(ValueError):
        FockVector.number_state(4, 4)


def test_validate_density_flags_defects(rng):
    W = random_density(5, rng)
    rep = validate_density(W)
    assert rep["ok"]
    bad = W.matrix.copy()
    bad[0, 1] += 0.5
    rep = validate_density(bad)
    assert not rep["ok"]
    assert rep["hermiticity_defect"] > 0.1


def test_random_states_respect_support(rng):
    psi = random_pure(8, rng, support=3)
    assert np.abs(psi.coeffs[3:]).max() == 0.0
    assert psi.norm == pytest.approx(1.0, abs=1e-12)
    W = random_density(8, rng, support=3)
    assert np.abs(W.matrix[3:, :]).max() == 0.0
    assert np.trace(W.matrix).real == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.eigvalsh(W.matrix).min() > -1e-12


def test_operator_json_roundtrip(params, rng):
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    op = Operator(A + A.conj().T, kind="hermitian", params=params)
    text = operator_to_json(op)
    payload = json.loads(text)
    assert payload["D"] == 4
    assert payload["kind"] == "hermitian"
    assert len(payload["entries"]) == 16
    back = operator_from_json(text)
    assert np.abs(back.matrix - op.matrix).max() == 0.0
    assert back.params == params
    with pytest.raises(ValueError):
        operator_from_json(json.dumps({"D": 3, "kind": "general",
                                       "params": None,
                                       "entries": [[1.0, 0.0]]}))

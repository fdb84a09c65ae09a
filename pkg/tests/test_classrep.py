"""Densities, confidence functions, effects, completeness, reconstruction."""

import math

import numpy as np
import pytest

from phasekit.classrep import (
    ConfidenceFunction,
    EffectSet,
    classical_expectation,
    classical_variance,
    completeness_rank,
    confidence_functions,
    confidence_moments_from_operator,
    coords_to_hermitian,
    effect_of_region,
    effect_partition,
    fourier_criterion,
    hermitian_coords,
    husimi,
    husimi_point_effects,
    marginals,
    reconstruct_from_density,
    reconstruct_state,
    uncertainty_report,
)
from phasekit.coherentframe import FrameSpec, auto_grid
from phasekit.displacement import CharSamples, displacement_op, z_abs_sq
from phasekit.fock import FockVector, OscParams, random_density
from phasekit.grids import PhaseField, PhaseGrid


# -- confidence functions ----------------------------------------------------

def test_confidence_function_moments_and_validation():
    h = 0.01
    xs = (np.arange(100) + 0.5) * h
    cf = ConfidenceFunction(xs, np.full(100, 1.0), "q")
    assert cf.mean() == pytest.approx(0.5, abs=1e-12)
    assert cf.variance() == pytest.approx(1.0 / 12.0, rel=1e-3)
    with pytest.raises(ValueError):
        ConfidenceFunction(xs, np.full(100, 1.0), "x")
    with pytest.raises(ValueError):
        ConfidenceFunction(xs, np.full(99, 1.0), "q")
    with pytest.raises(ValueError):
        ConfidenceFunction(xs, np.full(100, 2.0), "q")  # mass 2
    bad = np.full(100, 1.0)
    bad[3] = -1e-3
    with pytest.raises(ValueError):
        ConfidenceFunction(xs, bad, "q")


def test_confidence_variances_two_routes(params_wide):
    """Closed-form Gaussian confidence densities against the operator
    route with exact block squares; sigma != sigma_g keeps the two
    widths distinct."""
    frame = FrameSpec.coherent(params_wide, 24)
    eta_q, eta_p = confidence_functions(frame)
    s2 = params_wide.sigma ** 2
    assert eta_q.variance() == pytest.approx(s2, abs=1e-12)
    assert eta_p.variance() == pytest.approx(1.0 / (4.0 * s2), abs=1e-12)
    assert eta_q.mean() == pytest.approx(0.0, abs=1e-12)

    mo = confidence_moments_from_operator(frame)
    assert mo["var_q"] == pytest.approx(s2, abs=1e-12)
    assert mo["var_p"] == pytest.approx(1.0 / (4.0 * s2), abs=1e-12)
    assert mo["mean_q"] == pytest.approx(0.0, abs=1e-12)


def test_confidence_variances_for_mixture_generator(params):
    """Diagonal generator: var along q is sum_n w_n (2n+1) sigma_g^2,
    exactly representable at low levels."""
    frame = FrameSpec.fock_mixture(params, 12, [0.7, 0.3])
    expected = (0.7 * 1.0 + 0.3 * 3.0) * params.sigma_g ** 2
    eta_q, _ = confidence_functions(frame)
    assert eta_q.variance() == pytest.approx(expected, abs=1e-9)
    mo = confidence_moments_from_operator(frame)
    assert mo["var_q"] == pytest.approx(expected, abs=1e-12)


# -- densities ---------------------------------------------------------------

def test_density_of_number_states_closed_form(params):
    """rho_n(x) = e^{-|z|^2} |z|^{2n} / (2 pi n!) for the matched frame."""
    D = 12
    frame = FrameSpec.coherent(params, D)
    grid = PhaseGrid.centered(2.0, 2.0, 0.5, 0.5)
    Z = z_abs_sq(params, *grid.meshes())
    for n in (0, 1, 3):
        field = husimi(FockVector.number_state(n, D), frame, grid)
        expected = np.exp(-Z) * Z ** n / (2.0 * math.pi * math.factorial(n))
        assert np.abs(field.values - expected).max() < 1e-10
    assert field.kind == "density"


def test_density_peak_and_mass(params):
    D = 12
    frame = FrameSpec.coherent(params, D)
    field = husimi(FockVector.number_state(0, D), frame, auto_grid(frame, D))
    assert field.values.max() == pytest.approx(1.0 / (2.0 * math.pi), abs=1e-9)
    assert field.total_mass() == pytest.approx(1.0, abs=1e-8)


def test_density_with_mixture_generator_closed_form(params):
    """Generator w0 |0><0| + w1 |1><1| against the vacuum state:
    rho(x) = e^{-|z|^2} (w0 + w1 |z|^2) / (2 pi)."""
    D = 10
    w0, w1 = 0.6, 0.4
    frame = FrameSpec.fock_mixture(params, D, [w0, w1])
    grid = PhaseGrid.centered(2.0, 2.0, 0.4, 0.4)
    field = husimi(FockVector.number_state(0, D), frame, grid)
    Z = z_abs_sq(params, *grid.meshes())
    expected = np.exp(-Z) * (w0 + w1 * Z) / (2.0 * math.pi)
    assert np.abs(field.values - expected).max() < 1e-12


def test_density_rejects_mismatched_state(params):
    frame = FrameSpec.coherent(params, 6)
    with pytest.raises(ValueError):
        husimi(np.eye(4) / 4.0, frame, PhaseGrid.centered(1.0, 1.0, 0.5, 0.5))


def test_marginals_and_classical_moments(params):
    D = 12
    frame = FrameSpec.coherent(params, D)
    grid = auto_grid(frame, D)
    for n in (0, 2):
        field = husimi(FockVector.number_state(n, D), frame, grid)
        marg = marginals(field)
        assert (marg["f_q"].sum() * grid.dq) == pytest.approx(1.0, abs=1e-8)
        H = classical_expectation(
            lambda Q, P: P * P / 2.0 + Q * Q / 2.0, field
        )
        assert H == pytest.approx(params.omega * (n + 1), abs=1e-8)
    var_q = classical_variance(lambda Q, P: Q, field)
    # var_F = var_E + var_eta = 5 sg^2 + sg^2 for n = 2
    assert var_q == pytest.approx(6.0 * params.sigma_g ** 2, abs=1e-8)
    with pytest.raises(ValueError):
        marginals(PhaseField(grid, np.zeros((grid.n_q, grid.n_p)), kind="real"))


def test_uncertainty_report_additivity_and_floor(params):
    frame = FrameSpec.coherent(params, 12)
    rep = uncertainty_report(FockVector.number_state(1, 12), frame)
    assert rep["additivity_defect_q"] < 1e-9
    assert rep["additivity_defect_p"] < 1e-9
    assert rep["product_E"] == pytest.approx(2.25, abs=1e-9)
    assert rep["product_F"] == pytest.approx(4.0, abs=1e-9)
    assert rep["mass_defect"] < 1e-8
    assert rep["adequate"]


def test_uncertainty_saturation_by_the_generator_state(params):
    """The generator state observed through its own frame saturates the
    floor: both observed variances double the sharp ones and the
    observed product is exactly 1 for the matched width."""
    frame = FrameSpec.coherent(params, 12)
    rep = uncertainty_report(frame.generator, frame)
    assert rep["product_F"] == pytest.approx(1.0, abs=1e-9)
    assert rep["product_E"] == pytest.approx(0.25, abs=1e-9)
    assert rep["var_F_q"] == pytest.approx(2.0 * rep["var_E_q"], abs=1e-9)


# -- effects -----------------------------------------------------------------

def test_effect_set_validation(params):
    good = effect_partition(FrameSpec.coherent(params, 3), n_cells=2)
    with pytest.raises(ValueError):
        EffectSet(good.effects, good.cells[:-1], params, 3, "support", 0.05)
    with pytest.raises(ValueError):
        EffectSet((2.0 * np.eye(3),), ((0.0, 1.0, 0.0, 1.0),), params, 3,
                  "support", 0.05)


def test_partition_sum_defect_by_region(params):
    """Support-box cells leave Gaussian tails outside, so their sum
    falls measurably short of the identity; the adequacy-sized box
    reproduces it to rounding."""
    frame = FrameSpec.coherent(params, 4)
    support = effect_partition(frame, region="support")
    assert len(support) == 36
    assert support.sum_defect() > 1e-3
    assert support.sum_defect() == pytest.approx(0.2829, abs=1e-2)

    adequate = effect_partition(frame, region="adequate", spacing=0.05)
    assert adequate.sum_defect() < 1e-10

    probs = support.probabilities(FockVector.number_state(0, 4))
    assert probs.min() >= -1e-12
    assert probs.sum() == pytest.approx(1.0, abs=1e-2)
    with pytest.raises(ValueError):
        effect_partition(frame, region="elsewhere")
    with pytest.raises(ValueError):
        effect_partition(frame, n_cells=0)


def test_effect_covariance_under_displacement(params):
    """Shifting a region is the same as conjugating its effect by the
    displacement unitary; the grid realizes the shift exactly when it is
    an integer number of cells."""
    D = 16
    frame = FrameSpec.coherent(params, D)
    g = PhaseGrid.centered(3.0, 3.0, 0.05, 0.05)
    base = np.zeros((g.n_q, g.n_p), dtype=bool)
    shifted = np.zeros_like(base)
    base[56:60, 60:64] = True
    shifted[64:68, 56:60] = True  # base moved by (+0.4, -0.2)
    E1 = effect_of_region(frame, g, base).matrix
    E2 = effect_of_region(frame, g, shifted).matrix
    U = displacement_op(params, D, 0.4, -0.2).matrix
    assert np.abs(E2 - U @ E1 @ U.conj().T).max() < 1e-12
    with pytest.raises(ValueError):
        effect_of_region(frame, g, base[:10])


def test_completeness_rank_of_partition_and_diagonal_family(params):
    frame = FrameSpec.coherent(params, 4)
    rep = completeness_rank(effect_partition(frame, region="support"))
    assert rep["complete"]
    assert rep["rank"] == 16
    assert rep["margin"] > 1e-3

    diag = np.stack([np.diag(row).astype(complex) for row in np.eye(4)])
    rep = completeness_rank(diag, D=4)
    assert not rep["complete"]
    assert rep["rank"] == 4


def test_fourier_criterion_on_gaussian_generator(params):
    """The vacuum generator's transform is e^{iqp/2} e^{-|z|^2/2}: no
    zeros, minimum magnitude at the scan corner."""
    frame = FrameSpec.coherent(params, 6)
    rep = fourier_criterion(frame, PhaseGrid.centered(1.0, 1.0, 0.5, 0.5))
    assert rep["min_abs"] == pytest.approx(math.exp(-0.5), abs=1e-10)
    assert abs(rep["argmin_q"]) == 1.0 and abs(rep["argmin_p"]) == 1.0
    assert isinstance(rep["samples"], CharSamples)


# -- coordinates and reconstruction ------------------------------------------

def test_hermitian_coords_isometry_and_roundtrip(rng):
    D = 5
    A = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    A = A + A.conj().T
    B = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    B = B + B.conj().T
    xa, xb = hermitian_coords(A), hermitian_coords(B)
    assert xa.size == D * D
    assert np.dot(xa, xb) == pytest.approx(np.trace(A @ B).real, abs=1e-12)
    assert np.abs(coords_to_hermitian(xa, D) - A).max() < 1e-14


def test_point_effects_match_density_pairing(params, rng):
    D = 8
    frame = FrameSpec.coherent(params, D)
    grid = PhaseGrid.centered(3.0, 3.0, 0.5, 0.5)
    W = random_density(D, rng)
    E = husimi_point_effects(frame, grid)
    assert E.shape == (grid.n_q * grid.n_p, D, D)
    via_effects = np.einsum("xjk,kj->x", E, W.matrix).real
    field = husimi(W, frame, grid)
    assert np.abs(
        via_effects - field.values.ravel() * grid.weight
    ).max() < 1e-14
    # each point effect is rank one and positive
    w = np.linalg.eigvalsh(E[0])
    assert w[-1] > 0 and abs(w[:-1]).max() < 1e-16


def test_reconstruction_from_density(params, rng):
    D = 6
    frame = FrameSpec.coherent(params, D)
    grid = auto_grid(frame, D, 0.1)
    W = random_density(D, rng)
    field = husimi(W, frame, grid)
    Wr, diag = reconstruct_from_density(field, frame)
    td = 0.5 * np.abs(np.linalg.eigvalsh(Wr.matrix - W.matrix)).sum()
    assert td < 1e-6
    assert diag["design_rank"] == 36
    assert not diag["rank_deficient"]

    noisy = np.clip(
        field.values + rng.normal(0.0, 1e-4, field.values.shape),
        0.0, 1.0 / (2.0 * math.pi),
    )
    Wn, _ = reconstruct_from_density(
        PhaseField(grid, noisy, kind="density"), frame
    )
    tdn = 0.5 * np.abs(np.linalg.eigvalsh(Wn.matrix - W.matrix)).sum()
    assert tdn < 1e-2
    with pytest.raises(ValueError):
        reconstruct_from_density(
            PhaseField(grid, noisy, kind="real"), frame
        )


def test_indicator_density_is_not_reproducible(params):
    """A flat indicator over a box is not the density of any block
    state; the least-squares fit must leave a visible residual."""
    D = 6
    frame = FrameSpec.coherent(params, D)
    grid = auto_grid(frame, D, 0.1)
    vals = np.zeros((grid.n_q, grid.n_p))
    mask = (np.abs(grid.qs)[:, None] < 2.0 - 1e-9) & (
        np.abs(grid.ps)[None, :] < 2.0 - 1e-9
    )
    vals[mask] = 1.0 / 16.0
    _, diag = reconstruct_from_density(
        PhaseField(grid, vals, kind="density"), frame
    )
    assert diag["residual"] > 1e-3


def test_reconstruction_scale_invariance_and_rank_flag(params, rng):
    D = 6
    frame = FrameSpec.coherent(params, D)
    W = random_density(D, rng)
    E = husimi_point_effects(frame, PhaseGrid.centered(4.0, 4.0, 0.4, 0.4))
    y = np.einsum("xjk,kj->x", E, W.matrix).real
    W1, d1 = reconstruct_state(y, E, D)
    W2, d2 = reconstruct_state(3.0 * y, 3.0 * E, D)
    # the ridge is relative, so uniform rescaling changes nothing
    assert np.abs(W1.matrix - W2.matrix).max() < 1e-10
    assert not d1["rank_deficient"]

    diag_family = np.stack([np.diag(row).astype(complex) for row in np.eye(D)])
    probs = np.einsum("xjk,kj->x", diag_family, W.matrix).real
    _, d3 = reconstruct_state(probs, diag_family, D)
    assert d3["rank_deficient"]
    assert d3["design_rank"] == D
    with pytest.raises(ValueError):
        reconstruct_state(y[:-1], E, D)

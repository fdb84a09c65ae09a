"""Frame overlaps, resolution of the identity, differential forms, and
the analytic (entire-function) side of the matched transform."""

import math

import numpy as np
import pytest

from phasekit.coherentframe import (
    BargmannFunction,
    FrameSpec,
    auto_grid,
    bargmann_eval_via_field,
    bargmann_field_samples,
    bargmann_ops_check,
    bargmann_transform,
    cauchy_riemann_residual,
    coherent_overlaps,
    gauge_transform,
    grid_is_adequate,
    kernel,
    kernel_reproducing_check,
    overlap_grid,
    pde_residual,
    phase_transform,
    resolution_check,
    stencil_d1,
    stencil_d2,
)
from phasekit.coherentframe import _overlaps_general
from phasekit.fock import FockVector, OscParams, hermite_functions, random_pure
from phasekit.grids import PhaseGrid


# -- overlap coefficients ----------------------------------------------------

def test_routes_are_labeled(params, params_wide):
    _, route = coherent_overlaps(params, 4, 0.5, 0.5, return_route=True)
    assert route == "closed-form"
    _, route = coherent_overlaps(params_wide, 4, 0.5, 0.5, return_route=True)
    assert route == "general"


def test_general_recurrence_agrees_with_closed_form_when_matched(params):
    """The recurrence degenerates to the closed form at the matched
    width; the two independent evaluations must coincide."""
    qs = np.array([0.0, 1.0, -0.7])
    ps = np.array([0.0, 0.5, 1.3])
    closed = coherent_overlaps(params, 10, qs, ps)
    general = _overlaps_general(params, 10, qs, ps)
    assert np.abs(closed - general).max() < 1e-14


def test_overlaps_match_position_quadrature(params_wide):
    """Independent route: the frame vector is the width-sigma Gaussian
    translated by q and modulated by e^{ipx}; integrate against the
    basis functions directly."""
    D = 6
    q, p = 0.8, -0.6
    c = coherent_overlaps(params_wide, D, q, p)
    xs = np.arange(-12.0, 12.0, 0.01)
    phi = hermite_functions(xs, params_wide, D)
    s2 = params_wide.sigma ** 2
    u = (2.0 * math.pi * s2) ** (-0.25) * np.exp(
        -((xs - q) ** 2) / (4.0 * s2) + 1j * p * xs
    )
    quad = (phi * u) @ np.full(xs.size, 0.01)
    assert np.abs(c - quad).max() < 1e-10


def test_matched_overlap_anchor(params):
    c = coherent_overlaps(params, 3, 1.0, 0.0)
    # c_0 = e^{-|z|^2/2} with |z|^2 = 1/2 here
    assert c[0] == pytest.approx(math.exp(-0.25), abs=1e-15)
    sg = params.sigma_g
    assert c[1] == pytest.approx(c[0] * 0.5 / sg, abs=1e-15)


def test_overlap_grid_shape(params):
    g = PhaseGrid.centered(1.0, 1.0, 0.5, 0.5)
    C = overlap_grid(params, 4, g)
    assert C.shape == (4, 5, 5)
    assert C[2, 2, 2] == pytest.approx(0.0, abs=1e-15)  # origin, n=2


# -- frame specification -----------------------------------------------------

def test_frame_spec_constructors(params):
    frame = FrameSpec.coherent(params, 8)
    assert frame.pure_coherent
    assert frame.generator.kind == "density"
    assert np.trace(frame.generator.matrix).real == pytest.approx(1.0)

    mix = FrameSpec.fock_mixture(params, 6, [0.6, 0.4])
    assert not mix.pure_coherent
    w, V = mix.generator_spectrum()
    assert sorted(w) == pytest.approx([0.4, 0.6])
    # eigenvectors of a diagonal generator are basis vectors
    assert np.abs(np.abs(V).max(axis=0) - 1.0).max() < 1e-12

    same = FrameSpec.from_matrix(params, 6, mix.generator)
    assert np.array_equal(same.generator.matrix, mix.generator.matrix)


def test_frame_spec_validation(params):
    with pytest.raises(ValueError):
        FrameSpec.fock_mixture(params, 4, [0.5, 0.6])
    with pytest.raises(ValueError):
        FrameSpec.fock_mixture(params, 4, [-0.1, 1.1])
    with pytest.raises(ValueError):
        FrameSpec.fock_mixture(params, 2, [0.5, 0.3, 0.2])
    with pytest.raises(ValueError):
        FrameSpec.from_matrix(params, 3, np.eye(3))  # trace 3
    gen = FrameSpec.coherent(params, 4).generator
    with pytest.raises(ValueError):
        FrameSpec(params, 5, gen)


# -- grid adequacy and resolution --------------------------------------------

def test_auto_grid_halfwidth(params):
    g = auto_grid(params, 16)
    assert -g.q_min == pytest.approx(14.0, abs=1e-12)
    assert grid_is_adequate(params, 16, g)
    small = PhaseGrid.centered(4.0, 4.0, 0.1, 0.1)
    assert not grid_is_adequate(params, 16, small)
    with pytest.raises(ValueError):
        auto_grid(params, 16, max_halfwidth=3.0)


def test_auto_grid_accepts_frames(params):
    frame = FrameSpec.fock_mixture(params, 8, [0.5, 0.5])
    g = auto_grid(frame, 8)
    assert grid_is_adequate(frame, 8, g)
    assert not grid_is_adequate(frame, 8, PhaseGrid.centered(3.0, 3.0, 0.5, 0.5))


def test_resolution_of_identity(params):
    rep = resolution_check(params, 16, auto_grid(params, 16))
    assert rep["adequate"]
    assert rep["trusted_dim"] == 8
    assert rep["defect_trusted"] < 1e-12
    assert rep["defect_full"] < 1e-12
    assert rep["n_samples"] == 561 * 561

    coarse = resolution_check(params, 16, PhaseGrid.centered(4.0, 4.0, 0.1, 0.1))
    assert not coarse["adequate"]
    assert coarse["defect_full"] > 1e-6

    mix = FrameSpec.fock_mixture(params, 4, [1.0])
    with pytest.raises(ValueError):
        resolution_check(FrameSpec.fock_mixture(params, 4, [0.5, 0.5]), 4,
                         auto_grid(mix, 4))


def test_transform_preserves_norm(params, rng):
    psi = random_pure(8, rng)
    g = auto_grid(params, 8)
    F = phase_transform(psi, params, 8, g)
    assert F.kind == "amplitude"
    assert F.norm_sq() == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ValueError):
        phase_transform(psi, params, 8, None)


def test_transform_is_antilinear_free_and_skew_symmetric(params, rng):
    """The q-derivative acts skew-adjointly on the range: the quadrature
    of conj(Psi) dPsi/dq has vanishing real part."""
    psi = random_pure(8, rng)
    g = auto_grid(params, 8)
    F = phase_transform(psi, params, 8, g)
    dF = stencil_d1(F.values, g.dq, axis=0)
    val = (np.conj(F.values) * dF).sum() * g.weight
    assert abs(val.real) < 1e-10


# -- kernel ------------------------------------------------------------------

def test_kernel_anchors(params):
    inv_2pi = 1.0 / (2.0 * math.pi)
    assert kernel(params, 12, (0.0, 0.0), (0.0, 0.0)) == pytest.approx(
        inv_2pi, abs=1e-15
    )
    assert abs(kernel(params, 12, (0.0, 0.0), (1.0, 0.0))) == pytest.approx(
        0.12394999430965298, abs=1e-14
    )


def test_kernel_reproduces_itself_under_quadrature(params):
    probes = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (-0.5, 0.5)]
    rep = kernel_reproducing_check(params, 12, auto_grid(params, 12), probes)
    assert rep["reproducing_residual"] < 1e-12
    assert rep["diag_defect"] < 1e-12
    assert rep["hermiticity_defect"] < 1e-14
    assert rep["gram_min_eig"] > 0.0


# -- differential forms ------------------------------------------------------

def _fine_window(params):
    scale = max(params.sigma, params.sigma_g,
                1.0 / (2.0 * params.sigma), 1.0 / (2.0 * params.sigma_g))
    return PhaseGrid.centered(6.0 * scale, 6.0 * scale, 0.02, 0.02)


@pytest.mark.parametrize("op_id", ["Q", "P", "H_general", "H_matched"])
def test_pde_forms_on_low_levels(params, op_id):
    grid = _fine_window(params)
    r = pde_residual(FockVector.number_state(1, 12), params, 12, op_id, grid)
    assert r["residual"] < 1e-6
    assert r["interior_margin"] == 2


def test_pde_general_form_off_matched(params_wide):
    grid = _fine_window(params_wide)
    r = pde_residual(FockVector.number_state(0, 12), params_wide, 12,
                     "H_general", grid)
    assert r["residual"] < 1e-6
    with pytest.raises(ValueError):
        pde_residual(FockVector.number_state(0, 12), params_wide, 12,
                     "H_matched", grid)
    with pytest.raises(ValueError):
        pde_residual(FockVector.number_state(0, 12), params_wide, 12,
                     "X", grid)


def test_transform_eigenrelation(params):
    """H phi_n transforms to omega (n + 1/2) times the phi_n field; the
    identity is exact because H is diagonal."""
    g = PhaseGrid.centered(3.0, 3.0, 0.25, 0.25)
    for n in (0, 2):
        psi = FockVector.number_state(n, 8)
        lhs = phase_transform(
            np.diag(params.omega * (np.arange(8) + 0.5)) @ psi.coeffs,
            params, 8, g,
        )
        rhs = phase_transform(psi, params, 8, g)
        assert np.abs(lhs.values - params.omega * (n + 0.5) * rhs.values).max() < 1e-14


def test_stencils_differentiate_polynomials():
    xs = np.arange(0.0, 2.0, 0.1)
    F = (xs ** 3)[:, None] * np.ones((1, 6))
    d1 = stencil_d1(F, 0.1, axis=0)
    d2 = stencil_d2(F, 0.1, axis=0)
    # fourth-order stencils are exact on cubics
    assert np.abs(d1[2:-2] - 3.0 * (xs[2:-2] ** 2)[:, None]).max() < 1e-12
    assert np.abs(d2[2:-2] - 6.0 * xs[2:-2][:, None]).max() < 1e-12
    assert np.abs(d1[:2]).max() == 0.0 and np.abs(d1[-2:]).max() == 0.0


# -- gauge -------------------------------------------------------------------

def test_gauge_transforms(params):
    g = PhaseGrid.centered(2.0, 2.0, 0.2, 0.2)
    F = phase_transform(FockVector.number_state(0, 6), params, 6, g)
    half = gauge_transform(F, "half_qp")
    # e^{iqp/2} cancels the ground-state phase exactly
    assert np.abs(half.values.imag).max() < 1e-15
    assert half.norm_sq() == pytest.approx(F.norm_sq(), abs=1e-13)
    twice = gauge_transform(half, "half_qp")
    full = gauge_transform(F, "qp")
    assert np.abs(twice.values - full.values).max() < 1e-12
    assert gauge_transform(F, "none") is F
    with pytest.raises(ValueError):
        gauge_transform(F, "thrice_qp")
    dens = PhaseGrid.centered(1.0, 1.0, 0.5, 0.5)
    from phasekit.grids import PhaseField

    with pytest.raises(ValueError):
        gauge_transform(PhaseField(dens, np.full((5, 5), 0.1), kind="density"),
                        "half_qp")


# -- analytic representation -------------------------------------------------

def test_series_coefficients_and_norm(params, rng):
    f3 = bargmann_transform(FockVector.number_state(3, 6), params)
    expected = np.zeros(6)
    expected[3] = 1.0 / math.sqrt(6.0)
    assert np.abs(f3.coeffs - expected).max() < 1e-15
    z = 2.0 + 1.0j
    assert f3(z) == pytest.approx(z ** 3 / math.sqrt(6.0), abs=1e-12)
    assert f3.norm_sq() == pytest.approx(1.0, abs=1e-15)

    psi = random_pure(10, rng)
    f = bargmann_transform(psi, params)
    assert f.norm_sq() == pytest.approx(1.0, abs=1e-12)


def test_series_and_field_routes_agree(params, rng):
    psi = random_pure(10, rng, support=5)
    f = bargmann_transform(psi, params)
    for z in (0.3 + 0.2j, -0.5 + 0.1j, 0.2 - 0.4j):
        via_field = bargmann_eval_via_field(psi, params, 10, z)
        assert abs(via_field - f(z)) < 1e-10


def test_coefficient_actions_of_operators(params, rng):
    psi = random_pure(10, rng, support=5)
    res = bargmann_ops_check(psi, params, 10)
    assert set(res) == {"lower", "raise", "Q", "P", "H"}
    assert max(res.values()) < 1e-12
    with pytest.raises(ValueError):
        bargmann_ops_check(psi.coeffs[:6], params, 10)


def test_analyticity_residuals(params, rng):
    xs = np.arange(-1.0, 1.0 + 0.01, 0.02)
    assert cauchy_riemann_residual(
        FockVector.number_state(0, 6), params, 6, xs, xs
    ) < 1e-12
    assert cauchy_riemann_residual(
        FockVector.number_state(1, 6), params, 6, xs, xs
    ) < 1e-12
    psi = random_pure(8, rng)
    assert cauchy_riemann_residual(psi, params, 8, xs, xs) < 1e-9
    with pytest.raises(ValueError):
        cauchy_riemann_residual(psi, params, 8, xs[:4], xs)


def test_matched_width_is_required(params_wide, rng):
    psi = random_pure(6, rng)
    with pytest.raises(ValueError):
        bargmann_transform(psi, params_wide)
    with pytest.raises(ValueError):
        bargmann_eval_via_field(psi, params_wide, 6, 0.1 + 0.1j)
    with pytest.raises(ValueError):
        bargmann_field_samples(psi, params_wide, 6, np.zeros(5), np.zeros(5))

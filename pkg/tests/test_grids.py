"""Grid geometry and sampled-field serialization."""

import math

import numpy as np
import pytest

from phasekit.grids import PhaseField, PhaseGrid


def test_centered_grid_is_symmetric():
    g = PhaseGrid.centered(3.0, 2.0, 0.1, 0.05)
    assert g.qs[0] == pytest.approx(-3.0, abs=1e-12)
    assert g.qs[-1] == pytest.approx(3.0, abs=1e-12)
    assert g.ps[0] == pytest.approx(-2.0, abs=1e-12)
    assert g.n_q == 61 and g.n_p == 81
    # the origin is a sample point for an odd count
    assert np.abs(g.qs).min() < 1e-12
    assert g.weight == pytest.approx(0.005)


def test_grid_validation():
    with pytest.raises(ValueError):
        PhaseGrid(0.0, 0.0, -0.1, 0.1, 4, 4)
    with pytest.raises(ValueError):
        PhaseGrid(0.0, 0.0, 0.1, 0.1, 1, 8)


def test_mid_edges_sit_on_the_boundary():
    g = PhaseGrid.centered(2.0, 1.0, 0.5, 0.5)
    edges = g.mid_edges()
    assert (-2.0, 0.0) in [(round(a, 12), round(b, 12)) for a, b in edges]
    assert len(edges) == 4
    for a, b in edges:
        on_q = abs(abs(a) - 2.0) < 1e-12 and abs(b) < 1e-12
        on_p = abs(abs(b) - 1.0) < 1e-12 and abs(a) < 1e-12
        assert on_q or on_p


def test_as_dict_keys():
    g = PhaseGrid.centered(1.0, 1.0, 0.5, 0.5)
    d = g.as_dict()
    assert set(d) == {"q_min", "p_min", "dq", "dp", "Nq", "Np"}
    assert d["Nq"] == 5


def test_field_shape_and_kind_validation():
    g = PhaseGrid.centered(1.0, 1.0, 0.5, 0.5)
    with pytest.raises(ValueError):
        PhaseField(g, np.zeros((4, 5)), kind="real")
    with pytest.raises(ValueError):
        PhaseField(g, np.zeros((5, 5)), kind="wibble")
    with pytest.raises(ValueError):
        PhaseField(g, np.full((5, 5), 1.0 + 0.5j), kind="real")


def test_density_bound_enforced():
    g = PhaseGrid.centered(1.0, 1.0, 0.5, 0.5)
    cap = 1.0 / (2.0 * math.pi)
    PhaseField(g, np.full((5, 5), cap), kind="density")
    with pytest.raises(ValueError):
        PhaseField(g, np.full((5, 5), cap + 1e-6), kind="density")
    with pytest.raises(ValueError):
        PhaseField(g, np.full((5, 5), -1e-6), kind="density")


def test_normalized_density_checks_mass():
    g = PhaseGrid.centered(2.0, 2.0, 0.5, 0.5)
    v = np.full((9, 9), 1.0 / (9 * 9 * g.weight))
    f = PhaseField(g, v, kind="density", normalized=True)
    assert f.total_mass() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        PhaseField(g, 0.5 * v, kind="density", normalized=True)


def test_total_mass_squares_amplitudes():
    g = PhaseGrid.centered(1.0, 1.0, 0.5, 0.5)
    f = PhaseField(g, np.full((5, 5), 2.0j), kind="amplitude")
    assert f.total_mass() == pytest.approx(4.0 * 25 * g.weight)
    assert f.norm_sq() == pytest.approx(f.total_mass())


def test_csv_roundtrip_is_exact_for_both_kinds(rng):
    g = PhaseGrid.centered(1.0, 0.5, 0.25, 0.25)
    amp = PhaseField(g, rng.normal(size=(9, 5)) + 1j * rng.normal(size=(9, 5)))
    back = PhaseField.from_csv(amp.to_csv())
    assert back.kind == "amplitude"
    assert back.grid == g
    assert np.array_equal(back.values, amp.values)

    dens = PhaseField(g, rng.uniform(0.0, 0.15, size=(9, 5)), kind="density")
    back = PhaseField.from_csv(dens.to_csv())
    assert back.kind == "density"
    assert np.array_equal(back.values, dens.values)


def test_csv_rows_are_p_major():
    g = PhaseGrid(0.0, 10.0, 1.0, 1.0, 2, 2)
    f = PhaseField(g, np.array([[0.0, 1.0], [2.0, 3.0]]), kind="real")
    rows = f.to_csv().strip().splitlines()
    assert rows[0] == "q,p,rho"
    # inner loop walks q at fixed p
    assert rows[1].startswith("0,10,")
    assert rows[2].startswith("1,10,")
    assert rows[3].startswith("0,11,")
    assert rows[1].endswith(",0")
    assert rows[2].endswith(",2")


def test_malformed_csv_raises():
    with pytest.raises(ValueError):
        PhaseField.from_csv("")
    with pytest.raises(ValueError):
        PhaseField.from_csv("x,y,z\n0,0,0\n")
    # missing one row of the product grid
    good = PhaseField(
        PhaseGrid.centered(1.0, 1.0, 1.0, 1.0), np.ones((3, 3)), kind="real"
    ).to_csv()
    lines = good.strip().splitlines()
    with pytest.raises(ValueError):
        PhaseField.from_csv("\n".join(lines[:-1]), kind="real")
    # non-uniform q axis
    bad = "q,p,rho\n0,0,1\n1,0,1\n2.5,0,1\n0,1,1\n1,1,1\n2.5,1,1\n"
    with pytest.raises(ValueError):
        PhaseField.from_csv(bad, kind="real")


def test_comment_lines_are_skipped():
    g = PhaseGrid.centered(1.0, 1.0, 1.0, 1.0)
    f = PhaseField(g, np.ones((3, 3)), kind="real")
    text = "# provenance line\n" + f.to_csv()
    back = PhaseField.from_csv(text, kind="real")
    assert np.array_equal(back.values, f.values)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from porovisc.errors import DegenerateDeformation
from porovisc.fields import (
    Grid,
    Load,
    assemble_energy,
    assemble_load,
    check_admissible,
    deformation_gradient,
    flux_matrix,
    regularization_form,
    regularization_matrix,
    robin_boundary_form,
    second_gradient,
)
from porovisc.materials import PowerHyperstress, make_material


def test_grid_geometry():
    g = Grid(8)
    assert g.h == 1 / 8
    assert g.nodes[-1] == 1.0
    assert np.allclose(g.centers, (np.arange(8) + 0.5) / 8)
    assert list(g.dirichlet_nodes) == [0]
    assert Grid(8, dirichlet="both").free_nodes.tolist() == list(range(1, 8))


@pytest.mark.parametrize("kw", [{"n_cells": 3}, {"n_cells": 8, "d": 2}, {"n_cells": 8, "kappa_left": -1.0},
                                {"n_cells": 8, "dirichlet": "right"}])
def test_grid_rejects(kw):
    with pytest.raises(ValueError):
        Grid(**kw)


def test_gradient_exact_on_affine():
    g = Grid(16)
    F = deformation_gradient(g, 2.5 * g.nodes + 0.1)
    assert F.shape == (16, 1, 1)
    assert np.allclose(F, 2.5, atol=1e-13)


@pytest.mark.parametrize("n", [4, 7, 32])
def test_second_gradient_exact_on_cubics(n):
    g = Grid(n)
    x = g.nodes
    G = second_gradient(g, x**3 - 2 * x**2)
    # cell value = average of the nodal second derivatives 6x - 4
    expected = 0.5 * ((6 * x[:-1] - 4) + (6 * x[1:] - 4))
    assert np.allclose(G[:, 0, 0, 0], expected, atol=1e-9)


def test_face_weights_sum_to_one():
    g = Grid(10)
    for order in (1, 2, 3):
        assert g.face_weights(order).sum() == pytest.approx(1.0, abs=1e-15)


def test_regularization_form_exact_on_linear():
    g = Grid(20)
    assert regularization_form(g, 1, g.centers, g.centers) == pytest.approx(1.0, abs=1e-12)
    assert regularization_form(g, 2, g.centers**2, g.centers**2) == pytest.approx(4.0, abs=1e-9)


@given(arrays(float, 12, elements=st.floats(-5, 5)), st.integers(1, 3))
def test_regularization_matrix_psd_with_polynomial_kernel(mu, theta):
    g = Grid(12)
    K = regularization_matrix(g, theta)
    assert mu @ (K @ mu) >= -1e-9 * (1 + mu @ mu)
    assert abs((K @ np.ones(12)).max()) < 1e-6
    assert np.allclose(K.toarray(), K.toarray().T)


@given(arrays(float, 12, elements=st.floats(-5, 5)), arrays(float, 11, elements=st.floats(0.0, 3.0)))
def test_flux_matrix_symmetric_psd(mu, face):
    g = Grid(12)
    K = flux_matrix(g, face)
    assert np.allclose(K.toarray(), K.toarray().T)
    assert mu @ (K @ mu) >= -1e-9 * (1 + mu @ mu)
    assert np.max(np.abs(K @ np.ones(12))) < 1e-9


def test_robin_form_uses_adjacent_cells():
    g = Grid(6, kappa_left=2.0, kappa_right=3.0)
    mu = np.arange(6.0)
    assert robin_boundary_form(g, mu, mu) == pytest.approx(2 * 0 + 3 * 25)


def test_load_vector_pairs_with_chi():
    g = Grid(8)
    load = Load(f=0.7, g=-0.3)
    chi = g.nodes**2 + 1
    assert load.vector(g) @ chi == pytest.approx(assemble_load(g, load, chi))
    # body term: midpoint rule on node averages of chi
    mid = 0.5 * (chi[:-1] + chi[1:])
    assert assemble_load(g, load, chi) == pytest.approx(0.7 * mid.sum() / 8 - 0.3 * chi[-1])


def test_traction_ignored_when_both_ends_pinned():
    g = Grid(8, dirichlet="both")
    assert assemble_load(g, Load(g=5.0), g.nodes) == 0.0


def test_energy_of_identity():
    g = Grid(8)
    mat = make_material("biot")
    # Phi(1, 1) = -k c_eq with the entropy term; hyperstress vanishes on the identity
    assert assemble_energy(g, mat, PowerHyperstress(), g.nodes, np.ones(8)) == pytest.approx(-1.0, abs=1e-14)


def test_inadmissible_deformation():
    g = Grid(8)
    chi = g.nodes.copy()
    chi[4] = chi[3]
    with pytest.raises(DegenerateDeformation):
        check_admissible(g, chi)

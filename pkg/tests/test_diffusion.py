import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve

from porovisc.diffusion import DiffSolveConfig, assemble_diffusion_system, dissipation_breakdown, fixed_point_diffusion
from porovisc.errors import FixedPointDiverged
from porovisc.fields import Grid
from porovisc.materials import LawBundle, make_material

from .test_materials import biot_mu_1d


@pytest.fixture
def biot():
    return LawBundle(make_material("biot"))


def cosine(g):
    return 1 + 0.5 * np.cos(np.pi * g.centers)


def test_equilibrium_step(biot):
    g = Grid(16, kappa_right=1.0)
    res = fixed_point_diffusion(g, biot, g.nodes, np.ones(16), 0.01)
    assert np.max(np.abs(res.mu)) < 1e-14
    assert np.max(np.abs(res.c - 1)) < 1e-14


def test_closed_system_conserves_mass(laws):
    g = Grid(32)
    c_prev = cosine(g)
    res = fixed_point_diffusion(g, laws, g.nodes * 1.05, c_prev, 0.01)
    assert abs(res.mass_change) < 1e-13
    assert res.robin_square == 0.0


def test_robin_mass_identity(biot):
    g = Grid(32, kappa_left=0.5, kappa_right=2.0)
    tau = 0.01
    mu_ext = np.array([0.3, -0.2])
    res = fixed_point_diffusion(g, biot, g.nodes, cosine(g), tau, mu_ext=mu_ext)
    inflow = tau * np.sum(g.kappa * (mu_ext - res.mu[[0, -1]]))
    assert res.mass_change == pytest.approx(inflow, abs=1e-13)


def test_tested_with_mu_gives_energy_identity(biot):
    g = Grid(32, kappa_right=1.0)
    tau = 0.02
    res = fixed_point_diffusion(g, biot, g.nodes, cosine(g), tau, mu_ext=(0.0, 0.4))
    lhs = g.h * np.sum(res.mu * (res.c - cosine(g)))
    d = dissipation_breakdown(res)
    rhs = -tau * (d["flux"] + d["regularization"] + d["robin_square"]) + tau * d["robin_source"]
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_subdifferential_consistency(laws):
    g = Grid(32, kappa_right=1.0)
    res = fixed_point_diffusion(g, laws, g.nodes, cosine(g), 0.01, mu_ext=(0.0, 1.0))
    assert res.subdiff_residual <= 1e-10 * (1 + np.max(np.abs(res.mu)))


def test_large_step_relaxes_to_external_potential(biot):
    g = Grid(16, kappa_right=1.0)
    mu_star = 0.6
    res = fixed_point_diffusion(g, biot, g.nodes, cosine(g), 1e7, mu_ext=(0.0, mu_star))
    c_star = brentq(lambda c: biot_mu_1d(1.0, c) - mu_star, 1e-6, 10, xtol=1e-15)
    assert np.allclose(res.mu, mu_star, atol=1e-5)
    assert np.allclose(res.c, c_star, atol=1e-5)


def test_solution_is_fixed_point_of_frozen_map(biot):
    g = Grid(16, kappa_right=1.0)
    c_prev = cosine(g)
    cfg = DiffSolveConfig(eta=1e-3)
    res = fixed_point_diffusion(g, biot, g.nodes, c_prev, 0.01, cfg, mu_ext=(0.0, 0.5))
    sys = assemble_diffusion_system(g, biot, g.nodes, res.c, c_prev, 0.01, cfg.eta, cfg.theta, (0.0, 0.5))
    mu_map = spsolve(sys.matrix.tocsc(), sys.rhs)
    assert np.allclose(mu_map, res.mu, atol=1e-9)


def test_picard_agrees_with_newton_when_it_contracts(biot):
    g = Grid(16, kappa_right=1.0)
    c_prev = cosine(g)
    newton = fixed_point_diffusion(g, biot, g.nodes, c_prev, 1.0, mu_ext=(0.0, 0.2))
    picard = fixed_point_diffusion(g, biot, g.nodes, c_prev, 1.0, DiffSolveConfig(scheme="picard", damping=0.5),
                                   mu_ext=(0.0, 0.2))
    assert np.allclose(newton.mu, picard.mu, atol=1e-9)


def test_picard_divergence_is_reported(biot):
    g = Grid(64, kappa_right=1.0)
    with pytest.raises(FixedPointDiverged):
        fixed_point_diffusion(g, biot, g.nodes, cosine(g), 1 / 128, DiffSolveConfig(scheme="picard"))


def test_picard_needs_exchange(biot):
    g = Grid(8)
    with pytest.raises(FixedPointDiverged):
        fixed_point_diffusion(g, biot, g.nodes, np.ones(8), 1.0, DiffSolveConfig(scheme="picard"))


def test_empty_cells_become_positive(laws):
    g = Grid(16, kappa_right=1.0)
    c_prev = np.ones(16)
    c_prev[5:9] = 0.0
    res = fixed_point_diffusion(g, laws, g.nodes, c_prev, 0.01)
    assert np.all(res.c > 0)


def test_conjugate_gradient_path_matches_direct(biot):
    g = Grid(32, kappa_right=1.0)
    a = fixed_point_diffusion(g, biot, g.nodes, cosine(g), 1.0, DiffSolveConfig(scheme="picard", damping=0.5))
    b = fixed_point_diffusion(g, biot, g.nodes, cosine(g), 1.0,
                              DiffSolveConfig(scheme="picard", damping=0.5, direct_max_cells=4))
    assert np.allclose(a.mu, b.mu, atol=1e-8)


@pytest.mark.parametrize("kw", [{"eta": 0.0}, {"theta": 0}, {"damping": 1.5}, {"scheme": "anderson"}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        DiffSolveConfig(**kw)

import numpy as np
import pytest
from scipy.optimize import brentq

from porovisc.errors import DegenerateDeformation, MaxIterationsExceeded
from porovisc.fields import Grid, Load
from porovisc.materials import LawBundle, make_material
from porovisc.mechanics import (
    IncrementalProblem,
    MechSolveConfig,
    incremental_functional,
    incremental_gradient,
    solve_mechanical_step,
)

from .test_materials import biot_stress_1d


@pytest.fixture
def biot():
    return LawBundle(make_material("biot"))


def test_equilibrium_is_stationary(biot):
    g = Grid(16)
    res = solve_mechanical_step(g, biot, g.nodes, np.ones(16), Load(), 0.01)
    assert res.iterations == 0
    assert res.converged
    assert np.array_equal(res.chi, g.nodes)


def test_gradient_matches_differences(laws, rng):
    g = Grid(12)
    chi_prev = g.nodes + 0.03 * np.sin(np.pi * g.nodes)
    chi = g.nodes + 0.05 * np.sin(2 * np.pi * g.nodes) * g.nodes
    c_prev = rng.uniform(0.5, 2.0, 12)
    load, tau = Load(0.2, -0.4), 0.05
    grad = incremental_gradient(g, laws, chi, chi_prev, c_prev, load, tau)
    assert grad[0] == 0.0
    for i in range(1, 13):
        e = np.zeros(13)
        e[i] = 1e-7
        fd = (incremental_functional(g, laws, chi + e, chi_prev, c_prev, load, tau)
              - incremental_functional(g, laws, chi - e, chi_prev, c_prev, load, tau)) / 2e-7
        assert fd == pytest.approx(grad[i], rel=1e-6, abs=1e-8)


@pytest.mark.parametrize("traction", [0.4, -0.8])
def test_quasi_static_uniaxial_tension(biot, traction):
    # with huge tau the viscous term is negligible; the answer is homogeneous with P(f, c) = g
    g = Grid(16)
    c = 1.3
    f_exact = brentq(lambda f: biot_stress_1d(f, c) - traction, 0.2, 5.0, xtol=1e-15)
    res = solve_mechanical_step(g, biot, g.nodes, np.full(16, c), Load(g=traction), 1e10)
    F = np.diff(res.chi) * 16
    assert np.allclose(F, f_exact, rtol=1e-7)


def test_minimizer_beats_competitor(biot):
    g = Grid(32)
    res = solve_mechanical_step(g, biot, g.nodes, np.linspace(0.5, 1.5, 32), Load(f=0.3, g=0.5), 0.01)
    assert res.decrease > 0
    prob = IncrementalProblem(g, biot, g.nodes, np.linspace(0.5, 1.5, 32), Load(f=0.3, g=0.5), 0.01)
    assert res.value == pytest.approx(prob.value(res.chi))
    assert np.linalg.norm(prob.gradient(res.chi)) <= 1e-8 * (1 + abs(res.value))
    rng = np.random.default_rng(0)
    for _ in range(10):
        trial = res.chi + 1e-3 * rng.standard_normal(33) * (g.nodes > 0)
        assert prob.value(trial) >= res.value


def test_strong_compression_keeps_orientation(biot):
    g = Grid(32)
    res = solve_mechanical_step(g, biot, g.nodes, np.ones(32), Load(g=-20.0), 1e6)
    assert res.min_det > 0


def test_iteration_cap(biot):
    g = Grid(16)
    with pytest.raises(MaxIterationsExceeded) as info:
        solve_mechanical_step(g, biot, g.nodes, np.ones(16), Load(g=1.0), 0.01, MechSolveConfig(max_iter=1))
    assert info.value.result is not None
    res = solve_mechanical_step(g, biot, g.nodes, np.ones(16), Load(g=1.0), 0.01, MechSolveConfig(max_iter=1),
                                strict=False)
    assert not res.converged


def test_inadmissible_warm_start(biot):
    g = Grid(8)
    chi = g.nodes[::-1].copy()
    with pytest.raises(DegenerateDeformation):
        solve_mechanical_step(g, biot, chi, np.ones(8), Load(), 0.1)


@pytest.mark.parametrize("kw", [{"det_guard": 1.5}, {"g_tol_rel": 0.0}, {"memory": 0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        MechSolveConfig(**kw)

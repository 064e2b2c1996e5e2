import json

import numpy as np
import pytest

from porovisc.audit import (
    SamplingPlan,
    in_FR,
    incremental_gradient_audit,
    random_rotations,
    sample_FR,
    validate_assumptions,
)
from porovisc.config import benchmark_config, build_grid, build_laws
from porovisc.materials import IsotropicViscosity, PowerHyperstress, PowerMobility, ViscousLaw, make_material


def test_rotations_are_proper(rng):
    Q = random_rotations(20, 3, rng)
    assert np.allclose(Q @ np.swapaxes(Q, -1, -2), np.eye(3), atol=1e-13)
    assert np.allclose(np.linalg.det(Q), 1.0)


def test_sampled_gradients_lie_in_FR(rng):
    F = sample_FR(100, 2, 4.0, rng)
    assert np.all(in_FR(F, 4.0))


@pytest.mark.parametrize("name", ["biot", "neo-hookean-entropy"])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_builtin_laws_pass_audit(name, d):
    rep = validate_assumptions(make_material(name), PowerHyperstress(), IsotropicViscosity(), PowerMobility(),
                               SamplingPlan(d=d, n_samples=100, n_rotations=20), kappa=[0.0, 1.0],
                               initial=(np.eye(d)[None].repeat(4, 0), np.ones(4)))
    assert rep.passed, [c.name for c in rep.failures()]
    json.loads(rep.to_json())


class NotFrameIndifferent(ViscousLaw):
    def zeta(self, F, Fdot, c=None):
        return 0.5 * np.sum(Fdot**2, axis=(-2, -1))

    def dzeta_dFdot(self, F, Fdot, c=None):
        return Fdot


def test_audit_flags_spin_dependent_viscosity():
    rep = validate_assumptions(make_material("biot"), PowerHyperstress(), NotFrameIndifferent(), PowerMobility(),
                               SamplingPlan(d=2, n_samples=50, n_rotations=20))
    assert not rep.passed
    assert not rep.get("viscous_dynamic_frame_indifference").passed


def test_audit_flags_bad_initial_data():
    rep = validate_assumptions(make_material("biot"), PowerHyperstress(), IsotropicViscosity(), PowerMobility(),
                               SamplingPlan(d=1, n_samples=20, n_rotations=5),
                               initial=(np.full((3, 1, 1), 0.5), np.array([1.0, -0.1, 1.0])))
    assert not rep.get("initial_data").passed


def test_gradient_audit_small_grid():
    cfg = benchmark_config(n_cells=8)
    errs = incremental_gradient_audit(build_grid(cfg), build_laws(cfg), n_states=3)
    assert errs.shape == (3,)
    assert errs.max() < 1e-6


def test_fewer_samples_than_rotations():
    rep = validate_assumptions(make_material("biot"), PowerHyperstress(), IsotropicViscosity(), PowerMobility(),
                               SamplingPlan(d=2, n_samples=10, n_rotations=50))
    assert rep.passed

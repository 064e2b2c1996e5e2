import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from porovisc.audit import sample_FR
from porovisc.errors import DegenerateDeformation, InvalidParams
from porovisc.materials import (
    BiotMaterial,
    BiotParams,
    CompressibleNeoHookean,
    ExponentProfile,
    IsotropicViscosity,
    NeoHookeanEntropyMaterial,
    NeoHookeanEntropyParams,
    PowerHyperstress,
    PowerMobility,
    derive_flux_exponent,
    invert_chemical_potential,
    make_material,
    right_cauchy_green_rate,
)


def biot_phi_1d(f, c, P=BiotParams()):
    e = (P.q * P.b - 2 * P.a) / 2
    n0 = P.a + P.b + e
    gap = c - P.c_eq - P.beta * (f - 1)
    return P.a * f * f + P.b * f ** -P.q + e * f * f - n0 + 0.5 * P.M_B * gap**2 + P.k * c * (math.log(c / P.c_eq) - 1)


def biot_stress_1d(f, c, P=BiotParams()):
    e = (P.q * P.b - 2 * P.a) / 2
    gap = c - P.c_eq - P.beta * (f - 1)
    return 2 * P.a * f - P.q * P.b * f ** (-P.q - 1) + 2 * e * f - P.M_B * P.beta * gap


def biot_mu_1d(f, c, P=BiotParams()):
    return P.M_B * (c - P.c_eq - P.beta * (f - 1)) + P.k * math.log(c / P.c_eq)


@pytest.mark.parametrize("f,c", [(1.0, 1.0), (1.3, 0.7), (0.6, 2.5), (2.0, 0.05)])
def test_biot_closed_form_1d(f, c):
    mat = BiotMaterial(BiotParams())
    F = np.array([[[f]]])
    assert mat.phi(F, c)[0] == pytest.approx(biot_phi_1d(f, c), rel=1e-13, abs=1e-14)
    assert mat.dphi_dF(F, c)[0, 0, 0] == pytest.approx(biot_stress_1d(f, c), rel=1e-13, abs=1e-14)
    assert mat.dphi_dc(F, c)[0] == pytest.approx(biot_mu_1d(f, c), rel=1e-13, abs=1e-14)
    assert mat.d2phi_dcc(F, c)[0] == pytest.approx(1 + 1 / c, rel=1e-14)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_elastic_part_is_stress_free_at_identity(d):
    el = CompressibleNeoHookean(0.5, 1.0, 2.0)
    eye = np.eye(d)[None]
    J = np.ones(1)
    assert el.energy(eye, J)[0] == pytest.approx(0.0, abs=1e-15)
    assert np.max(np.abs(el.stress(eye, J, eye))) < 1e-15


def test_reference_state_of_biot_has_zero_potential():
    mat = BiotMaterial(BiotParams(c_eq=2.0))
    F = np.eye(2)[None]
    assert mat.dphi_dc(F, 2.0)[0] == pytest.approx(0.0, abs=1e-15)
    assert np.max(np.abs(mat.dphi_dF(F, 2.0))) < 1e-14


def test_neo_hookean_entropy_potential_matches_formula():
    P = NeoHookeanEntropyParams(k=1.5, c_ref=0.8, swelling=0.4)
    mat = NeoHookeanEntropyMaterial(P)
    f, c = 1.2, 0.9
    g = 2 * (math.sqrt(1 + c) - 1)
    dg = 1 / math.sqrt(1 + c)
    mu = P.k * math.log(c / P.c_ref) + P.swelling * dg * math.tanh(f - 1)
    assert mat.dphi_dc(np.array([[[f]]]), c)[0] == pytest.approx(mu, rel=1e-13)
    el = CompressibleNeoHookean(P.a, P.b, P.q)
    phi = el.energy(np.array([[[f]]]), np.array([f]))[0] + P.k * c * (math.log(c / P.c_ref) - 1) + P.swelling * g * math.tanh(f - 1)
    assert mat.phi(np.array([[[f]]]), c)[0] == pytest.approx(phi, rel=1e-13)


def test_inverted_deformation_rejected():
    mat = make_material("biot")
    with pytest.raises(DegenerateDeformation):
        mat.phi(np.array([[[-0.5]]]), 1.0)
    with pytest.raises(DegenerateDeformation):
        mat.dphi_dF(np.diag([1.0, 0.0])[None], 1.0)


@pytest.mark.parametrize("bad", [{"M_B": 0.0}, {"k": -1.0}, {"beta": float("nan")}])
def test_invalid_biot_parameters(bad):
    with pytest.raises(InvalidParams):
        make_material("biot", bad)


def test_unknown_material():
    with pytest.raises(InvalidParams):
        make_material("rubber")


def test_swelling_bound():
    with pytest.raises(InvalidParams):
        NeoHookeanEntropyMaterial(NeoHookeanEntropyParams(k=0.1, swelling=0.6))


# exponent windows


def test_flux_exponent_case_one():
    prof = ExponentProfile(q=2, r=0, alpha=-0.5, gamma1=0, gamma2=0, case_tag="CaseI", m=1)
    assert derive_flux_exponent(prof, 1) == pytest.approx(3 / 2)
    assert derive_flux_exponent(prof, 2) == pytest.approx(4 / 3)


def test_flux_exponent_case_two_biot():
    # min((md + 2(r+2))/(md + r + 2), (d(m+r+1) + 2(r+2))/(d(m+r+1) + r + 2)) with m=1, r=0, d=1
    prof = make_material("biot").exponents.combine(m=1)
    assert derive_flux_exponent(prof, 1) == pytest.approx(min(5 / 3, 6 / 4))


def test_default_profiles_pass_windows():
    for name in ("biot", "neo-hookean-entropy"):
        prof = make_material(name).exponents.combine(p=6, m=1)
        assert prof.violations(1) == []
        assert prof.violations(2) == []


def test_case_one_mobility_window_message():
    prof = make_material("neo-hookean-entropy").exponents.combine(p=6, m=0.5)
    assert "(A3)(ii) Case I requires 1 ≤ m ≤ 2" in prof.violations(1)


def test_hyperstress_exponent_must_exceed_dimension():
    prof = make_material("biot").exponents.combine(p=3, m=1)
    assert any(v.startswith("(A1)") for v in prof.violations(3))


def test_p_four_breaks_biot_window():
    prof = make_material("biot").exponents.combine(p=4, m=1)
    assert any(v.startswith("(A3)(iii)") for v in prof.violations(1))


# dissipation, hyperstress, mobility


def test_viscous_stress_1d():
    visc = IsotropicViscosity(nu=0.3)
    F, Fd = np.array([[[1.5]]]), np.array([[[0.2]]])
    # Cdot = 2 F Fd, zeta = nu/2 Cdot^2, d zeta / d Fd = 2 nu F Cdot
    assert visc.zeta(F, Fd)[0] == pytest.approx(0.5 * 0.3 * (2 * 1.5 * 0.2) ** 2)
    assert visc.dzeta_dFdot(F, Fd)[0, 0, 0] == pytest.approx(2 * 0.3 * 1.5 * (2 * 1.5 * 0.2))


def test_rigid_rotation_rate_is_not_dissipated(rng):
    Fd_skew = rng.standard_normal((10, 3, 3))
    W = Fd_skew - np.swapaxes(Fd_skew, -1, -2)
    F = sample_FR(10, 3, 4.0, rng)
    Cd = right_cauchy_green_rate(F, W @ F)
    assert np.max(np.abs(Cd)) < 1e-12


def test_hyperstress_power_law():
    H = PowerHyperstress(c_H=2.0, p=6)
    G = np.full((1, 1, 1, 1), 0.5)
    assert H.h_pot(G)[0] == pytest.approx(2.0 / 6 * 0.5**6)
    assert H.h_stress(G)[0, 0, 0, 0] == pytest.approx(2.0 * 0.5**5)


def test_mobility_pullback_1d():
    mob = PowerMobility(m=2.0, M0=3.0)
    f, c = 1.6, 0.8
    # Cof F = 1 in 1-D, so M = M0 (c/f)^m / f
    assert mob.lagrangian(np.array([[[f]]]), c)[0, 0, 0] == pytest.approx(3.0 * (c / f) ** 2 / f)
    assert mob.dlagrangian_dc(np.array([[[f]]]), c)[0, 0, 0] == pytest.approx(2 * 3.0 * c / f**3)


def test_mobility_vanishes_at_zero_concentration():
    mob = PowerMobility(m=1.0)
    assert mob.lagrangian(np.eye(2)[None], 0.0)[0, 0, 0] == 0.0


# inversion


@pytest.mark.parametrize("name", ["biot", "neo-hookean-entropy"])
def test_inversion_round_trip_extremes(name):
    mat = make_material(name)
    mu = np.array([-500.0, -50.0, -1.0, 0.0, 1.0, 50.0, 300.0])
    F = np.broadcast_to(np.eye(2), (len(mu), 2, 2))
    c = invert_chemical_potential(mat, F, mu)
    assert np.all(c > 0)
    assert np.all(np.abs(mat.dphi_dc(F, c) - mu) <= 1e-10 * (1 + np.abs(mu)))


def test_unreachable_potential_raises():
    from porovisc.errors import InversionFailure

    with pytest.raises(InversionFailure):
        invert_chemical_potential(make_material("biot"), np.array([[[1.0]]]), -800.0)


@given(f=st.floats(0.3, 3.0), mu=st.floats(-20, 20))
def test_inversion_round_trip_property(f, mu):
    mat = make_material("biot")
    F = np.array([[[f]]])
    c = invert_chemical_potential(mat, F, mu)
    assert c[0] > 0
    assert abs(mat.dphi_dc(F, c)[0] - mu) <= 1e-10 * (1 + abs(mu))


@given(f=st.floats(0.3, 3.0), c1=st.floats(1e-3, 1e2), c2=st.floats(1e-3, 1e2))
def test_chemical_potential_is_monotone(f, c1, c2):
    for name in ("biot", "neo-hookean-entropy"):
        mat = make_material(name)
        F = np.array([[[f]]])
        lo, hi = sorted((c1, c2))
        assert mat.dphi_dc(F, hi)[0] >= mat.dphi_dc(F, lo)[0]


def test_inversion_uses_guess_and_matches_brentq():
    from scipy.optimize import brentq

    mat = make_material("biot")
    f, mu = 1.4, 0.75
    c_ref = brentq(lambda c: biot_mu_1d(f, c) - mu, 1e-8, 50.0, xtol=1e-15)
    c = invert_chemical_potential(mat, np.array([[[f]]]), mu, c_guess=np.array([10.0]))
    assert c[0] == pytest.approx(c_ref, rel=1e-11)

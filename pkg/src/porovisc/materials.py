"""Constitutive laws for the poro-visco-elastic model.

All laws act on batches: a deformation gradient argument ``F`` has shape
``(..., d, d)``, concentrations ``c`` have the leading shape ``(...)``, and
third-order hyperstress arguments ``G`` have shape ``(..., d, d, d)``.  Any
``d`` works; the simulator itself only uses ``d = 1``.

Two free energies ship with the package:

``biot``
    Biot poroelasticity with Boltzmann entropy (Case IIa, ``r = alpha = 0``).
``neo-hookean-entropy``
    Compressible neo-Hookean solid, Boltzmann entropy and a bounded
    swelling coupling (Case I, ``alpha = -1/2``).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDeformation, InvalidParams, InversionFailure

CASES = ("CaseI", "CaseIIa", "CaseIIb")

# bracket limits for the chemical-potential inversion
C_MIN_FLOOR = 1e-300
C_MAX_CEILING = 1e300
INVERSION_TOL = 1e-12

_WINDOW_SLACK = 1e-12


# --------------------------------------------------------------------------
# small tensor helpers


def det(F):
    return np.linalg.det(F)


def inv_transpose(F):
    return np.swapaxes(np.linalg.inv(F), -1, -2)


def cofactor(F):
    """Cof F = det(F) F^{-T}."""
    return det(F)[..., None, None] * inv_transpose(F)


def frobenius(A, ndim=2):
    axes = tuple(range(-ndim, 0))
    return np.sqrt(np.sum(np.square(A), axis=axes))


def _require_positive_det(J):
    if np.any(~(J > 0.0)):
        raise DegenerateDeformation(f"det F <= 0 encountered (min det = {np.min(J):.3e})")


# --------------------------------------------------------------------------
# exponents


@dataclass(frozen=True)
class ExponentProfile:
    """Growth exponents tying the free energy, hyperstress and mobility together.

    ``p`` comes from the hyperstress and ``m`` from the mobility; a material
    alone carries placeholders that :meth:`combine` overwrites.
    """

    q: float
    r: float
    alpha: float
    gamma1: float
    gamma2: float
    case_tag: str
    p: float = 6.0
    m: float = 1.0

    def combine(self, *, p=None, m=None):
        changes = {}
        if p is not None:
            changes["p"] = float(p)
        if m is not None:
            changes["m"] = float(m)
        return dataclasses.replace(self, **changes)

    def violations(self, d):
        """Return human-readable violations of the exponent windows for dimension ``d``."""
        out = []
        p, m, r, a = self.p, self.m, self.r, self.alpha
        g1, g2 = self.gamma1, self.gamma2
        tol = _WINDOW_SLACK
        if self.case_tag not in CASES:
            return [f"(A3)(ii) unknown case tag {self.case_tag!r}"]
        if not (p > d and p >= 3):
            out.append(f"(A1) hyperstress exponent requires p > d and p >= 3 (p = {p}, d = {d})")
        if not self.q > 0:
            out.append(f"(A3)(i) determinant exponent q must be positive (q = {self.q})")
        if not m > 0:
            out.append(f"(A2) mobility exponent requires m > 0 (m = {m})")
            return out
        if not (r > -1 and r + m >= -tol):
            out.append(f"(A3)(ii) requires r > -1 and r + m >= 0 (r = {r}, m = {m})")
        if self.case_tag == "CaseI":
            if g1 != 0 or g2 != 0:
                out.append("(A3)(ii) Case I requires gamma1 = gamma2 = 0")
            if not (1 - tol <= m <= 2 + tol):
                out.append("(A3)(ii) Case I requires 1 ≤ m ≤ 2")
        else:
            if not (g2 >= g1 > 0):
                out.append(f"(A3)(ii) {self.case_tag} requires gamma2 >= gamma1 > 0")
            m_max = 3 + r if self.case_tag == "CaseIIa" else 2.0
            if not m <= m_max + tol:
                label = "3 + r" if self.case_tag == "CaseIIa" else "2"
                out.append(f"(A3)(ii) {self.case_tag} requires 0 < m ≤ {label} (m = {m})")
        if out:
            return out
        s = derive_flux_exponent(self, d)
        bound = (p - s) / (p * s)
        if self.case_tag == "CaseI":
            if not (-tol <= m + a <= bound + tol):
                out.append(f"(A3)(iii) Case I requires 0 ≤ m + alpha ≤ (p - s)/(p s) = {bound:.6g} (m + alpha = {m + a:.6g})")
            if not m + 2 * a >= -tol:
                out.append("(A3)(iii) Case I requires m + 2 alpha ≥ 0")
        else:
            if not a >= -1 - tol:
                out.append("(A3)(iii) Case II requires alpha ≥ -1")
            upper = (2 + r) * bound
            if not (-tol <= m + a <= upper + tol):
                out.append(f"(A3)(iii) Case II requires 0 ≤ m + alpha ≤ (2 + r)(p - s)/(p s) = {upper:.6g} (m + alpha = {m + a:.6g})")
            cap = m + 1 + r if self.case_tag == "CaseIIa" else m + 2 + 2 * r
            if not (-tol <= m + 2 * a < cap):
                out.append(f"(A3)(iii) {self.case_tag} requires 0 ≤ m + 2 alpha < {cap:.6g}")
        return out


def derive_flux_exponent(profile, d):
    """Integrability exponent ``s`` of the diffusive flux for the given case."""
    m, r = profile.m, profile.r
    if profile.case_tag == "CaseI":
        return (m * d + 2) / (m * d + 1)
    first = (m * d + 2 * (r + 2)) / (m * d + r + 2)
    k = d * (m + r + 1)
    second = (k + 2 * (r + 2)) / (k + r + 2)
    return min(first, second)


# --------------------------------------------------------------------------
# free energies


@dataclass(frozen=True)
class CompressibleNeoHookean:
    """Stress-free elastic density ``a|F|^2 + b det(F)^-q + e det(F)^2 - n0``.

    ``e`` is fixed by requiring zero stress at the identity and ``n0`` by
    ``phi(I) = 0``; both are computed, never passed.
    """

    a: float = 0.5
    b: float = 1.0
    q: float = 2.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.q > 0):
            raise InvalidParams(f"neo-Hookean coefficients must be positive: a={self.a}, b={self.b}, q={self.q}")
        if self.e < 0:
            raise InvalidParams(f"stress-free calibration needs q*b >= 2a (got e = {self.e})")

    @property
    def e(self):
        return 0.5 * (self.q * self.b - 2.0 * self.a)

    def offset(self, d):
        return d * self.a + self.b + self.e

    def energy(self, F, J):
        d = F.shape[-1]
        return self.a * np.sum(F * F, axis=(-2, -1)) + self.b * J ** (-self.q) + self.e * J**2 - self.offset(d)

    def stress(self, F, J, FinvT):
        scal = -self.q * self.b * J ** (-self.q) + 2.0 * self.e * J**2
        return 2.0 * self.a * F + scal[..., None, None] * FinvT


class MaterialLaw:
    """Free energy density Phi(F, c) with the derivatives the solvers need.

    Subclasses implement the underscore hooks; the public methods check
    det F > 0 and broadcast ``F`` and ``c`` against each other.
    """

    name = "abstract"
    exponents: ExponentProfile
    c_seed: float = 1.0

    def _prep(self, F, c):
        F = np.asarray(F, dtype=float)
        c = np.asarray(c, dtype=float)
        shape = np.broadcast_shapes(F.shape[:-2], c.shape)
        F = np.broadcast_to(F, shape + F.shape[-2:])
        J = det(F)
        _require_positive_det(J)
        return F, np.broadcast_to(c, shape), J

    def phi(self, F, c):
        F, c, J = self._prep(F, c)
        return self._phi(F, c, J)

    def dphi_dF(self, F, c):
        F, c, J = self._prep(F, c)
        return self._dphi_dF(F, c, J, inv_transpose(F))

    def dphi_dc(self, F, c):
        F, c, J = self._prep(F, c)
        return self._dphi_dc(F, c, J)

    def d2phi_dcc(self, F, c):
        F, c, J = self._prep(F, c)
        return self._d2phi_dcc(F, c, J)

    def d2phi_dFc(self, F, c):
        F, c, J = self._prep(F, c)
        return self._d2phi_dFc(F, c, J, inv_transpose(F))

    def coercivity_constants(self, c, d=3):
        """(C_Phi0, C_Phi1) with Phi(F, c) >= C0 |F| + C0 det(F)^-q - C1."""
        raise NotImplementedError

    # subclasses fill these in
    def _phi(self, F, c, J):
        raise NotImplementedError

    def _dphi_dF(self, F, c, J, FinvT):
        raise NotImplementedError

    def _dphi_dc(self, F, c, J):
        raise NotImplementedError

    def _d2phi_dcc(self, F, c, J):
        raise NotImplementedError

    def _d2phi_dFc(self, F, c, J, FinvT):
        raise NotImplementedError


@dataclass(frozen=True)
class BiotParams:
    M_B: float = 1.0
    beta: float = 1.0
    k: float = 1.0
    c_eq: float = 1.0
    a: float = 0.5
    b: float = 1.0
    q: float = 2.0

    def validate(self):
        bad = [n for n, v in dataclasses.asdict(self).items() if not (np.isfinite(v) and v > 0)]
        if bad:
            raise InvalidParams(f"Biot parameters must be strictly positive: {', '.join(bad)}")


class BiotMaterial(MaterialLaw):
    r"""Phi = Phi_el(F) + M_B/2 (c - c_eq - beta (det F - 1))^2 + k c (log(c/c_eq) - 1)."""

    name = "biot"

    def __init__(self, params: BiotParams):
        params.validate()
        self.params = params
        self.elastic = CompressibleNeoHookean(params.a, params.b, params.q)
        self.c_seed = params.c_eq
        self.exponents = ExponentProfile(
            q=params.q, r=0.0, alpha=0.0, gamma1=params.M_B, gamma2=params.M_B, case_tag="CaseIIa"
        )

    def __repr__(self):
        return f"BiotMaterial({self.params})"

    def _pressure(self, c, J):
        P = self.params
        return P.M_B * (c - P.c_eq - P.beta * (J - 1.0))

    def _phi(self, F, c, J):
        P = self.params
        gap = c - P.c_eq - P.beta * (J - 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = np.where(c > 0, P.k * c * (np.log(c / P.c_eq) - 1.0), 0.0)
        return self.elastic.energy(F, J) + 0.5 * P.M_B * gap**2 + ent

    def _dphi_dF(self, F, c, J, FinvT):
        P = self.params
        coupling = -(P.beta * self._pressure(c, J) * J)[..., None, None] * FinvT
        return self.elastic.stress(F, J, FinvT) + coupling

    def _dphi_dc(self, F, c, J):
        P = self.params
        return self._pressure(c, J) + P.k * np.log(c / P.c_eq)

    def _d2phi_dcc(self, F, c, J):
        P = self.params
        return P.M_B + P.k / c

    def _d2phi_dFc(self, F, c, J, FinvT):
        P = self.params
        return -(P.M_B * P.beta * J)[..., None, None] * FinvT

    def coercivity_constants(self, c=None, d=3):
        P = self.params
        el = self.elastic
        # a|F|^2 >= 2a|F| - a; the Biot square and e J^2 are nonnegative
        return min(2.0 * el.a, el.b), el.a + el.offset(d) + P.k * P.c_eq


@dataclass(frozen=True)
class NeoHookeanEntropyParams:
    k: float = 1.0
    c_ref: float = 1.0
    swelling: float = 0.5
    a: float = 0.5
    b: float = 1.0
    q: float = 2.0

    def validate(self):
        for n in ("k", "c_ref", "a", "b", "q"):
            v = getattr(self, n)
            if not (np.isfinite(v) and v > 0):
                raise InvalidParams(f"{n} must be strictly positive (got {v})")
        # c |g''(c)| <= 0.1925 keeps c * d2phi/dcc >= k - 0.1925 * swelling > 0
        if not (0 <= self.swelling < 5.0 * self.k):
            raise InvalidParams("swelling coupling must satisfy 0 <= swelling < 5 k")


class NeoHookeanEntropyMaterial(MaterialLaw):
    r"""Phi = Phi_el(F) + k c (log(c/c_ref) - 1) + s g(c) tanh(det F - 1).

    ``g(c) = 2 (sqrt(1 + c) - 1)`` grows like ``c^{1/2}``, so the mixed
    derivative decays like ``c^{-1/2}`` and ``d2phi/dcc`` stays within
    ``[C1/c, C3/c]``.
    """

    name = "neo-hookean-entropy"

    def __init__(self, params: NeoHookeanEntropyParams = NeoHookeanEntropyParams()):
        params.validate()
        self.params = params
        self.elastic = CompressibleNeoHookean(params.a, params.b, params.q)
        self.c_seed = params.c_ref
        self.exponents = ExponentProfile(q=params.q, r=0.0, alpha=-0.5, gamma1=0.0, gamma2=0.0, case_tag="CaseI")

    def __repr__(self):
        return f"NeoHookeanEntropyMaterial({self.params})"

    @staticmethod
    def _g(c):
        return 2.0 * (np.sqrt(1.0 + c) - 1.0)

    @staticmethod
    def _dg(c):
        return 1.0 / np.sqrt(1.0 + c)

    @staticmethod
    def _d2g(c):
        return -0.5 * (1.0 + c) ** -1.5

    def _phi(self, F, c, J):
        P = self.params
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = np.where(c > 0, P.k * c * (np.log(c / P.c_ref) - 1.0), 0.0)
        return self.elastic.energy(F, J) + ent + P.swelling * self._g(c) * np.tanh(J - 1.0)

    def _dphi_dF(self, F, c, J, FinvT):
        P = self.params
        sech2 = 1.0 / np.cosh(J - 1.0) ** 2
        coupling = (P.swelling * self._g(c) * sech2 * J)[..., None, None] * FinvT
        return self.elastic.stress(F, J, FinvT) + coupling

    def _dphi_dc(self, F, c, J):
        P = self.params
        return P.k * np.log(c / P.c_ref) + P.swelling * self._dg(c) * np.tanh(J - 1.0)

    def _d2phi_dcc(self, F, c, J):
        P = self.params
        return P.k / c + P.swelling * self._d2g(c) * np.tanh(J - 1.0)

    def _d2phi_dFc(self, F, c, J, FinvT):
        P = self.params
        sech2 = 1.0 / np.cosh(J - 1.0) ** 2
        return (P.swelling * self._dg(c) * sech2 * J)[..., None, None] * FinvT

    def coercivity_constants(self, c=1.0, d=3):
        P = self.params
        el = self.elastic
        return min(2.0 * el.a, el.b), el.a + el.offset(d) + P.k * P.c_ref + P.swelling * float(self._g(np.asarray(c)))


def biot_material(params: BiotParams = BiotParams()) -> BiotMaterial:
    return BiotMaterial(params)


# --------------------------------------------------------------------------
# hyperstress, viscosity, mobility


class HyperstressLaw:
    """Convex potential of the second deformation gradient."""

    p: float

    def h_pot(self, G):
        raise NotImplementedError

    def h_stress(self, G):
        raise NotImplementedError


@dataclass(frozen=True)
class PowerHyperstress(HyperstressLaw):
    """H(G) = (c_H / p) |G|^p."""

    c_H: float = 1e-3
    p: float = 6.0

    def __post_init__(self):
        if not (self.c_H > 0 and self.p > 1):
            raise InvalidParams(f"hyperstress needs c_H > 0 and p > 1 (c_H={self.c_H}, p={self.p})")

    def h_pot(self, G):
        G = np.asarray(G, dtype=float)
        return self.c_H / self.p * frobenius(G, 3) ** self.p

    def h_stress(self, G):
        G = np.asarray(G, dtype=float)
        n = frobenius(G, 3)
        return (self.c_H * n ** (self.p - 2.0))[..., None, None, None] * G


def right_cauchy_green_rate(F, Fdot):
    """Cdot = F^T Fdot + Fdot^T F."""
    A = np.swapaxes(F, -1, -2) @ Fdot
    return A + np.swapaxes(A, -1, -2)


class ViscousLaw:
    """Dissipation potential zeta(F, Fdot, c), quadratic in Fdot."""

    def zeta(self, F, Fdot, c):
        raise NotImplementedError

    def dzeta_dFdot(self, F, Fdot, c):
        raise NotImplementedError


@dataclass(frozen=True)
class IsotropicViscosity(ViscousLaw):
    """zeta = 1/2 Cdot : D Cdot with D = nu * identity on symmetric matrices."""

    nu: float = 0.1

    def __post_init__(self):
        if not self.nu > 0:
            raise InvalidParams(f"viscosity nu must be positive (got {self.nu})")

    def zeta(self, F, Fdot, c=None):
        Cdot = right_cauchy_green_rate(np.asarray(F, float), np.asarray(Fdot, float))
        return 0.5 * self.nu * np.sum(Cdot * Cdot, axis=(-2, -1))

    def dzeta_dFdot(self, F, Fdot, c=None):
        F = np.asarray(F, float)
        Cdot = right_cauchy_green_rate(F, np.asarray(Fdot, float))
        return 2.0 * self.nu * (F @ Cdot)


def pull_back_mobility(M_eul, F, c):
    """Lagrangian mobility (Cof F)^T M(F, c/det F) Cof F / det F.

    ``M_eul(F, c_spatial)`` returns the Eulerian mobility tensor.
    """
    F = np.asarray(F, dtype=float)
    J = det(F)
    _require_positive_det(J)
    c = np.broadcast_to(np.asarray(c, dtype=float), J.shape)
    cof = cofactor(F)
    M = np.asarray(M_eul(F, c / J), dtype=float)
    return np.swapaxes(cof, -1, -2) @ M @ cof / J[..., None, None]


class MobilityLaw:
    """Eulerian mobility with its Lagrangian pullback."""

    m: float

    def eulerian(self, F, c_spatial):
        raise NotImplementedError

    def lagrangian(self, F, c):
        return pull_back_mobility(self.eulerian, F, c)

    def dlagrangian_dc(self, F, c):
        """Derivative of the Lagrangian mobility in c; central differences by default."""
        c = np.asarray(c, dtype=float)
        h = 1e-6 * np.maximum(c, 1e-12)
        up = self.lagrangian(F, c + h)
        lo = self.lagrangian(F, np.maximum(c - h, 0.0))
        return (up - lo) / (c + h - np.maximum(c - h, 0.0))[..., None, None]


@dataclass(frozen=True)
class PowerMobility(MobilityLaw):
    """M(F, c_spatial) = c_spatial^m * M0 with scalar ``M0 > 0`` times identity."""

    m: float = 1.0
    M0: float = 1.0

    def __post_init__(self):
        if not (self.m > 0 and self.M0 > 0):
            raise InvalidParams(f"mobility needs m > 0 and M0 > 0 (m={self.m}, M0={self.M0})")

    def eulerian(self, F, c_spatial):
        F = np.asarray(F, dtype=float)
        d = F.shape[-1]
        cs = np.asarray(c_spatial, dtype=float)
        return (self.M0 * np.power(cs, self.m))[..., None, None] * np.eye(d)

    def dlagrangian_dc(self, F, c):
        c = np.asarray(c, dtype=float)
        M = self.lagrangian(F, c)
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(c > 0, self.m / c, 0.0)
        return fac[..., None, None] * M


# --------------------------------------------------------------------------
# chemical potential inversion


def invert_chemical_potential(material, F, mu, *, c_guess=None, tol=INVERSION_TOL, max_iter=200):
    """Solve dphi/dc(F, c) = mu for c > 0, cellwise.

    Works in ``u = log c``: the map u -> dphi/dc is strictly increasing, so a
    bracket found by geometric expansion around the seed plus safeguarded
    Newton steps always converges.  The residual target is
    ``tol * max(1, |mu|)``.
    """
    F = np.asarray(F, dtype=float)
    mu = np.asarray(mu, dtype=float)
    J = det(F)
    _require_positive_det(J)
    shape = np.broadcast_shapes(J.shape, mu.shape)
    d = F.shape[-1]
    Fb = np.broadcast_to(F, shape + (d, d)).reshape(-1, d, d)
    mub = np.broadcast_to(mu, shape).reshape(-1).copy()
    n = mub.size

    def g(u, idx):
        return material.dphi_dc(Fb[idx], np.exp(u)) - mub[idx]

    u_min, u_max = math.log(C_MIN_FLOOR), math.log(C_MAX_CEILING)
    if c_guess is None:
        u = np.full(n, math.log(material.c_seed))
    else:
        u = np.log(np.clip(np.broadcast_to(np.asarray(c_guess, float), shape).reshape(-1), C_MIN_FLOOR, C_MAX_CEILING))
    all_idx = np.arange(n)
    f = g(u, all_idx)
    lo = np.where(f <= 0, u, u_min)
    hi = np.where(f >= 0, u, u_max)
    f_lo = np.where(f <= 0, f, np.nan)
    f_hi = np.where(f >= 0, f, np.nan)

    # geometric expansion of the bracket
    step = 1.0
    while True:
        need_hi = np.isnan(f_hi)
        need_lo = np.isnan(f_lo)
        if not (need_hi.any() or need_lo.any()):
            break
        if step > 2 * (u_max - u_min):
            break
        for need, side in ((need_hi, 1.0), (need_lo, -1.0)):
            idx = all_idx[need]
            if idx.size == 0:
                continue
            trial = np.clip(u[idx] + side * step, u_min, u_max)
            ft = g(trial, idx)
            if side > 0:
                ok = ft >= 0
                hi[idx[ok]] = trial[ok]
                f_hi[idx[ok]] = ft[ok]
                lo[idx[~ok]] = np.maximum(lo[idx[~ok]], trial[~ok])
                f_lo[idx[~ok]] = ft[~ok]
            else:
                ok = ft <= 0
                lo[idx[ok]] = trial[ok]
                f_lo[idx[ok]] = ft[ok]
                hi[idx[~ok]] = np.minimum(hi[idx[~ok]], trial[~ok])
                f_hi[idx[~ok]] = ft[~ok]
        step *= 2.0
    if np.isnan(f_hi).any() or np.isnan(f_lo).any():
        bad = int(np.flatnonzero(np.isnan(f_hi) | np.isnan(f_lo))[0])
        raise InversionFailure(
            f"no sign change of dphi/dc - mu within [{C_MIN_FLOOR:g}, {C_MAX_CEILING:g}] (mu = {mub[bad]:.6g})"
        )

    u = np.clip(u, lo, hi)
    target = tol * np.maximum(1.0, np.abs(mub))
    active = all_idx.copy()
    for _ in range(max_iter):
        if active.size == 0:
            break
        ua = u[active]
        c = np.exp(ua)
        fa = material.dphi_dc(Fb[active], c) - mub[active]
        done = np.abs(fa) <= target[active]
        pos = fa > 0
        hi[active[pos]] = ua[pos]
        lo[active[~pos]] = ua[~pos]
        slope = material.d2phi_dcc(Fb[active], c) * c
        with np.errstate(divide="ignore", invalid="ignore"):
            un = ua - fa / slope
        l, h = lo[active], hi[active]
        bad = ~np.isfinite(un) | (un <= l) | (un >= h)
        un = np.where(bad, 0.5 * (l + h), un)
        collapsed = (h - l) <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(ua))
        u[active] = np.where(done, ua, un)
        active = active[~(done | collapsed)]
    if active.size:
        raise InversionFailure(f"chemical-potential inversion did not converge in {max_iter} iterations")
    return np.exp(u).reshape(shape)


# --------------------------------------------------------------------------
# registry


MATERIALS = {
    "biot": (BiotMaterial, BiotParams),
    "neo-hookean-entropy": (NeoHookeanEntropyMaterial, NeoHookeanEntropyParams),
}


def make_material(name, params=None):
    try:
        cls, pcls = MATERIALS[name]
    except KeyError:
        raise InvalidParams(f"unknown material law {name!r}; known: {sorted(MATERIALS)}") from None
    try:
        p = pcls(**(params or {}))
    except TypeError as exc:
        raise InvalidParams(str(exc)) from None
    return cls(p)


@dataclass(frozen=True)
class LawBundle:
    """The four constitutive ingredients of one run."""

    material: MaterialLaw
    hyper: HyperstressLaw = field(default_factory=PowerHyperstress)
    visc: ViscousLaw = field(default_factory=IsotropicViscosity)
    mobility: MobilityLaw = field(default_factory=PowerMobility)

    @property
    def profile(self):
        return self.material.exponents.combine(p=self.hyper.p, m=self.mobility.m)

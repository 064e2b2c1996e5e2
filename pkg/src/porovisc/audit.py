"""Sample-based audit of the structural assumptions on the constitutive laws.

The assumptions quantify over continua, so every check here evaluates the laws
on random samples and reports empirical constants.  A passing audit is
evidence, not a proof.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .materials import det, frobenius, right_cauchy_green_rate

FD_REL_TOL = 1e-6
FRAME_TOL = 1e-12


# --------------------------------------------------------------------------
# samplers


def random_rotations(n, d, rng):
    """``n`` Haar-distributed rotation matrices in SO(d)."""
    A = rng.standard_normal((n, d, d))
    Q, Rm = np.linalg.qr(A)
    Q = Q * np.sign(np.diagonal(Rm, axis1=-2, axis2=-1))[:, None, :]
    flip = np.linalg.det(Q) < 0
    Q[flip, :, 0] *= -1.0
    return Q


def in_FR(F, R):
    """Membership in F_R = {|F| <= R, |F^-1| <= R, det F >= 1/R}."""
    J = det(F)
    ok = J >= 1.0 / R
    ok &= frobenius(F) <= R
    Finv = np.linalg.inv(np.where(ok[..., None, None], F, np.eye(F.shape[-1])))
    ok &= frobenius(Finv) <= R
    return ok


def sample_FR(n, d, R, rng):
    """Random deformation gradients ``U diag(lam) V^T`` restricted to F_R."""
    out = []
    lim = np.log(np.sqrt(R))
    while sum(len(o) for o in out) < n:
        m = 2 * n
        U = random_rotations(m, d, rng)
        V = random_rotations(m, d, rng)
        lam = np.exp(rng.uniform(-lim, lim, size=(m, d)))
        F = U @ (lam[:, :, None] * np.swapaxes(V, -1, -2))
        out.append(F[in_FR(F, R)])
    return np.concatenate(out)[:n]


def sample_concentrations(n, c_lo, c_hi, rng):
    return np.exp(rng.uniform(np.log(c_lo), np.log(c_hi), size=n))


# --------------------------------------------------------------------------
# report types


@dataclass
class AssumptionCheck:
    clause: str
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    worst_case: dict = field(default_factory=dict)
    detail: str = ""


@dataclass
class AssumptionReport:
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def get(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self, **kw):
        return json.dumps({"passed": self.passed, "checks": [asdict(c) for c in self.checks]}, default=_jsonable, **kw)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(type(x))


@dataclass(frozen=True)
class SamplingPlan:
    d: int = 2
    R: float = 4.0
    c_lo: float = 1e-3
    c_hi: float = 1e2
    n_samples: int = 200
    n_rotations: int = 50
    seed: int = 0


# --------------------------------------------------------------------------
# helpers


def _rel_err(a, b, floor=1.0):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    axes = tuple(range(1, a.ndim))
    diff = np.sqrt(np.sum((a - b) ** 2, axis=axes)) if axes else np.abs(a - b)
    scale = np.sqrt(np.sum(a**2, axis=axes)) if axes else np.abs(a)
    return diff / np.maximum(scale, floor)


def _worst(values, **arrays):
    i = int(np.nanargmax(values))
    out = {"value": float(values[i])}
    for k, v in arrays.items():
        out[k] = np.asarray(v)[i].tolist()
    return out


def _fd_matrix(fun, X, h):
    """Central differences of scalar-valued ``fun`` w.r.t. trailing matrix/tensor entries."""
    tail = X.shape[1:]
    out = np.zeros_like(X)
    for idx in np.ndindex(*tail):
        E = np.zeros(tail)
        E[idx] = 1.0
        step = h[(...,) + (None,) * len(tail)] * E
        out[(slice(None),) + idx] = (fun(X + step) - fun(X - step)) / (2.0 * h)
    return out


def derivative_consistency(material, F, c):
    """Relative errors of the analytic derivatives against central differences."""
    hF = 1e-6 * (1.0 + frobenius(F))
    hc = 1e-5 * c
    out = {}
    out["dphi_dF"] = _rel_err(material.dphi_dF(F, c), _fd_matrix(lambda X: material.phi(X, c), F, hF))
    fd_c = (material.phi(F, c + hc) - material.phi(F, c - hc)) / (2 * hc)
    out["dphi_dc"] = _rel_err(material.dphi_dc(F, c), fd_c)
    fd_cc = (material.dphi_dc(F, c + hc) - material.dphi_dc(F, c - hc)) / (2 * hc)
    out["d2phi_dcc"] = _rel_err(material.d2phi_dcc(F, c), fd_cc)
    fd_Fc = (material.dphi_dF(F, c + hc) - material.dphi_dF(F, c - hc)) / (2 * hc)[:, None, None]
    out["d2phi_dFc"] = _rel_err(material.d2phi_dFc(F, c), fd_Fc)
    return out


# --------------------------------------------------------------------------
# individual clauses


def _check_hyperstress(hyper, plan, rng):
    d = plan.d
    n = plan.n_samples
    checks = []
    G1 = rng.standard_normal((n, d, d, d)) * np.exp(rng.uniform(-2, 1, size=n))[:, None, None, None]
    G2 = rng.standard_normal((n, d, d, d))
    t = rng.uniform(0, 1, size=n)
    mid = t[:, None, None, None] * G1 + (1 - t[:, None, None, None]) * G2
    gap = hyper.h_pot(mid) - (t * hyper.h_pot(G1) + (1 - t) * hyper.h_pot(G2))
    scale = 1.0 + np.abs(hyper.h_pot(G1)) + np.abs(hyper.h_pot(G2))
    viol = gap / scale
    checks.append(AssumptionCheck("A1", "hyperstress_convexity", bool(np.all(viol <= 1e-12)),
                                  {"max_convexity_gap": float(np.max(viol))}, _worst(viol, t=t)))
    Q = random_rotations(min(n, plan.n_rotations), d, rng)
    Gs = G1[: len(Q)]
    rotG = np.einsum("nil,nljk->nijk", Q, Gs)
    hv = hyper.h_pot(Gs)
    err = np.abs(hyper.h_pot(rotG) - hv) / (1.0 + np.abs(hv))
    checks.append(AssumptionCheck("A1", "hyperstress_frame_indifference", bool(np.all(err <= FRAME_TOL)),
                                  {"max_rel_err": float(np.max(err))}, _worst(err)))
    nG = frobenius(G1, 3)
    hp = hyper.h_pot(G1)
    hs = frobenius(hyper.h_stress(G1), 3)
    p = hyper.p
    C1 = float(np.min(hp / nG**p))
    C2 = float(np.max(hp / (1 + nG**p)))
    C3 = float(np.max(hs / nG ** (p - 1)))
    ok = C1 > 0 and np.isfinite(C2) and np.isfinite(C3)
    checks.append(AssumptionCheck("A1", "hyperstress_growth", bool(ok), {"C_H1": C1, "C_H2": C2, "C_H3": C3}))
    h = 1e-6 * (1.0 + nG)
    fd = _fd_matrix(hyper.h_pot, G1, h)
    err = _rel_err(hyper.h_stress(G1), fd, floor=1e-8)
    checks.append(AssumptionCheck("A1", "hyperstress_derivative", bool(np.all(err <= FD_REL_TOL)),
                                  {"max_rel_err": float(np.max(err))}, _worst(err)))
    return checks


def _check_mobility(mob, plan, F, c, rng):
    checks = []
    d = plan.d
    M = np.asarray(mob.lagrangian(F, c))
    finite = np.all(np.isfinite(M))
    checks.append(AssumptionCheck("A2", "mobility_continuity", bool(finite), {"all_finite": bool(finite)}))
    asym = frobenius(M - np.swapaxes(M, -1, -2)) / np.maximum(frobenius(M), 1e-300)
    checks.append(AssumptionCheck("A2", "mobility_symmetry", bool(np.all(asym <= 1e-12)),
                                  {"max_rel_asymmetry": float(np.max(asym))}, _worst(asym, F=F, c=c)))
    xi = rng.standard_normal((len(F), d))
    quad = np.einsum("ni,nij,nj->n", xi, 0.5 * (M + np.swapaxes(M, -1, -2)), xi)
    cm = c**mob.m
    lower = quad / (cm * np.sum(xi**2, axis=1))
    upper = frobenius(M) / cm
    C0 = float(np.min(lower))
    C1 = float(np.max(upper))
    checks.append(AssumptionCheck("A2", "mobility_degeneracy_bounds", bool(C0 > 0 and np.isfinite(C1)),
                                  {"C_0M": C0, "C_1M": C1}, _worst(-lower, F=F, c=c)))
    eye = np.broadcast_to(np.eye(d), (len(c), d, d))
    err = frobenius(mob.lagrangian(eye, c) - mob.eulerian(eye, c)) / np.maximum(frobenius(mob.eulerian(eye, c)), 1e-300)
    checks.append(AssumptionCheck("A2", "mobility_pullback_identity", bool(np.all(err <= 1e-14)),
                                  {"max_rel_err": float(np.max(err))}))
    return checks


def _check_free_energy(material, plan, F, c, rng):
    checks = []
    d = plan.d
    prof = material.exponents
    Q = random_rotations(min(plan.n_rotations, len(F)), d, rng)
    Fs, cs = F[: len(Q)], c[: len(Q)]
    ph = material.phi(Fs, cs)
    err = np.abs(material.phi(Q @ Fs, cs) - ph) / (1.0 + np.abs(ph))
    checks.append(AssumptionCheck("A3", "free_energy_frame_indifference", bool(np.all(err <= FRAME_TOL)),
                                  {"max_rel_err": float(np.max(err))}, _worst(err)))

    # (i) coercivity, including a probe along det F -> 0
    t = np.geomspace(1.0, 1e-3, 12)
    probe = np.zeros((len(t), d, d))
    probe[:, 0, 0] = t
    for i in range(1, d):
        probe[:, i, i] = 1.0
    Fc = np.concatenate([F, probe])
    cc = np.concatenate([c, np.full(len(t), material.c_seed)])
    ph = material.phi(Fc, cc)
    growth = frobenius(Fc) + det(Fc) ** (-prof.q)
    C1 = max(0.0, -float(np.min(ph))) + 1.0
    C0 = float(np.min((ph + C1) / growth))
    C0_an, C1_an = material.coercivity_constants(material.c_seed, d)
    mask = np.isclose(cc, material.c_seed)
    analytic_ok = bool(np.all(ph[mask] >= C0_an * growth[mask] - C1_an - 1e-12 * (1 + np.abs(ph[mask]))))
    blowup = ph[len(F):] * det(probe) ** prof.q
    ok = C0 > 0 and analytic_ok and blowup[-1] > 0
    checks.append(AssumptionCheck("A3(i)", "free_energy_coercivity", bool(ok),
                                  {"C_Phi0": C0, "C_Phi1": C1, "analytic_constants": [C0_an, C1_an],
                                   "analytic_bound_holds": analytic_ok, "det_blowup_ratio": float(blowup[-1])}))

    # (ii) convexity window
    dcc = material.d2phi_dcc(F, c)
    if prof.case_tag == "CaseI":
        ratio = dcc * c
    else:
        ratio = dcc / (1.0 / c + c**prof.r)
    lo, hi = float(np.min(ratio)), float(np.max(ratio))
    checks.append(AssumptionCheck("A3(ii)", "free_energy_convexity_window", bool(lo > 0 and np.isfinite(hi)),
                                  {"lower_constant": lo, "upper_constant": hi}, _worst(-ratio, F=F, c=c)))

    # (iii) mixed derivative
    mixed = frobenius(material.d2phi_dFc(F, c)) / c**prof.alpha
    C5 = float(np.max(mixed))
    checks.append(AssumptionCheck("A3(iii)", "free_energy_mixed_derivative", bool(np.isfinite(C5)), {"C_Phi5": C5}))

    errs = derivative_consistency(material, F, c)
    worst = {k: float(np.max(v)) for k, v in errs.items()}
    checks.append(AssumptionCheck("A3", "free_energy_derivatives", bool(max(worst.values()) <= FD_REL_TOL), worst))

    vals = material.phi(F, material.c_seed), material.dphi_dc(F, material.c_seed)
    ok = all(np.all(np.isfinite(v)) for v in vals)
    checks.append(AssumptionCheck("A4", "finite_reference_energy", bool(ok), {"c_R": material.c_seed}))
    return checks


def _check_viscosity(visc, plan, F, c, rng):
    checks = []
    d = plan.d
    n = len(F)
    Fd = rng.standard_normal((n, d, d))
    Cd = right_cauchy_green_rate(F, Fd)
    z = visc.zeta(F, Fd, c)
    ratio = z / np.sum(Cd**2, axis=(-2, -1))
    lo, hi = float(np.min(ratio)), float(np.max(ratio))
    checks.append(AssumptionCheck("A5", "viscous_bounds", bool(lo > 0 and np.isfinite(hi) and np.all(z >= 0)),
                                  {"C_zeta1": lo, "C_zeta2": hi}))
    Q = random_rotations(min(plan.n_rotations, len(F)), d, rng)
    k = len(Q)
    W = rng.standard_normal((k, d, d))
    W = W - np.swapaxes(W, -1, -2)
    Qdot = Q @ W
    Fk, Fdk, ck = F[:k], Fd[:k], c[:k]
    z0 = visc.zeta(Fk, Fdk, ck)
    z1 = visc.zeta(Q @ Fk, Qdot @ Fk + Q @ Fdk, ck)
    err = np.abs(z1 - z0) / (1.0 + np.abs(z0))
    checks.append(AssumptionCheck("A5", "viscous_dynamic_frame_indifference", bool(np.all(err <= FRAME_TOL)),
                                  {"max_rel_err": float(np.max(err))}, _worst(err)))
    Fd2 = rng.standard_normal((n, d, d))
    a, b = rng.standard_normal(2)
    lhs = visc.dzeta_dFdot(F, a * Fd + b * Fd2, c)
    rhs = a * visc.dzeta_dFdot(F, Fd, c) + b * visc.dzeta_dFdot(F, Fd2, c)
    err = _rel_err(lhs, rhs)
    checks.append(AssumptionCheck("A5", "viscous_stress_linearity", bool(np.all(err <= 1e-12)),
                                  {"max_rel_err": float(np.max(err))}))
    h = 1e-6 * (1.0 + frobenius(Fd))
    fd = _fd_matrix(lambda X: visc.zeta(F, X, c), Fd, h)
    err = _rel_err(visc.dzeta_dFdot(F, Fd, c), fd)
    checks.append(AssumptionCheck("A5", "viscous_stress_derivative", bool(np.all(err <= FD_REL_TOL)),
                                  {"max_rel_err": float(np.max(err))}))
    return checks


def _check_kappa(kappa):
    k = np.asarray(kappa, dtype=float)
    nonneg = bool(np.all(k >= 0))
    total = float(np.sum(k))
    return [AssumptionCheck("A7", "permeability", nonneg, {"integral_kappa": total, "exchange_enabled": total > 0},
                            detail="" if nonneg else "kappa must be nonnegative")]


def _check_initial(material, initial):
    F0, c0 = initial
    J = det(np.asarray(F0, float))
    c0 = np.asarray(c0, float)
    rho0 = float(np.min(J))
    ok = rho0 > 0 and bool(np.all(c0 >= 0))
    energy = float(np.sum(material.phi(F0, c0))) if ok else float("nan")
    ok = ok and np.isfinite(energy)
    return [AssumptionCheck("A8", "initial_data", bool(ok), {"rho0": rho0, "min_c0": float(np.min(c0)),
                                                             "initial_energy_sum": energy})]


def validate_assumptions(material, hyper, visc, mob, samples: SamplingPlan = SamplingPlan(), *, kappa=None,
                         initial=None) -> AssumptionReport:
    """Audit (A1)-(A5), and (A7)/(A8) when ``kappa`` / ``initial = (F0, c0)`` are given.

    Failures are reported, never raised.
    """
    rng = np.random.default_rng(samples.seed)
    F = sample_FR(samples.n_samples, samples.d, samples.R, rng)
    c = sample_concentrations(samples.n_samples, samples.c_lo, samples.c_hi, rng)
    checks = []
    checks += _check_hyperstress(hyper, samples, rng)
    checks += _check_mobility(mob, samples, F, c, rng)
    checks += _check_free_energy(material, samples, F, c, rng)
    checks += _check_viscosity(visc, samples, F, c, rng)
    if kappa is not None:
        checks += _check_kappa(kappa)
    if initial is not None:
        checks += _check_initial(material, initial)
    return AssumptionReport(checks)


# --------------------------------------------------------------------------
# discrete incremental gradient


def random_admissible_state(grid, rng, amplitude=0.05):
    """Smooth perturbation of the identity with det grad chi >= 1 - 2 pi amplitude modes."""
    x = grid.nodes
    chi = x.copy()
    for j in range(1, 4):
        chi += amplitude / j * rng.uniform(-1, 1) * np.sin(j * np.pi * x)
    chi[grid.dirichlet_nodes] = x[grid.dirichlet_nodes]
    return chi


def incremental_gradient_audit(grid, laws, n_states=20, seed=0, step=1e-7):
    """Relative errors of the incremental gradient against central differences.

    The hyperstress scales like h^-2 per derivative, so the third derivative of
    the functional is large and the difference step must be small.

    Each state draws chi_prev, chi, c_prev, load and tau at random; the error
    of one state is ||g - g_fd||_inf / ||g||_inf over the free nodes.
    """
    from .fields import Load
    from .mechanics import IncrementalProblem

    rng = np.random.default_rng(seed)
    errors = []
    for _ in range(n_states):
        chi_prev = random_admissible_state(grid, rng)
        chi = random_admissible_state(grid, rng)
        c_prev = rng.uniform(0.2, 3.0, grid.n_cells)
        load = Load(f=rng.uniform(-1, 1), g=rng.uniform(-1, 1))
        tau = float(np.exp(rng.uniform(np.log(1e-3), np.log(1e-1))))
        prob = IncrementalProblem(grid, laws, chi_prev, c_prev, load, tau)
        g = prob.gradient(chi)
        fd = np.zeros_like(g)
        for i in grid.free_nodes:
            e = np.zeros_like(chi)
            e[i] = step
            fd[i] = (prob.value(chi + e) - prob.value(chi - e)) / (2 * step)
        free = grid.free_nodes
        errors.append(float(np.max(np.abs(g[free] - fd[free])) / max(np.max(np.abs(g[free])), 1e-12)))
    return np.array(errors)

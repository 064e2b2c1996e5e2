"""Diffusion half-step: regularized implicit Euler for the chemical potential.

With the deformation frozen at ``chi_k`` the cell unknowns ``mu`` satisfy, for
every cell indicator test function,

    h (c(mu) - c_prev) / tau + A(c(mu)) mu - b_ext = 0,

where ``c(mu)`` inverts the chemical potential cellwise and ``A(c)`` collects
the mobility flux form, ``eta`` times the order-``theta`` regularization and
the Robin boundary mass.  Two iterations are available:

``picard``
    the fixed-point map ``mu_tilde -> mu`` that freezes ``c(mu_tilde)`` and
    solves the symmetric positive-definite linear problem for ``mu``, damped.
``newton``
    Newton's method on the same equation (fixed points coincide), damped with
    residual backtracking.  This is the default: the plain map contracts only
    for ``tau`` large compared with the inverse Robin exchange.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, spsolve

from .errors import FixedPointDiverged, InversionFailure, MaxIterationsExceeded
from .fields import boundary_trace, deformation_gradient, flux_matrix, fsum, regularization_matrix, robin_matrix
from .materials import invert_chemical_potential

logger = logging.getLogger(__name__)

EPS_C = 1e-12
RESIDUAL_FLOOR = 1e-10
SCHEMES = ("newton", "picard")


@dataclass(frozen=True)
class DiffSolveConfig:
    eta: float = 1e-4
    theta: int = 1
    damping: float = 1.0
    tol: float = 1e-12
    max_iter: int = 200
    linear_tol: float = 1e-12
    scheme: str = "newton"
    max_halvings: int = 4
    direct_max_cells: int = 4096

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if int(self.theta) != self.theta or self.theta < 1:
            raise ValueError("theta must be a positive integer")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")


@dataclass
class DiffusionSystem:
    """Linear system A mu = rhs for frozen concentration ``c_tilde``."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    face_mobility: np.ndarray


@dataclass
class DiffStepResult:
    mu: np.ndarray
    c: np.ndarray
    iterations: int
    fp_residual: float
    eq_residual: float
    residual: np.ndarray
    flux_dissipation: float
    reg_dissipation: float
    robin_square: float
    robin_source: float
    mass_change: float
    mu_ext: np.ndarray
    subdiff_residual: float
    damping: float
    converged: bool = True
    extra: dict = field(default_factory=dict)


def cell_mobility(grid, mobility, chi, c):
    F = deformation_gradient(grid, chi)
    return mobility.lagrangian(F, c)[:, 0, 0]


def assemble_diffusion_system(grid, laws, chi, c_tilde, c_prev, tau, eta, theta, mu_ext):
    """Bilinear form a_{c_tilde} and right-hand side xi_{c_tilde} as a sparse system."""
    mob_cells = cell_mobility(grid, laws.mobility, chi, c_tilde)
    face = grid.face_average(mob_cells)
    A = flux_matrix(grid, face) + eta * regularization_matrix(grid, theta) + robin_matrix(grid)
    rhs = -grid.h * (np.asarray(c_tilde, float) - np.asarray(c_prev, float)) / tau
    mu_ext = np.asarray(mu_ext, float)
    rhs = rhs.copy()
    rhs[0] += grid.kappa_left * mu_ext[0]
    rhs[-1] += grid.kappa_right * mu_ext[1]
    return DiffusionSystem(A.tocsr(), rhs, face)


class _Step:
    """Shared state of one diffusion solve."""

    def __init__(self, grid, laws, chi, c_prev, tau, cfg, mu_ext):
        self.grid, self.laws, self.chi = grid, laws, np.asarray(chi, float)
        self.c_prev = np.asarray(c_prev, float)
        self.tau, self.cfg = float(tau), cfg
        self.mu_ext = np.asarray(mu_ext, float)
        self.F = deformation_gradient(grid, self.chi)
        self.K_reg = cfg.eta * regularization_matrix(grid, cfg.theta)
        self.K_rob = robin_matrix(grid)
        self.b_ext = np.zeros(grid.n_cells)
        self.b_ext[0] += grid.kappa_left * self.mu_ext[0]
        self.b_ext[-1] += grid.kappa_right * self.mu_ext[1]
        self._c_guess = np.maximum(self.c_prev, EPS_C)

    def conc(self, mu):
        c = invert_chemical_potential(self.laws.material, self.F, mu, c_guess=self._c_guess)
        self._c_guess = c
        return c

    def operator(self, c):
        mob = self.laws.mobility.lagrangian(self.F, c)[:, 0, 0]
        face = self.grid.face_average(mob)
        return flux_matrix(self.grid, face) + self.K_reg + self.K_rob, face

    def residual(self, mu, c):
        A, _ = self.operator(c)
        return self.grid.h * (c - self.c_prev) / self.tau + A @ mu - self.b_ext

    def jacobian(self, mu, c):
        g = self.grid
        A, _ = self.operator(c)
        dc = 1.0 / self.laws.material.d2phi_dcc(self.F, c)
        dmob = self.laws.mobility.dlagrangian_dc(self.F, c)[:, 0, 0]
        D = g.difference(1)
        q = g.face_weights(1) / g.h**2 * (D @ mu)
        n = g.n_cells
        avg = sp.diags([np.full(n - 1, 0.5), np.full(n - 1, 0.5)], [0, 1], shape=(n - 1, n))
        dflux = D.T @ sp.diags(q) @ avg @ sp.diags(dmob * dc)
        return (A + sp.diags(g.h * dc / self.tau) + dflux).tocsc()

    def spd_solve(self, A, b):
        if self.grid.n_cells <= self.cfg.direct_max_cells:
            return spsolve(A.tocsc(), b)
        x, info = cg(A, b, rtol=self.cfg.linear_tol, maxiter=10 * self.grid.n_cells,
                     M=sp.diags(1.0 / A.diagonal()))
        if info != 0:
            raise FixedPointDiverged(f"conjugate gradients did not converge (info = {info})")
        return x


def _initial_mu(step):
    return step.laws.material.dphi_dc(step.F, np.maximum(step.c_prev, EPS_C))


def _newton(step, mu):
    cfg = step.cfg
    c = step.conc(mu)
    R = step.residual(mu, c)
    rnorm = float(np.max(np.abs(R)))
    update = np.inf
    lam = cfg.damping
    for it in range(1, cfg.max_iter + 1):
        delta = spsolve(step.jacobian(mu, c), -R)
        lam = cfg.damping
        for _ in range(cfg.max_halvings + 1):
            mu_t = mu + lam * delta
            c_t = step.conc(mu_t)
            R_t = step.residual(mu_t, c_t)
            r_t = float(np.max(np.abs(R_t)))
            if r_t <= rnorm or r_t <= 1e-14 * step.grid.h / step.tau * (1 + np.max(c_t)):
                break
            lam *= 0.5
        else:
            if rnorm <= RESIDUAL_FLOOR * step.grid.h / step.tau * (1.0 + float(np.max(c))):
                # already at the roundoff/inversion noise floor
                return mu, c, it, 0.0, lam
            raise FixedPointDiverged(f"residual increased after {cfg.max_halvings} damping halvings "
                                     f"(iteration {it}, residual {rnorm:.3e})")
        update = float(np.max(np.abs(mu_t - mu)))
        mu, c, R, rnorm = mu_t, c_t, R_t, r_t
        if update <= cfg.tol * (1.0 + float(np.max(np.abs(mu)))):
            return mu, c, it, update, lam
    raise MaxIterationsExceeded(f"diffusion Newton iteration not converged (update {update:.3e})")


def _picard(step, mu):
    cfg = step.cfg
    if not step.grid.robin_enabled:
        raise FixedPointDiverged("the Picard map needs Robin exchange (kappa > 0) to be well posed")
    lam = cfg.damping
    halvings = 0
    prev = np.inf
    for it in range(1, cfg.max_iter + 1):
        try:
            c_t = step.conc(mu)
        except InversionFailure as exc:
            raise FixedPointDiverged(f"Picard iterate left the invertible range at iteration {it}: {exc}") from None
        A, _ = step.operator(c_t)
        rhs = step.b_ext - step.grid.h * (c_t - step.c_prev) / step.tau
        S = step.spd_solve(A, rhs)
        gap = float(np.max(np.abs(S - mu)))
        if gap > prev:
            halvings += 1
            if halvings > cfg.max_halvings:
                raise FixedPointDiverged(f"Picard residual {gap:.3e} kept increasing (damping {lam:.3g})")
            lam *= 0.5
        prev = gap
        mu_new = (1.0 - lam) * mu + lam * S
        update = float(np.max(np.abs(mu_new - mu)))
        mu = mu_new
        if update <= cfg.tol * (1.0 + float(np.max(np.abs(mu)))):
            return mu, step.conc(mu), it, update, lam
    raise MaxIterationsExceeded(f"Picard iteration not converged after {cfg.max_iter} iterations")


def fixed_point_diffusion(grid, laws, chi, c_prev, tau, cfg: DiffSolveConfig = DiffSolveConfig(), mu_ext=(0.0, 0.0),
                          mu_start=None) -> DiffStepResult:
    """Solve the regularized diffusion step for (mu_k, c_k) with chi_k frozen."""
    step = _Step(grid, laws, chi, c_prev, tau, cfg, mu_ext)
    mu0 = _initial_mu(step) if mu_start is None else np.asarray(mu_start, float)
    solver = _newton if cfg.scheme == "newton" else _picard
    mu, c, iterations, update, lam = solver(step, mu0)
    c = step.conc(mu)
    return finalize(step, mu, c, iterations, update, lam)


def finalize(step, mu, c, iterations=0, update=0.0, lam=1.0):
    g = step.grid
    A, face = step.operator(c)
    R = g.h * (c - step.c_prev) / step.tau + A @ mu - step.b_ext
    K_flux = flux_matrix(g, face)
    trace = boundary_trace(mu)
    subdiff = float(np.max(np.abs(step.laws.material.dphi_dc(step.F, c) - mu)))
    return DiffStepResult(
        mu=mu,
        c=c,
        iterations=iterations,
        fp_residual=update,
        eq_residual=float(np.max(np.abs(R))),
        residual=R,
        flux_dissipation=fsum(mu * (K_flux @ mu)),
        reg_dissipation=fsum(mu * (step.K_reg @ mu)),
        robin_square=fsum(g.kappa * trace**2),
        robin_source=fsum(g.kappa * trace * step.mu_ext),
        mass_change=fsum(c - step.c_prev) * g.h,
        mu_ext=step.mu_ext,
        subdiff_residual=subdiff,
        damping=lam,
    )


def dissipation_breakdown(result: DiffStepResult):
    """The four per-step integrals that enter the energy-dissipation balance (without the tau factor)."""
    return {
        "flux": result.flux_dissipation,
        "regularization": result.reg_dissipation,
        "robin_square": result.robin_square,
        "robin_source": result.robin_source,
    }

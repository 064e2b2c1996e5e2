"""Mechanical half-step: incremental minimization for the new deformation.

Given the previous deformation and concentration, the new deformation
minimizes

    E0(chi, c_prev) + tau * R(chi_prev, (chi - chi_prev) / tau, c_prev) - <load, chi>

over deformations pinned to the identity on the Dirichlet part.  The solver
is a preconditioned limited-memory BFGS descent with a backtracking line
search that refuses any trial step shrinking det grad chi below a fraction
of its current minimum; the det^-q growth of the free energy does the rest.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import DegenerateDeformation, MaxIterationsExceeded
from .fields import (
    assemble_dissipation,
    assemble_energy,
    assemble_load,
    check_admissible,
    deformation_gradient,
    second_gradient,
)

logger = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class MechSolveConfig:
    memory: int = 10
    max_iter: int = 500
    g_tol_rel: float = 1e-8
    backtrack: float = 0.5
    armijo: float = 1e-4
    det_guard: float = 0.1
    max_backtracks: int = 60

    def __post_init__(self):
        if not self.g_tol_rel > 0:
            raise ValueError("g_tol_rel must be positive")
        if not 0 < self.det_guard < 1:
            raise ValueError("det_guard must lie in (0, 1)")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack must lie in (0, 1)")
        if self.memory < 1 or self.max_iter < 0:
            raise ValueError("memory >= 1 and max_iter >= 0 required")


@dataclass
class MechStepResult:
    chi: np.ndarray
    value: float
    value_prev: float
    grad_norm: float
    iterations: int
    min_det: float
    converged: bool

    @property
    def decrease(self):
        """Competitor certificate: functional at chi_prev minus functional at chi_k."""
        return self.value_prev - self.value


class IncrementalProblem:
    """Incremental functional of one mechanical step and its exact gradient."""

    def __init__(self, grid, laws, chi_prev, c_prev, load, tau):
        self.grid = grid
        self.laws = laws
        self.chi_prev = np.asarray(chi_prev, float)
        self.c_prev = np.asarray(c_prev, float)
        self.load = load
        self.tau = float(tau)
        self.F_prev = deformation_gradient(grid, self.chi_prev)
        self.load_vec = load.vector(grid)

    def value(self, chi):
        g, tau = self.grid, self.tau
        E = assemble_energy(g, self.laws.material, self.laws.hyper, chi, self.c_prev)
        rate = (np.asarray(chi, float) - self.chi_prev) / tau
        R = assemble_dissipation(g, self.laws.visc, self.chi_prev, rate, self.c_prev)
        return E + tau * R - assemble_load(g, self.load, chi)

    def gradient(self, chi):
        """Gradient w.r.t. nodal values; Dirichlet entries are zero."""
        g = self.grid
        chi = np.asarray(chi, float)
        check_admissible(g, chi)
        F = deformation_gradient(g, chi)
        Fdot = (F - self.F_prev) / self.tau
        stress = self.laws.material.dphi_dF(F, self.c_prev) + self.laws.visc.dzeta_dFdot(self.F_prev, Fdot, self.c_prev)
        hyper = self.laws.hyper.h_stress(second_gradient(g, chi))
        out = g.grad.T @ (g.h * stress[:, 0, 0]) + g.hess.T @ (g.h * hyper[:, 0, 0, 0]) - self.load_vec
        out[g.dirichlet_nodes] = 0.0
        return out


def incremental_functional(grid, laws, chi, chi_prev, c_prev, load, tau):
    return IncrementalProblem(grid, laws, chi_prev, c_prev, load, tau).value(chi)


def incremental_gradient(grid, laws, chi, chi_prev, c_prev, load, tau):
    return IncrementalProblem(grid, laws, chi_prev, c_prev, load, tau).gradient(chi)


def _preconditioner(grid):
    """Factorized discrete H^1 stiffness on the free nodes."""
    K = (grid.grad.T @ sp.diags(np.full(grid.n_cells, grid.h)) @ grid.grad).tocsc()
    free = grid.free_nodes
    return splu(K[free][:, free].tocsc())


def solve_mechanical_step(grid, laws, chi_prev, c_prev, load, tau, cfg: MechSolveConfig = MechSolveConfig(), *,
                          strict=True):
    """Minimize the incremental functional starting from ``chi_prev``.

    Raises :class:`MaxIterationsExceeded` (with the best iterate attached)
    when the gradient tolerance is not met and ``strict`` is set.
    """
    prob = IncrementalProblem(grid, laws, chi_prev, c_prev, load, tau)
    free = grid.free_nodes
    chi = prob.chi_prev.copy()
    try:
        f = prob.value(chi)
    except DegenerateDeformation:
        raise DegenerateDeformation("warm start is not admissible") from None
    f_prev = f
    gfull = prob.gradient(chi)
    gx = gfull[free]
    pre = _preconditioner(grid)
    mem = deque(maxlen=cfg.memory)
    it = 0
    converged = False

    def direction(gx):
        q = gx.copy()
        alphas = []
        for s, y, rho in reversed(mem):
            a = rho * np.dot(s, q)
            alphas.append(a)
            q -= a * y
        r = pre.solve(q)
        if mem:
            s, y, _ = mem[-1]
            r *= np.dot(s, y) / np.dot(y, pre.solve(y))
        for (s, y, rho), a in zip(mem, reversed(alphas)):
            b = rho * np.dot(y, r)
            r += s * (a - b)
        return -r

    while True:
        gnorm = float(np.linalg.norm(gx))
        if gnorm <= cfg.g_tol_rel * (1.0 + abs(f)):
            converged = True
            break
        if it >= cfg.max_iter:
            break
        p = direction(gx)
        slope = float(np.dot(gx, p))
        if not slope < 0:
            mem.clear()
            p = direction(gx)
            slope = float(np.dot(gx, p))
        J_min = float(np.min(grid.grad @ chi))
        alpha = 1.0
        accepted = False
        for _ in range(cfg.max_backtracks):
            trial = chi.copy()
            trial[free] += alpha * p
            J_t = grid.grad @ trial
            if np.min(J_t) <= cfg.det_guard * J_min:
                alpha *= cfg.backtrack
                continue
            f_t = prob.value(trial)
            if f_t <= f + cfg.armijo * alpha * slope:
                accepted = True
            elif f_t <= f + 8 * _EPS * (1.0 + abs(f)):
                # decrease below roundoff: fall back on the gradient norm
                g_t = prob.gradient(trial)[free]
                accepted = np.linalg.norm(g_t) < gnorm
            if accepted:
                break
            alpha *= cfg.backtrack
        if not accepted:
            if mem:
                mem.clear()
                continue
            logger.debug("mechanical line search stalled at |g| = %.3e", gnorm)
            break
        g_new = prob.gradient(trial)[free]
        s = trial[free] - chi[free]
        y = g_new - gx
        sy = float(np.dot(s, y))
        if sy > 1e-14 * np.linalg.norm(s) * np.linalg.norm(y):
            mem.append((s, y, 1.0 / sy))
        chi, f, gx = trial, f_t, g_new
        it += 1

    result = MechStepResult(chi=chi, value=f, value_prev=f_prev, grad_norm=float(np.linalg.norm(gx)),
                            iterations=it, min_det=float(np.min(grid.grad @ chi)), converged=converged)
    if not converged and strict:
        raise MaxIterationsExceeded(
            f"mechanical step not converged after {it} iterations (|g| = {result.grad_norm:.3e})", result)
    return result

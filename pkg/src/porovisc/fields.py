"""Uniform-grid discretization of the unit interval.

Deformations live on the ``n + 1`` nodes, concentrations and chemical
potentials on the ``n`` cell centres.  The deformation gradient and the
second gradient are evaluated at cell centres so that every energy density
pairs quantities living at the same point (midpoint quadrature).

Face-based quadratic forms (mobility flux, regularization, gradient norms)
use difference quotients between neighbouring cell centres.  The two end
faces carry an extra half-cell of weight so that the weights add up to the
length of the domain; this makes the forms exact on linear fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateDeformation

DIRICHLET_CHOICES = ("left", "both")


def fsum(values):
    return math.fsum(np.ravel(values))


@dataclass(frozen=True)
class Grid:
    """Uniform grid on (0, 1) with boundary tagging.

    ``dirichlet`` selects the mechanical Dirichlet part: ``"left"`` pins
    x = 0 and leaves x = 1 as the Neumann end, ``"both"`` pins both ends.
    ``kappa_left``/``kappa_right`` are the Robin permeabilities of the two
    boundary points.
    """

    n_cells: int
    kappa_left: float = 0.0
    kappa_right: float = 0.0
    dirichlet: str = "left"
    d: int = 1

    def __post_init__(self):
        if self.d != 1:
            raise ValueError("only d = 1 grids are implemented")
        if self.n_cells < 4:
            raise ValueError("need at least 4 cells for the second-difference stencils")
        if self.dirichlet not in DIRICHLET_CHOICES:
            raise ValueError(f"dirichlet must be one of {DIRICHLET_CHOICES}")
        if self.kappa_left < 0 or self.kappa_right < 0:
            raise ValueError("kappa must be nonnegative")

    @property
    def h(self):
        return 1.0 / self.n_cells

    @cached_property
    def nodes(self):
        return np.linspace(0.0, 1.0, self.n_cells + 1)

    @cached_property
    def centers(self):
        return (np.arange(self.n_cells) + 0.5) * self.h

    @property
    def neumann_right(self):
        return self.dirichlet == "left"

    @cached_property
    def dirichlet_nodes(self):
        return np.array([0] if self.dirichlet == "left" else [0, self.n_cells])

    @cached_property
    def free_nodes(self):
        mask = np.ones(self.n_cells + 1, dtype=bool)
        mask[self.dirichlet_nodes] = False
        return np.flatnonzero(mask)

    @property
    def kappa(self):
        return np.array([self.kappa_left, self.kappa_right])

    @property
    def robin_enabled(self):
        return self.kappa_left > 0 or self.kappa_right > 0

    def identity(self):
        return self.nodes.copy()

    def to_dict(self):
        return {"d": self.d, "n_cells": self.n_cells, "h": self.h, "dirichlet": self.dirichlet,
                "kappa_left": self.kappa_left, "kappa_right": self.kappa_right}

    # ------------------------------------------------------------------
    # operators

    @cached_property
    def grad(self):
        """Nodal field -> cell-centre derivative, shape (n, n + 1)."""
        n, h = self.n_cells, self.h
        rows = np.repeat(np.arange(n), 2)
        cols = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1).ravel()
        vals = np.tile([-1.0 / h, 1.0 / h], n)
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n + 1))

    @cached_property
    def nodal_second_difference(self):
        """Central second differences, one-sided second-order stencils at the ends."""
        n, h = self.n_cells, self.h
        S = sp.lil_matrix((n + 1, n + 1))
        S[0, 0:4] = [2.0, -5.0, 4.0, -1.0]
        S[n, n - 3:n + 1] = [-1.0, 4.0, -5.0, 2.0]
        for i in range(1, n):
            S[i, i - 1:i + 2] = [1.0, -2.0, 1.0]
        return (S / h**2).tocsr()

    @cached_property
    def hess(self):
        """Nodal field -> cell-centre second derivative (average of the adjacent nodal values)."""
        n = self.n_cells
        rows = np.repeat(np.arange(n), 2)
        cols = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1).ravel()
        avg = sp.csr_matrix((np.full(2 * n, 0.5), (rows, cols)), shape=(n, n + 1))
        return (avg @ self.nodal_second_difference).tocsr()

    @cached_property
    def node_to_cell(self):
        n = self.n_cells
        rows = np.repeat(np.arange(n), 2)
        cols = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1).ravel()
        return sp.csr_matrix((np.full(2 * n, 0.5), (rows, cols)), shape=(n, n + 1))

    def difference(self, order=1):
        """Undivided ``order``-th differences of a cell field, shape (n - order, n)."""
        D = sp.identity(self.n_cells, format="csr")
        for _ in range(order):
            m = D.shape[0]
            step = sp.diags([-np.ones(m - 1), np.ones(m - 1)], [0, 1], shape=(m - 1, m), format="csr")
            D = step @ D
        return D.tocsr()

    def face_weights(self, order=1):
        """Quadrature weights of the ``order``-th difference quotients; they sum to 1."""
        w = np.full(self.n_cells - order, self.h)
        w[0] += 0.5 * order * self.h
        w[-1] += 0.5 * order * self.h
        return w

    def face_average(self, values):
        values = np.asarray(values)
        return 0.5 * (values[:-1] + values[1:])


# --------------------------------------------------------------------------
# field evaluation


def deformation_gradient(grid, chi):
    """F = grad chi at cell centres, shape (n, 1, 1)."""
    return (grid.grad @ np.asarray(chi, float))[:, None, None]


def second_gradient(grid, chi):
    """G = D^2 chi at cell centres, shape (n, 1, 1, 1)."""
    return (grid.hess @ np.asarray(chi, float))[:, None, None, None]


def min_det(grid, chi):
    return float(np.min(grid.grad @ np.asarray(chi, float)))


def check_admissible(grid, chi):
    J = grid.grad @ np.asarray(chi, float)
    if np.any(~(J > 0.0)):
        raise DegenerateDeformation(f"det grad chi <= 0 in {int(np.sum(~(J > 0)))} cell(s) (min {np.min(J):.3e})")
    return J


# --------------------------------------------------------------------------
# integrals


def assemble_free_energy(grid, material, chi, c):
    """Midpoint quadrature of int Phi(grad chi, c) dx."""
    check_admissible(grid, chi)
    return fsum(material.phi(deformation_gradient(grid, chi), c)) * grid.h


def assemble_hyper_energy(grid, hyper, chi):
    return fsum(hyper.h_pot(second_gradient(grid, chi))) * grid.h


def assemble_energy(grid, material, hyper, chi, c):
    """Stored energy int Phi(grad chi, c) + H(D^2 chi) dx."""
    return assemble_free_energy(grid, material, chi, c) + assemble_hyper_energy(grid, hyper, chi)


def assemble_dissipation(grid, visc, chi_prev, chi_dot, c):
    """Viscous potential int zeta(grad chi_prev, grad chi_dot, c) dx."""
    F = deformation_gradient(grid, chi_prev)
    Fdot = deformation_gradient(grid, chi_dot)
    return fsum(visc.zeta(F, Fdot, c)) * grid.h


@dataclass(frozen=True)
class Load:
    """Step-averaged loading: uniform body force ``f`` and end traction ``g``."""

    f: float = 0.0
    g: float = 0.0

    def vector(self, grid):
        """Nodal covector L with <load, chi> = L . chi."""
        L = grid.node_to_cell.T @ np.full(grid.n_cells, self.f * grid.h)
        if grid.neumann_right:
            L = L.copy()
            L[-1] += self.g
        return np.asarray(L)


def assemble_load(grid, load, chi):
    """<load, chi> = int f chi dx + g chi(1) (traction only on a Neumann end)."""
    chi = np.asarray(chi, float)
    body = fsum(load.f * (grid.node_to_cell @ chi)) * grid.h
    trac = load.g * chi[-1] if grid.neumann_right else 0.0
    return body + trac


# --------------------------------------------------------------------------
# diffusion forms


def boundary_trace(mu):
    """Boundary values of a cell field: the adjacent cell values."""
    mu = np.asarray(mu, float)
    return np.array([mu[0], mu[-1]])


def robin_boundary_form(grid, mu, psi, kappa=None):
    kappa = grid.kappa if kappa is None else np.asarray(kappa, float)
    return float(np.dot(kappa, boundary_trace(mu) * boundary_trace(psi)))


def robin_matrix(grid, kappa=None):
    kappa = grid.kappa if kappa is None else np.asarray(kappa, float)
    diag = np.zeros(grid.n_cells)
    diag[0] += kappa[0]
    diag[-1] += kappa[1]
    return sp.diags(diag, format="csr")


def regularization_matrix(grid, theta):
    """Matrix of sum_{|beta| = theta} int d^beta mu d^beta psi dx."""
    D = grid.difference(theta)
    w = grid.face_weights(theta) / grid.h ** (2 * theta)
    return (D.T @ sp.diags(w) @ D).tocsr()


def regularization_form(grid, theta, mu, psi):
    D = grid.difference(theta)
    w = grid.face_weights(theta) / grid.h ** (2 * theta)
    return fsum(w * (D @ np.asarray(mu, float)) * (D @ np.asarray(psi, float)))


def flux_matrix(grid, face_mobility):
    """Matrix of int M grad mu . grad psi dx for given face mobilities."""
    D = grid.difference(1)
    w = grid.face_weights(1) * np.asarray(face_mobility, float) / grid.h**2
    return (D.T @ sp.diags(w) @ D).tocsr()


def face_gradient(grid, values):
    return (grid.difference(1) @ np.asarray(values, float)) / grid.h

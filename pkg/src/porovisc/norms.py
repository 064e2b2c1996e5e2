"""Quadrature values of the diagnostic norms on uniform cell fields over (0, 1).

Gradients are face differences between neighbouring cells with the same
end-weighted face quadrature as the diffusion forms, so linear profiles are
differentiated and integrated exactly.
"""

from __future__ import annotations

import numpy as np

from .fields import fsum


def _h(values, h):
    return 1.0 / len(values) if h is None else h


def _face_weights(n, h):
    w = np.full(n - 1, h)
    w[0] += 0.5 * h
    w[-1] += 0.5 * h
    return w


def llogl_norm(c, h=None):
    """int c log+(c) dx + ||c||_L1."""
    c = np.asarray(c, float)
    h = _h(c, h)
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(c > 1.0, c * np.log(np.where(c > 1.0, c, 1.0)), 0.0)
    return h * (fsum(ent) + fsum(np.abs(c)))


def lp_norm(c, exponent, h=None):
    c = np.asarray(c, float)
    h = _h(c, h)
    return (h * fsum(np.abs(c) ** exponent)) ** (1.0 / exponent)


def grad_power_norm(c, power, h=None):
    """L2 norm of the face gradient of c**power."""
    c = np.asarray(c, float)
    h = _h(c, h)
    v = np.maximum(c, 0.0) ** power
    g = np.diff(v) / h
    return np.sqrt(fsum(_face_weights(len(c), h) * g**2))


def flux_ls_norm(flux, s, h=None):
    """L^s norm of a face field (length n - 1)."""
    flux = np.asarray(flux, float)
    n = len(flux) + 1
    h = 1.0 / n if h is None else h
    return fsum(_face_weights(n, h) * np.abs(flux) ** s) ** (1.0 / s)


def boundary_l2(mu, kappa):
    """||sqrt(kappa) mu||_{L2(boundary)} with the adjacent-cell trace."""
    mu = np.asarray(mu, float)
    trace = np.array([mu[0], mu[-1]])
    return float(np.sqrt(fsum(np.asarray(kappa, float) * trace**2)))


def cell_l2(values, h=None):
    values = np.asarray(values, float)
    return float(np.sqrt(_h(values, h) * fsum(values**2)))

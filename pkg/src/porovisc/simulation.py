"""Staggered time loop with energy ledger, diagnostics and interpolants.

Each step first minimizes the incremental mechanical functional with the
previous concentration frozen, then solves the regularized diffusion step
with the new deformation frozen.  After every step the energy ledger is
updated and the runtime invariants are checked:

* energy-dissipation slack  S_k >= -1e-8 (1 + |E_tau(0)|),
* global mass balance to 1e-9 relative,
* c_k > 0 and det grad chi_k > 0,
* subdifferential consistency, the convexity-step inequality and the
  mechanical competitor inequality at solver tolerance.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .config import (
    RunConfig,
    build_diffusion_config,
    build_grid,
    build_laws,
    initial_concentration,
    initial_deformation,
    require_valid,
    step_load,
    step_mu_ext,
)
from .diffusion import fixed_point_diffusion
from .errors import PoroviscError
from .fields import (
    assemble_dissipation,
    assemble_energy,
    assemble_load,
    deformation_gradient,
    face_gradient,
    fsum,
    min_det,
)
from .materials import derive_flux_exponent
from .mechanics import MechSolveConfig, solve_mechanical_step
from .norms import boundary_l2, cell_l2, flux_ls_norm, grad_power_norm, llogl_norm, lp_norm

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_INVARIANT = 4

EDI_REL_TOL = 1e-8
MASS_REL_TOL = 1e-9
SUBDIFF_REL_TOL = 1e-10
CONVEXITY_REL_TOL = 1e-10
COMPETITOR_REL_TOL = 1e-12
NORM_BOUND = 1e12


# --------------------------------------------------------------------------
# energy ledger


@dataclass
class EnergyLedger:
    """Per-step terms of the time-discrete energy-dissipation inequality.

    Index 0 holds the initial state; the per-step integrals are already
    multiplied by tau and are zero at index 0.
    """

    energy: list = field(default_factory=list)
    viscous: list = field(default_factory=list)
    flux: list = field(default_factory=list)
    regularization: list = field(default_factory=list)
    robin_square: list = field(default_factory=list)
    robin_source: list = field(default_factory=list)
    load_rate: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    boundary_inflow: list = field(default_factory=list)
    slack: list = field(default_factory=list)

    def start(self, energy0, mass0):
        for name in ("viscous", "flux", "regularization", "robin_square", "robin_source", "load_rate",
                     "boundary_inflow", "slack"):
            getattr(self, name).append(0.0)
        self.energy.append(energy0)
        self.mass.append(mass0)

    def append(self, **terms):
        for k, v in terms.items():
            getattr(self, k).append(float(v))
        self.slack.append(compute_edi_slack(self, len(self.energy) - 1))

    @property
    def n_steps(self):
        return len(self.energy) - 1

    @property
    def tolerance(self):
        return EDI_REL_TOL * (1.0 + abs(self.energy[0]))

    def dissipation(self, k):
        """Cumulative dissipation D_k."""
        return fsum([self.viscous[1:k + 1], self.flux[1:k + 1], self.regularization[1:k + 1],
                     self.robin_square[1:k + 1]])

    def mass_balance_error(self, k):
        return (self.mass[k] - self.mass[0]) - fsum(self.boundary_inflow[1:k + 1])

    def mass_scale(self):
        return max(abs(self.mass[0]), 1e-300)

    def violations(self, tol=None):
        tol = self.tolerance if tol is None else tol
        return [k for k, s in enumerate(self.slack) if s < -tol]

    def rows(self):
        for k in range(len(self.energy)):
            yield {
                "energy": self.energy[k], "viscous": self.viscous[k], "flux": self.flux[k],
                "regularization": self.regularization[k], "robin_square": self.robin_square[k],
                "robin_source": self.robin_source[k], "load_rate": self.load_rate[k],
                "dissipation": self.dissipation(k), "edi_slack": self.slack[k], "mass": self.mass[k],
                "boundary_inflow": self.boundary_inflow[k], "mass_balance_error": self.mass_balance_error(k),
            }


def compute_edi_slack(ledger: EnergyLedger, k: int) -> float:
    """RHS - LHS of the discrete energy-dissipation inequality after step ``k``.

    RHS = E_tau(0) + sum tau int kappa mu mu_ext - sum <l_i - l_{i-1}, chi_{i-1}>
    LHS = E_tau(t_k) + sum tau (flux + eta reg + kappa mu^2) + sum tau R_i
    """
    s = slice(1, k + 1)
    rhs = [ledger.energy[0]] + ledger.robin_source[s] + [-v for v in ledger.load_rate[s]]
    lhs = ([ledger.energy[k]] + ledger.flux[s] + ledger.regularization[s] + ledger.robin_square[s]
           + ledger.viscous[s])
    return fsum(rhs + [-v for v in lhs])


# --------------------------------------------------------------------------
# diagnostics


@dataclass
class DiagnosticSeries:
    rows: list = field(default_factory=list)

    def column(self, name):
        return np.array([r[name] for r in self.rows], float)

    @property
    def names(self):
        return list(self.rows[0]) if self.rows else []

    def bounded(self, start=1, bound=NORM_BOUND):
        """All entries from row ``start`` on are finite and below ``bound``."""
        for r in self.rows[start:]:
            for v in r.values():
                if not (np.isfinite(v) and abs(v) < bound):
                    return False
        return True


def diagnostic_row(k, t, grid, laws, chi, c, mu, chi_prev=None, tau=None):
    h = grid.h
    prof = laws.profile
    m, r = prof.m, prof.r
    F = deformation_gradient(grid, chi)
    row = {"k": k, "t": t, "min_det": min_det(grid, chi), "min_c": float(np.min(c)),
           "llogl": llogl_norm(c, h), "lp_2r": lp_norm(c, 2.0 + r, h) ** (2.0 + r),
           "grad_c_m2": grad_power_norm(c, m / 2.0, h) ** 2}
    if prof.case_tag != "CaseI":
        for label, omega in (("0", 0.0), ("half", (1.0 + r) / 2.0), ("full", 1.0 + r)):
            row[f"grad_c_m2_omega_{label}"] = grad_power_norm(c, m / 2.0 + omega, h) ** 2
    s = derive_flux_exponent(prof, grid.d)
    mob = laws.mobility.lagrangian(F, np.maximum(c, 0.0))[:, 0, 0]
    flux = grid.face_average(mob) * face_gradient(grid, mu)
    row["flux_exponent"] = s
    row["flux_ls"] = flux_ls_norm(flux, s, h)
    row["robin_l2"] = boundary_l2(mu, grid.kappa)
    if chi_prev is not None:
        rate = (np.asarray(chi) - np.asarray(chi_prev)) / tau
        row["rate_h1"] = cell_l2(grid.grad @ rate, h)
    else:
        row["rate_h1"] = 0.0
    return row


# --------------------------------------------------------------------------
# trajectory


def x_norm(grid, v):
    """Discrete H1 norm of a nodal field."""
    v = np.asarray(v, float)
    return math.sqrt(grid.h * (fsum((grid.node_to_cell @ v) ** 2) + fsum((grid.grad @ v) ** 2)))


@dataclass
class TrajectoryRecord:
    """All states chi_k, c_k, mu_k (k = 0..N) on the equidistant grid t_k = k tau."""

    grid: object
    tau: float
    chi: list = field(default_factory=list)
    c: list = field(default_factory=list)
    mu: list = field(default_factory=list)

    @property
    def n_steps(self):
        return len(self.chi) - 1

    @property
    def times(self):
        return np.arange(len(self.chi)) * self.tau

    def _index(self, t):
        k = int(math.ceil(t / self.tau - 1e-12))
        return min(max(k, 1), self.n_steps)

    def upper(self, t):
        """Piecewise-constant interpolant: chi_k on (t_{k-1}, t_k]."""
        if t <= 0:
            return self.chi[0]
        return self.chi[self._index(t)]

    def lower(self, t):
        """Piecewise-constant interpolant: chi_{k-1} on [t_{k-1}, t_k)."""
        if t <= 0:
            return self.chi[0]
        return self.chi[self._index(t) - 1]

    def affine(self, t):
        if t <= 0:
            return self.chi[0]
        k = self._index(t)
        s = (t - (k - 1) * self.tau) / self.tau
        return (1.0 - s) * self.chi[k - 1] + s * self.chi[k]

    def rate(self, k):
        """delta_tau chi_k = (chi_k - chi_{k-1}) / tau."""
        return (self.chi[k] - self.chi[k - 1]) / self.tau

    def interpolant_gaps(self):
        """Both sides of the interpolant gap bounds, by independent quadrature.

        ``l2_gap`` integrates ||chi_hat - chi_lower||^2 over each step with
        three-point Gauss quadrature (exact for quadratics); ``l2_bound`` is
        (tau / sqrt 3) ||d chi_hat / dt||_{L2}.  ``linf_gap`` is the largest
        ||chi_hat - chi_upper|| over steps and ``linf_bound`` is
        tau^{1/2} ||d chi_hat / dt||_{L2}.
        """
        g, tau = self.grid, self.tau
        nodes, weights = np.polynomial.legendre.leggauss(3)
        gap_sq, rate_sq, linf = [], [], 0.0
        for k in range(1, self.n_steps + 1):
            t0 = (k - 1) * tau
            for xq, wq in zip(nodes, weights):
                t = t0 + 0.5 * tau * (xq + 1.0)
                gap_sq.append(0.5 * tau * wq * x_norm(g, self.affine(t) - self.lower(t)) ** 2)
            rate_sq.append(tau * x_norm(g, self.rate(k)) ** 2)
            linf = max(linf, x_norm(g, self.chi[k] - self.chi[k - 1]))
        rate_l2 = math.sqrt(fsum(rate_sq))
        return {"l2_gap": math.sqrt(fsum(gap_sq)), "l2_bound": tau / math.sqrt(3.0) * rate_l2,
                "linf_gap": linf, "linf_bound": math.sqrt(tau) * rate_l2}


# --------------------------------------------------------------------------
# status


@dataclass
class RunStatus:
    code: int = EXIT_OK
    message: str = "ok"
    step: int | None = None
    error: str | None = None
    violations: list = field(default_factory=list)
    healey_kromer_bound: float | None = None
    wall_time: float = 0.0

    @property
    def ok(self):
        return self.code == EXIT_OK

    def to_dict(self):
        return {"code": self.code, "message": self.message, "step": self.step, "error": self.error,
                "violations": self.violations, "healey_kromer_bound": self.healey_kromer_bound,
                "wall_time": self.wall_time}


class RunResult(NamedTuple):
    trajectory: TrajectoryRecord
    ledger: EnergyLedger
    diagnostics: DiagnosticSeries
    status: RunStatus
    steps: list


# --------------------------------------------------------------------------
# the loop


def _invariant_checks(ledger, k, c, chi, grid, step_row):
    out = []
    if ledger.slack[k] < -ledger.tolerance:
        out.append(f"EDI slack {ledger.slack[k]:.3e} below -{ledger.tolerance:.3e}")
    err = ledger.mass_balance_error(k)
    if abs(err) > MASS_REL_TOL * ledger.mass_scale():
        out.append(f"mass balance error {err:.3e} exceeds {MASS_REL_TOL:g} relative")
    if not np.min(c) > 0:
        out.append(f"concentration not positive (min {np.min(c):.3e})")
    if not min_det(grid, chi) > 0:
        out.append("det grad chi not positive")
    if step_row["subdiff_residual"] > SUBDIFF_REL_TOL * (1.0 + step_row["mu_max"]):
        out.append(f"subdifferential residual {step_row['subdiff_residual']:.3e}")
    if step_row["convexity_gap"] > CONVEXITY_REL_TOL * step_row["convexity_scale"]:
        out.append(f"convexity-step inequality violated by {step_row['convexity_gap']:.3e}")
    if step_row["competitor_decrease"] < -COMPETITOR_REL_TOL * step_row["competitor_scale"]:
        out.append(f"competitor inequality violated ({step_row['competitor_decrease']:.3e})")
    return out


def run_simulation(config: RunConfig, *, output_dir=None, raise_errors=False) -> RunResult:
    """Run the staggered scheme for k = 1..N.

    Solver failures end the run with exit code 3 (the step index is kept in
    the status) unless ``raise_errors`` is set.  Invariant violations are
    recorded and the run continues; the status reports the first one.
    Raises :class:`ConfigInvalid` for an invalid configuration.
    """
    require_valid(config)
    started = time.perf_counter()
    grid = build_grid(config)
    laws = build_laws(config)
    mech_cfg = MechSolveConfig(**config.mech_solver)
    diff_cfg = build_diffusion_config(config)
    tau = config.tau
    out_dir = output_dir if output_dir is not None else config.output_dir
    writer = None
    if out_dir is not None:
        from .output import OutputWriter

        writer = OutputWriter(out_dir, config, grid)

    chi = initial_deformation(config, grid)
    c = initial_concentration(config, grid)
    F0 = deformation_gradient(grid, chi)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(c > 0, laws.material.dphi_dc(F0, np.where(c > 0, c, 1.0)), np.nan)

    load_first = step_load(config, 1)
    ledger = EnergyLedger()
    E0 = assemble_energy(grid, laws.material, laws.hyper, chi, c) - assemble_load(grid, load_first, chi)
    ledger.start(E0, fsum(c) * grid.h)
    traj = TrajectoryRecord(grid, tau, [chi.copy()], [c.copy()], [mu.copy()])
    diags = DiagnosticSeries([diagnostic_row(0, 0.0, grid, laws, chi, c, np.nan_to_num(mu))])
    diags.rows[0]["mu0_defined"] = float(np.all(np.isfinite(mu)))
    status = RunStatus()
    steps = []
    if writer is not None:
        writer.snapshot(0, 0.0, chi, c, mu)
    hk = min_det(grid, chi)
    load_prev = load_first
    mu_warm = None

    for k in range(1, config.n_steps + 1):
        t = k * tau
        load = step_load(config, k)
        mu_ext = step_mu_ext(config, k)
        chi_prev, c_prev = chi, c
        try:
            mech = solve_mechanical_step(grid, laws, chi_prev, c_prev, load, tau, mech_cfg)
            chi = mech.chi
            diff = fixed_point_diffusion(grid, laws, chi, c_prev, tau, diff_cfg, mu_ext=mu_ext, mu_start=mu_warm)
        except PoroviscError as exc:
            status.code, status.step = EXIT_SOLVER, k
            status.error = type(exc).__name__
            status.message = f"step {k}: {exc}"
            logger.error("solver failure at step %d: %s", k, exc)
            if raise_errors:
                exc.step = k
                if hasattr(exc, "add_note"):
                    exc.add_note(f"raised at time step {k}")
                raise
            chi = chi_prev
            break
        c, mu = diff.c, diff.mu
        mu_warm = mu

        F = deformation_gradient(grid, chi)
        phi_new = laws.material.phi(F, c)
        phi_mixed = laws.material.phi(F, c_prev)
        conv_gap = fsum([phi_new, -phi_mixed, -mu * (c - c_prev)]) * grid.h
        conv_scale = 1.0 + abs(fsum(phi_new) * grid.h)

        visc = tau * assemble_dissipation(grid, laws.visc, chi_prev, (chi - chi_prev) / tau, c_prev)
        energy = assemble_energy(grid, laws.material, laws.hyper, chi, c) - assemble_load(grid, load, chi)
        load_rate = assemble_load(grid, load, chi_prev) - assemble_load(grid, load_prev, chi_prev)
        trace = np.array([mu[0], mu[-1]])
        inflow = tau * fsum(grid.kappa * (mu_ext - trace))
        ledger.append(energy=energy, viscous=visc, flux=tau * diff.flux_dissipation,
                      regularization=tau * diff.reg_dissipation, robin_square=tau * diff.robin_square,
                      robin_source=tau * diff.robin_source, load_rate=load_rate,
                      mass=fsum(c) * grid.h, boundary_inflow=inflow)
        load_prev = load

        md = min_det(grid, chi)
        hk = min(hk, md)
        row = {
            "k": k, "t": t, "energy": energy, "viscous": visc, "flux": tau * diff.flux_dissipation,
            "regularization": tau * diff.reg_dissipation, "robin_square": tau * diff.robin_square,
            "robin_source": tau * diff.robin_source, "load_rate": load_rate,
            "dissipation": ledger.dissipation(k), "edi_slack": ledger.slack[k], "edi_tol": ledger.tolerance,
            "mass": ledger.mass[k], "boundary_inflow": inflow, "mass_balance_error": ledger.mass_balance_error(k),
            "min_det": md, "min_c": float(np.min(c)), "mech_iterations": mech.iterations,
            "mech_grad_norm": mech.grad_norm, "diff_iterations": diff.iterations,
            "diff_eq_residual": diff.eq_residual, "subdiff_residual": diff.subdiff_residual,
            "mu_max": float(np.max(np.abs(mu))), "convexity_gap": conv_gap, "convexity_scale": conv_scale,
            "competitor_decrease": mech.decrease, "competitor_scale": 1.0 + abs(mech.value_prev),
        }
        steps.append(row)
        traj.chi.append(chi.copy())
        traj.c.append(c.copy())
        traj.mu.append(mu.copy())
        diags.rows.append(diagnostic_row(k, t, grid, laws, chi, c, mu, chi_prev, tau))
        diags.rows[-1]["mu0_defined"] = 1.0

        if config.check_invariants:
            problems = _invariant_checks(ledger, k, c, chi, grid, row)
            if problems:
                status.violations.extend(f"step {k}: {p}" for p in problems)
                if status.code == EXIT_OK:
                    status.code, status.step = EXIT_INVARIANT, k
                    status.message = f"step {k}: {problems[0]}"
        if writer is not None:
            writer.step(row, diags.rows[-1])
            if writer.wants_snapshot(k, config.n_steps):
                writer.snapshot(k, t, chi, c, mu)

    status.healey_kromer_bound = hk
    status.wall_time = time.perf_counter() - started
    result = RunResult(traj, ledger, diags, status, steps)
    if writer is not None:
        writer.finish(result)
    return result


# --------------------------------------------------------------------------
# (tau, eta) sweep


def _final_fields(config):
    res = run_simulation(config.replace(output_dir=None))
    if not res.status.ok:
        raise RuntimeError(f"sweep member (eta={config.eta}, tau={config.tau}) failed: {res.status.message}")
    return res.trajectory.chi[-1], res.trajectory.c[-1]


def _study(configs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            finals = list(pool.map(_final_fields, configs))
    else:
        finals = [_final_fields(c) for c in configs]
    h = 1.0 / configs[0].n_cells
    dc, dchi = [], []
    for (chi_a, c_a), (chi_b, c_b) in zip(finals, finals[1:]):
        dc.append(cell_l2(c_a - c_b, h))
        dchi.append(math.sqrt(h * fsum(((chi_a - chi_b)[:-1] ** 2 + (chi_a - chi_b)[1:] ** 2) / 2)))
    return dc, dchi


def _verdict(diffs, floor=1e-14):
    if all(v <= floor for v in diffs):
        return "stationary"
    if all(b < a for a, b in zip(diffs, diffs[1:])):
        return "decreasing"
    return "not monotone"


def eta_tau_sweep(config: RunConfig, etas=None, taus=None, workers=None):
    """Empirical Cauchy study in eta (at the configured tau) and in tau (at the configured eta).

    Both lists must be strictly decreasing.  Successive differences of the
    final-time fields are reported in discrete L2 norms.
    """
    require_valid(config)
    report = {}
    for name, values in (("eta", etas), ("tau", taus)):
        if values is None:
            continue
        values = [float(v) for v in values]
        if len(values) < 2 or any(b >= a for a, b in zip(values, values[1:])):
            raise ValueError(f"{name} list must have at least two strictly decreasing entries")
        if name == "eta":
            configs = [config.replace(eta=v) for v in values]
        else:
            configs = []
            for v in values:
                n = round(config.T / v)
                if abs(config.T / v - n) > 1e-9 * n:
                    raise ValueError(f"tau = {v} does not divide T = {config.T}")
                configs.append(config.replace(n_steps=int(n)))
        dc, dchi = _study(configs, workers)
        report[name] = {"values": values, "diff_c_l2": dc, "diff_chi_l2": dchi,
                        "verdict_c": _verdict(dc), "verdict_chi": _verdict(dchi)}
    report["monotone"] = all(report[n]["verdict_c"] in ("decreasing", "stationary")
                             for n in ("eta", "tau") if n in report)
    return report

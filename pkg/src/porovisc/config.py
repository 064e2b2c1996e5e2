"""Run configuration: a single JSON document with named presets.

Time-dependent data (loads, external chemical potentials) are given as named
presets whose step averages are computed in closed form.  Initial data are
named spatial presets or explicit value lists.  Nothing is parsed as an
expression.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .diffusion import DiffSolveConfig
from .errors import ConfigInvalid, PoroviscError
from .fields import Grid, Load, deformation_gradient
from .materials import IsotropicViscosity, LawBundle, PowerHyperstress, PowerMobility, make_material

TIME_PRESETS = ("constant", "ramp", "sine")
CHI0_PRESETS = ("identity", "stretch", "values")
C0_PRESETS = ("constant", "cosine", "values")


# --------------------------------------------------------------------------
# time functions


@dataclass(frozen=True)
class TimeFunction:
    """Scalar function of time.

    ``constant``: value.  ``ramp``: offset + slope t.
    ``sine``: offset + amplitude sin(omega t + phase).
    """

    preset: str = "constant"
    value: float = 0.0
    slope: float = 0.0
    offset: float = 0.0
    amplitude: float = 0.0
    omega: float = 0.0
    phase: float = 0.0

    @classmethod
    def from_spec(cls, spec):
        if spec is None:
            return cls()
        if isinstance(spec, (int, float)):
            return cls(value=float(spec))
        spec = dict(spec)
        preset = spec.pop("preset", "constant")
        if preset not in TIME_PRESETS:
            raise ValueError(f"unknown time preset {preset!r}; known: {TIME_PRESETS}")
        allowed = {"constant": {"value"}, "ramp": {"slope", "offset"},
                   "sine": {"amplitude", "omega", "phase", "offset"}}[preset]
        extra = set(spec) - allowed
        if extra:
            raise ValueError(f"time preset {preset!r} does not take {sorted(extra)}")
        return cls(preset=preset, **{k: float(v) for k, v in spec.items()})

    def to_spec(self):
        keys = {"constant": ("value",), "ramp": ("slope", "offset"),
                "sine": ("amplitude", "omega", "phase", "offset")}[self.preset]
        return {"preset": self.preset, **{k: getattr(self, k) for k in keys}}

    def __call__(self, t):
        if self.preset == "constant":
            return self.value
        if self.preset == "ramp":
            return self.offset + self.slope * t
        return self.offset + self.amplitude * math.sin(self.omega * t + self.phase)

    def average(self, t0, t1):
        """Exact mean over [t0, t1]."""
        if self.preset == "constant":
            return self.value
        if self.preset == "ramp":
            return self.offset + 0.5 * self.slope * (t0 + t1)
        if self.omega == 0.0:
            return self(t0)
        w, ph = self.omega, self.phase
        return self.offset - self.amplitude * (math.cos(w * t1 + ph) - math.cos(w * t0 + ph)) / (w * (t1 - t0))

    def lipschitz(self):
        if self.preset == "constant":
            return 0.0
        if self.preset == "ramp":
            return abs(self.slope)
        return abs(self.amplitude * self.omega)


# --------------------------------------------------------------------------
# the configuration


def _default_mech():
    return {}


@dataclass
class RunConfig:
    n_cells: int = 64
    d: int = 1
    dirichlet: str = "left"
    T: float = 1.0
    n_steps: int = 128
    material: str = "biot"
    material_params: dict = field(default_factory=dict)
    hyperstress: dict = field(default_factory=dict)
    viscosity: dict = field(default_factory=dict)
    mobility: dict = field(default_factory=dict)
    kappa_left: float = 0.0
    kappa_right: float = 1.0
    mu_ext_left: TimeFunction = field(default_factory=TimeFunction)
    mu_ext_right: TimeFunction = field(default_factory=TimeFunction)
    load_f: TimeFunction = field(default_factory=TimeFunction)
    load_g: TimeFunction = field(default_factory=TimeFunction)
    eta: float = 1e-4
    theta: int = 1
    chi0: dict = field(default_factory=lambda: {"preset": "identity"})
    c0: dict = field(default_factory=lambda: {"preset": "constant", "value": 1.0})
    mech_solver: dict = field(default_factory=_default_mech)
    diff_solver: dict = field(default_factory=dict)
    output_dir: str | None = None
    snapshot_every: int | None = None
    check_invariants: bool = True

    @property
    def tau(self):
        return self.T / self.n_steps

    def times(self):
        return np.arange(self.n_steps + 1) * self.tau

    def replace(self, **changes):
        new = copy.deepcopy(self)
        for k, v in changes.items():
            if not hasattr(new, k):
                raise AttributeError(k)
            setattr(new, k, v)
        return new

    # ------------------------------------------------------------------
    # JSON round trip

    @classmethod
    def from_dict(cls, doc):
        doc = copy.deepcopy(doc)
        known = {"grid", "time", "material", "hyperstress", "viscosity", "mobility", "kappa", "mu_ext", "load",
                 "regularization", "initial", "solver", "output", "check_invariants"}
        extra = set(doc) - known
        if extra:
            raise ConfigInvalid([f"unknown top-level keys {sorted(extra)}"])
        try:
            grid = doc.get("grid", {})
            time = doc.get("time", {})
            T = float(time.get("T", 1.0))
            if "n_steps" in time:
                n_steps = time["n_steps"]
            elif "tau" in time:
                ratio = T / float(time["tau"])
                n_steps = round(ratio)
                if abs(ratio - n_steps) > 1e-9 * max(1.0, ratio):
                    raise ConfigInvalid([f"time: tau must divide T into an integer number of steps (T/tau = {ratio})"])
            else:
                n_steps = 128
            if int(n_steps) != n_steps:
                raise ConfigInvalid([f"time: n_steps must be an integer (got {n_steps})"])
            mat = doc.get("material", {"name": "biot"})
            kappa = doc.get("kappa", {})
            mu_ext = doc.get("mu_ext", {})
            load = doc.get("load", {})
            reg = doc.get("regularization", {})
            init = doc.get("initial", {})
            solver = doc.get("solver", {})
            out = doc.get("output", {})
            return cls(
                n_cells=int(grid.get("n_cells", 64)),
                d=int(grid.get("d", 1)),
                dirichlet=grid.get("dirichlet", "left"),
                T=T,
                n_steps=int(n_steps),
                material=mat.get("name", "biot"),
                material_params=dict(mat.get("params", {})),
                hyperstress=dict(doc.get("hyperstress", {})),
                viscosity=dict(doc.get("viscosity", {})),
                mobility=dict(doc.get("mobility", {})),
                kappa_left=float(kappa.get("left", 0.0)),
                kappa_right=float(kappa.get("right", 1.0)),
                mu_ext_left=TimeFunction.from_spec(mu_ext.get("left")),
                mu_ext_right=TimeFunction.from_spec(mu_ext.get("right")),
                load_f=TimeFunction.from_spec(load.get("f")),
                load_g=TimeFunction.from_spec(load.get("g")),
                eta=float(reg.get("eta", 1e-4)),
                theta=reg.get("theta", 1),
                chi0=dict(init.get("chi0", {"preset": "identity"})),
                c0=dict(init.get("c0", {"preset": "constant", "value": 1.0})),
                mech_solver=dict(solver.get("mechanics", {})),
                diff_solver=dict(solver.get("diffusion", {})),
                output_dir=out.get("directory"),
                snapshot_every=out.get("snapshot_every"),
                check_invariants=bool(doc.get("check_invariants", True)),
            )
        except ConfigInvalid:
            raise
        except (TypeError, ValueError, AttributeError) as exc:
            raise ConfigInvalid([f"malformed configuration: {exc}"]) from None

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigInvalid([f"{path}: invalid JSON ({exc})"]) from None
        return cls.from_dict(doc)

    def to_dict(self):
        return {
            "grid": {"d": self.d, "n_cells": self.n_cells, "dirichlet": self.dirichlet},
            "time": {"T": self.T, "n_steps": self.n_steps, "tau": self.tau},
            "material": {"name": self.material, "params": dict(self.material_params)},
            "hyperstress": dict(self.hyperstress),
            "viscosity": dict(self.viscosity),
            "mobility": dict(self.mobility),
            "kappa": {"left": self.kappa_left, "right": self.kappa_right},
            "mu_ext": {"left": self.mu_ext_left.to_spec(), "right": self.mu_ext_right.to_spec()},
            "load": {"f": self.load_f.to_spec(), "g": self.load_g.to_spec()},
            "regularization": {"eta": self.eta, "theta": self.theta},
            "initial": {"chi0": dict(self.chi0), "c0": dict(self.c0)},
            "solver": {"mechanics": dict(self.mech_solver), "diffusion": dict(self.diff_solver)},
            "output": {"directory": self.output_dir, "snapshot_every": self.snapshot_every},
            "check_invariants": self.check_invariants,
        }

    def to_json(self, path=None, **kw):
        text = json.dumps(self.to_dict(), indent=2, **kw)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text


# --------------------------------------------------------------------------
# builders


def build_grid(cfg: RunConfig):
    return Grid(cfg.n_cells, kappa_left=cfg.kappa_left, kappa_right=cfg.kappa_right, dirichlet=cfg.dirichlet, d=cfg.d)


def build_laws(cfg: RunConfig):
    return LawBundle(
        material=make_material(cfg.material, cfg.material_params),
        hyper=PowerHyperstress(**cfg.hyperstress),
        visc=IsotropicViscosity(**cfg.viscosity),
        mobility=PowerMobility(**cfg.mobility),
    )


def build_diffusion_config(cfg: RunConfig):
    return DiffSolveConfig(eta=cfg.eta, theta=cfg.theta, **cfg.diff_solver)


def initial_deformation(cfg: RunConfig, grid):
    spec = dict(cfg.chi0)
    preset = spec.pop("preset", "identity")
    if preset == "identity":
        return grid.identity()
    if preset == "stretch":
        return float(spec.get("factor", 1.0)) * grid.identity()
    if preset == "values":
        v = np.asarray(spec["values"], float)
        if v.shape != (grid.n_cells + 1,):
            raise ValueError(f"chi0 values need {grid.n_cells + 1} nodal entries")
        return v
    raise ValueError(f"unknown chi0 preset {preset!r}; known: {CHI0_PRESETS}")


def initial_concentration(cfg: RunConfig, grid):
    spec = dict(cfg.c0)
    preset = spec.pop("preset", "constant")
    x = grid.centers
    if preset == "constant":
        return np.full(grid.n_cells, float(spec.get("value", 1.0)))
    if preset == "cosine":
        mean = float(spec.get("mean", 1.0))
        amp = float(spec.get("amplitude", 0.5))
        wn = float(spec.get("wavenumber", 1.0))
        return mean + amp * np.cos(wn * np.pi * x)
    if preset == "values":
        v = np.asarray(spec["values"], float)
        if v.shape != (grid.n_cells,):
            raise ValueError(f"c0 values need {grid.n_cells} cell entries")
        return v
    raise ValueError(f"unknown c0 preset {preset!r}; known: {C0_PRESETS}")


def step_load(cfg: RunConfig, k):
    t0, t1 = (k - 1) * cfg.tau, k * cfg.tau
    return Load(f=cfg.load_f.average(t0, t1), g=cfg.load_g.average(t0, t1))


def step_mu_ext(cfg: RunConfig, k):
    t0, t1 = (k - 1) * cfg.tau, k * cfg.tau
    return np.array([cfg.mu_ext_left.average(t0, t1), cfg.mu_ext_right.average(t0, t1)])


# --------------------------------------------------------------------------
# validation


def validate_config(config) -> list:
    """Structural preflight; an empty list means the run may start.

    Every message names the assumption clause or the configuration section
    it comes from.
    """
    if isinstance(config, dict):
        try:
            config = RunConfig.from_dict(config)
        except ConfigInvalid as exc:
            return list(exc.violations)
    cfg = config
    out = []
    d = cfg.d
    if d not in (1, 2, 3):
        return [f"grid: dimension d must be 1, 2 or 3 (got {d})"]
    if d != 1:
        out.append(f"grid: only d = 1 grids are implemented (got d = {d})")
    if cfg.n_cells < 4:
        out.append("grid: n_cells must be at least 4")
    if cfg.dirichlet not in ("left", "both"):
        out.append("grid: dirichlet must be 'left' or 'both'")
    if not (np.isfinite(cfg.T) and cfg.T > 0):
        out.append("time: T must be positive")
    if cfg.n_steps < 1:
        out.append("time: n_steps must be at least 1")

    if int(cfg.theta) != cfg.theta or cfg.theta < 1:
        out.append(f"regularization: theta must be a positive integer (got {cfg.theta})")
    elif not cfg.theta > d / 2:
        out.append(f"θ > d/2 required (θ = {cfg.theta}, d = {d})")
    if not cfg.eta > 0:
        out.append("regularization: eta must be positive")

    laws = None
    try:
        laws = build_laws(cfg)
    except (PoroviscError, TypeError, ValueError) as exc:
        out.append(f"material: {exc}")
    if laws is not None:
        out.extend(laws.profile.violations(d))

    if cfg.kappa_left < 0 or cfg.kappa_right < 0:
        out.append("(A7) kappa must be nonnegative")
    for name in ("mu_ext_left", "mu_ext_right", "load_f", "load_g"):
        fn = getattr(cfg, name)
        if not isinstance(fn, TimeFunction) or fn.preset not in TIME_PRESETS:
            out.append(f"{name}: unknown time preset")
        elif not all(np.isfinite(getattr(fn, k)) for k in ("value", "slope", "offset", "amplitude", "omega", "phase")):
            out.append(f"(A6) {name} must be finite and Lipschitz in time")

    try:
        DiffSolveConfig(eta=cfg.eta if cfg.eta > 0 else 1.0, theta=max(1, int(cfg.theta)), **cfg.diff_solver)
    except (TypeError, ValueError) as exc:
        out.append(f"solver.diffusion: {exc}")
    try:
        from .mechanics import MechSolveConfig

        MechSolveConfig(**cfg.mech_solver)
    except (TypeError, ValueError) as exc:
        out.append(f"solver.mechanics: {exc}")

    if d == 1 and cfg.n_cells >= 4 and cfg.dirichlet in ("left", "both"):
        out.extend(_initial_data_violations(cfg, laws))
    return out


def _initial_data_violations(cfg, laws):
    out = []
    try:
        grid = build_grid(cfg)
        chi0 = initial_deformation(cfg, grid)
        c0 = initial_concentration(cfg, grid)
    except (KeyError, ValueError, TypeError) as exc:
        return [f"(A8) initial data: {exc}"]
    J = grid.grad @ chi0
    if not np.all(np.isfinite(chi0)) or not np.min(J) > 0:
        out.append(f"(A8) det grad chi0 must be bounded below by a positive constant (min {np.min(J):.3g})")
    if not np.all(np.isfinite(c0)) or np.min(c0) < 0:
        out.append("(A8) c0 must be nonnegative and finite")
    if not np.allclose(chi0[grid.dirichlet_nodes], grid.nodes[grid.dirichlet_nodes], rtol=0, atol=1e-14):
        out.append("(A8) chi0 must equal the identity on the Dirichlet boundary")
    if not out and laws is not None:
        energy = np.sum(laws.material.phi(deformation_gradient(grid, chi0), c0))
        if not np.isfinite(energy):
            out.append("(A8) initial energy must be finite")
    return out


def require_valid(cfg):
    problems = validate_config(cfg)
    if problems:
        raise ConfigInvalid(problems)
    return cfg


# --------------------------------------------------------------------------
# stock configurations


def benchmark_config(**changes) -> RunConfig:
    """Biot 1-D benchmark: ramp end load, sinusoidal exchange on the right end."""
    cfg = RunConfig(
        n_cells=64, T=1.0, n_steps=128,
        material="biot", material_params={"M_B": 1.0, "beta": 1.0, "k": 1.0, "c_eq": 1.0},
        mobility={"m": 1.0, "M0": 1.0},
        kappa_left=0.0, kappa_right=1.0,
        mu_ext_right=TimeFunction("sine", amplitude=0.5, omega=2 * math.pi),
        load_g=TimeFunction("ramp", slope=0.2),
        eta=1e-4, theta=1,
        c0={"preset": "cosine", "mean": 1.0, "amplitude": 0.5, "wavenumber": 1.0},
    )
    return cfg.replace(**changes)


def equilibrium_config(**changes) -> RunConfig:
    """chi0 = id, c0 = c_eq, no load, mu_ext = 0: a stationary point of both steps."""
    cfg = benchmark_config(mu_ext_right=TimeFunction(), load_g=TimeFunction(),
                           c0={"preset": "constant", "value": 1.0})
    return cfg.replace(**changes)

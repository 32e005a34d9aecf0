"""Rayleigh-Benard convection runs: configuration, setup and time loop.

A run is described by a flat INI-style config file with sections
[mesh] [gas] [bc] [time] [output]; see ``RbConfig``.  The domain is the
x-periodic rectangle [0, Lx] x [0, Ly] heated from below.  The initial
data are the hydrostatic profiles

    T(z) = 1 + Z (1 - z),   rho(z) = T(z)**m,   p(z) = T(z)**(m+1),

with the polytropic index m tied to the Froude number by
m = 1/(Fr Z) - 1, plus a small compactly supported updraft bump.  The
nondimensional transport coefficients are mu = 1/(2 Re),
lambda = -mu (Stokes hypothesis) and kappa = gamma/((gamma-1) Re Pr);
the convection control parameter is

    Ra = Re**2 (m+1) Z**2 Pr (1 - (gamma-1) m) / gamma.

Boundary conditions on the temperature are either prescribed values
(ideally conducting plates, T = 1+Z below and 1 above), prescribed heat
flux -/+ kappa Z (poorly conducting plates; fluxes balance so energy is
still conserved), or insulated walls.

Each accepted step appends one CSV row
(time, energy, mass, entropy, kinetic_l2, energy_drift, mass_drift,
min_secondlaw_margin, boundary_flux) and optionally a legacy ASCII VTK
snapshot.  Assembly is sequential and deterministic: re-running a config
reproduces the CSV bitwise (fix BLAS threads for cross-run determinism,
see the CLI's --deterministic flag).
"""

import configparser
import io
import os
from dataclasses import dataclass, replace

import numpy as np

from . import diagnostics, gas as gaslib
from .errors import NonConvergenceError
from .forms import (Dirichlet, HeatParams, HomogeneousNeumann, Neumann,
                    ViscosityParams)
from .gas import GasParams
from .mesh import build_rectangle_mesh
from .spaces import Discretization
from .stepper import State, StepConfig, advance

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

SWEEP_RAYLEIGH_VALUES = (2000.0, 3000.0, 4000.0, 5000.0, 6000.0)


@dataclass
class RbConfig:
    """One convection experiment; defaults follow the base Ra = 4000 case."""

    gamma: float = 1.1
    Re: float = 100.0
    Pr: float = 2.5
    Z: float = 0.419524
    m: float = 0.0
    bc_kind: str = "dirichlet"      # dirichlet | neumann | insulated
    nx: int = 32
    ny: int = 16
    Lx: float = 2.0
    Ly: float = 1.0
    q: int = 1
    r: int = 2
    dt: float = 0.4
    t_end: float = 300.0
    newton_tol: float = 1e-12
    upwind: bool = True
    eta_factor: float = 0.01
    out_dir: str = "out"
    csv_name: str = "diagnostics.csv"
    snapshot_stride: int = 0        # 0 disables field snapshots

    def __post_init__(self):
        if self.bc_kind not in ("dirichlet", "neumann", "insulated"):
            raise ValueError(f"unknown bc kind {self.bc_kind!r}")
        if self.Z < 0:
            raise ValueError("temperature difference Z must be >= 0")

    @property
    def Fr(self):
        """Froude number from m = 1/(Fr Z) - 1; inf when Z = 0."""
        inv = (self.m + 1.0) * self.Z
        return np.inf if inv == 0.0 else 1.0 / inv

    @property
    def kappa(self):
        return self.gamma / ((self.gamma - 1.0) * self.Re * self.Pr)

    def gas_params(self):
        return GasParams(gamma=self.gamma, Re=self.Re, Pr=self.Pr,
                         Fr=self.Fr, Z=self.Z)

    def step_config(self):
        mu = 1.0 / (2.0 * self.Re)
        return StepConfig(
            gas=self.gas_params(),
            visc=ViscosityParams(mu=mu, lam=-mu),
            heat=HeatParams(kappa=self.kappa, eta=self.eta_factor * self.kappa),
            bc=self.boundary_condition(),
            dt=self.dt,
            newton_tol=self.newton_tol,
            upwind=self.upwind,
        )

    def boundary_condition(self):
        if self.bc_kind == "insulated":
            return HomogeneousNeumann()
        if self.bc_kind == "dirichlet":
            return Dirichlet(dirichlet_temperature(self))
        return Neumann(neumann_flux_data(self))

    def discretization(self):
        mesh = build_rectangle_mesh(self.nx, self.ny, self.Lx, self.Ly,
                                    periodic_x=True)
        return Discretization(mesh, q=self.q, r=self.r)


def rayleigh_number(cfg: RbConfig) -> float:
    """Ra = Re^2 (m+1) Z^2 Pr (1 - (gamma-1) m) / gamma."""
    return (cfg.Re ** 2 * (cfg.m + 1.0) * cfg.Z ** 2 * cfg.Pr
            * (1.0 - (cfg.gamma - 1.0) * cfg.m) / cfg.gamma)


def config_for_rayleigh(cfg: RbConfig, param: str, ra_target: float) -> RbConfig:
    """Vary exactly one of Re, m, Z, Pr to hit a target Rayleigh number."""
    base = rayleigh_number(cfg)
    ratio = ra_target / base
    if param == "re":
        return replace(cfg, Re=cfg.Re * np.sqrt(ratio))
    if param == "z":
        return replace(cfg, Z=cfg.Z * np.sqrt(ratio))
    if param == "pr":
        return replace(cfg, Pr=cfg.Pr * ratio)
    if param == "m":
        # (m+1)(1 - (gamma-1) m) = c, root continuous through the base m
        g1 = cfg.gamma - 1.0
        c = ra_target * cfg.gamma / (cfg.Re ** 2 * cfg.Z ** 2 * cfg.Pr)
        disc = (2.0 - cfg.gamma) ** 2 - 4.0 * g1 * (c - 1.0)
        if disc < 0:
            raise ValueError(f"no polytropic index reaches Ra = {ra_target}")
        m = ((2.0 - cfg.gamma) - np.sqrt(disc)) / (2.0 * g1)
        return replace(cfg, m=m)
    raise ValueError(f"unknown sweep parameter {param!r}")


def temperature_profile(cfg: RbConfig):
    return lambda z: 1.0 + cfg.Z * (1.0 - np.asarray(z))


def dirichlet_temperature(cfg: RbConfig):
    """Plate temperatures: 1 + Z at z = 0 and 1 at z = Ly."""
    Z, half = cfg.Z, 0.5 * cfg.Ly
    return lambda x: np.where(np.asarray(x)[:, 1] < half, 1.0 + Z, 1.0)


def neumann_flux_data(cfg: RbConfig):
    """Prescribed heat flux through the plates.

    q0 = -(1/Re)(1/Pr) gamma/(gamma-1) Z at the bottom and its negative
    at the top, matching the conductive flux of the initial temperature
    profile; the integrals over the two plates cancel.
    """
    mag = cfg.Z * cfg.gamma / ((cfg.gamma - 1.0) * cfg.Re * cfg.Pr)
    half = 0.5 * cfg.Ly
    return lambda x: np.where(np.asarray(x)[:, 1] < half, -mag, mag)


def velocity_bump(x):
    """Compactly supported updraft seeding the instability."""
    x = np.asarray(x)
    r2 = (x[:, 0] - 1.0) ** 2 + (x[:, 1] - 0.5) ** 2
    out = np.zeros(len(x))
    inside = r2 < 0.2
    out[inside] = np.exp(1.0 / (r2[inside] - 0.2))
    return np.stack([np.zeros(len(x)), out], axis=-1)


def initial_state(cfg: RbConfig, disc: Discretization) -> State:
    """Hydrostatic profiles plus the velocity bump.

    The entropy is the exact pointwise inversion of T(rho, s) along the
    profile, projected once; projecting log-compositions of already
    projected fields would sit further from hydrostatic balance.
    """
    gp = cfg.gas_params()
    z = disc.x_vol[:, :, 1]
    T = temperature_profile(cfg)(z)
    rho_exact = T ** cfg.m
    rho = disc.project_dg(rho_exact)
    s = disc.project_dg(gaslib.entropy_from_temperature(rho_exact, T, gp))
    u = disc.cg.interpolate(velocity_bump, zero_walls=True)
    return State(u, rho, s, 0.0)


def write_vtk_snapshot(path, state: State, gp):
    """Legacy ASCII VTK: point data T and u, cell data rho and s.

    Cell corners are written per cell (points are duplicated), which
    keeps discontinuous fields honest at cell interfaces.
    """
    disc = state.disc
    mesh = disc.mesh
    nc = mesh.n_cells
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    rho_c = np.stack([state.rho.evaluate(c, corners) for c in range(nc)])
    s_c = np.stack([state.s.evaluate(c, corners) for c in range(nc)])
    u_c = np.stack([state.u.evaluate(c, corners) for c in range(nc)])
    T_c = gaslib.temperature(rho_c, s_c, gp)
    areas = mesh.cell_areas()
    rho_mean = (disc.w_vol * disc.dg_vol_values(state.rho.coeffs)).sum(1) / areas
    s_mean = (disc.w_vol * disc.dg_vol_values(state.s.coeffs)).sum(1) / areas

    buf = io.StringIO()
    buf.write("# vtk DataFile Version 3.0\n")
    buf.write(f"fields at t={state.time:.17g}\n")
    buf.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
    buf.write(f"POINTS {3 * nc} double\n")
    for c in range(nc):
        for k in range(3):
            x, z = mesh.cell_coords[c, k]
            buf.write(f"{x:.17g} {z:.17g} 0\n")
    buf.write(f"CELLS {nc} {4 * nc}\n")
    for c in range(nc):
        buf.write(f"3 {3 * c} {3 * c + 1} {3 * c + 2}\n")
    buf.write(f"CELL_TYPES {nc}\n")
    buf.write("5\n" * nc)
    buf.write(f"POINT_DATA {3 * nc}\n")
    buf.write("SCALARS T double 1\nLOOKUP_TABLE default\n")
    for c in range(nc):
        for k in range(3):
            buf.write(f"{T_c[c, k]:.17g}\n")
    buf.write("VECTORS u double\n")
    for c in range(nc):
        for k in range(3):
            buf.write(f"{u_c[c, k, 0]:.17g} {u_c[c, k, 1]:.17g} 0\n")
    buf.write(f"CELL_DATA {nc}\n")
    buf.write("SCALARS rho double 1\nLOOKUP_TABLE default\n")
    for c in range(nc):
        buf.write(f"{rho_mean[c]:.17g}\n")
    buf.write("SCALARS s double 1\nLOOKUP_TABLE default\n")
    for c in range(nc):
        buf.write(f"{s_mean[c]:.17g}\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def load_config(path) -> RbConfig:
    """Parse a [mesh]/[gas]/[bc]/[time]/[output] key=value file."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ValueError(f"cannot read config file {path!r}")
    cfg = RbConfig()

    def get(section, key, cast, default):
        if parser.has_option(section, key):
            if cast is bool:
                return parser.getboolean(section, key)
            return cast(parser.get(section, key))
        return default

    cfg = RbConfig(
        nx=get("mesh", "nx", int, cfg.nx),
        ny=get("mesh", "ny", int, cfg.ny),
        Lx=get("mesh", "lx", float, cfg.Lx),
        Ly=get("mesh", "ly", float, cfg.Ly),
        q=get("mesh", "q", int, cfg.q),
        r=get("mesh", "r", int, cfg.r),
        gamma=get("gas", "gamma", float, cfg.gamma),
        Re=get("gas", "re", float, cfg.Re),
        Pr=get("gas", "pr", float, cfg.Pr),
        Z=get("gas", "z", float, cfg.Z),
        m=get("gas", "m", float, cfg.m),
        bc_kind=get("bc", "kind", str, cfg.bc_kind).strip().lower(),
        eta_factor=get("bc", "eta_factor", float, cfg.eta_factor),
        dt=get("time", "dt", float, cfg.dt),
        t_end=get("time", "t_end", float, cfg.t_end),
        newton_tol=get("time", "newton_tol", float, cfg.newton_tol),
        upwind=get("time", "upwind", bool, cfg.upwind),
        out_dir=get("output", "dir", str, cfg.out_dir),
        csv_name=get("output", "csv", str, cfg.csv_name),
        snapshot_stride=get("output", "snapshot_stride", int,
                            cfg.snapshot_stride),
    )
    return cfg


def _advance_with_retry(state, step_cfg, max_halvings=4):
    """One accepted step; halves dt for this step only, then gives up."""
    dt = step_cfg.dt
    last = None
    for attempt in range(max_halvings + 1):
        try:
            trial_cfg = replace(step_cfg, dt=dt)
            return advance(state, trial_cfg), dt
        except NonConvergenceError as exc:
            last = exc
            dt *= 0.5
    raise last


def run(cfg, out_dir=None, progress=None) -> int:
    """Execute a configured run; returns a process exit status.

    ``cfg`` is an RbConfig or a path to a config file.  Writes one CSV
    row per accepted step (plus the t = 0 row) and, if configured, VTK
    snapshots every ``snapshot_stride`` accepted steps.
    """
    try:
        if not isinstance(cfg, RbConfig):
            cfg = load_config(cfg)
        if out_dir is not None:
            cfg = replace(cfg, out_dir=str(out_dir))
    except (ValueError, KeyError, configparser.Error) as exc:
        print(f"config error: {exc}")
        return EXIT_CONFIG

    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
        csv_path = os.path.join(cfg.out_dir, cfg.csv_name)
        disc = cfg.discretization()
        step_cfg = cfg.step_config()
        state = initial_state(cfg, disc)
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}")
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}")
        return EXIT_IO

    gp = step_cfg.gas
    e0 = diagnostics.total_energy(state, gp)
    m0 = diagnostics.total_mass(state)

    try:
        fh = open(csv_path, "w")
    except OSError as exc:
        print(f"i/o error: {exc}")
        return EXIT_IO

    steps = 0
    try:
        fh.write(diagnostics.DiagRecord.CSV_HEADER + "\n")
        fh.write(diagnostics.initial_record(state, step_cfg).csv_row() + "\n")
        if cfg.snapshot_stride:
            write_vtk_snapshot(
                os.path.join(cfg.out_dir, f"snap_{steps:06d}.vtk"), state, gp)
        t_final = cfg.t_end * (1.0 - 1e-12)
        while state.time < t_final:
            dt_left = cfg.t_end - state.time
            this_cfg = (step_cfg if dt_left >= step_cfg.dt
                        else replace(step_cfg, dt=dt_left))
            new_state, dt_used = _advance_with_retry(state, this_cfg)
            rec = diagnostics.record(state, new_state, this_cfg, e0, m0)
            fh.write(rec.csv_row() + "\n")
            fh.flush()
            state = new_state
            steps += 1
            if cfg.snapshot_stride and steps % cfg.snapshot_stride == 0:
                write_vtk_snapshot(
                    os.path.join(cfg.out_dir, f"snap_{steps:06d}.vtk"),
                    state, gp)
            if progress is not None:
                progress(state, rec)
    except NonConvergenceError as exc:
        print(f"solver failure at t = {state.time:.6g} after {steps} steps: "
              f"{exc}")
        fh.close()
        return EXIT_SOLVER
    except OSError as exc:
        print(f"i/o error: {exc}")
        fh.close()
        return EXIT_IO
    fh.close()

    rec = diagnostics.record(state, state, step_cfg, e0, m0) if steps == 0 \
        else rec
    print(f"completed {steps} steps to t = {state.time:.6g}; "
          f"Ra = {rayleigh_number(cfg):.6g}, "
          f"|energy drift| = {abs(rec.energy_drift):.3e}, "
          f"|mass drift| = {abs(rec.mass_drift):.3e}, "
          f"kinetic L2 = {rec.kinetic_l2:.6e}")
    return EXIT_OK


def run_sweep(cfg: RbConfig, param: str, out_dir=None,
              ra_values=SWEEP_RAYLEIGH_VALUES) -> int:
    """Run the onset suite varying one parameter; one subdirectory each."""
    base = out_dir if out_dir is not None else cfg.out_dir
    status = EXIT_OK
    for ra in ra_values:
        sub = os.path.join(base, f"sweep_{param}_ra{int(round(ra))}")
        try:
            cfg_ra = config_for_rayleigh(cfg, param, ra)
        except ValueError as exc:
            print(f"config error: {exc}")
            return EXIT_CONFIG
        code = run(cfg_ra, out_dir=sub)
        status = max(status, code)
    return status

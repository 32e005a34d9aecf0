"""Conserved and monitored functionals of the flow.

Every functional here uses the discretization's own quadrature rule.
The stepper's balance statements (exact mass conservation, energy
balance against the boundary-data form, per-cell entropy production)
are quadrature-level identities, so evaluating the functionals with any
other rule would spoil the machine-precision checks.
"""

from dataclasses import dataclass

import numpy as np

from . import gas as gaslib
from .fields import ScalarQP
from .forms import HomogeneousNeumann, form_e
from .stepper import State, StepConfig, _StepAssembler


def total_mass(state: State) -> float:
    disc = state.disc
    return float(np.sum(disc.w_vol * disc.dg_vol_values(state.rho.coeffs)))


def total_entropy(state: State) -> float:
    disc = state.disc
    return float(np.sum(disc.w_vol * disc.dg_vol_values(state.s.coeffs)))


def total_energy(state: State, gp) -> float:
    """Total energy: kinetic + internal + gravitational."""
    disc = state.disc
    r = disc.dg_vol_values(state.rho.coeffs)
    s = disc.dg_vol_values(state.s.coeffs)
    u = disc.cg_vol_values(state.u.coeffs)
    dens = (0.5 * r * np.einsum("cqk,cqk->cq", u, u)
            + gaslib.epsilon(r, s, gp) + r * gp.phi(disc.x_vol))
    return float(np.sum(disc.w_vol * dens))


def kinetic_l2(state: State) -> float:
    """Plain L2 norm of the velocity field."""
    disc = state.disc
    u = disc.cg_vol_values(state.u.coeffs)
    return float(np.sqrt(np.sum(disc.w_vol * np.einsum("cqk,cqk->cq", u, u))))


def kinetic_rho_weighted(state: State) -> float:
    """Density-weighted kinetic norm sqrt(int rho |u|^2)."""
    disc = state.disc
    r = disc.dg_vol_values(state.rho.coeffs)
    u = disc.cg_vol_values(state.u.coeffs)
    return float(np.sqrt(np.sum(disc.w_vol * r
                                * np.einsum("cqk,cqk->cq", u, u))))


def monitored_cells(disc, bc):
    """Cells whose entropy production is certified nonnegative.

    All cells when insulated; otherwise cells owning no boundary edge
    (periodic seam cells count as interior).
    """
    if isinstance(bc, HomogeneousNeumann):
        return np.arange(disc.mesh.n_cells)
    return np.where(~disc.mesh.cells_touching_boundary())[0]


def second_law_margins(state_k: State, state_next: State, cfg: StepConfig):
    """Per-cell entropy production of one accepted step.

    Returns (cells, margins, scales): for each monitored cell K the
    value of the entropy equation's left side tested with the indicator
    of K, and a natural magnitude against which to judge round-off.
    Margins of an accepted step are nonnegative up to solver tolerance.
    """
    disc = state_k.disc
    asm = _StepAssembler(disc, cfg, state_k)
    _, _, lhs, rhs = asm.blocks(state_next.u.coeffs, state_next.rho.coeffs,
                                state_next.s.coeffs)
    nb = disc.dg.n_local
    per_cell_lhs = lhs.reshape(-1, nb).sum(axis=1)
    per_cell_rhs = rhs.reshape(-1, nb).sum(axis=1)
    cells = monitored_cells(disc, cfg.bc)
    scale = (np.abs(per_cell_lhs) + np.abs(per_cell_rhs))[cells]
    return cells, per_cell_lhs[cells], scale


def boundary_energy_flux(state_k: State, state_next: State, cfg: StepConfig):
    """e(1, D2) of the step: the rate at which energy leaves the domain."""
    disc = state_k.disc
    _, D2 = gaslib.discrete_gradients(state_k, state_next, disc.dg, cfg.gas)
    return form_e(cfg.bc, 1.0, ScalarQP.from_dg(D2), cfg.heat)


@dataclass
class DiagRecord:
    """One row of the run log."""

    time: float
    total_energy: float
    total_mass: float
    total_entropy: float
    kinetic_l2: float
    energy_drift: float
    mass_drift: float
    min_second_law_margin: float
    boundary_energy_flux: float
    kinetic_rho_weighted: float  # in-memory extra, not part of the CSV row

    CSV_HEADER = ("time,energy,mass,entropy,kinetic_l2,energy_drift,"
                  "mass_drift,min_secondlaw_margin,boundary_flux")

    def csv_row(self):
        vals = (self.time, self.total_energy, self.total_mass,
                self.total_entropy, self.kinetic_l2, self.energy_drift,
                self.mass_drift, self.min_second_law_margin,
                self.boundary_energy_flux)
        return ",".join(f"{v:.17g}" for v in vals)


def record(state_k: State, state_next: State, cfg: StepConfig,
           energy_ref: float, mass_ref: float) -> DiagRecord:
    """Diagnostics for one accepted step (state_k -> state_next)."""
    gp = cfg.gas
    e = total_energy(state_next, gp)
    m = total_mass(state_next)
    _, margins, _ = second_law_margins(state_k, state_next, cfg)
    return DiagRecord(
        time=state_next.time,
        total_energy=e,
        total_mass=m,
        total_entropy=total_entropy(state_next),
        kinetic_l2=kinetic_l2(state_next),
        energy_drift=e - energy_ref,
        mass_drift=m - mass_ref,
        min_second_law_margin=float(margins.min()) if len(margins) else 0.0,
        boundary_energy_flux=boundary_energy_flux(state_k, state_next, cfg),
        kinetic_rho_weighted=kinetic_rho_weighted(state_next),
    )


def initial_record(state: State, cfg: StepConfig) -> DiagRecord:
    """The t = 0 row; drifts, margins and fluxes are zero by definition."""
    gp = cfg.gas
    return DiagRecord(
        time=state.time,
        total_energy=total_energy(state, gp),
        total_mass=total_mass(state),
        total_entropy=total_entropy(state),
        kinetic_l2=kinetic_l2(state),
        energy_drift=0.0,
        mass_drift=0.0,
        min_second_law_margin=0.0,
        boundary_energy_flux=0.0,
        kinetic_rho_weighted=kinetic_rho_weighted(state),
    )

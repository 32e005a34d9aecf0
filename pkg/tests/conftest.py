import numpy as np
import pytest

from thermofem.forms import HeatParams, ViscosityParams
from thermofem.gas import GasParams
from thermofem.mesh import build_rectangle_mesh
from thermofem.spaces import Discretization
from thermofem.stepper import State


@pytest.fixture(scope="module")
def disc_4x2():
    """Periodic 4 x 2 discretization on [0, 2] x [0, 1] with DG1/CG2."""
    return Discretization(build_rectangle_mesh(4, 2, 2.0, 1.0,
                                               periodic_x=True), q=1, r=2)


@pytest.fixture(scope="module")
def disc_4x2_wall():
    """Non-periodic counterpart (left/right walls become boundary)."""
    return Discretization(build_rectangle_mesh(4, 2, 2.0, 1.0,
                                               periodic_x=False), q=1, r=2)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def make_gas(gamma=1.1, Re=100.0, Pr=2.5, Fr=np.inf, Z=0.0):
    return GasParams(gamma=gamma, Re=Re, Pr=Pr, Fr=Fr, Z=Z)


def stokes_viscosity(Re=100.0):
    mu = 1.0 / (2.0 * Re)
    return ViscosityParams(mu=mu, lam=-mu)


def heat_for(gp, eta_factor=0.01):
    return HeatParams(kappa=gp.kappa, eta=eta_factor * gp.kappa)


def random_state(disc, rng, u_scale=0.01, rho_dev=0.2, s_dev=0.2, time=0.0):
    """Random physical state: positive density, no-slip velocity."""
    u = disc.cg.function(u_scale * rng.standard_normal(disc.cg.n_dofs))
    nsc = disc.cg.n_scalar
    u.coeffs[:nsc][disc.cg.wall_mask] = 0.0
    u.coeffs[nsc:][disc.cg.wall_mask] = 0.0
    rho = disc.dg.function(1.0 + rho_dev * rng.uniform(-1, 1, disc.dg.n_dofs))
    s = disc.dg.function(s_dev * rng.uniform(-1, 1, disc.dg.n_dofs))
    return State(u, rho, s, time)


def interior_weight(disc, rng):
    """Random w >= 0 vanishing on every cell touching the boundary."""
    w = rng.uniform(0.0, 1.0, (disc.mesh.n_cells, disc.dg.n_local))
    w[disc.mesh.cells_touching_boundary()] = 0.0
    return disc.dg.function(w.ravel())

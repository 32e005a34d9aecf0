"""Trilinear forms of the discrete scheme.

All forms are plain quadrature sums over the tables of a single
Discretization:

* ``form_a``  -- antisymmetric transport form  -int w . [u, v] dx  with
  the vector-field bracket [u, v] = (u . grad) v - (v . grad) u;
* ``form_b``  -- DG scalar advection form
  -sum_K int (v . grad f) g dx + sum_e int (v . n) [[f]] {g} da;
* ``form_b_upwind`` -- adds the jump-penalizing upwind term
  (1/pi) arctan(10 u.n) (v.n) [[f]].[[g]] per interior edge, the bounded
  rewrite of beta_e(u) (v.n)/(u.n) that is exact wherever u.n != 0;
* ``form_c``  -- viscous dissipation  int w sigma(u) : grad v dx  with
  sigma(u) = 2 mu Def u + lambda (div u) I;
* ``form_d`` / ``form_e`` -- non-symmetric interior penalty heat forms,
  weighted by w/f, in three boundary-condition variants.

Jumps use the first cell's unit normal: [[f]].[[g]] = (f1-f2)(g1-g2) and
(v.n)[[f]] contractions are written accordingly.  Scalar slots accept DG
FeFunctions, quadrature-point fields, callables or constants; vector
slots accept CG FeFunctions, fields, callables or constant 2-vectors.
"""

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import PositivityError
from .fields import ScalarQP, VectorQP, as_scalar_qp, as_vector_qp, find_disc


@dataclass(frozen=True)
class ViscosityParams:
    """Shear/second viscosity; requires mu >= 0 and lambda + (2/d) mu >= 0."""

    mu: float
    lam: float
    d: int = 2

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if self.lam + (2.0 / self.d) * self.mu < -1e-15:
            raise ValueError(
                f"bulk viscosity lambda + (2/d) mu = "
                f"{self.lam + 2 / self.d * self.mu} must be >= 0")


@dataclass(frozen=True)
class HeatParams:
    """Thermal conductivity and interior penalty parameter."""

    kappa: float
    eta: float

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if self.eta <= 0:
            raise ValueError(f"penalty eta must be > 0, got {self.eta}")


@dataclass(frozen=True)
class HomogeneousNeumann:
    """Insulated boundary: no flux terms, no boundary data."""


@dataclass(frozen=True)
class Dirichlet:
    """Prescribed boundary temperature T0(x) > 0."""

    T0: Callable


@dataclass(frozen=True)
class Neumann:
    """Prescribed heat flux q0(x) through the boundary (outward normal)."""

    q0: Callable


BoundaryCondition = Union[HomogeneousNeumann, Dirichlet, Neumann]


def _check_positive(values, what, where):
    values = np.asarray(values)
    if values.size == 0:
        return
    mn = float(values.min())
    if mn <= 0.0:
        per_entity = values.reshape(values.shape[0], -1).min(axis=1)
        raise PositivityError(what, where, int(per_entity.argmin()), mn)


def _bnd_data(fn, disc):
    vals = np.asarray(fn(disc.x_be.reshape(-1, 2)), float)
    return vals.reshape(disc.mesh.n_boundary_edges, disc.quad.n_edge)


def form_a(w, u, v) -> float:
    """-int w . [u, v] dx; antisymmetric in (u, v)."""
    disc = find_disc(w, u, v)
    w = as_vector_qp(w, disc)
    u = as_vector_qp(u, disc)
    v = as_vector_qp(v, disc)
    bracket = (np.einsum("cqj,cqij->cqi", u.vol, v.gvol)
               - np.einsum("cqj,cqij->cqi", v.vol, u.gvol))
    return -float(np.einsum("cq,cqi,cqi->", disc.w_vol, w.vol, bracket))


def _upwind_factor(u_n):
    """Bounded upwind weight: beta_e(u)/(u.n) = (1/pi) arctan(10 u.n)."""
    return np.arctan(10.0 * u_n) / np.pi


def form_b(f, g, v, u_upwind=None) -> float:
    """DG advection form; optionally upwinded against ``u_upwind``."""
    disc = find_disc(f, g, v, u_upwind)
    f = as_scalar_qp(f, disc)
    g = as_scalar_qp(g, disc)
    v = as_vector_qp(v, disc)
    val = -float(np.einsum("cq,cqi,cqi,cq->",
                           disc.w_vol, v.vol, f.gvol, g.vol))
    if disc.mesh.n_interior_edges:
        n1 = disc.mesh.ie_normal
        v_n = np.einsum("epi,ei->ep", v.e, n1)
        jump_f = f.e1 - f.e2
        avg_g = 0.5 * (g.e1 + g.e2)
        val += float(np.sum(disc.ie_w * v_n * jump_f * avg_g))
        if u_upwind is not None:
            u = as_vector_qp(u_upwind, disc)
            u_n = np.einsum("epi,ei->ep", u.e, n1)
            val += float(np.sum(disc.ie_w * _upwind_factor(u_n) * v_n
                                * jump_f * (g.e1 - g.e2)))
    return val


def form_b_upwind(u_adv, f, g, v) -> float:
    return form_b(f, g, v, u_upwind=u_adv)


def form_c(w, u, v, p: ViscosityParams) -> float:
    """int w sigma(u) : grad v dx with sigma(u) = 2 mu Def u + lambda div u I."""
    disc = find_disc(w, u, v)
    w = as_scalar_qp(w, disc)
    u = as_vector_qp(u, disc)
    v = as_vector_qp(v, disc)
    def_u = 0.5 * (u.gvol + u.gvol.swapaxes(-1, -2))
    def_v = 0.5 * (v.gvol + v.gvol.swapaxes(-1, -2))
    div_u = u.gvol[..., 0, 0] + u.gvol[..., 1, 1]
    div_v = v.gvol[..., 0, 0] + v.gvol[..., 1, 1]
    dens = (2.0 * p.mu * np.einsum("cqij,cqij->cq", def_u, def_v)
            + p.lam * div_u * div_v)
    return float(np.sum(disc.w_vol * w.vol * dens))


def form_d(bc: BoundaryCondition, w, f, g, hp: HeatParams) -> float:
    """Weighted non-symmetric interior penalty form; variant set by ``bc``.

    Requires f > 0 at every volume point, every interior-edge average,
    and (for Dirichlet/Neumann variants) every boundary trace; violations
    raise PositivityError with the offending location.
    """
    disc = find_disc(w, f, g)
    w = as_scalar_qp(w, disc)
    f = as_scalar_qp(f, disc)
    g = as_scalar_qp(g, disc)
    kappa, eta = hp.kappa, hp.eta

    _check_positive(f.vol, "temperature", "cell")
    val = -float(np.einsum("cq,cq,cqi,cqi->", disc.w_vol,
                           w.vol / f.vol * kappa, f.gvol, g.gvol))

    if disc.mesh.n_interior_edges:
        n1 = disc.mesh.ie_normal
        favg = 0.5 * (f.e1 + f.e2)
        _check_positive(favg, "edge-average temperature", "interior_edge")
        jump_f = f.e1 - f.e2
        jump_g = g.e1 - g.e2
        wkdf = 0.5 * kappa * (np.einsum("ep,epi,ei->ep", w.e1, f.ge1, n1)
                              + np.einsum("ep,epi,ei->ep", w.e2, f.ge2, n1))
        wkdg = 0.5 * kappa * (np.einsum("ep,epi,ei->ep", w.e1, g.ge1, n1)
                              + np.einsum("ep,epi,ei->ep", w.e2, g.ge2, n1))
        wavg = 0.5 * (w.e1 + w.e2)
        pen = (eta / disc.mesh.ie_length)[:, None]
        val += float(np.sum(disc.ie_w / favg
                            * (wkdf * jump_g - wkdg * jump_f
                               - pen * wavg * jump_f * jump_g)))

    if isinstance(bc, HomogeneousNeumann) or disc.mesh.n_boundary_edges == 0:
        return val

    _check_positive(f.b, "boundary temperature", "boundary_edge")
    df_n = np.einsum("bpi,bi->bp", f.gb, disc.mesh.be_normal)
    if isinstance(bc, Neumann):
        val += float(np.sum(disc.be_w * w.b / f.b * kappa * df_n * g.b))
        return val
    # Dirichlet: consistency, symmetrization and data terms
    T0 = _bnd_data(bc.T0, disc)
    _check_positive(T0, "Dirichlet temperature data", "boundary_edge")
    dg_n = np.einsum("bpi,bi->bp", g.gb, disc.mesh.be_normal)
    val += float(np.sum(disc.be_w * w.b / f.b * kappa
                        * (df_n * g.b - dg_n * (f.b - T0))))
    return val


def form_e(bc: BoundaryCondition, w, f, hp: HeatParams) -> float:
    """Boundary-data form paired with ``form_d``; zero when insulated."""
    if isinstance(bc, HomogeneousNeumann):
        return 0.0
    disc = find_disc(w, f)
    w = as_scalar_qp(w, disc)
    f = as_scalar_qp(f, disc)
    if disc.mesh.n_boundary_edges == 0:
        return 0.0
    if isinstance(bc, Neumann):
        q0 = _bnd_data(bc.q0, disc)
        return float(np.sum(disc.be_w * w.b * q0))
    T0 = _bnd_data(bc.T0, disc)
    _check_positive(T0, "Dirichlet temperature data", "boundary_edge")
    _check_positive(f.b, "boundary temperature", "boundary_edge")
    df_n = np.einsum("bpi,bi->bp", f.gb, disc.mesh.be_normal)
    pen = (hp.eta / disc.mesh.be_length)[:, None]
    return float(np.sum(disc.be_w * (-w.b / f.b * hp.kappa * df_n * T0
                                     + pen * w.b * (f.b - T0))))


def entropy_rhs(bc: BoundaryCondition, w, T, hp: HeatParams) -> float:
    """Heat-conduction contribution to the entropy equation right side."""
    return form_d(bc, w, T, T, hp) + form_e(bc, w, T, hp)

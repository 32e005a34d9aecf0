"""Fully implicit time step for the coupled (u, rho, s) system.

One step solves the nonlinear system

  <D_dt(rho u), v> + a((rho u)_mid, u_mid, v)
      + b(K - D1 - phi_h, rho_mid, v) - b(D2, s_mid, v) + c(1, u_mid, v) = 0
  <D_dt rho, theta> + b(theta, rho_mid, u_mid) = 0
  <D_dt s, D2 theta> + b(D2 theta, s_mid, u_mid) - d(1, D2, D2 theta)
      - c(theta, u_mid, u_mid) + d(theta, D2, D2) + e(theta, D2) = 0

for all test functions, where K = pi_h(u_k . u_next)/2, phi_h = pi_h phi,
and (D1, D2) are the projected averaged difference quotients of the
internal energy (see gas.discrete_gradients).  With upwinding enabled
every advection form b gains the jump penalty of forms.form_b_upwind,
advected by u_mid.  Solving this system exactly conserves total mass,
satisfies the discrete energy balance (E_next - E_k)/dt = -e(1, D2), and
produces nonnegative per-cell entropy, all up to the solver tolerance.

Newton's method uses a finite-difference Jacobian compressed by
structurally-orthogonal column groups (distance-2 coloring of the dof
interaction graph) and a sparse direct factorization.  After reaching
the requested tolerance a few extra iterations run while they still
reduce the residual, so accepted steps typically sit at the round-off
floor; the conservation identities inherit that accuracy.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import gas as gaslib
from .errors import NonConvergenceError, PositivityError
from .fields import ScalarQP, VectorQP
from .forms import (BoundaryCondition, Dirichlet, HeatParams,
                    HomogeneousNeumann, Neumann, ViscosityParams,
                    _bnd_data, _check_positive, _upwind_factor)
from .gas import GasParams
from .spaces import FeFunction


@dataclass
class State:
    """Velocity (CG vector), density and entropy (DG) at one time level."""

    u: FeFunction
    rho: FeFunction
    s: FeFunction
    time: float = 0.0

    @property
    def disc(self):
        return self.rho.space.disc

    def copy(self):
        return State(self.u.copy(), self.rho.copy(), self.s.copy(), self.time)


@dataclass
class StepConfig:
    gas: GasParams
    visc: ViscosityParams
    heat: HeatParams
    bc: BoundaryCondition = field(default_factory=HomogeneousNeumann)
    dt: float = 0.4
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    line_search: bool = True
    upwind: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")


@dataclass
class Residual:
    """Raw residual blocks; momentum rows span the wall-free velocity dofs."""

    momentum: np.ndarray
    mass: np.ndarray
    entropy: np.ndarray

    def packed(self):
        return np.concatenate([self.momentum, self.mass, self.entropy])

    @property
    def norm(self):
        return float(np.abs(self.packed()).max())


# ----------------------------------------------------------------------
# assembly kernels: accumulate linear functionals against test bases
# ----------------------------------------------------------------------

def _dg_vec(disc, Aval=None, Agrad=None):
    out = 0.0
    if Aval is not None:
        out = Aval @ disc.dg_v
    if Agrad is not None:
        out = out + np.einsum("cqi,cqbi->cb", Agrad, disc.dg_g)
    return np.asarray(out).ravel()


def _dg_edge_vec(disc, out, side, Aval=None, Agrad=None):
    cells = disc.mesh.ie_cells[:, side - 1]
    tab = disc.dg_e1 if side == 1 else disc.dg_e2
    gtab = disc.dg_ge1 if side == 1 else disc.dg_ge2
    loc = 0.0
    if Aval is not None:
        loc = np.einsum("ep,epb->eb", Aval, tab)
    if Agrad is not None:
        loc = loc + np.einsum("epi,epbi->eb", Agrad, gtab)
    nb = disc.dg.n_local
    idx = (cells[:, None] * nb + np.arange(nb)).ravel()
    out += np.bincount(idx, weights=np.asarray(loc).ravel(),
                       minlength=disc.dg.n_dofs)


def _dg_bnd_vec(disc, out, Aval=None, Agrad=None):
    loc = 0.0
    if Aval is not None:
        loc = np.einsum("bp,bpa->ba", Aval, disc.dg_b)
    if Agrad is not None:
        loc = loc + np.einsum("bpi,bpai->ba", Agrad, disc.dg_gb)
    nb = disc.dg.n_local
    idx = (disc.mesh.be_cell[:, None] * nb + np.arange(nb)).ravel()
    out += np.bincount(idx, weights=np.asarray(loc).ravel(),
                       minlength=disc.dg.n_dofs)


def _cg_vec(disc, out, Aval=None, Agrad=None):
    loc = 0.0
    if Aval is not None:
        loc = np.einsum("cqk,qb->cbk", Aval, disc.cg_v)
    if Agrad is not None:
        loc = loc + np.einsum("cqkj,cqbj->cbk", Agrad, disc.cg_g)
    dm = disc.cg.dofmap
    nsc = disc.cg.n_scalar
    for k in (0, 1):
        out += np.bincount(dm.ravel() + k * nsc,
                           weights=loc[:, :, k].ravel(),
                           minlength=2 * nsc)


def _cg_edge_vec(disc, out, Aval):
    loc = np.einsum("epk,epb->ebk", Aval, disc.cg_e1)
    dm = disc.cg.dofmap[disc.mesh.ie_cells[:, 0]]
    nsc = disc.cg.n_scalar
    for k in (0, 1):
        out += np.bincount(dm.ravel() + k * nsc,
                           weights=loc[:, :, k].ravel(),
                           minlength=2 * nsc)


def _phi_projection(disc, gp: GasParams):
    key = ("phi_dg", gp.inv_fr)
    if key not in disc._caches:
        vals = gp.phi(disc.x_vol)
        disc._caches[key] = disc.project_dg(vals)
    return disc._caches[key]


class _StepAssembler:
    """Residual assembly for one step, with the old state precomputed."""

    def __init__(self, disc, cfg: StepConfig, state_k: State):
        self.disc = disc
        self.cfg = cfg
        self.state_k = state_k
        self.rho0 = ScalarQP.from_dg(state_k.rho)
        self.s0 = ScalarQP.from_dg(state_k.s)
        self.u0 = VectorQP.from_cg(state_k.u)
        gaslib._check_density(self.rho0.vol)
        self.phi_dg = _phi_projection(disc, cfg.gas)
        bc = cfg.bc
        self.T0_b = _bnd_data(bc.T0, disc) if isinstance(bc, Dirichlet) else None
        self.q0_b = _bnd_data(bc.q0, disc) if isinstance(bc, Neumann) else None
        if self.T0_b is not None:
            _check_positive(self.T0_b, "Dirichlet temperature data",
                            "boundary_edge")
        self.free = disc.cg.free_dofs
        self.n_free = len(self.free)
        self.n_dg = disc.dg.n_dofs

    # -- packing -------------------------------------------------------
    def pack(self, state: State):
        return np.concatenate([state.u.coeffs[self.free],
                               state.rho.coeffs, state.s.coeffs])

    def unpack(self, z):
        disc = self.disc
        u = np.zeros(disc.cg.n_dofs)
        u[self.free] = z[:self.n_free]
        rho = z[self.n_free:self.n_free + self.n_dg]
        s = z[self.n_free + self.n_dg:]
        return u, rho, s

    def state_from(self, z, time):
        u, rho, s = self.unpack(z)
        disc = self.disc
        return State(FeFunction(disc.cg, u), FeFunction(disc.dg, rho),
                     FeFunction(disc.dg, s), time)

    # -- residual ------------------------------------------------------
    def residual_packed(self, z):
        u, rho, s = self.unpack(z)
        mom, mass, ds_lhs, ds_rhs = self.blocks(u, rho, s)
        return np.concatenate([mom[self.free], mass, ds_lhs - ds_rhs])

    def blocks(self, u_coeffs, rho_coeffs, s_coeffs):
        """Momentum/mass vectors plus the entropy equation's two sides."""
        disc, cfg = self.disc, self.cfg
        gp, dt = cfg.gas, cfg.dt
        mu, lam = cfg.visc.mu, cfg.visc.lam
        kappa, eta = cfg.heat.kappa, cfg.heat.eta
        W = disc.w_vol

        rho1 = ScalarQP.from_dg(FeFunction(disc.dg, rho_coeffs))
        s1 = ScalarQP.from_dg(FeFunction(disc.dg, s_coeffs))
        u1 = VectorQP.from_cg(FeFunction(disc.cg, u_coeffs))
        gaslib._check_density(rho1.vol)

        rho_m = 0.5 * (self.rho0 + rho1)
        s_m = 0.5 * (self.s0 + s1)
        u_m = 0.5 * (self.u0 + u1)

        # discrete-gradient energy derivatives and pi_h(u0 . u1)/2
        d1, d2 = gaslib.averaged_quotients(self.rho0.vol, rho1.vol,
                                           self.s0.vol, s1.vol, gp)
        D2 = disc.project_dg(d2)
        kin = np.einsum("cqk,cqk->cq", self.u0.vol, u1.vol)
        F_coeffs = (0.5 * disc.project_dg(kin).coeffs
                    - disc.project_dg(d1).coeffs - self.phi_dg.coeffs)
        F = ScalarQP.from_dg(FeFunction(disc.dg, F_coeffs))
        T = ScalarQP.from_dg(D2)
        _check_positive(T.vol, "temperature", "cell")

        gradu = u_m.gvol
        def_u = 0.5 * (gradu + gradu.swapaxes(-1, -2))
        div_u = gradu[..., 0, 0] + gradu[..., 1, 1]

        # ---------- momentum -------------------------------------------
        ru1 = rho1.vol[..., None] * u1.vol
        ru0 = self.rho0.vol[..., None] * self.u0.vol
        w_mid = 0.5 * (ru0 + ru1)
        Aval = W[..., None] * (ru1 - ru0) / dt
        Aval += W[..., None] * np.einsum("cqi,cqik->cqk", w_mid, gradu)
        Aval -= W[..., None] * rho_m.vol[..., None] * F.gvol
        Aval += W[..., None] * s_m.vol[..., None] * T.gvol
        Agrad = -W[..., None, None] * w_mid[..., :, None] * u_m.vol[..., None, :]
        Agrad += W[..., None, None] * 2.0 * mu * def_u
        Agrad[..., 0, 0] += W * lam * div_u
        Agrad[..., 1, 1] += W * lam * div_u
        mom = np.zeros(disc.cg.n_dofs)
        _cg_vec(disc, mom, Aval, Agrad)

        # ---------- mass ------------------------------------------------
        mass_Aval = W * (rho1.vol - self.rho0.vol) / dt
        mass_Agrad = -(W * rho_m.vol)[..., None] * u_m.vol
        mass = _dg_vec(disc, mass_Aval, mass_Agrad)

        # ---------- entropy: left side ---------------------------------
        ds_Aval = W * (s1.vol - self.s0.vol) / dt * T.vol
        udT = np.einsum("cqk,cqk->cq", u_m.vol, T.gvol)
        ds_Aval -= W * s_m.vol * udT
        ds_Agrad = -(W * s_m.vol * T.vol)[..., None] * u_m.vol
        # -d(1, T, T theta): volume part (negated interior penalty form)
        gT2 = np.einsum("cqi,cqi->cq", T.gvol, T.gvol)
        ds_Aval += W * kappa * gT2 / T.vol
        ds_Agrad += (W * kappa)[..., None] * T.gvol
        ds_lhs = _dg_vec(disc, ds_Aval, ds_Agrad)

        # ---------- entropy: right side  c - d(theta,T,T) - e(theta,T) --
        rhs_Aval = W * (2.0 * mu * np.einsum("cqij,cqij->cq", def_u, def_u)
                        + lam * div_u * div_u)
        rhs_Aval += W * kappa * gT2 / T.vol  # -(volume part of d(theta,T,T))
        ds_rhs = _dg_vec(disc, rhs_Aval)

        # ---------- interior edge contributions ------------------------
        if disc.mesh.n_interior_edges:
            n1 = disc.mesh.ie_normal
            iw = disc.ie_w
            pen = eta / disc.mesh.ie_length[:, None]
            u_n = np.einsum("epi,ei->ep", u_m.e, n1)

            Tavg = 0.5 * (T.e1 + T.e2)
            _check_positive(Tavg, "edge-average temperature", "interior_edge")
            jT = T.e1 - T.e2
            dTn1 = np.einsum("epi,ei->ep", T.ge1, n1)
            dTn2 = np.einsum("epi,ei->ep", T.ge2, n1)

            # momentum: edge parts of b(F, rho_m, v) - b(T, s_m, v)
            mom_e = iw * ((F.e1 - F.e2) * 0.5 * (rho_m.e1 + rho_m.e2)
                          - jT * 0.5 * (s_m.e1 + s_m.e2))
            if cfg.upwind:
                upf = iw * _upwind_factor(u_n)
                mom_e += upf * ((F.e1 - F.e2) * (rho_m.e1 - rho_m.e2)
                                - jT * (s_m.e1 - s_m.e2))
            _cg_edge_vec(disc, mom, mom_e[..., None] * n1[:, None, :])

            # mass: b(theta, rho_m, u_m) edge part
            mass_e = iw * u_n * 0.5 * (rho_m.e1 + rho_m.e2)
            if cfg.upwind:
                mass_e = mass_e + (iw * _upwind_factor(u_n) * u_n
                                   * (rho_m.e1 - rho_m.e2))
            _dg_edge_vec(disc, mass, 1, Aval=mass_e)
            _dg_edge_vec(disc, mass, 2, Aval=-mass_e)

            # entropy lhs: b(T theta, s_m, u_m) edge part
            savg = 0.5 * (s_m.e1 + s_m.e2)
            adv1 = iw * u_n * T.e1 * savg
            adv2 = -iw * u_n * T.e2 * savg
            if cfg.upwind:
                bs = iw * _upwind_factor(u_n) * u_n * (s_m.e1 - s_m.e2)
                adv1 = adv1 + bs * T.e1
                adv2 = adv2 - bs * T.e2
            # -d(1, T, T theta) edge parts:
            #   term A: (1/{T}) {k grad T} . [[T theta]]
            avg_flux = 0.5 * kappa * (dTn1 + dTn2)
            e3a1 = -iw * avg_flux / Tavg * T.e1
            e3a2 = iw * avg_flux / Tavg * T.e2
            #   term B: -(1/{T}) {k grad(T theta)} . [[T]]
            cB = iw * jT / Tavg * 0.5 * kappa
            e3b_val1 = cB * dTn1
            e3b_val2 = cB * dTn2
            e3b_grad1 = (cB * T.e1)[..., None] * n1[:, None, :]
            e3b_grad2 = (cB * T.e2)[..., None] * n1[:, None, :]
            #   term C: -(eta/h) (1/{T}) [[T]] . [[T theta]]
            cC = pen * iw * jT / Tavg
            e3c1 = cC * T.e1
            e3c2 = -cC * T.e2
            _dg_edge_vec(disc, ds_lhs, 1, Aval=adv1 + e3a1 + e3b_val1 + e3c1,
                         Agrad=e3b_grad1)
            _dg_edge_vec(disc, ds_lhs, 2, Aval=adv2 + e3a2 + e3b_val2 + e3c2,
                         Agrad=e3b_grad2)

            # entropy rhs: -d(theta, T, T) penalty part ({theta} average)
            penq = 0.5 * pen * iw * jT * jT / Tavg
            _dg_edge_vec(disc, ds_rhs, 1, Aval=penq)
            _dg_edge_vec(disc, ds_rhs, 2, Aval=penq)

        # ---------- boundary contributions -----------------------------
        bc = cfg.bc
        if not isinstance(bc, HomogeneousNeumann) and disc.mesh.n_boundary_edges:
            bw = disc.be_w
            nb = disc.mesh.be_normal
            _check_positive(T.b, "boundary temperature", "boundary_edge")
            dTnb = np.einsum("bpi,bi->bp", T.gb, nb)
            if isinstance(bc, Neumann):
                # -d(1,T,T theta): extra  (1/T) k grad T . n (T theta)
                _dg_bnd_vec(disc, ds_lhs, Aval=-bw * kappa * dTnb)
                # rhs: -d(theta,T,T) boundary - e(theta,T)
                _dg_bnd_vec(disc, ds_rhs,
                            Aval=-bw * (kappa * dTnb + self.q0_b))
            else:  # Dirichlet
                T0 = self.T0_b
                penb = cfg.heat.eta / disc.mesh.be_length[:, None]
                gap = T.b - T0
                # -d(1,T,T theta) boundary parts
                lhs_val = bw * (kappa / T.b * dTnb * gap - kappa * dTnb)
                lhs_grad = (bw * kappa * gap)[..., None] * nb[:, None, :]
                _dg_bnd_vec(disc, ds_lhs, Aval=lhs_val, Agrad=lhs_grad)
                # rhs: -d(theta,T,T) - e(theta,T); their consistency-data
                # terms (kappa/T grad T . n T0) cancel, leaving the penalty
                _dg_bnd_vec(disc, ds_rhs, Aval=-bw * penb * gap)

        return mom, mass, ds_lhs, ds_rhs


# ----------------------------------------------------------------------
# Jacobian coloring
# ----------------------------------------------------------------------

def _interaction_pattern(disc):
    """Superset sparsity of the step Jacobian plus a column coloring."""
    if "newton_pattern" in disc._caches:
        return disc._caches["newton_pattern"]
    mesh = disc.mesh
    nc = mesh.n_cells
    nsc = disc.cg.n_scalar
    free_scalar = np.where(~disc.cg.wall_mask)[0]
    nfs = len(free_scalar)
    n_dg = disc.dg.n_dofs
    n = 2 * nfs + 2 * n_dg

    # dof -> cells incidence
    rows, cols = [], []
    scal_cells = [[] for _ in range(nsc)]
    for c in range(nc):
        for d in disc.cg.dofmap[c]:
            scal_cells[d].append(c)
    pos = {d: i for i, d in enumerate(free_scalar)}
    for d, cs in enumerate(scal_cells):
        if d in pos:
            for c in cs:
                rows.extend((pos[d], nfs + pos[d]))
                cols.extend((c, c))
    nb = disc.dg.n_local
    for d in range(n_dg):
        c = d // nb
        rows.extend((2 * nfs + d, 2 * nfs + n_dg + d))
        cols.extend((c, c))
    P = sp.coo_matrix((np.ones(len(rows), bool), (rows, cols)),
                      shape=(n, nc)).tocsr()

    adj_r = list(range(nc))
    adj_c = list(range(nc))
    for c1, c2 in mesh.ie_cells:
        adj_r.extend((c1, c2))
        adj_c.extend((c2, c1))
    A = sp.coo_matrix((np.ones(len(adj_r), bool), (adj_r, adj_c)),
                      shape=(nc, nc)).tocsr()

    influence = (P @ A).astype(bool)          # dof -> influenced cells
    pattern = (influence @ P.T).astype(bool)  # dof -> influenced dofs
    pattern_csc = pattern.T.tocsc()           # J[i, j] superset

    conflict = (pattern @ pattern.T).tocsr()
    color_of = -np.ones(n, int)
    for j in range(n):
        nbrs = conflict.indices[conflict.indptr[j]:conflict.indptr[j + 1]]
        used = set(color_of[nbrs[color_of[nbrs] >= 0]])
        c = 0
        while c in used:
            c += 1
        color_of[j] = c
    ncolors = color_of.max() + 1
    colors = [np.where(color_of == c)[0] for c in range(ncolors)]
    disc._caches["newton_pattern"] = (pattern_csc, colors)
    return pattern_csc, colors


def _fd_jacobian(fun, z, r0, pattern_csc, colors):
    """Forward-difference Jacobian compressed over color groups."""
    indptr, indices = pattern_csc.indptr, pattern_csc.indices
    data = np.zeros(pattern_csc.nnz)
    h = 1e-7 * np.maximum(np.abs(z), 1.0)
    for group in colors:
        zp = z.copy()
        zp[group] += h[group]
        df = fun(zp) - r0
        for j in group:
            sl = slice(indptr[j], indptr[j + 1])
            data[sl] = df[indices[sl]] / h[j]
    n = len(z)
    return sp.csc_matrix((data, indices, indptr), shape=(n, n))


def residual(state_k: State, trial: State, cfg: StepConfig) -> Residual:
    """Assemble the three residual blocks of one implicit step."""
    disc = state_k.disc
    asm = _StepAssembler(disc, cfg, state_k)
    mom, mass, lhs, rhs = asm.blocks(trial.u.coeffs, trial.rho.coeffs,
                                     trial.s.coeffs)
    return Residual(mom[asm.free], mass, lhs - rhs)


def entropy_sides(state_k: State, trial: State, cfg: StepConfig):
    """Entropy-equation left/right side vectors (diagnostics hook)."""
    asm = _StepAssembler(state_k.disc, cfg, state_k)
    _, _, lhs, rhs = asm.blocks(trial.u.coeffs, trial.rho.coeffs,
                                trial.s.coeffs)
    return lhs, rhs


def advance(state_k: State, cfg: StepConfig) -> State:
    """Advance one time step; raises NonConvergenceError on failure.

    The returned state satisfies ||residual||_inf <= newton_tol *
    (1 + ||residual(state_k, state_k)||_inf); polish iterations usually
    push it to the round-off floor.
    """
    disc = state_k.disc
    asm = _StepAssembler(disc, cfg, state_k)
    pattern, colors = _interaction_pattern(disc)

    z = asm.pack(state_k)
    try:
        r = asm.residual_packed(z)
    except PositivityError as exc:
        raise NonConvergenceError(0, np.inf, f"initial state invalid: {exc}")
    norm = float(np.abs(r).max())
    target = cfg.newton_tol * (1.0 + norm)

    lu = None
    stale = True
    iters = 0
    while norm > target:
        if iters >= cfg.newton_max_iter:
            raise NonConvergenceError(iters, norm)
        if stale:
            try:
                J = _fd_jacobian(asm.residual_packed, z, r, pattern, colors)
            except PositivityError as exc:
                raise NonConvergenceError(iters, norm,
                                          f"positivity lost in Jacobian: {exc}")
            lu = spla.splu(J)
            stale = False
        dz = -lu.solve(r)
        alpha = 1.0
        accepted = False
        for _ in range(9 if cfg.line_search else 1):
            try:
                r_new = asm.residual_packed(z + alpha * dz)
                norm_new = float(np.abs(r_new).max())
            except PositivityError:
                norm_new = np.inf
            if norm_new < norm:
                accepted = True
                break
            if not cfg.line_search:
                break
            alpha *= 0.5
        iters += 1
        if not accepted:
            if stale:
                raise NonConvergenceError(iters, norm, "line search stalled")
            stale = True  # retry from a fresh Jacobian
            continue
        if norm_new > 0.2 * norm or alpha < 1.0:
            stale = True
        z = z + alpha * dz
        r, norm = r_new, norm_new

    # polish toward the round-off floor while progress is rapid
    if lu is not None:
        for _ in range(3):
            try:
                z_new = z - lu.solve(r)
                r_new = asm.residual_packed(z_new)
            except PositivityError:
                break
            norm_new = float(np.abs(r_new).max())
            if norm_new < 0.5 * norm:
                z, r, norm = z_new, r_new, norm_new
            else:
                break

    return asm.state_from(z, state_k.time + cfg.dt)

"""Finite element spaces on triangulations.

Two spaces are provided: a discontinuous space ``DgSpace`` of cellwise
polynomials of degree q (no inter-cell coupling) used for density,
entropy and temperature, and a continuous vector space ``CgSpace`` of
degree r used for the velocity, with optional zero traces on the
horizontal walls.  A ``Discretization`` bundles one mesh, one quadrature
and one space of each kind, and caches every basis/trace/geometry table
the forms need.

Every integral in the package (projections, mass matrices, forms,
energy) is evaluated with the discretization's single quadrature rule.
The discrete conservation identities of the time stepper are algebraic
identities at the quadrature level and hold only under that convention.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import REF_VERTICES, Mesh
from .quadrature import make_quadrature


def lattice_points(degree):
    """Principal lattice nodes on the reference triangle.

    Degree 0 uses the centroid.  For degree >= 1 the first three nodes
    are the reference vertices in mesh order.
    """
    if degree == 0:
        return np.array([[1 / 3, 1 / 3]])
    pts = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
    for j in range(degree + 1):
        for i in range(degree + 1 - j):
            if (i, j) in ((0, 0), (degree, 0), (0, degree)):
                continue
            pts.append((i / degree, j / degree))
    return np.array(pts)


def _lattice_ij(degree):
    """(i, j) lattice indices in the same order as lattice_points."""
    if degree == 0:
        return [(0, 0)]
    out = [(0, 0), (degree, 0), (0, degree)]
    for j in range(degree + 1):
        for i in range(degree + 1 - j):
            if (i, j) in ((0, 0), (degree, 0), (0, degree)):
                continue
            out.append((i, j))
    return out


class RefBasis:
    """Nodal Lagrange basis on the reference triangle, via monomials."""

    def __init__(self, degree):
        self.degree = degree
        self.nodes = lattice_points(degree)
        self.exps = [(a, b) for tot in range(degree + 1)
                     for a in range(tot + 1) for b in (tot - a,)]
        V = self._monomials(self.nodes)
        self.coeff = np.linalg.inv(V)  # column i holds basis function i
        self.n_basis = len(self.nodes)

    def _monomials(self, pts):
        x, y = pts[:, 0], pts[:, 1]
        return np.column_stack([x ** a * y ** b for a, b in self.exps])

    def _monomial_grads(self, pts):
        x, y = pts[:, 0], pts[:, 1]
        gx = np.column_stack([
            a * x ** max(a - 1, 0) * y ** b if a else np.zeros_like(x)
            for a, b in self.exps])
        gy = np.column_stack([
            b * x ** a * y ** max(b - 1, 0) if b else np.zeros_like(x)
            for a, b in self.exps])
        return gx, gy

    def tabulate(self, pts):
        """Values (npts, n_basis) at reference points."""
        return self._monomials(np.atleast_2d(pts)) @ self.coeff

    def tabulate_grad(self, pts):
        """Reference gradients (npts, n_basis, 2)."""
        gx, gy = self._monomial_grads(np.atleast_2d(pts))
        return np.stack([gx @ self.coeff, gy @ self.coeff], axis=-1)


class DgSpace:
    """Cellwise-discontinuous polynomials of one degree on a mesh."""

    def __init__(self, mesh: Mesh, degree: int):
        self.mesh = mesh
        self.degree = degree
        self.basis = RefBasis(degree)
        self.n_local = self.basis.n_basis
        self.n_dofs = mesh.n_cells * self.n_local
        self.disc = None  # set by the owning Discretization

    def dofs_of_cell(self, c):
        return np.arange(c * self.n_local, (c + 1) * self.n_local)

    def local_view(self, coeffs):
        return np.asarray(coeffs).reshape(self.mesh.n_cells, self.n_local)

    def node_coords(self):
        """Physical positions of the nodal dofs, shape (n_dofs, 2)."""
        ref = self.basis.nodes
        v = self.mesh.cell_coords
        B = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)
        return (np.einsum("nj,cij->cni", ref, B) + v[:, None, 0]).reshape(-1, 2)

    def interpolate(self, fn):
        """Nodal interpolant of a callable fn(points) -> values."""
        return FeFunction(self, np.asarray(fn(self.node_coords()), float))

    def function(self, coeffs=None):
        if coeffs is None:
            coeffs = np.zeros(self.n_dofs)
        return FeFunction(self, np.asarray(coeffs, float))


class CgSpace:
    """Continuous vector-valued (d = 2) Lagrange space of one degree.

    Dofs are numbered vertex block, then edge block, then cell-interior
    block, each duplicated per component: coefficients are laid out as
    [all x-component dofs, all z-component dofs].  Periodic meshes share
    seam dofs automatically because numbering follows identified vertex
    ids.  ``wall_mask`` marks scalar dofs sitting on z = 0 or z = Ly;
    zeroing them realizes the no-slip walls.
    """

    def __init__(self, mesh: Mesh, degree: int):
        if degree < 1:
            raise ValueError("continuous space needs degree >= 1")
        self.mesh = mesh
        self.degree = degree
        self.basis = RefBasis(degree)
        self.n_local = self.basis.n_basis
        self.vdim = 2
        self._build_dofmap()
        self.n_dofs = 2 * self.n_scalar
        self.disc = None

    def _build_dofmap(self):
        mesh, deg = self.mesh, self.degree
        n_vert = len(mesh.vertices)
        n_edge = len(mesh.edge_canonical)
        per_edge = deg - 1
        per_cell = (deg - 1) * (deg - 2) // 2
        self.n_scalar = n_vert + n_edge * per_edge + mesh.n_cells * per_cell

        ij = _lattice_ij(deg)
        dofmap = np.zeros((mesh.n_cells, self.n_local), dtype=int)
        pos = np.zeros((self.n_scalar, 2))
        ref = self.basis.nodes
        for c in range(mesh.n_cells):
            cv = mesh.cells[c]
            corners = mesh.cell_coords[c]
            B = np.stack([corners[1] - corners[0], corners[2] - corners[0]],
                         axis=1)
            phys = ref @ B.T + corners[0]
            n_int_seen = 0
            for ln, (i, j) in enumerate(ij):
                k = deg - i - j
                if (i, j) == (0, 0):
                    dof = int(cv[0])
                elif (i, j) == (deg, 0):
                    dof = int(cv[1])
                elif (i, j) == (0, deg):
                    dof = int(cv[2])
                elif k == 0 or i == 0 or j == 0:
                    if k == 0:      # edge 0: v1 -> v2, parameter j/deg
                        l, t = 0, j / deg
                    elif i == 0:    # edge 1: v2 -> v0, parameter k/deg
                        l, t = 1, k / deg
                    else:           # edge 2: v0 -> v1, parameter i/deg
                        l, t = 2, i / deg
                    ga = int(cv[(l + 1) % 3])
                    gb = int(cv[(l + 2) % 3])
                    eid = int(mesh.cell_edge_ids[c, l])
                    canon = tuple(mesh.edge_canonical[eid])
                    s = t if (ga, gb) == canon else 1.0 - t
                    slot = int(round(s * deg)) - 1
                    dof = n_vert + eid * per_edge + slot
                else:
                    dof = (n_vert + n_edge * per_edge + c * per_cell
                           + n_int_seen)
                    n_int_seen += 1
                dofmap[c, ln] = dof
                pos[dof] = phys[ln]
        self.dofmap = dofmap
        self.node_pos = pos
        zt = 1e-12 * max(mesh.Ly, 1.0)
        self.wall_mask = (np.abs(pos[:, 1]) < zt) | \
                         (np.abs(pos[:, 1] - mesh.Ly) < zt)
        free_scalar = np.where(~self.wall_mask)[0]
        self.free_dofs = np.concatenate([free_scalar,
                                         self.n_scalar + free_scalar])

    def component(self, coeffs, k):
        return np.asarray(coeffs)[k * self.n_scalar:(k + 1) * self.n_scalar]

    def interpolate(self, fn, zero_walls=False):
        """Nodal interpolant of fn(points) -> (n, 2) vectors."""
        vals = np.asarray(fn(self.node_pos), float)
        coeffs = np.concatenate([vals[:, 0], vals[:, 1]])
        if zero_walls:
            coeffs = coeffs.copy()
            coeffs[:self.n_scalar][self.wall_mask] = 0.0
            coeffs[self.n_scalar:][self.wall_mask] = 0.0
        return FeFunction(self, coeffs)

    def function(self, coeffs=None):
        if coeffs is None:
            coeffs = np.zeros(self.n_dofs)
        return FeFunction(self, np.asarray(coeffs, float))


@dataclass
class FeFunction:
    """Coefficient vector in a DG or CG space."""

    space: object
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, float)
        if self.coeffs.shape != (self.space.n_dofs,):
            raise ValueError(
                f"coefficient length {self.coeffs.shape} does not match "
                f"space dimension {self.space.n_dofs}")

    def copy(self):
        return FeFunction(self.space, self.coeffs.copy())

    def evaluate(self, cell, points):
        """Values at reference points of one cell.

        Returns (n,) for a DG function and (n, 2) for a CG vector field.
        """
        tab = self.space.basis.tabulate(points)
        if isinstance(self.space, DgSpace):
            return tab @ self.space.local_view(self.coeffs)[cell]
        local = self.space.dofmap[cell]
        n = self.space.n_scalar
        return np.stack([tab @ self.coeffs[local],
                         tab @ self.coeffs[n + local]], axis=-1)

    def gradient(self, cell, points):
        """Physical gradients at reference points of one cell.

        Returns (n, 2) for DG; (n, 2, 2) for CG with [:, i, j] = d u_i / d x_j.
        """
        corners = self.space.mesh.cell_coords[cell]
        B = np.stack([corners[1] - corners[0], corners[2] - corners[0]],
                     axis=1)
        Binv = np.linalg.inv(B)
        gref = self.space.basis.tabulate_grad(points)  # (n, nb, 2)
        gphys = np.einsum("nbj,ji->nbi", gref, Binv)
        if isinstance(self.space, DgSpace):
            return np.einsum("nbi,b->ni",
                             gphys, self.space.local_view(self.coeffs)[cell])
        local = self.space.dofmap[cell]
        n = self.space.n_scalar
        return np.stack([
            np.einsum("nbi,b->ni", gphys, self.coeffs[local]),
            np.einsum("nbi,b->ni", gphys, self.coeffs[n + local]),
        ], axis=1)


def evaluate(f: FeFunction, cell, points):
    return f.evaluate(cell, points)


def gradient(f: FeFunction, cell, points):
    return f.gradient(cell, points)


class Discretization:
    """One mesh + quadrature + (DG, CG) space pair with cached tables.

    Tables
    ------
    w_vol : (nc, nq) volume quadrature weights including |det J|
    x_vol : (nc, nq, 2) physical volume quadrature points
    dg_v / cg_v : (nq, nb) reference basis values (shared by all cells)
    dg_g / cg_g : (nc, nq, nb, 2) physical basis gradients
    interior-edge tables carry one entry per side; side 1 owns the
    normal.  Boundary tables are single sided with outward normals.
    """

    def __init__(self, mesh: Mesh, q=1, r=2, quad_degree=None):
        self.mesh = mesh
        if quad_degree is None:
            quad_degree = 2 * q + r + 1
        self.quad = make_quadrature(quad_degree)
        self.dg = DgSpace(mesh, q)
        self.cg = CgSpace(mesh, r)
        self.dg.disc = self
        self.cg.disc = self
        self._build_geometry()
        self._build_volume_tables()
        self._build_edge_tables()
        self._build_boundary_tables()
        self._caches = {}

    # -- geometry ----------------------------------------------------
    def _build_geometry(self):
        v = self.mesh.cell_coords
        B = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)
        self.B = B
        self.detJ = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
        if np.any(self.detJ <= 0):
            raise ValueError("mesh cells must be counterclockwise")
        self.Binv = np.linalg.inv(B)

    def _build_volume_tables(self):
        qr = self.quad
        self.w_vol = self.detJ[:, None] * qr.tri_weights[None, :]
        self.x_vol = (np.einsum("qj,cij->cqi", qr.tri_points, self.B)
                      + self.mesh.cell_coords[:, None, 0])
        self.dg_v = self.dg.basis.tabulate(qr.tri_points)
        self.cg_v = self.cg.basis.tabulate(qr.tri_points)
        dgr = self.dg.basis.tabulate_grad(qr.tri_points)
        cgr = self.cg.basis.tabulate_grad(qr.tri_points)
        self.dg_g = np.einsum("qbj,cji->cqbi", dgr, self.Binv)
        self.cg_g = np.einsum("qbj,cji->cqbi", cgr, self.Binv)
        # reference mass under the discretization's own quadrature; its
        # inverse defines the cellwise L2 projection
        M = np.einsum("q,qa,qb->ab", qr.tri_weights, self.dg_v, self.dg_v)
        self.Mref = M
        self.Mref_inv = np.linalg.inv(M)

    def _edge_side_refs(self, cells_side, verts):
        t = self.quad.edge_points
        la = (self.mesh.cells[cells_side] == verts[:, :1]).argmax(1)
        lb = (self.mesh.cells[cells_side] == verts[:, 1:]).argmax(1)
        return ((1.0 - t)[None, :, None] * REF_VERTICES[la][:, None, :]
                + t[None, :, None] * REF_VERTICES[lb][:, None, :])

    def _build_edge_tables(self):
        m = self.mesh
        ne = m.n_interior_edges
        npts = self.quad.n_edge
        self.ie_w = m.ie_length[:, None] * self.quad.edge_weights[None, :]
        if ne == 0:
            z = np.zeros
            self.dg_e1 = self.dg_e2 = z((0, npts, self.dg.n_local))
            self.dg_ge1 = self.dg_ge2 = z((0, npts, self.dg.n_local, 2))
            self.cg_e1 = z((0, npts, self.cg.n_local))
            self.x_ie1 = self.x_ie2 = z((0, npts, 2))
            return
        c1, c2 = m.ie_cells[:, 0], m.ie_cells[:, 1]
        ref1 = self._edge_side_refs(c1, m.ie_verts)
        ref2 = self._edge_side_refs(c2, m.ie_verts)
        self.ie_ref1, self.ie_ref2 = ref1, ref2

        def dg_tab(ref, cells):
            flat = ref.reshape(-1, 2)
            vals = self.dg.basis.tabulate(flat).reshape(ne, npts, -1)
            gref = self.dg.basis.tabulate_grad(flat).reshape(ne, npts, -1, 2)
            gphys = np.einsum("epbj,eji->epbi", gref, self.Binv[cells])
            return vals, gphys

        self.dg_e1, self.dg_ge1 = dg_tab(ref1, c1)
        self.dg_e2, self.dg_ge2 = dg_tab(ref2, c2)
        self.cg_e1 = self.cg.basis.tabulate(
            ref1.reshape(-1, 2)).reshape(ne, npts, -1)
        self.x_ie1 = (np.einsum("epj,eij->epi", ref1, self.B[c1])
                      + m.cell_coords[c1][:, None, 0])
        self.x_ie2 = (np.einsum("epj,eij->epi", ref2, self.B[c2])
                      + m.cell_coords[c2][:, None, 0])

    def _build_boundary_tables(self):
        m = self.mesh
        nb = m.n_boundary_edges
        npts = self.quad.n_edge
        self.be_w = m.be_length[:, None] * self.quad.edge_weights[None, :]
        if nb == 0:
            self.dg_b = np.zeros((0, npts, self.dg.n_local))
            self.dg_gb = np.zeros((0, npts, self.dg.n_local, 2))
            self.x_be = np.zeros((0, npts, 2))
            return
        cells = m.be_cell
        refb = self._edge_side_refs(cells, m.be_verts)
        self.be_ref = refb
        flat = refb.reshape(-1, 2)
        self.dg_b = self.dg.basis.tabulate(flat).reshape(nb, npts, -1)
        gref = self.dg.basis.tabulate_grad(flat).reshape(nb, npts, -1, 2)
        self.dg_gb = np.einsum("bpcj,bji->bpci", gref, self.Binv[cells])
        self.x_be = (np.einsum("bpj,bij->bpi", refb, self.B[cells])
                     + m.cell_coords[cells][:, None, 0])

    # -- field evaluation ---------------------------------------------
    def dg_vol_values(self, coeffs):
        return self.dg.local_view(coeffs) @ self.dg_v.T

    def dg_vol_grads(self, coeffs):
        return np.einsum("cb,cqbi->cqi", self.dg.local_view(coeffs), self.dg_g)

    def dg_edge_values(self, coeffs):
        lv = self.dg.local_view(coeffs)
        c1, c2 = self.mesh.ie_cells[:, 0], self.mesh.ie_cells[:, 1]
        return (np.einsum("eb,epb->ep", lv[c1], self.dg_e1),
                np.einsum("eb,epb->ep", lv[c2], self.dg_e2))

    def dg_edge_grads(self, coeffs):
        lv = self.dg.local_view(coeffs)
        c1, c2 = self.mesh.ie_cells[:, 0], self.mesh.ie_cells[:, 1]
        return (np.einsum("eb,epbi->epi", lv[c1], self.dg_ge1),
                np.einsum("eb,epbi->epi", lv[c2], self.dg_ge2))

    def dg_bnd_values(self, coeffs):
        lv = self.dg.local_view(coeffs)
        return np.einsum("bc,bpc->bp", lv[self.mesh.be_cell], self.dg_b)

    def dg_bnd_grads(self, coeffs):
        lv = self.dg.local_view(coeffs)
        return np.einsum("bc,bpci->bpi", lv[self.mesh.be_cell], self.dg_gb)

    def cg_local(self, coeffs):
        """(nc, n_local, 2) per-cell coefficient view of a CG field."""
        dm = self.cg.dofmap
        n = self.cg.n_scalar
        return np.stack([np.asarray(coeffs)[dm],
                         np.asarray(coeffs)[n + dm]], axis=-1)

    def cg_vol_values(self, coeffs):
        return np.einsum("cbk,qb->cqk", self.cg_local(coeffs), self.cg_v)

    def cg_vol_grads(self, coeffs):
        """(nc, nq, 2, 2) with [..., i, j] = d u_i / d x_j."""
        return np.einsum("cbi,cqbj->cqij", self.cg_local(coeffs), self.cg_g)

    def cg_edge_values(self, coeffs):
        c1 = self.mesh.ie_cells[:, 0]
        return np.einsum("ebk,epb->epk", self.cg_local(coeffs)[c1], self.cg_e1)

    # -- projection ----------------------------------------------------
    def project_dg(self, vol_values):
        """Cellwise L2 projection of quadrature-point values into DG."""
        rhs = np.einsum("q,cq,qb->cb", self.quad.tri_weights,
                        np.asarray(vol_values), self.dg_v)
        return FeFunction(self.dg, (rhs @ self.Mref_inv).ravel())

    def dg_inner(self, vals_a, vals_b):
        """Quadrature L2 inner product of two volume value tables."""
        return float(np.sum(self.w_vol * vals_a * vals_b))


def project_L2(f, target: DgSpace):
    """L2-orthogonal projection into a DG space.

    ``f`` may be a callable on physical points, an (nc, nq) array of
    values at the discretization's volume quadrature points, or an
    FeFunction on the same mesh.
    """
    disc = target.disc
    if disc is None:
        raise ValueError("space is not attached to a Discretization")
    if isinstance(f, FeFunction):
        if f.space.mesh is not target.mesh:
            raise ValueError("projection source lives on a different mesh")
        if isinstance(f.space, DgSpace):
            vals = disc.dg_vol_values(f.coeffs)
        else:
            raise ValueError("only scalar (DG) functions can be projected")
    elif callable(f):
        vals = np.asarray(f(disc.x_vol.reshape(-1, 2)), float)
        vals = vals.reshape(disc.mesh.n_cells, disc.quad.n_tri)
    else:
        vals = np.asarray(f, float)
        if vals.shape != (disc.mesh.n_cells, disc.quad.n_tri):
            raise ValueError("value table shape does not match quadrature")
    return disc.project_dg(vals)


def mass_matrix(space):
    """Sparse symmetric positive definite Gram matrix of the basis."""
    disc = space.disc
    if disc is None:
        raise ValueError("space is not attached to a Discretization")
    if isinstance(space, DgSpace):
        nc, nb = space.mesh.n_cells, space.n_local
        blocks = disc.detJ[:, None, None] * disc.Mref[None, :, :]
        return sp.bsr_matrix(
            (blocks, np.arange(nc), np.arange(nc + 1)),
            shape=(nc * nb, nc * nb)).tocsr()
    # continuous space: assemble the scalar Gram matrix, duplicate per
    # component as a block diagonal
    loc = np.einsum("cq,qa,qb->cab", disc.w_vol, disc.cg_v, disc.cg_v)
    dm = space.dofmap
    rows = np.repeat(dm, space.n_local, axis=1).ravel()
    cols = np.tile(dm, (1, space.n_local)).ravel()
    M = sp.coo_matrix((loc.ravel(), (rows, cols)),
                      shape=(space.n_scalar, space.n_scalar)).tocsr()
    return sp.block_diag([M, M]).tocsr()

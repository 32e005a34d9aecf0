import numpy as np
import pytest

from thermofem.fields import ScalarQP, VectorQP
from thermofem.forms import form_b
from thermofem.mesh import build_rectangle_mesh, jump_average_frame
from thermofem.spaces import Discretization


def test_smallest_mesh_counts():
    m = build_rectangle_mesh(1, 1, 1.0, 1.0)
    assert m.n_cells == 2
    assert m.n_interior_edges == 1
    assert m.n_boundary_edges == 4
    assert set(m.be_tag) == {"bottom", "top", "left", "right"}


def test_periodic_adds_one_seam_edge_per_row():
    mp = build_rectangle_mesh(2, 1, 2.0, 1.0, periodic_x=True)
    mn = build_rectangle_mesh(2, 1, 2.0, 1.0, periodic_x=False)
    assert mp.n_interior_edges == mn.n_interior_edges + 1
    assert len(mp.seam_edges) == 1
    # no boundary edges remain on x = 0 or x = Lx
    assert set(mp.be_tag) == {"bottom", "top"}
    m3 = build_rectangle_mesh(5, 3, 2.0, 1.0, periodic_x=True)
    assert len(m3.seam_edges) == m3.ny


def test_invalid_arguments_raise():
    with pytest.raises(ValueError):
        build_rectangle_mesh(0, 1, 1.0, 1.0)
    with pytest.raises(ValueError):
        build_rectangle_mesh(2, 2, -1.0, 1.0)
    with pytest.raises(ValueError):
        build_rectangle_mesh(2, 2, 1.0, 0.0)
    with pytest.raises(ValueError):
        build_rectangle_mesh(1, 1, 1.0, 1.0, periodic_x=True)


def test_element_diameter_convention():
    # uniform split: the diameter is the rectangle diagonal
    m = build_rectangle_mesh(32, 16, 2.0, 1.0, periodic_x=True)
    assert np.isclose(m.h_max, np.hypot(2.0 / 32, 1.0 / 16))
    # choosing nx, ny large enough realizes a 0.0625 maximum diameter
    m2 = build_rectangle_mesh(46, 23, 2.0, 1.0, periodic_x=True)
    assert m2.h_max <= 0.0625


def test_interior_edges_reference_distinct_cells():
    m = build_rectangle_mesh(4, 3, 2.0, 1.0, periodic_x=True)
    assert np.all(m.ie_cells[:, 0] != m.ie_cells[:, 1])
    # the stored normal is outward for cell 1 and inward for cell 2
    for e in range(m.n_interior_edges):
        fr = jump_average_frame(m, e, n_points=2)
        for side, sign in ((0, 1.0), (1, -1.0)):
            c = fr.cells[side]
            centroid = m.cell_coords[c].mean(axis=0)
            ref_mid = (fr.ref1 if side == 0 else fr.ref2).mean(axis=0)
            corners = m.cell_coords[c]
            B = np.stack([corners[1] - corners[0], corners[2] - corners[0]],
                         axis=1)
            mid = B @ ref_mid + corners[0]
            assert sign * np.dot(mid - centroid, fr.normal) > 0


def test_normal_closure_per_cell():
    m = build_rectangle_mesh(3, 2, 2.0, 1.0, periodic_x=True)
    acc = np.zeros((m.n_cells, 2))
    for e in range(m.n_interior_edges):
        c1, c2 = m.ie_cells[e]
        acc[c1] += m.ie_normal[e] * m.ie_length[e]
        acc[c2] -= m.ie_normal[e] * m.ie_length[e]
    for b in range(m.n_boundary_edges):
        acc[m.be_cell[b]] += m.be_normal[b] * m.be_length[b]
    assert np.abs(acc).max() < 1e-13


def test_shape_regularity_guard():
    with pytest.raises(ValueError, match="shape regularity"):
        build_rectangle_mesh(1, 60, 10.0, 1.0)


def test_frame_trivial_jumps():
    m = build_rectangle_mesh(1, 1, 1.0, 1.0)
    disc = Discretization(m, q=1, r=2)
    fr = jump_average_frame(m, 0)
    # continuous function: zero jump, average equals the value
    f = disc.dg.interpolate(lambda x: 2.0 + x[:, 0] - 3.0 * x[:, 1])
    v1 = f.evaluate(fr.cells[0], fr.ref1)
    v2 = f.evaluate(fr.cells[1], fr.ref2)
    assert np.abs(v1 - v2).max() < 1e-13
    # piecewise constant f1 = 2, f2 = 4: {f} = 3, jump = -2 n1
    lv = np.zeros((2, 3))
    lv[fr.cells[0]] = 2.0
    lv[fr.cells[1]] = 4.0
    g = disc.dg.function(lv.ravel())
    g1 = g.evaluate(fr.cells[0], fr.ref1)
    g2 = g.evaluate(fr.cells[1], fr.ref2)
    assert np.allclose(0.5 * (g1 + g2), 3.0)
    jump_vec = (g1 - g2)[:, None] * fr.normal
    assert np.allclose(jump_vec, -2.0 * fr.normal)


def test_frame_matches_hand_midpoint_values():
    # 2-cell unit mesh, piecewise linear with chosen nodal values
    m = build_rectangle_mesh(1, 1, 1.0, 1.0)
    disc = Discretization(m, q=1, r=2)
    fr = jump_average_frame(m, 0, n_points=3)
    # cell 0 = ((0,0),(1,0),(1,1)); cell 1 = ((0,0),(1,1),(0,1))
    lv = np.array([[1.0, 2.0, 5.0], [1.0, 5.0, -1.0]])
    f = disc.dg.function(lv.ravel())
    # edge runs (0,0) -> (1,1); at its midpoint (1/2, 1/2):
    # trace from cell 0: barycentric ((0,0),(1,0),(1,1)) = (1/2, 0, 1/2) -> 3
    # trace from cell 1: (1/2, 1/2, 0) -> 3
    mid = np.array([[0.5, 0.5]])
    ref_mid1 = 0.5 * (fr.ref1[0] + fr.ref1[-1])  # Gauss points are symmetric
    v1 = f.evaluate(fr.cells[0], ref_mid1[None, :])
    v2 = f.evaluate(fr.cells[1], (0.5 * (fr.ref2[0] + fr.ref2[-1]))[None, :])
    assert np.isclose(v1[0], 3.0)
    assert np.isclose(v2[0], 3.0)
    assert np.isclose(fr.length, np.sqrt(2.0))
    assert np.isclose(fr.weights.sum(), fr.length)
    phys_mid = fr.points.mean(axis=0)
    assert np.allclose(sorted(fr.points[:, 0]), sorted(fr.points[:, 1]))
    assert np.allclose(phys_mid, [0.5, 0.5])


def test_boundary_edge_rejected_by_frame():
    m = build_rectangle_mesh(1, 1, 1.0, 1.0)
    with pytest.raises(ValueError, match="interior"):
        jump_average_frame(m, m.n_interior_edges)


@pytest.mark.parametrize("periodic", [False, True])
def test_integration_by_parts_bookkeeping(periodic, rng):
    """sum_K int_dK f (v.n) = sum_e int_e v.[[f]] + boundary terms."""
    m = build_rectangle_mesh(4, 3, 2.0, 1.0, periodic_x=periodic)
    disc = Discretization(m, q=1, r=2)
    f = disc.dg.function(rng.standard_normal(disc.dg.n_dofs))
    v = disc.cg.function(rng.standard_normal(disc.cg.n_dofs))
    fq = ScalarQP.from_dg(f)
    vq = VectorQP.from_cg(v)

    # left side: loop cells and their edges with outward normals
    lhs = 0.0
    for e in range(m.n_interior_edges):
        u_n = np.einsum("pi,i->p", vq.e[e], m.ie_normal[e])
        lhs += np.sum(disc.ie_w[e] * u_n * fq.e1[e])      # side 1, outward n1
        lhs += np.sum(disc.ie_w[e] * (-u_n) * fq.e2[e])   # side 2, outward -n1
    rhs_interior = 0.0
    for e in range(m.n_interior_edges):
        u_n = np.einsum("pi,i->p", vq.e[e], m.ie_normal[e])
        rhs_interior += np.sum(disc.ie_w[e] * u_n * (fq.e1[e] - fq.e2[e]))
    assert abs(lhs - rhs_interior) < 1e-12

    # boundary part via the cached tables against an independent cell loop
    bnd = 0.0
    for b in range(m.n_boundary_edges):
        cell = m.be_cell[b]
        vals = f.evaluate(cell, disc.be_ref[b])
        uv = v.evaluate(cell, disc.be_ref[b])
        bnd += np.sum(disc.be_w[b]
                      * np.einsum("pi,i->p", uv, m.be_normal[b]) * vals)
    uvb = np.stack([v.evaluate(c, disc.be_ref[i])
                    for i, c in enumerate(m.be_cell)])
    bnd_tables = np.sum(disc.be_w * fq.b
                        * np.einsum("bpi,bi->bp", uvb, m.be_normal))
    assert abs(bnd - bnd_tables) < 1e-12


def _column_shift_permutations(disc):
    """Dof permutations realizing a one-column translation in x."""
    m = disc.mesh
    dx = m.Lx / m.nx
    dz = m.Ly / m.ny

    def key(pos):
        # sixth-grid quantization separates centroids and all node types
        i = int(round(pos[0] * 6.0 / dx)) % (6 * m.nx)
        j = int(round(pos[1] * 6.0 / dz))
        return (i, j)

    # DG dofs move with their cells; identify cells by centroid keys
    cell_of = {key(m.cell_coords[c].mean(axis=0)): c
               for c in range(m.n_cells)}
    dg_perm = np.zeros(m.n_cells, int)
    for c in range(m.n_cells):
        cen = m.cell_coords[c].mean(axis=0)
        shifted = ((cen[0] + dx) % m.Lx, cen[1])
        dg_perm[c] = cell_of[key(shifted)]

    pos = disc.cg.node_pos
    dof_of = {key(p): d for d, p in enumerate(pos)}
    cg_perm = np.zeros(len(pos), int)
    for d, p in enumerate(pos):
        shifted = ((p[0] + dx) % m.Lx, p[1])
        cg_perm[d] = dof_of[key(shifted)]
    return dg_perm, cg_perm


def test_periodic_translation_invariance(disc_4x2, rng):
    disc = disc_4x2
    m = disc.mesh
    dg_perm, cg_perm = _column_shift_permutations(disc)

    f = rng.standard_normal(disc.dg.n_dofs)
    g = rng.standard_normal(disc.dg.n_dofs)
    uc = 0.1 * rng.standard_normal(disc.cg.n_dofs)
    nsc = disc.cg.n_scalar
    uc[:nsc][disc.cg.wall_mask] = 0.0
    uc[nsc:][disc.cg.wall_mask] = 0.0

    def shift_dg(c):
        lv = disc.dg.local_view(c)
        out = np.zeros_like(lv)
        out[dg_perm] = lv
        return out.ravel()

    def shift_cg(c):
        out = np.zeros_like(c)
        out[:nsc][cg_perm] = c[:nsc]
        out[nsc:][cg_perm] = c[nsc:]
        return out

    val = form_b(disc.dg.function(f), disc.dg.function(g),
                 disc.cg.function(uc))
    val_shifted = form_b(disc.dg.function(shift_dg(f)),
                         disc.dg.function(shift_dg(g)),
                         disc.cg.function(shift_cg(uc)))
    assert abs(val - val_shifted) < 1e-12 * max(1.0, abs(val))

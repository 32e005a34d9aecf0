"""Uniform conforming triangulations of a rectangle, optionally periodic in x.

Each grid rectangle is split along the lower-left to upper-right
diagonal, so a (nx, ny) build yields 2*nx*ny congruent right triangles.
Periodic identification is done at the vertex level when the mesh is
built, which makes every function space constructed on the mesh
automatically periodic.  Boundary edges carry a side tag; with
periodicity enabled only "bottom" (z = 0) and "top" (z = Ly) remain.

Topology and geometry (normals, edge lengths, per-cell corner
coordinates) are computed once here and treated as immutable.
"""

from dataclasses import dataclass, field

import numpy as np

from .quadrature import edge_rule

#: reference triangle vertices; local edge l joins vertices (l+1)%3 -> (l+2)%3
REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

BOUNDARY_TAGS = ("bottom", "top", "left", "right")


@dataclass
class Mesh:
    """2D triangulation of [0, Lx] x [0, Ly].

    Vertex ids are post-identification (periodic seams share ids), while
    ``cell_coords`` stores unwrapped physical corner positions so that
    geometry near the seam is evaluated on the correct side.
    """

    vertices: np.ndarray        # (nv, 2) identified vertex coordinates
    cells: np.ndarray           # (nc, 3) vertex ids, counterclockwise
    cell_coords: np.ndarray     # (nc, 3, 2) unwrapped corner coordinates
    # interior edges
    ie_cells: np.ndarray        # (ne, 2) adjacent cells; normal points out of [:,0]
    ie_local: np.ndarray        # (ne, 2) local edge index within each cell
    ie_verts: np.ndarray        # (ne, 2) canonical vertex pair (a < b)
    ie_normal: np.ndarray       # (ne, 2) unit normal out of the first cell
    ie_length: np.ndarray       # (ne,)
    # boundary edges
    be_cell: np.ndarray         # (nb,)
    be_local: np.ndarray        # (nb,)
    be_verts: np.ndarray        # (nb, 2)
    be_normal: np.ndarray       # (nb, 2) outward unit normal
    be_length: np.ndarray       # (nb,)
    be_tag: np.ndarray          # (nb,) strings from BOUNDARY_TAGS
    # unique-edge table: cell_edge_ids[c, l] is the global id of local
    # edge l of cell c; edge_canonical[eid] holds its (a < b) vertex pair
    cell_edge_ids: np.ndarray  # (nc, 3)
    edge_canonical: np.ndarray  # (n_edges, 2)
    periodic_x: bool
    Lx: float
    Ly: float
    nx: int
    ny: int
    # identified (left-grid-id, right-grid-id) pairs in the unidentified
    # (nx+1)*(ny+1) grid numbering; empty unless periodic_x
    periodic_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), int))
    seam_edges: np.ndarray = field(default_factory=lambda: np.zeros(0, int))

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_interior_edges(self):
        return len(self.ie_cells)

    @property
    def n_boundary_edges(self):
        return len(self.be_cell)

    @property
    def h_max(self):
        """Maximum element diameter (longest triangle edge)."""
        d = self.cell_coords - np.roll(self.cell_coords, 1, axis=1)
        return float(np.sqrt((d ** 2).sum(-1)).max())

    def cell_areas(self):
        v = self.cell_coords
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def cell_neighbors(self):
        """(nc, lists) edge-adjacent cells, seam included."""
        nbr = [[] for _ in range(self.n_cells)]
        for c1, c2 in self.ie_cells:
            nbr[c1].append(int(c2))
            nbr[c2].append(int(c1))
        return nbr

    def cells_touching_boundary(self):
        """Boolean mask of cells owning at least one boundary edge."""
        mask = np.zeros(self.n_cells, bool)
        mask[self.be_cell] = True
        return mask


def _local_vertex_index(cell_verts, vid):
    idx = np.where(cell_verts == vid)[0]
    if len(idx) != 1:
        raise ValueError(f"vertex {vid} not unique in cell {cell_verts}")
    return int(idx[0])


def _edge_geometry(coords, cell_verts, a, b, cell_corner_coords):
    """Length and outward unit normal of the edge (a, b) seen from one cell."""
    la = _local_vertex_index(cell_verts, a)
    lb = _local_vertex_index(cell_verts, b)
    pa = cell_corner_coords[la]
    pb = cell_corner_coords[lb]
    tau = pb - pa
    length = float(np.hypot(*tau))
    n = np.array([tau[1], -tau[0]]) / length
    centroid = cell_corner_coords.mean(axis=0)
    if np.dot(0.5 * (pa + pb) - centroid, n) < 0:
        n = -n
    return length, n


def build_rectangle_mesh(nx, ny, Lx, Ly, periodic_x=False,
                         shape_regularity_bound=50.0):
    """Build a uniform triangulation of [0, Lx] x [0, Ly].

    Parameters
    ----------
    nx, ny : int
        Number of grid rectangles per direction (>= 1); the cell count
        is 2*nx*ny.
    Lx, Ly : float
        Domain extents (> 0).
    periodic_x : bool
        Identify x = 0 with x = Lx.  Requires nx >= 2 so a cell is not
        its own neighbor across the seam.
    shape_regularity_bound : float
        Upper bound accepted for max_K (diam K / inradius K).

    Returns
    -------
    Mesh
    """
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"nx, ny must be integers >= 1, got ({nx}, {ny})")
    nx, ny = int(nx), int(ny)
    if not (Lx > 0 and Ly > 0):
        raise ValueError(f"Lx, Ly must be positive, got ({Lx}, {Ly})")
    if periodic_x and nx < 2:
        raise ValueError("periodic_x requires nx >= 2")

    dx, dy = Lx / nx, Ly / ny

    ncol = nx if periodic_x else nx + 1

    def vid(i, j):
        return j * ncol + (i % nx if periodic_x else i)

    nv = ncol * (ny + 1)
    vertices = np.zeros((nv, 2))
    for j in range(ny + 1):
        for i in range(ncol):
            vertices[vid(i, j)] = (i * dx, j * dy)

    cells = []
    coords = []
    for j in range(ny):
        for i in range(nx):
            x0, x1 = i * dx, (i + 1) * dx
            z0, z1 = j * dy, (j + 1) * dy
            v00, v10 = vid(i, j), vid(i + 1, j)
            v11, v01 = vid(i + 1, j + 1), vid(i, j + 1)
            # lower-left -> upper-right diagonal split, both CCW
            cells.append((v00, v10, v11))
            coords.append([(x0, z0), (x1, z0), (x1, z1)])
            cells.append((v00, v11, v01))
            coords.append([(x0, z0), (x1, z1), (x0, z1)])
    cells = np.array(cells, dtype=np.int64)
    cell_coords = np.array(coords)

    # Edge incidence.  The sorted identified vertex pair alone is not a
    # unique key on small periodic meshes (for nx = 2 both bottom edges
    # join the same two identified vertices), so the key also carries
    # the edge midpoint quantized to the half-grid, taken modulo the
    # period in x.
    def edge_key(c, l):
        cv = cells[c]
        a, b = int(cv[(l + 1) % 3]), int(cv[(l + 2) % 3])
        pa = cell_coords[c][(l + 1) % 3]
        pb = cell_coords[c][(l + 2) % 3]
        mid = 0.5 * (pa + pb)
        ix = int(round(2.0 * mid[0] / dx))
        if periodic_x:
            ix %= 2 * nx
        iz = int(round(2.0 * mid[1] / dy))
        return (min(a, b), max(a, b), ix, iz)

    incidence = {}
    for c in range(len(cells)):
        for l in range(3):
            incidence.setdefault(edge_key(c, l), []).append((c, l))

    cell_edge_ids = np.full((len(cells), 3), -1, int)
    edge_canonical = []
    for eid, (key, hits) in enumerate(incidence.items()):
        edge_canonical.append((key[0], key[1]))
        for c, l in hits:
            cell_edge_ids[c, l] = eid
    edge_canonical = np.array(edge_canonical, int)

    ie_cells, ie_local, ie_verts, ie_normal, ie_length = [], [], [], [], []
    be_cell, be_local, be_verts, be_normal, be_length, be_tag = [], [], [], [], [], []
    seam_edges = []
    for (a, b, _, _), hits in incidence.items():
        if len(hits) == 2:
            (c1, l1), (c2, l2) = hits
            length, n1 = _edge_geometry(vertices, cells[c1], a, b,
                                        cell_coords[c1])
            ie_cells.append((c1, c2))
            ie_local.append((l1, l2))
            ie_verts.append((a, b))
            ie_normal.append(n1)
            ie_length.append(length)
            if periodic_x:
                # seam edges live at x = 0 in one chart and x = Lx in the other
                xa1 = cell_coords[c1][_local_vertex_index(cells[c1], a)][0]
                xa2 = cell_coords[c2][_local_vertex_index(cells[c2], a)][0]
                if abs(xa1 - xa2) > 0.5 * dx:
                    seam_edges.append(len(ie_cells) - 1)
        elif len(hits) == 1:
            (c, l) = hits[0]
            length, n = _edge_geometry(vertices, cells[c], a, b,
                                       cell_coords[c])
            la = _local_vertex_index(cells[c], a)
            lb = _local_vertex_index(cells[c], b)
            mid = 0.5 * (cell_coords[c][la] + cell_coords[c][lb])
            if abs(mid[1]) < 1e-12 * Ly:
                tag = "bottom"
            elif abs(mid[1] - Ly) < 1e-12 * Ly:
                tag = "top"
            elif abs(mid[0]) < 1e-12 * Lx:
                tag = "left"
            else:
                tag = "right"
            be_cell.append(c)
            be_local.append(l)
            be_verts.append((a, b))
            be_normal.append(n)
            be_length.append(length)
            be_tag.append(tag)
        else:
            raise ValueError(f"edge {(a, b)} shared by {len(hits)} cells")

    periodic_pairs = np.zeros((0, 2), int)
    if periodic_x:
        grid_cols = nx + 1
        periodic_pairs = np.array(
            [(j * grid_cols, j * grid_cols + nx) for j in range(ny + 1)], int)

    mesh = Mesh(
        vertices=vertices,
        cells=cells,
        cell_coords=cell_coords,
        ie_cells=np.array(ie_cells, int),
        ie_local=np.array(ie_local, int),
        ie_verts=np.array(ie_verts, int),
        ie_normal=np.array(ie_normal),
        ie_length=np.array(ie_length),
        be_cell=np.array(be_cell, int),
        be_local=np.array(be_local, int),
        be_verts=np.array(be_verts, int),
        be_normal=np.array(be_normal) if be_normal else np.zeros((0, 2)),
        be_length=np.array(be_length),
        be_tag=np.array(be_tag),
        cell_edge_ids=cell_edge_ids,
        edge_canonical=edge_canonical,
        periodic_x=periodic_x,
        Lx=float(Lx), Ly=float(Ly), nx=nx, ny=ny,
        periodic_pairs=periodic_pairs,
        seam_edges=np.array(sorted(seam_edges), int),
    )

    # shape regularity: diam / inradius, inradius = 2 area / perimeter
    v = mesh.cell_coords
    sides = np.sqrt(((v - np.roll(v, 1, axis=1)) ** 2).sum(-1))
    ratio = sides.max(1) * sides.sum(1) / (2.0 * mesh.cell_areas())
    if ratio.max() > shape_regularity_bound:
        raise ValueError(
            f"shape regularity {ratio.max():.2f} exceeds bound "
            f"{shape_regularity_bound}; refine the coarse direction")
    return mesh


@dataclass(frozen=True)
class EdgeFrame:
    """Everything needed to evaluate jumps and averages on one interior edge.

    ``ref1``/``ref2`` are reference coordinates of matching physical
    points inside the two adjacent cells; traces from each side follow
    by evaluating a function at those points.  The normal belongs to the
    first cell; the second cell's normal is its negative.
    """

    cells: tuple
    normal: np.ndarray
    length: float
    points: np.ndarray    # (np, 2) physical points (first-cell chart)
    ref1: np.ndarray      # (np, 2)
    ref2: np.ndarray      # (np, 2)
    weights: np.ndarray   # (np,) arc-length weights, sum = length


def _edge_ref_points(cell_verts, a, b, t):
    """Reference coordinates along the edge (a -> b) at parameters t."""
    la = _local_vertex_index(cell_verts, a)
    lb = _local_vertex_index(cell_verts, b)
    return (1.0 - t)[:, None] * REF_VERTICES[la] + t[:, None] * REF_VERTICES[lb]


def jump_average_frame(mesh, edge, n_points=3):
    """Trace frame for interior edge ``edge``.

    Edges are indexed with interior edges first; passing an index in the
    boundary range raises ValueError, since jumps are undefined there.
    """
    ne = mesh.n_interior_edges
    if edge >= ne or edge < 0:
        raise ValueError(
            f"edge {edge} is not an interior edge (interior edges are "
            f"0..{ne - 1}; boundary edges have no jump/average frame)")
    t, w = edge_rule(2 * n_points - 1)
    a, b = mesh.ie_verts[edge]
    c1, c2 = mesh.ie_cells[edge]
    ref1 = _edge_ref_points(mesh.cells[c1], a, b, t)
    ref2 = _edge_ref_points(mesh.cells[c2], a, b, t)
    corners = mesh.cell_coords[c1]
    B = np.stack([corners[1] - corners[0], corners[2] - corners[0]], axis=1)
    pts = ref1 @ B.T + corners[0]
    return EdgeFrame(
        cells=(int(c1), int(c2)),
        normal=mesh.ie_normal[edge].copy(),
        length=float(mesh.ie_length[edge]),
        points=pts,
        ref1=ref1,
        ref2=ref2,
        weights=w * mesh.ie_length[edge],
    )

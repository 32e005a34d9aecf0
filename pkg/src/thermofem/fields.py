"""Quadrature-point representations of scalar and vector fields.

Every form in this package is a weighted sum over quadrature points, so
fields enter forms through their values (and gradients, traces) at the
discretization's volume, interior-edge and boundary-edge points.  This
module provides the containers and the builders for FE functions,
callables, constants and pointwise products; products carry exact
product-rule gradients, which is what makes forms of compositions like
T*w well defined without projecting them into a polynomial space.

Scalar tables: vol (nc, nq), gvol (nc, nq, 2), e1/e2 (ne, np),
ge1/ge2 (ne, np, 2), b (nb, np), gb (nb, np, 2).  Vector tables carry a
trailing component axis; gradients use [..., i, j] = d u_i / d x_j.
Missing tables are None and combine only with compatible operands.
"""

import numpy as np

from .spaces import CgSpace, Discretization, DgSpace, FeFunction


def _lin(a, b, ca, cb):
    if a is None or b is None:
        return None
    return ca * a + cb * b


class ScalarQP:
    """A scalar field sampled on the quadrature skeleton."""

    __slots__ = ("disc", "vol", "gvol", "e1", "e2", "ge1", "ge2", "b", "gb")

    def __init__(self, disc, vol=None, gvol=None, e1=None, e2=None,
                 ge1=None, ge2=None, b=None, gb=None):
        self.disc = disc
        self.vol, self.gvol = vol, gvol
        self.e1, self.e2, self.ge1, self.ge2 = e1, e2, ge1, ge2
        self.b, self.gb = b, gb

    @classmethod
    def from_dg(cls, f: FeFunction):
        disc = f.space.disc
        g1, g2 = disc.dg_edge_grads(f.coeffs)
        e1, e2 = disc.dg_edge_values(f.coeffs)
        return cls(disc,
                   vol=disc.dg_vol_values(f.coeffs),
                   gvol=disc.dg_vol_grads(f.coeffs),
                   e1=e1, e2=e2, ge1=g1, ge2=g2,
                   b=disc.dg_bnd_values(f.coeffs),
                   gb=disc.dg_bnd_grads(f.coeffs))

    @classmethod
    def from_callable(cls, disc, fn):
        """Sample a callable of physical position (no gradients).

        Both sides of interior edges are sampled in their own unwrapped
        charts; for periodic meshes the callable must be Lx-periodic for
        the two traces to agree.
        """
        def ev(x):
            return np.asarray(fn(x.reshape(-1, 2)), float).reshape(x.shape[:-1])
        return cls(disc,
                   vol=ev(disc.x_vol),
                   e1=ev(disc.x_ie1), e2=ev(disc.x_ie2),
                   b=ev(disc.x_be))

    @classmethod
    def constant(cls, disc, value):
        nc, nq = disc.mesh.n_cells, disc.quad.n_tri
        ne, npe = disc.mesh.n_interior_edges, disc.quad.n_edge
        nb = disc.mesh.n_boundary_edges
        full = np.full
        return cls(disc,
                   vol=full((nc, nq), float(value)),
                   gvol=np.zeros((nc, nq, 2)),
                   e1=full((ne, npe), float(value)),
                   e2=full((ne, npe), float(value)),
                   ge1=np.zeros((ne, npe, 2)), ge2=np.zeros((ne, npe, 2)),
                   b=full((nb, npe), float(value)),
                   gb=np.zeros((nb, npe, 2)))

    def __add__(self, other):
        return ScalarQP(self.disc,
                        vol=_lin(self.vol, other.vol, 1, 1),
                        gvol=_lin(self.gvol, other.gvol, 1, 1),
                        e1=_lin(self.e1, other.e1, 1, 1),
                        e2=_lin(self.e2, other.e2, 1, 1),
                        ge1=_lin(self.ge1, other.ge1, 1, 1),
                        ge2=_lin(self.ge2, other.ge2, 1, 1),
                        b=_lin(self.b, other.b, 1, 1),
                        gb=_lin(self.gb, other.gb, 1, 1))

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rmul__(self, c):
        c = float(c)
        mul = lambda a: None if a is None else c * a
        return ScalarQP(self.disc, vol=mul(self.vol), gvol=mul(self.gvol),
                        e1=mul(self.e1), e2=mul(self.e2),
                        ge1=mul(self.ge1), ge2=mul(self.ge2),
                        b=mul(self.b), gb=mul(self.gb))


def scalar_product(f: ScalarQP, g: ScalarQP):
    """Pointwise product with product-rule gradients where available."""
    def prod(a, b):
        return None if (a is None or b is None) else a * b

    def prod_grad(fa, ga, fb, gb):
        if fa is None or ga is None or fb is None or gb is None:
            return None
        return ga * fb[..., None] + gb * fa[..., None]

    return ScalarQP(f.disc,
                    vol=prod(f.vol, g.vol),
                    gvol=prod_grad(f.vol, f.gvol, g.vol, g.gvol),
                    e1=prod(f.e1, g.e1), e2=prod(f.e2, g.e2),
                    ge1=prod_grad(f.e1, f.ge1, g.e1, g.ge1),
                    ge2=prod_grad(f.e2, f.ge2, g.e2, g.ge2),
                    b=prod(f.b, g.b),
                    gb=prod_grad(f.b, f.gb, g.b, g.gb))


class VectorQP:
    """A 2-vector field sampled on the quadrature skeleton."""

    __slots__ = ("disc", "vol", "gvol", "e")

    def __init__(self, disc, vol=None, gvol=None, e=None):
        self.disc = disc
        self.vol = vol    # (nc, nq, 2)
        self.gvol = gvol  # (nc, nq, 2, 2), [..., i, j] = d u_i / d x_j
        self.e = e        # (ne, np, 2) single-valued edge trace

    @classmethod
    def from_cg(cls, u: FeFunction):
        disc = u.space.disc
        return cls(disc,
                   vol=disc.cg_vol_values(u.coeffs),
                   gvol=disc.cg_vol_grads(u.coeffs),
                   e=disc.cg_edge_values(u.coeffs))

    @classmethod
    def constant(cls, disc, vec):
        vec = np.asarray(vec, float)
        nc, nq = disc.mesh.n_cells, disc.quad.n_tri
        ne, npe = disc.mesh.n_interior_edges, disc.quad.n_edge
        return cls(disc,
                   vol=np.broadcast_to(vec, (nc, nq, 2)).copy(),
                   gvol=np.zeros((nc, nq, 2, 2)),
                   e=np.broadcast_to(vec, (ne, npe, 2)).copy())

    @classmethod
    def from_callable(cls, disc, fn):
        """Sample a callable returning (n, 2) vectors (no gradients)."""
        def ev(x):
            flat = np.asarray(fn(x.reshape(-1, 2)), float)
            return flat.reshape(x.shape[:-1] + (2,))
        return cls(disc, vol=ev(disc.x_vol), e=ev(disc.x_ie1))

    def __add__(self, other):
        return VectorQP(self.disc,
                        vol=_lin(self.vol, other.vol, 1, 1),
                        gvol=_lin(self.gvol, other.gvol, 1, 1),
                        e=_lin(self.e, other.e, 1, 1))

    def __rmul__(self, c):
        c = float(c)
        mul = lambda a: None if a is None else c * a
        return VectorQP(self.disc, vol=mul(self.vol), gvol=mul(self.gvol),
                        e=mul(self.e))


def scale_vector(rho: ScalarQP, u: VectorQP):
    """Volume-only product rho * u (momentum-density style field)."""
    return VectorQP(u.disc, vol=rho.vol[..., None] * u.vol)


def as_scalar_qp(obj, disc: Discretization) -> ScalarQP:
    """Coerce an FeFunction / callable / number / ScalarQP to tables."""
    if isinstance(obj, ScalarQP):
        if obj.disc is not disc:
            raise ValueError("field belongs to a different discretization")
        return obj
    if isinstance(obj, FeFunction):
        if not isinstance(obj.space, DgSpace):
            raise ValueError("scalar slots take DG functions")
        if obj.space.disc is not disc:
            raise ValueError("field belongs to a different discretization")
        return ScalarQP.from_dg(obj)
    if callable(obj):
        return ScalarQP.from_callable(disc, obj)
    return ScalarQP.constant(disc, float(obj))


def as_vector_qp(obj, disc: Discretization) -> VectorQP:
    if isinstance(obj, VectorQP):
        if obj.disc is not disc:
            raise ValueError("field belongs to a different discretization")
        return obj
    if isinstance(obj, FeFunction):
        if not isinstance(obj.space, CgSpace):
            raise ValueError("vector slots take CG functions")
        if obj.space.disc is not disc:
            raise ValueError("field belongs to a different discretization")
        return VectorQP.from_cg(obj)
    if callable(obj):
        return VectorQP.from_callable(disc, obj)
    return VectorQP.constant(disc, obj)


def find_disc(*objs):
    """Discretization shared by the given fields; error on a mismatch."""
    disc = None
    for o in objs:
        d = None
        if isinstance(o, (ScalarQP, VectorQP)):
            d = o.disc
        elif isinstance(o, FeFunction):
            d = o.space.disc
        if d is not None:
            if disc is None:
                disc = d
            elif d is not disc:
                raise ValueError("fields live on different discretizations")
    if disc is None:
        raise ValueError("at least one argument must carry a discretization")
    return disc

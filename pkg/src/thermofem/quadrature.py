"""Quadrature rules on the reference triangle and reference edge.

All triangle rules have strictly positive weights.  Positivity matters
here: cellwise sign arguments (viscous dissipation >= 0, entropy
production >= 0) are made at the quadrature level, so a rule with a
negative weight would break them.  Weights sum to 1/2 (the reference
triangle area); edge weights sum to 1 and live on [0, 1].
"""

from dataclasses import dataclass

import numpy as np


def _orbit3(a):
    """Permutation orbit of barycentric (1-2a, a, a) as (x, y) points."""
    return [(a, a), (1.0 - 2.0 * a, a), (a, 1.0 - 2.0 * a)]


def _triangle_rule_fixed(degree):
    """Smallest tabulated positive rule with exactness >= degree, or None."""
    if degree <= 1:
        return np.array([[1 / 3, 1 / 3]]), np.array([0.5])
    if degree <= 2:
        pts = _orbit3(1.0 / 6.0)
        return np.array(pts), np.full(3, 1.0 / 6.0)
    if degree <= 4:
        # two 3-point orbits (Dunavant degree 4), all weights positive
        a1, w1 = 0.445948490915965, 0.223381589678011
        a2, w2 = 0.091576213509771, 0.109951743655322
        pts = _orbit3(a1) + _orbit3(a2)
        w = np.array([w1] * 3 + [w2] * 3) * 0.5
        return np.array(pts), w
    if degree <= 5:
        # centroid + two orbits, closed-form coefficients
        s15 = np.sqrt(15.0)
        a1, w1 = (6.0 + s15) / 21.0, (155.0 + s15) / 1200.0
        a2, w2 = (6.0 - s15) / 21.0, (155.0 - s15) / 1200.0
        pts = [(1 / 3, 1 / 3)] + _orbit3(a1) + _orbit3(a2)
        w = np.array([9.0 / 40.0] + [w1] * 3 + [w2] * 3) * 0.5
        return np.array(pts), w
    return None


def _triangle_rule_duffy(degree):
    """Collapsed tensor Gauss rule; positive weights at any degree.

    Maps (s, t) in [0,1]^2 to (x, y) = (s, t(1-s)) with Jacobian (1-s);
    a k-point Gauss rule per direction is exact for total degree
    2k - 2 here (the map raises the s-degree by one).
    """
    k = int(np.ceil((degree + 2) / 2))
    x1, w1 = np.polynomial.legendre.leggauss(k)
    s = 0.5 * (x1 + 1.0)
    ws = 0.5 * w1
    S, T = np.meshgrid(s, s, indexing="ij")
    WS, WT = np.meshgrid(ws, ws, indexing="ij")
    pts = np.column_stack([S.ravel(), (T * (1.0 - S)).ravel()])
    w = (WS * WT * (1.0 - S)).ravel()
    return pts, w


def triangle_rule(degree):
    """Points and weights integrating polynomials of total degree `degree`
    exactly over the reference triangle {(0,0), (1,0), (0,1)}."""
    fixed = _triangle_rule_fixed(degree)
    if fixed is not None:
        return fixed
    return _triangle_rule_duffy(degree)


def edge_rule(degree):
    """Gauss-Legendre points/weights on [0, 1], exact to `degree`."""
    k = max(1, int(np.ceil((degree + 1) / 2)))
    x, w = np.polynomial.legendre.leggauss(k)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class Quadrature:
    """Volume and edge rules used consistently by every integral.

    Projections, mass matrices, all forms, and the energy functional
    share these rules; the discrete conservation identities are exact
    only under that convention.
    """

    degree: int
    tri_points: np.ndarray     # (nq, 2) reference-triangle coordinates
    tri_weights: np.ndarray    # (nq,), sum = 1/2
    edge_points: np.ndarray    # (np,) parameters on [0, 1]
    edge_weights: np.ndarray   # (np,), sum = 1

    @property
    def n_tri(self):
        return len(self.tri_weights)

    @property
    def n_edge(self):
        return len(self.edge_weights)


def make_quadrature(degree):
    tp, tw = triangle_rule(degree)
    ep, ew = edge_rule(degree)
    return Quadrature(degree, tp, tw, ep, ew)

"""Perfect-gas thermodynamics in nondimensional form.

The internal energy density as a function of mass density rho and
entropy density s is

    eps(rho, s) = rho**gamma * exp((gamma - 1) s / rho) / (gamma - 1),

the unique closed form (up to constants) with temperature
T = d eps/d s = rho**(gamma-1) exp((gamma-1) s/rho) > 0, ideal-gas
pressure p = rho d_rho eps + s d_s eps - eps = rho T, and internal
energy rho T / (gamma - 1).  The time stepper does not use the partial
derivatives directly but their difference quotients delta1/delta2,
which make the discrete chain rule

    avg-delta1 * (rho' - rho) + avg-delta2 * (s' - s)
        = eps(rho', s') - eps(rho, s)

exact pointwise; that identity is what yields exact energy balance.
"""

from dataclasses import dataclass

import numpy as np

from .errors import PositivityError
from .spaces import DgSpace

#: relative gap below which difference quotients switch to the analytic
#: midpoint derivative (the quotient has lost all significant digits)
QUOTIENT_SWITCH_TOL = 1e-8


@dataclass(frozen=True)
class GasParams:
    """Nondimensional gas and flow parameters.

    ``Fr`` may be ``inf``, which turns gravity off; the gravitational
    potential is phi(x, z) = z / Fr.
    """

    gamma: float
    Re: float
    Pr: float
    Fr: float
    Z: float = 0.0

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValueError(f"adiabatic exponent must exceed 1, got {self.gamma}")
        for name in ("Re", "Pr", "Fr"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def inv_fr(self):
        return 0.0 if np.isinf(self.Fr) else 1.0 / self.Fr

    @property
    def kappa(self):
        """Thermal conductivity (1/Re)(1/Pr) gamma/(gamma-1)."""
        return self.gamma / ((self.gamma - 1.0) * self.Re * self.Pr)

    def phi(self, x):
        """Gravitational potential at physical points (n, 2)."""
        return np.asarray(x)[..., 1] * self.inv_fr


def _check_density(rho):
    rho = np.asarray(rho, float)
    if rho.size and rho.min() <= 0.0:
        if rho.ndim >= 2:  # (cell, point) tables: report the cell
            idx = int(rho.reshape(rho.shape[0], -1).min(axis=1).argmin())
        else:
            idx = int(np.argmin(rho))
        raise PositivityError("density", "cell", idx, float(rho.min()))
    return rho


def epsilon(rho, s, gp: GasParams):
    """Internal energy density eps(rho, s)."""
    rho = _check_density(rho)
    s = np.asarray(s, float)
    gm1 = gp.gamma - 1.0
    return rho ** gp.gamma * np.exp(gm1 * s / rho) / gm1


def temperature(rho, s, gp: GasParams):
    """T = d eps / d s = rho**(gamma-1) exp((gamma-1) s / rho)."""
    rho = _check_density(rho)
    s = np.asarray(s, float)
    gm1 = gp.gamma - 1.0
    return rho ** gm1 * np.exp(gm1 * s / rho)


def pressure(rho, s, gp: GasParams):
    """Ideal-gas law p = rho T."""
    return np.asarray(rho, float) * temperature(rho, s, gp)


def depsilon_drho(rho, s, gp: GasParams):
    """d eps / d rho = T (gamma/(gamma-1) - s/rho)."""
    rho = _check_density(rho)
    s = np.asarray(s, float)
    T = temperature(rho, s, gp)
    return T * (gp.gamma / (gp.gamma - 1.0) - s / rho)


def entropy_from_temperature(rho, T, gp: GasParams):
    """Invert T(rho, s) for s: s = rho ln(T / rho**(gamma-1)) / (gamma-1)."""
    rho = _check_density(rho)
    T = np.asarray(T, float)
    gm1 = gp.gamma - 1.0
    return rho * np.log(T / rho ** gm1) / gm1


def delta1(rho, rho_next, s, gp: GasParams):
    """Difference quotient of eps in the density slot.

    Evaluated as eps(rho, s) * expm1(X) / (rho' - rho) with
    X = gamma log1p(gap/rho) - (gamma-1) s gap / (rho' rho), which is
    free of subtractive cancellation at every gap size; below the
    switch tolerance (and at gap = 0) the analytic midpoint derivative
    is returned, to which the stable formula agrees to round-off.
    """
    rho = _check_density(rho)
    rho_next = _check_density(rho_next)
    s = np.asarray(s, float)
    gap = rho_next - rho
    tiny = np.abs(gap) <= QUOTIENT_SWITCH_TOL * np.maximum(np.abs(rho),
                                                           np.abs(rho_next))
    safe = np.where(tiny, 1.0, gap)
    gm1 = gp.gamma - 1.0
    X = (gp.gamma * np.log1p(safe / rho)
         - gm1 * s * safe / ((rho + safe) * rho))
    quot = epsilon(rho, s, gp) * np.expm1(X) / safe
    return np.where(tiny, depsilon_drho(0.5 * (rho + rho_next), s, gp), quot)


def delta2(s, s_next, rho, gp: GasParams):
    """Difference quotient of eps in the entropy slot.

    Cancellation-free form eps(rho, s) * expm1((gamma-1) gap / rho) / gap
    with the analytic midpoint temperature below the switch tolerance.
    """
    rho = _check_density(rho)
    s = np.asarray(s, float)
    s_next = np.asarray(s_next, float)
    gap = s_next - s
    tiny = np.abs(gap) <= QUOTIENT_SWITCH_TOL * np.maximum(np.abs(s),
                                                           np.abs(s_next))
    safe = np.where(tiny, 1.0, gap)
    quot = epsilon(rho, s, gp) * np.expm1((gp.gamma - 1.0) * safe / rho) / safe
    return np.where(tiny, temperature(rho, 0.5 * (s + s_next), gp), quot)


def averaged_quotients(rho_k, rho_n, s_k, s_n, gp: GasParams):
    """Pointwise averaged quotients whose projections drive the stepper.

    Returns (d1, d2) with
      d1 = (delta1(rho_k, rho_n, s_k) + delta1(rho_k, rho_n, s_n)) / 2
      d2 = (delta2(s_k, s_n, rho_k) + delta2(s_k, s_n, rho_n)) / 2
    satisfying d1 (rho_n - rho_k) + d2 (s_n - s_k) = eps_n - eps_k exactly.
    """
    d1 = 0.5 * (delta1(rho_k, rho_n, s_k, gp) + delta1(rho_k, rho_n, s_n, gp))
    d2 = 0.5 * (delta2(s_k, s_n, rho_k, gp) + delta2(s_k, s_n, rho_n, gp))
    return d1, d2


def discrete_gradients(state_k, state_next, space: DgSpace, gp: GasParams):
    """L2 projections of the averaged difference quotients into ``space``.

    ``state_k`` / ``state_next`` carry DG functions ``rho`` and ``s``;
    the returned pair (D1eps, D2eps) are the discrete-gradient energy
    derivatives used by the implicit step.
    """
    disc = space.disc
    r0 = disc.dg_vol_values(state_k.rho.coeffs)
    r1 = disc.dg_vol_values(state_next.rho.coeffs)
    s0 = disc.dg_vol_values(state_k.s.coeffs)
    s1 = disc.dg_vol_values(state_next.s.coeffs)
    d1, d2 = averaged_quotients(r0, r1, s0, s1, gp)
    return disc.project_dg(d1), disc.project_dg(d2)

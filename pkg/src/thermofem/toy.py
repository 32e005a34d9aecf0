"""Finite-dimensional thermodynamic systems with the same discrete structure.

A system couples a mechanical coordinate q (scalar or vector) with an
entropy S through a separable Lagrangian

    L(q, v, S) = m |v|^2 / 2 - V(q) - U(S),

a friction force F(q, v, S), and optionally an external heat source of
temperature T_H with entropy flow J(q, v, S, T).  The temperature is
T = U'(S) = -dL/dS, assumed positive along trajectories.  Closed systems
conserve the energy E = m|v|^2/2 + V + U exactly and produce entropy at
rate -<F, v>/T >= 0 for dissipative friction; with a heat source the
balance becomes dE/dt = T_H J.

``step_discrete_gradient`` reproduces both balances exactly at the
discrete level: the mechanics is advanced by the implicit midpoint rule
with a discrete gradient of V, and U enters through the same difference
quotient construction the fluid stepper uses for its internal energy.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (DegenerateLagrangianError, NonConvergenceError,
                     PositivityError)


@dataclass
class ToySystem:
    """Separable-Lagrangian thermodynamic system.

    ``U_dq`` optionally supplies a cancellation-safe difference quotient
    (U(b) - U(a))/(b - a); the default falls back to the plain quotient
    with an analytic midpoint switch for tiny gaps.
    """

    m: float
    V: Callable
    V_grad: Callable
    U: Callable
    U_prime: Callable
    friction: Callable                       # F(q, v, S) -> force
    T_H: Optional[float] = None              # heat source temperature
    J_SH: Optional[Callable] = None          # J(q, v, S, T) -> entropy flow
    U_dq: Optional[Callable] = None

    def __post_init__(self):
        if self.m == 0:
            raise DegenerateLagrangianError(
                "mechanical mass must be invertible")

    @property
    def heated(self):
        return self.J_SH is not None

    def temperature(self, S):
        T = self.U_prime(S)
        if T <= 0:
            raise PositivityError("temperature", "state", 0, float(T))
        return T

    def energy(self, q, v, S):
        return 0.5 * self.m * float(np.dot(v, v)) + self.V(q) + self.U(S)

    def u_quotient(self, a, b):
        if self.U_dq is not None:
            return self.U_dq(a, b)
        if abs(b - a) <= 1e-8 * max(abs(a), abs(b), 1e-300):
            return self.U_prime(0.5 * (a + b))
        return (self.U(b) - self.U(a)) / (b - a)


def damped_oscillator(m=1.0, k=1.0, nu=0.2):
    """Adiabatically closed oscillator with friction F = -nu v, U = exp(S)."""
    return ToySystem(
        m=m,
        V=lambda q: 0.5 * k * float(np.dot(q, q)),
        V_grad=lambda q: k * np.asarray(q, float),
        U=np.exp,
        U_prime=np.exp,
        friction=lambda q, v, S: -nu * np.asarray(v, float),
        U_dq=lambda a, b: np.exp(a) * (np.expm1(b - a) / (b - a)
                                       if b != a else 1.0),
    )


def heated_oscillator(m=1.0, k=1.0, nu=0.05, T_H=1.2, alpha=0.5):
    """Oscillator exchanging heat with a reservoir: J = alpha (T_H - T)/T."""
    sys = damped_oscillator(m=m, k=k, nu=nu)
    sys.T_H = T_H
    sys.J_SH = lambda q, v, S, T: alpha * (T_H - T) / T
    return sys


def rhs_closed(sys: ToySystem, q, v, S):
    """Time derivatives (qdot, vdot, Sdot) of the closed system."""
    q = np.asarray(q, float)
    v = np.asarray(v, float)
    T = sys.temperature(S)
    F = sys.friction(q, v, S)
    vdot = (-sys.V_grad(q) + F) / sys.m
    Sdot = -float(np.dot(F, v)) / T
    return v, vdot, Sdot


def rhs_heated(sys: ToySystem, q, v, S):
    """Time derivatives with the external heat source active."""
    if not sys.heated:
        raise ValueError("system has no heat source")
    q = np.asarray(q, float)
    v = np.asarray(v, float)
    T = sys.temperature(S)
    F = sys.friction(q, v, S)
    J = sys.J_SH(q, v, S, T)
    vdot = (-sys.V_grad(q) + F) / sys.m
    # -T (Sdot - J) = <F, v> + J (T - T_H)
    Sdot = J - (float(np.dot(F, v)) + J * (T - sys.T_H)) / T
    return v, vdot, Sdot


def _potential_discrete_gradient(sys, q0, q1):
    """Gonzalez discrete gradient of V: exact V(q1)-V(q0) chain rule."""
    qm = 0.5 * (q0 + q1)
    g = np.asarray(sys.V_grad(qm), float)
    dq = q1 - q0
    nrm2 = float(np.dot(dq, dq))
    if nrm2 == 0.0:
        return g
    corr = (sys.V(q1) - sys.V(q0) - float(np.dot(g, dq))) / nrm2
    return g + corr * dq


def step_discrete_gradient(sys: ToySystem, state, dt,
                           tol=1e-14, max_iter=50):
    """One implicit step preserving the energy/entropy structure.

    ``state`` is (q, v, S[, t]).  The update solves

        q1 - q0 = dt v_mid
        m (v1 - v0) = dt (-dgV + F(mid))
        -dgU (S1 - S0 - dt J) = dt (<F, v_mid> + J (dgU - T_H))

    with dgV, dgU discrete gradients and J evaluated at the midpoint
    state with temperature dgU (J = 0 when the system is closed).  The
    closed update conserves E exactly and cannot decrease S for
    dissipative friction; the heated update satisfies
    (E1 - E0)/dt = T_H J exactly.
    """
    q0, v0, S0 = (np.atleast_1d(np.asarray(state[0], float)),
                  np.atleast_1d(np.asarray(state[1], float)),
                  float(state[2]))
    t0 = float(state[3]) if len(state) > 3 else 0.0
    d = len(q0)

    def F_res(y):
        q1 = y[:d]
        v1 = y[d:2 * d]
        S1 = y[2 * d]
        qm, vm, Sm = 0.5 * (q0 + q1), 0.5 * (v0 + v1), 0.5 * (S0 + S1)
        dgV = _potential_discrete_gradient(sys, q0, q1)
        dgU = sys.u_quotient(S0, S1)
        if dgU <= 0:
            raise PositivityError("temperature", "state", 0, float(dgU))
        F = np.asarray(sys.friction(qm, vm, Sm), float)
        J = sys.J_SH(qm, vm, Sm, dgU) if sys.heated else 0.0
        exchange = J * (dgU - sys.T_H) if sys.heated else 0.0
        r = np.empty(2 * d + 1)
        r[:d] = q1 - q0 - dt * vm
        r[d:2 * d] = sys.m * (v1 - v0) - dt * (-dgV + F)
        r[2 * d] = (-dgU * (S1 - S0 - dt * J)
                    - dt * (float(np.dot(F, vm)) + exchange))
        return r

    y = np.concatenate([q0, v0, [S0]])
    scale = 1.0 + abs(sys.energy(q0, v0, S0))
    r = F_res(y)
    norm = np.abs(r).max()
    n = len(y)
    for _ in range(max_iter):
        if norm <= tol * scale:
            break
        J = np.empty((n, n))
        h = 1e-7 * np.maximum(np.abs(y), 1.0)
        for j in range(n):
            yp = y.copy()
            yp[j] += h[j]
            J[:, j] = (F_res(yp) - r) / h[j]
        dy = np.linalg.solve(J, -r)
        alpha = 1.0
        for _ in range(30):
            try:
                rn = F_res(y + alpha * dy)
                nn = np.abs(rn).max()
            except PositivityError:
                nn = np.inf
            if nn < norm:
                break
            alpha *= 0.5
        else:
            raise NonConvergenceError(max_iter, norm, "toy line search stalled")
        y = y + alpha * dy
        r, norm = rn, nn
    else:
        raise NonConvergenceError(max_iter, norm)
    # polish to the round-off floor while it still helps
    for _ in range(3):
        try:
            Jf = np.empty((n, n))
            h = 1e-7 * np.maximum(np.abs(y), 1.0)
            for j in range(n):
                yp = y.copy()
                yp[j] += h[j]
                Jf[:, j] = (F_res(yp) - r) / h[j]
            yn = y + np.linalg.solve(Jf, -r)
            rn = F_res(yn)
            nn = np.abs(rn).max()
        except (PositivityError, np.linalg.LinAlgError):
            break
        if nn < 0.5 * norm:
            y, r, norm = yn, rn, nn
        else:
            break
    q1, v1, S1 = y[:d], y[d:2 * d], float(y[2 * d])
    if len(np.atleast_1d(state[0])) == 1 and np.ndim(state[0]) == 0:
        return (float(q1[0]), float(v1[0]), S1, t0 + dt)
    return (q1, v1, S1, t0 + dt)


def midpoint_heat_flow(sys: ToySystem, state0, state1, dt):
    """The T_H J product the heated step balances energy against."""
    if not sys.heated:
        return 0.0
    q0, v0, S0 = (np.atleast_1d(np.asarray(state0[0], float)),
                  np.atleast_1d(np.asarray(state0[1], float)), float(state0[2]))
    q1, v1, S1 = (np.atleast_1d(np.asarray(state1[0], float)),
                  np.atleast_1d(np.asarray(state1[1], float)), float(state1[2]))
    qm, vm, Sm = 0.5 * (q0 + q1), 0.5 * (v0 + v1), 0.5 * (S0 + S1)
    dgU = sys.u_quotient(S0, S1)
    J = sys.J_SH(qm, vm, Sm, dgU)
    return sys.T_H * J

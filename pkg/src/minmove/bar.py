"""One-dimensional nonlinear elastic bar.

Reference domain ``(0, L)`` with ``m`` uniform cells.  Node 0 is clamped
(``eta(0) = 0``, the identity boundary map) and eliminated; nodes ``1..m``
are the unknowns and the right end is free.  The energy is::

    E(eta) = sum_cells dx * [xi^-a + (svk/8) (xi^2 - 1)^2] + E2(eta)

with cell stretch ``xi_c = (eta_c - eta_{c-1}) / dx`` and either the linear
regularizer ``1/2 sum dx |D2 eta|^2`` or the nonlinear one
``1/q sum dx (1 + |D2 eta|)^(q-2) |D2 eta|^2`` over interior nodes.  A state
with a non-positive cell stretch has infinite energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq

from .energy import EnergyModel, LocalEnergy

LINEAR = "linear"
NONLINEAR = "nonlinear"


@dataclass(frozen=True)
class BarMesh:
    m: int = 32
    length: float = 1.0
    a: float = 2.0
    svk: float = 0.0
    regularizer: str = LINEAR
    q: float = 3.0

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ValueError("bar needs at least 2 cells")
        if self.length <= 0:
            raise ValueError("length must be positive")
        if self.a <= 0:
            raise ValueError("compression exponent a must be positive")
        if self.svk < 0:
            raise ValueError("svk coefficient must be non-negative")
        if self.regularizer not in (LINEAR, NONLINEAR):
            raise ValueError(f"regularizer must be {LINEAR!r} or {NONLINEAR!r}")
        # q > n = 1 is required; q >= 2 keeps the regularizer uniformly convex
        if self.regularizer == NONLINEAR and self.q < 2:
            raise ValueError("nonlinear regularizer needs q >= 2")

    @property
    def dx(self) -> float:
        return self.length / self.m

    @property
    def nodes(self) -> np.ndarray:
        """Reference positions of the unknown nodes ``1..m``."""
        return self.dx * np.arange(1, self.m + 1)

    @cached_property
    def grad_op(self) -> np.ndarray:
        """Cell stretch operator, ``xi = G @ eta`` (m x m)."""
        G = np.eye(self.m) - np.eye(self.m, k=-1)
        return G / self.dx

    @cached_property
    def curv_op(self) -> np.ndarray:
        """Second difference at interior nodes ``1..m-1`` (m-1 x m)."""
        m = self.m
        L = np.zeros((m - 1, m))
        for r in range(m - 1):
            # row r is node i = r + 1; neighbours i - 1 (dropped for i = 1) and i + 1
            L[r, r] = -2.0
            L[r, r + 1] = 1.0
            if r > 0:
                L[r, r - 1] = 1.0
        return L / self.dx**2

    # constitutive density -------------------------------------------------

    def density(self, xi):
        return xi ** (-self.a) + 0.125 * self.svk * (xi * xi - 1.0) ** 2

    def density_d1(self, xi):
        return -self.a * xi ** (-self.a - 1.0) + 0.5 * self.svk * xi * (xi * xi - 1.0)

    def density_d2(self, xi):
        return self.a * (self.a + 1.0) * xi ** (-self.a - 2.0) + 0.5 * self.svk * (3.0 * xi * xi - 1.0)

    # regularizer ----------------------------------------------------------

    def _phi(self, t):
        s = np.abs(t)
        if self.regularizer == LINEAR:
            return 0.5 * t * t
        return (1.0 + s) ** (self.q - 2.0) * t * t / self.q

    def _phi_d1(self, t):
        if self.regularizer == LINEAR:
            return t
        s = np.abs(t)
        q = self.q
        return ((q - 2.0) * (1.0 + s) ** (q - 3.0) * s * t + 2.0 * t * (1.0 + s) ** (q - 2.0)) / q

    def _phi_d2(self, t):
        if self.regularizer == LINEAR:
            return np.ones_like(t)
        s = np.abs(t)
        q = self.q
        poly = (q - 2.0) * (q - 3.0) * s * s + 4.0 * (q - 2.0) * s * (1.0 + s) + 2.0 * (1.0 + s) ** 2
        return (1.0 + s) ** (q - 4.0) * poly / q

    @property
    def reg_convexity(self) -> float:
        """Lower bound on the regularizer's second derivative per unit weight."""
        return 1.0 if self.regularizer == LINEAR else 2.0 / self.q

    # sublevel analysis ----------------------------------------------------

    def curvature_bound_sq(self, K: float) -> float:
        """Bound on ``sum dx |D2 eta|^2`` over ``{E <= K}`` (E1 is non-negative)."""
        return 2.0 * K if self.regularizer == LINEAR else self.q * K

    def _holder_offsets(self, K: float) -> np.ndarray:
        # |xi_j - xi_i| <= sqrt(|j - i| dx * S) by Cauchy-Schwarz on the curvature sum
        j = np.arange(self.m)
        return np.sqrt(self.curvature_bound_sq(K) * j * self.dx)

    def det_lower_bound(self, K: float) -> float:
        """Certified ``eps0`` with ``xi >= eps0`` on every cell whenever ``E <= K``.

        If the smallest stretch is ``s``, every other cell at distance ``r``
        has stretch at most ``s + sqrt(S r)``, so the barrier part alone is
        at least ``sum_j dx (s + sqrt(S j dx))^-a``.  The bound is the root
        of that expression set equal to ``K``, placing the minimum at an end
        of the bar (the placement with the smallest sum).
        """
        if K <= 0:
            return math.inf
        dx, a = self.dx, self.a
        off = self._holder_offsets(K)

        def excess(s):
            return float(np.sum(dx * (s + off) ** (-a))) - K

        lo = (dx / K) ** (1.0 / a)  # single-cell bound; excess(lo) >= 0
        if excess(lo) <= 0:
            return lo
        hi = lo
        while excess(hi) > 0:
            hi *= 2.0
        return brentq(excess, lo, hi, xtol=1e-14, rtol=1e-13)

    def stretch_upper_bound(self, K: float) -> float:
        """Certified upper bound on cell stretches over ``{E <= K}``.

        Only the Saint Venant-Kirchhoff term controls large stretches;
        without it the bound is infinite.
        """
        if self.svk == 0:
            return math.inf
        dx, c = self.dx, self.svk
        off = self._holder_offsets(K)

        def excess(s):
            low = np.maximum(s - off, 0.0)
            term = np.where(low >= 1.0, (low * low - 1.0) ** 2, 0.0)
            return 0.125 * c * float(np.sum(dx * term)) - K

        hi = 2.0
        while excess(hi) < 0:
            hi *= 2.0
        return brentq(excess, 1.0, hi, xtol=1e-14, rtol=1e-13)

    def density_curvature_bound(self, K: float) -> float:
        """``max |e''|`` on ``[eps0(K), xi_max(K)]``.

        ``e''`` is convex in ``xi`` so its maximum sits at an endpoint; its
        negative part never exceeds ``svk / 2``.
        """
        lo = self.det_lower_bound(K)
        hi = self.stretch_upper_bound(K)
        vals = [abs(self.density_d2(lo)), 0.5 * self.svk]
        if math.isfinite(hi):
            vals.append(abs(self.density_d2(hi)))
        return max(vals)

    def noncvx_constant(self, K: float) -> float:
        """Non-convexity constant in the discrete L2 norm.

        Per cell, Taylor's theorem loses at most ``L1/2 |xi_y - xi_x|^2``
        with ``L1 = max |e''|``.  The regularizer gains at least
        ``(conv/2) ||D2 delta||^2``.  The worst net loss per unit
        ``||delta||_H^2`` is the top generalized eigenvalue of
        ``(L1/2) G' W G - (conv/2) L' W L`` against ``W``.
        """
        if K <= 0:
            return 0.0
        dx = self.dx
        L1 = self.density_curvature_bound(K)
        G, L = self.grad_op, self.curv_op
        A = 0.5 * L1 * dx * (G.T @ G) - 0.5 * self.reg_convexity * dx * (L.T @ L)
        B = dx * np.eye(self.m)
        top = eigh(A, B, eigvals_only=True, subset_by_index=[self.m - 1, self.m - 1])[0]
        return max(0.0, float(top))


def stretches(mesh: BarMesh, eta: np.ndarray) -> np.ndarray:
    return mesh.grad_op @ eta


def bar_energy(mesh: BarMesh, eta: np.ndarray) -> float:
    xi = stretches(mesh, eta)
    if not np.all(xi > 0) or not np.all(np.isfinite(xi)):
        return math.inf
    dx = mesh.dx
    e1 = dx * float(np.sum(mesh.density(xi)))
    e2 = dx * float(np.sum(mesh._phi(mesh.curv_op @ eta)))
    return e1 + e2


class InadmissibleState(ValueError):
    """A bar state with a non-positive cell stretch."""


def _check_admissible(mesh: BarMesh, eta: np.ndarray) -> np.ndarray:
    xi = stretches(mesh, eta)
    if not np.all(xi > 0):
        raise InadmissibleState("cell stretch must be positive")
    return xi


def bar_gradient(mesh: BarMesh, eta: np.ndarray) -> np.ndarray:
    xi = _check_admissible(mesh, eta)
    dx = mesh.dx
    L = mesh.curv_op
    return dx * (mesh.grad_op.T @ mesh.density_d1(xi)) + dx * (L.T @ mesh._phi_d1(L @ eta))


def bar_hessian(mesh: BarMesh, eta: np.ndarray) -> np.ndarray:
    xi = _check_admissible(mesh, eta)
    dx = mesh.dx
    G, L = mesh.grad_op, mesh.curv_op
    w1 = dx * mesh.density_d2(xi)
    w2 = dx * mesh._phi_d2(L @ eta)
    return G.T @ (w1[:, None] * G) + L.T @ (w2[:, None] * L)


class _BarLocal(LocalEnergy):
    """Bar energy around a base state.

    Stretches and curvatures of the base are computed once; the increment's
    contributions are added afterwards.  Forming ``L @ eta`` afresh each time
    loses about ``eps / dx^2`` absolute accuracy, which ``L.T`` amplifies
    again and which would put a floor near 1e-10 under the solver residual.
    """

    def __init__(self, model: EnergyModel, mesh: BarMesh, base: np.ndarray):
        super().__init__(model, base)
        self.mesh = mesh
        self.xi0 = mesh.grad_op @ self.base
        self.k0 = mesh.curv_op @ self.base

    def _fields(self, delta):
        return self.xi0 + self.mesh.grad_op @ delta, self.k0 + self.mesh.curv_op @ delta

    def value(self, delta):
        xi, kap = self._fields(delta)
        if not np.all(xi > 0) or not np.all(np.isfinite(xi)):
            return math.inf
        mesh = self.mesh
        return mesh.dx * float(np.sum(mesh.density(xi))) + mesh.dx * float(np.sum(mesh._phi(kap)))

    def gradient(self, delta):
        xi, kap = self._fields(delta)
        if not np.all(xi > 0):
            raise InadmissibleState("cell stretch must be positive")
        mesh = self.mesh
        return mesh.dx * (mesh.grad_op.T @ mesh.density_d1(xi)) + mesh.dx * (mesh.curv_op.T @ mesh._phi_d1(kap))

    def hessian(self, delta):
        xi, kap = self._fields(delta)
        if not np.all(xi > 0):
            raise InadmissibleState("cell stretch must be positive")
        mesh = self.mesh
        G, L = mesh.grad_op, mesh.curv_op
        w1 = mesh.dx * mesh.density_d2(xi)
        w2 = mesh.dx * mesh._phi_d2(kap)
        return G.T @ (w1[:, None] * G) + L.T @ (w2[:, None] * L)


def bar_model(mesh: BarMesh) -> EnergyModel:
    """Wrap the bar energy as an :class:`EnergyModel` with H weights ``dx``."""
    model = EnergyModel(
        name="bar",
        dim=mesh.m,
        value=lambda eta: bar_energy(mesh, np.asarray(eta, dtype=float)),
        gradient=lambda eta: bar_gradient(mesh, np.asarray(eta, dtype=float)),
        hessian=lambda eta: bar_hessian(mesh, np.asarray(eta, dtype=float)),
        is_admissible=lambda eta: bool(np.all(stretches(mesh, np.asarray(eta, dtype=float)) > 0)),
        noncvx_constant=mesh.noncvx_constant,
        weights=np.full(mesh.m, mesh.dx),
        e_min=0.0,
        regularizer=(mesh.curv_op, np.full(mesh.m - 1, mesh.dx)),
        params={
            "m": mesh.m,
            "length": mesh.length,
            "a": mesh.a,
            "svk": mesh.svk,
            "regularizer": mesh.regularizer,
            "q": mesh.q,
        },
        localize=lambda base: _BarLocal(model, mesh, base),
    )
    return model


def identity_state(mesh: BarMesh) -> np.ndarray:
    return mesh.nodes.copy()


def sine_perturbation(mesh: BarMesh, amplitude: float) -> np.ndarray:
    """``x + amplitude * sin(pi x / L)`` at the unknown nodes."""
    x = mesh.nodes
    return x + amplitude * np.sin(np.pi * x / mesh.length)

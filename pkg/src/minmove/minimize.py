"""Inner solver for one minimizing-movements step.

Each step minimizes the incremental functional::

    J(eta) = (tau h / 2) || ((eta - eta_prev)/tau - v_prev) / h ||_H^2
             + (eps tau / 2) || Reg((eta - eta_prev)/tau) ||^2
             + E(eta) - <f, eta>_H

The unknown is the increment ``delta = eta - eta_prev``: the kinetic term
has curvature ``1/(tau h)``, and working with ``eta`` directly would let
rounding in ``eta`` swamp the residual for small steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .energy import EnergyModel, local_energy

#: line search gives up once the step fraction falls below this
MIN_STEP_FRACTION = 1e-16


class DomainExhausted(RuntimeError):
    """Line search could not find an admissible decrease: the iterate is
    pinned against the boundary of the admissible set."""

    def __init__(self, message: str, index: Optional[tuple[int, int]] = None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class SolverSettings:
    grad_tol: Optional[float] = None  # None -> min(1e-10, tau^3)
    max_iters: int = 500
    armijo_slope: float = 1e-4
    backtrack_factor: float = 0.5
    initial_guess_mode: str = "extrapolated"

    def __post_init__(self) -> None:
        if self.grad_tol is not None and self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.armijo_slope < 1:
            raise ValueError("armijo_slope must lie in (0, 1)")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.initial_guess_mode not in ("extrapolated", "previous"):
            raise ValueError("initial_guess_mode must be 'extrapolated' or 'previous'")

    def tolerance(self, tau: float) -> float:
        return self.grad_tol if self.grad_tol is not None else min(1e-10, tau**3)


@dataclass
class IncrementalProblem:
    model: EnergyModel
    eta_prev: np.ndarray
    v_prev_window: np.ndarray
    f_kl: np.ndarray
    tau: float
    h: float
    eps_dissipation: float = 0.0

    def __post_init__(self) -> None:
        if not 0 < self.tau <= self.h * (1 + 1e-12):
            raise ValueError("need 0 < tau <= h")
        if self.eps_dissipation < 0:
            raise ValueError("dissipation coefficient must be non-negative")
        if self.eps_dissipation > 0 and self.model.regularizer is None:
            raise ValueError(f"model {self.model.name!r} has no regularizer for dissipation")
        self.eta_prev = np.asarray(self.eta_prev, dtype=float)
        self.v_prev_window = np.asarray(self.v_prev_window, dtype=float)
        self.f_kl = np.asarray(self.f_kl, dtype=float)
        self._energy = local_energy(self.model, self.eta_prev)

    # functions of the increment ------------------------------------------

    def _accel(self, delta):
        return (delta / self.tau - self.v_prev_window) / self.h

    def value_inc(self, delta: np.ndarray) -> float:
        eta = self.eta_prev + delta
        e = self._energy.value(delta)
        if not math.isfinite(e):
            return math.inf
        w = self.model.weights
        acc = self._accel(delta)
        j = 0.5 * self.tau * self.h * float(np.dot(w * acc, acc)) + e - float(np.dot(w * self.f_kl, eta))
        if self.eps_dissipation > 0:
            L, wl = self.model.regularizer
            r = L @ (delta / self.tau)
            j += 0.5 * self.eps_dissipation * self.tau * float(np.dot(wl * r, r))
        return j

    def gradient_inc(self, delta: np.ndarray) -> np.ndarray:
        w = self.model.weights
        g = w * self._accel(delta) + self._energy.gradient(delta) - w * self.f_kl
        if self.eps_dissipation > 0:
            L, wl = self.model.regularizer
            g = g + self.eps_dissipation * (L.T @ (wl * (L @ (delta / self.tau))))
        return g

    def hessian_inc(self, delta: np.ndarray) -> Optional[np.ndarray]:
        H = self._energy.hessian(delta)
        if H is None:
            return None
        H = H + np.diag(self.model.weights / (self.tau * self.h))
        if self.eps_dissipation > 0:
            L, wl = self.model.regularizer
            H = H + (self.eps_dissipation / self.tau) * (L.T @ (wl[:, None] * L))
        return H

    def residual_norm(self, g: np.ndarray) -> float:
        """H-norm of the Riesz representative of the gradient."""
        return math.sqrt(float(np.dot(g / self.model.weights, g)))


def incremental_value(p: IncrementalProblem, eta: np.ndarray) -> float:
    return p.value_inc(np.asarray(eta, dtype=float) - p.eta_prev)


def incremental_gradient(p: IncrementalProblem, eta: np.ndarray) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    if not p.model.is_admissible(eta):
        raise ValueError("incremental gradient requested at an inadmissible state")
    return p.gradient_inc(eta - p.eta_prev)


@dataclass(frozen=True)
class StepResult:
    eta: np.ndarray
    iterations: int
    residual: float
    converged: bool
    value: float


def _descent_direction(p: IncrementalProblem, delta, g):
    H = p.hessian_inc(delta)
    if H is not None:
        try:
            c = np.linalg.cholesky(H)
            y = np.linalg.solve(c, -g)
            return np.linalg.solve(c.T, y)
        except np.linalg.LinAlgError:
            pass
    # preconditioned steepest descent in the H metric, scaled by the kinetic curvature
    return -(p.tau * p.h) * g / p.model.weights


def _minimize_from(p: IncrementalProblem, s: SolverSettings, delta0: np.ndarray) -> StepResult:
    tol = s.tolerance(p.tau)
    delta = delta0.copy()
    j = p.value_inc(delta)
    g = p.gradient_inc(delta)
    res = p.residual_norm(g)
    it = 0
    while res > tol and it < s.max_iters:
        it += 1
        d = _descent_direction(p, delta, g)
        slope = float(np.dot(g, d))
        if slope >= 0:
            d = -(p.tau * p.h) * g / p.model.weights
            slope = float(np.dot(g, d))
        t = 1.0
        # roundoff allowance: near convergence J changes below its own ulp
        noise = 8 * np.finfo(float).eps * (abs(j) + 1.0)
        hit_barrier = False
        while True:
            trial = delta + t * d
            jt = p.value_inc(trial)
            if not math.isfinite(jt):
                hit_barrier = True
            elif jt <= j + s.armijo_slope * t * slope + noise:
                break
            t *= s.backtrack_factor
            if t < MIN_STEP_FRACTION:
                if hit_barrier:
                    raise DomainExhausted("line search collapsed against the admissible boundary")
                # no representable decrease left; report where we stand
                return StepResult(p.eta_prev + delta, it, res, False, j)
        delta, j = trial, jt
        g = p.gradient_inc(delta)
        res = p.residual_norm(g)
    return StepResult(p.eta_prev + delta, it, res, res <= tol, j)


def solve_step(p: IncrementalProblem, s: SolverSettings = SolverSettings()) -> StepResult:
    """Minimize the incremental functional starting from the configured guess.

    The result never has a larger incremental value than ``eta_prev``
    itself: if the run from the extrapolated guess lands in a worse basin,
    the solve is repeated from ``eta_prev`` and the better point kept.
    """
    if not p.model.is_admissible(p.eta_prev) or not math.isfinite(p.model.value(p.eta_prev)):
        raise ValueError("previous state must be admissible")
    zero = np.zeros_like(p.eta_prev)
    j_prev = p.value_inc(zero)
    starts = []
    if s.initial_guess_mode == "extrapolated":
        guess = p.tau * p.v_prev_window
        if math.isfinite(p.value_inc(guess)):
            starts.append(guess)
    starts.append(zero)

    best = None
    for start in starts:
        r = _minimize_from(p, s, start)
        if best is None or (r.converged and not best.converged) or (
            r.converged == best.converged and r.value < best.value
        ):
            best = r
        if best.converged and best.value <= j_prev:
            break
    return best


def convexity_threshold(model: EnergyModel, K: float) -> float:
    """Largest ``tau * h`` for which the incremental functional is certainly
    strictly convex on the sublevel ``{E <= K}``.

    The kinetic curvature ``1/(tau h)`` (per unit weight) must beat the
    worst negative curvature of ``E``, at most ``2 C(K)``.
    """
    c = model.noncvx_constant(K)
    return math.inf if c == 0 else 1.0 / (2.0 * c)

"""Two-scale minimizing-movements driver.

Times are ``t_k^l = l h + k tau`` with ``h = N tau`` and ``T = M h``.  The
state ``eta_k^l`` minimizes the incremental functional whose previous-window
velocity is ``(eta_k^{l-1} - eta_{k-1}^{l-1}) / tau``, or ``eta_star`` for
the first window.  Windows chain through ``eta_0^{l+1} = eta_N^l``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .energy import EnergyModel
from .minimize import (
    DomainExhausted,
    IncrementalProblem,
    SolverSettings,
    solve_step,
)

_DIVISIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class SchemeParams:
    tau: float
    N: int
    M: int
    eps_dissipation: float = 0.0
    save_stride: int = 1

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.N < 1 or self.M < 1:
            raise ValueError("N and M must be positive integers")
        if self.eps_dissipation < 0:
            raise ValueError("dissipation coefficient must be non-negative")
        if self.save_stride < 1:
            raise ValueError("save_stride must be >= 1")

    @property
    def h(self) -> float:
        return self.N * self.tau

    @property
    def T(self) -> float:
        return self.M * self.N * self.tau

    @property
    def steps(self) -> int:
        return self.M * self.N

    @classmethod
    def from_times(cls, tau: float, h: float, T: float, **kw) -> "SchemeParams":
        """Build from ``tau``, ``h``, ``T``; rejects non-integer ratios."""
        if tau <= 0 or h <= 0 or T <= 0:
            raise ValueError("tau, h and T must be positive")
        n = round(h / tau)
        if n < 1 or abs(n * tau - h) > _DIVISIBILITY_TOL * h:
            raise ValueError(f"h = {h} is not an integer multiple of tau = {tau}")
        m = round(T / h)
        if m < 1 or abs(m * h - T) > _DIVISIBILITY_TOL * T:
            raise ValueError(f"T = {T} is not an integer multiple of h = {h}")
        return cls(tau=tau, N=int(n), M=int(m), **kw)


# forcing --------------------------------------------------------------------


def _trapezoid_kernel(u: np.ndarray, tau: float, h: float) -> np.ndarray:
    """Density of ``s + sigma`` for ``s ~ U[0, h]``, ``sigma ~ U[0, tau]``."""
    rise = u / (tau * h)
    fall = (tau + h - u) / (tau * h)
    return np.clip(np.minimum(np.minimum(rise, fall), 1.0 / h), 0.0, None)


@dataclass(frozen=True)
class Forcing:
    """Right-hand side ``f(t)``, extended by zero outside ``[0, T]``.

    ``pieces`` is a list of ``(start, end, coeffs)`` with ``coeffs[j]`` the
    coefficient (scalar or vector) of ``(t - start)**j``.  ``func`` holds a
    general callable instead; its averages use high-order Gauss-Legendre
    and are not exact.
    """

    kind: str
    pieces: tuple = ()
    func: Optional[Callable[[float], np.ndarray]] = None
    T: Optional[float] = None
    spec: dict = field(default_factory=dict)

    # construction ----------------------------------------------------------

    @classmethod
    def zero(cls) -> "Forcing":
        return cls("zero", spec={"kind": "zero"})

    @classmethod
    def constant(cls, value, T: Optional[float] = None) -> "Forcing":
        c = np.atleast_1d(np.asarray(value, dtype=float))
        return cls("constant", pieces=((-math.inf, math.inf, (c,)),), T=T,
                   spec={"kind": "constant", "value": c.tolist()})

    @classmethod
    def polynomial(cls, coeffs: Sequence, T: Optional[float] = None) -> "Forcing":
        """``f(t) = sum_j coeffs[j] t**j``."""
        cs = tuple(np.atleast_1d(np.asarray(c, dtype=float)) for c in coeffs)
        return cls("polynomial", pieces=((-math.inf, math.inf, cs),), T=T,
                   spec={"kind": "polynomial", "coeffs": [c.tolist() for c in cs]})

    @classmethod
    def piecewise(cls, breaks: Sequence[float], coeffs: Sequence[Sequence], T: Optional[float] = None) -> "Forcing":
        """Polynomial pieces on ``[breaks[i], breaks[i+1])`` in the local variable."""
        if len(breaks) != len(coeffs) + 1:
            raise ValueError("need len(breaks) == len(coeffs) + 1")
        if any(b1 <= b0 for b0, b1 in zip(breaks, breaks[1:])):
            raise ValueError("breaks must increase strictly")
        pieces = tuple(
            (float(breaks[i]), float(breaks[i + 1]), tuple(np.atleast_1d(np.asarray(c, dtype=float)) for c in cs))
            for i, cs in enumerate(coeffs)
        )
        return cls("piecewise", pieces=pieces, T=T,
                   spec={"kind": "piecewise", "breaks": list(map(float, breaks)),
                         "coeffs": [[np.atleast_1d(c).tolist() for c in cs] for cs in coeffs]})

    @classmethod
    def from_function(cls, func: Callable[[float], np.ndarray], T: Optional[float] = None) -> "Forcing":
        return cls("function", func=func, T=T, spec={"kind": "function"})

    def with_horizon(self, T: float) -> "Forcing":
        return replace(self, T=T)

    # evaluation ------------------------------------------------------------

    def _support(self) -> tuple[float, float]:
        return (0.0, math.inf if self.T is None else self.T)

    def _piece_value(self, piece, t, deriv=0):
        start, _, cs = piece
        x = t - (start if math.isfinite(start) else 0.0)
        out = np.zeros_like(cs[0])
        for j in range(deriv, len(cs)):
            fac = math.prod(range(j - deriv + 1, j + 1))
            out = out + fac * cs[j] * x ** (j - deriv)
        return out

    def _find_piece(self, t):
        for p in self.pieces:
            if p[0] <= t < p[1]:
                return p
        return None

    def __call__(self, t: float, dim: int = 1) -> np.ndarray:
        lo, hi = self._support()
        if self.kind == "zero" or t < lo or t > hi:
            return np.zeros(dim)
        if self.kind == "function":
            return np.broadcast_to(np.asarray(self.func(t), dtype=float), (dim,)).copy()
        p = self._find_piece(t)
        if p is None and self.pieces and t == self.pieces[-1][1]:
            p = self.pieces[-1]
        if p is None:
            return np.zeros(dim)
        return np.broadcast_to(self._piece_value(p, t), (dim,)).copy()

    def derivative(self, t: float, dim: int = 1) -> np.ndarray:
        lo, hi = self._support()
        if self.kind == "zero" or t < lo or t > hi:
            return np.zeros(dim)
        if self.kind == "function":
            e = 1e-6 * max(1.0, abs(t))
            return (self(t + e, dim) - self(t - e, dim)) / (2 * e)
        p = self._find_piece(t)
        if p is None:
            return np.zeros(dim)
        return np.broadcast_to(self._piece_value(p, t, deriv=1), (dim,)).copy()

    def _degree(self) -> int:
        return max((len(p[2]) - 1 for p in self.pieces), default=0)

    def _segments(self, a: float, b: float, extra: Sequence[float] = ()) -> list[float]:
        lo, hi = self._support()
        a, b = max(a, lo), min(b, hi)
        if b <= a:
            return []
        pts = {a, b, *[x for x in extra if a < x < b]}
        for p in self.pieces:
            for x in p[:2]:
                if a < x < b:
                    pts.add(x)
        return sorted(pts)

    def _integrate(self, pts, weight, dim, extra_degree):
        """Gauss-Legendre over each segment of ``pts`` of ``f(u) * weight(u)``."""
        if self.kind == "function":
            n = 10
        else:
            n = (self._degree() + extra_degree) // 2 + 1
        xg, wg = np.polynomial.legendre.leggauss(n)
        total = np.zeros(dim)
        for a, b in zip(pts, pts[1:]):
            mid, half = 0.5 * (a + b), 0.5 * (b - a)
            for x, w in zip(xg, wg):
                u = mid + half * x
                total += half * w * weight(u) * self(u, dim)
        return total

    def average(self, t0: float, tau: float, h: float, dim: int = 1) -> np.ndarray:
        """Double average of ``f(t0 + s + sigma)`` over ``s in [0,h]``, ``sigma in [0,tau]``."""
        if self.kind == "zero":
            return np.zeros(dim)
        pts = self._segments(t0, t0 + tau + h, (t0 + tau, t0 + h))
        if not pts:
            return np.zeros(dim)
        return self._integrate(pts, lambda u: _trapezoid_kernel(np.asarray(u - t0), tau, h), dim, 1)

    def l2_norm_sq(self, T: float, weights: Optional[np.ndarray] = None) -> float:
        """``int_0^T ||f(t)||_H^2 dt`` (exact for polynomial pieces)."""
        if self.kind == "zero":
            return 0.0
        w = np.ones(1) if weights is None else np.asarray(weights)
        dim = w.size
        pts = self._segments(0.0, T)
        if not pts:
            return 0.0
        if self.kind == "function":
            n = 10
        else:
            n = self._degree() + 1
        xg, wg = np.polynomial.legendre.leggauss(n)
        total = 0.0
        for a, b in zip(pts, pts[1:]):
            mid, half = 0.5 * (a + b), 0.5 * (b - a)
            for x, ww in zip(xg, wg):
                v = self(mid + half * x, dim)
                total += half * ww * float(np.dot(w * v, v))
        return total


def average_forcing(f: Forcing, k: int, ell: int, tau: float, h: float, dim: int = 1) -> np.ndarray:
    """Forcing value for step ``k`` of window ``ell``.

    Averages over ``[t_{k-1}^{ell-1}, t_{k-1}^{ell-1} + tau + h]`` with the
    double-average weight; times outside ``[0, T]`` contribute zero.
    """
    if k < 1 or ell < 0:
        raise ValueError("need k >= 1 and ell >= 0")
    t0 = (ell - 1) * h + (k - 1) * tau
    return f.average(t0, tau, h, dim)


# trajectory -----------------------------------------------------------------


@dataclass
class Trajectory:
    """States ``eta_k^l`` stored as ``states[l, k]`` with shape (M, N+1, m)."""

    params: SchemeParams
    model_name: str
    eta_star: np.ndarray
    states: np.ndarray
    forcing_values: np.ndarray
    iterations: np.ndarray
    residuals: np.ndarray
    converged: np.ndarray
    energy_defect: Optional[np.ndarray] = None
    energy_slack: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    def flat_states(self) -> np.ndarray:
        """``eta_0^0, eta_1^0, ..., eta_N^0, eta_1^1, ...`` (length M N + 1)."""
        M, N1, m = self.states.shape
        head = self.states[0, :1]
        tail = self.states[:, 1:].reshape(-1, m)
        return np.concatenate([head, tail], axis=0)

    def flat_times(self) -> np.ndarray:
        return self.params.tau * np.arange(self.params.steps + 1)

    def times(self) -> np.ndarray:
        """``t_k^l`` with shape (M, N+1)."""
        p = self.params
        return p.h * np.arange(p.M)[:, None] + p.tau * np.arange(p.N + 1)[None, :]

    def velocities(self) -> np.ndarray:
        """``(eta_k^l - eta_{k-1}^l)/tau`` with shape (M, N, m); column ``k-1`` holds step ``k``."""
        return np.diff(self.states, axis=1) / self.params.tau

    def final_state(self) -> np.ndarray:
        return self.states[-1, -1].copy()


def _interval_index(traj: Trajectory, t) -> np.ndarray:
    p = traj.params
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > p.T * (1 + 1e-12)):
        raise ValueError(f"t outside [0, {p.T}]")
    # rounding guards t = k tau evaluating to k - 1e-16
    j = np.floor(np.round(t / p.tau, 9)).astype(int) + 1
    return np.minimum(j, p.steps)


def eval_piecewise_constant(traj: Trajectory, t) -> np.ndarray:
    """``eta_k^l`` on ``[t_{k-1}^l, t_k^l)``; at ``T`` the final state.

    At ``t = 0`` this is ``eta_1^0`` (the first interval's value).
    """
    j = _interval_index(traj, t)
    return traj.flat_states()[j]


def eval_piecewise_affine(traj: Trajectory, t) -> np.ndarray:
    """Linear interpolation between consecutive states."""
    j = _interval_index(traj, t)
    s = traj.flat_states()
    t = np.asarray(t, dtype=float)
    theta = (t - (j - 1) * traj.params.tau) / traj.params.tau
    theta = np.clip(theta, 0.0, 1.0)[..., None] if np.ndim(t) else float(np.clip(theta, 0.0, 1.0))
    return (1.0 - theta) * s[j - 1] + theta * s[j]


# driver ---------------------------------------------------------------------


class SchemeAborted(DomainExhausted):
    """A step could not be completed; carries the partial trajectory."""

    def __init__(self, message, index, partial: Trajectory):
        super().__init__(message, index)
        self.partial = partial


def run(
    model: EnergyModel,
    params: SchemeParams,
    eta0,
    eta_star,
    forcing: Forcing = Forcing.zero(),
    settings: SolverSettings = SolverSettings(),
    audit: bool = False,
) -> Trajectory:
    """March all windows.

    With ``audit`` every accepted step records the defect of the discrete
    energy inequality obtained by testing the Euler-Lagrange equation with
    the new velocity, together with the slack the solver tolerance allows.
    """
    m = model.dim
    eta0 = np.broadcast_to(np.asarray(eta0, dtype=float), (m,)).copy()
    eta_star = np.broadcast_to(np.asarray(eta_star, dtype=float), (m,)).copy()
    if not model.is_admissible(eta0) or not math.isfinite(model.value(eta0)):
        raise ValueError("initial state is not admissible")
    if params.eps_dissipation > 0 and model.regularizer is None:
        raise ValueError(f"dissipation needs a regularizer; model {model.name!r} has none")
    if forcing.T is None and forcing.kind != "zero":
        forcing = forcing.with_horizon(params.T)

    M, N, tau, h = params.M, params.N, params.tau, params.h
    states = np.empty((M, N + 1, m))
    fvals = np.zeros((M, N + 1, m))
    iters = np.zeros((M, N + 1), dtype=int)
    res = np.zeros((M, N + 1))
    conv = np.ones((M, N + 1), dtype=bool)
    defect = np.zeros((M, N + 1)) if audit else None
    slack = np.zeros((M, N + 1)) if audit else None
    tol = settings.tolerance(tau)

    traj = Trajectory(params, model.name, eta_star, states, fvals, iters, res, conv, defect, slack)
    v_prev = np.tile(eta_star, (N + 1, 1))
    for ell in range(M):
        states[ell, 0] = eta0 if ell == 0 else states[ell - 1, N]
        for k in range(1, N + 1):
            f = average_forcing(forcing, k, ell, tau, h, m)
            fvals[ell, k] = f
            prob = IncrementalProblem(model, states[ell, k - 1], v_prev[k], f, tau, h, params.eps_dissipation)
            try:
                r = solve_step(prob, settings)
            except DomainExhausted as exc:
                raise SchemeAborted(f"step (k={k}, l={ell}): {exc}", (k, ell), traj) from exc
            states[ell, k] = r.eta
            iters[ell, k] = r.iterations
            res[ell, k] = r.residual
            conv[ell, k] = r.converged
            if audit:
                defect[ell, k], slack[ell, k] = _energy_inequality(
                    model, states[ell, k - 1], states[ell, k], v_prev[k], f, tau, h, tol
                )
        v_prev[1:] = np.diff(states[ell], axis=0) / tau
    return traj


def _energy_inequality(model, eta_prev, eta_new, v_prev, f, tau, h, tol):
    """Return ``(lhs - rhs, allowed slack)`` for the per-step energy inequality."""
    v = (eta_new - eta_prev) / tau
    e_new, e_prev = model.value(eta_new), model.value(eta_prev)
    C = model.noncvx_constant(max(e_new, e_prev))
    kin_new = tau / (2 * h) * model.norm_sq(v)
    kin_prev = tau / (2 * h) * model.norm_sq(v_prev)
    lhs = kin_new + e_new
    rhs = kin_prev + e_prev + tau * model.inner(f, v) + C * tau**2 * model.norm_sq(v)
    v_norm = math.sqrt(model.norm_sq(v))
    roundoff = 64 * np.finfo(float).eps * (abs(e_new) + abs(e_prev) + kin_new + kin_prev + 1.0)
    return lhs - rhs, tol * v_norm * tau + roundoff

"""Reference solutions used to measure scheme errors.

* :func:`solve_limit_rk4` integrates ``x'' + DE(x) = f`` with classical RK4.
* :func:`solve_time_delayed` integrates the delayed equation
  ``x'(t) = x'(t - h) - h (DE(x(t)) - f(t))`` window by window, with
  ``x' = x_star`` on ``(-h, 0]``.
* :func:`exact_linear` is the closed form for the quadratic energy.

Dense output is piecewise cubic Hermite on each integration segment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .energy import EnergyModel
from .scheme import Forcing

DEFAULT_BLOWUP = 1e6


class ReferenceBlowUp(RuntimeError):
    """The integrated state left the configured bound."""


@dataclass
class _Segment:
    t: np.ndarray  # (n,)
    x: np.ndarray  # (n, m)
    xp: np.ndarray
    xpp: np.ndarray

    def __post_init__(self) -> None:
        self._x = CubicHermiteSpline(self.t, self.x, self.xp, axis=0)
        self._xp = CubicHermiteSpline(self.t, self.xp, self.xpp, axis=0)


@dataclass
class ReferenceSolution:
    """Dense solution ``t -> x(t)`` on ``[0, T]``.

    ``segments`` cover ``[0, T]`` consecutively; a segment boundary may
    carry a jump in ``x'`` (the delayed equation has one at every window
    boundary), so each segment is interpolated on its own.
    """

    method: str
    step: float
    T: float
    segments: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.segments[0].x.shape[1]

    def _locate(self, t: np.ndarray) -> np.ndarray:
        starts = np.array([s.t[0] for s in self.segments])
        idx = np.searchsorted(starts, t, side="right") - 1
        return np.clip(idx, 0, len(self.segments) - 1)

    def _eval(self, t, attr):
        t_arr = np.asarray(t, dtype=float)
        flat = np.atleast_1d(t_arr)
        if np.any(flat < -1e-12) or np.any(flat > self.T * (1 + 1e-12) + 1e-12):
            raise ValueError(f"t outside [0, {self.T}]")
        out = np.empty((flat.size, self.dim))
        idx = self._locate(flat)
        for s in np.unique(idx):
            mask = idx == s
            out[mask] = getattr(self.segments[s], attr)(flat[mask])
        return out[0] if t_arr.ndim == 0 else out.reshape(t_arr.shape + (self.dim,))

    def __call__(self, t):
        return self._eval(t, "_x")

    def derivative(self, t):
        return self._eval(t, "_xp")

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """All stored ``(t, x)`` samples (window boundaries appear twice)."""
        return (np.concatenate([s.t for s in self.segments]),
                np.concatenate([s.x for s in self.segments]))


@dataclass(frozen=True)
class ExactReference:
    """Closed-form reference ``x(t)`` wrapped to look like a solution."""

    fn: Callable[[np.ndarray], np.ndarray]
    T: float
    method: str = "exact"

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        val = np.asarray(self.fn(t_arr), dtype=float)
        return val[..., None] if val.shape == t_arr.shape else val


def _n_steps(span: float, step: float) -> int:
    if step <= 0:
        raise ValueError("step must be positive")
    return max(1, int(math.ceil(span / step - 1e-9)))


def _check(x, bound):
    if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > bound:
        raise ReferenceBlowUp(f"|x| exceeded {bound}")


def _hess_vec(model: EnergyModel, x, u):
    if model.hessian is not None:
        return np.asarray(model.hessian(x), dtype=float) @ u
    e = 1e-6 * (1.0 + np.linalg.norm(x)) / max(np.linalg.norm(u), 1e-300)
    return (np.asarray(model.gradient(x + e * u)) - np.asarray(model.gradient(x - e * u))) / (2 * e)


def solve_limit_rk4(
    model: EnergyModel,
    x0,
    x_star,
    forcing: Forcing,
    T: float,
    step: float,
    blowup: float = DEFAULT_BLOWUP,
) -> ReferenceSolution:
    """RK4 for ``(x, v)' = (v, f - DE(x))``; ``step`` is rounded down to divide ``T``."""
    m = model.dim
    if forcing.T is None and forcing.kind != "zero":
        forcing = forcing.with_horizon(T)
    n = _n_steps(T, step)
    dt = T / n

    def rhs(t, x, v):
        return v, forcing(t, m) - np.asarray(model.gradient(x), dtype=float)

    ts = dt * np.arange(n + 1)
    X = np.empty((n + 1, m))
    V = np.empty((n + 1, m))
    A = np.empty((n + 1, m))
    x = np.broadcast_to(np.asarray(x0, dtype=float), (m,)).copy()
    v = np.broadcast_to(np.asarray(x_star, dtype=float), (m,)).copy()
    X[0], V[0] = x, v
    A[0] = rhs(0.0, x, v)[1]
    for i in range(n):
        t = ts[i]
        k1x, k1v = rhs(t, x, v)
        k2x, k2v = rhs(t + dt / 2, x + dt / 2 * k1x, v + dt / 2 * k1v)
        k3x, k3v = rhs(t + dt / 2, x + dt / 2 * k2x, v + dt / 2 * k2v)
        k4x, k4v = rhs(t + dt, x + dt * k3x, v + dt * k3v)
        x = x + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        _check(x, blowup)
        X[i + 1], V[i + 1] = x, v
        A[i + 1] = rhs(ts[i + 1], x, v)[1]
    return ReferenceSolution("rk4-limit", dt, T, [_Segment(ts, X, V, A)])


def solve_time_delayed(
    model: EnergyModel,
    x0,
    x_star,
    h: float,
    T: float,
    substep: float,
    forcing: Forcing = Forcing.zero(),
    blowup: float = DEFAULT_BLOWUP,
) -> ReferenceSolution:
    """Integrate the delayed equation on windows ``[l h, (l+1) h]``.

    On each window the delayed velocity ``x'(t - h)`` is known from the
    previous window's stored samples (cubic Hermite between them), so RK4
    in ``x`` alone suffices.  ``x''`` is stored as well for the Hermite
    history: ``x''(t) = x''(t - h) - h (D2E(x) x' - f'(t))``.
    """
    n = round(h / substep)
    if n < 1 or abs(n * substep - h) > 1e-9 * h:
        raise ValueError(f"substep {substep} does not divide h = {h}")
    M = round(T / h)
    if M < 1 or abs(M * h - T) > 1e-9 * T:
        raise ValueError(f"h = {h} does not divide T = {T}")
    m = model.dim
    if forcing.T is None and forcing.kind != "zero":
        forcing = forcing.with_horizon(T)
    s = h / n

    x = np.broadcast_to(np.asarray(x0, dtype=float), (m,)).copy()
    hist_p = np.tile(np.broadcast_to(np.asarray(x_star, dtype=float), (m,)), (n + 1, 1))
    hist_pp = np.zeros((n + 1, m))
    segments = []
    for ell in range(M):
        t0 = ell * h
        ts = t0 + s * np.arange(n + 1)
        X = np.empty((n + 1, m))
        XP = np.empty((n + 1, m))
        XPP = np.empty((n + 1, m))

        def vel(j, x_, half=False):
            # history at node j, or at the midpoint of [j, j+1] (Hermite)
            if half:
                vh = 0.5 * (hist_p[j] + hist_p[j + 1]) + s / 8 * (hist_pp[j] - hist_pp[j + 1])
                t = ts[j] + s / 2
            else:
                vh = hist_p[j]
                t = ts[j]
            return vh - h * (np.asarray(model.gradient(x_), dtype=float) - forcing(t, m))

        def accel(j, x_, xp_):
            return hist_pp[j] - h * (_hess_vec(model, x_, xp_) - forcing.derivative(ts[j], m))

        X[0] = x
        XP[0] = vel(0, x)
        XPP[0] = accel(0, x, XP[0])
        for j in range(n):
            k1 = XP[j]
            k2 = vel(j, x + s / 2 * k1, half=True)
            k3 = vel(j, x + s / 2 * k2, half=True)
            k4 = vel(j + 1, x + s * k3)
            x = x + s / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            _check(x, blowup)
            X[j + 1] = x
            XP[j + 1] = vel(j + 1, x)
            XPP[j + 1] = accel(j + 1, x, XP[j + 1])
        segments.append(_Segment(ts, X, XP, XPP))
        hist_p, hist_pp = XP, XPP
    return ReferenceSolution("rk4-delayed", s, T, segments)


def exact_linear(omega: float, x0: float, x_star: float, t):
    """``x0 cos(w t) + (x_star / w) sin(w t)`` with ``w = sqrt(omega)``."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    w = math.sqrt(omega)
    t = np.asarray(t, dtype=float)
    out = x0 * np.cos(w * t) + (x_star / w) * np.sin(w * t)
    return float(out) if out.ndim == 0 else out


def exact_linear_reference(omega: float, x0: float, x_star: float, T: float) -> ExactReference:
    return ExactReference(lambda t: exact_linear(omega, x0, x_star, t), T, "exact-linear")

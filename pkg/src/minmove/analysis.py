"""Stability certificates, error metrics and convergence rates."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from .energy import EnergyModel
from .minimize import SolverSettings
from .reference import ReferenceSolution, solve_limit_rk4, solve_time_delayed
from .scheme import Forcing, SchemeParams, Trajectory, run

ERROR_FLOOR = np.finfo(float).tiny


@dataclass
class StabilityCertificate:
    """Both sides of the discrete stability bound, window by window.

    ``lhs[l] = max_k E(eta_k^l) - E_min + (1/2N) sum_{i<=k} ||v_i^l||^2`` and
    ``rhs[l] = (E(eta0) - E_min + ||eta_star||^2/2 + ||f||^2) exp(4 (1 + 2 C tau) h l)``.
    ``C`` is evaluated at ``K``, the largest energy met along the run.
    ``hypothesis_ok`` records whether ``h (1 + 2 C tau) <= 1/2``, the step
    restriction under which the bound is guaranteed.
    """

    lhs: np.ndarray
    rhs: np.ndarray
    C: float
    K: float
    hypothesis_ok: bool

    @property
    def margin(self) -> np.ndarray:
        return self.rhs - self.lhs

    @property
    def ok(self) -> bool:
        return bool(np.all(self.margin >= 0))

    def to_dict(self) -> dict:
        return {
            "C": self.C,
            "K": self.K,
            "hypothesis_ok": self.hypothesis_ok,
            "ok": self.ok,
            "lhs": self.lhs.tolist(),
            "rhs": self.rhs.tolist(),
            "margin": self.margin.tolist(),
        }


def stability_certificate(
    traj: Trajectory,
    model: EnergyModel,
    eta0,
    eta_star,
    f: Forcing = Forcing.zero(),
) -> StabilityCertificate:
    p = traj.params
    M, N = p.M, p.N
    energies = np.array([[model.value(traj.states[l, k]) for k in range(N + 1)] for l in range(M)])
    energies = energies - model.e_min
    vel = traj.velocities()  # (M, N, m)
    kin = np.einsum("lkm,m,lkm->lk", vel, model.weights, vel)
    running = np.cumsum(kin, axis=1) / (2 * N)
    lhs = np.max(energies[:, 1:] + running, axis=1)

    K = float(np.max(energies)) + model.e_min
    C = float(model.noncvx_constant(K))
    eta0 = np.broadcast_to(np.asarray(eta0, dtype=float), (model.dim,))
    eta_star = np.broadcast_to(np.asarray(eta_star, dtype=float), (model.dim,))
    fh = f if f.T is not None or f.kind == "zero" else f.with_horizon(p.T)
    base = model.value(eta0) - model.e_min + 0.5 * model.norm_sq(eta_star) + fh.l2_norm_sq(p.T, model.weights)
    growth = 4.0 * (1.0 + 2.0 * C * p.tau) * p.h
    with np.errstate(over="ignore"):
        rhs = base * np.exp(growth * np.arange(M))
    return StabilityCertificate(lhs, rhs, C, K, bool(p.h * (1.0 + 2.0 * C * p.tau) <= 0.5))


def _sample_times(traj: Trajectory, stride: int):
    """Left end, midpoint and (left-limit) right end of every ``stride``-th step."""
    tau = traj.params.tau
    j = np.arange(1, traj.params.steps + 1, stride)
    if j[-1] != traj.params.steps:
        j = np.append(j, traj.params.steps)
    t = np.concatenate([(j - 1) * tau, (j - 0.5) * tau, j * tau])
    idx = np.concatenate([j, j, j])
    return np.minimum(t, traj.params.T), idx


def linf_error(traj: Trajectory, ref, sample_stride: int = 1) -> float:
    """``max_t |eta_tau(t) - x(t)|`` for the piecewise-constant interpolant.

    On step ``j`` the interpolant equals ``eta_j``; it is compared with the
    reference at both ends of the step and at the midpoint.  At the right
    end this is the left limit, which is where the gap to a smooth
    reference is largest.
    """
    if sample_stride < 1:
        raise ValueError("sample_stride must be >= 1")
    if abs(getattr(ref, "T", traj.params.T) - traj.params.T) > 1e-9 * traj.params.T:
        raise ValueError("reference and trajectory horizons differ")
    t, idx = _sample_times(traj, sample_stride)
    x = np.asarray(ref(t), dtype=float).reshape(t.size, -1)
    diff = traj.flat_states()[idx] - x
    return float(np.max(np.linalg.norm(diff, axis=1)))


@dataclass
class RateReport:
    taus: list
    errors: list
    slope: float
    intercept: float
    fit_residual: float
    pair_slopes: list
    floored: bool = False
    margins: Optional[list] = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def rate_fit(pairs: Sequence[tuple[float, float]], margins: Optional[Sequence[float]] = None) -> RateReport:
    """Least-squares slope of ``log(error)`` against ``log(tau)``.

    Non-positive errors are replaced by the smallest normal double and the
    report is flagged.
    """
    if len(pairs) < 3:
        raise ValueError("need at least 3 refinement levels")
    taus = np.array([p[0] for p in pairs], dtype=float)
    errs = np.array([p[1] for p in pairs], dtype=float)
    if np.any(np.diff(taus) >= 0):
        raise ValueError("tau must be strictly decreasing")
    floored = bool(np.any(errs <= 0))
    errs_f = np.where(errs > 0, errs, ERROR_FLOOR)
    lt, le = np.log(taus), np.log(errs_f)
    A = np.vstack([lt, np.ones_like(lt)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, le, rcond=None)
    resid = float(np.sqrt(np.mean((A @ np.array([slope, icpt]) - le) ** 2)))
    pair = (np.diff(le) / np.diff(lt)).tolist()
    return RateReport(taus.tolist(), errs.tolist(), float(slope), float(icpt), resid, pair, floored,
                      None if margins is None else list(margins))


@dataclass
class TwoScaleStudy:
    h: float
    taus: list
    vs_delayed: list
    vs_limit: list
    delayed_rate: RateReport

    @property
    def plateau_ratio(self) -> float:
        return self.vs_limit[-1] / self.vs_limit[0]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["plateau_ratio"] = self.plateau_ratio
        return d


def two_scale_error_study(
    model: EnergyModel,
    eta0,
    eta_star,
    f: Forcing,
    h_fixed: float,
    tau_list: Sequence[float],
    T: float,
    settings: SolverSettings = SolverSettings(),
    ref_step: float = 1e-4,
    delayed_substep: Optional[float] = None,
    delayed: Optional[ReferenceSolution] = None,
    limit: Optional[ReferenceSolution] = None,
) -> TwoScaleStudy:
    """Fix ``h`` and refine ``tau``: error to the delayed solution should
    shrink like ``tau``, error to the limit solution should level off."""
    taus = sorted(set(tau_list), reverse=True)
    if len(taus) < 3:
        raise ValueError("need at least 3 values of tau")
    sub = delayed_substep if delayed_substep is not None else ref_step
    if delayed is None:
        delayed = solve_time_delayed(model, eta0, eta_star, h_fixed, T, sub, f)
    if limit is None:
        limit = solve_limit_rk4(model, eta0, eta_star, f, T, ref_step)
    e_del, e_lim = [], []
    for tau in taus:
        params = SchemeParams.from_times(tau, h_fixed, T)
        traj = run(model, params, eta0, eta_star, f, settings)
        e_del.append(linf_error(traj, delayed))
        e_lim.append(linf_error(traj, limit))
    rep = rate_fit(list(zip(taus, e_del)))
    return TwoScaleStudy(h_fixed, taus, e_del, e_lim, rep)

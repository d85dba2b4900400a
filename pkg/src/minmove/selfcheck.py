"""Quick invariant checks across all modules, for ``minmove selfcheck``."""

from __future__ import annotations

import math

import numpy as np

from . import gronwall
from .analysis import linf_error, rate_fit, stability_certificate
from .bar import BarMesh, bar_model, sine_perturbation
from .energy import check_gradient, double_well, quadratic
from .minimize import IncrementalProblem, SolverSettings, solve_step
from .reference import exact_linear_reference, solve_limit_rk4
from .scheme import Forcing, SchemeParams, average_forcing, run


def _gronwall(rng):
    worst = -math.inf
    for _ in range(200):
        N, M = int(rng.integers(1, 6)), int(rng.integers(2, 6))
        c = rng.uniform(0.01, 0.25) / N
        seq = gronwall.simulate_two_scale(rng, N, M, c, rng.uniform(0, 2), rng.uniform(0, 2),
                                          rng.uniform(0, 1, (M, N + 1)))
        wm = seq.window_maxima()
        for ell in range(1, M):
            worst = max(worst, wm[ell] / gronwall.two_scale_bound(seq, ell))
    return worst <= 1 + gronwall.REL_SLACK, f"max lhs/bound {worst:.4f}"


def _gradients(rng):
    err = 0.0
    for x in rng.uniform(-2, 2, 20):
        err = max(err, check_gradient(double_well(), np.array([x])), check_gradient(quadratic(1.0), np.array([x])))
    # the nonlinear regularizer's third derivative is O(dx^-5); a coarser probe
    # measures the difference quotient's own truncation error
    for reg, eps in (("linear", 1e-5), ("nonlinear", 1e-7)):
        mesh = BarMesh(regularizer=reg)
        for _ in range(5):
            x = sine_perturbation(mesh, rng.uniform(-0.1, 0.1))
            err = max(err, check_gradient(bar_model(mesh), x, eps))
    return err <= 1e-6, f"max relative error {err:.2e}"


def _first_step(rng):
    p = IncrementalProblem(quadratic(1.0), np.array([1.0]), np.array([0.0]), np.array([0.0]), 0.1, 0.1)
    r = solve_step(p, SolverSettings())
    err = abs(r.eta[0] - 1 / 1.01)
    return err <= 1e-10, f"|eta - 1/1.01| = {err:.1e}"


def _forcing(rng):
    f = Forcing.polynomial([0.0, 1.0], T=10.0)
    got = average_forcing(f, 3, 2, 0.1, 0.5)[0]
    want = (2 - 1) * 0.5 + 2 * 0.1 + 0.05 + 0.25
    return abs(got - want) <= 1e-12, f"average of t: {got:.15g} vs {want:.15g}"


def _reference(rng):
    ref = solve_limit_rk4(quadratic(1.0), 1.0, 0.0, Forcing.zero(), 1.0, 1e-3)
    err = abs(ref(1.0)[0] - math.cos(1.0))
    return err <= 1e-8, f"|x(1) - cos 1| = {err:.1e}"


def _rate(rng):
    pairs = []
    q = quadratic(1.0)
    for tau in (1e-1, 1e-2, 1e-3):
        traj = run(q, SchemeParams.from_times(tau, tau, 1.0), 1.0, 0.0)
        pairs.append((tau, linf_error(traj, exact_linear_reference(1.0, 1.0, 0.0, 1.0))))
    slope = rate_fit(pairs).slope
    return 0.9 <= slope <= 1.1, f"quadratic slope {slope:.4f}"


def _certificate(rng):
    q = quadratic(1.0)
    traj = run(q, SchemeParams.from_times(0.01, 0.01, 1.0), 1.0, 0.0)
    cert = stability_certificate(traj, q, 1.0, 0.0)
    return cert.ok, f"min margin {cert.margin.min():.3e}"


CHECKS = [
    ("gronwall.two_scale_bound", _gronwall),
    ("energy.check_gradient", _gradients),
    ("minimize.solve_step", _first_step),
    ("scheme.average_forcing", _forcing),
    ("reference.solve_limit_rk4", _reference),
    ("analysis.rate_fit", _rate),
    ("analysis.stability_certificate", _certificate),
]


def run_checks(seed: int = 0) -> list[tuple[str, bool, str]]:
    rows = []
    for name, fn in CHECKS:
        rng = np.random.default_rng(seed)
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crash is a failed check, not a crashed table
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        rows.append((name, bool(ok), detail))
    return rows

"""Acceptance criteria 1 to 10, one test each, with a summary line per criterion."""

from __future__ import annotations

import time
from functools import lru_cache

import numpy as np
import pytest

from minmove import gronwall as gw
from minmove.analysis import linf_error, rate_fit, stability_certificate, two_scale_error_study
from minmove.bar import BarMesh, bar_model, stretches
from minmove.cli import main
from minmove.config import build_initial, build_model, build_params, load_config
from minmove.energy import check_gradient, double_well, quadratic
from minmove.minimize import IncrementalProblem, SolverSettings, incremental_gradient, incremental_value
from minmove.reference import exact_linear_reference, solve_limit_rk4
from minmove.scheme import Forcing, SchemeParams, average_forcing, run

pytestmark = pytest.mark.acceptance

LEVELS = (1e-1, 1e-2, 1e-3)
X0, XSTAR, T_DW = 0.5, 1.6, 10.0


@lru_cache(maxsize=None)
def linear_runs():
    t0 = time.perf_counter()
    q = quadratic(1.0)
    ref = exact_linear_reference(1.0, 1.0, 0.0, 1.0)
    out = []
    for tau in LEVELS:
        tr = run(q, SchemeParams.from_times(tau, tau, 1.0), 1.0, 0.0)
        out.append((tau, linf_error(tr, ref), stability_certificate(tr, q, 1.0, 0.0)))
    first = run(q, SchemeParams(tau=0.1, N=1, M=1), 1.0, 0.0).states[0, 1, 0]
    return out, first, time.perf_counter() - t0


@lru_cache(maxsize=None)
def canonical_runs():
    t0 = time.perf_counter()
    dw = double_well()
    ref = solve_limit_rk4(dw, X0, XSTAR, Forcing.zero(), T_DW, min(LEVELS) / 10)
    out = []
    for tau in LEVELS:
        tr = run(dw, SchemeParams.from_times(tau, tau, T_DW), X0, XSTAR)
        out.append((tau, linf_error(tr, ref), stability_certificate(tr, dw, X0, XSTAR)))
    return out, time.perf_counter() - t0


def test_criterion_1_linear_rate(record_criterion):
    runs, first, secs = linear_runs()
    rep = rate_fit([(t, e) for t, e, _ in runs])
    ok = 0.9 <= rep.slope <= 1.1 and abs(first - 1 / 1.01) <= 1e-10
    detail = f"slope {rep.slope:.4f} in [0.9, 1.1], first step |{float(first)!r} - 1/1.01| = {abs(first - 1 / 1.01):.1e}"
    assert record_criterion(1, ok, detail, secs, 1.0)


def test_criterion_2_nonlinear_rate(record_criterion):
    runs, secs = canonical_runs()
    errs = [e for _, e, _ in runs]
    rep = rate_fit([(t, e) for t, e, _ in runs])
    monotone = all(b < a for a, b in zip(errs, errs[1:]))
    ok = monotone and rep.slope >= 0.7
    detail = (f"errors {', '.join(f'{e:.4g}' for e in errs)} (strictly decreasing: {monotone}), "
              f"slope {rep.slope:.4f} (need >= 0.7)")
    assert record_criterion(2, ok, detail, secs, 30.0)


def test_criterion_3_wrong_well(record_criterion):
    t0 = time.perf_counter()
    dw = double_well()
    tr = run(dw, SchemeParams.from_times(1.0, 1.0, T_DW), X0, XSTAR)
    ref = solve_limit_rk4(dw, X0, XSTAR, Forcing.zero(), T_DW, 1e-3)
    end_scheme = float(tr.final_state()[0])
    end_ref = float(ref(T_DW)[0])
    secs = time.perf_counter() - t0
    ok = abs(end_scheme + 1) <= 0.5 and abs(end_ref - 1) <= 0.5
    detail = f"scheme ends at {end_scheme:.5f} (need within 0.5 of -1), reference ends at {end_ref:.5f} (need within 0.5 of +1)"
    assert record_criterion(3, ok, detail, secs, 1.0)


def test_criterion_4_certificates(record_criterion):
    lin, _, s1 = linear_runs()
    can, s2 = canonical_runs()
    parts, ok = [], True
    for label, runs in (("quadratic", lin), ("double well", can)):
        for tau, _, cert in runs:
            m = float(cert.margin.min())
            ok &= m >= 0
            worst = int(np.argmin(cert.margin))
            parts.append(f"{label} tau={tau:g}: min margin {m:.3g} (window {worst})")
    assert record_criterion(4, ok, "; ".join(parts), s1 + s2)


def test_criterion_5_gronwall_suite(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(20261016)
    bad = 0
    for _ in range(1000):
        N, M = int(rng.integers(1, 9)), int(rng.integers(2, 7))
        c = rng.uniform(1e-6, 0.25) / N
        seq = gw.simulate_two_scale(rng, N, M, c, rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(0, 2, (M, N + 1)))
        wm = seq.window_maxima()
        bad += any(wm[l] > gw.two_scale_bound(seq, l) * (1 + gw.REL_SLACK) for l in range(1, M))
    for _ in range(1000):
        a0, c, n = rng.uniform(0, 5), rng.uniform(1e-3, 0.9), int(rng.integers(1, 60))
        a = gw.simulate_shifted(rng, a0, c, n)
        bad += any(a[k] > gw.gronwall_shifted_bound(a0, c, k) * (1 + gw.REL_SLACK) for k in range(n + 1))
    for _ in range(1000):
        a0, c, n = rng.uniform(0, 5), rng.uniform(1e-3, 2.0), int(rng.integers(1, 60))
        a = gw.simulate_classical(rng, a0, c, n)
        bad += any(a[k] > gw.gronwall_bound(a0, c, k) * (1 + gw.REL_SLACK) for k in range(n + 1))
    secs = time.perf_counter() - t0
    assert record_criterion(5, bad == 0, f"3 x 1000 simulated sequences, {bad} bound violations", secs, 5.0)


def _bar_state(rng, mesh):
    z = np.convolve(rng.normal(0, 0.1, mesh.m + 4), np.ones(4) / 4, mode="valid")[: mesh.m]
    return np.cumsum(np.exp(z - z.mean())) * mesh.dx


def _richardson(fun, x, eps):
    """Fourth-order difference quotient: central differences at eps and eps/2, extrapolated.

    Plain central differences on the bar carry an eps^2 truncation term that
    grows like dx^-5, which alone exceeds 1e-8 on a 32-cell mesh.  ``eps`` may
    be a per-coordinate array.
    """
    eps = np.broadcast_to(np.asarray(eps, dtype=float), x.shape)

    def central(scale):
        out = np.empty_like(x)
        for i, u in enumerate(np.eye(x.size)):
            e = eps[i] * scale
            out[i] = (fun(x + e * u) - fun(x - e * u)) / (2 * e)
        return out

    return (4 * central(0.5) - central(1.0)) / 3


def _smooth_steps(mesh, x, eps):
    """Cap each probe so no discrete curvature it touches changes sign.

    The nonlinear regularizer is only C^2 where a curvature vanishes, and a
    probe straddling such a point defeats any higher-order quotient.
    """
    L = mesh.curv_op.toarray() if hasattr(mesh.curv_op, "toarray") else np.asarray(mesh.curv_op)
    kappa = np.abs(L @ x)
    steps = np.full(x.size, eps)
    for i in range(x.size):
        hit = L[:, i] != 0
        if hit.any():
            steps[i] = min(eps, 0.5 * np.min(kappa[hit] / np.abs(L[hit, i])))
    return steps


def test_criterion_6_gradient_oracles(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    worst = {}
    dw, q = double_well(), quadratic(1.0)
    worst["double well"] = max(check_gradient(dw, np.array([x]), 1e-5) for x in rng.uniform(-2, 2, 100))
    worst["quadratic"] = max(check_gradient(q, np.array([x]), 1e-5) for x in rng.uniform(-10, 10, 100))
    inc = 0.0
    for reg, eps in (("linear", 1e-5), ("nonlinear", 1e-7)):
        mesh = BarMesh(m=32, a=2.0, regularizer=reg)
        model = bar_model(mesh)
        states = [_bar_state(rng, mesh) for _ in range(100)]
        worst[f"bar {reg}"] = max(check_gradient(model, s, eps) for s in states)
        for s in states[:10]:
            p = IncrementalProblem(model, s, rng.normal(0, 0.2, 32), rng.normal(0, 0.5, 32), 0.02, 0.04)
            eta = s + 1e-3 * rng.normal(size=32) * mesh.dx
            g = incremental_gradient(p, eta)
            fd = _richardson(lambda x: incremental_value(p, x), eta, _smooth_steps(mesh, eta, 1e-5))
            inc = max(inc, float(np.max(np.abs(fd - g) / (1 + np.abs(g)))))
    for x in rng.uniform(-1.5, 1.5, 20):
        p = IncrementalProblem(dw, np.array([x]), np.array([rng.normal()]), np.array([0.3]), 0.1, 0.2)
        y = np.array([x + 0.05])
        g = incremental_gradient(p, y)[0]
        fd = (incremental_value(p, y + 1e-6) - incremental_value(p, y - 1e-6)) / 2e-6
        inc = max(inc, abs(fd - g) / (1 + abs(g)))
    secs = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-6 and inc <= 1e-8
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f" (need <= 1e-6); incremental {inc:.1e} (need <= 1e-8)"
    assert record_criterion(6, ok, detail, secs, 5.0)


def test_criterion_7_forcing_contraction(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = -np.inf
    for _ in range(100):
        N, M, tau = int(rng.integers(1, 6)), int(rng.integers(1, 9)), rng.uniform(0.01, 0.3)
        p = SchemeParams(tau=tau, N=N, M=M)
        n = int(rng.integers(1, 6))
        breaks = np.concatenate([[0.0], np.sort(rng.uniform(0, p.T, n - 1)), [p.T]])
        f = Forcing.piecewise(breaks, [list(rng.normal(0, 2, int(rng.integers(1, 5)))) for _ in range(n)], T=p.T)
        disc = sum(tau * float(average_forcing(f, k, l, tau, p.h)[0]) ** 2 for l in range(M) for k in range(1, N + 1))
        worst = max(worst, disc - f.l2_norm_sq(p.T))
    secs = time.perf_counter() - t0
    assert record_criterion(7, worst <= 1e-10, f"max(sum - L2 norm^2) = {worst:.3g} over 100 forcings", secs, 2.0)


def test_criterion_8_two_scale_split(record_criterion):
    t0 = time.perf_counter()
    s = two_scale_error_study(double_well(), X0, XSTAR, Forcing.zero(), 0.1, [0.1, 0.05, 0.025, 0.0125], T_DW,
                              ref_step=2.5e-4, delayed_substep=2.5e-4)
    secs = time.perf_counter() - t0
    slope = s.delayed_rate.slope
    ok = slope >= 0.8 and s.plateau_ratio >= 0.5
    detail = (f"slope vs delayed {slope:.4f} (need >= 0.8; pair slopes "
              f"{', '.join(f'{x:.3f}' for x in s.delayed_rate.pair_slopes)}), "
              f"limit plateau ratio {s.plateau_ratio:.4f} (need >= 0.5)")
    assert record_criterion(8, ok, detail, secs, 10.0)


def test_criterion_9_bar_smoke(record_criterion):
    t0 = time.perf_counter()
    cfg = load_config("bar-small")
    model = build_model(cfg)
    eta0, eta_star = build_initial(cfg, model)
    params = build_params(cfg)
    tr = run(model, params, eta0, eta_star, audit=True)
    mesh = BarMesh(m=32, a=2.0)
    min_stretch = min(stretches(mesh, s).min() for s in tr.flat_states())
    v = tr.velocities()
    tol = SolverSettings().tolerance(params.tau)
    allowed = tol * np.sqrt(np.einsum("lkm,m,lkm->lk", v, model.weights, v)) * params.tau
    excess = float(np.max(tr.energy_defect[:, 1:] - allowed))
    cert = stability_certificate(tr, model, eta0, eta_star)
    secs = time.perf_counter() - t0
    ok = min_stretch > 0 and excess <= 0 and cert.ok and bool(tr.converged.all())
    detail = (f"min cell stretch {min_stretch:.4f}, max energy-inequality excess {excess:.3g}, "
              f"min stability margin {cert.margin.min():.4g}")
    assert record_criterion(9, ok, detail, secs, 60.0)


def test_criterion_10_determinism(record_criterion, tmp_path):
    t0 = time.perf_counter()
    cases = [("run", "bar-small", ["trajectory.csv"]),
             ("convergence", "quadratic", ["errors.csv"]),
             ("compare", "double-well-wrong-well", ["compare.csv"]),
             ("run", "double-well-canonical", ["trajectory.csv"])]
    same = []
    for cmd, preset, files in cases:
        outs = [tmp_path / f"{preset}-{cmd}-{i}" for i in range(2)]
        for o in outs:
            assert main([cmd, "--config", preset, "--out", str(o)]) == 0
        same += [(outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files]
    secs = time.perf_counter() - t0
    assert record_criterion(10, all(same), f"{sum(same)}/{len(same)} CSV files byte-identical across repeats", secs)

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from minmove.analysis import linf_error, rate_fit, stability_certificate, two_scale_error_study
from minmove.energy import double_well, quadratic
from minmove.reference import ExactReference, exact_linear_reference
from minmove.scheme import Forcing, SchemeParams, run

DW = double_well()


def test_certificate_vanishes_at_minimum():
    tr = run(DW, SchemeParams(tau=0.1, N=2, M=4), 1.0, 0.0)
    cert = stability_certificate(tr, DW, 1.0, 0.0)
    assert np.all(cert.lhs == 0) and np.all(cert.rhs == 0)
    assert np.all(cert.margin == 0) and cert.ok


@pytest.mark.parametrize("tau", [0.1, 0.01])
def test_certificate_quadratic(tau):
    q = quadratic(1.0)
    tr = run(q, SchemeParams.from_times(tau, tau, 1.0), 1.0, 0.0)
    cert = stability_certificate(tr, q, 1.0, 0.0)
    assert cert.C == 0.0
    ells = np.arange(tr.params.M)
    assert np.allclose(cert.rhs, 0.5 * np.exp(4 * tau * ells), rtol=1e-14)
    assert cert.ok and cert.hypothesis_ok


def test_certificate_includes_forcing_norm():
    q = quadratic(1.0)
    f = Forcing.constant(0.5, T=1.0)
    tr = run(q, SchemeParams.from_times(0.1, 0.1, 1.0), 1.0, 0.0, f)
    cert = stability_certificate(tr, q, 1.0, 0.0, f)
    assert cert.rhs[0] == pytest.approx(0.5 + 0.25)
    assert cert.ok


def test_certificate_constant_from_largest_energy():
    tr = run(DW, SchemeParams.from_times(0.05, 0.05, 2.0), 0.5, 1.6)
    cert = stability_certificate(tr, DW, 0.5, 1.6)
    energies = [DW.value(s) for s in tr.flat_states()]
    assert cert.K == pytest.approx(max(energies))
    assert cert.C == DW.noncvx_constant(cert.K)


def test_rate_exact_power_laws():
    taus = [0.1, 0.01, 0.001]
    r1 = rate_fit([(t, 3.0 * t) for t in taus])
    assert r1.slope == pytest.approx(1.0, abs=1e-12)
    assert r1.fit_residual <= 1e-12
    r2 = rate_fit([(t, 0.5 * t * t) for t in taus])
    assert r2.slope == pytest.approx(2.0, abs=1e-12)
    assert r2.pair_slopes == pytest.approx([2.0, 2.0])


def test_rate_on_three_level_table():
    pairs = [(1e-1, 0.258051), (1e-2, 0.0821305), (1e-3, 0.00995943)]
    rep = rate_fit(pairs)
    # least squares on these three points, frozen from an independent evaluation
    assert rep.slope == pytest.approx(0.7067355314391452, abs=1e-12)
    assert rep.pair_slopes[0] == pytest.approx(math.log10(0.258051 / 0.0821305), rel=1e-12)


def test_rate_floors_nonpositive_errors():
    rep = rate_fit([(0.1, 0.1), (0.01, 0.0), (0.001, 1e-4)])
    assert rep.floored
    assert math.isfinite(rep.slope)
    assert not rate_fit([(0.1, 0.1), (0.01, 0.01), (0.001, 1e-3)]).floored


@pytest.mark.parametrize("pairs", [
    [(0.1, 1.0), (0.01, 0.1)],
    [(0.1, 1.0), (0.1, 0.5), (0.01, 0.1)],
    [(0.01, 1.0), (0.1, 0.5), (0.001, 0.1)],
])
def test_rate_rejects_bad_grids(pairs):
    with pytest.raises(ValueError):
        rate_fit(pairs)


@given(st.floats(0.2, 3.0), st.floats(1e-3, 1e3))
def test_rate_recovers_any_power(p, c):
    taus = [0.2, 0.05, 0.0125, 0.003125]
    assert rate_fit([(t, c * t**p) for t in taus]).slope == pytest.approx(p, abs=1e-9)


def test_linf_error_exact_reference_is_zero_on_stationary_run():
    tr = run(DW, SchemeParams(tau=0.1, N=1, M=10), 1.0, 0.0)
    ref = ExactReference(lambda t: np.ones((np.size(t), 1)), T=1.0, method="constant")
    assert linf_error(tr, ref) == 0.0


def test_linf_error_interpolation_gap_bound():
    # states copied from the reference at the nodes: only the piecewise-constant gap remains
    omega, T, tau = 1.0, 2.0, 0.05
    ref = exact_linear_reference(omega, 1.0, 0.0, T)
    tr = run(quadratic(omega), SchemeParams.from_times(tau, tau, T), 1.0, 0.0)
    tr.states = np.asarray(ref(tr.times().ravel())).reshape(tr.states.shape)
    nodes = np.arange(tr.params.steps + 1) * tau
    x = np.asarray(ref(nodes)).ravel()
    gap = np.max(np.abs(np.diff(x)))
    err = linf_error(tr, ref)
    assert 0 < err <= gap + 1e-14


def test_linf_error_stride_and_horizon():
    q = quadratic(1.0)
    tr = run(q, SchemeParams.from_times(0.01, 0.01, 1.0), 1.0, 0.0)
    ref = exact_linear_reference(1.0, 1.0, 0.0, 1.0)
    assert linf_error(tr, ref, sample_stride=7) <= linf_error(tr, ref)
    with pytest.raises(ValueError):
        linf_error(tr, exact_linear_reference(1.0, 1.0, 0.0, 2.0))


def test_linear_rate_slope():
    errs = []
    for tau in (1e-1, 1e-2, 1e-3):
        tr = run(quadratic(1.0), SchemeParams.from_times(tau, tau, 1.0), 1.0, 0.0)
        errs.append((tau, linf_error(tr, exact_linear_reference(1.0, 1.0, 0.0, 1.0))))
    assert 0.9 <= rate_fit(errs).slope <= 1.1


def test_two_scale_study_short_horizon():
    s = two_scale_error_study(DW, 1.0, 0.1, Forcing.zero(), 0.1, [0.1, 0.05, 0.025, 0.0125], 3.0,
                              ref_step=2.5e-4, delayed_substep=2.5e-4)
    assert s.taus == [0.1, 0.05, 0.025, 0.0125]
    assert all(b < a for a, b in zip(s.vs_delayed, s.vs_delayed[1:]))
    # frozen from this configuration: slope 0.8996, plateau ratio 0.687
    assert s.delayed_rate.slope == pytest.approx(0.8996, abs=5e-3)
    assert s.plateau_ratio == pytest.approx(0.687, abs=5e-3)
    assert s.vs_limit[-1] > 5 * s.vs_delayed[-1]


def test_two_scale_study_rejects_non_divisor():
    with pytest.raises(ValueError):
        two_scale_error_study(DW, 1.0, 0.1, Forcing.zero(), 0.1, [0.1, 0.03, 0.01], 1.0,
                              ref_step=1e-3, delayed_substep=1e-3)

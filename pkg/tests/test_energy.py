from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from minmove.energy import (
    GradientProbeError,
    SublevelBound,
    check_gradient,
    double_well,
    noncvx_constant_double_well,
    quadratic,
)
from minmove.bar import BarMesh, bar_model

DW = double_well()


def test_double_well_values():
    assert DW.value(np.array([1.0])) == 0.0
    assert DW.value(np.array([-1.0])) == 0.0
    assert DW.value(np.array([0.0])) == 1.0
    assert DW.gradient(np.array([0.0]))[0] == 0.0
    assert DW.gradient(np.array([2.0]))[0] == 24.0
    assert DW.e_min == 0.0


@given(st.floats(-10, 10))
def test_double_well_symmetry(x):
    assert DW.value(np.array([-x])) == DW.value(np.array([x]))
    assert DW.gradient(np.array([-x]))[0] == -DW.gradient(np.array([x]))[0]


def test_quadratic_values():
    q = quadratic(1.0)
    assert q.value(np.array([2.0])) == 2.0
    assert q.gradient(np.array([2.0]))[0] == 2.0
    assert quadratic(4.0).gradient(np.array([0.5]))[0] == 2.0
    assert q.noncvx_constant(123.0) == 0.0
    with pytest.raises(ValueError):
        quadratic(0.0)


def test_double_well_constant_values():
    assert noncvx_constant_double_well(0.0).C == 4.0
    assert noncvx_constant_double_well(1.0).C == 10.0
    with pytest.raises(ValueError):
        noncvx_constant_double_well(-0.1)


def test_sublevel_bound_rejects_negative():
    with pytest.raises(ValueError):
        SublevelBound(1.0, -1.0)


@given(st.floats(0, 50), st.floats(0, 50))
def test_double_well_constant_monotone(k1, k2):
    lo, hi = sorted((k1, k2))
    assert noncvx_constant_double_well(lo).C <= noncvx_constant_double_well(hi).C


def _sublevel_points(rng, K, n):
    # sample the interval |x| <= sqrt(1 + sqrt K) and keep points with E <= K
    r = math.sqrt(1 + math.sqrt(K))
    pts = rng.uniform(-r, r, 4 * n)
    pts = pts[(pts**2 - 1) ** 2 <= K]
    if K > 0:
        pts = np.concatenate([pts, [r, -r, 1.0, -1.0]])
    return pts[: n + 4]


@pytest.mark.parametrize("K", [0.01, 0.25, 1.0, 4.0, 25.0])
def test_double_well_noncvx_estimate_pairs(K):
    rng = np.random.default_rng(1)
    C = DW.noncvx_constant(K)
    x = _sublevel_points(rng, K, 10_000)
    y = rng.permutation(x)
    e = (x**2 - 1) ** 2
    ey = (y**2 - 1) ** 2
    lhs = 4 * y * (y**2 - 1) * (y - x)
    assert np.all(lhs >= ey - e - C * (y - x) ** 2 - 1e-12 * (1 + np.abs(e)))


@pytest.mark.parametrize("omega", [0.5, 1.0, 4.0])
def test_quadratic_noncvx_estimate_pairs(omega):
    rng = np.random.default_rng(2)
    x, y = rng.uniform(-5, 5, (2, 10_000))
    lhs = omega * y * (y - x)
    assert np.all(lhs >= omega * y**2 / 2 - omega * x**2 / 2 - 1e-12)


def test_check_gradient_double_well():
    assert check_gradient(DW, np.array([0.3]), 1e-5) <= 1e-8


def test_check_gradient_quadratic():
    rng = np.random.default_rng(3)
    for x in rng.uniform(-10, 10, 20):
        assert check_gradient(quadratic(1.0), np.array([x]), 1e-5) <= 1e-10


def test_check_gradient_detects_wrong_gradient():
    from dataclasses import replace

    bad = replace(DW, gradient=lambda x: np.array([4.0 * x[0] ** 3]))
    assert check_gradient(bad, np.array([0.7])) > 1e-2


def test_check_gradient_probe_leaves_domain():
    mesh = BarMesh(m=4)
    eta = mesh.nodes.copy()
    eta[0] = 1e-7  # first cell stretch ~ 4e-7: a 1e-5 probe makes it negative
    with pytest.raises(GradientProbeError):
        check_gradient(bar_model(mesh), eta, 1e-5)


def test_inner_product_uses_weights():
    m = bar_model(BarMesh(m=8))
    x = np.ones(8)
    assert m.norm_sq(x) == pytest.approx(1.0)
    assert m.inner(x, 2 * x) == pytest.approx(2.0)

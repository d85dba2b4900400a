"""Energy models over R^m.

An :class:`EnergyModel` bundles the energy, its gradient (and Hessian when
available), the admissible set, the non-convexity constant ``C(K)`` and the
weights of the H inner product used for kinetic terms.  Outside the
admissible set ``value`` returns ``inf``; the inner minimizer treats that as
a barrier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Array = np.ndarray


@dataclass(frozen=True)
class SublevelBound:
    """Non-convexity constant ``C`` valid on the sublevel ``{E <= K}``."""

    K: float
    C: float

    def __post_init__(self) -> None:
        if self.C < 0:
            raise ValueError("non-convexity constant must be non-negative")


@dataclass(frozen=True)
class EnergyModel:
    """Energy functional on R^m with everything the scheme needs.

    ``noncvx_constant(K)`` must satisfy, for admissible ``x, y`` with
    ``E(x), E(y) <= K``::

        <DE(y), y - x> >= E(y) - E(x) - C(K) * ||y - x||_H^2

    where ``||.||_H`` is the weighted norm given by ``weights``.
    ``regularizer`` optionally holds ``(L, w)`` so that ``sum(w * (L u)**2)``
    is the squared regularizer seminorm; it drives the dissipation term.
    """

    name: str
    dim: int
    value: Callable[[Array], float]
    gradient: Callable[[Array], Array]
    is_admissible: Callable[[Array], bool]
    noncvx_constant: Callable[[float], float]
    weights: Array
    e_min: float = 0.0
    hessian: Optional[Callable[[Array], Array]] = None
    regularizer: Optional[tuple[Array, Array]] = None
    params: dict = field(default_factory=dict)
    localize: Optional[Callable[[Array], "LocalEnergy"]] = None

    def inner(self, x: Array, y: Array) -> float:
        return float(np.dot(self.weights * x, y))

    def norm_sq(self, x: Array) -> float:
        return float(np.dot(self.weights * x, x))

    def sublevel(self, K: float) -> SublevelBound:
        return SublevelBound(K, self.noncvx_constant(K))


class LocalEnergy:
    """``E(base + delta)`` and its derivatives as functions of ``delta``.

    Models with large finite-difference stencils provide a ``localize``
    hook returning one of these so that the inner solver can cache
    quantities at the base point; the default just shifts the argument.
    """

    def __init__(self, model: EnergyModel, base: Array):
        self.model = model
        self.base = np.asarray(base, dtype=float)

    def value(self, delta: Array) -> float:
        return self.model.value(self.base + delta)

    def gradient(self, delta: Array) -> Array:
        return np.asarray(self.model.gradient(self.base + delta), dtype=float)

    def hessian(self, delta: Array) -> Optional[Array]:
        if self.model.hessian is None:
            return None
        return np.asarray(self.model.hessian(self.base + delta), dtype=float)


def local_energy(model: EnergyModel, base: Array) -> LocalEnergy:
    return model.localize(base) if model.localize is not None else LocalEnergy(model, base)


def _scalar(x) -> float:
    return float(np.asarray(x, dtype=float).reshape(-1)[0])


def double_well() -> EnergyModel:
    """``E(x) = (x^2 - 1)^2`` with minima at -1 and 1."""

    def value(x):
        z = _scalar(x)
        return (z * z - 1.0) ** 2

    def gradient(x):
        z = _scalar(x)
        return np.array([4.0 * z * (z * z - 1.0)])

    def hessian(x):
        z = _scalar(x)
        return np.array([[12.0 * z * z - 4.0]])

    return EnergyModel(
        name="double_well",
        dim=1,
        value=value,
        gradient=gradient,
        hessian=hessian,
        is_admissible=lambda x: bool(np.all(np.isfinite(x))),
        noncvx_constant=lambda K: noncvx_constant_double_well(K).C,
        weights=np.ones(1),
        e_min=0.0,
    )


def noncvx_constant_double_well(K: float) -> SublevelBound:
    """Half the maximum of ``|E''|`` over the convex hull of ``{E <= K}``.

    The hull is ``|x| <= sqrt(1 + sqrt(K))``; the segment between two
    sublevel points stays inside it, which is what the Taylor argument needs.
    """
    if K < 0:
        raise ValueError("sublevel K must be non-negative for the double well")
    x2 = 1.0 + math.sqrt(K)
    return SublevelBound(K, 0.5 * max(4.0, 12.0 * x2 - 4.0))


def quadratic(omega: float) -> EnergyModel:
    """``E(x) = omega x^2 / 2``; convex, so ``C(K) = 0``."""
    if omega <= 0:
        raise ValueError("omega must be positive")

    def value(x):
        z = _scalar(x)
        return 0.5 * omega * z * z

    return EnergyModel(
        name="quadratic",
        dim=1,
        value=value,
        gradient=lambda x: np.array([omega * _scalar(x)]),
        hessian=lambda x: np.array([[omega]]),
        is_admissible=lambda x: bool(np.all(np.isfinite(x))),
        noncvx_constant=lambda K: 0.0,
        weights=np.ones(1),
        e_min=0.0,
        params={"omega": omega},
    )


class GradientProbeError(ValueError):
    """A finite-difference probe left the finite-energy domain."""


def check_gradient(model: EnergyModel, x: Array, eps: float = 1e-5) -> float:
    """Max relative error between ``model.gradient`` and central differences.

    Returns ``max_i |fd_i - g_i| / (1 + |g_i|)``.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(model.gradient(x), dtype=float)
    err = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        fp, fm = model.value(x + e), model.value(x - e)
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise GradientProbeError(f"probe around coordinate {i} left the domain")
        fd = (fp - fm) / (2.0 * eps)
        err = max(err, abs(fd - g[i]) / (1.0 + abs(g[i])))
    return err

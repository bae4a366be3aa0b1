"""Smoothing kernels, their moments and the jackknife kernel.

Moments follow the half-line convention used throughout the package:
``mu_j = 2 * int_0^1 u^j K(u) du`` for even ``j`` and ``int_0^1 u^j K(u) du``
for odd ``j``.  The odd ones are therefore one-sided and non-negative.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import QuadratureError

QUAD_TOL = 1e-12


def _epanechnikov(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def _triweight(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 35.0 / 32.0 * (1.0 - u * u) ** 3, 0.0)


def _uniform(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 0.5, 0.0)


def integrate_on(func: Callable[[float], float], a: float, b: float, points=None) -> float:
    """Adaptive Gauss-Kronrod integral of ``func`` over ``[a, b]``.

    Raises QuadratureError if the error estimate exceeds ``QUAD_TOL``.
    """
    kw = {}
    if points:
        inner = [p for p in points if a < p < b]
        if inner:
            kw["points"] = inner
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(func, a, b, epsabs=1e-13, epsrel=1e-13, limit=400, **kw)
    if not math.isfinite(val) or err > QUAD_TOL:
        raise QuadratureError(f"quadrature on [{a}, {b}] failed (value={val}, err={err:.3g})")
    return float(val)


@dataclass(frozen=True)
class KernelConstants:
    mu: dict
    phi: float
    phi_j: dict
    boundary_B: float
    boundary_V: float


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A kernel weight function with bounded support.

    ``evaluate`` must accept numpy arrays.  ``in_class`` is False for the
    jackknife kernel, which is symmetric but takes negative values.
    """

    id: str
    evaluate: Callable = field(repr=False)
    support_radius: float = 1.0
    in_class: bool = True

    def __call__(self, u):
        return self.evaluate(u)

    @property
    def _breaks(self):
        r = self.support_radius
        pts = [0.0, 1.0, -1.0] if r > 1.0 else [0.0]
        return pts

    def _integral(self, g, lo, hi):
        return integrate_on(g, lo, hi, points=self._breaks)

    def _scalar(self, u):
        return float(self.evaluate(np.array([u]))[0])

    @cached_property
    def constants(self) -> KernelConstants:
        mu = {j: kernel_moment(self, j) for j in range(5)}
        phi = kernel_phi(self)
        phi_j = {
            j: self._integral(lambda u, j=j: u**j * self._scalar(u) ** 2, 0.0, self.support_radius)
            for j in range(3)
        }
        try:
            B, V = boundary_constants(self, mu)
        except ZeroDivisionError:
            B = V = float("nan")
        return KernelConstants(mu=mu, phi=phi, phi_j=phi_j, boundary_B=B, boundary_V=V)

    @property
    def mu2(self) -> float:
        return self.constants.mu[2]

    @property
    def phi(self) -> float:
        return self.constants.phi


EPANECHNIKOV = KernelSpec("epanechnikov", _epanechnikov)
TRIWEIGHT = KernelSpec("triweight", _triweight)
UNIFORM = KernelSpec("uniform", _uniform)

_REGISTRY = {k.id: k for k in (EPANECHNIKOV, TRIWEIGHT, UNIFORM)}


def get_kernel(name: str) -> KernelSpec:
    try:
        return _REGISTRY[name.lower()]
    except KeyError:
        raise ValueError(f"unknown kernel {name!r}; choose from {sorted(_REGISTRY)}") from None


def custom_kernel(func: Callable, name: str = "custom", support_radius: float = 1.0) -> KernelSpec:
    return KernelSpec(name, func, support_radius)


def kernel_moment(k: KernelSpec, j: int) -> float:
    """Moment ``mu_j`` (two-sided for even j, one-sided for odd j)."""
    if j < 0 or j > 4:
        raise ValueError("moment order must be in 0..4")
    half = k._integral(lambda u: u**j * k._scalar(u), 0.0, k.support_radius)
    return 2.0 * half if j % 2 == 0 else half


def kernel_phi(k: KernelSpec) -> float:
    r = k.support_radius
    return k._integral(lambda u: k._scalar(u) ** 2, -r, r)


@lru_cache(maxsize=None)
def jackknife_kernel(k: KernelSpec) -> KernelSpec:
    """``K*(u) = 2 K(u) - K(u / sqrt 2) / sqrt 2``, supported on ``[-sqrt2, sqrt2]``."""
    s = math.sqrt(2.0)
    base = k.evaluate

    def evaluate(u):
        u = np.asarray(u, dtype=float)
        return 2.0 * base(u) - base(u / s) / s

    return KernelSpec(f"jackknife({k.id})", evaluate, k.support_radius * s, in_class=False)


def boundary_constants(k: KernelSpec, mu: dict | None = None) -> tuple[float, float]:
    """Left-boundary bias and variance constants ``(B_K, V_K)`` of the local linear fit."""
    if mu is None:
        mu = k.constants.mu
    m1, m2, m3 = mu[1], mu[2], mu[3]
    den = m2 - 4.0 * m1 * m1
    if abs(den) < 1e-14:
        raise ZeroDivisionError("degenerate boundary denominator mu_2 - 4 mu_1^2")
    B = (m2 * m2 - 4.0 * m1 * m3) / den
    num = k._integral(lambda u: (m2 - 2.0 * m1 * u) ** 2 * k._scalar(u) ** 2, 0.0, 1.0)
    V = 4.0 * num / den**2
    return B, V
